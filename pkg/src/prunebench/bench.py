"""Latency benchmarking with warmup and Student-t 95% confidence intervals.

Each sample is the wall time of an uninstrumented forward pass over a fixed
seeded input, divided by the frame count.  The workload is deterministic;
only the timing varies.  Benchmarking is single threaded and assumes an
otherwise idle machine (no CPU pinning is attempted).
"""

from __future__ import annotations

import json
import math
import platform
import time
from dataclasses import dataclass, field

import numpy as np

from .inference import forward_sequence
from .model import ModelWeights, model_memory_mb
from .pruning import prune_unstructured
from .tensorops import DTYPE

# Two-sided 95% Student-t quantiles, df 1..30; the normal quantile is used
# beyond that (error < 0.1% at df > 30).
T_QUANTILE_95 = {
    1: 12.7062047364,
    2: 4.3026527297,
    3: 3.1824463053,
    4: 2.7764451052,
    5: 2.5705818356,
    6: 2.4469118511,
    7: 2.3646242516,
    8: 2.3060041352,
    9: 2.2621571629,
    10: 2.2281388520,
    11: 2.2009851601,
    12: 2.1788128297,
    13: 2.1603686565,
    14: 2.1447866879,
    15: 2.1314495456,
    16: 2.1199052992,
    17: 2.1098155778,
    18: 2.1009220402,
    19: 2.0930240544,
    20: 2.0859634473,
    21: 2.0796138447,
    22: 2.0738730679,
    23: 2.0686576104,
    24: 2.0638985616,
    25: 2.0595385528,
    26: 2.0555294386,
    27: 2.0518305165,
    28: 2.0484071418,
    29: 2.0452296421,
    30: 2.0422724563,
}
T_QUANTILE_95_INF = 1.9599639845

DEFAULT_WARMUP = 10
DEFAULT_SAMPLES = 100
DEFAULT_FRAMES = 100


def t_quantile_95(df: int) -> float:
    if df < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {df}")
    return T_QUANTILE_95.get(df, T_QUANTILE_95_INF)


def mean_ci95(xs) -> tuple[float, float]:
    """Sample mean and Student-t 95% half-width (unbiased std, n >= 2)."""
    vals = [float(x) for x in xs]
    n = len(vals)
    if n < 2:
        raise ValueError(f"need at least 2 samples for a CI, got {n}")
    mean = sum(vals) / n
    var = sum((v - mean) ** 2 for v in vals) / (n - 1)
    half = t_quantile_95(n - 1) * math.sqrt(var) / math.sqrt(n)
    return mean, half


@dataclass
class BenchmarkReport:
    config_name: str
    mean_ms_per_frame: float
    ci95_half_width_ms: float
    samples: int
    frames_per_sample: int
    warmup_samples: int
    memory_mb: float
    timestamp: str
    host: str
    raw_ms_per_frame: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "config_name": self.config_name,
            "mean_ms_per_frame": self.mean_ms_per_frame,
            "ci95_half_width_ms": self.ci95_half_width_ms,
            "samples": self.samples,
            "frames_per_sample": self.frames_per_sample,
            "warmup_samples": self.warmup_samples,
            "memory_mb": self.memory_mb,
            "timestamp": self.timestamp,
            "host": self.host,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkReport":
        required = ("config_name", "mean_ms_per_frame", "ci95_half_width_ms",
                    "samples", "frames_per_sample", "warmup_samples",
                    "memory_mb", "timestamp", "host")
        missing = [k for k in required if k not in d]
        if missing:
            raise ValueError(f"benchmark report missing fields: {missing}")
        return cls(**{k: d[k] for k in required})


def _host_descriptor() -> str:
    return f"{platform.platform()} / python {platform.python_version()}"


def benchmark(w: ModelWeights, frames_per_sample: int = DEFAULT_FRAMES,
              samples: int = DEFAULT_SAMPLES, warmup: int = DEFAULT_WARMUP,
              seed: int = 42, config_name: str | None = None) -> BenchmarkReport:
    """Time forward passes over one fixed seeded input; report mean and CI."""
    if samples < 2:
        raise ValueError(f"samples must be >= 2, got {samples}")
    if frames_per_sample < 1:
        raise ValueError(f"frames_per_sample must be >= 1, got {frames_per_sample}")
    if warmup < 0:
        raise ValueError(f"warmup must be >= 0, got {warmup}")
    rng = np.random.default_rng(seed)
    frames = rng.random((frames_per_sample, w.spec.freq_bins)).astype(DTYPE)
    for _ in range(warmup):
        forward_sequence(w, frames)
    raw = []
    for _ in range(samples):
        t0 = time.perf_counter()
        forward_sequence(w, frames)
        elapsed = time.perf_counter() - t0
        raw.append(elapsed * 1000.0 / frames_per_sample)
    mean, half = mean_ci95(raw)
    return BenchmarkReport(
        config_name=config_name or str(w.spec.params),
        mean_ms_per_frame=mean,
        ci95_half_width_ms=half,
        samples=samples,
        frames_per_sample=frames_per_sample,
        warmup_samples=warmup,
        memory_mb=model_memory_mb(w),
        timestamp=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        host=_host_descriptor(),
        raw_ms_per_frame=raw,
    )


def compare_sparse_dense(base: ModelWeights, fracs,
                         frames_per_sample: int = DEFAULT_FRAMES,
                         samples: int = DEFAULT_SAMPLES,
                         warmup: int = DEFAULT_WARMUP,
                         seed: int = 42) -> list[BenchmarkReport]:
    """Benchmark unstructured-pruned variants of one model, dense engine.

    A frac=0 row (the unmodified baseline) is always included, every row
    uses identical benchmark parameters, and samples are taken round-robin
    across the variants so slow clock drift lands on all rows equally
    instead of masquerading as a sparsity effect.
    """
    fracs = [float(f) for f in fracs]
    for f in fracs:
        if not 0.0 <= f < 1.0:
            raise ValueError(f"sparsity fraction must be in [0, 1), got {f}")
    if 0.0 not in fracs:
        fracs = [0.0] + fracs
    if samples < 2:
        raise ValueError(f"samples must be >= 2, got {samples}")
    if frames_per_sample < 1:
        raise ValueError(f"frames_per_sample must be >= 1, got {frames_per_sample}")
    variants = [prune_unstructured(base, f) for f in fracs]
    rng = np.random.default_rng(seed)
    frames = rng.random((frames_per_sample, base.spec.freq_bins)).astype(DTYPE)
    for w in variants:
        for _ in range(warmup):
            forward_sequence(w, frames)
    raw: list[list[float]] = [[] for _ in variants]
    for _ in range(samples):
        for i, w in enumerate(variants):
            t0 = time.perf_counter()
            forward_sequence(w, frames)
            raw[i].append((time.perf_counter() - t0) * 1000.0 / frames_per_sample)
    stamp = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    host = _host_descriptor()
    reports = []
    for f, w, xs in zip(fracs, variants, raw):
        mean, half = mean_ci95(xs)
        reports.append(BenchmarkReport(
            config_name=f"sparse_{f:g}", mean_ms_per_frame=mean,
            ci95_half_width_ms=half, samples=samples,
            frames_per_sample=frames_per_sample, warmup_samples=warmup,
            memory_mb=model_memory_mb(w), timestamp=stamp, host=host,
            raw_ms_per_frame=xs))
    return reports


@dataclass
class SpeedupRow:
    report: BenchmarkReport
    speedup: float
    memory_reduction: float


def speedup_table(reports, baseline_name: str) -> list[SpeedupRow]:
    """Annotate reports with speedup and memory reduction vs a baseline row."""
    reports = list(reports)
    base = next((r for r in reports if r.config_name == baseline_name), None)
    if base is None:
        names = ", ".join(r.config_name for r in reports)
        raise ValueError(f"baseline {baseline_name!r} not among reports ({names})")
    return [SpeedupRow(r, base.mean_ms_per_frame / r.mean_ms_per_frame,
                       base.memory_mb / r.memory_mb) for r in reports]


def reports_csv(reports, baseline_name: str | None = None) -> str:
    """Render reports as `config,mean_ms,ci95_ms,memory_mb,speedup` CSV text.

    Speedup is computed against baseline_name, or against the first report
    when no baseline is named.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to render")
    rows = speedup_table(reports, baseline_name or reports[0].config_name)
    lines = ["config,mean_ms,ci95_ms,memory_mb,speedup"]
    for row in rows:
        r = row.report
        lines.append(f"{r.config_name},{r.mean_ms_per_frame:.6g},"
                     f"{r.ci95_half_width_ms:.6g},{r.memory_mb:.6g},"
                     f"{row.speedup:.6g}")
    return "\n".join(lines) + "\n"


def intervals_overlap(a: BenchmarkReport, b: BenchmarkReport) -> bool:
    """True when the two 95% CIs share at least one point."""
    return (abs(a.mean_ms_per_frame - b.mean_ms_per_frame)
            <= a.ci95_half_width_ms + b.ci95_half_width_ms)


def profile_fractions(times: dict) -> dict:
    """Normalize per-category seconds into fractions summing to 1."""
    total = sum(times.values())
    if total <= 0:
        raise ValueError("no measured time to attribute")
    return {k: v / total for k, v in times.items()}
