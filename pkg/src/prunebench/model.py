"""Architecture definition, weight container, coupling groups, serialization.

The network is a small convolutional-recurrent masking denoiser: four strided
causal conv encoder layers, a single GRU bottleneck, four transposed-conv
decoder layers with additive skip connections, and a sigmoid mask applied to
the input frame.  The channel widths are parameterized by a length-4 vector
``[c1, c2, c3, c4]`` that must be monotone non-decreasing.

Model directory format (version 1):
  manifest.json  version, network_param, freq_bins, ordered tensor table
                 with name/shape/dtype/offset_bytes/len_elems
  weights.bin    concatenated little-endian float32, row-major, manifest
                 order, no padding

The GRU gate stacking order is fixed as (reset, update, candidate) and is part
of the format contract.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensorops import DTYPE

MANIFEST_VERSION = 1

KERNEL_TIME = 2
KERNEL_FREQ = 3
STRIDE_TIME = 1
STRIDE_FREQ = 2
FREQ_PAD = 1  # zero padding on each side so stride-2 halving is exact
ENCODER_DOWNSAMPLE = 16  # four stride-2 stages
LEAKY_SLOPE = 0.2
GATE_ORDER = ("reset", "update", "candidate")


class ModelFormatError(ValueError):
    """Raised when a model directory cannot be loaded."""


@dataclass(frozen=True)
class NetworkParam:
    """Channel widths [c1, c2, c3, c4]; must satisfy c1 <= c2 <= c3 <= c4."""

    c1: int
    c2: int
    c3: int
    c4: int

    def __post_init__(self):
        cs = self.as_tuple()
        if any(int(c) != c or c < 1 for c in cs):
            raise ValueError(f"channel counts must be positive integers, got {cs}")
        if not (self.c1 <= self.c2 <= self.c3 <= self.c4):
            raise ValueError(f"channel counts must be monotone non-decreasing, got {cs}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.c1, self.c2, self.c3, self.c4)

    def channel(self, i: int) -> int:
        """c_i for i in 1..4; c_0 is defined as 1 (the mono input/output)."""
        if i == 0:
            return 1
        return self.as_tuple()[i - 1]

    @classmethod
    def from_sequence(cls, seq) -> "NetworkParam":
        vals = [int(v) for v in seq]
        if len(vals) != 4:
            raise ValueError(f"expected 4 channel counts, got {len(vals)}")
        return cls(*vals)

    def __str__(self) -> str:
        return ",".join(str(c) for c in self.as_tuple())


@dataclass(frozen=True)
class ModelSpec:
    """Full architecture description: channel vector plus frequency geometry."""

    params: NetworkParam
    freq_bins: int = 16

    def __post_init__(self):
        if self.freq_bins < ENCODER_DOWNSAMPLE or self.freq_bins % ENCODER_DOWNSAMPLE:
            raise ValueError(
                f"freq_bins must be a positive multiple of {ENCODER_DOWNSAMPLE}, "
                f"got {self.freq_bins}"
            )

    @property
    def bins_after_encoder(self) -> int:
        return self.freq_bins // ENCODER_DOWNSAMPLE

    @property
    def gru_size(self) -> int:
        """GRU input size == hidden size == c4 * bins_after_encoder."""
        return self.params.c4 * self.bins_after_encoder

    @property
    def kernel(self) -> tuple[int, int]:
        return (KERNEL_TIME, KERNEL_FREQ)

    @property
    def stride(self) -> tuple[int, int]:
        return (STRIDE_TIME, STRIDE_FREQ)

    def encoder_bins(self, layer: int) -> int:
        """Frequency bins at the output of encoder layer 1..4 (0 = input)."""
        return self.freq_bins // (2 ** layer)


# Canonical tensor order; also the serialization order.
TENSOR_ORDER = (
    "enc1_w", "enc1_b", "enc2_w", "enc2_b", "enc3_w", "enc3_b", "enc4_w", "enc4_b",
    "gru_ih", "gru_hh", "gru_bias_ih", "gru_bias_hh",
    "dec1_w", "dec1_b", "dec2_w", "dec2_b", "dec3_w", "dec3_b", "dec4_w", "dec4_b",
)


def tensor_shapes(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    """Expected shape of every named tensor for ``spec``.

    Conv kernels are (c_out, c_in, kt, kf); transposed-conv kernels are
    (c_in, c_out, kt, kf).
    """
    p = spec.params
    h = spec.gru_size
    shapes: dict[str, tuple[int, ...]] = {}
    for i in (1, 2, 3, 4):
        shapes[f"enc{i}_w"] = (p.channel(i), p.channel(i - 1), KERNEL_TIME, KERNEL_FREQ)
        shapes[f"enc{i}_b"] = (p.channel(i),)
    shapes["gru_ih"] = (3 * h, h)
    shapes["gru_hh"] = (3 * h, h)
    shapes["gru_bias_ih"] = (3 * h,)
    shapes["gru_bias_hh"] = (3 * h,)
    for j in (1, 2, 3, 4):
        c_in, c_out = p.channel(5 - j), p.channel(4 - j)
        shapes[f"dec{j}_w"] = (c_in, c_out, KERNEL_TIME, KERNEL_FREQ)
        shapes[f"dec{j}_b"] = (c_out,)
    return shapes


def _fan_in(name: str, spec: ModelSpec) -> int:
    p = spec.params
    if name.startswith("enc"):
        i = int(name[3])
        return p.channel(i - 1) * KERNEL_TIME * KERNEL_FREQ
    if name.startswith("dec"):
        j = int(name[3])
        return p.channel(5 - j) * KERNEL_TIME * KERNEL_FREQ
    return spec.gru_size


@dataclass
class ModelWeights:
    """Named tensor collection for one model; immutable by convention."""

    spec: ModelSpec
    tensors: dict[str, np.ndarray]
    _plan: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        expected = tensor_shapes(self.spec)
        got = set(self.tensors)
        if got != set(expected):
            missing = sorted(set(expected) - got)
            extra = sorted(got - set(expected))
            raise ValueError(f"tensor names mismatch: missing={missing} extra={extra}")
        for name in TENSOR_ORDER:
            t = self.tensors[name]
            if tuple(t.shape) != expected[name]:
                raise ValueError(
                    f"tensor {name}: shape {tuple(t.shape)}, expected {expected[name]}"
                )
            if t.dtype != DTYPE:
                raise ValueError(f"tensor {name}: dtype {t.dtype}, expected float32")
            if not t.flags["C_CONTIGUOUS"]:
                self.tensors[name] = np.ascontiguousarray(t)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    @property
    def param_count(self) -> int:
        return sum(int(t.size) for t in self.tensors.values())

    def copy(self) -> "ModelWeights":
        return ModelWeights(self.spec, {k: v.copy() for k, v in self.tensors.items()})


def build_model(spec: ModelSpec, seed: int) -> ModelWeights:
    """Initialize weights uniformly in +-sqrt(1/fan_in), deterministically.

    Tensors are drawn in canonical order from one PCG64 stream, so identical
    (spec, seed) pairs give bit-identical weights.
    """
    rng = np.random.default_rng(seed)
    shapes = tensor_shapes(spec)
    tensors = {}
    for name in TENSOR_ORDER:
        bound = 1.0 / math.sqrt(_fan_in(name, spec))
        tensors[name] = rng.uniform(-bound, bound, shapes[name]).astype(DTYPE)
    return ModelWeights(spec, tensors)


@dataclass(frozen=True)
class GroupEntry:
    """One axis that a coupling group resizes.

    ``group_multiplier`` g means channel j owns coordinates j*g .. j*g+g-1 on
    this axis.  ``gate_stacked`` marks GRU axes of length 3*h where channel j
    additionally owns the mirrored coordinates in each of the three gate
    blocks.
    """

    tensor: str
    axis: int
    group_multiplier: int = 1
    gate_stacked: bool = False

    def owned_coords(self, channel: int, axis_len: int) -> list[int]:
        g = self.group_multiplier
        if not self.gate_stacked:
            return [channel * g + b for b in range(g)]
        h = axis_len // 3
        return [q * h + channel * g + b for q in range(3) for b in range(g)]

    def expand_indices(self, channels, axis_len: int) -> list[int]:
        """Ascending axis coordinates kept when ``channels`` survive."""
        g = self.group_multiplier
        if not self.gate_stacked:
            return [j * g + b for j in channels for b in range(g)]
        h = axis_len // 3
        return [q * h + j * g + b for q in range(3) for j in channels for b in range(g)]


@dataclass(frozen=True)
class CouplingGroup:
    """All tensor axes that must be pruned with one shared index set."""

    target: int  # which c_i this group resizes, 1..4
    entries: tuple[GroupEntry, ...]

    def validate(self, spec: ModelSpec) -> None:
        shapes = tensor_shapes(spec)
        count = spec.params.channel(self.target)
        for e in self.entries:
            axis_len = shapes[e.tensor][e.axis]
            expected = count * e.group_multiplier * (3 if e.gate_stacked else 1)
            if axis_len != expected:
                raise ValueError(
                    f"coupling group c{self.target}: {e.tensor} axis {e.axis} has "
                    f"length {axis_len}, expected {expected}"
                )


def coupling_groups(spec: ModelSpec) -> list[CouplingGroup]:
    """The four coupling groups, one per c_i.

    Skip connections tie encoder layer i to decoder layer 4-i, so each c_i
    (i<4) couples enc_i output, enc_{i+1} input, dec_{4-i} output, and
    dec_{5-i} input.  c4 couples enc4 output, every GRU axis (input columns,
    gate-stacked rows, hidden columns, both biases), and dec1 input; GRU axes
    carry group multiplier B = bins_after_encoder because the GRU state is the
    flattened (c4, B) encoder output.
    """
    b = spec.bins_after_encoder
    groups = []
    for i in (1, 2, 3):
        groups.append(CouplingGroup(i, (
            GroupEntry(f"enc{i}_w", 0),
            GroupEntry(f"enc{i}_b", 0),
            GroupEntry(f"enc{i + 1}_w", 1),
            GroupEntry(f"dec{4 - i}_w", 1),
            GroupEntry(f"dec{4 - i}_b", 0),
            GroupEntry(f"dec{5 - i}_w", 0),
        )))
    groups.append(CouplingGroup(4, (
        GroupEntry("enc4_w", 0),
        GroupEntry("enc4_b", 0),
        GroupEntry("gru_ih", 0, b, gate_stacked=True),
        GroupEntry("gru_ih", 1, b),
        GroupEntry("gru_hh", 0, b, gate_stacked=True),
        GroupEntry("gru_hh", 1, b),
        GroupEntry("gru_bias_ih", 0, b, gate_stacked=True),
        GroupEntry("gru_bias_hh", 0, b, gate_stacked=True),
        GroupEntry("dec1_w", 0),
    )))
    for g in groups:
        g.validate(spec)
    return groups


def save_model(w: ModelWeights, path) -> None:
    """Write ``manifest.json`` + ``weights.bin`` into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    blobs = []
    for name in TENSOR_ORDER:
        t = w.tensors[name]
        raw = np.ascontiguousarray(t, dtype="<f4").tobytes()
        entries.append({
            "name": name,
            "shape": list(t.shape),
            "dtype": "f32",
            "offset_bytes": offset,
            "len_elems": int(t.size),
        })
        offset += len(raw)
        blobs.append(raw)
    manifest = {
        "version": MANIFEST_VERSION,
        "network_param": list(w.spec.params.as_tuple()),
        "freq_bins": w.spec.freq_bins,
        "tensors": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    (out / "weights.bin").write_bytes(b"".join(blobs))


def load_model(path) -> ModelWeights:
    """Load a model directory; the round trip with save_model is bit-exact."""
    src = Path(path)
    manifest_path = src / "manifest.json"
    if not manifest_path.is_file():
        raise ModelFormatError(f"missing manifest.json in {src}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"malformed manifest.json in {src}: {e}") from e
    version = manifest.get("version")
    if version != MANIFEST_VERSION:
        raise ModelFormatError(f"unknown model format version {version!r}")
    for key in ("network_param", "freq_bins", "tensors"):
        if key not in manifest:
            raise ModelFormatError(f"manifest.json missing field {key!r}")
    spec = ModelSpec(
        NetworkParam.from_sequence(manifest["network_param"]),
        int(manifest["freq_bins"]),
    )
    blob = (src / "weights.bin").read_bytes()
    tensors = {}
    expected_offset = 0
    for entry in manifest["tensors"]:
        name = entry["name"]
        shape = tuple(int(s) for s in entry["shape"])
        if entry.get("dtype") != "f32":
            raise ModelFormatError(f"tensor {name}: unsupported dtype {entry.get('dtype')!r}")
        n = int(entry["len_elems"])
        if n != int(np.prod(shape)):
            raise ModelFormatError(
                f"tensor {name}: len_elems {n} does not match shape {shape}"
            )
        offset = int(entry["offset_bytes"])
        if offset != expected_offset:
            raise ModelFormatError(
                f"tensor {name}: offset_bytes {offset}, expected {expected_offset}"
            )
        end = offset + 4 * n
        if end > len(blob):
            raise ModelFormatError(
                f"weights.bin truncated: tensor {name} needs bytes "
                f"[{offset}, {end}) but blob has {len(blob)}"
            )
        tensors[name] = np.frombuffer(
            blob, dtype="<f4", count=n, offset=offset
        ).astype(DTYPE).reshape(shape)
        expected_offset = end
    if expected_offset != len(blob):
        raise ModelFormatError(
            f"weights.bin has {len(blob) - expected_offset} trailing bytes"
        )
    try:
        return ModelWeights(spec, tensors)
    except ValueError as e:
        raise ModelFormatError(str(e)) from e


def model_memory_mb(w: ModelWeights) -> float:
    """Serialized weight payload in MiB (4 bytes per parameter)."""
    return 4 * w.param_count / float(1 << 20)
