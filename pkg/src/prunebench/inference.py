"""Streaming forward pass: frame-by-frame API, sequence runner, profiler.

`forward_frame` and `forward_sequence` share one jitted kernel, so streaming
with carried state and one-shot processing agree bit-exactly.  The profiled
path is a separate instrumented numpy implementation: it times every
primitive with a monotonic clock and buckets the cost into three categories
(recurrent, conv_deconv, other).  Benchmarks must never use the profiled
path; its instrumentation overhead is accepted for profiling only.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import LEAKY_SLOPE, ModelSpec, ModelWeights
from .tensorops import DTYPE

PROFILE_CATEGORIES = ("recurrent", "conv_deconv", "other")


class _Plan:
    """Weights repacked for the jitted kernel; built once per ModelWeights."""

    def __init__(self, w: ModelWeights):
        spec = w.spec
        self.spec = spec
        args = []
        for i in (1, 2, 3, 4):
            k = w[f"enc{i}_w"]
            args.append(np.ascontiguousarray(k.reshape(k.shape[0], -1)))
            args.append(w[f"enc{i}_b"])
        args += [w["gru_ih"], w["gru_hh"], w["gru_bias_ih"], w["gru_bias_hh"]]
        for j in (1, 2, 3, 4):
            d = w[f"dec{j}_w"]  # (c_in, c_out, kt, kf)
            c_in, c_out = d.shape[0], d.shape[1]
            for kt in (0, 1):
                packed = d[:, :, kt, :].transpose(1, 2, 0).reshape(c_out * 3, c_in)
                args.append(np.ascontiguousarray(packed))
            args.append(w[f"dec{j}_b"])
        self.weight_args = tuple(args)


def _plan_for(w: ModelWeights) -> _Plan:
    if w._plan is None:
        w._plan = _Plan(w)
    return w._plan


@dataclass
class StreamState:
    """Mutable per-stream state: GRU hidden vector plus one previous input
    frame for every conv/deconv layer (the causal time-kernel history)."""

    gru_hidden: np.ndarray
    enc_hist: list[np.ndarray]
    dec_hist: list[np.ndarray]

    @classmethod
    def zeros(cls, spec: ModelSpec) -> "StreamState":
        p = spec.params
        f = spec.freq_bins
        b = spec.bins_after_encoder
        enc = [np.zeros((p.channel(i - 1), f // 2 ** (i - 1)), DTYPE)
               for i in (1, 2, 3, 4)]
        dec = [np.zeros((p.channel(5 - j), b * 2 ** (j - 1)), DTYPE)
               for j in (1, 2, 3, 4)]
        return cls(np.zeros(spec.gru_size, DTYPE), enc, dec)

    def reset(self) -> None:
        self.gru_hidden[:] = 0.0
        for t in self.enc_hist + self.dec_hist:
            t[:] = 0.0

    def copy(self) -> "StreamState":
        return StreamState(self.gru_hidden.copy(),
                           [t.copy() for t in self.enc_hist],
                           [t.copy() for t in self.dec_hist])

    def _args(self):
        return (self.gru_hidden, *self.enc_hist, *self.dec_hist)


def _run(w: ModelWeights, state: StreamState, xs: np.ndarray) -> np.ndarray:
    outs = np.empty_like(xs)
    kernels.run_frames(xs, outs, *_plan_for(w).weight_args, *state._args(),
                       LEAKY_SLOPE)
    return outs


def _check_frames(spec: ModelSpec, xs: np.ndarray) -> np.ndarray:
    xs = np.ascontiguousarray(xs, dtype=DTYPE)
    if xs.ndim == 1:
        xs = xs.reshape(1, -1)
    if xs.ndim != 2 or (xs.size and xs.shape[1] != spec.freq_bins):
        raise ValueError(
            f"frame length {xs.shape[-1] if xs.ndim else 0} does not match "
            f"freq_bins {spec.freq_bins}"
        )
    return xs


def forward_frame(w: ModelWeights, state: StreamState, x) -> tuple[np.ndarray, StreamState]:
    """Process one frame; advances ``state`` in place and also returns it."""
    xs = _check_frames(w.spec, np.asarray(x, dtype=DTYPE))
    if xs.shape[0] != 1:
        raise ValueError("forward_frame expects a single frame")
    return _run(w, state, xs)[0], state


def forward_sequence(w: ModelWeights, frames) -> np.ndarray:
    """Process a whole sequence from a reset state; returns (T, F) outputs."""
    xs = np.asarray(frames, dtype=DTYPE)
    if xs.size == 0:
        return np.zeros((0, w.spec.freq_bins), DTYPE)
    xs = _check_frames(w.spec, xs)
    return _run(w, StreamState.zeros(w.spec), xs)


# ---------------------------------------------------------------------------
# Instrumented numpy path (profiling only)
# ---------------------------------------------------------------------------

def _np_im2col(prev, cur, f_out):
    c_in, f_in = prev.shape
    cols = np.empty((c_in, 2, 3, f_out), DTYPE)
    for kt, src in ((0, prev), (1, cur)):
        pad = np.zeros((c_in, f_in + 2), DTYPE)
        pad[:, 1:-1] = src
        for kf in range(3):
            cols[:, kt, kf, :] = pad[:, kf:kf + 2 * f_out - 1:2]
    return cols.reshape(c_in * 6, f_out)


def _np_deconv(a0, a1, prev, cur, bias, f_out):
    c_out = bias.shape[0]
    b_in = prev.shape[1]
    m = (np.dot(a0, prev) + np.dot(a1, cur)).reshape(c_out, 3, b_in)
    y = np.zeros((c_out, f_out), DTYPE)
    y[:, 1:f_out - 1:2] += m[:, 0, 1:]
    y[:, 0::2] += m[:, 1, :]
    y[:, 1::2] += m[:, 2, :]
    y += bias[:, None]
    return y


def _lrelu(z):
    return np.where(z > 0, z, DTYPE(LEAKY_SLOPE) * z)


def forward_profiled(w: ModelWeights, frames) -> tuple[np.ndarray, dict[str, float]]:
    """Forward pass with per-primitive wall-clock attribution.

    Returns the outputs and seconds per category: ``recurrent`` (everything
    inside the GRU step), ``conv_deconv`` (im2col, matmuls, bias of every
    conv/deconv layer), ``other`` (activations, skip adds, mask, state
    bookkeeping).  Numerics match the jitted engine to float32 rounding.
    """
    xs = _check_frames(w.spec, np.asarray(frames, dtype=DTYPE))
    spec = w.spec
    p = spec.params
    n_h = spec.gru_size
    b = spec.bins_after_encoder
    plan = _plan_for(w)
    (e1w2, e1b, e2w2, e2b, e3w2, e3b, e4w2, e4b,
     gih, ghh, gbi, gbh,
     d1a0, d1a1, d1b, d2a0, d2a1, d2b,
     d3a0, d3a1, d3b, d4a0, d4a1, d4b) = plan.weight_args
    enc_w = ((e1w2, e1b), (e2w2, e2b), (e3w2, e3b), (e4w2, e4b))
    dec_w = ((d1a0, d1a1, d1b), (d2a0, d2a1, d2b),
             (d3a0, d3a1, d3b), (d4a0, d4a1, d4b))

    state = StreamState.zeros(spec)
    h = state.gru_hidden
    times = {c: 0.0 for c in PROFILE_CATEGORIES}
    clock = time.perf_counter
    outs = np.empty_like(xs)

    for t in range(xs.shape[0]):
        x = xs[t:t + 1]
        acts = [x]
        cur = x
        for i in range(4):
            w2, bias = enc_w[i]
            t0 = clock()
            z = np.dot(w2, _np_im2col(state.enc_hist[i], cur, cur.shape[1] // 2))
            z += bias[:, None]
            times["conv_deconv"] += clock() - t0
            t0 = clock()
            cur = _lrelu(z)
            times["other"] += clock() - t0
            acts.append(cur)

        t0 = clock()
        gi = np.dot(gih, acts[4].reshape(n_h)) + gbi
        gh = np.dot(ghh, h) + gbh
        r = 1.0 / (1.0 + np.exp(-(gi[:n_h] + gh[:n_h])))
        zg = 1.0 / (1.0 + np.exp(-(gi[n_h:2 * n_h] + gh[n_h:2 * n_h])))
        n = np.tanh(gi[2 * n_h:] + r * gh[2 * n_h:])
        h = ((1.0 - zg) * n + zg * h).astype(DTYPE)
        times["recurrent"] += clock() - t0

        d_layers = [h.reshape(p.c4, b)]
        cur = d_layers[0]
        for j in range(4):
            a0, a1, bias = dec_w[j]
            t0 = clock()
            y = _np_deconv(a0, a1, state.dec_hist[j], cur, bias, 2 * cur.shape[1])
            times["conv_deconv"] += clock() - t0
            t0 = clock()
            if j < 3:
                cur = _lrelu(y + acts[3 - j])
                d_layers.append(cur)
            else:
                mask = 1.0 / (1.0 + np.exp(-y[0]))
                outs[t] = (mask * xs[t]).astype(DTYPE)
            times["other"] += clock() - t0

        t0 = clock()
        for i in range(4):
            state.enc_hist[i][:] = acts[i]
        for j in range(4):
            state.dec_hist[j][:] = d_layers[j]
        times["other"] += clock() - t0

    return outs, times
