"""Manual backprop training on a synthetic denoising task.

The forward pass here is a batched-over-time numpy reimplementation of the
streaming engine (same math, same float32 results up to rounding); it exists
because backprop needs every intermediate activation, which the streaming
kernel does not keep.  Gradients are exact analytic derivatives through the
mask, decoder, skips, GRU (full BPTT) and encoder.  The internals are dtype
generic so a float64 shadow path can be used for tight gradient checks.

Experiments: fine-tune after structured pruning, prune-vs-direct-train
comparison at equal epoch budgets, and a learning-rate sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .inference import forward_sequence
from .model import LEAKY_SLOPE, ModelSpec, ModelWeights, NetworkParam, build_model
from .pruning import prune_structured
from .tensorops import DTYPE


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 10
    batch_size: int = 8
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 42

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


# ---------------------------------------------------------------------------
# Synthetic dataset
# ---------------------------------------------------------------------------

NUM_RIDGES = 3
DEFAULT_SNR_DB = 6.0


@dataclass
class SynthDataset:
    """Seeded synthetic denoising corpus.

    Clean spectra are sums of K=3 smooth spectral ridges (drifting center,
    Gaussian frequency profile, slow amplitude envelope); noisy adds a
    smoothed non-negative noise floor scaled to a target SNR.  Everything is
    a pure function of (seed, sizes).
    """

    seed: int
    num_sequences: int
    frames_per_sequence: int
    freq_bins: int
    snr_db: float = DEFAULT_SNR_DB
    pairs: list = field(default_factory=list, repr=False)

    @classmethod
    def generate(cls, seed: int, num_sequences: int, frames_per_sequence: int,
                 freq_bins: int, snr_db: float = DEFAULT_SNR_DB) -> "SynthDataset":
        if num_sequences < 1 or frames_per_sequence < 1:
            raise ValueError("dataset sizes must be positive")
        rng = np.random.default_rng(seed)
        t_len, f_len = frames_per_sequence, freq_bins
        t_ax = np.arange(t_len, dtype=np.float64)[:, None]
        f_ax = np.arange(f_len, dtype=np.float64)[None, :]
        pairs = []
        for _ in range(num_sequences):
            clean = np.zeros((t_len, f_len))
            for _ in range(NUM_RIDGES):
                center = (rng.uniform(0.15, 0.85) * f_len
                          + rng.uniform(0.05, 0.20) * f_len
                          * np.sin(2 * np.pi * t_ax / rng.uniform(16, 48)
                                   + rng.uniform(0, 2 * np.pi)))
                width = rng.uniform(1.0, 2.5)
                env = rng.uniform(0.4, 1.0) * (
                    0.55 + 0.45 * np.sin(2 * np.pi * t_ax / rng.uniform(24, 64)
                                         + rng.uniform(0, 2 * np.pi)))
                clean += env * np.exp(-((f_ax - center) ** 2) / (2 * width ** 2))
            raw = rng.random((t_len + 4, f_len + 4))
            noise = sum(raw[i:i + t_len, j:j + f_len]
                        for i in range(5) for j in range(5)) / 25.0
            scale = (np.sqrt(np.mean(clean ** 2))
                     / (np.sqrt(np.mean(noise ** 2)) * 10 ** (snr_db / 20)))
            noisy = clean + scale * noise
            pairs.append((noisy.astype(DTYPE), clean.astype(DTYPE)))
        return cls(seed, num_sequences, frames_per_sequence, freq_bins,
                   snr_db, pairs)


# ---------------------------------------------------------------------------
# Forward / backward on raw tensor dicts (dtype generic)
# ---------------------------------------------------------------------------

def _shift_back(x: np.ndarray) -> np.ndarray:
    """Previous-frame view with a zero frame at t=0 (causal time history)."""
    out = np.zeros_like(x)
    out[1:] = x[:-1]
    return out


def _im2col(x: np.ndarray) -> np.ndarray:
    """(T, c_in, f_in) -> (T, c_in*6, f_in//2) stride-2 patch matrix."""
    t_len, c_in, f_in = x.shape
    f_out = f_in // 2
    pad = np.zeros((t_len, c_in, f_in + 2), x.dtype)
    pad[:, :, 1:-1] = x
    cols = np.empty((t_len, c_in, 2, 3, f_out), x.dtype)
    for kt, src in ((0, _shift_back(pad)), (1, pad)):
        for kf in range(3):
            cols[:, :, kt, kf, :] = src[:, :, kf:kf + 2 * f_out - 1:2]
    return cols.reshape(t_len, c_in * 6, f_out)


def _col2im(dcols: np.ndarray, c_in: int, f_in: int) -> np.ndarray:
    """Adjoint of _im2col: scatter column gradients back onto the input."""
    t_len = dcols.shape[0]
    f_out = f_in // 2
    d5 = dcols.reshape(t_len, c_in, 2, 3, f_out)
    dpad = np.zeros((2, t_len, c_in, f_in + 2), dcols.dtype)
    for kt in (0, 1):
        for kf in range(3):
            dpad[kt, :, :, kf:kf + 2 * f_out - 1:2] += d5[:, :, kt, kf, :]
    dx = dpad[1, :, :, 1:-1].copy()
    dx[:-1] += dpad[0, 1:, :, 1:-1]
    return dx


def _deconv_apply(a0, a1, d, bias):
    """(T, c_in, b) -> (T, c_out, 2b) causal stride-2 transposed conv."""
    t_len, _, b_in = d.shape
    c_out = bias.shape[0]
    f_out = 2 * b_in
    m = (np.matmul(a0, _shift_back(d)) + np.matmul(a1, d))
    m = m.reshape(t_len, c_out, 3, b_in)
    y = np.zeros((t_len, c_out, f_out), d.dtype)
    y[:, :, 1:f_out - 1:2] += m[:, :, 0, 1:]
    y[:, :, 0::2] += m[:, :, 1, :]
    y[:, :, 1::2] += m[:, :, 2, :]
    y += bias[:, None]
    return y


def _deconv_backward(a0, a1, d, dy):
    """Gradients of _deconv_apply: (dA0, dA1, dbias, d_input)."""
    t_len, c_in, b_in = d.shape
    c_out = dy.shape[1]
    f_out = 2 * b_in
    dm = np.zeros((t_len, c_out, 3, b_in), dy.dtype)
    dm[:, :, 0, 1:] = dy[:, :, 1:f_out - 1:2]
    dm[:, :, 1, :] = dy[:, :, 0::2]
    dm[:, :, 2, :] = dy[:, :, 1::2]
    dm2 = dm.reshape(t_len, c_out * 3, b_in)
    prev = _shift_back(d)
    da0 = np.einsum("tmb,tcb->mc", dm2, prev)
    da1 = np.einsum("tmb,tcb->mc", dm2, d)
    dbias = dy.sum(axis=(0, 2))
    dd = np.matmul(a1.T, dm2)
    dprev = np.matmul(a0.T, dm2)
    dd[:-1] += dprev[1:]
    return da0, da1, dbias, dd


def _pack_deconv(w4: np.ndarray):
    """Kernel (c_in, c_out, 2, 3) -> two (c_out*3, c_in) matrices."""
    c_in, c_out = w4.shape[0], w4.shape[1]
    return tuple(
        np.ascontiguousarray(
            w4[:, :, kt, :].transpose(1, 2, 0).reshape(c_out * 3, c_in))
        for kt in (0, 1))


def _unpack_deconv_grad(da0, da1, c_in, c_out, dtype):
    dw = np.empty((c_in, c_out, 2, 3), dtype)
    for kt, da in ((0, da0), (1, da1)):
        dw[:, :, kt, :] = da.reshape(c_out, 3, c_in).transpose(2, 0, 1)
    return dw


def _lrelu(z):
    return np.where(z > 0, z, z.dtype.type(LEAKY_SLOPE) * z)


def _lrelu_grad(z):
    return np.where(z > 0, z.dtype.type(1), z.dtype.type(LEAKY_SLOPE))


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _forward_arrays(spec: ModelSpec, tensors: dict, xs: np.ndarray):
    """Full forward pass keeping every intermediate needed by backward."""
    dt = tensors["enc1_w"].dtype
    xs = np.asarray(xs, dt)
    t_len = xs.shape[0]
    n_h = spec.gru_size
    c4 = spec.params.c4
    b = spec.bins_after_encoder

    acts = [xs[:, None, :]]
    cols_list, pre_list = [], []
    for i in (1, 2, 3, 4):
        w4 = tensors[f"enc{i}_w"]
        cols = _im2col(acts[-1])
        z = np.matmul(w4.reshape(w4.shape[0], -1), cols)
        z += tensors[f"enc{i}_b"][:, None]
        cols_list.append(cols)
        pre_list.append(z)
        acts.append(_lrelu(z))

    us = acts[4].reshape(t_len, n_h)
    gih, ghh = tensors["gru_ih"], tensors["gru_hh"]
    gbi, gbh = tensors["gru_bias_ih"], tensors["gru_bias_hh"]
    h = np.zeros(n_h, dt)
    hs_prev = np.empty((t_len, n_h), dt)
    r_all = np.empty_like(hs_prev)
    z_all = np.empty_like(hs_prev)
    n_all = np.empty_like(hs_prev)
    ghn_all = np.empty_like(hs_prev)
    h_seq = np.empty_like(hs_prev)
    gi_all = np.matmul(us, gih.T) + gbi
    for t in range(t_len):
        gh = np.matmul(ghh, h) + gbh
        gi = gi_all[t]
        r = _sigmoid(gi[:n_h] + gh[:n_h])
        zg = _sigmoid(gi[n_h:2 * n_h] + gh[n_h:2 * n_h])
        n = np.tanh(gi[2 * n_h:] + r * gh[2 * n_h:])
        hs_prev[t] = h
        r_all[t], z_all[t], n_all[t] = r, zg, n
        ghn_all[t] = gh[2 * n_h:]
        h = (1.0 - zg) * n + zg * h
        h_seq[t] = h

    dec_in = [h_seq.reshape(t_len, c4, b)]
    dec_pre = []
    packs = []
    for j in (1, 2, 3, 4):
        a0, a1 = _pack_deconv(tensors[f"dec{j}_w"])
        packs.append((a0, a1))
        y = _deconv_apply(a0, a1, dec_in[-1], tensors[f"dec{j}_b"])
        if j < 4:
            u = y + acts[4 - j]
            dec_pre.append(u)
            dec_in.append(_lrelu(u))
        else:
            dec_pre.append(y)
    mask = _sigmoid(dec_pre[3][:, 0, :])
    out = mask * xs
    cache = dict(xs=xs, acts=acts, cols=cols_list, pre=pre_list, us=us,
                 hs_prev=hs_prev, r=r_all, z=z_all, n=n_all, ghn=ghn_all,
                 dec_in=dec_in, dec_pre=dec_pre, packs=packs, mask=mask,
                 out=out)
    return out, cache


def _pair_loss(out: np.ndarray, clean: np.ndarray) -> float:
    diff = (out - clean).astype(np.float64, copy=False)
    return float(np.mean(diff * diff))


def _backward_arrays(spec: ModelSpec, tensors: dict, cache: dict,
                     clean: np.ndarray) -> dict:
    """Analytic gradients of the per-pair MSE loss w.r.t. every tensor."""
    dt = tensors["enc1_w"].dtype
    xs, out, mask = cache["xs"], cache["out"], cache["mask"]
    t_len = xs.shape[0]
    n_h = spec.gru_size
    c4 = spec.params.c4
    b = spec.bins_after_encoder
    grads = {}

    dout = (2.0 / out.size) * (out - np.asarray(clean, dt))
    dy4 = (dout * xs * mask * (1.0 - mask))[:, None, :]
    dacts = [np.zeros_like(a) for a in cache["acts"]]

    dcur = dy4.astype(dt, copy=False)
    for j in (4, 3, 2, 1):
        a0, a1 = cache["packs"][j - 1]
        d_in = cache["dec_in"][j - 1]
        da0, da1, dbias, dd = _deconv_backward(a0, a1, d_in, dcur)
        w4 = tensors[f"dec{j}_w"]
        grads[f"dec{j}_w"] = _unpack_deconv_grad(da0, da1, w4.shape[0],
                                                 w4.shape[1], dt)
        grads[f"dec{j}_b"] = dbias
        if j > 1:
            du = dd * _lrelu_grad(cache["dec_pre"][j - 2])
            dacts[5 - j] += du
            dcur = du
        else:
            dh_seq = dd.reshape(t_len, n_h)

    gih, ghh = tensors["gru_ih"], tensors["gru_hh"]
    dgih = np.zeros_like(gih)
    dghh = np.zeros_like(ghh)
    dgbi = np.zeros(3 * n_h, dt)
    dgbh = np.zeros(3 * n_h, dt)
    dh = np.zeros(n_h, dt)
    r_all, z_all, n_all = cache["r"], cache["z"], cache["n"]
    ghn_all, hs_prev, us = cache["ghn"], cache["hs_prev"], cache["us"]
    dgi_all = np.empty((t_len, 3 * n_h), dt)
    for t in range(t_len - 1, -1, -1):
        dh = dh + dh_seq[t]
        r, zg, n = r_all[t], z_all[t], n_all[t]
        h_prev = hs_prev[t]
        dz_g = dh * (h_prev - n) * zg * (1.0 - zg)
        dn_pre = dh * (1.0 - zg) * (1.0 - n * n)
        dr_pre = dn_pre * ghn_all[t] * r * (1.0 - r)
        dgi = np.concatenate([dr_pre, dz_g, dn_pre])
        dgh = np.concatenate([dr_pre, dz_g, dn_pre * r])
        dgi_all[t] = dgi
        dghh += np.outer(dgh, h_prev)
        dgbi += dgi
        dgbh += dgh
        dh = np.matmul(ghh.T, dgh) + dh * zg
    dgih += np.matmul(dgi_all.T, us)
    dus = np.matmul(dgi_all, gih)
    grads["gru_ih"], grads["gru_hh"] = dgih, dghh
    grads["gru_bias_ih"], grads["gru_bias_hh"] = dgbi, dgbh

    dacts[4] += dus.reshape(t_len, c4, b)
    for i in (4, 3, 2, 1):
        dz = dacts[i] * _lrelu_grad(cache["pre"][i - 1])
        cols = cache["cols"][i - 1]
        w4 = tensors[f"enc{i}_w"]
        c_out = w4.shape[0]
        dw2 = np.einsum("tof,tkf->ok", dz, cols)
        grads[f"enc{i}_w"] = dw2.reshape(w4.shape)
        grads[f"enc{i}_b"] = dz.sum(axis=(0, 2))
        dcols = np.matmul(w4.reshape(c_out, -1).T, dz)
        c_in = cache["acts"][i - 1].shape[1]
        f_in = cache["acts"][i - 1].shape[2]
        if i > 1:
            dacts[i - 1] += _col2im(dcols, c_in, f_in)
    return grads


def _as_pairs(noisy, clean) -> list:
    """Normalize (single sequence | list of sequences) into pair list."""
    if isinstance(noisy, np.ndarray) and noisy.ndim == 2:
        noisy, clean = [noisy], [clean]
    pairs = [(np.asarray(x), np.asarray(y)) for x, y in zip(noisy, clean)]
    if len(pairs) != len(list(noisy)) or not pairs:
        raise ValueError("noisy and clean batches must be non-empty and equal length")
    for x, y in pairs:
        if x.shape != y.shape:
            raise ValueError(f"noisy/clean shape mismatch: {x.shape} vs {y.shape}")
    return pairs


def loss(w: ModelWeights, noisy, clean) -> float:
    """Mean squared error of the denoised output against the clean target.

    Accepts one (T, F) sequence pair or equal-length lists of pairs; list
    input returns the mean of per-pair losses.
    """
    total = 0.0
    pairs = _as_pairs(noisy, clean)
    for xs, ys in pairs:
        out = forward_sequence(w, xs)
        total += _pair_loss(out, ys)
    return total / len(pairs)


def gradients(w: ModelWeights, noisy, clean) -> dict:
    """Analytic gradients of `loss` w.r.t. every weight tensor."""
    pairs = _as_pairs(noisy, clean)
    grads, _ = _batch_gradients(w.spec, w.tensors, pairs)
    return grads


def _batch_gradients(spec: ModelSpec, tensors: dict, pairs):
    acc = None
    total = 0.0
    for xs, ys in pairs:
        out, cache = _forward_arrays(spec, tensors, xs)
        total += _pair_loss(out, ys)
        g = _backward_arrays(spec, tensors, cache, ys)
        if acc is None:
            acc = g
        else:
            for k in acc:
                acc[k] += g[k]
    scale = 1.0 / len(pairs)
    for k in acc:
        acc[k] = (acc[k] * scale).astype(tensors[k].dtype, copy=False)
    return acc, total / len(pairs)


# ---------------------------------------------------------------------------
# Optimizer and training loop
# ---------------------------------------------------------------------------

def train(w: ModelWeights, dataset: SynthDataset, cfg: TrainConfig):
    """Adam training; returns (trained ModelWeights, per-epoch mean loss).

    Deterministic given (w, dataset, cfg).  Aborts with RuntimeError if the
    loss turns non-finite.
    """
    spec = w.spec
    if dataset.freq_bins != spec.freq_bins:
        raise ValueError(
            f"dataset freq_bins {dataset.freq_bins} does not match model "
            f"freq_bins {spec.freq_bins}")
    tensors = {k: v.copy() for k, v in w.tensors.items()}
    m = {k: np.zeros_like(v) for k, v in tensors.items()}
    v = {k: np.zeros_like(t) for k, t in tensors.items()}
    rng = np.random.default_rng(cfg.seed)
    step = 0
    history = []
    n = len(dataset.pairs)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = [dataset.pairs[i] for i in order[start:start + cfg.batch_size]]
            grads, batch_loss = _batch_gradients(spec, tensors, batch)
            if not math.isfinite(batch_loss):
                raise RuntimeError(
                    f"non-finite loss {batch_loss} at epoch {epoch + 1}, "
                    f"batch starting at index {start}")
            epoch_loss += batch_loss * len(batch)
            step += 1
            bc1 = 1.0 - cfg.beta1 ** step
            bc2 = 1.0 - cfg.beta2 ** step
            for k in tensors:
                g = grads[k]
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * (g * g)
                upd = (cfg.learning_rate * (m[k] / bc1)
                       / (np.sqrt(v[k] / bc2) + cfg.eps))
                tensors[k] = (tensors[k] - upd).astype(tensors[k].dtype,
                                                       copy=False)
        history.append(epoch_loss / n)
    return ModelWeights(spec, tensors), history


def evaluate(w: ModelWeights, dataset: SynthDataset) -> float:
    """Mean proxy loss over every pair in the dataset."""
    noisy = [p[0] for p in dataset.pairs]
    clean = [p[1] for p in dataset.pairs]
    return loss(w, noisy, clean)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

@dataclass
class PruneVsDirectResult:
    """Fine-tuned-after-pruning arm vs directly trained arm, equal budgets."""

    target: NetworkParam
    pruned_model: ModelWeights
    direct_model: ModelWeights
    pruned_history: list
    direct_history: list
    pruned_pre_loss: float
    pruned_final_loss: float
    direct_final_loss: float


def experiment_prune_vs_direct(base: ModelWeights, target: NetworkParam,
                               cfg: TrainConfig, train_set: SynthDataset,
                               eval_set: SynthDataset, pretrain_epochs: int = 0,
                               direct_seed: int | None = None) -> PruneVsDirectResult:
    """Compare pruning + fine-tuning against training the target from scratch.

    The direct arm gets pretrain_epochs + cfg.epochs total epochs so both
    arms consume the same budget (the base model is assumed to have been
    trained for pretrain_epochs).
    """
    pruned = prune_structured(base, target)
    pre_loss = evaluate(pruned, eval_set)
    tuned, hist_a = train(pruned, train_set, cfg)

    direct_cfg = replace(cfg, epochs=cfg.epochs + pretrain_epochs)
    seed = cfg.seed + 1 if direct_seed is None else direct_seed
    fresh = build_model(ModelSpec(target, base.spec.freq_bins), seed=seed)
    direct, hist_b = train(fresh, train_set, direct_cfg)

    return PruneVsDirectResult(
        target=target, pruned_model=tuned, direct_model=direct,
        pruned_history=hist_a, direct_history=hist_b,
        pruned_pre_loss=pre_loss,
        pruned_final_loss=evaluate(tuned, eval_set),
        direct_final_loss=evaluate(direct, eval_set))


@dataclass
class LrSweepRow:
    learning_rate: float
    final_loss: float
    history: list


def experiment_lr_sweep(base: ModelWeights, target: NetworkParam, lrs,
                        cfg: TrainConfig, train_set: SynthDataset,
                        eval_set: SynthDataset) -> list:
    """Fine-tune one pruned model once per learning rate, identical budgets."""
    lrs = list(lrs)
    if not lrs:
        raise ValueError("lrs must be non-empty")
    pruned = prune_structured(base, target)
    rows = []
    for lr in lrs:
        tuned, hist = train(pruned, train_set, replace(cfg, learning_rate=lr))
        rows.append(LrSweepRow(lr, evaluate(tuned, eval_set), hist))
    return rows


def loss_history_csv(arms: dict) -> str:
    """Render per-arm loss histories as `epoch,arm,loss` CSV text."""
    lines = ["epoch,arm,loss"]
    for arm, history in arms.items():
        for epoch, value in enumerate(history, start=1):
            lines.append(f"{epoch},{arm},{value:.8g}")
    return "\n".join(lines) + "\n"
