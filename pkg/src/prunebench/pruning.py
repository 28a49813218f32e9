"""Structured (channel) and unstructured (sparse) magnitude pruning.

Structured pruning scores each channel by the summed L2 norms of every slice
it owns across its coupling group, keeps the top-k channels, and extracts the
corresponding sub-tensors from every coupled axis, so surviving weights are
preserved bit-exactly.  Unstructured pruning zeroes the smallest-magnitude
entries of the GRU matrices in place of removing them; shapes do not change
and no convolution layer is touched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensorops
from .model import CouplingGroup, ModelSpec, ModelWeights, NetworkParam, coupling_groups

UNSTRUCTURED_TENSORS = ("gru_ih", "gru_hh")


@dataclass(frozen=True)
class IndexSet:
    """Strictly ascending coordinate list selected for keeping."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = self.indices
        if len(idx) == 0:
            raise ValueError("IndexSet may not be empty")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"indices must be strictly ascending, got {idx}")

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


def select_top_coordinates(scores, k: int) -> IndexSet:
    """Coordinates of the k largest scores, ascending; ties keep lower index.

    For non-negative additive scores this equals the argmax over all k-subsets
    of the summed score (the test suite proves the reduction by brute force).
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError("scores must be 1-D")
    if not 1 <= k <= s.size:
        raise ValueError(f"k must be in 1..{s.size}, got {k}")
    order = np.argsort(-s, kind="stable")  # stable: equal scores keep low index first
    kept = np.sort(order[:k])
    return IndexSet(tuple(int(i) for i in kept))


def _channel_scores_from(tensors: dict, group: CouplingGroup, count: int) -> np.ndarray:
    scores = np.zeros(count, dtype=np.float64)
    for entry in group.entries:
        t = tensors[entry.tensor]
        axis_len = t.shape[entry.axis]
        expected = count * entry.group_multiplier * (3 if entry.gate_stacked else 1)
        if axis_len != expected:
            raise ValueError(
                f"coupling group c{group.target}: {entry.tensor} axis {entry.axis} "
                f"has length {axis_len}, expected {expected}"
            )
        for j in range(count):
            for coord in entry.owned_coords(j, axis_len):
                scores[j] += tensorops.slice_norm(t, entry.axis, coord)
    return scores


def channel_scores(w: ModelWeights, group: CouplingGroup) -> np.ndarray:
    """Per-channel magnitude score summed over every entry in the group.

    Channel j's score adds the L2 norm of each axis slice it owns: g
    consecutive coordinates per entry, repeated across the three gate blocks
    for gate-stacked GRU axes.
    """
    group.validate(w.spec)
    return _channel_scores_from(w.tensors, group, w.spec.params.channel(group.target))


def prune_structured(w: ModelWeights, target: NetworkParam) -> ModelWeights:
    """Shrink ``w`` to the channel widths in ``target``.

    Groups are pruned independently in order c4, c3, c2, c1, with channel
    scores recomputed on the partially pruned weights at each step.  Surviving
    slices are bit-equal to the originals.

    The intermediate channel vector may transiently violate monotonicity
    (c4 shrinks before c3), so counts are tracked as plain integers and the
    validated spec is only rebuilt at the end.
    """
    current = w.spec.params
    for i in (1, 2, 3, 4):
        if target.channel(i) > current.channel(i):
            raise ValueError(
                f"target c{i}={target.channel(i)} exceeds current {current.channel(i)}"
            )
    tensors = {k: v for k, v in w.tensors.items()}
    counts = list(current.as_tuple())
    groups = {g.target: g for g in coupling_groups(w.spec)}
    for i in (4, 3, 2, 1):
        keep = target.channel(i)
        if keep == counts[i - 1]:
            continue
        group = groups[i]
        kept = select_top_coordinates(
            _channel_scores_from(tensors, group, counts[i - 1]), keep
        )
        for entry in group.entries:
            t = tensors[entry.tensor]
            axis_coords = entry.expand_indices(kept, t.shape[entry.axis])
            tensors[entry.tensor] = tensorops.take_along_axis(
                t, entry.axis, sorted(axis_coords)
            )
        counts[i - 1] = keep
    spec = ModelSpec(NetworkParam.from_sequence(counts), w.spec.freq_bins)
    return ModelWeights(spec, {k: v.copy() for k, v in tensors.items()})


def prune_unstructured(w: ModelWeights, frac_gru: float) -> ModelWeights:
    """Zero the floor(frac*len) smallest-|w| entries of each GRU matrix.

    Each tensor is thresholded independently; magnitude ties are broken by
    zeroing the lower flat index first.  Biases and convolutions are left
    untouched and all shapes are preserved.
    """
    if not 0.0 <= frac_gru <= 1.0:
        raise ValueError(f"frac_gru must be in [0, 1], got {frac_gru}")
    tensors = {k: v.copy() for k, v in w.tensors.items()}
    for name in UNSTRUCTURED_TENSORS:
        flat = tensors[name].reshape(-1)
        n_zero = int(np.floor(frac_gru * flat.size))
        if n_zero == 0:
            continue
        order = np.argsort(np.abs(flat), kind="stable")
        flat[order[:n_zero]] = 0.0
    return ModelWeights(w.spec, tensors)
