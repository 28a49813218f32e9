"""Mapping a prune fraction to a monotone channel configuration.

Shrinking starts at the GRU: c4 <- round((1-p) * c4).  The remaining widths
are then clamped from the top down (c3, c2, c1 in turn take min(c_i, c_{i+1}))
so the result stays monotone non-decreasing.
"""

from __future__ import annotations

from .model import NetworkParam

# Fractions of the built-in P.* configurations, applied to the 32,64,128,256 base.
STANDARD_FRACTIONS = (
    ("P.125", 0.125),
    ("P.250", 0.250),
    ("P.500", 0.500),
    ("P.5625", 0.5625),
    ("P.625", 0.625),
    ("P.6875", 0.6875),
    ("P.750", 0.750),
    ("P.875", 0.875),
)

BASE_32 = NetworkParam(32, 64, 128, 256)
BASE_16 = NetworkParam(16, 32, 64, 128)


def derive_config(base: NetworkParam, p: float) -> NetworkParam:
    """Shrink ``base`` by prune fraction ``p`` in [0, 1).

    Rounding of (1-p)*c4 is round-half-to-even; every built-in fraction yields
    an exact integer so the rule only matters for ad-hoc fractions.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"prune fraction must be in [0, 1), got {p}")
    c4 = round((1.0 - p) * base.c4)
    if c4 < 1:
        raise ValueError(
            f"prune fraction {p} reduces c4 from {base.c4} to zero channels"
        )
    c3 = min(base.c3, c4)
    c2 = min(base.c2, c3)
    c1 = min(base.c1, c2)
    return NetworkParam(c1, c2, c3, c4)


def standard_configs() -> dict[str, NetworkParam]:
    """Named configuration table: both baselines plus the eight P.* rows."""
    configs = {"CRUSE32": BASE_32, "CRUSE16": BASE_16}
    for name, frac in STANDARD_FRACTIONS:
        configs[name] = derive_config(BASE_32, frac)
    return configs


def resolve_config(text: str) -> NetworkParam:
    """Parse a config name (e.g. P.500) or an explicit c1,c2,c3,c4 vector."""
    table = standard_configs()
    if text in table:
        return table[text]
    try:
        return NetworkParam.from_sequence(text.split(","))
    except ValueError:
        raise ValueError(
            f"unknown config {text!r}: expected one of {sorted(table)} "
            "or a c1,c2,c3,c4 vector"
        ) from None
