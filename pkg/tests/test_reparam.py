import pytest

import prunebench as pb
from prunebench.reparam import BASE_16, BASE_32, STANDARD_FRACTIONS


# Expected configuration table, keyed by name: (c1, c2, c3, c4).
EXPECTED_TABLE = {
    "CRUSE32": (32, 64, 128, 256),
    "CRUSE16": (16, 32, 64, 128),
    "P.125": (32, 64, 128, 224),
    "P.250": (32, 64, 128, 192),
    "P.500": (32, 64, 128, 128),
    "P.5625": (32, 64, 112, 112),
    "P.625": (32, 64, 96, 96),
    "P.6875": (32, 64, 80, 80),
    "P.750": (32, 64, 64, 64),
    "P.875": (32, 32, 32, 32),
}


class TestDeriveConfig:
    @pytest.mark.parametrize("name,frac", STANDARD_FRACTIONS)
    def test_standard_fractions(self, name, frac):
        assert pb.derive_config(BASE_32, frac).as_tuple() == EXPECTED_TABLE[name]

    def test_zero_fraction_is_identity(self):
        assert pb.derive_config(BASE_32, 0.0) == BASE_32
        assert pb.derive_config(BASE_16, 0.0) == BASE_16

    def test_result_monotone(self):
        for _, frac in STANDARD_FRACTIONS:
            c = pb.derive_config(BASE_32, frac)
            assert c.c1 <= c.c2 <= c.c3 <= c.c4

    def test_round_half_to_even(self):
        # (1-0.25)*10 = 7.5 -> 8 (even); (1-0.35)*10 = 6.5 -> 6 (even)
        base = pb.NetworkParam(1, 1, 1, 10)
        assert pb.derive_config(base, 0.25).c4 == 8
        assert pb.derive_config(base, 0.35).c4 == 6

    def test_top_down_clamp_cascades(self):
        # c4 drops below every other width, dragging them all down
        base = pb.NetworkParam(8, 16, 32, 64)
        assert pb.derive_config(base, 0.9).as_tuple() == (6, 6, 6, 6)

    def test_fraction_range_errors(self):
        with pytest.raises(ValueError):
            pb.derive_config(BASE_32, 1.0)
        with pytest.raises(ValueError):
            pb.derive_config(BASE_32, -0.1)

    def test_vanishing_c4_rejected(self):
        with pytest.raises(ValueError, match="zero channels"):
            pb.derive_config(pb.NetworkParam(1, 1, 1, 2), 0.99)


class TestStandardConfigs:
    def test_full_table(self):
        table = pb.standard_configs()
        assert {k: v.as_tuple() for k, v in table.items()} == EXPECTED_TABLE

    def test_order(self):
        assert list(pb.standard_configs()) == [
            "CRUSE32", "CRUSE16", "P.125", "P.250", "P.500", "P.5625",
            "P.625", "P.6875", "P.750", "P.875",
        ]

    def test_param_counts_strictly_decrease_along_chain(self):
        table = pb.standard_configs()
        chain = ["CRUSE32", "P.125", "P.250", "P.500", "P.5625",
                 "P.625", "P.6875", "P.750", "P.875"]
        counts = [pb.build_model(pb.ModelSpec(table[n], 16), 0).param_count
                  for n in chain]
        assert all(a > b for a, b in zip(counts, counts[1:]))


class TestResolveConfig:
    def test_by_name(self):
        assert pb.resolve_config("P.750").as_tuple() == (32, 64, 64, 64)
        assert pb.resolve_config("CRUSE16") == BASE_16

    def test_by_vector(self):
        assert pb.resolve_config("4,8,16,32").as_tuple() == (4, 8, 16, 32)

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown config"):
            pb.resolve_config("P.999")

    def test_bad_vector(self):
        with pytest.raises(ValueError):
            pb.resolve_config("4,8,16")
        with pytest.raises(ValueError):
            pb.resolve_config("32,16,8,4")  # not monotone
