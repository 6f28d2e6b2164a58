import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recurlab.fields import FieldSpec, scale_params
from recurlab.pmf import (
    SIGMA2,
    IntegerPmf,
    ProductPmf2D,
    box_probability,
    coefficient_profile,
    exact_scale_pmf,
    exact_walk_pmf,
    grouped_law,
    lclt_deviation,
    peak_probability_sweep,
    pmf_to_csv,
    pmf_to_json,
    point_mass,
    rational_q,
    scale_pmf,
    walk_pmf,
    weight_profile,
)

# ---------------------------------------------------------------------------
# brute-force oracle: enumerate every participating field value of one scale
# directly from the definition of the block function, with exact dyadic
# probabilities. Independent of the profile/grouping code paths under test.


def _oracle_scale_law(k, n, q):
    sp = scale_params(k)
    coords = sorted(
        {t + j for t in range(n) for j in range(sp.p)}
        | {t + sp.d + j for t in range(n) for j in range(sp.p)}
    )
    index = {m: i for i, m in enumerate(coords)}
    coeff = np.zeros(len(coords), dtype=np.int64)
    for t in range(n):
        for j in range(sp.p):
            coeff[index[t + j]] += 1
            coeff[index[t + sp.d + j]] -= 1
    m = len(coords)
    total = 3**m
    half = q / 2
    stay = 1 - q
    law = {}
    chunk = 200_000
    powers = 3 ** np.arange(m, dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = (idx[:, None] // powers[None, :]) % 3 - 1
        sums = digits @ coeff
        nonzeros = np.abs(digits).sum(axis=1)
        pairs, counts = np.unique(np.stack([sums, nonzeros], axis=1), axis=0,
                                  return_counts=True)
        for (s, nz), cnt in zip(pairs, counts):
            prob = int(cnt) * half ** int(nz) * stay ** (m - int(nz))
            law[int(s)] = law.get(int(s), Fraction(0)) + prob
    return law


def _convolve_laws(a, b):
    out = {}
    for x, px in a.items():
        for y, py in b.items():
            out[x + y] = out.get(x + y, Fraction(0)) + px * py
    return out


class TestWeightProfile:
    def test_small_trapezoid(self):
        assert weight_profile(3, 3).tolist() == [1, 2, 3, 2, 1]

    def test_short_lead(self):
        assert weight_profile(1, 3).tolist() == [1, 1, 1]
        assert weight_profile(2, 4).tolist() == [1, 2, 2, 2, 1]

    def test_invalid(self):
        with pytest.raises(ValueError):
            weight_profile(0, 3)

    @given(st.integers(min_value=1, max_value=40), st.integers(min_value=1, max_value=40))
    def test_invariants(self, n, p):
        w = weight_profile(n, p)
        assert w.sum() == n * p
        assert w.size == n + p - 1
        assert (w == w[::-1]).all()
        assert w.max() == min(n, p)


class TestCoefficientProfile:
    def test_modes(self):
        assert coefficient_profile(1, 1).mode == "overlapping"  # d=2 < 1+3
        assert coefficient_profile(2, 1).mode == "split"  # d=16 >= 1+4
        assert coefficient_profile(2, 13).mode == "overlapping"  # 16 < 13+4

    def test_signed_sum_zero(self):
        c = coefficient_profile(1, 4).signed_coefficients()
        assert c.sum() == 0
        assert c.size == 4 + 3 - 1 + 2

    def test_split_has_no_signed_array(self):
        with pytest.raises(ValueError):
            coefficient_profile(2, 1).signed_coefficients()


class TestExactRational:
    def test_single_block_return_probability(self):
        law = exact_scale_pmf(1, 1)
        assert law[0] == Fraction(867, 2048)
        assert sum(law.values()) == 1

    def test_rational_q_values(self):
        assert rational_q(1) == Fraction(1, 4)
        assert rational_q(2) == Fraction(1, 32)
        with pytest.raises(ValueError):
            rational_q(3)

    @pytest.mark.parametrize("k,n", [(1, 1), (1, 2), (1, 3), (2, 1), (2, 2)])
    def test_matches_enumeration_oracle(self, k, n):
        oracle = _oracle_scale_law(k, n, rational_q(k))
        law = exact_scale_pmf(k, n)
        assert law == oracle

    def test_symmetry(self):
        law = exact_scale_pmf(2, 2)
        assert all(law[s] == law[-s] for s in law)

    def test_walk_combines_scales(self):
        spec = FieldSpec(seed=0, dimension=1, k_max=2, doubling=False)
        combined = exact_walk_pmf(spec, 2)
        oracle = _convolve_laws(_oracle_scale_law(1, 2, rational_q(1)),
                                _oracle_scale_law(2, 2, rational_q(2)))
        assert combined == oracle

    def test_walk_doubling_reindexes(self):
        base = FieldSpec(seed=0, dimension=1, k_max=2, doubling=False)
        doubled = FieldSpec(seed=0, dimension=1, k_max=2, doubling=True)
        lb = exact_walk_pmf(base, 2)
        ld = exact_walk_pmf(doubled, 2)
        assert ld == {2 * s: m for s, m in lb.items()}


class TestFloatAgainstExact:
    @pytest.mark.parametrize("k,n", [(1, 1), (1, 4), (2, 1), (2, 3), (2, 14)])
    def test_scale_pmf(self, k, n):
        exact = exact_scale_pmf(k, n)
        pmf = scale_pmf(k, n)
        for s, m in exact.items():
            assert pmf.prob(s) == pytest.approx(float(m), abs=1e-12)
        assert pmf.total() == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_walk_pmf(self, n):
        spec = FieldSpec(seed=0, dimension=1, k_max=2, doubling=False)
        exact = exact_walk_pmf(spec, n)
        pmf, report = walk_pmf(spec, n)
        for s, m in exact.items():
            assert pmf.prob(s) == pytest.approx(float(m), abs=1e-12)
        assert report.alias_bound < 1e-6 or pmf.total() == pytest.approx(1.0, abs=1e-12)

    def test_walk_pmf_2d_doubling(self):
        spec = FieldSpec(seed=0, dimension=2, k_max=2, doubling=True)
        law2d, _ = walk_pmf(spec, 2)
        assert isinstance(law2d, ProductPmf2D)
        exact = exact_walk_pmf(FieldSpec(seed=0, dimension=1, k_max=2, doubling=True), 2)
        assert law2d.prob((0, 0)) == pytest.approx(float(exact[0]) ** 2, abs=1e-12)
        assert law2d.px.prob(1) == 0.0  # doubled walk lives on even sites


class TestIntegerPmfOps:
    def test_point_mass(self):
        pm = point_mass(3)
        assert pm.prob(3) == 1.0 and pm.prob(0) == 0.0

    def test_stretch(self):
        pmf = IntegerPmf(offset=-1, mass=np.array([0.25, 0.5, 0.25]))
        st2 = pmf.stretch(2)
        assert st2.prob(-2) == 0.25 and st2.prob(0) == 0.5 and st2.prob(1) == 0.0

    def test_reflect(self):
        pmf = IntegerPmf(offset=0, mass=np.array([0.75, 0.25]))
        r = pmf.reflect()
        assert r.prob(-1) == 0.25 and r.prob(0) == 0.75

    def test_convolve(self):
        a = IntegerPmf(offset=0, mass=np.array([0.5, 0.5]))
        conv = a.convolve(a)
        assert conv.prob(0) == 0.25 and conv.prob(1) == 0.5 and conv.prob(2) == 0.25

    def test_interval_mass(self):
        pmf = IntegerPmf(offset=-1, mass=np.array([0.2, 0.5, 0.3]))
        assert pmf.interval_mass(-1, 0) == pytest.approx(0.7)
        assert pmf.interval_mass(5, 9) == 0.0

    def test_prune_tracks_lost_mass(self):
        pmf = IntegerPmf(offset=0, mass=np.array([1e-20, 0.5, 0.5, 1e-20]))
        pruned = pmf.prune()
        assert pruned.mass.size == 2
        assert pruned.pruned == pytest.approx(2e-20)

    def test_variance_of_rademacher(self):
        pmf = IntegerPmf(offset=-1, mass=np.array([0.5, 0.0, 0.5]))
        assert pmf.variance() == pytest.approx(1.0)


class TestModerateSizeLaw:
    def test_mass_and_symmetry_n64(self):
        spec = FieldSpec(seed=0, dimension=1, k_max=8, doubling=False)
        pmf, report = walk_pmf(spec, 64)
        assert pmf.total() == pytest.approx(1.0, abs=1e-9)
        assert pmf.max_asymmetry() < 1e-12
        assert report.alias_bound < 1.0

    def test_variance_identity(self):
        spec = FieldSpec(seed=0, dimension=1, k_max=8, doubling=False)
        pmf, _ = walk_pmf(spec, 64)
        law = grouped_law(1, 8, 64)
        assert pmf.variance() == pytest.approx(law.variance(), rel=1e-6)

    def test_variance_band_structure(self):
        # per-step variance sits in the right band: the limit 2 (ln 2)^2 is
        # approached only at ln-ln speed, so at n = 512 we check the bracket
        # and that short-lag (overlapping) scales contribute almost nothing
        law = grouped_law(1, 12, 512)
        per_step = law.variance() / 512
        assert 0.8 * SIGMA2 < per_step < 2.0 * SIGMA2
        deep_overlap = sum(
            grouped_law(k, k, 512).variance()
            for k in (1, 2)  # d_k << n: lead and lag windows nearly cancel
        )
        assert deep_overlap < 0.05 * law.variance()

    def test_zero_and_degenerate_specs(self):
        zero = FieldSpec(seed=0, dimension=1, k_max=3, zero=True)
        pmf, _ = walk_pmf(zero, 10)
        assert pmf.prob(0) == 1.0
        pmf0, _ = walk_pmf(FieldSpec(seed=0, dimension=1, k_max=3, doubling=False), 0)
        assert pmf0.prob(0) == 1.0

    def test_forced_spec_rejected(self):
        spec = FieldSpec(seed=0, dimension=1, k_max=3, overrides=(((1, 1, 0), 1),))
        with pytest.raises(ValueError):
            walk_pmf(spec, 4)


class TestPeakSweep:
    def test_matches_full_inversion(self):
        sweep = peak_probability_sweep(12, k_max=4, grid=1024)
        for n in range(1, 13):
            spec = FieldSpec(seed=0, dimension=1, k_max=4, doubling=False)
            pmf, _ = walk_pmf(spec, n)
            assert sweep[n - 1] == pytest.approx(pmf.prob(0), abs=1e-10)

    def test_monotone_decay_trend(self):
        sweep = peak_probability_sweep(64, k_max=7)
        assert sweep[-1] < sweep[0]
        assert (sweep > 0).all() and (sweep <= 1).all()


class TestLclt:
    def test_point_mass_deviation(self):
        report = lclt_deviation(point_mass(0), n=1, dimension=1)
        expected = 1.0 - 1.0 / math.sqrt(2 * math.pi * SIGMA2)
        assert report.deviation == pytest.approx(expected, abs=1e-12)
        assert report.deviation == pytest.approx(0.593, abs=1e-3)

    def test_moderate_n_peak(self):
        spec = FieldSpec(seed=0, dimension=1, k_max=9, doubling=False)
        pmf, _ = walk_pmf(spec, 256)
        report = lclt_deviation(pmf, n=256, dimension=1)
        assert 0.2 < report.peak < 1.0
        assert report.deviation < 1.0
        assert report.mass == pytest.approx(1.0, abs=1e-9)

    def test_2d_report(self):
        spec = FieldSpec(seed=0, dimension=2, k_max=7, doubling=True)
        law2d, _ = walk_pmf(spec, 64)
        report = lclt_deviation(law2d, n=64, dimension=2)
        assert report.scaling == 64.0
        assert report.peak > 0
        assert report.deviation < 5.0

    def test_type_errors(self):
        with pytest.raises(TypeError):
            lclt_deviation(point_mass(0), n=1, dimension=2)


class TestBoxProbability:
    def test_monotone_and_total(self):
        spec = FieldSpec(seed=0, dimension=2, k_max=7, doubling=True)
        law2d, _ = walk_pmf(spec, 32)
        vals = [box_probability(law2d, M) for M in (0, 4, 16, 64, 10**6)]
        assert vals == sorted(vals)
        assert vals[-1] == pytest.approx(1.0, abs=1e-9)

    def test_negative_box_rejected(self):
        spec = FieldSpec(seed=0, dimension=2, k_max=3, doubling=True)
        law2d, _ = walk_pmf(spec, 4)
        with pytest.raises(ValueError):
            box_probability(law2d, -1)


class TestExport:
    def test_json_roundtrip_stable(self):
        pmf = scale_pmf(1, 2)
        assert pmf_to_json(pmf) == pmf_to_json(scale_pmf(1, 2))

    def test_csv_written(self, tmp_path):
        pmf = scale_pmf(1, 1)
        path = tmp_path / "law.csv"
        pmf_to_csv(pmf, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "j,mass"
        rows = {int(line.split(",")[0]): float(line.split(",")[1]) for line in lines[1:]}
        assert rows[0] == pytest.approx(867 / 2048, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=1, max_value=3), st.integers(min_value=1, max_value=10))
def test_scale_pmf_is_probability(k, n):
    pmf = scale_pmf(k, n)
    assert pmf.total() == pytest.approx(1.0, abs=1e-9)
    assert (pmf.mass >= 0).all()
    assert pmf.max_asymmetry() < 1e-12
