"""Exact distribution of the walk via its linear atom structure.

The scale-k contribution to S_n is a signed integer combination of i.i.d.
three-valued atoms; grouping equal |coefficients| gives a compact product
form for the characteristic function, which is evaluated on a power-of-two
Fourier grid and inverted to the exact pmf (exact up to aliasing, which is
bounded and reported). A Fraction-based convolution covers toy sizes where
the amplitudes are rational, for oracle comparisons.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np

from .fields import FieldSpec, ScaleParams, scale_params, tail_variance_bound

SIGMA2 = 2.0 * math.log(2) ** 2

PRUNE_EPS = 1e-16


# ---------------------------------------------------------------------------
# coefficient profiles


def weight_profile(n: int, p: int) -> np.ndarray:
    """Trapezoid w(m) = #{(j, l): j in [0,n), l in [0,p), j + l = m}."""
    if n < 1 or p < 1:
        raise ValueError("need n >= 1 and p >= 1")
    m = np.arange(n + p - 1)
    return np.minimum.reduce([m + 1, np.full_like(m, p), np.full_like(m, n), n + p - 1 - m])


@dataclass(frozen=True)
class CoefficientProfile:
    """Signed atom coefficients of one scale's contribution to S_n."""

    n: int
    k: int
    weights: np.ndarray
    lag: int
    mode: str  # "overlapping" or "split"

    def signed_coefficients(self) -> np.ndarray:
        """Explicit c_m (overlapping mode only; split mode never materializes it)."""
        if self.mode != "overlapping":
            raise ValueError("split-mode profile has no single signed array")
        w = self.weights
        length = self.n + scale_params(self.k).p - 1 + self.lag
        c = np.zeros(length, dtype=np.int64)
        c[: w.size] += w
        c[self.lag : self.lag + w.size] -= w
        return c


def coefficient_profile(k: int, n: int) -> CoefficientProfile:
    sp = scale_params(k)
    w = weight_profile(n, sp.p)
    mode = "split" if sp.d >= n + sp.p else "overlapping"
    return CoefficientProfile(n=n, k=k, weights=w, lag=sp.d, mode=mode)


def _grouped_magnitudes(profile: CoefficientProfile) -> Tuple[np.ndarray, np.ndarray]:
    """(values, multiplicities) of |coefficient| over nonzero atoms.

    Split mode counts both independent copies of the trapezoid.
    """
    if profile.mode == "split":
        vals, counts = np.unique(profile.weights, return_counts=True)
        counts = counts * 2
    else:
        c = np.abs(profile.signed_coefficients())
        vals, counts = np.unique(c, return_counts=True)
    keep = vals > 0
    return vals[keep].astype(np.int64), counts[keep].astype(np.int64)


# ---------------------------------------------------------------------------
# pmf container


@dataclass
class IntegerPmf:
    """Probability mass on integers: mass[idx] is P(S = offset + idx)."""

    offset: int
    mass: np.ndarray
    pruned: float = 0.0

    @property
    def support(self) -> np.ndarray:
        return self.offset + np.arange(self.mass.size)

    def prob(self, j: int) -> float:
        idx = j - self.offset
        if 0 <= idx < self.mass.size:
            return float(self.mass[idx])
        return 0.0

    def total(self) -> float:
        return float(self.mass.sum())

    def variance(self) -> float:
        js = self.support.astype(np.float64)
        mean = float(js @ self.mass)
        return float((js - mean) ** 2 @ self.mass)

    def interval_mass(self, lo: int, hi: int) -> float:
        """Mass of [lo, hi] inclusive."""
        a = max(lo - self.offset, 0)
        b = min(hi - self.offset + 1, self.mass.size)
        if a >= b:
            return 0.0
        return float(self.mass[a:b].sum())

    def reflect(self) -> "IntegerPmf":
        return IntegerPmf(offset=-(self.offset + self.mass.size - 1),
                          mass=self.mass[::-1].copy(), pruned=self.pruned)

    def stretch(self, factor: int) -> "IntegerPmf":
        """Law of factor * S (support reindexed, zeros interleaved)."""
        if factor == 1:
            return self
        out = np.zeros((self.mass.size - 1) * factor + 1, dtype=self.mass.dtype)
        out[::factor] = self.mass
        return IntegerPmf(offset=self.offset * factor, mass=out, pruned=self.pruned)

    def convolve(self, other: "IntegerPmf") -> "IntegerPmf":
        mass = np.convolve(self.mass, other.mass)
        return IntegerPmf(offset=self.offset + other.offset, mass=mass,
                          pruned=self.pruned + other.pruned).prune()

    def prune(self, eps: float = PRUNE_EPS) -> "IntegerPmf":
        small = self.mass < eps
        lost = float(self.mass[small].sum())
        mass = self.mass.copy()
        mass[small] = 0.0
        nz = np.nonzero(mass)[0]
        if nz.size == 0:
            return IntegerPmf(offset=0, mass=np.array([0.0]), pruned=self.pruned + lost)
        mass = mass[nz[0] : nz[-1] + 1]
        return IntegerPmf(offset=self.offset + int(nz[0]), mass=mass,
                          pruned=self.pruned + lost)

    def max_asymmetry(self) -> float:
        m = self.mass
        lo, hi = self.offset, self.offset + m.size - 1
        r = max(-lo, hi)
        full = np.zeros(2 * r + 1)
        full[lo + r : hi + r + 1] = m
        return float(np.abs(full - full[::-1]).max())


def point_mass(j: int = 0) -> IntegerPmf:
    return IntegerPmf(offset=j, mass=np.array([1.0]))


@dataclass(frozen=True)
class ProductPmf2D:
    """Law of a 2-D walk with independent coordinates."""

    px: IntegerPmf
    py: IntegerPmf

    def prob(self, j: Tuple[int, int]) -> float:
        return self.px.prob(j[0]) * self.py.prob(j[1])


# ---------------------------------------------------------------------------
# characteristic-function inversion


def _next_pow2(x: int) -> int:
    return 1 << max(0, (x - 1).bit_length())


def _alias_bound(values: np.ndarray, counts: np.ndarray, qs: np.ndarray, half: int) -> float:
    """Conservative bound on the mass at |S| >= half.

    For each dyadic cut the atoms split into near (value <= cut) and far.
    Two estimates are combined:
      * union bound on any far atom firing, plus a Bernstein tail at half
        for the near sum (a refinement of the bounded-summand Hoeffding
        tail, which is too loose when the firing probability is tiny);
      * an expansion over the number m of far atoms that fire:
        P(m >= j) <= union^j / j! for independent indicators, each firing
        shifts the sum by at most max(values), and the near remainder is
        Bernstein-bounded at half - j*max(values).  This wins when every
        individual atom is small compared to half but the far union is
        not negligible.
    """
    best = 1.0
    top = int(values.max()) if values.size else 8
    cuts = [1 << b for b in range(3, max(4, top.bit_length() + 1))]
    for cut in cuts:
        far = values > cut
        union = float((counts[far] * qs[far]).sum())
        v2 = float((counts[~far] * qs[~far] * values[~far] ** 2).sum())

        def bern(t: float) -> float:
            if t <= 0:
                return 1.0
            if v2 <= 0:
                return 0.0
            return 2.0 * math.exp(-(t * t) / (2.0 * v2 + (2.0 / 3.0) * cut * t))

        best = min(best, union + bern(float(half)))
        expansion = 0.0
        weight = 1.0  # union^j / j!
        for j in range(5):
            expansion += weight * bern(float(half - j * top))
            weight *= union / (j + 1)
        best = min(best, expansion + weight)
    return best


@dataclass
class GroupedLaw:
    """All (|coefficient|, multiplicity, q) triples of a walk at horizon n."""

    values: np.ndarray
    counts: np.ndarray
    qs: np.ndarray

    def variance(self) -> float:
        return float((self.counts * self.qs * self.values.astype(np.float64) ** 2).sum())


def grouped_law(k_min: int, k_max: int, n: int) -> GroupedLaw:
    vals: List[np.ndarray] = []
    cnts: List[np.ndarray] = []
    qss: List[np.ndarray] = []
    for k in range(k_min, k_max + 1):
        sp = scale_params(k)
        profile = coefficient_profile(k, n)
        v, c = _grouped_magnitudes(profile)
        vals.append(v)
        cnts.append(c)
        qss.append(np.full(v.size, sp.q))
    return GroupedLaw(values=np.concatenate(vals), counts=np.concatenate(cnts),
                      qs=np.concatenate(qss))


def _pmf_from_groups(law: GroupedLaw, grid: Optional[int] = None) -> Tuple[IntegerPmf, float]:
    """Invert the product characteristic function on a Fourier grid.

    Returns (pmf, alias_bound). The characteristic function of the symmetric
    law is real: phi(theta) = prod (1 - q + q cos(v theta))^count.
    """
    std = math.sqrt(max(law.variance(), 1.0))
    if grid is None:
        exact_width = int(2 * (law.counts * law.values).sum()) + 1
        grid = _next_pow2(min(exact_width + 8, max(4096, int(32 * std))))
        grid = max(grid, 64)
        # widen until the wrap-around (aliasing) bound is negligible, so the
        # computed mass is a probability to well under 1e-9
        cap = min(_next_pow2(exact_width + 8), 1 << 21)
        while grid < cap and _alias_bound(law.values, law.counts, law.qs,
                                          grid // 2) > 1e-10:
            grid *= 2
    half = grid // 2
    theta = 2.0 * np.pi * np.arange(half + 1) / grid
    logphi = np.zeros(half + 1)
    block = max(1, (1 << 22) // (half + 1))
    for start in range(0, law.values.size, block):
        v = law.values[start : start + block].astype(np.float64)
        c = law.counts[start : start + block].astype(np.float64)
        q = law.qs[start : start + block]
        inner = 1.0 - q[:, None] + q[:, None] * np.cos(v[:, None] * theta[None, :])
        np.clip(inner, 1e-300, None, out=inner)
        logphi += (c[:, None] * np.log(inner)).sum(axis=0)
    phi = np.exp(logphi)
    dense = np.fft.irfft(phi, n=grid)
    # irfft output index t corresponds to S = t mod grid; recenter on [-half, half)
    mass = np.concatenate([dense[half:], dense[:half]])
    mass = np.maximum(mass, 0.0)
    # the law is exactly symmetric; average out FFT rounding so p(j) = p(-j)
    # holds bit-for-bit. The unpaired grid endpoint -half has no mirror at
    # +half, so its (aliasing-range) mass goes to the pruned ledger instead.
    mass[1:] = 0.5 * (mass[1:] + mass[1:][::-1])
    dropped = mass[0]
    mass[0] = 0.0
    pmf = IntegerPmf(offset=-half, mass=mass, pruned=dropped).prune()
    return pmf, _alias_bound(law.values, law.counts, law.qs, half)


def scale_pmf(k: int, n: int, alpha: Optional[float] = None,
              grid: Optional[int] = None) -> IntegerPmf:
    """Exact law of the scale-k contribution to S_n (single coordinate)."""
    sp = scale_params(k)
    q = sp.q if alpha is None else alpha * alpha
    if n == 0 or q == 0.0:
        return point_mass(0)
    profile = coefficient_profile(k, n)
    v, c = _grouped_magnitudes(profile)
    law = GroupedLaw(values=v, counts=c, qs=np.full(v.size, q))
    pmf, _ = _pmf_from_groups(law, grid=grid)
    return pmf


@dataclass
class WalkLawReport:
    n: int
    k_min: int
    k_max: int
    alias_bound: float
    tail_variance: float


def walk_pmf(spec: FieldSpec, n: int, grid: Optional[int] = None):
    """Exact law of S_n under ``spec`` (without forced assignments).

    Returns (pmf, report); 2-D specs yield a ProductPmf2D of two identical
    independent coordinate laws.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if spec.has_forcing():
        raise ValueError("walk_pmf requires an unconditioned spec")
    if spec.zero:
        base = point_mass(0)
        report = WalkLawReport(n=n, k_min=spec.k_min, k_max=spec.k_max,
                               alias_bound=0.0, tail_variance=0.0)
    elif n == 0:
        base = point_mass(0)
        report = WalkLawReport(n=n, k_min=spec.k_min, k_max=spec.k_max,
                               alias_bound=0.0,
                               tail_variance=tail_variance_bound(n, spec.k_max))
    else:
        law = grouped_law(spec.k_min, spec.k_max, n)
        base, alias = _pmf_from_groups(law, grid=grid)
        report = WalkLawReport(n=n, k_min=spec.k_min, k_max=spec.k_max,
                               alias_bound=alias,
                               tail_variance=tail_variance_bound(n, spec.k_max))
    if spec.doubling:
        base = base.stretch(2)
    if spec.dimension == 1:
        return base, report
    return ProductPmf2D(px=base, py=base), report


# ---------------------------------------------------------------------------
# fast sweep of the return probability p_n(0) over a whole range of n


def peak_probability_sweep(n_max: int, k_max: int, k_min: int = 1,
                           grid: int = 4096) -> np.ndarray:
    """p_n(0) for n = 1..n_max in one pass (single coordinate, no doubling).

    The per-scale log characteristic function needs only a running cumulative
    sum over the weight heights 1..min(n, p) plus one plateau term, so the
    sweep costs O(scales * grid) per n instead of a full inversion. Scales
    whose lag is short enough to overlap the lead window are recomputed
    directly per n (their grouped profiles stay tiny because |c| <= p there).
    """
    half = grid // 2
    theta = 2.0 * np.pi * np.arange(half + 1) / grid
    weights = np.full(half + 1, 2.0 / grid)
    weights[0] = 1.0 / grid
    weights[-1] = 1.0 / grid

    split_ks = []
    overlap_ks = []
    for k in range(k_min, k_max + 1):
        sp = scale_params(k)
        # overlapping for some n <= n_max iff d < n_max + p
        (overlap_ks if sp.d < n_max + sp.p else split_ks).append(sp)

    def logterm(sp: ScaleParams, v: int) -> np.ndarray:
        inner = 1.0 - sp.q + sp.q * np.cos(v * theta)
        return np.log(np.clip(inner, 1e-300, None))

    cumulative = {sp.k: np.zeros(half + 1) for sp in split_ks}  # A(h-1) per scale
    heights = {sp.k: 0 for sp in split_ks}
    last = {sp.k: logterm(sp, 1) for sp in split_ks}  # L(h) cache at h = min(n, p)

    out = np.empty(n_max)
    for n in range(1, n_max + 1):
        logphi = np.zeros(half + 1)
        for sp in split_ks:
            h = min(n, sp.p)
            if h > heights[sp.k] + 1:
                raise RuntimeError("sweep invariant broken")
            if h == heights[sp.k] + 1:
                if heights[sp.k] > 0:
                    cumulative[sp.k] += last[sp.k]
                last[sp.k] = logterm(sp, h)
                heights[sp.k] = h
            plateau = abs(n - sp.p) + 1
            logphi += 2.0 * (2.0 * cumulative[sp.k] + plateau * last[sp.k])
        for sp in overlap_ks:
            profile = coefficient_profile(sp.k, n)
            v, c = _grouped_magnitudes(profile)
            for vv, cc in zip(v, c):
                logphi += cc * logterm(sp, int(vv))
        out[n - 1] = float(weights @ np.exp(logphi))
    return out


# ---------------------------------------------------------------------------
# exact-rational mode (toy sizes; amplitudes rational only for k <= 2)


def rational_q(k: int) -> Fraction:
    if k == 1:
        return Fraction(1, 4)
    if k == 2:
        return Fraction(1, 32)
    raise ValueError("amplitude is irrational for k >= 3; rational mode covers k <= 2")


def exact_scale_pmf(k: int, n: int, q: Optional[Fraction] = None) -> Dict[int, Fraction]:
    """Law of the scale-k contribution as exact rationals (atom-by-atom)."""
    if q is None:
        q = rational_q(k)
    if n == 0 or q == 0:
        return {0: Fraction(1)}
    profile = coefficient_profile(k, n)
    if profile.mode == "split":
        atoms = [int(w) for w in profile.weights] * 2
    else:
        atoms = [abs(int(c)) for c in profile.signed_coefficients() if c != 0]
    law: Dict[int, Fraction] = {0: Fraction(1)}
    half = q / 2
    stay = 1 - q
    for c in atoms:
        if c == 0:
            continue
        new: Dict[int, Fraction] = {}
        for s, m in law.items():
            for dv, w in ((0, stay), (c, half), (-c, half)):
                key = s + dv
                new[key] = new.get(key, Fraction(0)) + m * w
        law = new
    return law


def exact_walk_pmf(spec: FieldSpec, n: int) -> Dict[int, Fraction]:
    """Exact rational law of one coordinate of S_n (k_max <= 2 only)."""
    law: Dict[int, Fraction] = {0: Fraction(1)}
    for k in range(spec.k_min, spec.k_max + 1):
        part = exact_scale_pmf(k, n)
        new: Dict[int, Fraction] = {}
        for a, ma in law.items():
            for b, mb in part.items():
                new[a + b] = new.get(a + b, Fraction(0)) + ma * mb
        law = new
    if spec.doubling:
        law = {2 * s: m for s, m in law.items()}
    return law


# ---------------------------------------------------------------------------
# LCLT metrics


@dataclass
class LcltReport:
    n: int
    sigma2: float
    dimension: int
    deviation: float
    peak: float
    scaling: float
    mass: float
    asymmetry: float


def lclt_deviation(pmf, n: int, sigma2: float = SIGMA2, dimension: int = 1) -> LcltReport:
    """Sup over the stored support of scaling * |p_n(j) - gaussian(j)|."""
    if dimension == 1:
        if not isinstance(pmf, IntegerPmf):
            raise TypeError("1-D deviation needs an IntegerPmf")
        scaling = math.sqrt(n) if n > 0 else 1.0
        js = pmf.support.astype(np.float64)
        denom = max(n, 1)
        gauss = np.exp(-(js**2) / (2 * denom * sigma2)) / math.sqrt(2 * math.pi * denom * sigma2)
        dev = float(np.abs(pmf.mass - gauss).max() * scaling)
        peak = scaling * pmf.prob(0)
        return LcltReport(n=n, sigma2=sigma2, dimension=1, deviation=dev, peak=peak,
                          scaling=scaling, mass=pmf.total(), asymmetry=pmf.max_asymmetry())
    if not isinstance(pmf, ProductPmf2D):
        raise TypeError("2-D deviation needs a ProductPmf2D")
    scaling = float(max(n, 1))
    denom = max(n, 1)
    radius = int(min(max(abs(pmf.px.offset), pmf.px.offset + pmf.px.mass.size - 1),
                     math.ceil(10 * math.sqrt(denom * sigma2)) + 2))
    js = np.arange(-radius, radius + 1)
    mx = np.array([pmf.px.prob(int(j)) for j in js])
    my = np.array([pmf.py.prob(int(j)) for j in js])
    grid_pmf = np.outer(mx, my)
    jj2 = js[:, None] ** 2 + js[None, :] ** 2
    gauss = np.exp(-jj2 / (2 * denom * sigma2)) / (2 * math.pi * denom * sigma2)
    dev = float(np.abs(grid_pmf - gauss).max() * scaling)
    peak = scaling * pmf.prob((0, 0))
    return LcltReport(n=n, sigma2=sigma2, dimension=2, deviation=dev, peak=peak,
                      scaling=scaling, mass=pmf.px.total() * pmf.py.total(),
                      asymmetry=max(pmf.px.max_asymmetry(), pmf.py.max_asymmetry()))


def box_probability(pmf2d: ProductPmf2D, M: int) -> float:
    """Mass of the sup-norm box |j|_inf <= M (product form)."""
    if M < 0:
        raise ValueError("M must be >= 0")
    return pmf2d.px.interval_mass(-M, M) * pmf2d.py.interval_mass(-M, M)


# ---------------------------------------------------------------------------
# export


def pmf_to_csv(pmf: IntegerPmf, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "mass"])
        for j, m in zip(pmf.support, pmf.mass):
            if m > 0:
                writer.writerow([int(j), repr(float(m))])


def pmf_to_json(pmf: IntegerPmf) -> str:
    payload = {
        "offset": int(pmf.offset),
        "mass": [float(m) for m in pmf.mass],
        "pruned": float(pmf.pruned),
    }
    return json.dumps(payload, sort_keys=True)


def lclt_report_to_json(report: LcltReport) -> str:
    return json.dumps(report.__dict__, sort_keys=True)
