"""Multi-scale three-valued random fields and their moving-block cocycle.

A field value at address (k, i, j) is +1 or -1 with probability alpha_k^2/2
each and 0 otherwise, independent across addresses. The scale-k block
function sums p_k consecutive values minus the same block lagged by d_k,
and the walk increment is the sum of the block functions over all scales up
to a truncation. Everything is deterministic given the 64-bit seed; forced
assignments (pointwise or over coordinate windows) take precedence and
realize exact conditioning on cylinder events.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .prf import uniform01, uniform01_vec

# Address-word tags keep the field family, the omega configuration and any
# auxiliary streams in disjoint key spaces.
TAG_FIELD = 11
TAG_OMEGA = 23
TAG_BLOCK = 37
TAG_SPARSE = 41

COORD_BOUND = 1 << 60


def lag_namespace(k: int) -> bool:
    """Scales whose lag exceeds the coordinate bound key their lagged window
    in a separate address namespace (offset from d_k) instead of by absolute
    position, which would wrap modulo 2^64 and alias onto the lead window."""
    return k * k >= 60


@dataclass(frozen=True)
class ScaleParams:
    """Block length, lag and amplitude of one scale."""

    k: int
    p: int
    d: int
    alpha: float

    @property
    def q(self) -> float:
        """Probability that a single field value is nonzero."""
        return self.alpha * self.alpha


def scale_params(k: int) -> ScaleParams:
    if k <= 0:
        raise ValueError(f"scale index must be >= 1, got {k}")
    p = 2**k if k % 2 == 0 else 2**k + 1
    d = 2 ** (k * k)
    if k == 1:
        alpha = 0.5
    else:
        # log base 2: makes the per-step variance of the contributing band
        # total 2 (ln 2)^2.
        alpha = 1.0 / (p * math.sqrt(k * math.log2(k)))
    return ScaleParams(k=k, p=p, d=d, alpha=alpha)


@dataclass(frozen=True)
class ForcedWindow:
    """Force field values of scale k, coordinate i to ``value`` on [lo, hi)."""

    k: int
    i: int
    lo: int
    hi: int
    value: int


@dataclass(frozen=True)
class FieldSpec:
    """Addressable realization of the multi-scale field.

    ``overrides`` maps (k, i, j) to a forced value in {-1, 0, +1};
    ``windows`` force whole coordinate ranges (used by conditioning plans
    whose cylinder sets are too long to enumerate pointwise). ``origin``
    shifts the time axis: evaluation at j reads the base realization at
    j + origin.
    """

    seed: int
    dimension: int = 2
    k_min: int = 1
    k_max: int = 8
    doubling: bool = True
    origin: int = 0
    zero: bool = False
    overrides: Tuple[Tuple[Tuple[int, int, int], int], ...] = ()
    windows: Tuple[ForcedWindow, ...] = ()

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if not (1 <= self.k_min <= self.k_max):
            raise ValueError("need 1 <= k_min <= k_max")
        for (k, i, j), v in self.overrides:
            if v not in (-1, 0, 1):
                raise ValueError(f"forced value {v} not in {{-1,0,1}}")
        for w in self.windows:
            if w.value not in (-1, 0, 1):
                raise ValueError(f"forced value {w.value} not in {{-1,0,1}}")
            if w.lo >= w.hi:
                raise ValueError("empty forced window")

    @property
    def override_map(self) -> Dict[Tuple[int, int, int], int]:
        return dict(self.overrides)

    def scales(self) -> List[ScaleParams]:
        return [scale_params(k) for k in range(self.k_min, self.k_max + 1)]

    def has_forcing(self) -> bool:
        return bool(self.overrides) or bool(self.windows)


def default_k_max(n_max: int) -> int:
    """Truncation scale for horizons up to n_max."""
    return max(1, math.ceil(math.log2(max(2, n_max)))) + 2


def tail_variance_bound(n: int, k_max: int) -> float:
    """Per-coordinate variance neglected by truncating scales above k_max.

    A scale with p_k > n contributes at most 2 n^2 alpha_k^2 p_k to the
    variance of S_n; summed over k > k_max the bound is a fast geometric
    tail, reported alongside every result that uses the truncation.
    """
    total = 0.0
    for k in range(k_max + 1, k_max + 64):
        sp = scale_params(k)
        term = 2.0 * n * n * sp.q * sp.p
        total += term
        if term < 1e-300:
            break
    return total


def _forced_value(spec: FieldSpec, k: int, i: int, j: int) -> Optional[int]:
    if spec.overrides:
        v = spec.override_map.get((k, i, j))
        if v is not None:
            return v
    for w in spec.windows:
        if w.k == k and w.i == i and w.lo <= j < w.hi:
            return w.value
    return None


def field_value(spec: FieldSpec, k: int, i: int, j: int) -> int:
    """The field value at (scale k, coordinate i, time j) in {-1, 0, +1}."""
    if not (spec.k_min <= k <= spec.k_max):
        raise ValueError(f"scale {k} outside [{spec.k_min}, {spec.k_max}]")
    if not (1 <= i <= spec.dimension):
        raise ValueError(f"coordinate index {i} exceeds dimension")
    v = _forced_value(spec, k, i, j)
    if v is not None:
        return v
    if spec.zero:
        return 0
    sp = scale_params(k)
    if lag_namespace(k) and j >= sp.d // 2:
        u = uniform01(spec.seed, TAG_FIELD, k, i, 1, j - sp.d + spec.origin)
    else:
        u = uniform01(spec.seed, TAG_FIELD, k, i, j + spec.origin)
    if u < sp.q / 2:
        return 1
    if u < sp.q:
        return -1
    return 0


def field_values_vec(spec: FieldSpec, k: int, i: int, j: np.ndarray,
                     lagged: bool = False) -> np.ndarray:
    """Vectorized field_value over an int64 coordinate array.

    With ``lagged=True`` the entries of ``j`` are offsets from the lag d_k
    (required for scales whose lag exceeds the int64 coordinate range).
    """
    sp = scale_params(k)
    j = np.asarray(j, dtype=np.int64)
    if lagged and not lag_namespace(k):
        return field_values_vec(spec, k, i, j + sp.d)
    if spec.zero:
        out = np.zeros(j.shape, dtype=np.int64)
    else:
        words = (TAG_FIELD, k, i, 1) if lagged else (TAG_FIELD, k, i)
        u = uniform01_vec(spec.seed, words, j + spec.origin)
        out = np.where(u < sp.q / 2, 1, np.where(u < sp.q, -1, 0)).astype(np.int64)
    if spec.has_forcing():
        flat = out.ravel()
        jf = j.ravel()
        for idx in range(flat.size):
            abs_j = int(jf[idx]) + (sp.d if lagged else 0)
            v = _forced_value(spec, k, i, abs_j)
            if v is not None:
                flat[idx] = v
        out = flat.reshape(j.shape)
    return out


def f_k_at(spec: FieldSpec, k: int, i: int, t: int) -> int:
    """Block function of scale k at time t: lead window minus lagged window."""
    sp = scale_params(k)
    total = 0
    for j in range(sp.p):
        total += field_value(spec, k, i, t + j)
        total -= field_value(spec, k, i, t + sp.d + j)
    return total


def f_at(spec: FieldSpec, t: int) -> Tuple[int, ...]:
    """The walk increment at time t (one entry per coordinate)."""
    mult = 2 if spec.doubling else 1
    out = []
    for i in range(1, spec.dimension + 1):
        s = 0
        for k in range(spec.k_min, spec.k_max + 1):
            s += f_k_at(spec, k, i, t)
        out.append(mult * s)
    return tuple(out)


def shift_base(spec: FieldSpec, n: int) -> FieldSpec:
    """Time shift of the whole field: shifted(j) == original(j + n)."""
    if n == 0:
        return spec
    new_over = tuple(((k, i, j - n), v) for (k, i, j), v in spec.overrides)
    new_win = tuple(replace(w, lo=w.lo - n, hi=w.hi - n) for w in spec.windows)
    return replace(spec, origin=spec.origin + n, overrides=new_over, windows=new_win)


def negate(spec: FieldSpec) -> "NegatedSpec":
    return NegatedSpec(spec)


class NegatedSpec:
    """Wrapper flipping the sign of every field value (for symmetry tests)."""

    def __init__(self, base: FieldSpec):
        self.base = base

    def __getattr__(self, name):
        return getattr(self.base, name)


def _field_value_any(spec, k, i, j):
    if isinstance(spec, NegatedSpec):
        return -field_value(spec.base, k, i, j)
    return field_value(spec, k, i, j)


@dataclass(frozen=True)
class PathSample:
    """Bilateral partial sums S_t over an integer window [a, b]."""

    spec: FieldSpec
    window: Tuple[int, int]
    values: np.ndarray  # shape (b - a + 1, dimension), int64

    def at(self, t: int) -> np.ndarray:
        a, b = self.window
        if not (a <= t <= b):
            raise ValueError(f"time {t} outside window [{a}, {b}]")
        return self.values[t - a]


def partial_sums(spec, window: Tuple[int, int]) -> PathSample:
    """Exact partial sums over ``window`` = [a, b] with a <= 0 <= b.

    Uses the incremental update: stepping the block function touches only
    four field positions per scale, so long windows cost O(k_max) per step
    after an O(sum p_k) initialization.
    """
    a, b = window
    if a > b:
        raise ValueError(f"window [{a}, {b}] is empty")
    if not (a <= 0 <= b):
        raise ValueError("window must contain 0 (bilateral convention)")
    base = spec.base if isinstance(spec, NegatedSpec) else spec
    dim = base.dimension
    mult = 2 if base.doubling else 1
    scales = base.scales()
    # g[k][i] tracks the block function of scale k, coordinate i at time t.
    increments = np.zeros((b - a, dim), dtype=np.int64) if b > a else np.zeros((0, dim), dtype=np.int64)
    for i in range(1, dim + 1):
        for sp in scales:
            g = sum(
                _field_value_any(spec, sp.k, i, a + j)
                - _field_value_any(spec, sp.k, i, a + sp.d + j)
                for j in range(sp.p)
            )
            for t in range(a, b):
                increments[t - a, i - 1] += g
                g += _field_value_any(spec, sp.k, i, t + sp.p) - _field_value_any(spec, sp.k, i, t)
                g -= _field_value_any(spec, sp.k, i, t + sp.d + sp.p) - _field_value_any(spec, sp.k, i, t + sp.d)
    increments *= mult
    values = np.zeros((b - a + 1, dim), dtype=np.int64)
    # S_t = sum of increments over [0, t) for t > 0, minus over [t, 0) for t < 0.
    cum = np.concatenate([np.zeros((1, dim), dtype=np.int64), np.cumsum(increments, axis=0)])
    # cum[m] = sum of f over [a, a+m); S_t = cum[t - a] - cum[-a].
    values[:] = cum - cum[-a]
    return PathSample(spec=base, window=(a, b), values=values)


def partial_sums_batch(
    seeds: np.ndarray,
    window: Tuple[int, int],
    dimension: int = 1,
    k_max: Optional[int] = None,
    doubling: bool = False,
    k_min: int = 1,
) -> np.ndarray:
    """Partial sums for many independent seeds at once.

    Returns an int64 array of shape (n_seeds, b - a + 1, dimension).
    Matches partial_sums(FieldSpec(seed=s, ...), window) for each seed s.
    """
    a, b = window
    if a > b or not (a <= 0 <= b):
        raise ValueError("window must satisfy a <= 0 <= b")
    seeds = np.asarray(seeds, dtype=np.uint64)
    if k_max is None:
        k_max = default_k_max(max(abs(a), abs(b), 2))
    n_seeds = seeds.size
    mult = 2 if doubling else 1
    incr = np.zeros((n_seeds, b - a, dimension), dtype=np.int64)

    def vals(k, i, j_arr, lagged=False):
        sp = scale_params(k)
        if lagged and not lag_namespace(k):
            j_arr = np.asarray(j_arr, dtype=np.int64) + sp.d
            lagged = False
        words = (TAG_FIELD, k, i, 1) if lagged else (TAG_FIELD, k, i)
        u = uniform01_vec(seeds[:, None], words, np.asarray(j_arr, dtype=np.int64)[None, :])
        return np.where(u < sp.q / 2, 1, np.where(u < sp.q, -1, 0)).astype(np.int64)

    for i in range(1, dimension + 1):
        for k in range(k_min, k_max + 1):
            sp = scale_params(k)
            lead = vals(k, i, np.arange(a, a + sp.p))
            lag = vals(k, i, np.arange(a, a + sp.p), lagged=True)
            g = lead.sum(axis=1) - lag.sum(axis=1)
            if b > a:
                # four touched positions per step, batched over the window
                ts = np.arange(a, b)
                d_lead = vals(k, i, ts + sp.p) - vals(k, i, ts)
                d_lag = vals(k, i, ts + sp.p, lagged=True) - vals(k, i, ts, lagged=True)
                for idx in range(b - a):
                    incr[:, idx, i - 1] += g
                    g = g + d_lead[:, idx] - d_lag[:, idx]
    incr *= mult
    cum = np.concatenate(
        [np.zeros((n_seeds, 1, dimension), dtype=np.int64), np.cumsum(incr, axis=1)], axis=1
    )
    return cum - cum[:, [-a], :]


@dataclass(frozen=True)
class ConditioningPlan:
    """Forced cylinder realizing the monotone-increment event.

    Scales in [K, K+C) get their lead window forced to 1 and the lagged
    window forced to 0; other scales at or above kappa get both windows
    forced to 0. Only scales up to the spec truncation are materialized;
    higher scales are independent of everything evaluated at desk scale.
    """

    N: int
    C: int
    kappa: int
    K: int
    windows: Tuple[ForcedWindow, ...]

    def check_consistent(self) -> None:
        by_scale: Dict[Tuple[int, int], List[ForcedWindow]] = {}
        for w in self.windows:
            by_scale.setdefault((w.k, w.i), []).append(w)
        for key, ws in by_scale.items():
            for x in ws:
                for y in ws:
                    if x is y:
                        continue
                    lo, hi = max(x.lo, y.lo), min(x.hi, y.hi)
                    if lo < hi and x.value != y.value:
                        raise ValueError(
                            f"conflicting assignments on scale {key} over [{lo}, {hi})"
                        )


def goal_event_plan(N: int, C: int, k_max: Optional[int] = None) -> ConditioningPlan:
    """Build the conditioning plan forcing strictly increasing first-coordinate sums.

    kappa is the smallest scale with 2N < p_k; K the smallest scale >= kappa
    with 2 p_k < d_k. Raises if a forced scale would have colliding windows
    (requires p_k + 2N < 2 p_k <= d_k).
    """
    if N < 1 or C < 1:
        raise ValueError("need N >= 1 and C >= 1")
    kappa = 1
    while scale_params(kappa).p <= 2 * N:
        kappa += 1
    K = kappa
    while not (2 * scale_params(K).p < scale_params(K).d):
        K += 1
    if k_max is None:
        # smallest truncation whose forced band already exceeds C
        k_max = K
        total = 0
        while True:
            total += scale_params(k_max).p
            if total > C or k_max >= K + C - 1:
                break
            k_max += 1
    windows: List[ForcedWindow] = []
    for k in range(kappa, k_max + 1):
        sp = scale_params(k)
        span = sp.p + 2 * N
        if span >= 2 * sp.p:
            raise ValueError(
                f"conditioning collision at scale {k}: p_k + 2N = {span} >= 2 p_k"
            )
        if K <= k < K + C:
            windows.append(ForcedWindow(k=k, i=1, lo=0, hi=span, value=1))
            windows.append(ForcedWindow(k=k, i=1, lo=sp.d, hi=sp.d + span, value=0))
        else:
            windows.append(ForcedWindow(k=k, i=1, lo=0, hi=span, value=0))
            windows.append(ForcedWindow(k=k, i=1, lo=sp.d, hi=sp.d + span, value=0))
    plan = ConditioningPlan(N=N, C=C, kappa=kappa, K=K, windows=tuple(windows))
    plan.check_consistent()
    return plan


def conditioned_spec(spec: FieldSpec, plan: ConditioningPlan) -> FieldSpec:
    """Merge a conditioning plan into the spec.

    The forced coordinates are cylinder conditions on independent field
    values, so sampling the remaining coordinates unconditionally realizes
    the exact conditional law given the event.
    """
    plan.check_consistent()
    for w in plan.windows:
        for ((k, i, j), v) in spec.overrides:
            if w.k == k and w.i == i and w.lo <= j < w.hi and v != w.value:
                raise ValueError(f"plan conflicts with existing override at {(k, i, j)}")
    need_kmax = max((w.k for w in plan.windows), default=spec.k_max)
    out = spec
    if need_kmax > spec.k_max:
        out = replace(out, k_max=need_kmax)
    return replace(out, windows=out.windows + plan.windows)


def min_low_scale_increment(N: int, k_min: int = 1) -> int:
    """Worst-case lower bound M for the low-scale part of one increment.

    Scales with p_k <= 2N contribute at least -2 p_k each to
    S_{n+1} - S_n; the bound is attained only if every summand is extreme.
    """
    M = 0
    k = k_min
    while scale_params(k).p <= 2 * N:
        M -= 2 * scale_params(k).p
        k += 1
    return M
