"""Drivers for the four measurements: statistics, g^(N), subtraction, discrimination.

Theory functions are exact; Monte Carlo drivers run on the partitioned
random streams from ``parallel`` and are reproducible for a fixed seed.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .detector import ArrayConfig, GroupingPlan, equal_group_sizes, make_grouping, pixel_hits, shot_counts
from .fock import helstrom_error
from .parallel import map_blocks
from .stats import (
    PhotonPmf,
    SourceKind,
    SourceSpec,
    pmf_bose_einstein,
    pmf_laguerre,
    pmf_negative_binomial,
    pmf_poisson,
    sample_many,
)

JACKKNIFE_BLOCKS = 100
MIN_CONDITIONED = 1000
GK_GRID_POINTS = 64


class ZeroDenominatorError(ValueError):
    """A group never registered a photon, so g^(N) is undefined."""


class InsufficientSamplesWarning(UserWarning):
    pass


# ---------------------------------------------------------------- g^(N)


@dataclass(frozen=True)
class GnResult:
    order_N: int
    estimate: float
    std_error: float
    theory: float
    shots: int
    group_sizes: tuple[int, ...]


def gn_theory(order_N: int, tbp: float) -> float:
    """g^(N) of filtered thermal light, prod_{k=1..N} (tbp + k)/(tbp + 1).

    Same value as Gamma(tbp + N + 1) / (Gamma(tbp + 1) (tbp + 1)^N) without
    the cancellation.
    """
    if order_N < 1:
        raise ValueError("order_N must be >= 1")
    if not math.isfinite(tbp) or tbp <= 0:
        raise ValueError("tbp must be finite and > 0")
    g = 1.0
    for k in range(2, order_N + 1):
        g *= (tbp + k) / (tbp + 1.0)
    return g


def source_gn_theory(src: SourceSpec, order_N: int) -> float:
    if src.kind is SourceKind.COHERENT:
        return 1.0
    return gn_theory(order_N, src.tbp())


def _gn_block(payload, rng, size):
    # one allocation per shot, regrouped for every requested order
    pmf, cfg, plans = payload
    hits = pixel_hits(sample_many(pmf, rng, size), cfg, rng)
    if not cfg.ideal:
        hits = (hits > 0).astype(np.int64)
    return [hits @ plan.indicator() for plan in plans]


def _jackknife_ratio(counts: np.ndarray, blocks: int) -> tuple[float, float]:
    """g = <prod n_i> / prod <n_i> and its block-jackknife standard error."""
    shots = counts.shape[0]
    prod = np.prod(counts.astype(float), axis=1)
    blocks = max(2, min(blocks, shots))
    edges = np.linspace(0, shots, blocks + 1).astype(int)
    bprod = np.add.reduceat(prod, edges[:-1])
    bsum = np.add.reduceat(counts.astype(float), edges[:-1], axis=0)
    bn = np.diff(edges).astype(float)
    tot_prod, tot_sum, tot_n = bprod.sum(), bsum.sum(axis=0), bn.sum()
    if np.any(tot_sum == 0):
        raise ZeroDenominatorError("a group mean is zero; g^(N) is undefined")
    g = (tot_prod / tot_n) / np.prod(tot_sum / tot_n)
    loo_n = tot_n - bn
    loo_sum = tot_sum[None, :] - bsum
    with np.errstate(divide="ignore", invalid="ignore"):
        loo = ((tot_prod - bprod) / loo_n) / np.prod(loo_sum / loo_n[:, None], axis=1)
    if not np.all(np.isfinite(loo)):
        raise ZeroDenominatorError("a group mean vanishes in a jackknife replicate")
    se = math.sqrt((blocks - 1) / blocks * float(np.sum((loo - loo.mean()) ** 2)))
    return float(g), se


def gn_scan(src: SourceSpec, cfg: ArrayConfig, orders, shots: int, workers: int = 1) -> list[GnResult]:
    """g^(N) for several orders from the same shots.

    For order N the array is split into N near-equal contiguous blocks.
    """
    orders = [int(o) for o in orders]
    for o in orders:
        if o < 2:
            raise ValueError("order_N must be >= 2 for estimation")
        if o > cfg.pixel_count:
            raise ValueError(f"cannot form {o} non-empty groups from {cfg.pixel_count} pixels")
    if shots < 1:
        raise ValueError("shots must be >= 1")
    plans = [make_grouping(cfg.pixel_count, equal_group_sizes(cfg.pixel_count, o)) for o in orders]
    return _gn_from_plans(src, cfg, plans, shots, workers)


def _gn_from_plans(src, cfg, plans: list[GroupingPlan], shots, workers) -> list[GnResult]:
    parts = map_blocks(_gn_block, (src.pmf(), cfg, plans), cfg.seed, shots, workers)
    out = []
    for i, plan in enumerate(plans):
        counts = np.concatenate([p[i] for p in parts])
        est, se = _jackknife_ratio(counts, JACKKNIFE_BLOCKS)
        out.append(GnResult(plan.group_count, est, se, source_gn_theory(src, plan.group_count), shots, tuple(plan.group_sizes)))
    return out


def gn_estimate(src: SourceSpec, cfg: ArrayConfig, order_N: int, shots: int, workers: int = 1,
                plan: GroupingPlan | None = None) -> GnResult:
    """Grouped-pixel estimate of <n_1 ... n_N> / (<n_1> ... <n_N>).

    ``plan`` overrides the default contiguous blocks; it must have
    ``order_N`` groups.
    """
    if plan is None:
        return gn_scan(src, cfg, [order_N], shots, workers)[0]
    if plan.group_count != order_N or plan.pixel_count != cfg.pixel_count:
        raise ValueError("plan does not match order_N / pixel_count")
    if shots < 1:
        raise ValueError("shots must be >= 1")
    return _gn_from_plans(src, cfg, [plan], shots, workers)[0]


# ---------------------------------------------------------------- subtraction


@dataclass(frozen=True)
class SubtractionResult:
    conditioned_on_nR: int
    conditioned_shots: int
    histogram_T: np.ndarray
    mean_T: float
    mean_T_std_error: float
    theory_mean_T: float
    enhancement: float
    enhancement_std_error: float
    theory_enhancement: float
    theory_pmf_T: PhotonPmf
    reflect_fraction: float
    insufficient: bool


def enhancement_theory(tbp: float, M: int) -> float:
    """Transmitted-mean gain after removing M photons: (tbp + M + 1)/(tbp + 1)."""
    if M < 0:
        raise ValueError("M must be >= 0")
    return (tbp + M + 1.0) / (tbp + 1.0)


def subtraction_theory_mean(reflect: float, tbp: float, mean_in: float, n_R: int) -> float:
    """Mean transmitted photon number given n_R photons in the reflected port."""
    return (1.0 - reflect) * (n_R + tbp + 1.0) / (reflect * mean_in + tbp + 1.0) * mean_in


def _sub_block(payload, rng, size):
    pmf, cfg, plan = payload
    return shot_counts(sample_many(pmf, rng, size), cfg, rng, plan)


def _conditional(counts: np.ndarray, m: int) -> tuple[np.ndarray, int, float, float]:
    sel = counts[counts[:, 0] == m, 1]
    k = sel.size
    if k == 0:
        return np.zeros(1, dtype=np.int64), 0, math.nan, math.nan
    mean = float(sel.mean())
    se = float(sel.std(ddof=1) / math.sqrt(k)) if k > 1 else math.nan
    return np.bincount(sel), k, mean, se


def run_subtraction_scan(src: SourceSpec, cfg: ArrayConfig, split=(20, 80), conditions=(0, 2, 4),
                         shots: int = 1_000_000, workers: int = 1) -> list[SubtractionResult]:
    """Split the array into R and T groups and look at T when R counted M.

    One simulation serves every M in ``conditions``. The measured
    enhancement is the conditional T mean over the T mean conditioned on
    n_R = 0, both from the same shots.
    """
    r_pix, t_pix = (int(x) for x in split)
    if r_pix <= 0 or t_pix <= 0 or r_pix + t_pix != cfg.pixel_count:
        raise ValueError(f"split {r_pix}:{t_pix} does not cover {cfg.pixel_count} pixels")
    conditions = [int(m) for m in conditions]
    if any(m < 0 for m in conditions):
        raise ValueError("conditioned photon numbers must be >= 0")
    if shots < 1:
        raise ValueError("shots must be >= 1")
    plan = make_grouping(cfg.pixel_count, [r_pix, t_pix])
    counts = np.concatenate(map_blocks(_sub_block, (src.pmf(), cfg, plan), cfg.seed, shots, workers))
    _, k0, mean0, se0 = _conditional(counts, 0)
    reflect = r_pix / cfg.pixel_count
    mean_in = src.mean_n * cfg.efficiency
    out = []
    for m in conditions:
        hist, k, mean, se = _conditional(counts, m)
        if src.kind is SourceKind.THERMAL:
            tbp = src.tbp()
            th_mean = subtraction_theory_mean(reflect, tbp, mean_in, m)
            th_enh = enhancement_theory(tbp, m)
            th_pmf = pmf_negative_binomial(tbp + m, th_mean)
        else:
            th_mean = (1.0 - reflect) * mean_in
            th_enh = 1.0
            th_pmf = pmf_poisson(th_mean)
        enh = mean / mean0 if k and k0 and mean0 > 0 else math.nan
        if m == 0:
            enh_se = 0.0 if k else math.nan
        elif math.isfinite(enh) and math.isfinite(se):
            enh_se = enh * math.hypot(se / mean if mean else 0.0, se0 / mean0)
        else:
            enh_se = math.nan
        insufficient = k < MIN_CONDITIONED
        if insufficient:
            warnings.warn(
                f"only {k} shots with n_R = {m} (want >= {MIN_CONDITIONED})",
                InsufficientSamplesWarning,
                stacklevel=2,
            )
        out.append(SubtractionResult(m, k, hist, mean, se, th_mean, enh, enh_se, th_enh, th_pmf, reflect, insufficient))
    return out


def run_subtraction(src: SourceSpec, cfg: ArrayConfig, split=(20, 80), condition_nR: int = 0,
                    shots: int = 1_000_000, workers: int = 1) -> SubtractionResult:
    """Single-condition form of :func:`run_subtraction_scan`."""
    return run_subtraction_scan(src, cfg, split, [condition_nR], shots, workers)[0]


# ---------------------------------------------------------------- discrimination


class ReceiverKind(str, enum.Enum):
    DIRECT = "direct"
    KENNEDY = "kennedy"
    GENERALIZED_KENNEDY = "gk"


@dataclass(frozen=True)
class ReceiverConfig:
    """A receiver; ``delta_n = None`` asks for the optimal displacement (GK only)."""

    receiver: ReceiverKind
    transmission: float = 1.0
    delta_n: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "receiver", ReceiverKind(self.receiver))
        if not 0 < self.transmission <= 1:
            raise ValueError("transmission must lie in (0, 1]")
        if self.delta_n is not None and (not math.isfinite(self.delta_n) or self.delta_n < 0):
            raise ValueError("delta_n must be finite and >= 0")


def _pair(p: PhotonPmf, q: PhotonPmf) -> tuple[np.ndarray, np.ndarray]:
    size = max(p.probs.size, q.probs.size)
    return p.padded(size), q.padded(size)


def receiver_pmfs(receiver: ReceiverConfig, mean_n: float) -> tuple[np.ndarray, np.ndarray]:
    """Count distributions after the receiver for (thermal, coherent) input."""
    if receiver.receiver is ReceiverKind.DIRECT:
        return _pair(pmf_bose_einstein(mean_n), pmf_poisson(mean_n))
    if receiver.receiver is ReceiverKind.KENNEDY:
        dn = 0.0
    else:
        dn = receiver.delta_n
        if dn is None:
            dn = optimize_delta_n(mean_n, receiver.transmission)
    return _pair(pmf_laguerre(mean_n, receiver.transmission, dn), pmf_poisson(dn))


def _min_sum_error(p_th: np.ndarray, p_coh: np.ndarray) -> float:
    return 0.5 * float(np.minimum(p_th, p_coh).sum())


def gk_error(mean_n: float, transmission: float, delta_n: float) -> float:
    return _min_sum_error(*_pair(pmf_laguerre(mean_n, transmission, delta_n), pmf_poisson(delta_n)))


def receiver_error_theory(receiver: ReceiverConfig, mean_n: float) -> float:
    """Error probability of the maximum-likelihood decision, equal priors."""
    if not math.isfinite(mean_n) or mean_n < 0:
        raise ValueError("mean_n must be finite and >= 0")
    return min(0.5, _min_sum_error(*receiver_pmfs(receiver, mean_n)))


def _golden(f, lo: float, hi: float, tol: float):
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = f(c), f(d)
    seen = [(fc, c), (fd, d)]
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
            seen.append((fc, c))
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
            seen.append((fd, d))
    return min(seen)


def optimize_delta_n(mean_n: float, transmission: float = 1.0, grid_points: int = GK_GRID_POINTS) -> float:
    """Displacement excess minimising the generalized Kennedy error.

    Coarse grid on [0, 5 nbar + 5], then golden-section search between the
    neighbours of the best grid point. The result is never worse than any
    point evaluated on the way.
    """
    if not math.isfinite(mean_n) or mean_n < 0:
        raise ValueError("mean_n must be finite and >= 0")
    hi = 5.0 * mean_n + 5.0
    grid = np.linspace(0.0, hi, grid_points)

    def f(dn):
        return gk_error(mean_n, transmission, float(dn))

    vals = [f(g) for g in grid]
    i = int(np.argmin(vals))
    best = (vals[i], float(grid[i]))
    lo_b, hi_b = float(grid[max(i - 1, 0)]), float(grid[min(i + 1, grid_points - 1)])
    found = _golden(f, lo_b, hi_b, 1e-9 * hi)
    return min(best, found)[1]


@dataclass(frozen=True)
class DiscriminationResult:
    mean_n: float
    receiver: ReceiverConfig
    delta_n: float | None
    shots: int
    errors: int
    error_rate: float
    std_error: float
    theory: float


def _disc_block(payload, rng, size):
    p_th, p_coh, cfg = payload
    cdf_th, cdf_coh = np.cumsum(p_th), np.cumsum(p_coh)
    top = p_th.size - 1
    is_th = rng.random(size) < 0.5
    u = rng.random(size)
    n = np.where(is_th, np.searchsorted(cdf_th, u, side="right"), np.searchsorted(cdf_coh, u, side="right"))
    n = np.minimum(n, top)
    if cfg is not None:
        n = np.minimum(shot_counts(n, cfg, rng)[:, 0], top)
    say_th = p_th[n] > p_coh[n]
    return int(np.count_nonzero(say_th != is_th))


def run_discrimination(mean_n: float, receiver: ReceiverConfig, shots: int, seed: int = 0,
                       workers: int = 1, array: ArrayConfig | None = None) -> DiscriminationResult:
    """Empirical error of the maximum-likelihood receiver.

    Each shot picks thermal or coherent with equal odds, draws a count from
    that class's post-receiver distribution and decides thermal iff the
    thermal pmf exceeds the coherent pmf at that count. ``array`` puts the
    pixel array (with its saturation) in front of the decision.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    dn = receiver.delta_n
    if receiver.receiver is ReceiverKind.GENERALIZED_KENNEDY and dn is None:
        dn = optimize_delta_n(mean_n, receiver.transmission)
    resolved = ReceiverConfig(receiver.receiver, receiver.transmission, dn)
    p_th, p_coh = receiver_pmfs(resolved, mean_n)
    errors = sum(map_blocks(_disc_block, (p_th, p_coh, array), seed, shots, workers))
    p = errors / shots
    return DiscriminationResult(
        mean_n, resolved, dn, shots, errors, p, math.sqrt(p * (1.0 - p) / shots), _min_sum_error(p_th, p_coh)
    )


def discrimination_table(mean_grid, transmission: float = 1.0) -> list[dict]:
    """Theory curves for every receiver plus the Helstrom bound."""
    rows = []
    for m in mean_grid:
        m = float(m)
        dn = optimize_delta_n(m, transmission)
        rows.append({
            "n_bar": m,
            "direct": receiver_error_theory(ReceiverConfig(ReceiverKind.DIRECT), m),
            "kennedy": receiver_error_theory(ReceiverConfig(ReceiverKind.KENNEDY, transmission), m),
            "gk": receiver_error_theory(ReceiverConfig(ReceiverKind.GENERALIZED_KENNEDY, transmission, dn), m),
            "gk_delta_n": dn,
            "helstrom": helstrom_error(m),
        })
    return rows
