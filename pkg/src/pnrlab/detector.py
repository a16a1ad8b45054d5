"""Monte Carlo model of the multiplexed pixel array.

Every photon that survives loss lands on one pixel at random (uniform unless
a weight vector is given); a pixel fires if it catches at least one photon.
In ideal mode the saturation step is skipped and photons are counted one by
one, which isolates photon statistics from the array's undercounting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .parallel import map_blocks
from .stats import PhotonPmf, SourceSpec, sample_many

DEFAULT_PIXELS = 100


@dataclass(frozen=True)
class ArrayConfig:
    pixel_count: int = DEFAULT_PIXELS
    efficiency: float = 1.0
    seed: int = 0
    ideal: bool = False
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if int(self.pixel_count) != self.pixel_count or self.pixel_count < 1:
            raise ValueError("pixel_count must be an integer >= 1")
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must lie in (0, 1]")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.pixel_count,) or np.any(w < 0) or not np.any(w > 0):
                raise ValueError("weights must be one non-negative value per pixel, not all zero")

    def pixel_probs(self) -> np.ndarray | None:
        if self.weights is None:
            return None
        w = np.asarray(self.weights, dtype=float)
        return w / w.sum()


@dataclass(frozen=True)
class ClickPattern:
    fired: np.ndarray
    true_n: int

    def __post_init__(self):
        f = np.array(self.fired, dtype=bool)
        if f.ndim != 1:
            raise ValueError("fired must be 1-d")
        f.setflags(write=False)
        object.__setattr__(self, "fired", f)

    @property
    def pixel_count(self) -> int:
        return self.fired.size

    @property
    def detected_n(self) -> int:
        return int(np.count_nonzero(self.fired))

    def to_bits(self) -> str:
        return "".join("1" if b else "0" for b in self.fired)

    @classmethod
    def from_bits(cls, bits: str, true_n: int | None = None) -> "ClickPattern":
        if not bits or set(bits) - {"0", "1"}:
            raise ValueError("pattern must be a non-empty string of 0/1")
        fired = np.array([c == "1" for c in bits])
        return cls(fired, int(fired.sum()) if true_n is None else true_n)


@dataclass(frozen=True)
class GroupingPlan:
    assignment: np.ndarray
    group_count: int

    def __post_init__(self):
        a = np.array(self.assignment, dtype=np.intp)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("assignment must be a non-empty 1-d sequence")
        if a.min() < 0 or a.max() >= self.group_count:
            raise ValueError("group ids must lie in 0..group_count-1")
        if np.any(np.bincount(a, minlength=self.group_count) == 0):
            raise ValueError("every group must be non-empty")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    @property
    def pixel_count(self) -> int:
        return self.assignment.size

    @property
    def group_sizes(self) -> list[int]:
        return np.bincount(self.assignment, minlength=self.group_count).tolist()

    def indicator(self) -> np.ndarray:
        """(pixel_count, group_count) 0/1 matrix."""
        m = np.zeros((self.pixel_count, self.group_count), dtype=np.int64)
        m[np.arange(self.pixel_count), self.assignment] = 1
        return m

    def permuted(self, perm) -> "GroupingPlan":
        """Plan whose pixel ``perm[i]`` takes the group of pixel ``i``."""
        perm = np.asarray(perm)
        if sorted(perm.tolist()) != list(range(self.pixel_count)):
            raise ValueError("perm must be a permutation of the pixel indices")
        out = np.empty_like(self.assignment)
        out[perm] = self.assignment
        return GroupingPlan(out, self.group_count)


def make_grouping(pixel_count: int, group_sizes) -> GroupingPlan:
    """Contiguous pixel blocks of the given sizes, in order."""
    sizes = [int(s) for s in group_sizes]
    if not sizes or any(s <= 0 for s in sizes):
        raise ValueError("group sizes must be positive")
    if sum(sizes) != pixel_count:
        raise ValueError(f"group sizes sum to {sum(sizes)}, expected {pixel_count}")
    return GroupingPlan(np.repeat(np.arange(len(sizes)), sizes), len(sizes))


def equal_group_sizes(pixel_count: int, groups: int) -> list[int]:
    """Near-equal sizes (differing by at most one), larger blocks first."""
    if groups < 1 or groups > pixel_count:
        raise ValueError(f"cannot split {pixel_count} pixels into {groups} non-empty groups")
    q, r = divmod(pixel_count, groups)
    return [q + 1] * r + [q] * (groups - r)


def interleaved_grouping(pixel_count: int, groups: int) -> GroupingPlan:
    """Pixel i goes to group i mod groups."""
    return GroupingPlan(np.arange(pixel_count) % groups, groups)


def _thin(n: np.ndarray, cfg: ArrayConfig, rng: np.random.Generator) -> np.ndarray:
    n = np.asarray(n, dtype=np.int64)
    if cfg.efficiency < 1.0:
        n = rng.binomial(n, cfg.efficiency)
    return n


def pixel_hits(n_photons, cfg: ArrayConfig, rng: np.random.Generator) -> np.ndarray:
    """Photons caught by each pixel: a (shots, pixel_count) integer array.

    Loss is an independent Bernoulli(efficiency) per photon, applied before
    allocation.
    """
    n = _thin(n_photons, cfg, rng)
    shots, k = n.size, cfg.pixel_count
    total = int(n.sum())
    probs = cfg.pixel_probs()
    if probs is None:
        pix = rng.integers(0, k, size=total)
    else:
        pix = rng.choice(k, size=total, p=probs)
    shot = np.repeat(np.arange(shots), n)
    return np.bincount(shot * k + pix, minlength=shots * k).reshape(shots, k)


def detect_shot(n_photons: int, cfg: ArrayConfig, rng: np.random.Generator) -> ClickPattern:
    """Fire the array once with ``n_photons`` arriving photons."""
    if n_photons < 0:
        raise ValueError("n_photons must be >= 0")
    hits = pixel_hits([n_photons], cfg, rng)[0]
    return ClickPattern(hits > 0, int(n_photons))


def group_counts(pattern: ClickPattern, plan: GroupingPlan) -> list[int]:
    """Fired pixels per group."""
    if plan.pixel_count != pattern.pixel_count:
        raise ValueError("grouping plan and click pattern disagree on pixel count")
    return np.bincount(plan.assignment[pattern.fired], minlength=plan.group_count).tolist()


def shot_counts(n_photons, cfg: ArrayConfig, rng: np.random.Generator, plan: GroupingPlan | None = None) -> np.ndarray:
    """Per-shot, per-group counts, shape (shots, groups).

    Counts are fired pixels, or in ideal mode the photons themselves.
    Without a plan the whole array is one group.
    """
    hits = pixel_hits(n_photons, cfg, rng)
    if not cfg.ideal:
        hits = (hits > 0).astype(np.int64)
    if plan is None:
        return hits.sum(axis=1, keepdims=True)
    if plan.pixel_count != cfg.pixel_count:
        raise ValueError("grouping plan and array disagree on pixel count")
    return hits @ plan.indicator()


def occupancy_matrix(pixel_count: int, nmax: int) -> np.ndarray:
    """P(d fired | n photons) under uniform allocation, shape (nmax+1, min(nmax, K)+1).

    Built photon by photon: a new photon lands on an already fired pixel with
    probability d/K.
    """
    k = pixel_count
    dmax = min(nmax, k)
    out = np.zeros((nmax + 1, dmax + 1))
    out[0, 0] = 1.0
    d = np.arange(dmax + 1)
    for n in range(nmax):
        prev = out[n]
        cur = prev * d / k
        cur[1:] += prev[:-1] * (k - d[:-1]) / k
        out[n + 1] = cur
    return out


def detected_pmf(pmf: PhotonPmf, cfg: ArrayConfig) -> np.ndarray | None:
    """Theory distribution of the reported count for photons drawn from ``pmf``.

    ``pmf`` should already include loss. Returns None if pixel weights are set.
    """
    if cfg.ideal:
        return np.array(pmf.probs)
    if cfg.weights is not None:
        return None
    return pmf.probs @ occupancy_matrix(cfg.pixel_count, pmf.cutoff)


@dataclass(frozen=True)
class StatisticsResult:
    source: SourceSpec
    cfg: ArrayConfig
    shots: int
    histogram: np.ndarray
    photon_pmf: PhotonPmf
    theory: np.ndarray | None

    def probabilities(self) -> np.ndarray:
        return self.histogram / self.shots

    def total_variation(self) -> float:
        """TV distance between the histogram and the theory overlay."""
        if self.theory is None:
            raise ValueError("no theory overlay for weighted pixels")
        size = max(self.histogram.size, self.theory.size)
        emp = np.zeros(size)
        emp[: self.histogram.size] = self.probabilities()
        th = np.zeros(size)
        th[: self.theory.size] = self.theory
        return 0.5 * float(np.abs(emp - th).sum())


def _stats_block(payload, rng, size):
    pmf, cfg = payload
    n = sample_many(pmf, rng, size)
    return np.bincount(shot_counts(n, cfg, rng)[:, 0])


def _sum_histograms(parts) -> np.ndarray:
    size = max((p.size for p in parts), default=1)
    out = np.zeros(size, dtype=np.int64)
    for p in parts:
        out[: p.size] += p
    return out


def run_statistics_experiment(src: SourceSpec, cfg: ArrayConfig, shots: int, workers: int = 1) -> StatisticsResult:
    """Histogram of the reported photon number over ``shots`` pulses.

    The photon pmf drawn from is the source pmf itself; loss is applied
    photon by photon inside the array model.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    pmf = src.pmf()
    hist = _sum_histograms(map_blocks(_stats_block, (pmf, cfg), cfg.seed, shots, workers))
    lossy = src.attenuated(cfg.efficiency).pmf() if cfg.efficiency < 1 else pmf
    return StatisticsResult(src, cfg, shots, hist, lossy, detected_pmf(lossy, cfg))


def expected_fired(pixel_count: int, n_photons: int) -> float:
    """Mean fired pixels for n photons: K (1 - (1 - 1/K)^n)."""
    return pixel_count * -math.expm1(n_photons * math.log1p(-1.0 / pixel_count)) if pixel_count > 1 else float(n_photons > 0)
