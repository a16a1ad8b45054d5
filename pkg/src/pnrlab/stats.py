"""Photon-number distributions of thermal, coherent and displaced-thermal light.

All pmfs are built in log space and only exponentiated at the end, so the
large-mean regime (n ~ 50 and above) never overflows. Each constructor picks
its own truncation unless a cutoff is forced.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .special import log_gamma, log_laguerre_negative

TAIL_TOLERANCE = 1e-10
# Relative weight the discarded tail may carry in the first two raw moments.
MOMENT_TAIL_TOLERANCE = 1e-12
# Default Lorentzian filter FWHM.
DEFAULT_BANDWIDTH_HZ = 65e6


class SourceKind(str, enum.Enum):
    THERMAL = "thermal"
    COHERENT = "coherent"


@dataclass(frozen=True)
class SourceSpec:
    """A pulsed light source.

    ``bandwidth_hz`` is the FWHM of the Lorentzian filter and
    ``pulse_width_s`` the gate width; both only matter for thermal light.
    """

    kind: SourceKind
    mean_n: float
    bandwidth_hz: float | None = None
    pulse_width_s: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SourceKind(self.kind))
        _check_mean(self.mean_n)
        if self.kind is SourceKind.THERMAL:
            for name in ("bandwidth_hz", "pulse_width_s"):
                v = getattr(self, name)
                if v is None or not math.isfinite(v) or v <= 0:
                    raise ValueError(f"thermal source needs a positive {name}")

    @classmethod
    def thermal(cls, mean_n: float, tbp: float, bandwidth_hz: float = DEFAULT_BANDWIDTH_HZ):
        """Thermal source with a given time-bandwidth product pi*B*tau."""
        if not math.isfinite(tbp) or tbp <= 0:
            raise ValueError("tbp must be finite and > 0")
        return cls(SourceKind.THERMAL, mean_n, bandwidth_hz, tbp / (math.pi * bandwidth_hz))

    @classmethod
    def coherent(cls, mean_n: float):
        return cls(SourceKind.COHERENT, mean_n)

    def tbp(self) -> float:
        if self.kind is not SourceKind.THERMAL:
            raise ValueError("time-bandwidth product is only defined for thermal light")
        return math.pi * self.bandwidth_hz * self.pulse_width_s

    def attenuated(self, efficiency: float) -> "SourceSpec":
        """Same source after binomial loss; thinning keeps the family and shape."""
        return SourceSpec(self.kind, self.mean_n * efficiency, self.bandwidth_hz, self.pulse_width_s)

    def pmf(self, cutoff: int | None = None) -> "PhotonPmf":
        if self.kind is SourceKind.THERMAL:
            return pmf_negative_binomial(self.tbp(), self.mean_n, cutoff)
        return pmf_poisson(self.mean_n, cutoff)


@dataclass(frozen=True)
class PhotonPmf:
    """Truncated pmf over n = 0..cutoff plus the probability mass beyond it."""

    probs: np.ndarray
    tail_mass: float = 0.0
    label: str = field(default="", compare=False)

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty 1-d sequence")
        if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
            raise ValueError("every probability must lie in [0, 1]")
        if self.tail_mass < 0:
            raise ValueError("tail_mass must be >= 0")
        total = p.sum() + self.tail_mass
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"pmf does not normalize (sum + tail = {total!r})")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def cutoff(self) -> int:
        return self.probs.size - 1

    @cached_property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.probs)
        c.setflags(write=False)
        return c

    def padded(self, size: int) -> np.ndarray:
        """Probabilities as an array of length ``size`` (zero-padded or cut)."""
        out = np.zeros(size)
        k = min(size, self.probs.size)
        out[:k] = self.probs[:k]
        return out


def _check_mean(mean_n: float) -> None:
    if not math.isfinite(mean_n) or mean_n < 0:
        raise ValueError("mean_n must be finite and >= 0")


def _check_cutoff(cutoff: int | None) -> None:
    if cutoff is not None and (int(cutoff) != cutoff or cutoff < 0):
        raise ValueError("cutoff must be a non-negative integer")


def _vacuum(cutoff: int | None, label: str) -> PhotonPmf:
    # mean 0, variance 0: auto policy gives cutoff 20
    size = (20 if cutoff is None else int(cutoff)) + 1
    p = np.zeros(size)
    p[0] = 1.0
    return PhotonPmf(p, 0.0, label)


def _build(logpmf, mean: float, var: float, cutoff: int | None, label: str) -> PhotonPmf:
    """Evaluate ``logpmf`` on a long enough support and truncate.

    The auto cutoff is the smallest n at or above ``mean + 10 sd + 20`` whose
    tail mass is below TAIL_TOLERANCE and whose tail contributes less than
    MOMENT_TAIL_TOLERANCE (relative) to the first two raw moments.
    """
    lower = math.ceil(mean + 10.0 * math.sqrt(var) + 20.0)
    n_eval = max(2 * lower, (cutoff or 0) + 2, 64)
    while True:
        n = np.arange(n_eval + 1, dtype=float)
        p = np.exp(logpmf(n))
        # geometric bound on everything past the evaluated range
        q = p[-1] / p[-2] if p[-2] > 0 else 0.0
        past = p[-1] * q / (1.0 - q) if q < 1.0 else math.inf
        if past < 1e-22 * max(1.0, mean * mean):
            break
        n_eval *= 2
    # rev[c] = sum_{k > c} of each raw moment
    rev0 = np.concatenate([np.cumsum(p[::-1])[::-1][1:], [0.0]]) + past
    if cutoff is None:
        m1 = p * n
        m2 = m1 * n
        rev1 = np.concatenate([np.cumsum(m1[::-1])[::-1][1:], [0.0]])
        rev2 = np.concatenate([np.cumsum(m2[::-1])[::-1][1:], [0.0]])
        ok = (
            (rev0 < TAIL_TOLERANCE)
            & (rev1 <= MOMENT_TAIL_TOLERANCE * m1.sum())
            & (rev2 <= MOMENT_TAIL_TOLERANCE * m2.sum())
        )
        ok[:lower] = False
        cutoff = int(np.argmax(ok)) if ok.any() else n_eval
    cutoff = int(cutoff)
    probs = np.minimum(p[: cutoff + 1], 1.0)
    tail = float(rev0[cutoff]) if cutoff < rev0.size else 0.0
    return PhotonPmf(probs, tail, label)


def pmf_negative_binomial(tbp: float, mean_n: float, cutoff: int | None = None) -> PhotonPmf:
    """Thermal light through a filter with time-bandwidth product ``tbp``.

    P(n) = C(n + a, n) ((a + 1)/(nbar + a + 1))^(a+1) (nbar/(nbar + a + 1))^n
    with a = tbp. The rising factorial (a+1)...(a+n) is folded into the
    last factor term by term, since a difference of log-gammas loses
    precision once a is large.
    """
    if not math.isfinite(tbp) or tbp <= 0:
        raise ValueError("tbp must be finite and > 0")
    _check_mean(mean_n)
    _check_cutoff(cutoff)
    label = f"NB(tbp={tbp!r}, mean={mean_n!r})"
    if mean_n == 0:
        return _vacuum(cutoff, label)
    a = float(tbp)
    denom = mean_n + a + 1.0
    head = -(a + 1.0) * math.log1p(mean_n / (a + 1.0))
    lm = math.log(mean_n)

    def logpmf(n):
        # log((a + k) / denom) for k = 1..n, with a + k = denom + (k - 1 - nbar)
        steps = np.log1p((n[1:] - 1.0 - mean_n) / denom)
        rising = np.concatenate([[0.0], np.cumsum(steps)])
        return head + n * lm + rising - log_gamma(n + 1.0)

    var = mean_n * (1.0 + mean_n / (a + 1.0))
    return _build(logpmf, mean_n, var, cutoff, label)


def pmf_bose_einstein(mean_n: float, cutoff: int | None = None) -> PhotonPmf:
    """Single-mode thermal (geometric) distribution."""
    _check_mean(mean_n)
    _check_cutoff(cutoff)
    label = f"BE(mean={mean_n!r})"
    if mean_n == 0:
        return _vacuum(cutoff, label)
    lo = -math.log1p(mean_n)
    lr = math.log(mean_n) - math.log1p(mean_n)
    return _build(lambda n: lo + n * lr, mean_n, mean_n + mean_n**2, cutoff, label)


def pmf_poisson(mean_n: float, cutoff: int | None = None) -> PhotonPmf:
    _check_mean(mean_n)
    _check_cutoff(cutoff)
    label = f"Poisson(mean={mean_n!r})"
    if mean_n == 0:
        return _vacuum(cutoff, label)
    lm = math.log(mean_n)
    return _build(lambda n: n * lm - mean_n - log_gamma(n + 1.0), mean_n, mean_n, cutoff, label)


def pmf_laguerre(
    mean_n: float, transmission: float, delta_n: float = 0.0, cutoff: int | None = None
) -> PhotonPmf:
    """Counts of a thermal state after a beam splitter and a displacement.

    The thermal part has mean nbar*T and the displacement contributes
    (nbar + delta_n)*T, giving

        P(n) = (nT)^n / (1 + nT)^(n+1) exp(-(n + dn)T / (1 + nT))
               * L_n(-(n + dn) / (n (1 + nT)))

    ``delta_n = 0`` is the Kennedy receiver. With no thermal light left the
    result is the Poisson distribution of the displacement alone.
    """
    for v in (mean_n, transmission, delta_n):
        if not math.isfinite(v):
            raise ValueError("arguments must be finite")
    _check_mean(mean_n)
    if not 0 < transmission <= 1:
        raise ValueError("transmission must lie in (0, 1]")
    if delta_n < 0:
        raise ValueError("delta_n must be >= 0")
    _check_cutoff(cutoff)
    thermal = mean_n * transmission
    shift = (mean_n + delta_n) * transmission
    if thermal == 0:
        return pmf_poisson(shift, cutoff)
    label = f"Laguerre(mean={mean_n!r}, T={transmission!r}, dn={delta_n!r})"
    x = -(mean_n + delta_n) / (mean_n * (1.0 + thermal))
    l1 = math.log1p(thermal)
    head = -l1 - shift / (1.0 + thermal)
    lr = math.log(thermal) - l1

    def logpmf(n):
        return head + n * lr + log_laguerre_negative(int(n[-1]), x)

    mean = thermal + shift
    var = thermal * (1.0 + thermal) + shift * (1.0 + 2.0 * thermal)
    return _build(logpmf, mean, var, cutoff, label)


def moments(pmf: PhotonPmf) -> tuple[float, float]:
    """Mean and variance of the truncated pmf (tail mass is ignored)."""
    n = np.arange(pmf.probs.size, dtype=float)
    mean = float(np.dot(n, pmf.probs))
    var = float(np.dot((n - mean) ** 2, pmf.probs))
    return mean, var


def sample(pmf: PhotonPmf, rng: np.random.Generator) -> int:
    """One draw by inverse CDF."""
    return int(sample_many(pmf, rng, 1)[0])


def sample_many(pmf: PhotonPmf, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` independent draws; binary search on the cumulative array.

    Uniforms landing in the tail mass map to the cutoff.
    """
    u = rng.random(size)
    idx = np.searchsorted(pmf.cdf, u, side="right")
    return np.minimum(idx, pmf.cutoff).astype(np.int64)
