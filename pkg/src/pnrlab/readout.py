"""Time-multiplexed pulse-train synthesis and threshold decoding.

Pixel k's pulse peaks at the centre of time slot k. The pulse shape is a
double exponential; each fired pixel also leaves a slowly decaying baseline
in all later slots, which is what degrades the late slots of a busy trace.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .detector import ClickPattern

SLOT_DELAY_S = 1.09e-9
TRACE_MAGIC = b"PNRTRACE"
# magic, u32 slot count, u32 reserved (0), f64 dt
_HEADER = struct.Struct("<8sIId")
# ripple decay constant, in slots
RIPPLE_DECAY_SLOTS = 20.0
# smoothing width before peak picking
SMOOTH_S = 2e-10
# length of the pre-pulse stretch used as a slot's floor
TROUGH_S = 1.5e-10


@dataclass(frozen=True)
class TraceConfig:
    slot_delay_s: float = SLOT_DELAY_S
    sample_rate_hz: float = 4e10
    pulse_rise_s: float = 1e-10
    pulse_fall_s: float = 4e-10
    amplitude: float = 1.0
    noise_sigma: float = 0.0
    ripple_coeff: float = 0.02

    def __post_init__(self):
        for name in ("slot_delay_s", "sample_rate_hz", "pulse_rise_s", "pulse_fall_s", "amplitude"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be finite and > 0")
        for name in ("noise_sigma", "ripple_coeff"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0")
        if self.sample_rate_hz * self.slot_delay_s < 8:
            raise ValueError("need at least 8 samples per slot")

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate_hz

    def with_snr_db(self, snr_db: float) -> "TraceConfig":
        """Copy with noise set from amplitude/noise_sigma = 10^(snr_db/20)."""
        from dataclasses import replace

        return replace(self, noise_sigma=self.amplitude / 10 ** (snr_db / 20.0))

    def peak_delay(self) -> float:
        """Onset-to-peak time of the double-exponential pulse."""
        r, f = self.pulse_rise_s, self.pulse_fall_s
        return r * math.log1p(f / r)

    def frame_length(self, slots: int) -> int:
        return math.ceil(slots * self.slot_delay_s / self.dt) + self.guard_samples()

    def guard_samples(self) -> int:
        return math.ceil(self.slot_delay_s / self.dt)

    def slot_bounds(self, slots: int) -> np.ndarray:
        """Sample index where each slot starts, plus the end of the last one."""
        return np.ceil(np.arange(slots + 1) * self.slot_delay_s / self.dt - 1e-9).astype(np.intp)


@dataclass(frozen=True)
class TraceFrame:
    samples: np.ndarray
    t0: float
    dt: float
    slots: int

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim != 1 or not np.all(np.isfinite(s)):
            raise ValueError("samples must be a finite 1-d array")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)


def pulse_template(t: np.ndarray, cfg: TraceConfig) -> np.ndarray:
    """Unit-peak pulse as a function of time since onset (zero before it)."""
    r, f = cfg.pulse_rise_s, cfg.pulse_fall_s
    tp = cfg.peak_delay()
    peak = -math.expm1(-tp / r) * math.exp(-tp / f)
    u = np.maximum(t, 0.0)
    return np.where(t > 0, -np.expm1(-u / r) * np.exp(-u / f) / peak, 0.0)


@lru_cache(maxsize=16)
def _templates(cfg: TraceConfig, slots: int) -> np.ndarray:
    """Noise-free contribution of each slot firing alone, shape (slots, samples).

    Row k is pixel k's pulse plus the ripple it leaves in later slots, so a
    trace is a plain sum of rows.
    """
    t = np.arange(cfg.frame_length(slots)) * cfg.dt
    d = cfg.slot_delay_s
    tp = cfg.peak_delay()
    tau = RIPPLE_DECAY_SLOTS * d
    bounds = cfg.slot_bounds(slots)
    rows = np.zeros((slots, t.size))
    for k in range(slots):
        centre = (k + 0.5) * d
        rows[k] = cfg.amplitude * pulse_template(t - (centre - tp), cfg)
        if cfg.ripple_coeff > 0:
            late = slice(bounds[k + 1], None)
            rows[k, late] += cfg.ripple_coeff * cfg.amplitude * np.exp(-(t[late] - centre) / tau)
    rows.setflags(write=False)
    return rows


def synthesize_batch(fired, cfg: TraceConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Traces for many patterns at once: boolean (frames, slots) -> (frames, samples)."""
    fired = np.atleast_2d(np.asarray(fired, dtype=bool))
    v = fired.astype(float) @ _templates(cfg, fired.shape[1])
    if cfg.noise_sigma > 0:
        if rng is None:
            raise ValueError("a random generator is needed when noise_sigma > 0")
        v += rng.normal(0.0, cfg.noise_sigma, size=v.shape)
    return v


def synthesize_trace(pattern: ClickPattern, cfg: TraceConfig, rng: np.random.Generator | None = None) -> TraceFrame:
    """Oscilloscope-like waveform for one click pattern."""
    v = synthesize_batch(pattern.fired[None, :], cfg, rng)[0]
    return TraceFrame(v, 0.0, cfg.dt, pattern.pixel_count)


def default_threshold(cfg: TraceConfig) -> float:
    return cfg.amplitude / 2.0


def _smooth(v: np.ndarray, cfg: TraceConfig) -> np.ndarray:
    # moving average along the last axis, edges padded with edge values
    w = max(1, round(SMOOTH_S / cfg.dt))
    if w == 1:
        return v
    left = w // 2
    padded = np.pad(v, [(0, 0)] * (v.ndim - 1) + [(left, w - 1 - left)], mode="edge")
    c = np.cumsum(padded, axis=-1)
    c = np.concatenate([np.zeros(v.shape[:-1] + (1,)), c], axis=-1)
    return (c[..., w:] - c[..., :-w]) / w


@lru_cache(maxsize=16)
def _windows(cfg: TraceConfig, slots: int) -> tuple[np.ndarray, np.ndarray]:
    """Sample indices of each slot's trough and detection gate.

    The trough is the stretch just before the slot's pulse would start;
    the gate is the central half of the slot.
    """
    d = cfg.slot_delay_s / cfg.dt
    onset = cfg.peak_delay() / cfg.dt
    bounds = cfg.slot_bounds(slots)
    width = max(1, round(TROUGH_S / cfg.dt))
    half = int(d // 4)
    trough, gate = [], []
    for k in range(slots):
        centre = (k + 0.5) * d
        t1 = max(math.floor(centre - onset), bounds[k] + 1)
        t0 = max(t1 - width, bounds[k])
        trough.append(np.minimum(np.arange(t0, t0 + width), t1 - 1))
        g0 = max(round(centre) - half, bounds[k])
        g1 = min(round(centre) + half + 1, bounds[k + 1])
        gate.append(np.minimum(np.arange(g0, g0 + 2 * half + 1), g1 - 1))
    return np.array(trough), np.array(gate)


def _moving_median3(x: np.ndarray) -> np.ndarray:
    # window of three slots along the last axis, edges use the slots present
    if x.shape[-1] < 3:
        return np.repeat(np.median(x, axis=-1, keepdims=True), x.shape[-1], axis=-1)
    left = np.concatenate([x[..., :1], x[..., :-1]], axis=-1)
    right = np.concatenate([x[..., 1:], x[..., -1:]], axis=-1)
    out = np.median(np.stack([left, x, right]), axis=0)
    # two-slot edge windows: mean of the pair
    out[..., 0] = 0.5 * (x[..., 0] + x[..., 1])
    out[..., -1] = 0.5 * (x[..., -1] + x[..., -2])
    return out


def slot_statistics_batch(samples, cfg: TraceConfig, slots: int) -> np.ndarray:
    """Per-slot detection statistic, shape (frames, slots).

    Each slot's floor is the mean of its trough samples; the baseline is a
    moving median of floors over three slots. The statistic is the largest
    baseline-subtracted, lightly smoothed sample in the slot's gate.
    """
    raw = np.atleast_2d(np.asarray(samples, dtype=float))
    if raw.shape[1] != cfg.frame_length(slots):
        raise ValueError(
            f"frame has {raw.shape[1]} samples, expected {cfg.frame_length(slots)} for {slots} slots"
        )
    trough_idx, gate_idx = _windows(cfg, slots)
    base = _moving_median3(raw[:, trough_idx].mean(axis=-1))
    peak = _smooth(raw, cfg)[:, gate_idx].max(axis=-1)
    return peak - base


def _check_frame(frame: TraceFrame, cfg: TraceConfig) -> None:
    if not math.isclose(frame.dt, cfg.dt, rel_tol=1e-9):
        raise ValueError("frame sample spacing does not match the trace config")


def slot_statistics(frame: TraceFrame, cfg: TraceConfig) -> np.ndarray:
    _check_frame(frame, cfg)
    return slot_statistics_batch(frame.samples[None, :], cfg, frame.slots)[0]


def decode_batch(samples, threshold: float, cfg: TraceConfig, slots: int) -> np.ndarray:
    if not threshold > 0:
        raise ValueError("threshold must be > 0")
    return slot_statistics_batch(samples, cfg, slots) > threshold


def decode_trace(frame: TraceFrame, threshold: float, cfg: TraceConfig) -> ClickPattern:
    """Recover which pixels fired: slot statistic above ``threshold``."""
    _check_frame(frame, cfg)
    fired = decode_batch(frame.samples[None, :], threshold, cfg, frame.slots)[0]
    return ClickPattern(fired, int(fired.sum()))


class ThresholdDecoder:
    """Decoder object for callers that swap decoding strategies."""

    def __init__(self, cfg: TraceConfig, threshold: float | None = None):
        self.cfg = cfg
        self.threshold = default_threshold(cfg) if threshold is None else threshold

    def __call__(self, frame: TraceFrame) -> ClickPattern:
        return decode_trace(frame, self.threshold, self.cfg)


def peak_to_background(frame: TraceFrame, cfg: TraceConfig) -> np.ndarray:
    """Per-slot ratio of the highest to the lowest raw sample in the slot.

    Infinite where the slot floor is exactly zero.
    """
    bounds = cfg.slot_bounds(frame.slots)
    out = np.empty(frame.slots)
    for k in range(frame.slots):
        seg = frame.samples[bounds[k] : bounds[k + 1]]
        lo = float(seg.min())
        out[k] = math.inf if lo <= 0 else float(seg.max()) / lo
    return out


def slot_errors(sent: ClickPattern, got: ClickPattern) -> int:
    return int(np.count_nonzero(sent.fired != got.fired))


def _fmt(x: float) -> str:
    return repr(float(x))


def trace_to_csv(frame: TraceFrame) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "v"])
    for t, v in zip(frame.times(), frame.samples):
        w.writerow([_fmt(t), _fmt(v)])
    return buf.getvalue()


def trace_from_csv(text: str, slots: int) -> TraceFrame:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["t", "v"]:
        raise ValueError("trace CSV must start with header t,v")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    if data.shape[0] < 2:
        raise ValueError("trace CSV needs at least two samples")
    t, v = data[:, 0], data[:, 1]
    dt = float((t[-1] - t[0]) / (t.size - 1))
    return TraceFrame(v, float(t[0]), dt, slots)


def trace_to_bytes(frame: TraceFrame) -> bytes:
    header = _HEADER.pack(TRACE_MAGIC, frame.slots, 0, frame.dt)
    return header + frame.samples.astype("<f8").tobytes()


def trace_from_bytes(blob: bytes) -> TraceFrame:
    if len(blob) < _HEADER.size:
        raise ValueError("trace file is shorter than its header")
    magic, slots, _reserved, dt = _HEADER.unpack_from(blob)
    if magic != TRACE_MAGIC:
        raise ValueError("not a PNRTRACE file")
    body = blob[_HEADER.size :]
    if len(body) % 8:
        raise ValueError("trace body is not a whole number of float64 samples")
    return TraceFrame(np.frombuffer(body, dtype="<f8").copy(), 0.0, dt, slots)


def write_trace(frame: TraceFrame, path: Path) -> None:
    path = Path(path)
    if path.suffix == ".csv":
        path.write_text(trace_to_csv(frame), newline="")
    else:
        path.write_bytes(trace_to_bytes(frame))


def read_trace(path: Path, slots: int | None = None) -> TraceFrame:
    path = Path(path)
    if path.suffix == ".csv":
        if slots is None:
            raise ValueError("CSV traces carry no slot count; pass slots")
        return trace_from_csv(path.read_text(), slots)
    return trace_from_bytes(path.read_bytes())
