"""Synthetic IR-UWB channel impulse responses for a single breathing target.

The received CIR for slow-time instant t is modelled as a sum of static
reflectors plus the target reflection whose delay follows the chest motion.
Each reflection is a band-limited pulse evaluated at a fractional fast-time
delay, so sub-bin chest motion appears as amplitude modulation of the taps
around the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

BREATHING_BAND_HZ = (0.09, 0.5)
MIN_SWEEP_RATE_HZ = 1.0  # Nyquist for 0.5 Hz breathing

# pulse: Gaussian-windowed sinc, 500 MHz bandwidth at 1 ns tap spacing
PULSE_SUPPORT_BINS = 3
PULSE_SIGMA_BINS = 1.5


@dataclass(frozen=True)
class RadarConfig:
    """Radio parameters of the DW3000 CIR readout."""

    slow_rate_hz: float = 77.5
    n_fast: int = 41
    fast_spacing_m: float = 0.30
    first_path_index: int = 3
    bandwidth_hz: float = 500e6
    tap_period_s: float = 1e-9
    # only used for the carrier phase of the target reflection
    center_freq_hz: float = 6.489e9

    def __post_init__(self):
        if self.slow_rate_hz <= 0:
            raise ValueError("slow_rate_hz must be positive")
        if self.n_fast <= 0:
            raise ValueError("n_fast must be positive")
        if self.fast_spacing_m <= 0:
            raise ValueError("fast_spacing_m must be positive")
        if not 0 <= self.first_path_index < self.n_fast:
            raise ValueError("first_path_index must lie in [0, n_fast)")

    @property
    def max_range_m(self) -> float:
        return (self.n_fast - 1 - self.first_path_index) * self.fast_spacing_m / 2

    def range_bin(self, distance_m: float) -> int:
        """Fast-time index holding a reflector at one-way ``distance_m``."""
        return self.first_path_index + int(round(2 * distance_m / self.fast_spacing_m))


@dataclass(frozen=True)
class BreathingTarget:
    d0_m: float
    f_b_hz: float
    m_b_m: float = 0.003
    reflect_amp: float = 1.0
    # carrier phase of the reflection at d0, radians; None derives it from d0
    phase0_rad: float | None = None

    def __post_init__(self):
        lo, hi = BREATHING_BAND_HZ
        if self.d0_m < 0:
            raise ValueError("d0_m must be non-negative")
        if not lo <= self.f_b_hz <= hi:
            raise ValueError(f"f_b_hz={self.f_b_hz} outside breathing band [{lo}, {hi}] Hz")
        if self.m_b_m < 0:
            raise ValueError("m_b_m must be non-negative")
        if self.reflect_amp <= 0:
            raise ValueError("reflect_amp must be positive")

    @property
    def bpm(self) -> float:
        return 60.0 * self.f_b_hz


@dataclass(frozen=True)
class ClutterSpec:
    """Static reflectors as (delay_bin, complex amplitude) plus receiver noise."""

    reflectors: tuple[tuple[int, complex], ...] = ((3, 1.0 + 0j),)
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        object.__setattr__(
            self, "reflectors", tuple((int(b), complex(a)) for b, a in self.reflectors)
        )

    def validate(self, config: RadarConfig) -> None:
        for delay_bin, _ in self.reflectors:
            if not config.first_path_index <= delay_bin < config.n_fast:
                raise ValueError(
                    f"clutter delay_bin {delay_bin} outside "
                    f"[{config.first_path_index}, {config.n_fast})"
                )


@dataclass(frozen=True, eq=False)
class CirMatrix:
    """Complex IQ samples, rows = slow time, columns = fast time."""

    data: np.ndarray
    slow_rate_hz: float
    config: RadarConfig = field(default_factory=RadarConfig)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.shape[0] < 1:
            raise ValueError("CIR data must be a non-empty 2-D array")
        if data.shape[1] != self.config.n_fast:
            raise ValueError(
                f"CIR has {data.shape[1]} fast-time columns, config expects {self.config.n_fast}"
            )
        if not np.iscomplexobj(data) or data.dtype != np.complex64:
            data = data.astype(np.complex64)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n_slow(self) -> int:
        return self.data.shape[0]

    @property
    def n_fast(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_slow / self.slow_rate_hz


def chest_distance(target: BreathingTarget, t):
    """Radar-to-chest distance d(t) = d0 + m_b sin(2 pi f_b t); ``t`` may be an array."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    d = target.d0_m + target.m_b_m * np.sin(2 * np.pi * target.f_b_hz * t)
    return float(d) if d.ndim == 0 else d


def pulse(offset_bins, bw_taps: float = 0.5) -> np.ndarray:
    """Band-limited pulse at fractional tap offsets, peak 1 at zero.

    ``bw_taps`` is bandwidth times tap period (500 MHz * 1 ns by default).
    """
    x = np.asarray(offset_bins, dtype=float)
    p = np.sinc(bw_taps * x) * np.exp(-0.5 * (x / PULSE_SIGMA_BINS) ** 2)
    return np.where(np.abs(x) <= PULSE_SUPPORT_BINS, p, 0.0)


def n_slow_samples(duration_s: float, rate_hz: float) -> int:
    return int(math.floor(duration_s * rate_hz + 1e-9))


def _echo(config: RadarConfig, target: BreathingTarget, t, taps, bw_taps) -> np.ndarray:
    d = chest_distance(target, t)
    # fractional fast-time position; one tap is fast_spacing_m of two-way path
    pos = config.first_path_index + 2 * d / config.fast_spacing_m
    if target.phase0_rad is None:
        carrier = np.exp(-2j * np.pi * config.center_freq_hz * 2 * d / SPEED_OF_LIGHT)
    else:
        excursion = d - target.d0_m
        carrier = np.exp(
            1j * target.phase0_rad
            - 2j * np.pi * config.center_freq_hz * 2 * excursion / SPEED_OF_LIGHT
        )
    return target.reflect_amp * carrier[:, None] * pulse(taps[None, :] - pos[:, None], bw_taps)


def synthesize(
    config: RadarConfig,
    target: BreathingTarget,
    clutter: ClutterSpec,
    duration_s: float,
    seed: int,
    random_phase: bool = True,
    movers: tuple[BreathingTarget, ...] = (),
) -> CirMatrix:
    """Render a CIR matrix of ``duration_s`` seconds.

    With ``random_phase`` every slow-time row is rotated by an independent
    uniform phase, mimicking the unsynchronised TX/RX clocks; this leaves
    the amplitudes untouched. ``movers`` are extra periodically moving
    reflectors (a fan, a swaying curtain) rendered like the chest.
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    for tgt in (target, *movers):
        target_bin = config.range_bin(tgt.d0_m)
        if not config.first_path_index <= target_bin < config.n_fast:
            raise ValueError(
                f"target at {tgt.d0_m} m maps to bin {target_bin}, outside "
                f"[{config.first_path_index}, {config.n_fast})"
            )
    clutter.validate(config)

    n_slow = n_slow_samples(duration_s, config.slow_rate_hz)
    if n_slow < 1:
        raise ValueError("duration too short for a single slow-time sample")
    rng = np.random.default_rng(seed)
    t = np.arange(n_slow) / config.slow_rate_hz
    taps = np.arange(config.n_fast, dtype=float)

    bw_taps = config.bandwidth_hz * config.tap_period_s
    static = np.zeros(config.n_fast, dtype=complex)
    for delay_bin, amp in clutter.reflectors:
        static += amp * pulse(taps - delay_bin, bw_taps)

    rows = static[None, :] + sum(_echo(config, tgt, t, taps, bw_taps) for tgt in (target, *movers))

    if random_phase:
        rows = rows * np.exp(2j * np.pi * rng.random(n_slow))[:, None]
    if clutter.noise_sigma > 0:
        scale = clutter.noise_sigma / math.sqrt(2.0)
        rows = rows + scale * (
            rng.standard_normal(rows.shape) + 1j * rng.standard_normal(rows.shape)
        )
    return CirMatrix(rows, config.slow_rate_hz, config)


def decimation_factor(rate_hz: float, target_rate_hz: float) -> int:
    if target_rate_hz < MIN_SWEEP_RATE_HZ:
        raise ValueError(
            f"target rate {target_rate_hz} Hz below the {MIN_SWEEP_RATE_HZ} Hz Nyquist floor"
        )
    if target_rate_hz > rate_hz * (1 + 1e-9):
        raise ValueError(f"target rate {target_rate_hz} Hz exceeds current rate {rate_hz} Hz")
    return max(1, int(round(rate_hz / target_rate_hz)))


def decimate(cir: CirMatrix, target_rate_hz: float) -> CirMatrix:
    """Keep every k-th slow-time row, k = round(rate / target_rate)."""
    k = decimation_factor(cir.slow_rate_hz, target_rate_hz)
    if k == 1:
        return cir
    return CirMatrix(cir.data[::k], cir.slow_rate_hz / k, cir.config)
