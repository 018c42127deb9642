"""Seeded synthetic corpus: persons x setups, clean to heavily cluttered.

Setups stand in for the measurement situations (distance, clutter, noise);
persons vary chest excursion and reflectivity. Every recording holds one
on-bin breathing rate (a multiple of 1/30 Hz) so the clean setups have an
exact frequency-domain answer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cir_synth import BreathingTarget, ClutterSpec, RadarConfig, synthesize
from .dataset import Recording

DIRECT_PATH = (3, 1.0 + 0j)


@dataclass(frozen=True)
class SetupPreset:
    name: str
    d0_m: float
    noise_sigma: float
    body_clutter: float = 1.0  # static reflection co-located with the chest
    # clean scenes keep the body reflection near quadrature with the echo,
    # which gives a nearly pure fundamental; otherwise the phase is random
    quadrature: bool = False
    extra_clutter: tuple[tuple[int, float], ...] = ()
    amp_scale: float = 1.0
    excursion_scale: float = 1.0
    distance_jitter_m: float = 0.2
    # periodic mover specific to the scene: (distance m, frequency Hz, excursion m, amplitude)
    interferer: tuple[float, float, float, float] | None = None

    @property
    def noisy(self) -> bool:
        return not self.quadrature


# clean d0 values put the chest half-way between taps, away from the pulse zero crossings
SETUPS = (
    SetupPreset("bed-100cm", 0.975, 1e-4, quadrature=True, excursion_scale=0.25, distance_jitter_m=0.01),
    SetupPreset("chair-130cm", 1.275, 1e-4, quadrature=True, excursion_scale=0.3, distance_jitter_m=0.01),
    SetupPreset("chair-190cm", 1.875, 0.15, body_clutter=0.8),
    SetupPreset("stand-70cm", 0.675, 0.25, extra_clutter=((6, 0.8),), interferer=(1.6, 0.4, 0.004, 0.6)),
    SetupPreset("stand-200cm", 2.025, 0.3, body_clutter=0.6, extra_clutter=((20, 0.7),)),
    SetupPreset(
        "stand-250cm", 2.475, 0.2, body_clutter=0.5, amp_scale=0.4, interferer=(1.2, 0.45, 0.003, 0.4)
    ),
)

RATE_BINS = tuple(range(3, 11))  # 0.10 .. 0.33 Hz, i.e. 6 .. 20 BPM


@dataclass(frozen=True)
class Person:
    person_id: int
    excursion_m: float
    reflect_amp: float


def make_persons(n: int, seed: int) -> list[Person]:
    rng = np.random.default_rng([seed, 1])
    return [
        Person(i, float(rng.uniform(0.002, 0.006)), float(rng.uniform(0.7, 1.3))) for i in range(n)
    ]


def setup_preset(setup_id: int) -> SetupPreset:
    return SETUPS[setup_id % len(SETUPS)]


def make_recording(
    person: Person,
    setup_id: int,
    f_b_hz: float,
    duration_s: float,
    seed: int,
    config: RadarConfig = RadarConfig(),
) -> Recording:
    """One recording of ``person`` breathing at ``f_b_hz`` in the given setup."""
    preset = setup_preset(setup_id)
    rng = np.random.default_rng(seed)
    f_b = float(f_b_hz)
    phase = float(rng.uniform(0, 2 * np.pi))
    target = BreathingTarget(
        d0_m=preset.d0_m + float(rng.uniform(-1, 1)) * preset.distance_jitter_m,
        f_b_hz=f_b,
        m_b_m=person.excursion_m * preset.excursion_scale,
        reflect_amp=person.reflect_amp * preset.amp_scale,
        phase0_rad=phase,
    )
    if preset.quadrature:
        rel = np.pi / 2 * rng.choice([-1, 1]) + float(rng.uniform(-0.3, 0.3))
    else:
        rel = float(rng.uniform(0, 2 * np.pi))
    reflectors = [DIRECT_PATH]
    if preset.body_clutter > 0:
        body = preset.body_clutter * np.exp(1j * (phase + rel))
        reflectors.append((config.range_bin(preset.d0_m), body))
    for delay_bin, amp in preset.extra_clutter:
        reflectors.append((delay_bin, amp * np.exp(1j * rng.uniform(0, 2 * np.pi))))
    clutter = ClutterSpec(tuple(reflectors), preset.noise_sigma)
    movers = ()
    if preset.interferer is not None:
        dist, freq, exc, amp = preset.interferer
        movers = (BreathingTarget(dist, freq, exc, amp, float(rng.uniform(0, 2 * np.pi))),)
        # the mover's static housing mixes with its echo like the body reflection does
        reflectors.append((config.range_bin(dist), amp * np.exp(1j * rng.uniform(0, 2 * np.pi))))
        clutter = ClutterSpec(tuple(reflectors), preset.noise_sigma)
    cir = synthesize(
        config, target, clutter, duration_s, int(rng.integers(2**31)), random_phase=not movers, movers=movers
    )
    return Recording(cir, np.full(cir.n_slow, 60.0 * f_b), person.person_id, setup_id)


def make_corpus(
    n_persons: int = 8,
    n_setups: int = 6,
    recordings_per_pair: int = 2,
    duration_s: float = 60.0,
    seed: int = 0,
) -> list[Recording]:
    persons = make_persons(n_persons, seed)
    rng = np.random.default_rng([seed, 2])
    recs = []
    for person in persons:
        for setup_id in range(n_setups):
            for _ in range(recordings_per_pair):
                rate_bin = int(rng.choice(RATE_BINS))
                recs.append(
                    make_recording(
                        person, setup_id, rate_bin / 30.0, duration_s, int(rng.integers(2**31))
                    )
                )
    return recs
