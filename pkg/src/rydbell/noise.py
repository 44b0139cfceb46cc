"""Shot-to-shot noise sampling and closed-form coherence estimates.

Every sampler takes an explicit :class:`numpy.random.Generator`. Per-shot
generators come from :func:`shot_rng`, which derives an independent stream
from ``(seed, stream, point, shot)`` so results never depend on the order in
which shots are executed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.constants import hbar, k as k_B

CS133_MASS = 2.207e-25  # kg


def shot_rng(seed: int, stream: int = 0, point: int = 0, shot: int = 0) -> np.random.Generator:
    """Independent generator for one shot of one scan point."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, stream, point, shot])
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class ThermalParams:
    temperature: float  # K
    mass: float = CS133_MASS  # kg
    k_eff: float = 5e6  # 1/m
    eta: float = 1.45e-4

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0 K, got {self.temperature}")
        if self.k_eff < 0 or self.eta < 0 or self.mass <= 0:
            raise ValueError("k_eff and eta must be >= 0 and mass > 0")

    @property
    def velocity_spread(self) -> float:
        """1D rms velocity sqrt(k_B T / m) in m/s."""
        return math.sqrt(k_B * self.temperature / self.mass)


class PhaseNoiseModel(enum.Enum):
    OFF = "off"
    WHITE_FREQUENCY = "white_frequency"
    SERVO_BUMP = "servo_bump"


@dataclass(frozen=True)
class PhaseNoiseParams:
    """Rydberg laser phase noise.

    white_frequency: Wiener phase with Lorentzian FWHM ``linewidth`` (Hz).
    servo_bump: ``A sin(2 pi f t + phi0)`` with ``f = bump_frequency`` (Hz),
    uniform ``phi0`` and Rayleigh-distributed ``A`` of scale ``bump_amplitude``
    (rad), both drawn once per shot.
    """

    model: PhaseNoiseModel = PhaseNoiseModel.OFF
    linewidth: float = 0.0
    bump_frequency: float = 0.0
    bump_amplitude: float = 0.0
    resolution: float = 5e-9  # s, grid of the sampled white-noise trace

    def __post_init__(self):
        object.__setattr__(self, "model", PhaseNoiseModel(self.model))
        if min(self.linewidth, self.bump_frequency, self.bump_amplitude) < 0:
            raise ValueError("phase-noise spectral parameters must be >= 0")
        if not self.resolution > 0:
            raise ValueError("resolution must be > 0")


@dataclass(frozen=True)
class PhaseTrace:
    """Phase offset (rad) of the Rydberg drive as a function of sequence time."""

    times: np.ndarray
    values: np.ndarray
    amplitude: float = 0.0
    frequency: float = 0.0
    offset: float = 0.0
    kind: PhaseNoiseModel = PhaseNoiseModel.OFF

    def __call__(self, t):
        if self.kind is PhaseNoiseModel.SERVO_BUMP:
            return self.amplitude * np.sin(2 * math.pi * self.frequency * np.asarray(t) + self.offset)
        if self.kind is PhaseNoiseModel.WHITE_FREQUENCY:
            return np.interp(t, self.times, self.values)
        return np.zeros_like(np.asarray(t, dtype=float))


ZERO_TRACE = PhaseTrace(np.zeros(1), np.zeros(1))


def sample_doppler(p: ThermalParams, rng: np.random.Generator) -> float:
    """Static two-photon Doppler detuning k_eff * v (rad/s)."""
    if p.k_eff == 0:
        return 0.0
    return float(p.k_eff * rng.normal(0.0, p.velocity_spread))


def sample_lightshift(p: ThermalParams, trap_on: bool, rng: np.random.Generator) -> float:
    """Differential qubit light shift (rad/s) for a thermal atom in the trap.

    The motional energy of a 3D harmonic oscillator at temperature T follows
    p(E) ~ E^2 exp(-E / k_B T). The atom samples on average half of it as
    potential energy, so the time-averaged shift is eta * E / (2 hbar).
    """
    if not trap_on or p.eta == 0:
        return 0.0
    energy = rng.gamma(3.0, k_B * p.temperature)
    return float(p.eta * energy / (2 * hbar))


def sample_phase_noise(p: PhaseNoiseParams, duration: float, rng: np.random.Generator) -> PhaseTrace:
    if p.model is PhaseNoiseModel.OFF:
        return ZERO_TRACE
    if p.model is PhaseNoiseModel.SERVO_BUMP:
        amp = float(rng.rayleigh(p.bump_amplitude)) if p.bump_amplitude > 0 else 0.0
        return PhaseTrace(
            np.zeros(1), np.zeros(1), amp, p.bump_frequency, float(rng.uniform(0, 2 * math.pi)), p.model
        )
    n = max(1, math.ceil(duration / p.resolution))
    times = np.linspace(0.0, n * p.resolution, n + 1)
    # Lorentzian FWHM dnu <=> <dphi^2> = 2 pi dnu t
    steps = rng.normal(0.0, math.sqrt(2 * math.pi * p.linewidth * p.resolution), size=n)
    values = np.concatenate([[0.0], np.cumsum(steps)])
    return PhaseTrace(times, values, kind=p.model)


def sample_qubit_dephasing(t2_prime: float | None, duration: float, rng: np.random.Generator) -> float:
    """Detuning (rad/s) held for ``duration`` giving phase variance 2*duration/T2'.

    Models homogeneous (echo-surviving) dephasing as white frequency noise
    coarse-grained to one value per segment.
    """
    if not t2_prime or duration <= 0:
        return 0.0
    return float(rng.normal(0.0, math.sqrt(2.0 / (t2_prime * duration))))


@dataclass(frozen=True)
class NoiseParams:
    """Which noise sources are active for a simulated shot."""

    doppler: bool = True
    lightshift: bool = True
    rydberg_decay: bool = True
    prep_error: bool = True
    phase_noise: PhaseNoiseParams = field(default_factory=PhaseNoiseParams)
    ground_t2_prime: float | None = None  # s

    def only(self, **enabled) -> "NoiseParams":
        """Copy with every source off except the ones passed as True."""
        kwargs = dict(doppler=False, lightshift=False, rydberg_decay=False, prep_error=False,
                      phase_noise=PhaseNoiseParams(), ground_t2_prime=None)
        for key, value in enabled.items():
            if key == "phase_noise":
                kwargs[key] = self.phase_noise if value is True else (value or PhaseNoiseParams())
            elif key == "ground_t2_prime":
                kwargs[key] = self.ground_t2_prime if value is True else value
            else:
                kwargs[key] = bool(value)
        return NoiseParams(**kwargs)


@dataclass(frozen=True)
class ShotContext:
    """Noise realization for one shot."""

    doppler_detuning: tuple[float, float] = (0.0, 0.0)
    lightshift_detuning: tuple[float, float] = (0.0, 0.0)
    phase_trace: Callable = ZERO_TRACE
    prep_error: tuple[bool, bool] = (False, False)
    segment_dephasing: tuple[tuple[float, float], ...] = ()


def sample_shot_context(
    noise: NoiseParams,
    thermal: ThermalParams,
    segment_durations: list[tuple[float, bool]],
    eta_op: float,
    rng: np.random.Generator,
    phase_horizon: float | None = None,
) -> ShotContext:
    """Draw every random ingredient of a shot in a fixed order.

    ``segment_durations`` lists ``(duration, trap_on)`` for each pulse so the
    trap-on dephasing can be drawn per segment. The phase trace covers
    ``phase_horizon`` (default: the whole sequence).
    """
    total = sum(d for d, _ in segment_durations) if phase_horizon is None else phase_horizon
    doppler = tuple(sample_doppler(thermal, rng) if noise.doppler else 0.0 for _ in range(2))
    light = tuple(sample_lightshift(thermal, True, rng) if noise.lightshift else 0.0 for _ in range(2))
    trace = sample_phase_noise(noise.phase_noise, total, rng)
    prep = tuple(bool(rng.random() > eta_op) if noise.prep_error else False for _ in range(2))
    dephasing = tuple(
        tuple(sample_qubit_dephasing(noise.ground_t2_prime, d, rng) if on else 0.0 for _ in range(2))
        for d, on in segment_durations
    )
    return ShotContext(doppler, light, trace, prep, dephasing)


def doppler_t2star(p: ThermalParams) -> float:
    """Doppler-limited ground-Rydberg dephasing time 1/(sqrt(2) dv k_eff)."""
    if p.k_eff == 0:
        return math.inf
    return 1.0 / (math.sqrt(2) * p.velocity_spread * p.k_eff)


def temp_limited_t2star(p: ThermalParams) -> float:
    """Temperature-limited qubit dephasing time 0.97 * 2 hbar / (eta k_B T)."""
    if not p.eta > 0:
        raise ValueError("eta must be > 0")
    return 0.97 * 2 * hbar / (p.eta * k_B * p.temperature)


def fidelity_bound(t: float, t2: float) -> float:
    if not t2 > 0:
        raise ValueError("t2 must be > 0")
    return 0.5 * (1.0 + math.exp(-((t / t2) ** 2)))


def rydberg_detection_efficiency(gamma_r: float, t_recap: float) -> float:
    x = gamma_r * t_recap
    if not 0 <= x < 1:
        raise ValueError(f"gamma_r * t_recap must lie in [0, 1), got {x}")
    return 1.0 - x
