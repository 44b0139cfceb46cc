"""Drive Hamiltonians, van der Waals blockade and pulse sequences.

All drives are effective two-photon couplings in the rotating frame. For a
drive of Rabi frequency ``rabi``, detuning ``detuning`` and phase ``phase``
acting on one atom the single-atom term is::

    (rabi / 2) * (exp(i phase) |upper><lower| + h.c.) - detuning |upper><upper|

Raman drives couple ``|1>`` (lower) to ``|0>`` (upper); Rydberg drives couple
``|1>`` (lower) to ``|r>`` (upper). Frequencies are angular (rad/s) and times
are in seconds throughout.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .quantum import DIM, LEVEL_0, LEVEL_1, LEVEL_R, N_LEVELS, Hamiltonian, Segment, basis_index

TWO_PI = 2 * math.pi
TIMING_RESOLUTION = 25e-9


class Transition(enum.Enum):
    RAMAN01 = "raman01"
    RYDBERG1R = "rydberg1r"

    @property
    def levels(self) -> tuple[int, int]:
        """(lower, upper)."""
        return (LEVEL_1, LEVEL_0) if self is Transition.RAMAN01 else (LEVEL_1, LEVEL_R)


class Target(enum.Enum):
    ATOM1 = "atom1"
    ATOM2 = "atom2"
    BOTH = "both"

    @property
    def atoms(self) -> tuple[int, ...]:
        return {Target.ATOM1: (0,), Target.ATOM2: (1,), Target.BOTH: (0, 1)}[self]


@dataclass(frozen=True)
class DriveParams:
    transition: Transition
    rabi: float
    detuning: float = 0.0
    phase: float = 0.0
    target: Target = Target.BOTH

    def __post_init__(self):
        if not self.rabi >= 0:
            raise ValueError(f"Rabi frequency must be >= 0, got {self.rabi}")
        if not math.isfinite(self.detuning):
            raise ValueError("detuning must be finite")


@dataclass(frozen=True)
class InteractionParams:
    c6: float  # GHz um^6, signed
    separation: float  # um

    def __post_init__(self):
        if not self.separation > 0:
            raise ValueError(f"separation must be > 0 um, got {self.separation}")


def vdw_shift(p: InteractionParams) -> float:
    """Pair shift V(R) = -C6/R^6 of ``|rr>`` in rad/s."""
    if p.separation <= 0:
        raise ValueError("separation must be > 0")
    return TWO_PI * (-p.c6 * 1e9) / p.separation**6


def blockade_radius(c6: float, rabi: float) -> float:
    """Blockade radius in um for C6 in GHz um^6 and Rabi frequency in rad/s."""
    if not rabi > 0:
        raise ValueError(f"Rabi frequency must be > 0, got {rabi}")
    return (abs(c6) * 1e9 / (rabi / TWO_PI)) ** (1 / 6)


def _single_atom_block(drive: DriveParams) -> np.ndarray:
    lower, upper = drive.transition.levels
    h = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    h[upper, lower] = 0.5 * drive.rabi * np.exp(1j * drive.phase)
    h[lower, upper] = np.conj(h[upper, lower])
    h[upper, upper] = -drive.detuning
    return h


def embed(single: np.ndarray, atom: int) -> np.ndarray:
    """Lift a 3x3 single-atom operator onto the 9-dim pair space."""
    eye = np.eye(N_LEVELS)
    return np.kron(single, eye) if atom == 0 else np.kron(eye, single)


def build_hamiltonian(
    drives: Sequence[DriveParams],
    interaction: InteractionParams | None = None,
    shifts: np.ndarray | None = None,
) -> Hamiltonian:
    """Pair Hamiltonian for a set of simultaneous drives.

    ``shifts`` is an optional (2, 3) array of extra per-atom level energies in
    rad/s (Doppler or light shifts); it is added to the diagonal.
    """
    seen = set()
    h = np.zeros((DIM, DIM), dtype=complex)
    for d in drives:
        block = _single_atom_block(d)
        for atom in d.target.atoms:
            key = (d.transition, atom)
            if key in seen:
                raise ValueError(f"conflicting drives: two {d.transition.value} drives on atom {atom + 1}")
            seen.add(key)
            h += embed(block, atom)
    if interaction is not None:
        rr = basis_index(LEVEL_R, LEVEL_R)
        h[rr, rr] += vdw_shift(interaction)
    if shifts is not None:
        shifts = np.asarray(shifts, dtype=float)
        for atom in (0, 1):
            h += embed(np.diag(shifts[atom]).astype(complex), atom)
    return Hamiltonian(h)


@dataclass(frozen=True)
class Pulse:
    """One segment of a pulse sequence; no drives means free evolution."""

    drives: tuple[DriveParams, ...]
    duration: float
    trap_on: bool = False
    label: str = ""

    def __post_init__(self):
        if not self.duration >= 0:
            raise ValueError(f"pulse duration must be >= 0, got {self.duration}")
        object.__setattr__(self, "drives", tuple(self.drives))

    @property
    def drives_rydberg(self) -> bool:
        return any(d.transition is Transition.RYDBERG1R and d.rabi > 0 for d in self.drives)


def idle(duration: float, trap_on: bool = False, label: str = "idle") -> Pulse:
    return Pulse((), duration, trap_on, label)


def snap_to_grid(duration: float, resolution: float = TIMING_RESOLUTION) -> float:
    return round(duration / resolution) * resolution


@dataclass(frozen=True)
class PulseSequence:
    pulses: tuple[Pulse, ...] = field(default_factory=tuple)
    hardware_grid: bool = False

    def __post_init__(self):
        pulses = tuple(self.pulses)
        if self.hardware_grid:
            pulses = tuple(
                Pulse(p.drives, snap_to_grid(p.duration), p.trap_on, p.label) for p in pulses
            )
        object.__setattr__(self, "pulses", pulses)

    @property
    def duration(self) -> float:
        return sum(p.duration for p in self.pulses)

    def __len__(self) -> int:
        return len(self.pulses)

    def __iter__(self):
        return iter(self.pulses)

    def __add__(self, other: "PulseSequence") -> "PulseSequence":
        return PulseSequence(self.pulses + other.pulses, self.hardware_grid or other.hardware_grid)

    def to_segments(self, interaction: InteractionParams | None = None) -> list[Segment]:
        """Noise-free Hamiltonian segments for direct propagation."""
        return [Segment(build_hamiltonian(p.drives, interaction), p.duration) for p in self.pulses]


def bell_sequence(
    rabi_rydberg: float,
    rabi_raman: float,
    hardware_grid: bool = False,
    collective_rabi: float | None = None,
    drive_rabi: float | None = None,
) -> PulseSequence:
    """Three-pulse map |11> -> |W> -> (|0r>+|r0>)/sqrt(2) -> |Psi+>.

    The first Rydberg pulse is a pi-pulse at the collective rate, i.e. of
    area pi/sqrt(2) in units of the single-atom Rabi frequency. Pass
    ``collective_rabi`` to time it from a measured collective frequency
    instead of ``sqrt(2) * rabi_rydberg``. Durations follow ``rabi_rydberg``;
    ``drive_rabi`` (default: the same) sets the coupling actually applied.
    """
    if not (rabi_rydberg > 0 and rabi_raman > 0):
        raise ValueError("Rabi frequencies must be > 0")
    collective = collective_rabi if collective_rabi is not None else math.sqrt(2) * rabi_rydberg
    ryd = DriveParams(Transition.RYDBERG1R, rabi_rydberg if drive_rabi is None else drive_rabi)
    raman = DriveParams(Transition.RAMAN01, rabi_raman)
    return PulseSequence(
        (
            Pulse((ryd,), math.pi / collective, label="rydberg pi/sqrt2"),
            Pulse((raman,), math.pi / rabi_raman, label="raman pi"),
            Pulse((ryd,), math.pi / rabi_rydberg, label="rydberg pi"),
        ),
        hardware_grid=hardware_grid,
    )
