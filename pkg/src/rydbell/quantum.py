"""Two-atom state vectors, piecewise-constant propagation and quantum jumps.

Each atom carries three levels ``0``, ``1`` and ``r``. The joint state lives in
the 9-dimensional product space ordered as::

    |00>, |01>, |0r>, |10>, |11>, |1r>, |r0>, |r1>, |rr>

so the basis index of ``|a b>`` is ``3 * a + b`` with ``0 -> 0``, ``1 -> 1``,
``r -> 2``.

Atoms can be *frozen*: a frozen atom is parked in a single level and no
longer couples to any drive. Two situations produce frozen atoms:

* an atom lost during a shot (quantum jump out of ``|r>``) is parked in ``|0>``
  and flagged ``lost``;
* a state-preparation failure is parked in ``|1>`` (a dark spectator that
  reads out like ``|1>``).

Parking is implemented by projecting the Hamiltonian onto the parked
subspace, so the propagation code never needs to know which drive acted on
which atom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, Union

import numpy as np
from scipy.linalg import expm

DIM = 9
N_LEVELS = 3
LEVEL_0, LEVEL_1, LEVEL_R = 0, 1, 2
LEVEL_NAMES = ("0", "1", "r")
BASIS_LABELS = tuple(a + b for a in LEVEL_NAMES for b in LEVEL_NAMES)

# park levels for frozen atoms
PARK_LOST = LEVEL_0
PARK_DARK = LEVEL_1

HERMITIAN_RTOL = 1e-12
MAX_JUMP_PROBABILITY_PER_STEP = 0.01


class NumericError(ArithmeticError):
    """Raised when a propagated state stops being finite."""


def basis_index(a: int, b: int) -> int:
    return N_LEVELS * a + b


def level_of(atom: int, index: int) -> int:
    """Level occupied by ``atom`` (0 or 1) in basis state ``index``."""
    return index // N_LEVELS if atom == 0 else index % N_LEVELS


def level_projector(atom: int, level: int) -> np.ndarray:
    """Diagonal of the projector onto ``atom`` being in ``level``."""
    return np.array([level_of(atom, k) == level for k in range(DIM)], dtype=float)


def allowed_mask(frozen: Sequence[bool], park: Sequence[int]) -> np.ndarray:
    """Basis states compatible with the frozen atoms sitting at their park levels."""
    mask = np.ones(DIM)
    for atom in (0, 1):
        if frozen[atom]:
            mask *= level_projector(atom, park[atom])
    return mask


def _label_index(label: str) -> int:
    try:
        return BASIS_LABELS.index(label)
    except ValueError:
        raise ValueError(f"unknown basis label {label!r}; expected one of {BASIS_LABELS}") from None


@dataclass(frozen=True)
class TwoAtomState:
    """Amplitudes over the 9-state product basis plus per-atom bookkeeping.

    ``lost`` marks atoms removed during the shot; ``frozen`` marks atoms that
    no longer take part in the coherent dynamics (lost atoms are always
    frozen). ``park`` records the level each frozen atom is parked in.
    """

    amplitudes: np.ndarray
    lost: tuple[bool, bool] = (False, False)
    frozen: tuple[bool, bool] = (False, False)
    park: tuple[int, int] = (PARK_LOST, PARK_LOST)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (DIM,):
            raise ValueError(f"amplitudes must have shape ({DIM},), got {amps.shape}")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "lost", tuple(bool(x) for x in self.lost))
        frozen = tuple(bool(f or l) for f, l in zip(self.frozen, self.lost))
        object.__setattr__(self, "frozen", frozen)
        object.__setattr__(self, "park", tuple(int(p) for p in self.park))

    @classmethod
    def from_label(cls, label: str, **kwargs) -> "TwoAtomState":
        amps = np.zeros(DIM, dtype=complex)
        amps[_label_index(label)] = 1.0
        return cls(amps, **kwargs)

    @classmethod
    def superposition(cls, terms: dict[str, complex], **kwargs) -> "TwoAtomState":
        """Normalized superposition, e.g. ``{"01": 1, "10": 1}`` for the Bell state."""
        amps = np.zeros(DIM, dtype=complex)
        for label, c in terms.items():
            amps[_label_index(label)] += c
        return cls(amps / np.linalg.norm(amps), **kwargs)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "TwoAtomState":
        n = self.norm
        if n == 0:
            raise NumericError("cannot normalize a zero state")
        return TwoAtomState(self.amplitudes / n, self.lost, self.frozen, self.park)

    def overlap(self, other: "TwoAtomState") -> complex:
        return complex(np.vdot(other.amplitudes, self.amplitudes))


def bell_state() -> TwoAtomState:
    """(|01> + |10>)/sqrt(2)."""
    return TwoAtomState.superposition({"01": 1, "10": 1})


def w_state() -> TwoAtomState:
    """(|1r> + |r1>)/sqrt(2)."""
    return TwoAtomState.superposition({"1r": 1, "r1": 1})


@dataclass(frozen=True)
class Hamiltonian:
    """A 9x9 Hermitian matrix in rad/s."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (DIM, DIM):
            raise ValueError(f"Hamiltonian must be {DIM}x{DIM}, got {m.shape}")
        check_hermitian(m)
        object.__setattr__(self, "matrix", m)


def check_hermitian(m: np.ndarray, rtol: float = HERMITIAN_RTOL) -> None:
    scale = max(float(np.max(np.abs(m), initial=0.0)), 1.0)
    err = float(np.max(np.abs(m - np.conj(np.swapaxes(m, -1, -2))), initial=0.0))
    if err > rtol * scale:
        raise ValueError(f"Hamiltonian is not Hermitian (max deviation {err:.3e})")


@dataclass(frozen=True)
class JumpChannel:
    """Decay of ``atom`` out of ``source`` at ``rate`` (1/s).

    ``target=None`` removes the atom from the experiment (loss); an integer
    target moves the atom to that level and keeps it in the dynamics.
    """

    rate: float
    atom: int
    source: int = LEVEL_R
    target: int | None = None

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValueError(f"jump rate must be non-negative, got {self.rate}")
        if self.atom not in (0, 1):
            raise ValueError("atom must be 0 or 1")

    def occupation(self) -> np.ndarray:
        return level_projector(self.atom, self.source)


def rydberg_decay_channels(gamma: float) -> list[JumpChannel]:
    """Loss out of ``|r>`` for both atoms at rate ``gamma``."""
    return [JumpChannel(gamma, 0), JumpChannel(gamma, 1)]


HamiltonianLike = Union[Hamiltonian, np.ndarray, Callable[[float], np.ndarray]]


@dataclass(frozen=True)
class Segment:
    """Piecewise-constant stretch of evolution.

    ``hamiltonian`` is a matrix of shape (9, 9) or (n_shots, 9, 9), or a
    callable ``h(t)`` returning one, evaluated at the midpoint of each
    sub-step (``t`` measured from the start of the sequence).
    """

    hamiltonian: HamiltonianLike
    duration: float

    def __post_init__(self):
        if not self.duration >= 0:
            raise ValueError(f"segment duration must be >= 0, got {self.duration}")


def _as_matrix(h) -> np.ndarray:
    return h.matrix if isinstance(h, Hamiltonian) else np.asarray(h, dtype=complex)


def propagator(h: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i h dt) by scaling and squaring; ``h`` may be a stack of matrices."""
    return expm(-1j * np.asarray(h) * dt)


def evolve_segment(state: TwoAtomState, h: Hamiltonian | np.ndarray, dt: float) -> TwoAtomState:
    """Propagate ``state`` under the time-independent ``h`` for ``dt`` seconds."""
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    m = _as_matrix(h)
    check_hermitian(m)
    mask = allowed_mask(state.frozen, state.park)
    m = m * np.outer(mask, mask)
    amps = propagator(m, dt) @ state.amplitudes
    if not np.all(np.isfinite(amps)):
        raise NumericError("non-finite amplitudes after propagation")
    return TwoAtomState(amps, state.lost, state.frozen, state.park)


def populations(state: TwoAtomState | np.ndarray) -> np.ndarray:
    amps = state.amplitudes if isinstance(state, TwoAtomState) else np.asarray(state)
    return np.abs(amps) ** 2


@dataclass
class TrajectoryBatch:
    """Mutable working set for propagating many shots at once."""

    psi: np.ndarray  # (n, 9), unnormalized during no-jump evolution
    lost: np.ndarray  # (n, 2) bool
    frozen: np.ndarray  # (n, 2) bool
    park: np.ndarray  # (n, 2) int
    thresholds: np.ndarray = field(default=None)  # (n,) norm^2 level that triggers a jump
    jumps: np.ndarray = field(default=None)  # (n,) jump counts

    @classmethod
    def from_states(cls, states: Sequence[TwoAtomState]) -> "TrajectoryBatch":
        return cls(
            psi=np.array([s.amplitudes for s in states], dtype=complex),
            lost=np.array([s.lost for s in states], dtype=bool),
            frozen=np.array([s.frozen for s in states], dtype=bool),
            park=np.array([s.park for s in states], dtype=int),
        )

    def __len__(self) -> int:
        return len(self.psi)

    def masks(self) -> np.ndarray:
        return np.array([allowed_mask(f, p) for f, p in zip(self.frozen, self.park)])

    def states(self) -> list[TwoAtomState]:
        out = []
        for k in range(len(self)):
            amps = self.psi[k]
            n = np.linalg.norm(amps)
            out.append(
                TwoAtomState(
                    amps / n if n > 0 else amps,
                    tuple(self.lost[k]),
                    tuple(self.frozen[k]),
                    tuple(self.park[k]),
                )
            )
        return out


def _substeps(duration: float, time_dependent: bool, max_step: float, max_rate: float) -> int:
    if duration == 0:
        return 0
    n = 1
    if time_dependent:
        n = max(n, math.ceil(duration / max_step - 1e-9))
    if max_rate > 0:
        n = max(n, math.ceil(duration * max_rate / MAX_JUMP_PROBABILITY_PER_STEP - 1e-9))
    return n


def propagate_batch(
    batch: TrajectoryBatch,
    segments: Iterable[Segment],
    channels: Sequence[JumpChannel] = (),
    rngs: Sequence[np.random.Generator] | None = None,
    max_step: float = 20e-9,
    observer: Callable[[float, TrajectoryBatch], None] | None = None,
    observe_every: float | None = None,
) -> TrajectoryBatch:
    """Advance every shot in ``batch`` through ``segments`` in place.

    With jump channels the first-order unravelling is used: each shot evolves
    under the non-Hermitian effective Hamiltonian and jumps once its squared
    norm drops below a uniform threshold drawn from its own stream. Sub-steps
    keep ``rate * dt <= 0.01``. ``observer`` (if given) is called after every
    sub-step with the elapsed time.
    """
    channels = [c for c in channels if c.rate > 0]
    if channels and rngs is None:
        raise ValueError("jump channels need per-shot random streams")
    n = len(batch)
    total_rate = sum(c.rate for c in channels)
    decay = np.zeros(DIM)
    for c in channels:
        decay += c.rate * c.occupation()

    if channels and batch.thresholds is None:
        batch.thresholds = np.array([rng.random() for rng in rngs])
    if batch.jumps is None:
        batch.jumps = np.zeros(n, dtype=int)

    masks = batch.masks()
    t = 0.0
    for seg in segments:
        h_src = seg.hamiltonian
        time_dependent = callable(h_src) and not isinstance(h_src, Hamiltonian)
        nsub = _substeps(seg.duration, time_dependent, max_step, total_rate)
        if observer is not None and observe_every and nsub:
            nsub = max(nsub, math.ceil(seg.duration / observe_every - 1e-9))
        if nsub == 0:
            continue
        dt = seg.duration / nsub
        static = None if time_dependent else _as_matrix(h_src)
        for k in range(nsub):
            h = static if static is not None else np.asarray(h_src(t + (k + 0.5) * dt), dtype=complex)
            h = np.broadcast_to(h, (n, DIM, DIM))
            h = h * (masks[:, :, None] * masks[:, None, :])
            if channels:
                h = h - 0.5j * np.diag(decay)[None, :, :] * (masks[:, :, None] * masks[:, None, :])
            u = propagator(h, dt)
            batch.psi = np.einsum("nij,nj->ni", u, batch.psi)
            if not np.all(np.isfinite(batch.psi)):
                raise NumericError("non-finite amplitudes during trajectory propagation")
            if channels:
                norms2 = np.sum(np.abs(batch.psi) ** 2, axis=1)
                for s in np.flatnonzero(norms2 < batch.thresholds):
                    _apply_jump(batch, s, channels, rngs[s])
                    masks[s] = allowed_mask(batch.frozen[s], batch.park[s])
            if observer is not None:
                observer(t + (k + 1) * dt, batch)
        t += seg.duration

    norms = np.linalg.norm(batch.psi, axis=1)
    ok = norms > 0
    batch.psi[ok] /= norms[ok, None]
    return batch


def _apply_jump(batch: TrajectoryBatch, s: int, channels: Sequence[JumpChannel], rng) -> None:
    psi = batch.psi[s]
    weights = np.array([c.rate * np.sum(np.abs(psi) ** 2 * c.occupation()) for c in channels])
    if weights.sum() <= 0:
        # nothing left to decay; renormalize and redraw
        batch.psi[s] = psi / np.linalg.norm(psi)
        batch.thresholds[s] = rng.random()
        return
    ch = channels[int(rng.choice(len(channels), p=weights / weights.sum()))]
    new = np.zeros(DIM, dtype=complex)
    if ch.target is None:
        # survivor keeps its conditional state; lost atom parked at PARK_LOST
        for lvl in range(N_LEVELS):
            src = basis_index(ch.source, lvl) if ch.atom == 0 else basis_index(lvl, ch.source)
            dst = basis_index(PARK_LOST, lvl) if ch.atom == 0 else basis_index(lvl, PARK_LOST)
            new[dst] = psi[src]
        batch.lost[s, ch.atom] = True
        batch.frozen[s, ch.atom] = True
        batch.park[s, ch.atom] = PARK_LOST
    else:
        for lvl in range(N_LEVELS):
            src = basis_index(ch.source, lvl) if ch.atom == 0 else basis_index(lvl, ch.source)
            dst = basis_index(ch.target, lvl) if ch.atom == 0 else basis_index(lvl, ch.target)
            new[dst] += psi[src]
    batch.psi[s] = new / np.linalg.norm(new)
    batch.jumps[s] += 1
    batch.thresholds[s] = rng.random()


def run_trajectory(
    state: TwoAtomState,
    sequence: Sequence[Segment],
    channels: Sequence[JumpChannel] = (),
    rng: np.random.Generator | None = None,
    max_step: float = 20e-9,
) -> TwoAtomState:
    """Single-shot quantum-jump trajectory through ``sequence``.

    Deterministic given ``rng``. Without channels this is plain composition
    of :func:`evolve_segment` over the segments.
    """
    if not sequence:
        return state
    batch = TrajectoryBatch.from_states([state])
    propagate_batch(batch, sequence, channels, None if rng is None else [rng], max_step=max_step)
    return batch.states()[0]
