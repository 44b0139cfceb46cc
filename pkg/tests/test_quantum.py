import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydbell.atoms import DriveParams, InteractionParams, Target, Transition, build_hamiltonian, vdw_shift
from rydbell.quantum import (
    BASIS_LABELS,
    DIM,
    LEVEL_1,
    LEVEL_R,
    Hamiltonian,
    JumpChannel,
    NumericError,
    Segment,
    TrajectoryBatch,
    TwoAtomState,
    basis_index,
    bell_state,
    evolve_segment,
    populations,
    propagate_batch,
    run_trajectory,
    w_state,
)

TWO_PI = 2 * math.pi


def random_hermitian(rng, scale=1e7):
    a = rng.normal(size=(DIM, DIM)) + 1j * rng.normal(size=(DIM, DIM))
    return scale * (a + a.conj().T) / 2


def random_state(rng):
    v = rng.normal(size=DIM) + 1j * rng.normal(size=DIM)
    return TwoAtomState(v / np.linalg.norm(v))


def eig_propagate(h, psi, t):
    """Independent oracle: exp(-iHt) via Hermitian eigendecomposition."""
    w, v = np.linalg.eigh(h)
    return v @ (np.exp(-1j * w * t) * (v.conj().T @ psi))


def test_basis_order():
    assert BASIS_LABELS == ("00", "01", "0r", "10", "11", "1r", "r0", "r1", "rr")
    assert basis_index(1, 2) == 5


def test_zero_hamiltonian_is_identity():
    s = random_state(np.random.default_rng(1))
    out = evolve_segment(s, np.zeros((DIM, DIM)), 1e-6)
    np.testing.assert_allclose(out.amplitudes, s.amplitudes, atol=1e-15)


def test_raman_pi_pulse_single_atom():
    rabi = TWO_PI * 0.75e6
    h = build_hamiltonian([DriveParams(Transition.RAMAN01, rabi, target=Target.ATOM1)])
    s = TwoAtomState.from_label("11")
    out = evolve_segment(s, h, math.pi / rabi)
    assert populations(out)[basis_index(0, 1)] == pytest.approx(1.0, abs=1e-6)


def test_raman_pi_time_is_660ns():
    # t_pi = pi / Omega at 0.75 MHz
    assert math.pi / (TWO_PI * 0.75e6) == pytest.approx(667e-9, rel=1e-3)


def test_blockaded_collective_pi_pulse_makes_w_state():
    rabi = TWO_PI * 0.73e6
    h = build_hamiltonian([DriveParams(Transition.RYDBERG1R, rabi)]).matrix.copy()
    h[8, 8] = 1e9
    out = evolve_segment(TwoAtomState.from_label("11"), Hamiltonian(h), 1 / (2 * math.sqrt(2) * 0.73e6))
    p = populations(out)
    assert p[basis_index(1, 2)] + p[basis_index(2, 1)] == pytest.approx(1.0, abs=1e-4)
    a, b = out.amplitudes[basis_index(1, 2)], out.amplitudes[basis_index(2, 1)]
    assert a == pytest.approx(b, abs=1e-9)


def test_blockade_matches_analytic_three_level_solution():
    # In {|11>, |W>, |rr>} the drive couples 11<->W and W<->rr with sqrt(2) Omega/2.
    rabi = TWO_PI * 0.73e6
    v = vdw_shift(InteractionParams(-573, 6.0))
    assert v / TWO_PI == pytest.approx(12.28e6, rel=1e-3)
    g = math.sqrt(2) * rabi / 2
    h3 = np.array([[0, g, 0], [g, 0, g], [0, g, v]], dtype=complex)
    h = build_hamiltonian([DriveParams(Transition.RYDBERG1R, rabi)], InteractionParams(-573, 6.0))
    for t in np.linspace(0, 3e-6, 13):
        c = eig_propagate(h3, np.array([1, 0, 0], dtype=complex), t)
        out = evolve_segment(TwoAtomState.from_label("11"), h, t)
        assert out.amplitudes[basis_index(1, 1)] == pytest.approx(c[0], abs=1e-8)
        assert out.amplitudes[basis_index(1, 2)] == pytest.approx(c[1] / math.sqrt(2), abs=1e-8)
        assert out.amplitudes[basis_index(2, 2)] == pytest.approx(c[2], abs=1e-8)


def test_four_state_subspace_eigendecomposition():
    rabi = TWO_PI * 0.73e6
    h = build_hamiltonian([DriveParams(Transition.RYDBERG1R, rabi, detuning=TWO_PI * 0.2e6)],
                          InteractionParams(-573, 6.0)).matrix
    idx = [basis_index(1, 1), basis_index(1, 2), basis_index(2, 1), basis_index(2, 2)]
    h4 = h[np.ix_(idx, idx)]
    psi4 = np.array([0.6, 0.8j, 0, 0], dtype=complex)
    amps = np.zeros(DIM, dtype=complex)
    amps[idx] = psi4
    for t in (1e-7, 7.3e-7, 2.9e-6):
        out = evolve_segment(TwoAtomState(amps), h, t)
        np.testing.assert_allclose(out.amplitudes[idx], eig_propagate(h4, psi4, t), atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), dt=st.floats(0, 5e-6))
def test_unitarity(seed, dt):
    rng = np.random.default_rng(seed)
    s = random_state(rng)
    out = evolve_segment(s, random_hermitian(rng), dt)
    assert out.norm == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a=st.floats(0, 2e-6), b=st.floats(0, 2e-6))
def test_composition(seed, a, b):
    rng = np.random.default_rng(seed)
    s = random_state(rng)
    h = random_hermitian(rng)
    one = evolve_segment(s, h, a + b)
    two = evolve_segment(evolve_segment(s, h, a), h, b)
    np.testing.assert_allclose(one.amplitudes, two.amplitudes, atol=1e-8)


def test_non_hermitian_rejected():
    h = np.zeros((DIM, DIM), dtype=complex)
    h[0, 1] = 1.0
    with pytest.raises(ValueError, match="Hermitian"):
        evolve_segment(TwoAtomState.from_label("00"), h, 1e-6)
    with pytest.raises(ValueError):
        evolve_segment(TwoAtomState.from_label("00"), np.zeros((DIM, DIM)), -1.0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_amplitudes_raise():
    h = np.zeros((DIM, DIM))
    h[0, 0] = np.inf
    with pytest.raises((NumericError, ValueError)):
        evolve_segment(TwoAtomState.from_label("00"), h, 1e-6)


def test_populations_examples():
    p = populations(bell_state())
    assert p[basis_index(0, 1)] == pytest.approx(0.5)
    assert p[basis_index(1, 0)] == pytest.approx(0.5)
    p = populations(w_state())
    assert p[basis_index(1, 2)] == pytest.approx(0.5)
    assert p[basis_index(2, 1)] == pytest.approx(0.5)
    s = random_state(np.random.default_rng(3))
    assert populations(s).sum() == pytest.approx(1.0, abs=1e-12)


def test_lost_flags_preserved_and_frozen_atom_static():
    rabi = TWO_PI * 0.73e6
    h = build_hamiltonian([DriveParams(Transition.RYDBERG1R, rabi)])
    s = TwoAtomState.from_label("10", lost=(False, True))
    out = evolve_segment(s, h, math.pi / rabi)
    assert out.lost == (False, True)
    # atom 1 flips to |r>, parked atom 2 stays at its park level
    assert populations(out)[basis_index(LEVEL_R, 0)] == pytest.approx(1.0, abs=1e-9)


def test_run_trajectory_without_channels_equals_composition():
    rng = np.random.default_rng(5)
    s = random_state(rng)
    hs = [random_hermitian(rng) for _ in range(3)]
    ts = [1e-7, 3e-7, 2e-7]
    ref = s
    for h, t in zip(hs, ts):
        ref = evolve_segment(ref, h, t)
    out = run_trajectory(s, [Segment(h, t) for h, t in zip(hs, ts)])
    np.testing.assert_allclose(out.amplitudes, ref.amplitudes, atol=1e-10)


def test_run_trajectory_empty_sequence_returns_input():
    s = TwoAtomState.from_label("11")
    assert run_trajectory(s, []) is s


def test_decay_jump_fraction_matches_exponential():
    gamma = 1 / 134e-6
    n = 10_000
    states = [TwoAtomState.from_label("0r")] * n
    batch = TrajectoryBatch.from_states(states)
    rngs = [np.random.default_rng([11, k]) for k in range(n)]
    propagate_batch(batch, [Segment(np.zeros((DIM, DIM)), 8e-6)], [JumpChannel(gamma, 1)], rngs)
    frac = batch.lost[:, 1].mean()
    expected = 1 - math.exp(-8 / 134)
    sigma = math.sqrt(expected * (1 - expected) / n)
    assert abs(frac - expected) < 3 * sigma


def test_decay_ensemble_populations_track_analytic_curve():
    gamma = 1 / 134e-6
    n = 10_000
    batch = TrajectoryBatch.from_states([TwoAtomState.from_label("r1", lost=(False, False))] * n)
    rngs = [np.random.default_rng([12, k]) for k in range(n)]
    record = []

    def observer(t, b):
        record.append((t, np.mean(~b.lost[:, 0])))

    propagate_batch(batch, [Segment(np.zeros((DIM, DIM)), 20e-6)], [JumpChannel(gamma, 0)], rngs,
                    observer=observer, observe_every=2e-6)
    for t, surv in record[::10]:
        p = math.exp(-gamma * t)
        assert abs(surv - p) < 3 * math.sqrt(p * (1 - p) / n) + 1e-12


def test_jump_keeps_survivor_state():
    gamma = 1e9
    state = TwoAtomState.superposition({"r0": 1, "r1": 1})
    out = run_trajectory(state, [Segment(np.zeros((DIM, DIM)), 1e-7)], [JumpChannel(gamma, 0)],
                         np.random.default_rng(0))
    assert out.lost == (True, False)
    p = populations(out)
    assert p[basis_index(0, 0)] == pytest.approx(0.5)
    assert p[basis_index(0, LEVEL_1)] == pytest.approx(0.5)


def test_trajectory_deterministic_given_seed():
    rabi = TWO_PI * 0.73e6
    h = build_hamiltonian([DriveParams(Transition.RYDBERG1R, rabi)], InteractionParams(-573, 6))
    seq = [Segment(h, 3e-6)]
    ch = [JumpChannel(1e6, 0), JumpChannel(1e6, 1)]
    a = run_trajectory(TwoAtomState.from_label("11"), seq, ch, np.random.default_rng(9))
    b = run_trajectory(TwoAtomState.from_label("11"), seq, ch, np.random.default_rng(9))
    np.testing.assert_array_equal(a.amplitudes, b.amplitudes)
    assert a.lost == b.lost


def test_norm_bounded_with_channels():
    rng = np.random.default_rng(2)
    h = random_hermitian(rng)
    states = [random_state(rng) for _ in range(20)]
    batch = TrajectoryBatch.from_states(states)
    rngs = [np.random.default_rng(k) for k in range(20)]
    propagate_batch(batch, [Segment(h, 1e-6)], [JumpChannel(1e5, 0), JumpChannel(1e5, 1)], rngs)
    assert np.all(np.linalg.norm(batch.psi, axis=1) <= 1 + 1e-9)


def test_jump_channel_rate_validation():
    with pytest.raises(ValueError):
        JumpChannel(-1.0, 0)
