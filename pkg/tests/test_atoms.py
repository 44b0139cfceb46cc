import math

import numpy as np
import pytest
from scipy.linalg import expm

from rydbell.atoms import (
    TIMING_RESOLUTION,
    DriveParams,
    InteractionParams,
    PulseSequence,
    Target,
    Transition,
    bell_sequence,
    blockade_radius,
    build_hamiltonian,
    vdw_shift,
)
from rydbell.quantum import TwoAtomState, basis_index, bell_state, evolve_segment, populations, run_trajectory

TWO_PI = 2 * math.pi
OMEGA_R = TWO_PI * 0.73e6
OMEGA_RAMAN = TWO_PI * 0.75e6
LAB_PAIR = InteractionParams(-573.0, 6.0)


def test_vdw_shift_examples():
    assert vdw_shift(LAB_PAIR) / TWO_PI == pytest.approx(573e9 / 6**6, rel=1e-12)
    assert vdw_shift(LAB_PAIR) / TWO_PI / 1e6 == pytest.approx(12.28, abs=0.01)
    assert vdw_shift(InteractionParams(-573.0, 100.0)) / TWO_PI == pytest.approx(0.573, rel=1e-9)
    assert vdw_shift(InteractionParams(0.0, 6.0)) == 0.0
    assert vdw_shift(LAB_PAIR) > 0


def test_zero_separation_rejected():
    with pytest.raises(ValueError):
        InteractionParams(-573.0, 0.0)


def test_blockade_radius_examples():
    assert blockade_radius(-573.0, OMEGA_R) == pytest.approx(9.6, abs=0.1)
    r1 = blockade_radius(-573.0, OMEGA_R)
    assert blockade_radius(-573.0 * 2**6, OMEGA_R) == pytest.approx(2 * r1, rel=1e-12)
    # |C6| / Omega = 1 um^6 in consistent units
    assert blockade_radius(1e-9, TWO_PI * 1.0) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError):
        blockade_radius(-573.0, 0.0)


def test_no_drives_only_rr_element():
    h = build_hamiltonian([], LAB_PAIR).matrix
    rr = basis_index(2, 2)
    mask = np.zeros_like(h, dtype=bool)
    mask[rr, rr] = True
    assert np.all(h[~mask] == 0)
    assert h[rr, rr].real / TWO_PI == pytest.approx(12.28e6, rel=1e-3)


def test_collective_splitting_sqrt2():
    h = build_hamiltonian([DriveParams(Transition.RYDBERG1R, OMEGA_R)]).matrix
    i11, i1r, ir1 = basis_index(1, 1), basis_index(1, 2), basis_index(2, 1)
    # project onto {|11>, |W>}
    w = np.zeros(9, dtype=complex)
    w[[i1r, ir1]] = 1 / math.sqrt(2)
    e11 = np.zeros(9, dtype=complex)
    e11[i11] = 1
    basis = np.stack([e11, w], axis=1)
    h2 = basis.conj().T @ h @ basis
    ev = np.linalg.eigvalsh(h2)
    assert ev[1] - ev[0] == pytest.approx(math.sqrt(2) * OMEGA_R, rel=1e-12)


def test_single_atom_raman_tensor_structure():
    h = build_hamiltonian([DriveParams(Transition.RAMAN01, OMEGA_RAMAN, target=Target.ATOM1)]).matrix
    for x in range(3):
        assert abs(h[basis_index(0, x), basis_index(1, x)]) == pytest.approx(OMEGA_RAMAN / 2)
    assert np.count_nonzero(h) == 6


def test_hermitian_exact():
    drives = [
        DriveParams(Transition.RAMAN01, OMEGA_RAMAN, detuning=1e5, phase=0.3),
        DriveParams(Transition.RYDBERG1R, OMEGA_R, detuning=-2e5, phase=1.1),
    ]
    h = build_hamiltonian(drives, LAB_PAIR, shifts=np.array([[1e3, 0, -5e4], [2e3, 0, 7e4]])).matrix
    assert np.max(np.abs(h - h.conj().T)) <= 1e-15 * np.max(np.abs(h))


def test_conflicting_drives_rejected():
    d = DriveParams(Transition.RYDBERG1R, OMEGA_R)
    with pytest.raises(ValueError, match="conflicting"):
        build_hamiltonian([d, DriveParams(Transition.RYDBERG1R, OMEGA_R, target=Target.ATOM2)])


def test_drive_validation():
    with pytest.raises(ValueError):
        DriveParams(Transition.RAMAN01, -1.0)
    with pytest.raises(ValueError):
        DriveParams(Transition.RAMAN01, 1.0, detuning=math.inf)


def test_bell_sequence_durations():
    seq = bell_sequence(OMEGA_R, OMEGA_RAMAN)
    d = [p.duration for p in seq]
    assert d[0] == pytest.approx(math.pi / (math.sqrt(2) * OMEGA_R))
    assert d[1] == pytest.approx(math.pi / OMEGA_RAMAN)
    assert d[2] == pytest.approx(math.pi / OMEGA_R)
    assert [x * 1e6 for x in d] == pytest.approx([0.484, 0.667, 0.685], abs=2e-3)
    assert seq.duration * 1e6 == pytest.approx(1.85, abs=0.02)


def test_bell_sequence_hardware_grid():
    seq = bell_sequence(OMEGA_R, OMEGA_RAMAN, hardware_grid=True)
    for p in seq:
        k = p.duration / TIMING_RESOLUTION
        assert k == pytest.approx(round(k), abs=1e-9)


def test_bell_sequence_deterministic():
    assert bell_sequence(OMEGA_R, OMEGA_RAMAN) == bell_sequence(OMEGA_R, OMEGA_RAMAN)


def test_bell_sequence_rejects_bad_rabi():
    with pytest.raises(ValueError):
        bell_sequence(0.0, OMEGA_RAMAN)


def test_bell_sequence_makes_psi_plus_in_strong_blockade():
    strong = InteractionParams(-1e6, 2.0)
    out = run_trajectory(TwoAtomState.from_label("11"), bell_sequence(OMEGA_R, OMEGA_RAMAN).to_segments(strong))
    assert abs(bell_state().overlap(out)) ** 2 >= 0.999


def test_bell_sequence_at_lab_blockade():
    out = run_trajectory(TwoAtomState.from_label("11"), bell_sequence(OMEGA_R, OMEGA_RAMAN).to_segments(LAB_PAIR))
    assert abs(bell_state().overlap(out)) ** 2 > 0.97


def _single_atom_unitary(drive, t):
    lower, upper = drive.transition.levels
    h = np.zeros((3, 3), dtype=complex)
    h[upper, lower] = drive.rabi / 2
    h[lower, upper] = drive.rabi / 2
    return expm(-1j * h * t)


def test_bell_sequence_on_10_is_product_of_single_atom_evolutions():
    seq = bell_sequence(OMEGA_R, OMEGA_RAMAN)
    out = run_trajectory(TwoAtomState.from_label("10"), seq.to_segments())
    a = np.array([0, 1, 0], dtype=complex)
    b = np.array([1, 0, 0], dtype=complex)
    for p in seq:
        (d,) = p.drives
        u = _single_atom_unitary(d, p.duration)
        a, b = u @ a, u @ b
    np.testing.assert_allclose(out.amplitudes, np.kron(a, b), atol=1e-10)
    # atom 2 starts in |0> and is dark to the first Rydberg pulse
    first = run_trajectory(TwoAtomState.from_label("10"), PulseSequence(seq.pulses[:1]).to_segments())
    assert populations(first)[basis_index(2, 0)] == pytest.approx(
        math.sin(math.pi / (2 * math.sqrt(2))) ** 2, abs=1e-10)


def test_blockade_suppresses_double_excitation():
    h = build_hamiltonian([DriveParams(Transition.RYDBERG1R, OMEGA_R)], LAB_PAIR)
    state = TwoAtomState.from_label("11")
    worst = 0.0
    for _ in range(400):
        state = evolve_segment(state, h, 10e-9)
        worst = max(worst, populations(state)[basis_index(2, 2)])
    assert worst < 0.05
    assert vdw_shift(LAB_PAIR) / OMEGA_R == pytest.approx(16.8, abs=0.1)
