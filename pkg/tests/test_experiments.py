import math

import numpy as np
import pytest

from rydbell import experiments as ex
from rydbell.atoms import Pulse, PulseSequence
from rydbell.config import default_config
from rydbell.noise import NoiseParams


def test_rydberg_horizon_covers_only_rydberg_pulses():
    sim = ex.Simulator(default_config())
    seq = sim.bell_sequence()
    assert ex.rydberg_horizon(seq) == pytest.approx(seq.duration, rel=1e-12)
    raman = PulseSequence((Pulse((sim.raman(),), 1e-6),))
    assert ex.rydberg_horizon(raman) == 0.0


def test_drive_scale_only_with_phase_noise():
    cfg = default_config()
    noisy = ex.Simulator(cfg)
    quiet = ex.Simulator(cfg, noise=NoiseParams().only(doppler=True))
    assert noisy.rabi_rydberg_drive == pytest.approx(noisy.rabi_rydberg * cfg.noise.phase_noise.drive_scale)
    assert quiet.rabi_rydberg_drive == quiet.rabi_rydberg


def test_shots_identical_across_thread_counts():
    cfg = default_config()
    seq = ex.Simulator(cfg).bell_sequence()
    runs = [ex.Simulator(cfg, threads=t).run_shots(seq, 150, 5, 3)[0] for t in (1, 2, 5)]
    for r in runs[1:]:
        np.testing.assert_array_equal(r, runs[0])


def test_rabi_ground_frequency():
    cfg = default_config().replace(**{"scan.rabi_ground_us": [0.0, 3.0, 16]})
    out = ex.run("rabi-ground", cfg, shots=150, threads=4)
    for atom in ("atom1", "atom2"):
        assert out.result["analysis"][atom]["rabi_MHz"] == pytest.approx(0.75, abs=0.02)


@pytest.mark.slow
def test_calibrated_single_atom_flop():
    fit = ex.fit_flop(ex.Simulator(default_config()))
    assert fit["rabi"] / (2 * math.pi * 1e6) == pytest.approx(0.73, abs=0.02)
    assert fit["tau"] * 1e6 == pytest.approx(3.2, abs=0.5)


@pytest.mark.slow
def test_rydberg_fringe_visibility_falls_with_hold():
    cfg = default_config().replace(**{"scan.ramsey_rydberg_us": [4.0, 12.5, 2]})
    out = ex.run("ramsey-rydberg", cfg, shots=250, threads=4)
    rows = [r for r in out.summary if r["series"] == "visibility"]
    vis = {round(r["x"] * 1e6, 1): r["y"] for r in rows}
    assert vis[4.0] > vis[12.5]


@pytest.mark.slow
def test_echo_t2_prime():
    cfg = default_config().replace(**{"scan.ramsey_ground_ms": [0.0, 30.0, 3]})
    out = ex.run("ramsey-ground", cfg, threads=4)
    assert 0.12 <= out.result["analysis"]["t2prime_s"] <= 0.17
