"""Shot-level simulations of the coherence, blockade and entanglement runs.

A :class:`Simulator` turns an :class:`~rydbell.config.ExperimentConfig` into
physical parameters and runs batches of shots: for each shot a noise
realization is drawn from its own stream, the pulse sequence is compiled
into Hamiltonian segments, the batch is propagated (with Rydberg-decay jumps)
and every final state is read out.

Each experiment has a ``simulate_*`` function producing shot records and an
``analyze_*`` function that only needs those records, so ``analyze`` on a
saved shot file reproduces the inline result.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from . import analysis
from .atoms import (
    TWO_PI,
    DriveParams,
    InteractionParams,
    Pulse,
    PulseSequence,
    Target,
    Transition,
    bell_sequence,
    build_hamiltonian,
    embed,
)
from .config import ExperimentConfig
from .detection import DetectionParams, ShotOutcome, ShotRecords, measure_shot
from .noise import (
    NoiseParams,
    PhaseNoiseModel,
    PhaseNoiseParams,
    ShotContext,
    ThermalParams,
    rydberg_detection_efficiency,
    sample_shot_context,
    shot_rng,
)
from .quantum import (
    LEVEL_0,
    LEVEL_1,
    LEVEL_R,
    PARK_DARK,
    PARK_LOST,
    Segment,
    TrajectoryBatch,
    TwoAtomState,
    basis_index,
    propagate_batch,
    rydberg_decay_channels,
)

log = logging.getLogger(__name__)

CHUNK = 64
EXPERIMENTS = ("rabi-ground", "ramsey-ground", "rabi-rydberg", "ramsey-rydberg", "blockade", "bell")
STREAMS = {name: i + 1 for i, name in enumerate(EXPERIMENTS)}


def mhz(f: float) -> float:
    return TWO_PI * f * 1e6


def grid(bounds: Sequence, unit: float) -> np.ndarray:
    start, stop, num = bounds
    return np.linspace(start, stop, int(num)) * unit


@dataclass
class Output:
    """Everything one experiment run produces."""

    name: str
    records: ShotRecords
    summary: list[dict] = field(default_factory=list)
    result: dict = field(default_factory=dict)


class Simulator:
    """Physical parameters and shot machinery derived from a config."""

    def __init__(self, config: ExperimentConfig, threads: int = 1, noise: NoiseParams | None = None,
                 detection: DetectionParams | None = None):
        self.config = config
        self.threads = max(1, int(threads))
        ph = config.physics
        self.rabi_raman = mhz(ph.rabi_raman_MHz)
        # pulses are timed from the measured Rabi frequency; the drive itself is
        # scaled up to offset the carrier loss caused by the phase noise
        self.rabi_rydberg = mhz(ph.rabi_rydberg_MHz)
        self.interaction = InteractionParams(ph.c6_GHz_um6, ph.separation_um)
        self.thermal = ThermalParams(ph.temperature_uK * 1e-6, ph.mass_kg, ph.k_eff_per_m, ph.eta_lightshift)
        self.gamma_r = 1.0 / (ph.rydberg_lifetime_us * 1e-6)
        self.noise = noise if noise is not None else noise_from_config(config)
        det = config.detection
        self.detection = detection if detection is not None else DetectionParams(
            eta_op=det.eta_op,
            eta_r=rydberg_detection_efficiency(self.gamma_r, det.t_recap_us * 1e-6),
            blowaway_fidelity=det.blowaway_fidelity,
            background_loss=det.background_loss,
            blowaway_enabled=det.blowaway,
        )
        self.max_step = config.sequence.max_step_ns * 1e-9
        scale = config.noise.phase_noise.drive_scale
        self.rabi_rydberg_drive = self.rabi_rydberg * (
            scale if self.noise.phase_noise.model is not PhaseNoiseModel.OFF else 1.0)
        self.channels = rydberg_decay_channels(self.gamma_r) if self.noise.rydberg_decay else []

    # -- sequence helpers -------------------------------------------------

    def raman(self, phase: float = 0.0, target: Target = Target.BOTH) -> DriveParams:
        return DriveParams(Transition.RAMAN01, self.rabi_raman, phase=phase, target=target)

    def rydberg(self, detuning: float = 0.0, phase: float = 0.0, rabi: float | None = None) -> DriveParams:
        r = self.rabi_rydberg_drive if rabi is None else rabi
        return DriveParams(Transition.RYDBERG1R, r, detuning=detuning, phase=phase)

    def bell_sequence(self) -> PulseSequence:
        seq = self.config.sequence
        collective = mhz(seq.measured_collective_MHz) if seq.collective_pulse == "measured" else None
        return bell_sequence(self.rabi_rydberg, self.rabi_raman, seq.hardware_grid, collective,
                             drive_rabi=self.rabi_rydberg_drive)

    # -- shot machinery ---------------------------------------------------

    def compile(self, sequence: PulseSequence, contexts: Sequence[ShotContext]) -> list[Segment]:
        """Per-shot Hamiltonian segments for a batch of noise realizations."""
        segments = []
        n = len(contexts)
        for j, pulse in enumerate(sequence):
            h0 = np.empty((n, 9, 9), dtype=complex)
            for k, ctx in enumerate(contexts):
                h0[k] = build_hamiltonian(pulse.drives, self.interaction, self._shifts(ctx, j, pulse)).matrix
            noisy = pulse.drives_rydberg and self.noise.phase_noise.model is not PhaseNoiseModel.OFF
            if not noisy:
                segments.append(Segment(h0, pulse.duration))
                continue
            coupling = np.zeros((9, 9), dtype=complex)
            for d in pulse.drives:
                if d.transition is Transition.RYDBERG1R:
                    block = np.zeros((3, 3), dtype=complex)
                    block[LEVEL_R, LEVEL_1] = 0.5 * d.rabi * np.exp(1j * d.phase)
                    for atom in d.target.atoms:
                        coupling += embed(block, atom)
            h0 = h0 - coupling - coupling.conj().T
            traces = [ctx.phase_trace for ctx in contexts]
            segments.append(Segment(_NoisyDrive(h0, coupling, traces), pulse.duration))
        return segments

    def _shifts(self, ctx: ShotContext, j: int, pulse: Pulse) -> np.ndarray:
        shifts = np.zeros((2, 3))
        for atom in (0, 1):
            shifts[atom, LEVEL_R] = -ctx.doppler_detuning[atom]
            if pulse.trap_on:
                shifts[atom, LEVEL_0] = ctx.lightshift_detuning[atom]
            if ctx.segment_dephasing:
                shifts[atom, LEVEL_0] += ctx.segment_dephasing[j][atom]
        return shifts

    def initial_state(self, absent: tuple[bool, bool], dark: tuple[bool, bool]) -> TwoAtomState:
        levels = [PARK_LOST if absent[a] else LEVEL_1 for a in (0, 1)]
        park = tuple(PARK_LOST if absent[a] else PARK_DARK for a in (0, 1))
        amps = np.zeros(9, dtype=complex)
        amps[basis_index(*levels)] = 1.0
        frozen = tuple(absent[a] or dark[a] for a in (0, 1))
        return TwoAtomState(amps, lost=absent, frozen=frozen, park=park)

    def run_shots(
        self,
        sequence: PulseSequence,
        n_shots: int,
        stream: int,
        point: int,
        absent: tuple[bool, bool] = (False, False),
        blowaway: bool | None = None,
        collect_states: bool = False,
    ) -> tuple[list[tuple[bool, bool]], list[TwoAtomState]]:
        """Simulate ``n_shots`` independent shots; returns presence flags (and final states)."""
        det = self.detection
        if blowaway is not None and blowaway != det.blowaway_enabled:
            det = DetectionParams(det.eta_op, det.eta_r, det.blowaway_fidelity, det.background_loss, blowaway)
        chunks = [range(s, min(s + CHUNK, n_shots)) for s in range(0, n_shots, CHUNK)]
        horizon = rydberg_horizon(sequence)
        channels = self.channels if horizon > 0 else []

        def work(idx: range):
            rngs = [shot_rng(self.config.seed, stream, point, k) for k in idx]
            durations = [(p.duration, p.trap_on) for p in sequence]
            contexts = [sample_shot_context(self.noise, self.thermal, durations, det.eta_op, r, horizon)
                        for r in rngs]
            states = [self.initial_state(absent, c.prep_error) for c in contexts]
            batch = TrajectoryBatch.from_states(states)
            propagate_batch(batch, self.compile(sequence, contexts), channels, rngs, self.max_step)
            finals = batch.states()
            present = [measure_shot(s, det, r).present for s, r in zip(finals, rngs)]
            return present, finals if collect_states else []

        if self.threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                parts = list(pool.map(work, chunks))
        else:
            parts = [work(c) for c in chunks]
        present = [p for part in parts for p in part[0]]
        states = [s for part in parts for s in part[1]]
        return present, states

    def ensemble(
        self,
        sequence: PulseSequence,
        n_shots: int,
        stream: int,
        absent: tuple[bool, bool] = (False, False),
        observe_every: float | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Shot-averaged populations along one long sequence.

        Returns ``(times, populations)`` sampled after every sub-step. Shots
        share nothing but are not split per time point, so this is the cheap
        route for calibration and dense scans.
        """
        rngs = [shot_rng(self.config.seed, stream, 0, k) for k in range(n_shots)]
        durations = [(p.duration, p.trap_on) for p in sequence]
        horizon = rydberg_horizon(sequence)
        contexts = [sample_shot_context(self.noise, self.thermal, durations, self.detection.eta_op, r, horizon)
                    for r in rngs]
        batch = TrajectoryBatch.from_states([self.initial_state(absent, c.prep_error) for c in contexts])
        start_lost = batch.lost.copy()
        times, pops = [0.0], [np.mean(np.abs(batch.psi) ** 2, axis=0)]

        def observer(t, b):
            amps = b.psi / np.linalg.norm(b.psi, axis=1, keepdims=True)
            p = np.abs(amps) ** 2
            # shots that lost an atom mid-sequence read out as absent
            p[np.any(b.lost != start_lost, axis=1)] = 0.0
            times.append(t)
            pops.append(p.mean(axis=0))

        channels = self.channels if horizon > 0 else []
        propagate_batch(batch, self.compile(sequence, contexts), channels, rngs, self.max_step,
                        observer=observer, observe_every=observe_every or self.max_step)
        return np.array(times), np.array(pops)


def rydberg_horizon(sequence: PulseSequence) -> float:
    """Time at which the last Rydberg pulse ends; 0 if none drives the Rydberg line.

    Nothing can reach ``|r>`` after this point, so phase noise and decay
    sub-stepping are only needed up to it.
    """
    t, end = 0.0, 0.0
    for p in sequence:
        t += p.duration
        if p.drives_rydberg:
            end = t
    return end


class _NoisyDrive:
    """h(t) = h0 + exp(i phi_k(t)) X + h.c. for a batch of phase traces."""

    def __init__(self, h0: np.ndarray, coupling: np.ndarray, traces: Sequence[Callable]):
        self.h0 = h0
        self.coupling = coupling
        self.traces = traces

    def __call__(self, t: float) -> np.ndarray:
        phases = np.array([float(tr(t)) for tr in self.traces])
        f = np.exp(1j * phases)[:, None, None]
        return self.h0 + f * self.coupling + np.conj(f) * self.coupling.conj().T


def noise_from_config(config: ExperimentConfig) -> NoiseParams:
    n = config.noise
    pn = n.phase_noise
    return NoiseParams(
        doppler=n.doppler,
        lightshift=n.lightshift,
        rydberg_decay=n.rydberg_decay,
        prep_error=n.prep_error,
        ground_t2_prime=n.ground_t2_prime_s,
        phase_noise=PhaseNoiseParams(
            model=PhaseNoiseModel(pn.model),
            linewidth=pn.linewidth_kHz * 1e3,
            bump_frequency=pn.bump_frequency_MHz * 1e6,
            bump_amplitude=pn.bump_amplitude_rad,
        ),
    )


# -- shared analysis helpers ---------------------------------------------------


def binomial_error(p: np.ndarray, n: np.ndarray) -> np.ndarray:
    pt = (np.asarray(p) * n + 1) / (n + 2)
    return np.sqrt(pt * (1 - pt) / n)


def _rows(series: str, x, y, yerr, fit_y=None, group_value: float = 0.0) -> list[dict]:
    fit_y = [math.nan] * len(x) if fit_y is None else fit_y
    return [
        {"series": series, "group_value": float(group_value), "x": float(a), "y": float(b),
         "yerr": float(c), "fit_y": float(d)}
        for a, b, c, d in zip(x, y, yerr, fit_y)
    ]


def _fit_summary(fit: analysis.FitResult, scale: dict[str, float]) -> dict:
    out = fit.to_dict()
    for name, factor in scale.items():
        out["params"][name] *= factor
        out["std_errors"][name] *= factor
    return out


def _record(records: ShotRecords, present, series: str, scan_value: float, group_value: float,
            blowaway: bool) -> None:
    records.extend(ShotOutcome(p, float(scan_value), blowaway, series, float(group_value)) for p in present)


def _shots(config: ExperimentConfig, shots: int | None) -> int:
    return int(shots) if shots is not None else config.scan.shots_per_point


def _rabi_fit_rows(series, x, y, n, fit_x_scale=1.0):
    yerr = binomial_error(y, n)
    fit = analysis.fit_damped_rabi(x, y, sigma=yerr)
    return fit, _rows(series, x, y, yerr, fit(x))


# -- ground-state Rabi ---------------------------------------------------------


def simulate_rabi_ground(sim: Simulator, shots: int | None = None, blowaway: bool | None = None) -> ShotRecords:
    cfg = sim.config
    n = _shots(cfg, shots)
    bl = sim.detection.blowaway_enabled if blowaway is None else blowaway
    records = ShotRecords()
    for k, t in enumerate(grid(cfg.scan.rabi_ground_us, 1e-6)):
        seq = PulseSequence((Pulse((sim.raman(),), t, label="raman"),), cfg.sequence.hardware_grid)
        present, _ = sim.run_shots(seq, n, STREAMS["rabi-ground"], k, blowaway=bl)
        _record(records, present, "rabi", t, 0.0, bl)
    return records


def analyze_rabi_ground(records: ShotRecords, config: ExperimentConfig) -> tuple[list[dict], dict]:
    table = records.table("rabi")
    summary, result = [], {}
    for atom in (0, 1):
        y = table.presence(atom)
        fit, rows = _rabi_fit_rows(f"atom{atom + 1}", table.scan_values, y, table.totals)
        summary += rows
        result[f"atom{atom + 1}"] = {
            "fit": fit.to_dict(),
            "rabi_MHz": fit["rabi"] / TWO_PI / 1e6,
            "rabi_MHz_err": fit.error("rabi") / TWO_PI / 1e6,
            "pi_time_ns": math.pi / fit["rabi"] * 1e9,
            "max_transfer": float(y.max()),
        }
    return summary, result


# -- ground-state Ramsey (with and without echo) -------------------------------


def _ground_ramsey_sequence(sim: Simulator, hold: float, phase: float, echo: bool) -> PulseSequence:
    half = math.pi / (2 * sim.rabi_raman)
    pulses = [Pulse((sim.raman(),), half, trap_on=True, label="pi/2")]
    if echo:
        pulses += [
            Pulse((), hold / 2, trap_on=True, label="hold"),
            Pulse((sim.raman(),), 2 * half, trap_on=True, label="echo pi"),
            Pulse((), hold / 2, trap_on=True, label="hold"),
        ]
    else:
        pulses.append(Pulse((), hold, trap_on=True, label="hold"))
    pulses.append(Pulse((sim.raman(phase),), half, trap_on=True, label="pi/2"))
    return PulseSequence(tuple(pulses), sim.config.sequence.hardware_grid)


def fringe_phases(points: int) -> np.ndarray:
    return TWO_PI * np.arange(points) / points


def simulate_ramsey_ground(sim: Simulator, shots: int | None = None, blowaway: bool | None = None) -> ShotRecords:
    cfg = sim.config
    n = _shots(cfg, shots)
    bl = sim.detection.blowaway_enabled if blowaway is None else blowaway
    records = ShotRecords()
    point = 0
    for series, bounds, echo in (("ramsey", cfg.scan.ramsey_ground_ms, False),
                               ("echo", cfg.scan.echo_ground_ms, True)):
        for hold in grid(bounds, 1e-3):
            for phase in fringe_phases(cfg.scan.ground_fringe_points):
                seq = _ground_ramsey_sequence(sim, hold, phase, echo)
                present, _ = sim.run_shots(seq, n, STREAMS["ramsey-ground"], point, blowaway=bl)
                _record(records, present, series, phase, hold, bl)
                point += 1
    return records


def _visibility_series(records: ShotRecords, series: str, frequency: Callable[[float], float],
                       fit_frequency: bool, atoms=(0, 1)):
    """Visibility per hold time of the (atom-averaged) fringe, with bootstrap-free errors."""
    holds, vis, errs, rows = [], [], [], []
    for g in records.group_values(series):
        table = records.table(series, g)
        y = np.mean([table.presence(a) for a in atoms], axis=0)
        n = table.totals * len(atoms)
        freq = frequency(g)
        v = analysis.fringe_visibility(table.scan_values, y, freq, fit_frequency)
        fit = analysis.fit_fringe(table.scan_values, y, freq, fit_frequency)
        yerr = binomial_error(y, n)
        mean = max(fit["mean"], 1e-9)
        # amplitude error of an N-point sinusoid fit is sqrt(2/N) * point error
        v_err = float(np.sqrt(2.0 / len(y)) * np.mean(yerr) / mean)
        holds.append(g)
        vis.append(v)
        errs.append(max(v_err, 1e-3))
        rows += _rows(f"{series}_fringe", table.scan_values, y, yerr, fit(table.scan_values), g)
    return np.array(holds), np.array(vis), np.array(errs), rows


def analyze_ramsey_ground(records: ShotRecords, config: ExperimentConfig) -> tuple[list[dict], dict]:
    summary, result = [], {}
    holds, vis, errs, rows = _visibility_series(records, "ramsey", lambda g: 1.0, False)
    summary += rows
    fit = analysis.fit_ramsey_t2star(holds, np.clip(vis, 0, 1), sigma=errs)
    summary += _rows("ramsey_visibility", holds, vis, errs, fit(holds))
    result["t2star_ms"] = fit["t2star"] * 1e3
    result["t2star_ms_err"] = fit.error("t2star") * 1e3
    result["ramsey_fit"] = fit.to_dict()
    holds, vis, errs, rows = _visibility_series(records, "echo", lambda g: 1.0, False)
    summary += rows
    efit = analysis.fit_ramsey_echo(holds, np.clip(vis, 0, 1), sigma=errs)
    summary += _rows("echo_visibility", holds, vis, errs, efit(holds))
    result["t2prime_s"] = efit["t2"]
    result["t2prime_s_err"] = efit.error("t2")
    result["echo_fit"] = efit.to_dict()
    return summary, result


# -- single-atom Rydberg Rabi --------------------------------------------------


def simulate_rabi_rydberg(sim: Simulator, shots: int | None = None, blowaway: bool | None = None) -> ShotRecords:
    cfg = sim.config
    n = _shots(cfg, shots)
    records = ShotRecords()
    for k, t in enumerate(grid(cfg.scan.rabi_rydberg_us, 1e-6)):
        seq = PulseSequence((Pulse((sim.rydberg(),), t, label="rydberg"),), cfg.sequence.hardware_grid)
        present, _ = sim.run_shots(seq, n, STREAMS["rabi-rydberg"], k, absent=(False, True), blowaway=False)
        _record(records, present, "rabi", t, 0.0, False)
    return records


def analyze_rabi_rydberg(records: ShotRecords, config: ExperimentConfig) -> tuple[list[dict], dict]:
    table = records.table("rabi")
    y = table.presence(0)
    fit, rows = _rabi_fit_rows("atom1", table.scan_values, y, table.totals)
    return rows, {
        "fit": fit.to_dict(),
        "rabi_MHz": fit["rabi"] / TWO_PI / 1e6,
        "rabi_MHz_err": fit.error("rabi") / TWO_PI / 1e6,
        "tau_us": fit["tau"] * 1e6,
        "tau_us_err": fit.error("tau") * 1e6,
        "min_presence": float(y.min()),
    }


# -- ground-Rydberg Ramsey -----------------------------------------------------


def rydberg_pi2_time(sim: Simulator) -> float:
    return math.pi / (2 * sim.rabi_rydberg)


def effective_free_time(sim: Simulator, hold: float) -> float:
    """Free-precession time including the finite pi/2 pulses (4 t_pi2 / pi)."""
    return hold + 4 * rydberg_pi2_time(sim) / math.pi


def rydberg_detunings(sim: Simulator, hold: float, points: int) -> np.ndarray:
    period = TWO_PI / effective_free_time(sim, hold)
    return (np.arange(points) / points - 0.5) * period


def simulate_ramsey_rydberg(sim: Simulator, shots: int | None = None, blowaway: bool | None = None) -> ShotRecords:
    cfg = sim.config
    n = _shots(cfg, shots)
    records = ShotRecords()
    t2 = rydberg_pi2_time(sim)
    point = 0
    for hold in grid(cfg.scan.ramsey_rydberg_us, 1e-6):
        for delta in rydberg_detunings(sim, hold, cfg.scan.rydberg_fringe_points):
            free = DriveParams(Transition.RYDBERG1R, 0.0, detuning=delta)
            seq = PulseSequence((
                Pulse((sim.rydberg(delta),), t2, label="pi/2"),
                Pulse((free,), hold, label="hold"),
                Pulse((sim.rydberg(delta),), t2, label="pi/2"),
            ), cfg.sequence.hardware_grid)
            present, _ = sim.run_shots(seq, n, STREAMS["ramsey-rydberg"], point, absent=(False, True),
                                       blowaway=False)
            _record(records, present, "ramsey", delta, hold, False)
            point += 1
    return records


def analyze_ramsey_rydberg(records: ShotRecords, config: ExperimentConfig) -> tuple[list[dict], dict]:
    sim = Simulator(config)
    holds, vis, errs, rows = _visibility_series(
        records, "ramsey", lambda g: effective_free_time(sim, g), False, atoms=(0,))
    fit = analysis.fit_ramsey_t2star(holds, np.clip(vis, 0, 1), sigma=errs)
    rows += _rows("visibility", holds, vis, errs, fit(holds))
    return rows, {
        "t2star_us": fit["t2star"] * 1e6,
        "t2star_us_err": fit.error("t2star") * 1e6,
        "fit": fit.to_dict(),
        "visibility": {f"{h * 1e6:.3f}us": float(v) for h, v in zip(holds, vis)},
    }


# -- blockade ------------------------------------------------------------------


def simulate_blockade(sim: Simulator, shots: int | None = None, blowaway: bool | None = None,
                      modes: Sequence[str] = ("single", "pair")) -> tuple[ShotRecords, dict]:
    cfg = sim.config
    n = _shots(cfg, shots)
    records = ShotRecords()
    extras = {}
    for m_idx, mode in enumerate(modes):
        absent = (False, True) if mode == "single" else (False, False)
        max_rr = 0.0
        for k, t in enumerate(grid(cfg.scan.blockade_us, 1e-6)):
            seq = PulseSequence((Pulse((sim.rydberg(),), t, label="rydberg"),), cfg.sequence.hardware_grid)
            present, states = sim.run_shots(seq, n, STREAMS["blockade"] * 16 + m_idx, k, absent=absent,
                                            blowaway=False, collect_states=True)
            rr = np.mean([abs(s.amplitudes[basis_index(LEVEL_R, LEVEL_R)]) ** 2 for s in states])
            max_rr = max(max_rr, float(rr))
            _record(records, present, mode, t, 0.0, False)
        extras[f"{mode}_max_mean_P_rr"] = max_rr
    return records, extras


def analyze_blockade(records: ShotRecords, config: ExperimentConfig) -> tuple[list[dict], dict]:
    summary, result = [], {}
    names = records.series_names()
    freqs = {}
    for mode in names:
        table = records.table(mode)
        y = table.presence(0) if mode == "single" else table.both()
        fit, rows = _rabi_fit_rows(mode, table.scan_values, y, table.totals)
        summary += rows
        freqs[mode] = (fit["rabi"], fit.error("rabi"))
        result[mode] = {
            "fit": fit.to_dict(),
            "rabi_MHz": fit["rabi"] / TWO_PI / 1e6,
            "rabi_MHz_err": fit.error("rabi") / TWO_PI / 1e6,
            "tau_us": fit["tau"] * 1e6,
        }
    if "single" in freqs and "pair" in freqs:
        (w1, e1), (w2, e2) = freqs["single"], freqs["pair"]
        ratio = w2 / w1
        result["enhancement_ratio"] = ratio
        result["enhancement_ratio_err"] = ratio * math.hypot(e1 / w1, e2 / w2)
    return summary, result


# -- Bell-state preparation and parity -----------------------------------------


def bell_thetas(points: int) -> np.ndarray:
    return TWO_PI * np.arange(points) / points


def simulate_bell(sim: Simulator, shots: int | None = None, blowaway: bool | None = None) -> tuple[ShotRecords, dict]:
    cfg = sim.config
    n = _shots(cfg, shots)
    bl = sim.detection.blowaway_enabled if blowaway is None else blowaway
    records = ShotRecords()
    base = sim.bell_sequence()
    fidelities = []
    point = 0
    for series, mode in (("parity", bl), ("recapture", False)):
        for theta in bell_thetas(cfg.scan.bell_theta_points):
            rot = PulseSequence((Pulse((sim.raman(),), theta / sim.rabi_raman, trap_on=True, label="rotation"),),
                                cfg.sequence.hardware_grid)
            present, states = sim.run_shots(base + rot, n, STREAMS["bell"], point, blowaway=mode,
                                            collect_states=(series == "parity" and theta == 0))
            if states:
                target = np.zeros(9, dtype=complex)
                target[[basis_index(LEVEL_0, LEVEL_1), basis_index(LEVEL_1, LEVEL_0)]] = 1 / math.sqrt(2)
                fidelities = [abs(np.vdot(target, s.amplitudes)) ** 2 if not any(s.frozen) else 0.0
                              for s in states]
            _record(records, present, series, theta, 0.0, mode)
            point += 1
    extras = {
        "sequence_duration_us": base.duration * 1e6,
        "mean_state_fidelity": float(np.mean(fidelities)) if fidelities else math.nan,
    }
    return records, extras


def analyze_bell(records: ShotRecords, config: ExperimentConfig, raw_bins: bool = False) -> tuple[list[dict], dict]:
    scan = records.table("parity")
    recap = records.table("recapture")
    est = analysis.bell_fidelity(scan, recap, bootstrap=config.scan.bootstrap, seed=config.seed, raw_bins=raw_bins)
    theta = scan.scan_values
    n = scan.totals
    p = scan.probabilities
    par = p[:, 0] + p[:, 3] - p[:, 1] - p[:, 2]
    par_err = np.sqrt(np.clip(1 - par**2, 1.0 / n, None) / n)
    pf = est.parity_fit["params"]
    fit_par = analysis.fitting.parity_model(theta, pf["P0"], pf["A"], pf["B"])
    summary = _rows("parity", theta, par, par_err, fit_par)
    both = scan.both()
    summary += _rows("p00", theta, both, binomial_error(both, n))
    return summary, {"bell": est.to_dict()}


# -- calibration ---------------------------------------------------------------


def expected_presence_single(sim: Simulator, pops: np.ndarray) -> np.ndarray:
    """Readout-weighted presence of atom 1 from ensemble populations (no blow-away)."""
    p1 = pops[:, basis_index(LEVEL_1, PARK_LOST)]
    pr = pops[:, basis_index(LEVEL_R, PARK_LOST)]
    p0 = pops[:, basis_index(LEVEL_0, PARK_LOST)]
    return (p0 + p1 + (1 - sim.detection.eta_r) * pr) * (1 - sim.detection.background_loss)


def fit_flop(sim: Simulator, duration: float = 6e-6, n_shots: int = 300, stream: int = 99) -> analysis.FitResult:
    """Damped-Rabi fit of the single-atom Rydberg flop under ``sim``'s noise."""
    seq = PulseSequence((Pulse((sim.rydberg(),), duration),))
    times, pops = sim.ensemble(seq, n_shots, stream, absent=(False, True), observe_every=50e-9)
    return analysis.fit_damped_rabi(times, expected_presence_single(sim, pops))


def damping_time(sim: Simulator, duration: float = 6e-6, n_shots: int = 300, stream: int = 99) -> float:
    """1/e damping time of the single-atom Rydberg flop."""
    return fit_flop(sim, duration, n_shots, stream)["tau"]


def calibrate_phase_noise(
    config: ExperimentConfig,
    target_tau: float = 3.2e-6,
    model: str | None = None,
    n_shots: int = 300,
    bracket: tuple[float, float] | None = None,
    match_rabi: bool = True,
) -> dict:
    """Tune the phase noise so the single-atom flop damps in ``target_tau``.

    The noise strength is found by a bracketing root search. With
    ``match_rabi`` the drive scale is adjusted at each trial strength so the
    fitted flop frequency equals the configured (measured) Rabi frequency.
    Common random numbers across trials keep the damping time smooth in the
    strength.
    """
    model = model or config.noise.phase_noise.model
    if model == "off":
        raise ValueError("choose a phase-noise model to calibrate")
    key = "bump_amplitude_rad" if model == "servo_bump" else "linewidth_kHz"
    lo, hi = bracket or ((0.2, 0.9) if model == "servo_bump" else (50.0, 400.0))
    target_rabi = mhz(config.physics.rabi_rydberg_MHz)
    scales: dict[float, float] = {}

    def trial(strength: float) -> tuple[float, float]:
        scale = 1.0
        for _ in range(6 if match_rabi else 1):
            cfg = config.replace(**{
                "noise.phase_noise.model": model,
                f"noise.phase_noise.{key}": strength,
                "noise.phase_noise.drive_scale": scale,
            })
            fit = fit_flop(Simulator(cfg), n_shots=n_shots)
            if not match_rabi or abs(fit["rabi"] / target_rabi - 1) < 1e-3:
                break
            scale *= target_rabi / fit["rabi"]
        scales[strength] = scale
        log.info("calibration: %s=%.5g scale=%.4f -> tau=%.3f us", key, strength, scale, fit["tau"] * 1e6)
        return fit["tau"], scale

    f = lambda s: math.log(trial(s)[0] / target_tau)  # noqa: E731
    strength = optimize.brentq(f, lo, hi, xtol=1e-4 * lo, rtol=1e-4)
    tau, scale = trial(strength)
    return {"model": model, "key": key, "value": strength, "drive_scale": scale, "tau_us": tau * 1e6}


SIMULATE = {
    "rabi-ground": simulate_rabi_ground,
    "ramsey-ground": simulate_ramsey_ground,
    "rabi-rydberg": simulate_rabi_rydberg,
    "ramsey-rydberg": simulate_ramsey_rydberg,
    "blockade": simulate_blockade,
    "bell": simulate_bell,
}

ANALYZE = {
    "rabi-ground": analyze_rabi_ground,
    "ramsey-ground": analyze_ramsey_ground,
    "rabi-rydberg": analyze_rabi_rydberg,
    "ramsey-rydberg": analyze_ramsey_rydberg,
    "blockade": analyze_blockade,
    "bell": analyze_bell,
}


def analyze(name: str, records: ShotRecords, config: ExperimentConfig, raw_bins: bool = False):
    if name == "bell":
        return analyze_bell(records, config, raw_bins=raw_bins)
    return ANALYZE[name](records, config)


def run(name: str, config: ExperimentConfig, shots: int | None = None, threads: int = 1,
        blowaway: bool | None = None, raw_bins: bool = False) -> Output:
    if name not in SIMULATE:
        raise KeyError(f"unknown experiment {name!r}")
    sim = Simulator(config, threads=threads)
    out = SIMULATE[name](sim, shots=shots, blowaway=blowaway)
    records, extras = out if isinstance(out, tuple) else (out, {})
    summary, result = analyze(name, records, config, raw_bins=raw_bins)
    return Output(name, records, summary, {"experiment": name, "analysis": result, "simulation": extras})
