"""Loss-aware Bell-state fidelity from blow-away parity scans.

Input is a :class:`~rydbell.detection.CountsTable` over the global rotation
angle theta (blow-away on, so "present" means ``|0>``) and a recapture table
taken with the blow-away disabled.

For a two-qubit state with populations P00, P11, P01 + P10 and coherence
Re(rho_01,10), both atoms are found in ``|0>`` after a global rotation with
probability::

    P00(theta) = P00 c^4 + P11 s^4 + (P01 + P10 + 2 Re rho_01,10) c^2 s^2

with c = cos(theta/2) and s = sin(theta/2). Averaging over theta gives
<P00> = (P01 + P10 + 3 (P00 + P11) + 2 Re rho_01,10) / 8, and the cos(2 theta)
coefficient of the parity is B = (P00 + P11 - P01 - P10)/2 - Re rho_01,10.
Both relations hold with independent atom loss, which only enters the
single-atom presence probabilities and the trace.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from ..detection import CountsTable
from .fitting import fit_parity

TWO_PI = 2 * math.pi


@dataclass
class BellEstimate:
    p00: float
    p11: float
    p01_plus_p10: float
    re_coherence: float
    loss1: float
    loss2: float
    loss_total: float
    fidelity: float
    fidelity_pairs: float
    p_recap: float
    re_coherence_parity: float
    parity_fit: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    cross_check_ok: bool = True
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


FIELDS = ("p00", "p11", "p01_plus_p10", "re_coherence", "loss1", "loss2", "loss_total",
          "fidelity", "fidelity_pairs", "p_recap", "re_coherence_parity")


def loss_total(l1, l2):
    return l1 + l2 - l1 * l2


def _curve_basis(theta: np.ndarray) -> np.ndarray:
    c2 = np.cos(theta / 2) ** 2
    s2 = np.sin(theta / 2) ** 2
    return np.stack([c2**2, s2**2, c2 * s2], axis=-1)


def _parity_basis(theta: np.ndarray) -> np.ndarray:
    return np.stack([np.ones_like(theta), np.cos(theta), np.cos(2 * theta)], axis=-1)


def _weighted_lstsq(basis: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Batched weighted linear least squares; y, w have shape (..., n)."""
    a = basis[None] * np.sqrt(w)[..., None]
    b = y * np.sqrt(w)
    ata = np.einsum("bni,bnj->bij", a, a)
    atb = np.einsum("bni,bn->bi", a, b)
    return np.linalg.solve(ata, atb[..., None])[..., 0]


def _binomial_weights(p: np.ndarray, n: np.ndarray, weighted: bool) -> np.ndarray:
    if not weighted:
        return np.ones_like(p)
    pt = (p * n + 1) / (n + 2)
    return n / (pt * (1 - pt))


def is_uniform_period(theta: np.ndarray) -> bool:
    th = np.sort(np.mod(theta, TWO_PI))
    if len(th) < 5:
        return False
    step = TWO_PI / len(th)
    return bool(np.allclose(np.diff(th), step, atol=1e-9) and np.isclose(th[0] % step, 0.0, atol=1e-9))


def _periodic_interp(theta: np.ndarray, y: np.ndarray, at: float) -> np.ndarray:
    th = np.mod(theta, TWO_PI)
    order = np.argsort(th)
    th = th[order]
    y = y[..., order]
    xs = np.concatenate([th - TWO_PI, th, th + TWO_PI])
    ys = np.concatenate([y, y, y], axis=-1)
    if y.ndim == 1:
        return np.interp(at, xs, ys)
    return np.array([np.interp(at, xs, row) for row in ys])


def _estimate(theta, counts, recap_both, recap_total, weighted, raw_bins, uniform, warn_list):
    """Vectorized pipeline; ``counts`` has shape (B, n_theta, 4)."""
    n = counts.sum(axis=-1).astype(float)
    frac = counts / n[..., None]
    both, only1, only2, none = (frac[..., k] for k in range(4))

    pres1 = both + only1
    pres2 = both + only2
    l1 = 1 - 2 * pres1.mean(axis=-1)
    l2 = 1 - 2 * pres2.mean(axis=-1)
    lt = loss_total(l1, l2)

    coef = _weighted_lstsq(_curve_basis(theta), both, _binomial_weights(both, n, weighted))
    if raw_bins:
        p00 = _exact_or_interp(theta, both, 0.0, warn_list)
        p11 = _exact_or_interp(theta, both, math.pi, warn_list)
    else:
        p00, p11 = coef[:, 0], coef[:, 1]
    p0110 = 1 - p00 - p11 - lt

    if uniform:
        mean_both = both.mean(axis=-1)
    else:
        mean_both = (3 * coef[:, 0] + 3 * coef[:, 1] + coef[:, 2]) / 8
    re_mean = (8 * mean_both - p0110 - 3 * (p00 + p11)) / 2

    par = both + none - only1 - only2
    par_w = _binomial_weights((1 + par) / 2, n, weighted)
    pcoef = _weighted_lstsq(_parity_basis(theta), par, par_w)
    re_par = (p00 + p11 - p0110) / 2 - pcoef[:, 2]

    fid = p0110 / 2 + re_mean
    p_recap = recap_both / recap_total
    return {
        "p00": p00, "p11": p11, "p01_plus_p10": p0110, "re_coherence": re_mean,
        "loss1": l1, "loss2": l2, "loss_total": lt, "fidelity": fid,
        "fidelity_pairs": fid / p_recap, "p_recap": p_recap, "re_coherence_parity": re_par,
    }


def _exact_or_interp(theta, y, at, warn_list):
    hit = np.flatnonzero(np.isclose(np.mod(theta - at + math.pi, TWO_PI) - math.pi, 0.0, atol=1e-9))
    if len(hit):
        return y[..., hit[0]]
    msg = f"theta grid has no point at {at:.4f} rad; interpolating"
    if msg not in warn_list:
        warn_list.append(msg)
        warnings.warn(msg, stacklevel=3)
    return _periodic_interp(theta, y, at)


def bell_fidelity(
    counts_scan: CountsTable,
    counts_recap: CountsTable,
    bootstrap: int = 1000,
    seed: int = 0,
    raw_bins: bool = False,
    weighted: bool = True,
) -> BellEstimate:
    """Run the full fidelity pipeline with bootstrap uncertainties."""
    if counts_scan.blowaway is False:
        raise ValueError("parity scan must be taken with blow-away enabled")
    if counts_recap.blowaway is True:
        raise ValueError("recapture calibration must be taken without blow-away")
    theta = np.asarray(counts_scan.scan_values, dtype=float)
    counts = np.asarray(counts_scan.counts)
    warn_list: list[str] = []
    uniform = is_uniform_period(theta)
    if not uniform:
        warn_list.append("theta grid is not a uniform full period; <P00> taken from the fitted curve")

    recap_both = float(counts_recap.counts[:, 0].sum())
    recap_total = float(counts_recap.totals.sum())
    point = _estimate(theta, counts[None], np.array([recap_both]), np.array([recap_total]),
                      weighted, raw_bins, uniform, warn_list)
    values = {k: float(v[0]) for k, v in point.items()}

    errors = {}
    if bootstrap > 0:
        rng = np.random.default_rng(seed)
        n = counts.sum(axis=1)
        res = np.empty((bootstrap,) + counts.shape, dtype=np.int64)
        for j in range(len(theta)):
            res[:, j] = rng.multinomial(n[j], counts[j] / n[j], size=bootstrap)
        rc = counts_recap.counts
        rc_both = np.zeros(bootstrap)
        for j in range(len(rc)):
            tot = rc[j].sum()
            rc_both += rng.binomial(tot, rc[j, 0] / tot, size=bootstrap)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            boot = _estimate(theta, res, rc_both, np.full(bootstrap, recap_total),
                             weighted, raw_bins, uniform, [])
        errors = {k: float(np.std(v, ddof=1)) for k, v in boot.items()}

    parity_values = counts[:, 0] + counts[:, 3] - counts[:, 1] - counts[:, 2]
    pfit = fit_parity(theta, parity_values / counts.sum(axis=1))
    cross_ok = True
    if errors:
        sig = math.hypot(errors["re_coherence"], errors["re_coherence_parity"])
        cross_ok = abs(values["re_coherence"] - values["re_coherence_parity"]) <= 3 * sig + 1e-12
        if not cross_ok:
            warn_list.append("coherence estimators disagree by more than 3 sigma")
    return BellEstimate(**values, parity_fit=pfit.to_dict(), errors=errors,
                        cross_check_ok=cross_ok, warnings=warn_list)
