"""Independent density-matrix oracle for blow-away parity scans."""

import math

import numpy as np

from rydbell.analysis import loss_total
from rydbell.detection import CountsTable

THETA = np.linspace(0, 2 * math.pi, 16, endpoint=False)


def rotation(theta):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]])


def density(p00, p01, p10, p11, re):
    """Qubit-pair density matrix in (|00>, |01>, |10>, |11>) with real rho_01,10."""
    rho = np.diag([p00, p01, p10, p11]).astype(float)
    rho[1, 2] = rho[2, 1] = re
    return rho


def category_probs(rho, l1, l2, theta):
    """Exact (both, only1, only2, none) after a global rotation, blow-away and independent loss.

    An atom is seen when it survives and sits in |0>.
    """
    u = np.kron(rotation(theta), rotation(theta))
    r = u @ rho @ u.T
    q = np.diag(r).real.reshape(2, 2)  # q[a, b]: atom 1 in a, atom 2 in b
    k1, k2 = 1 - l1, 1 - l2
    both = k1 * k2 * q[0, 0]
    only1 = k1 * (q[0, 0] + q[0, 1]) - both
    only2 = k2 * (q[0, 0] + q[1, 0]) - both
    return np.array([both, only1, only2, 1 - both - only1 - only2])


def scan_table(rho, l1, l2, n, rng=None, theta=THETA):
    probs = np.array([category_probs(rho, l1, l2, t) for t in theta])
    probs = np.clip(probs, 0, None)
    probs /= probs.sum(axis=1, keepdims=True)
    if rng is None:
        counts = np.round(probs * n).astype(np.int64)
    else:
        counts = np.array([rng.multinomial(n, p) for p in probs])
    return CountsTable(theta, counts, True)


def recap_table(p_recap, n, rng=None):
    both = round(p_recap * n) if rng is None else int(rng.binomial(n, p_recap))
    return CountsTable([0.0], [[both, 0, 0, n - both]], False)


def truth(rho, l1, l2, p_recap):
    lt = loss_total(l1, l2)
    keep = 1 - lt
    f = keep * (rho[1, 1] + rho[2, 2]) / 2 + keep * rho[1, 2]
    return {
        "p00": keep * rho[0, 0], "p11": keep * rho[3, 3], "p01_plus_p10": keep * (rho[1, 1] + rho[2, 2]),
        "re_coherence": keep * rho[1, 2], "loss1": l1, "loss2": l2, "loss_total": lt,
        "fidelity": f, "fidelity_pairs": f / p_recap, "p_recap": p_recap,
    }


def random_model(rng):
    w = rng.dirichlet([1, 3, 3, 1])
    re = rng.uniform(-1, 1) * math.sqrt(w[1] * w[2])
    re = float(np.clip(re, -(w[1] + w[2]) / 2, (w[1] + w[2]) / 2))
    l1, l2 = rng.uniform(0, 0.3, size=2)
    p_recap = (1 - l1) * (1 - l2) * rng.uniform(0.9, 1.0)
    return density(*w, re), l1, l2, p_recap
