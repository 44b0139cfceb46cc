from .bell import BellEstimate, bell_fidelity, loss_total
from .fitting import (
    FitResult,
    fit_damped_rabi,
    fit_fringe,
    fit_parity,
    fit_ramsey_echo,
    fit_ramsey_t2star,
    fringe_visibility,
    least_squares,
    parity,
    ramsey_envelope,
)

__all__ = [
    "BellEstimate",
    "FitResult",
    "bell_fidelity",
    "fit_damped_rabi",
    "fit_fringe",
    "fit_parity",
    "fit_ramsey_echo",
    "fit_ramsey_t2star",
    "fringe_visibility",
    "least_squares",
    "loss_total",
    "parity",
    "ramsey_envelope",
]
