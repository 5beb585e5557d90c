"""Social surplus, optimal choices and simulated CCPs on discretized shocks.

Closed-form logit expressions (i.i.d. Gumbel(0, 1) shocks) are included as
oracles for the transport inversion.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import NotInteriorError, ValidationError
from .shocks import DiscreteShocks

EULER_GAMMA = 0.5772156649015329
SIMPLEX_TOL = 1e-12

__all__ = [
    "EULER_GAMMA",
    "check_ccp",
    "is_interior",
    "surplus_value",
    "argmax_choice",
    "choice_probs",
    "count_ties",
    "logit_surplus",
    "logit_ccp",
    "logit_oracle_w0",
    "logit_gstar",
]


def check_ccp(p, interior: bool = False) -> np.ndarray:
    """Validate a probability vector and return it as a float array."""
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size < 1 or not np.isfinite(p).all():
        raise ValidationError("CCP vector must be a nonempty finite vector")
    if (p < 0).any() or abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise ValidationError(f"CCP vector is not on the simplex: {p.tolist()}")
    if interior and not (p > 0).all():
        raise NotInteriorError("CCP not interior: payoffs not point-identified")
    return p


def is_interior(p) -> bool:
    return bool((np.asarray(p) > 0).all())


def _points(shocks):
    return shocks.points if isinstance(shocks, DiscreteShocks) else np.atleast_2d(shocks)


def _payoff(w, n):
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != n:
        raise ValidationError(f"payoff vector has {w.size} entries, shocks have {n} actions")
    if not np.isfinite(w).all():
        raise ValidationError("payoff vector must be finite")
    return w


def _ordered_mean(values):
    # sequential index-ascending sum, reproducible bit-for-bit
    return float(np.cumsum(values)[-1] / values.size)


def surplus_value(w, shocks) -> float:
    """G(w) = (1/S) sum_s max_y (w_y + eps^s_y)."""
    pts = _points(shocks)
    w = _payoff(w, pts.shape[1])
    return _ordered_mean((pts + w).max(axis=1))


def argmax_choice(w, eps) -> int:
    """Lowest-index maximizer of ``w_y + eps_y``."""
    eps = np.asarray(eps, dtype=float).reshape(-1)
    w = _payoff(w, eps.size)
    return int(np.argmax(w + eps))


def choice_probs(w, shocks) -> np.ndarray:
    """Fraction of support points at which each action is optimal (ties to lowest index)."""
    pts = _points(shocks)
    w = _payoff(w, pts.shape[1])
    choice = np.argmax(pts + w, axis=1)
    return np.bincount(choice, minlength=pts.shape[1]) / pts.shape[0]


def count_ties(w, shocks, atol: float = 0.0) -> int:
    """Number of support points whose maximum is attained by more than one action."""
    pts = _points(shocks)
    v = pts + _payoff(w, pts.shape[1])
    top = v.max(axis=1, keepdims=True)
    return int(((v >= top - atol).sum(axis=1) > 1).sum())


def logit_surplus(w) -> float:
    """Exact G for i.i.d. Gumbel(0, 1): log sum exp(w) + gamma."""
    return float(logsumexp(np.asarray(w, dtype=float)) + EULER_GAMMA)


def logit_ccp(w) -> np.ndarray:
    return softmax(np.asarray(w, dtype=float))


def logit_oracle_w0(p) -> np.ndarray:
    """Normalized logit payoffs ``log p - gamma`` (the element with G(w0) = 0)."""
    p = check_ccp(p, interior=True)
    return np.log(p) - EULER_GAMMA


def logit_gstar(p) -> float:
    """Logit conjugate ``sum p log p - gamma``; infinite (an error) off the interior."""
    p = check_ccp(p)
    if not is_interior(p):
        raise NotInteriorError("logit G* is +inf on the boundary of the simplex")
    return float(p @ np.log(p) - EULER_GAMMA)
