"""Utility-shock laws and their equally weighted discrete approximations.

All sampling goes through :func:`numpy.random.default_rng` (PCG64) seeded with
an explicit integer.  The seed-to-matrix mapping for each family is:

* ``GumbelIID``: ``rng.gumbel(0, scale, size=(S, dim))``.
* ``MultivariateNormal``: ``z = rng.standard_normal((S, dim))`` then
  ``mean + z @ L.T`` where ``L`` is the lower semidefinite Cholesky factor of
  the covariance (zero columns for zero pivots).
* ``Mixture``: one ``rng.random(S)`` call picks components (inverse CDF over
  the cumulative weights); then every component draws a full ``S``-row block in
  listed order and rows are taken from the block of their component.

Binary problems built from a law on the difference ``eps_0 - eps_1`` carry the
difference in column 0 and a constant zero in column 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ValidationError

__all__ = [
    "GumbelIID",
    "MultivariateNormal",
    "Mixture",
    "StateDependentNormalMixture",
    "ShockSpec",
    "DiscreteShocks",
    "discretize",
    "sample",
    "mixture_for_state",
    "derive_seed",
    "shocks_per_state",
]

WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GumbelIID:
    """I.i.d. type-I extreme value shocks with location 0 (mean ``scale * gamma``)."""

    scale: float = 1.0
    dim: int = 2

    def __post_init__(self):
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise ValidationError(f"GumbelIID.scale must be positive, got {self.scale}")
        _check_dim(self.dim)


@dataclass(frozen=True, eq=False)
class MultivariateNormal:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValidationError(
                f"MultivariateNormal.cov has shape {cov.shape}, expected {(mean.size, mean.size)}"
            )
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise ValidationError("MultivariateNormal.cov must be symmetric")
        if np.linalg.eigvalsh(cov).min() < -1e-10 * max(1.0, np.abs(cov).max()):
            raise ValidationError("MultivariateNormal.cov must be positive semi-definite")
        _check_dim(mean.size)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True, eq=False)
class Mixture:
    weights: np.ndarray
    components: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        comps = tuple(self.components)
        if len(comps) == 0 or w.size != len(comps):
            raise ValidationError("Mixture.weights must have one entry per component")
        if (w < 0).any() or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"Mixture.weights must be nonnegative and sum to 1, got {w.tolist()}")
        dims = {c.dim for c in comps}
        if len(dims) != 1:
            raise ValidationError(f"Mixture.components disagree on dimension: {sorted(dims)}")
        if any(isinstance(c, StateDependentNormalMixture) for c in comps):
            raise ValidationError("Mixture.components cannot be state dependent")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        return self.components[0].dim


@dataclass(frozen=True, eq=False)
class StateDependentNormalMixture:
    """Binary-choice difference law ``b*N(0,1) + (1-b)*N(0, 1/(1+a*x))`` at state ``x``."""

    a: float
    b: float
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        if not 0.0 <= self.b <= 1.0:
            raise ValidationError(f"StateDependentNormalMixture.b must lie in [0, 1], got {self.b}")
        if not np.isfinite(self.a):
            raise ValidationError("StateDependentNormalMixture.a must be finite")

    def at_state(self, x: float) -> "ShockSpec":
        return mixture_for_state(self.a, self.b, x)


ShockSpec = Union[GumbelIID, MultivariateNormal, Mixture, StateDependentNormalMixture]


def _check_dim(dim):
    if int(dim) != dim or dim < 2:
        raise ValidationError(f"shock dimension must be an integer >= 2, got {dim}")


def mixture_for_state(a: float, b: float, x: float) -> ShockSpec:
    """Two-component normal mixture for the replacement application at state ``x``.

    Component weights are ``(b, 1-b)`` with variances ``(1, 1/(1+a*x))``.  When
    ``b`` is 0 or 1 the mixture collapses to the surviving normal.
    """
    if not 0.0 <= b <= 1.0:
        raise ValidationError(f"mixture weight b must lie in [0, 1], got {b}")
    denom = 1.0 + a * x
    if not denom > 0:
        raise ValidationError(f"variance 1/(1+a*x) is not positive for a={a}, x={x}")
    first = _difference_normal(1.0)
    second = _difference_normal(1.0 / denom)
    if b == 1.0:
        return first
    if b == 0.0:
        return second
    return Mixture(weights=np.array([b, 1.0 - b]), components=(first, second))


def _difference_normal(var):
    return MultivariateNormal(mean=np.zeros(2), cov=np.array([[var, 0.0], [0.0, 0.0]]))


def _psd_cholesky(cov):
    """Lower factor L with L @ L.T == cov, tolerating zero pivots."""
    n = cov.shape[0]
    L = np.zeros_like(cov)
    scale = max(1.0, float(np.abs(cov).max()))
    for j in range(n):
        d = cov[j, j] - L[j, :j] @ L[j, :j]
        if d <= 1e-14 * scale:
            continue
        L[j, j] = np.sqrt(d)
        L[j + 1 :, j] = (cov[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def sample(spec: ShockSpec, n: int, rng: np.random.Generator, state=None) -> np.ndarray:
    """Draw ``n`` shock vectors (an ``n x dim`` array) from ``spec``.

    ``state`` is required for :class:`StateDependentNormalMixture`; it may be a
    scalar or a length-``n`` array of states (one per draw).
    """
    if isinstance(spec, GumbelIID):
        return rng.gumbel(0.0, spec.scale, size=(n, spec.dim))
    if isinstance(spec, MultivariateNormal):
        z = rng.standard_normal((n, spec.dim))
        return spec.mean + z @ _psd_cholesky(spec.cov).T
    if isinstance(spec, Mixture):
        labels = np.searchsorted(np.cumsum(spec.weights), rng.random(n), side="right")
        labels = np.minimum(labels, len(spec.components) - 1)
        out = np.empty((n, spec.dim))
        for k, comp in enumerate(spec.components):
            block = sample(comp, n, rng)
            mask = labels == k
            out[mask] = block[mask]
        return out
    if isinstance(spec, StateDependentNormalMixture):
        if state is None:
            raise ValidationError("a state is required to sample a state-dependent shock law")
        if np.ndim(state) == 0:
            return sample(spec.at_state(float(state)), n, rng)
        x = np.asarray(state, dtype=float)
        if x.shape != (n,):
            raise ValidationError(f"state array must have shape ({n},)")
        if not (1.0 + spec.a * x > 0).all():
            raise ValidationError("variance 1/(1+a*x) is not positive at some state")
        first = rng.random(n) < spec.b
        z = rng.standard_normal(n)
        out = np.zeros((n, 2))
        out[:, 0] = np.where(first, z, z / np.sqrt(1.0 + spec.a * x))
        return out
    raise ValidationError(f"unknown shock spec {type(spec).__name__}")


@dataclass(frozen=True, eq=False)
class DiscreteShocks:
    """``S`` equally weighted support points of a shock law (rows of ``points``)."""

    points: np.ndarray
    seed: int | None = None
    source: ShockSpec | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(np.atleast_2d(np.asarray(self.points, dtype=float)))
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValidationError(f"points must be a nonempty S x |Y| matrix, got shape {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValidationError("points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def S(self) -> int:
        return self.points.shape[0]

    @property
    def n_actions(self) -> int:
        return self.points.shape[1]

    @property
    def weight(self) -> float:
        return 1.0 / self.S

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["s"] + [f"eps_{y}" for y in range(self.n_actions)])
            for s, row in enumerate(self.points):
                writer.writerow([s] + [repr(float(v)) for v in row])


def discretize(spec: ShockSpec, S: int, seed: int, state=None) -> DiscreteShocks:
    """Draw ``S`` i.i.d. points from ``spec`` under ``seed``, each with weight ``1/S``."""
    if int(S) != S or S < 1:
        raise ValidationError(f"S must be a positive integer, got {S}")
    if isinstance(spec, StateDependentNormalMixture):
        if state is None:
            raise ValidationError("a state is required to discretize a state-dependent shock law")
        source = spec.at_state(state)
    else:
        source = spec
    rng = np.random.default_rng(seed)
    return DiscreteShocks(points=sample(source, int(S), rng), seed=seed, source=source)


def derive_seed(master: int, *keys: int) -> int:
    """Child seed for stream ``keys`` under ``master`` (SeedSequence entropy mixing)."""
    ss = np.random.SeedSequence([int(master), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def shocks_per_state(spec: ShockSpec, S: int, seed: int, states: Sequence) -> list[DiscreteShocks]:
    """One discretization per state.

    State-independent laws reuse a single draw for every state; state-dependent
    laws use the same seed at every state (common random numbers), so only the
    scale of each row changes across states.
    """
    if isinstance(spec, StateDependentNormalMixture):
        return [discretize(spec, S, seed, state=x) for x in states]
    shared = discretize(spec, S, seed)
    return [shared] * len(states)
