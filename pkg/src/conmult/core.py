"""Exact primitives for constrained multinomial models on the probability simplex.

Everything here is a pure function of immutable values: simplex/count types,
the bijection between ordered probability vectors and unconstrained weights,
Zipf-Mandelbrot probabilities, KL divergence, constraint-region membership,
and closed-form log densities.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

SIMPLEX_SUM_TOL = 1e-12
EQUALITY_TOL = 1e-9


class MeasureZeroRegionError(ValueError):
    """Raised when a check needs positive prior mass but the region has none."""


def _readonly(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SimplexPoint:
    """A probability vector (p_1, ..., p_{k+1}) with nonnegative entries summing to 1."""

    probs: np.ndarray

    def __post_init__(self):
        arr = _readonly(self.probs)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("simplex point needs at least 2 coordinates")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("simplex coordinates must be finite and >= 0")
        if abs(arr.sum() - 1.0) > SIMPLEX_SUM_TOL:
            raise ValueError(f"coordinates sum to {arr.sum()!r}, not 1")
        object.__setattr__(self, "probs", arr)

    @property
    def k(self):
        return self.probs.size - 1

    def __len__(self):
        return self.probs.size


@dataclass(frozen=True)
class CountVector:
    """Multinomial counts (t_1, ..., t_{k+1}) with total n >= 1."""

    counts: np.ndarray

    def __post_init__(self):
        arr = np.array(self.counts)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("count vector needs at least 2 cells")
        if np.any(arr < 0) or not np.all(arr == np.floor(arr)):
            raise ValueError("counts must be nonnegative integers")
        arr = arr.astype(np.int64)
        if arr.sum() < 1:
            raise ValueError("total count must be >= 1")
        arr.flags.writeable = False
        object.__setattr__(self, "counts", arr)

    @property
    def n(self):
        return int(self.counts.sum())

    @property
    def k(self):
        return self.counts.size - 1

    def __len__(self):
        return self.counts.size


@dataclass(frozen=True)
class DirichletParams:
    """Dirichlet concentration parameters, all strictly positive."""

    alphas: np.ndarray

    def __post_init__(self):
        arr = _readonly(self.alphas)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("need at least 2 Dirichlet parameters")
        if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
            raise ValueError("Dirichlet parameters must be finite and > 0")
        object.__setattr__(self, "alphas", arr)

    def __len__(self):
        return self.alphas.size


@dataclass(frozen=True)
class ZmParams:
    """Zipf-Mandelbrot parameters: offset alpha > -1, decay beta >= 0."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > -1):
            raise ValueError(f"alpha must be > -1, got {self.alpha}")
        if not (self.beta >= 0):
            raise ValueError(f"beta must be >= 0, got {self.beta}")


# ---------------------------------------------------------------------------
# ordered probabilities <-> weights
# ---------------------------------------------------------------------------

def ordered_from_weights_array(omega):
    """Vectorized map from weight vectors to decreasing probability vectors.

    theta_i = sum_{j >= i} omega_j / j, applied along the last axis.
    """
    om = np.asarray(omega, dtype=float)
    j = np.arange(1, om.shape[-1] + 1, dtype=float)
    return (om / j)[..., ::-1].cumsum(axis=-1)[..., ::-1]


def weights_from_ordered_array(theta):
    """Inverse of :func:`ordered_from_weights_array` along the last axis.

    omega_i = i * (theta_i - theta_{i+1}) for i <= k, omega_{k+1} = (k+1) theta_{k+1}.
    Does not validate ordering.
    """
    th = np.asarray(theta, dtype=float)
    k1 = th.shape[-1]
    i = np.arange(1, k1, dtype=float)
    head = i * (th[..., :-1] - th[..., 1:])
    tail = k1 * th[..., -1:]
    return np.concatenate([head, tail], axis=-1)


def ordered_from_weights(omega: SimplexPoint) -> SimplexPoint:
    """Turn any simplex point into one with decreasing coordinates.

    The map is a bijection from the simplex onto the closed decreasing cone;
    mass omega_j is spread evenly over the first j coordinates.
    """
    return SimplexPoint(ordered_from_weights_array(omega.probs))


def weights_from_ordered(theta: SimplexPoint) -> SimplexPoint:
    """Invert :func:`ordered_from_weights`; requires decreasing coordinates."""
    th = theta.probs
    diffs = th[:-1] - th[1:]
    bad = np.nonzero(diffs < 0)[0]
    if bad.size:
        i = int(bad[0]) + 1  # positions are 1-based like theta_1 >= ... >= theta_{k+1}
        raise ValueError(
            f"ordering violated at index {i}: theta_{i}={th[i - 1]:.6g} < theta_{i + 1}={th[i]:.6g}"
        )
    return SimplexPoint(weights_from_ordered_array(th))


# ---------------------------------------------------------------------------
# Zipf-Mandelbrot family
# ---------------------------------------------------------------------------

def zm_log_probs_array(alpha, beta, k1):
    """Log probabilities of the ZM(alpha, beta) distribution on k1 cells.

    Broadcasts over array-valued alpha/beta; normalization is done with
    log-sum-exp so large beta cannot overflow.
    """
    a = np.asarray(alpha, dtype=float)[..., None]
    b = np.asarray(beta, dtype=float)[..., None]
    lp = -b * np.log(a + np.arange(1, k1 + 1, dtype=float))
    mx = lp.max(axis=-1, keepdims=True)
    return lp - (mx + np.log(np.exp(lp - mx).sum(axis=-1, keepdims=True)))


def zm_distribution(params: ZmParams, k: int) -> SimplexPoint:
    """Cell probabilities proportional to (alpha + i)^(-beta), i = 1..k+1."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return SimplexPoint(np.exp(zm_log_probs_array(params.alpha, params.beta, k + 1)))


# ---------------------------------------------------------------------------
# KL divergence
# ---------------------------------------------------------------------------

def kl_divergence_array(theta, p):
    """Sum theta_i log(theta_i / p_i) along the last axis, with 0 log 0 = 0.

    Support mismatch (theta_i > 0 where p_i == 0) yields +inf.
    """
    th = np.asarray(theta, dtype=float)
    pp = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(th > 0, th * (np.log(th) - np.log(pp)), 0.0)
    return terms.sum(axis=-1)


def kl_divergence(theta: SimplexPoint, p: SimplexPoint) -> float:
    """KL(theta || p); returns +inf on support mismatch."""
    if len(theta) != len(p):
        raise ValueError("dimension mismatch")
    return float(kl_divergence_array(theta.probs, p.probs))


# ---------------------------------------------------------------------------
# constraint regions
# ---------------------------------------------------------------------------

def trine_overlap_from_angle(phi0: float) -> float:
    """Overlap parameter a = 0.5 sin^2(arccos(cot(2 phi0))) of a trine setup."""
    c = 1.0 / np.tan(2.0 * phi0)
    if abs(c) > 1:
        raise ValueError("cot(2*phi0) must lie in [-1, 1]")
    return float(0.5 * np.sin(np.arccos(c)) ** 2)


def trine_center_matrix(a: float):
    """Center c and quadratic-form matrix C of the trine ellipse for overlap a."""
    if not (0 < a < 0.5):
        raise ValueError(f"a must be in (0, 1/2), got {a}")
    c = 0.5 * np.array([2 * a, 1 - a])
    C = (1.0 / (1 - 2 * a)) * np.array([[(1 - 1 / a) ** 2, 2.0], [2.0, 4.0]])
    return c, C


@dataclass(frozen=True)
class TrineEllipse:
    """Ellipse {(theta_1, theta_2): (theta - c)^t C (theta - c) <= 1} inside the 2-simplex."""

    a: float
    center: np.ndarray = field(init=False, repr=False)
    matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        c, C = trine_center_matrix(self.a)
        object.__setattr__(self, "center", _readonly(c))
        object.__setattr__(self, "matrix", _readonly(C))

    @property
    def dim(self):
        return 3

    def quad_form_array(self, theta12):
        d = np.asarray(theta12, dtype=float) - self.center
        return np.einsum("...i,ij,...j->...", d, self.matrix, d)

    def contains_array(self, theta):
        th = np.asarray(theta, dtype=float)
        return self.quad_form_array(th[..., :2]) <= 1.0


@dataclass(frozen=True)
class OrderedCone:
    """Closed cone of decreasing probability vectors; ties are inside."""

    dim: int

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be >= 2")

    def contains_array(self, theta):
        th = np.asarray(theta, dtype=float)
        return np.all(th[..., :-1] >= th[..., 1:], axis=-1)


@dataclass(frozen=True)
class QuadBall:
    """Sum-of-squares ball with optional linear equality constraints.

    Membership: sum_i theta_i^2 <= bound, and for each (indices, value) pair
    sum of the indexed coordinates equals value within EQUALITY_TOL.
    """

    dim: int
    bound: float
    equalities: tuple = ()

    def __post_init__(self):
        if self.bound <= 0:
            raise ValueError("bound must be > 0")
        eqs = tuple((tuple(int(i) for i in idx), float(v)) for idx, v in self.equalities)
        for idx, _ in eqs:
            if any(i < 0 or i >= self.dim for i in idx):
                raise ValueError("equality index out of range")
        object.__setattr__(self, "equalities", eqs)

    def contains_array(self, theta):
        th = np.asarray(theta, dtype=float)
        ok = (th**2).sum(axis=-1) <= self.bound
        for idx, val in self.equalities:
            ok = ok & (np.abs(th[..., list(idx)].sum(axis=-1) - val) <= EQUALITY_TOL)
        return ok


def symmetric_trine_quadball() -> QuadBall:
    """Sphere-cap form of the symmetric trine constraint on 3 cells."""
    return QuadBall(dim=3, bound=0.5)


def crosshairs_region() -> QuadBall:
    return QuadBall(dim=4, bound=3.0 / 8.0, equalities=(((0, 1), 0.5), ((2, 3), 0.5)))


def tetrahedron_region() -> QuadBall:
    return QuadBall(dim=4, bound=1.0 / 3.0)


def pauli_region() -> QuadBall:
    third = 1.0 / 3.0
    return QuadBall(
        dim=6,
        bound=2.0 / 9.0,
        equalities=(((0, 1), third), ((2, 3), third), ((4, 5), third)),
    )


def region_contains(region, theta: SimplexPoint) -> bool:
    """Membership of a simplex point in a constraint region."""
    if len(theta) != region.dim:
        raise ValueError(f"region has dimension {region.dim}, point has {len(theta)}")
    return bool(region.contains_array(theta.probs))


def trine_prior_mass(a: float) -> float:
    """Uniform-prior mass of the trine ellipse: a * pi * sqrt(1 - 2a).

    The ellipse has area pi / sqrt(det C) and the uniform density on the
    2-simplex is 2, which reduces to this closed form.
    """
    if not (0 < a < 0.5):
        raise ValueError(f"a must be in (0, 1/2), got {a}")
    return float(a * np.pi * np.sqrt(1 - 2 * a))


# ---------------------------------------------------------------------------
# log densities
# ---------------------------------------------------------------------------

def log_multinomial_pmf_array(counts, theta):
    """Multinomial log pmf along the last axis, broadcasting counts vs theta.

    Computed with log-gamma; a zero probability with a positive count gives -inf.
    """
    t = np.asarray(counts, dtype=float)
    th = np.asarray(theta, dtype=float)
    n = t.sum(axis=-1)
    coef = gammaln(n + 1) - gammaln(t + 1).sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(t > 0, t * np.log(th), 0.0)
    return coef + terms.sum(axis=-1)


def log_multinomial_pmf(t: CountVector, theta: SimplexPoint) -> float:
    """Log of the multinomial pmf of counts t under cell probabilities theta."""
    if len(t) != len(theta):
        raise ValueError("dimension mismatch")
    return float(log_multinomial_pmf_array(t.counts, theta.probs))


def log_dirichlet_pdf_array(x, alphas):
    """Dirichlet log density along the last axis (full normalization)."""
    al = np.asarray(alphas, dtype=float)
    xx = np.asarray(x, dtype=float)
    norm = gammaln(al.sum(axis=-1)) - gammaln(al).sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(al != 1.0, (al - 1.0) * np.log(xx), 0.0)
    return norm + terms.sum(axis=-1)
