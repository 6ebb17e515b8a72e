"""The dual side of the row-sparse multi-task model.

The dual problem is a projection: the optimal dual point at level lam is the
Euclidean projection of y/lam onto the feasible set
F = {theta : sum_t <x_l_t, theta_t>^2 <= 1 for every feature l}. This module
evaluates the per-feature constraint, the smallest all-zero regularization
level ``lambda_max``, dual recovery from a primal iterate, and a certified
ball that contains the exact dual optimum at a target level given a solved
reference level.

Geometry of the ball: with reference point theta0 at level lambda0 and its
outward normal n0, the residual r = y/lam - theta0 is split into the
component along n0 and the orthogonal remainder r_perp; the exact dual
optimum lies in the ball centered at theta0 + r_perp/2 with radius
``norm(r_perp)/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    DualPoint,
    MultiTaskDataset,
    as_dual_vector,
    as_weight_values,
    stack_response,
)
from .errors import (
    DegenerateData,
    IndexOutOfRange,
    LambdaOutOfRange,
    NegativeInnerProduct,
    NonPositiveLambda,
    ZeroNormal,
)

__all__ = [
    "feature_constraint",
    "feature_constraint_all",
    "feature_constraint_grad",
    "dual_feasibility_violation",
    "lambda_max",
    "dual_from_primal",
    "normal_vector",
    "ReferenceSolution",
    "DualBall",
    "dual_ball",
]

# lambda0 == lambda_max is detected to this relative tolerance
LAMBDA_EQ_RTOL = 1e-12
# below this (times ||y||/lambda0) a normal vector counts as zero
ZERO_NORMAL_RTOL = 1e-14
# sign checks tolerate this times the product of operand norms
SIGN_RTOL = 1e-9


def _check_ell(ds, ell):
    ell = int(ell)
    if not 0 <= ell < ds.d:
        raise IndexOutOfRange(f"feature index {ell} outside [0, {ds.d})")
    return ell


def _blocks_of(ds, theta):
    v = as_dual_vector(theta, ds.N)
    out = []
    off = 0
    for n in ds.n_per_task:
        out.append(v[off : off + n])
        off += n
    return out


def feature_constraint(ds, theta, ell):
    """Constraint value of one feature: sum_t <x_l_t, theta_t>^2."""
    ell = _check_ell(ds, ell)
    blocks = _blocks_of(ds, theta)
    return float(sum(float(np.dot(ds.X[t][:, ell], blocks[t])) ** 2 for t in range(ds.T)))


def feature_constraint_all(ds, theta):
    """Constraint values of every feature at once; returns a (d,) array."""
    blocks = _blocks_of(ds, theta)
    out = np.zeros(ds.d)
    for t in range(ds.T):
        out += (ds.X[t].T @ blocks[t]) ** 2
    return out


def feature_constraint_grad(ds, theta, ell):
    """Gradient of one feature's constraint value; block t is
    2 <x_l_t, theta_t> x_l_t."""
    ell = _check_ell(ds, ell)
    blocks = _blocks_of(ds, theta)
    parts = []
    for t in range(ds.T):
        col = ds.X[t][:, ell]
        parts.append(2.0 * float(np.dot(col, blocks[t])) * col)
    return np.concatenate(parts)


def dual_feasibility_violation(ds, theta):
    """max(0, max_l constraint_l - 1); zero means theta is dual feasible."""
    g = feature_constraint_all(ds, theta)
    return float(max(0.0, float(g.max(initial=0.0)) - 1.0))


def lambda_max(ds):
    """Smallest level at which the solution is all-zero, with its witness.

    Returns ``(value, ell_star)`` where value = max_l sqrt(sum_t
    <x_l_t, y_t>^2) and ell_star is the smallest maximizing feature index.
    Cached on the dataset (the inputs are immutable).
    """
    key = "lambda_max"
    if key not in ds._cache:
        corr = np.zeros(ds.d)
        for t in range(ds.T):
            corr += (ds.X[t].T @ ds.y[t]) ** 2
        vals = np.sqrt(corr)
        ell_star = int(np.argmax(vals))
        value = float(vals[ell_star])
        if value == 0.0:
            raise DegenerateData(
                "every feature is orthogonal to every response; no all-zero threshold"
            )
        ds._cache[key] = (value, ell_star)
    return ds._cache[key]


def dual_from_primal(ds, W, lam):
    """Dual point induced by a primal iterate: block t is (y_t - X_t w_t)/lam."""
    lam = float(lam)
    if lam <= 0:
        raise NonPositiveLambda(f"lam must be positive, got {lam}")
    V = as_weight_values(W, ds.d, ds.T)
    blocks = [(ds.y[t] - ds.X[t] @ V[:, t]) / lam for t in range(ds.T)]
    return DualPoint.from_blocks(blocks)


def normal_vector(ds, theta0, lambda0):
    """Outward normal at a solved reference dual point.

    Below the all-zero threshold this is y/lambda0 - theta0. At the threshold
    itself that difference vanishes, so the constraint gradient of the witness
    feature at y/lambda_max is used instead (its t-th block is
    2 <x_w_t, y_t/lambda_max> x_w_t).

    Errors
    ------
    LambdaOutOfRange : lambda0 outside (0, lambda_max], or a threshold-level
        call whose theta0 is not y/lambda_max.
    ZeroNormal : the normal is too small to define a direction
        (below 1e-14 * ||y|| / lambda0).
    """
    lambda0 = float(lambda0)
    lmax, ell_star = lambda_max(ds)
    if lambda0 <= 0 or lambda0 > lmax * (1 + LAMBDA_EQ_RTOL):
        raise LambdaOutOfRange(
            f"reference level {lambda0} outside (0, {lmax}]"
        )
    y = stack_response(ds)
    th = as_dual_vector(theta0, ds.N)
    at_threshold = math.isclose(lambda0, lmax, rel_tol=LAMBDA_EQ_RTOL, abs_tol=0.0)
    if at_threshold:
        expected = y / lmax
        scale = float(np.linalg.norm(expected))
        if float(np.linalg.norm(th - expected)) > 1e-8 * max(scale, 1.0):
            raise LambdaOutOfRange(
                "at the all-zero threshold the reference dual point must be y/lambda_max"
            )
        parts = []
        off = 0
        for t, n_t in enumerate(ds.n_per_task):
            col = ds.X[t][:, ell_star]
            yt = expected[off : off + n_t]
            parts.append(2.0 * float(np.dot(col, yt)) * col)
            off += n_t
        n = np.concatenate(parts)
    else:
        n = y / lambda0 - th
    if float(np.linalg.norm(n)) < ZERO_NORMAL_RTOL * float(np.linalg.norm(y)) / lambda0:
        raise ZeroNormal("reference normal vector is numerically zero")
    return n


@dataclass(frozen=True)
class ReferenceSolution:
    """A solved reference level: the dual point there and its normal.

    ``n0`` is None when the normal was numerically zero; ball construction
    then falls back to the un-projected (larger but still valid) ball.
    """

    lambda0: float
    theta0: DualPoint
    n0: np.ndarray | None

    def __post_init__(self):
        if self.lambda0 <= 0:
            raise LambdaOutOfRange(f"reference level must be positive, got {self.lambda0}")
        if self.n0 is not None and len(self.n0) != len(self.theta0.theta):
            raise LambdaOutOfRange("normal and dual point lengths differ")

    @classmethod
    def at_lambda_max(cls, ds):
        """Reference at the all-zero threshold, where the dual point is known
        in closed form (y/lambda_max)."""
        lmax, _ = lambda_max(ds)
        y = stack_response(ds)
        theta0 = DualPoint(y / lmax, ds.n_per_task)
        n0 = normal_vector(ds, theta0, lmax)
        return cls(lambda0=lmax, theta0=theta0, n0=n0)

    @classmethod
    def from_primal(cls, ds, W, lambda0, check_sign=True):
        """Reference built from a solved primal iterate at ``lambda0``."""
        lambda0 = float(lambda0)
        theta0 = dual_from_primal(ds, W, lambda0)
        try:
            n0 = normal_vector(ds, theta0, lambda0)
        except ZeroNormal:
            n0 = None
        if check_sign and n0 is not None:
            y = stack_response(ds)
            inner = float(np.dot(y, n0))
            bound = SIGN_RTOL * float(np.linalg.norm(y)) * float(np.linalg.norm(n0))
            if inner < -bound:
                raise NegativeInnerProduct(
                    f"<response, normal> = {inner:.3e} below -{bound:.3e}; "
                    "reference solution looks inconsistent"
                )
        return cls(lambda0=lambda0, theta0=theta0, n0=n0)


@dataclass(frozen=True)
class DualBall:
    """Certified region containing the exact dual optimum at level ``lam``."""

    center: np.ndarray
    radius: float
    lam: float
    lambda0: float

    def __post_init__(self):
        if self.radius < 0:
            raise LambdaOutOfRange(f"radius must be nonnegative, got {self.radius}")
        if not 0 < self.lam < self.lambda0:
            raise LambdaOutOfRange(
                f"need 0 < lam < lambda0, got lam={self.lam}, lambda0={self.lambda0}"
            )


def dual_ball(ds, ref, lam):
    """Ball containing the exact dual optimum at ``lam`` given a reference.

    With r = y/lam - theta0: the component of r along the reference normal is
    removed (coefficient clamped at zero), and the ball is centered at
    theta0 + r_perp/2 with radius ||r_perp||/2. A near-orthogonal violation of
    the sign condition <r, n0> >= 0 beyond -1e-9*||r||*||n0|| raises
    NegativeInnerProduct. Without a usable normal (ref.n0 is None) the
    un-projected ball (center theta0 + r/2, radius ||r||/2) is returned.
    """
    lam = float(lam)
    if lam <= 0:
        raise NonPositiveLambda(f"lam must be positive, got {lam}")
    if lam >= ref.lambda0:
        raise LambdaOutOfRange(
            f"target level {lam} must be below the reference level {ref.lambda0}"
        )
    y = stack_response(ds)
    th0 = as_dual_vector(ref.theta0, ds.N)
    r = y / lam - th0
    if ref.n0 is None:
        r_perp = r
    else:
        n0 = ref.n0
        inner = float(np.dot(n0, r))
        bound = SIGN_RTOL * float(np.linalg.norm(r)) * float(np.linalg.norm(n0))
        if inner < -bound:
            raise NegativeInnerProduct(
                f"<residual, normal> = {inner:.3e} below -{bound:.3e}; "
                "reference solution looks inconsistent"
            )
        coef = max(0.0, inner) / float(np.dot(n0, n0))
        r_perp = r - coef * n0
    center = th0 + 0.5 * r_perp
    radius = 0.5 * float(np.linalg.norm(r_perp))
    return DualBall(center=center, radius=radius, lam=lam, lambda0=ref.lambda0)
