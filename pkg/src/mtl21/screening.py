"""Safe feature elimination along a regularization path.

``screen_at`` certifies inactive features at a target level from a solved
reference level: features whose maximum constraint value over the certified
dual ball stays strictly below 1 must have zero rows at the optimum, so they
can be removed before solving. ``sequential_path`` walks a decreasing grid,
screening each level against the previous solution, solving the reduced
problem, and re-embedding (screened rows are exact zeros).

The grid head needs no screening or solving: at and above the all-zero
threshold the solution is identically zero, so the head record certifies all
features inactive by that closed form. Its stored mask carries sentinel
scores 0.0 (a per-feature bound is undefined there because no higher
reference level exists).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DualPoint,
    LambdaGrid,
    MultiTaskDataset,
    ScreeningMask,
    WeightMatrix,
    stack_response,
    validate_dataset,
)
from .dual import (
    ReferenceSolution,
    dual_ball,
    dual_feasibility_violation,
    dual_from_primal,
    lambda_max,
    normal_vector,
)
from .errors import LambdaOutOfRange, MaxItersExceeded, SolverFailure, ZeroNormal
from .qp1qc import screening_scores
from .solver import FitResult, SolverConfig, fit, objective

__all__ = [
    "PathRecord",
    "PathScreeningReport",
    "screen_at",
    "sequential_path",
    "unscreened_path",
    "ROW_ZERO_TOL",
    "REF_FEASIBILITY_TOL",
]

# a row of a certified solve counts as inactive below this norm
ROW_ZERO_TOL = 1e-6
# floor of the violation a sequential reference may show before screening
# distrusts it and falls back to the threshold reference for that step; the
# effective bound grows with the certificate of the solve that produced the
# reference, since a solve stopped at residual r legitimately leaves its dual
# point up to (1+r)^2 - 1 outside the constraint set
REF_FEASIBILITY_TOL = 1e-6


@dataclass
class PathRecord:
    """One grid point's outcome."""

    lam: float
    lambda_rel: float
    mask: ScreeningMask | None
    n_screened: int
    n_truly_inactive: int
    rejection_ratio: float  # NaN when no feature is truly inactive
    objective: float
    kkt_residual: float
    n_iters: int
    t_screen: float
    t_solve: float
    status: str = "ok"
    ref_fallback: bool = False
    weights: WeightMatrix | None = None


@dataclass
class PathScreeningReport:
    records: list = field(default_factory=list)
    reference_mode: str = "sequential"
    screened: bool = True

    @property
    def total_screen_time(self):
        return float(sum(r.t_screen for r in self.records))

    @property
    def total_solve_time(self):
        return float(sum(r.t_solve for r in self.records))


def screen_at(ds, ref, lam):
    """Mask of features certified inactive at ``lam`` from the reference.

    Strict inequality, no slack: a feature is flagged only when its score,
    a certified upper bound on its maximum constraint value over the ball,
    is < 1. The target must lie strictly below the reference level.
    """
    lam = float(lam)
    if lam >= ref.lambda0:
        raise LambdaOutOfRange(
            f"screening target {lam} must lie below the reference level {ref.lambda0}"
        )
    ball = dual_ball(ds, ref, lam)
    scores = screening_scores(ds, ball)
    return ScreeningMask(scores, lam)


def _coerce_solver(solver_handle):
    if solver_handle is None:
        solver_handle = SolverConfig(kkt_tol=1e-6)
    if isinstance(solver_handle, SolverConfig):
        base = solver_handle

        def run(sub_ds, lam, warm):
            cfg = SolverConfig(
                max_iters=base.max_iters,
                kkt_tol=base.kkt_tol,
                step_rule=base.step_rule,
                warm_start=warm,
                keep_history=base.keep_history,
            )
            return fit(sub_ds, lam, cfg)

        return run
    return solver_handle


def _subset_dataset(ds, keep):
    return MultiTaskDataset([(ds.X[t][:, keep], ds.y[t]) for t in range(ds.T)])


def _boundary_reference(ds, ref, viol):
    """Reference with its dual point pulled back onto the feasible boundary.

    Dividing the point by sqrt(max_l g_l) lands it exactly on the constraint
    boundary (the constraints are quadratically homogeneous), and the
    projection-style normal is recomputed at the scaled point. The containment
    argument behind the ball needs a feasible reference point, not an exact
    solve, so this keeps screening valid under ordinary convergence slack.
    """
    scale = 1.0 / np.sqrt(1.0 + viol)
    theta0 = DualPoint(ref.theta0.theta * scale, ds.n_per_task)
    try:
        n0 = normal_vector(ds, theta0, ref.lambda0)
    except ZeroNormal:
        n0 = None
    return ReferenceSolution(lambda0=ref.lambda0, theta0=theta0, n0=n0)


def _head_record(ds, lam, lmax):
    W = WeightMatrix(np.zeros((ds.d, ds.T)))
    mask = ScreeningMask(np.zeros(ds.d), lam)
    y = stack_response(ds)
    obj = 0.5 * float(np.dot(y, y))
    return W, PathRecord(
        lam=lam,
        lambda_rel=lam / lmax,
        mask=mask,
        n_screened=ds.d,
        n_truly_inactive=ds.d,
        rejection_ratio=1.0,
        objective=obj,
        kkt_residual=0.0,
        n_iters=0,
        t_screen=0.0,
        t_solve=0.0,
    )


def sequential_path(
    ds,
    grid,
    solver_handle=None,
    reference_mode="sequential",
    keep_weights=False,
):
    """Screen-and-solve down a decreasing grid.

    Parameters
    ----------
    solver_handle : SolverConfig or callable, optional
        Either a config (a default 1e-6-tolerance one if omitted) or a
        callable ``(reduced_dataset, lam, warm_start) -> FitResult``.
    reference_mode : str
        "sequential" screens each level against the previous grid point's
        solution; "lambda-max" always uses the threshold reference.
    keep_weights : bool
        Attach each level's re-embedded weights to its record.

    A solver failure aborts the walk and raises :class:`SolverFailure`
    carrying the partial report. A sequential reference whose dual point sits
    slightly outside the constraint set, by no more than its solve's
    certificate allows, is rescaled onto the boundary and used; one that is
    infeasible beyond that is replaced by the threshold reference for the
    step (flagged on the record).
    """
    validate_dataset(ds)
    if reference_mode not in ("sequential", "lambda-max"):
        raise ValueError(f"unknown reference_mode {reference_mode!r}")
    if not isinstance(grid, LambdaGrid):
        grid = LambdaGrid(grid)
    lmax, _ = lambda_max(ds)
    grid.validate_head(lmax)
    run_solver = _coerce_solver(solver_handle)
    report = PathScreeningReport(reference_mode=reference_mode, screened=True)

    ref_max = ReferenceSolution.at_lambda_max(ds)
    W_full, head = _head_record(ds, float(grid.values[0]), lmax)
    if keep_weights:
        head.weights = W_full
    report.records.append(head)
    ref = ref_max

    prev_cert = 0.0  # certificate of the solve the current reference came from

    for lam in grid.values[1:]:
        lam = float(lam)
        fallback = False
        if reference_mode == "lambda-max":
            step_ref = ref_max
        else:
            step_ref = ref
            if step_ref is not ref_max:
                viol = dual_feasibility_violation(ds, step_ref.theta0)
                trust = max(
                    REF_FEASIBILITY_TOL, prev_cert * (2.0 + prev_cert) + 1e-13
                )
                if viol > trust:
                    # worse than the certificate can explain: distrust entirely
                    step_ref = ref_max
                    fallback = True
                elif viol > 0.0:
                    step_ref = _boundary_reference(ds, step_ref, viol)
        t0 = time.perf_counter()
        mask = screen_at(ds, step_ref, lam)
        t_screen = time.perf_counter() - t0
        keep = ~mask.inactive
        n_screened = int(mask.inactive.sum())

        t1 = time.perf_counter()
        if keep.any():
            sub = _subset_dataset(ds, keep)
            warm = W_full.values[keep] if W_full is not None else None
            try:
                res = run_solver(sub, lam, warm)
            except MaxItersExceeded as e:
                partial = PathRecord(
                    lam=lam,
                    lambda_rel=lam / lmax,
                    mask=mask,
                    n_screened=n_screened,
                    n_truly_inactive=0,
                    rejection_ratio=float("nan"),
                    objective=float("nan"),
                    kkt_residual=float(e.residual) if e.residual is not None else float("nan"),
                    n_iters=0,
                    t_screen=t_screen,
                    t_solve=time.perf_counter() - t1,
                    status="solver-failure",
                    ref_fallback=fallback,
                )
                report.records.append(partial)
                raise SolverFailure(
                    f"solver failed at level {lam!r}: {e}",
                    report=report,
                    failed_lambda=lam,
                ) from e
            V = np.zeros((ds.d, ds.T))
            V[keep] = res.weights.values
            W_full = WeightMatrix(V)
            n_iters = res.n_iters
            kkt = res.kkt_residual
            t_solve = time.perf_counter() - t1
            obj = objective(ds, W_full, lam)
        else:
            W_full = WeightMatrix(np.zeros((ds.d, ds.T)))
            n_iters = 0
            kkt = 0.0
            t_solve = time.perf_counter() - t1
            obj = objective(ds, W_full, lam)

        rn = W_full.row_norms()
        n_inact = int((rn <= ROW_ZERO_TOL).sum())
        rej = n_screened / n_inact if n_inact > 0 else float("nan")
        rec = PathRecord(
            lam=lam,
            lambda_rel=lam / lmax,
            mask=mask,
            n_screened=n_screened,
            n_truly_inactive=n_inact,
            rejection_ratio=rej,
            objective=obj,
            kkt_residual=kkt,
            n_iters=n_iters,
            t_screen=t_screen,
            t_solve=t_solve,
            ref_fallback=fallback,
        )
        if keep_weights:
            rec.weights = W_full
        report.records.append(rec)
        if reference_mode == "sequential":
            ref = ReferenceSolution.from_primal(ds, W_full, lam)
            prev_cert = float(kkt)
    return report


def unscreened_path(ds, grid, solver_handle=None, keep_weights=False):
    """Warm-started plain solves down the grid (no feature elimination).

    The head record still uses the closed form (the solution there is
    identically zero); every later level runs the solver on the full feature
    set. Masks are absent; ``n_truly_inactive`` counts near-zero rows of each
    solution so rejection-style statistics stay comparable.
    """
    validate_dataset(ds)
    if not isinstance(grid, LambdaGrid):
        grid = LambdaGrid(grid)
    lmax, _ = lambda_max(ds)
    grid.validate_head(lmax)
    run_solver = _coerce_solver(solver_handle)
    report = PathScreeningReport(screened=False)
    W_full, head = _head_record(ds, float(grid.values[0]), lmax)
    head.mask = None
    head.n_screened = 0
    head.rejection_ratio = float("nan")
    if keep_weights:
        head.weights = W_full
    report.records.append(head)

    for lam in grid.values[1:]:
        lam = float(lam)
        t1 = time.perf_counter()
        try:
            res = run_solver(ds, lam, W_full.values)
        except MaxItersExceeded as e:
            partial = PathRecord(
                lam=lam,
                lambda_rel=lam / lmax,
                mask=None,
                n_screened=0,
                n_truly_inactive=0,
                rejection_ratio=float("nan"),
                objective=float("nan"),
                kkt_residual=float(e.residual) if e.residual is not None else float("nan"),
                n_iters=0,
                t_screen=0.0,
                t_solve=time.perf_counter() - t1,
                status="solver-failure",
            )
            report.records.append(partial)
            raise SolverFailure(
                f"solver failed at level {lam!r}: {e}",
                report=report,
                failed_lambda=lam,
            ) from e
        W_full = res.weights
        t_solve = time.perf_counter() - t1
        rn = W_full.row_norms()
        n_inact = int((rn <= ROW_ZERO_TOL).sum())
        rec = PathRecord(
            lam=lam,
            lambda_rel=lam / lmax,
            mask=None,
            n_screened=0,
            n_truly_inactive=n_inact,
            rejection_ratio=float("nan"),
            objective=objective(ds, W_full, lam),
            kkt_residual=res.kkt_residual,
            n_iters=res.n_iters,
            t_screen=0.0,
            t_solve=t_solve,
        )
        if keep_weights:
            rec.weights = W_full
        report.records.append(rec)
    return report
