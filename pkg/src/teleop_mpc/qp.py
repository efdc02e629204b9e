"""Dense primal active-set solver for strictly convex quadratic programs.

    minimize 0.5 x'Hx + g'x   subject to   A x <= b

Sized for the planner's condensed subproblems (tens of variables, a few
hundred inequality rows, few active). Requires a feasible starting point;
iterates stay feasible, so constraint satisfaction of the result is exact up
to linear algebra roundoff. Equality-constrained steps use the range-space
method with H inverted once per solve; a newly blocking row is linearly
independent of the working set by construction (its normal has a nonzero
inner product with a step from the working set's null space).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_FEAS_TOL = 1e-9
_ZERO_STEP = 1e-12


@dataclass
class QPResult:
    x: np.ndarray
    multipliers: np.ndarray  # one per constraint row, >= 0, zero when inactive
    active: list
    iterations: int
    status: str  # "optimal" | "iteration_limit"


def solve_qp(h: np.ndarray, g: np.ndarray, a: np.ndarray, b: np.ndarray,
             x0: np.ndarray, max_iter: int = 200, warm_set=None) -> QPResult:
    """Solve the QP from feasible x0; h must be symmetric positive definite.

    warm_set seeds the working set with rows that are active at x0 (others
    are ignored); across a sequence of similar QPs this skips most of the
    constraint discovery.
    """
    m = a.shape[0] if a.size else 0
    x = np.asarray(x0, dtype=float).copy()
    if m and np.max(a @ x - b) > _FEAS_TOL:
        raise ValueError("solve_qp requires a feasible starting point")

    if m == 0:
        candidates: list[int] = []
    elif warm_set is not None:
        candidates = [i for i in warm_set if 0 <= i < m and b[i] - a[i] @ x <= _FEAS_TOL]
    else:
        candidates = [i for i in range(m) if b[i] - a[i] @ x <= _FEAS_TOL]
    work = _independent_subset(a, candidates)
    lam = np.zeros(m)
    hinv = np.linalg.inv(h)

    for it in range(1, max_iter + 1):
        grad = h @ x + g
        p, lam_w = _equality_step(hinv, grad, a, work)
        if np.linalg.norm(p, np.inf) <= _ZERO_STEP:
            # stationary on the working set; check multiplier signs
            if len(work) == 0 or np.min(lam_w) >= -1e-9:
                lam[:] = 0.0
                for idx, row in enumerate(work):
                    lam[row] = max(lam_w[idx], 0.0)
                return QPResult(x=x, multipliers=lam, active=list(work), iterations=it, status="optimal")
            work.pop(int(np.argmin(lam_w)))
            continue
        # ratio test against rows outside the working set
        alpha, blocker = 1.0, -1
        if m:
            mask = np.ones(m, dtype=bool)
            mask[work] = False
            rows = np.nonzero(mask)[0]
            ap = a[rows] @ p
            pos = ap > _ZERO_STEP
            if np.any(pos):
                slack = b[rows[pos]] - a[rows[pos]] @ x
                ratios = np.maximum(slack, 0.0) / ap[pos]
                k = int(np.argmin(ratios))
                if ratios[k] < alpha:
                    alpha = float(ratios[k])
                    blocker = int(rows[pos][k])
        x = x + alpha * p
        if blocker >= 0:
            work.append(blocker)

    lam[:] = 0.0
    return QPResult(x=x, multipliers=lam, active=list(work), iterations=max_iter, status="iteration_limit")


def _equality_step(hinv: np.ndarray, grad: np.ndarray, a: np.ndarray, work: list[int]):
    """Range-space step: minimize the quadratic subject to A_W p = 0.

    Returns the step p and the working-set multipliers at the stationary
    point of the restricted problem.
    """
    hg = hinv @ grad
    if not work:
        return -hg, np.empty(0)
    aw = a[work]
    ha = hinv @ aw.T
    k = aw @ ha
    try:
        lam_w = -np.linalg.solve(k, aw @ hg)
    except np.linalg.LinAlgError:
        lam_w = -np.linalg.lstsq(k, aw @ hg, rcond=None)[0]
    p = -hg - ha @ lam_w
    return p, lam_w


def _independent_subset(a: np.ndarray, rows: list[int]) -> list[int]:
    """Greedy Gram-Schmidt prune keeping the working-set normals independent."""
    keep: list[int] = []
    basis: list[np.ndarray] = []
    for r in rows:
        v = a[r].astype(float)
        for q in basis:
            v = v - (q @ v) * q
        norm = np.linalg.norm(v)
        if norm > 1e-8 * max(np.linalg.norm(a[r]), 1e-30):
            keep.append(r)
            basis.append(v / norm)
    return keep
