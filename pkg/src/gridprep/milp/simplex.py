"""Bounded-variable revised simplex with a two-phase artificial start.

Dense NumPy implementation aimed at desk-scale relaxations.  Pricing is
Dantzig's rule; after a long degenerate streak it falls back to Bland's rule,
which guarantees termination.  The basis inverse is maintained by product-form
updates and refactorized periodically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-9
BOUND_TOL = 1e-9
REFACTOR_EVERY = 64
DEGENERATE_STREAK = 256

AT_LOWER = 0
AT_UPPER = 1
BASIC = 2
FREE_NB = 3

LP_OPTIMAL = "optimal"
LP_INFEASIBLE = "infeasible"
LP_UNBOUNDED = "unbounded"


class NumericalInstabilityError(RuntimeError):
    """Simplex failed to converge even under Bland's rule (ill-scaled input)."""


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None
    objective: float
    iterations: int


def _initial_value(lo: float, hi: float) -> float:
    if math.isfinite(lo):
        return lo
    if math.isfinite(hi):
        return hi
    return 0.0


class _Tableau:
    def __init__(self, a_eq: np.ndarray, lower: np.ndarray, upper: np.ndarray):
        self.a = a_eq
        self.lower = lower.copy()
        self.upper = upper.copy()
        self.m, self.n = a_eq.shape
        self.state = np.empty(self.n, dtype=np.int8)
        for j in range(self.n):
            lo, hi = lower[j], upper[j]
            if math.isfinite(lo):
                self.state[j] = AT_LOWER
            elif math.isfinite(hi):
                self.state[j] = AT_UPPER
            else:
                self.state[j] = FREE_NB
        self.x = np.array([_initial_value(lower[j], upper[j]) for j in range(self.n)])
        self.basis = np.empty(0, dtype=np.int64)
        self.b_inv = np.empty((0, 0))
        self.rhs = np.zeros(self.m)

    def install_basis(self, basis: np.ndarray, rhs: np.ndarray):
        self.basis = basis
        self.rhs = rhs
        self.refactor()

    def refactor(self):
        mat = self.a[:, self.basis]
        try:
            self.b_inv = np.linalg.inv(mat)
        except np.linalg.LinAlgError as exc:
            raise NumericalInstabilityError("singular basis during refactorization") from exc
        self.recompute_basic_values()

    def recompute_basic_values(self):
        nb_mask = np.ones(self.n, dtype=bool)
        nb_mask[self.basis] = False
        residual = self.rhs - self.a[:, nb_mask] @ self.x[nb_mask]
        self.x[self.basis] = self.b_inv @ residual

    def pivot(self, row: int, entering: int, w: np.ndarray):
        piv = w[row]
        if abs(piv) < PIVOT_TOL:
            raise NumericalInstabilityError("pivot element below tolerance")
        self.b_inv[row, :] /= piv
        for i in range(self.m):
            if i != row and w[i] != 0.0:
                self.b_inv[i, :] -= w[i] * self.b_inv[row, :]


def solve_bounded_lp(
    c: np.ndarray,
    a_eq: np.ndarray,
    b_eq: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    max_iterations: int | None = None,
) -> LpResult:
    """Minimize c'x subject to a_eq x = b_eq and lower <= x <= upper."""
    m, n = a_eq.shape
    if max_iterations is None:
        max_iterations = 200 * (m + n) + 2000

    t = _Tableau(a_eq, lower, upper)

    # phase-1 artificials absorb the initial residual with +/-1 columns
    residual = b_eq - a_eq @ t.x
    art_cols = np.zeros((m, m))
    for i in range(m):
        art_cols[i, i] = 1.0 if residual[i] >= 0 else -1.0
    t.a = np.hstack([a_eq, art_cols])
    t.lower = np.concatenate([t.lower, np.zeros(m)])
    t.upper = np.concatenate([t.upper, np.full(m, math.inf)])
    t.x = np.concatenate([t.x, np.abs(residual)])
    t.state = np.concatenate([t.state, np.full(m, BASIC, dtype=np.int8)])
    t.n = n + m
    t.install_basis(np.arange(n, n + m, dtype=np.int64), b_eq.copy())

    phase1_cost = np.concatenate([np.zeros(n), np.ones(m)])
    status, iters1 = _iterate(t, phase1_cost, max_iterations, allow_unbounded=False)
    if status != LP_OPTIMAL:
        raise NumericalInstabilityError("phase 1 did not converge")
    infeas = float(phase1_cost @ t.x)
    if infeas > 1e-7:
        return LpResult(status=LP_INFEASIBLE, x=None, objective=math.nan, iterations=iters1)

    # artificials are pinned to zero for phase 2
    t.lower[n:] = 0.0
    t.upper[n:] = 0.0
    t.x[n:] = np.where(np.abs(t.x[n:]) < 1e-9, 0.0, t.x[n:])
    phase2_cost = np.concatenate([c, np.zeros(m)])
    status, iters2 = _iterate(t, phase2_cost, max_iterations, allow_unbounded=True)
    if status == LP_UNBOUNDED:
        return LpResult(status=LP_UNBOUNDED, x=None, objective=-math.inf, iterations=iters1 + iters2)

    t.refactor()  # fresh residuals before reporting
    x = t.x[:n].copy()
    resid = float(np.max(np.abs(a_eq @ x - b_eq))) if m else 0.0
    if resid > 1e-6:
        raise NumericalInstabilityError(f"final residual {resid:.3e} exceeds tolerance")
    return LpResult(status=LP_OPTIMAL, x=x, objective=float(c @ x), iterations=iters1 + iters2)


def _iterate(t: _Tableau, cost: np.ndarray, max_iterations: int, allow_unbounded: bool):
    iterations = 0
    degenerate_streak = 0
    use_bland = False
    pivots_since_refactor = 0

    while True:
        if iterations >= max_iterations:
            raise NumericalInstabilityError(
                "iteration limit exceeded" + (" under Bland's rule" if use_bland else "")
            )
        iterations += 1

        y = cost[t.basis] @ t.b_inv
        reduced = cost - y @ t.a
        fixed = t.lower == t.upper

        can_inc = (t.state == AT_LOWER) | (t.state == FREE_NB)
        can_dec = (t.state == AT_UPPER) | (t.state == FREE_NB)
        viol_inc = np.where(can_inc & ~fixed, -reduced, 0.0)
        viol_dec = np.where(can_dec & ~fixed, reduced, 0.0)
        viol = np.maximum(viol_inc, viol_dec)
        viol[t.state == BASIC] = 0.0

        candidates = np.nonzero(viol > PIVOT_TOL)[0]
        if candidates.size == 0:
            return LP_OPTIMAL, iterations

        if use_bland:
            entering = int(candidates[0])
        else:
            entering = int(candidates[np.argmax(viol[candidates])])
        direction = 1.0 if viol_inc[entering] >= viol_dec[entering] else -1.0

        w = t.b_inv @ t.a[:, entering]

        # ratio test: basic variables hitting a bound, or the entering
        # variable flipping to its opposite bound
        step = math.inf
        blocking_row = -1
        blocking_var = t.n + 1
        blocking_to_upper = False
        dw = direction * w
        xb = t.x[t.basis]
        for i in range(t.m):
            if dw[i] > PIVOT_TOL:
                room = xb[i] - t.lower[t.basis[i]]
                ratio = max(room, 0.0) / dw[i]
                hit_upper = False
            elif dw[i] < -PIVOT_TOL:
                room = t.upper[t.basis[i]] - xb[i]
                if not math.isfinite(room):
                    continue
                ratio = max(room, 0.0) / (-dw[i])
                hit_upper = True
            else:
                continue
            var = int(t.basis[i])
            if ratio < step - BOUND_TOL or (ratio < step + BOUND_TOL and var < blocking_var):
                step = ratio
                blocking_row = i
                blocking_var = var
                blocking_to_upper = hit_upper

        flip_range = t.upper[entering] - t.lower[entering]
        flip = False
        if math.isfinite(flip_range):
            if flip_range < step - BOUND_TOL or (
                flip_range < step + BOUND_TOL and entering < blocking_var
            ):
                step = flip_range
                flip = True

        if not math.isfinite(step):
            if allow_unbounded:
                return LP_UNBOUNDED, iterations
            raise NumericalInstabilityError("unexpected unbounded direction in phase 1")

        if step <= BOUND_TOL:
            degenerate_streak += 1
            if degenerate_streak >= DEGENERATE_STREAK:
                use_bland = True
        else:
            degenerate_streak = 0
            if not use_bland:
                pass
            else:
                use_bland = False  # progress made; resume Dantzig pricing

        t.x[entering] += direction * step
        t.x[t.basis] -= step * dw

        if flip:
            t.state[entering] = AT_UPPER if direction > 0 else AT_LOWER
            # snap exactly onto the bound to avoid drift
            t.x[entering] = t.upper[entering] if direction > 0 else t.lower[entering]
            continue

        leaving = int(t.basis[blocking_row])
        t.x[leaving] = t.upper[leaving] if blocking_to_upper else t.lower[leaving]
        t.state[leaving] = AT_UPPER if blocking_to_upper else AT_LOWER
        t.state[entering] = BASIC
        t.pivot(blocking_row, entering, w)
        t.basis[blocking_row] = entering
        pivots_since_refactor += 1
        if pivots_since_refactor >= REFACTOR_EVERY:
            t.refactor()
            pivots_since_refactor = 0
