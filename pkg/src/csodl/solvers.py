"""l1 solvers shared by training and reconstruction.

Two convex programs are solved here:

* sparse coding: min_a 0.5*||x - D a||^2 + lam*||a||_1, solved exactly by a
  Cholesky-based LARS-lasso homotopy that tracks the full regularization path
  from lam_max down to the requested lam;
* basis pursuit with an error tolerance: min ||a||_1 s.t. ||y - Phi Psi a|| <= eps,
  solved through its Lagrangian with lam selected by bisection until the
  residual lands in [0.95*eps, eps].

The acceptance contract is the KKT residual bound, not the algorithm name.
Solvers are pure functions of their inputs; concurrent solves share nothing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .core import Dictionary, Epoch, Measurements, SensingMatrix, SolverConfig, SparseCode, as_samples

# relative floor under which a candidate atom is treated as collinear with
# the active set and excluded from the path
_COLLINEAR_TOL = 1e-12


class SolverNonConvergence(RuntimeError):
    """Raised when the path does not reach the target lam within the step cap.

    Carries the best iterate found so far and its KKT residual.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class InfeasibleEpsilon(RuntimeError):
    """Raised when eps is below the smallest attainable residual.

    ``best`` holds the least-residual iterate, ``residual`` its value.
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


@dataclass(frozen=True)
class LassoSolution:
    code: SparseCode
    objective: float
    kkt_residual: float
    iterations: int
    trace: tuple = ()

    def __post_init__(self):
        if self.objective < 0 or self.kkt_residual < 0:
            raise ValueError("objective and KKT residual must be >= 0")


def soft_threshold(v, t):
    """sign(v) * max(|v| - t, 0); works on scalars and arrays."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be >= 0")
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def kkt_residual(design, target, coeffs, lam) -> float:
    """Max violation of the lasso optimality conditions at ``coeffs``.

    |d_j^T r - lam*sign(a_j)| on the support, max(0, |d_j^T r| - lam) off it.
    """
    c = design.T @ (target - design @ coeffs)
    on = coeffs != 0
    res = 0.0
    if np.any(on):
        res = float(np.max(np.abs(c[on] - lam * np.sign(coeffs[on]))))
    if np.any(~on):
        res = max(res, float(max(0.0, np.max(np.abs(c[~on])) - lam)))
    return res


def _objective(design, target, coeffs, lam) -> float:
    r = target - design @ coeffs
    return 0.5 * float(r @ r) + lam * float(np.abs(coeffs).sum())


def _chol_append(R, gram_col, col_sq_norm):
    """Grow the upper Cholesky factor of the active Gram by one column.

    Returns None when the new column is numerically collinear.
    """
    if R.size == 0:
        if col_sq_norm <= _COLLINEAR_TOL:
            return None
        return np.array([[np.sqrt(col_sq_norm)]])
    w = solve_triangular(R, gram_col, trans=1, lower=False)
    d = col_sq_norm - float(w @ w)
    if d <= _COLLINEAR_TOL * max(col_sq_norm, 1.0):
        return None
    s = R.shape[0]
    out = np.zeros((s + 1, s + 1))
    out[:s, :s] = R
    out[:s, s] = w
    out[s, s] = np.sqrt(d)
    return out


def _homotopy(design, target, lam_target, max_iter, collect_trace=False):
    """LARS-lasso path from lam_max down to lam_target.

    Returns (coeffs, iterations, converged, trace). The trace rows are
    (iteration, objective at the current lam, kkt residual at the current
    lam); the objective column is non-increasing because every iterate is
    optimal for its own lam and the optimal value shrinks with lam.
    """
    p, q = design.shape
    x = np.zeros(q)
    r = np.array(target, dtype=np.float64)
    c = design.T @ r
    col_sq = np.einsum("ij,ij->j", design, design)
    lam = float(np.max(np.abs(c))) if q else 0.0
    trace = []
    if lam <= lam_target:
        return x, 0, True, trace

    active: list[int] = []
    signs: list[float] = []
    is_active = np.zeros(q, dtype=bool)
    excluded = col_sq <= _COLLINEAR_TOL
    R = np.empty((0, 0))
    tiny = 1e-13 * lam

    def try_add(j, sgn):
        nonlocal R
        gcol = design[:, active].T @ design[:, j] if active else np.empty(0)
        grown = _chol_append(R, gcol, col_sq[j])
        if grown is None:
            excluded[j] = True
            return False
        R = grown
        active.append(int(j))
        signs.append(float(sgn))
        is_active[j] = True
        return True

    def add_best():
        while True:
            cm = np.where(is_active | excluded, -np.inf, np.abs(c))
            j = int(np.argmax(cm))
            if not np.isfinite(cm[j]) or cm[j] <= tiny:
                return False
            if try_add(j, np.sign(c[j])):
                return True

    if not add_best():
        return x, 0, True, trace

    it = 0
    while it < max_iter:
        it += 1
        s = np.asarray(signs)
        w = solve_triangular(R, s, trans=1, lower=False)
        d = solve_triangular(R, w, lower=False)
        u = design[:, active] @ d
        v = design.T @ u

        step_target = lam - lam_target
        with np.errstate(divide="ignore", invalid="ignore"):
            d_plus = (lam - c) / (1.0 - v)
            d_minus = (lam + c) / (1.0 + v)
        blocked = is_active | excluded
        d_plus[blocked | (1.0 - v <= 1e-12)] = np.inf
        d_minus[blocked | (1.0 + v <= 1e-12)] = np.inf
        # correlations can sit marginally past lam in floating point
        np.clip(d_plus, 0.0, None, out=d_plus)
        np.clip(d_minus, 0.0, None, out=d_minus)
        joins = np.minimum(d_plus, d_minus)
        j_join = int(np.argmin(joins))
        step_join = float(joins[j_join])

        xa = x[active]
        with np.errstate(divide="ignore", invalid="ignore"):
            cross = np.where(d != 0.0, -xa / d, np.inf)
        cross[cross <= tiny] = np.inf
        i_cross = int(np.argmin(cross))
        step_cross = float(cross[i_cross])

        step = min(step_target, step_join, step_cross)
        if not np.isfinite(step):
            step = step_target

        x[active] = xa + step * d
        lam -= step
        r -= step * u
        c = design.T @ r
        if collect_trace:
            trace.append((it, _objective(design, target, x, lam),
                          kkt_residual(design, target, x, lam)))

        if step == step_target or lam <= lam_target + tiny:
            lam = lam_target
            break
        if step == step_cross and step < step_join:
            gone = active[i_cross]
            x[gone] = 0.0
            del active[i_cross], signs[i_cross]
            is_active[gone] = False
            if active:
                g = design[:, active].T @ design[:, active]
                R = np.linalg.cholesky(g).T
            elif not add_best():
                break
        else:
            if not try_add(j_join, 1.0 if d_plus[j_join] <= d_minus[j_join] else -1.0):
                continue
    else:
        return x, it, False, trace

    # re-solve on the final active set at lam_target to shed path drift
    if active:
        s = np.asarray(signs)
        rhs = design[:, active].T @ target - lam_target * s
        w = solve_triangular(R, rhs, trans=1, lower=False)
        xa = solve_triangular(R, w, lower=False)
        xa[np.sign(xa) * s < 0] = 0.0
        x[:] = 0.0
        x[np.asarray(active, dtype=int)] = xa
    return x, it, True, trace


def _solve_lasso(design, target, lam, max_iterations, convergence_tol,
                 collect_trace=False):
    x, iters, converged, trace = _homotopy(design, target, lam,
                                           max_iterations, collect_trace)
    kkt = kkt_residual(design, target, x, lam)
    sol = LassoSolution(code=SparseCode.from_dense(x, design.shape[1]),
                        objective=_objective(design, target, x, lam),
                        kkt_residual=kkt, iterations=iters,
                        trace=tuple(trace))
    if not converged or kkt > convergence_tol:
        raise SolverNonConvergence(
            f"lasso did not reach KKT residual {convergence_tol:g} within "
            f"{max_iterations} steps (achieved {kkt:.3e})", best=sol)
    return sol, x


def sparse_code(target, dictionary: Dictionary, config: SolverConfig,
                collect_trace: bool = False) -> LassoSolution:
    """Solve min_a 0.5*||x - D a||^2 + lam*||a||_1 to KKT optimality."""
    t = as_samples(target)
    if t.size != dictionary.n:
        raise ValueError(f"target length {t.size} != dictionary n {dictionary.n}")
    if config.lam <= 0:
        raise ValueError("sparse coding requires lam > 0")
    sol, _ = _solve_lasso(dictionary.atoms, t, config.lam,
                          config.max_iterations, config.convergence_tol,
                          collect_trace)
    return sol


@dataclass(frozen=True)
class BasisPursuitInfo:
    residual: float
    lam: float
    bisection_steps: int
    iterations: int


def _residual_norm(design, y, x) -> float:
    return float(np.linalg.norm(y - design @ x))


def basis_pursuit_reconstruct(y: Measurements, phi: SensingMatrix,
                              dictionary: Dictionary, config: SolverConfig,
                              return_info: bool = False):
    """Recover (epoch, code) from measurements by l1 minimization.

    Minimizes ||a||_1 subject to ||y - Phi Psi a||_2 <= eps via the
    Lagrangian lasso on the composite design Phi Psi. Columns are left
    unnormalized; the bisection over lam absorbs their energy spread.
    """
    yv = as_samples(y)
    if phi.m != yv.size:
        raise ValueError(f"{yv.size} measurements but phi has {phi.m} rows")
    if phi.n != dictionary.n:
        raise ValueError(f"phi n={phi.n} != dictionary n={dictionary.n}")
    eps = config.epsilon
    design = phi.entries @ dictionary.atoms
    k = dictionary.k

    def finish(x, lam, steps, iters):
        code = SparseCode.from_dense(x, k)
        epoch = Epoch(dictionary.atoms @ x)
        info = BasisPursuitInfo(residual=_residual_norm(design, yv, x),
                                lam=lam, bisection_steps=steps,
                                iterations=iters)
        return (epoch, code, info) if return_info else (epoch, code)

    y_norm = float(np.linalg.norm(yv))
    if eps >= y_norm:
        # the origin is feasible and has minimal l1 norm
        return finish(np.zeros(k), 0.0, 0, 0)

    lam_max = float(np.max(np.abs(design.T @ yv)))
    if lam_max == 0.0:
        raise InfeasibleEpsilon(
            "no atom correlates with the measurements; smallest attainable "
            f"residual {y_norm:.6g} exceeds eps {eps:.6g}",
            best=SparseCode.from_dense(np.zeros(k), k), residual=y_norm)

    if eps == 0.0:
        lam = 1e-6 * lam_max
        sol, x = _solve_lasso(design, yv, lam, config.max_iterations,
                              config.convergence_tol)
        return finish(x, lam, 0, sol.iterations)

    # find the smallest-lam end of the bracket: a lam whose residual is <= eps
    lam_lo = 1e-6 * lam_max
    total_iters = 0
    best = None
    for _ in range(6):
        sol, x = _solve_lasso(design, yv, lam_lo, config.max_iterations,
                              config.convergence_tol)
        total_iters += sol.iterations
        res = _residual_norm(design, yv, x)
        if best is None or res < best[0]:
            best = (res, x, lam_lo)
        if res <= eps:
            break
        lam_lo *= 1e-3
    else:
        raise InfeasibleEpsilon(
            f"eps {eps:.6g} below smallest attainable residual {best[0]:.6g}",
            best=SparseCode.from_dense(best[1], k), residual=best[0])

    if res >= 0.95 * eps:
        return finish(x, lam_lo, 0, total_iters)

    # residual grows with lam: bisect for residual in [0.95*eps, eps]
    lo, hi = lam_lo, lam_max
    feasible = (x, lam_lo)
    steps = 0
    while steps < 60:
        steps += 1
        mid = 0.5 * (lo + hi)
        sol, x_mid = _solve_lasso(design, yv, mid, config.max_iterations,
                                  config.convergence_tol)
        total_iters += sol.iterations
        res = _residual_norm(design, yv, x_mid)
        if res > eps:
            hi = mid
        elif res >= 0.95 * eps:
            return finish(x_mid, mid, steps, total_iters)
        else:
            lo = mid
            feasible = (x_mid, mid)
    x, lam = feasible
    return finish(x, lam, steps, total_iters)
