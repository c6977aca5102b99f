"""Damped Gauss-Newton (Levenberg-Marquardt) least squares, numeric Jacobians.

Small self-contained solver used to fit the CFF generating function; the
objective is non-convex, so the public entry point runs a batch of random
multi-starts and keeps the best converged solution.
"""

import numpy as np

from .errors import ConvergenceError


def numeric_jacobian(residual_fn, x, h=1e-6):
    """Central-difference Jacobian of the residual vector."""
    x = np.asarray(x, dtype=float)
    r0 = np.asarray(residual_fn(x))
    jac = np.empty((r0.size, x.size))
    for j in range(x.size):
        step = h * max(1.0, abs(x[j]))
        up, dn = x.copy(), x.copy()
        up[j] += step
        dn[j] -= step
        jac[:, j] = (np.asarray(residual_fn(up)) - np.asarray(residual_fn(dn))) / (2 * step)
    return jac


def levenberg_marquardt(residual_fn, x0, max_iter=200, gtol=1e-10, ftol=1e-12,
                        tau=1e-3):
    """Minimize 0.5 * ||residual(x)||^2 from one starting point.

    Returns (x, cost, converged).  Standard gain-ratio damping: successful
    steps shrink the damping, rejected steps inflate it.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = np.asarray(residual_fn(x))
    if not np.all(np.isfinite(r)):
        return x, np.inf, False
    cost = 0.5 * float(r @ r)
    jac = numeric_jacobian(residual_fn, x)
    hess = jac.T @ jac
    mu = tau * float(np.max(np.diag(hess))) if hess.size else tau
    nu = 2.0
    converged = False
    for _ in range(max_iter):
        grad = jac.T @ r
        if np.max(np.abs(grad)) < gtol:
            converged = True
            break
        try:
            step = np.linalg.solve(hess + mu * np.eye(x.size), -grad)
        except np.linalg.LinAlgError:
            mu *= nu
            nu *= 2.0
            continue
        x_new = x + step
        r_new = np.asarray(residual_fn(x_new))
        if np.all(np.isfinite(r_new)):
            cost_new = 0.5 * float(r_new @ r_new)
            predicted = -float(grad @ step) - 0.5 * float(step @ (hess @ step))
            rho = (cost - cost_new) / predicted if predicted > 0 else -1.0
        else:
            cost_new, rho = np.inf, -1.0
        if rho > 0:
            if cost - cost_new < ftol * max(cost, 1e-300):
                x, r, cost = x_new, r_new, cost_new
                converged = True
                break
            x, r, cost = x_new, r_new, cost_new
            jac = numeric_jacobian(residual_fn, x)
            hess = jac.T @ jac
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
        else:
            mu *= nu
            nu *= 2.0
    return x, cost, converged


def multistart_least_squares(residual_fn, start_sampler, n_starts=20, seed=0,
                             max_iter=200):
    """Run LM from n_starts sampled points; return (best_x, best_cost).

    start_sampler(rng) must return one starting vector.  Raises
    ConvergenceError when every start fails to converge.
    """
    rng = np.random.default_rng(seed)
    best_x, best_cost = None, np.inf
    any_converged = False
    for _ in range(n_starts):
        x0 = start_sampler(rng)
        x, cost, converged = levenberg_marquardt(residual_fn, x0, max_iter=max_iter)
        any_converged |= converged
        if converged and cost < best_cost:
            best_x, best_cost = x, cost
    if not any_converged or best_x is None:
        raise ConvergenceError(
            f"no Levenberg-Marquardt start converged within {max_iter} iterations"
        )
    return best_x, best_cost


def parameter_covariance(residual_fn, x, n_data):
    """Gauss-Newton covariance estimate (J^T J)^-1 scaled by the residual variance."""
    r = np.asarray(residual_fn(x))
    jac = numeric_jacobian(residual_fn, x)
    dof = max(n_data - x.size, 1)
    scale = float(r @ r) / dof
    try:
        return scale * np.linalg.inv(jac.T @ jac)
    except np.linalg.LinAlgError:
        return np.full((x.size, x.size), np.nan)
