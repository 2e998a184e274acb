"""Dense BFGS with a strong-Wolfe line search."""

from dataclasses import dataclass

import numpy as np


@dataclass
class BfgsResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    converged: bool
    degraded: bool = False      # line search could not find a Wolfe point
    history: list = None        # objective at every accepted iterate, start included


def _cubic_min(a, fa, ga, b, fb, gb):
    # minimiser of the cubic interpolating (a, fa, ga), (b, fb, gb); None if ill-posed
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - ga * gb
    if rad < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(rad)
    den = gb - ga + 2.0 * d2
    if den == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / den


def line_search_wolfe(fg, x, f0, g0, p, c1=1e-4, c2=0.9, max_trials=30, alpha0=1.0):
    """Bracketing/zoom search for a step satisfying the strong Wolfe conditions.

    Returns ``(alpha, f, g)`` or ``None`` after ``max_trials`` evaluations.
    """
    d0 = float(g0 @ p)
    if d0 >= 0:
        return None
    trials = 0

    def phi(a):
        f, g = fg(x + a * p)
        return f, g, float(g @ p)

    def zoom(lo, flo, dlo, hi, fhi, dhi):
        nonlocal trials
        while trials < max_trials:
            a = _cubic_min(lo, flo, dlo, hi, fhi, dhi)
            lo_b, hi_b = min(lo, hi), max(lo, hi)
            margin = 0.1 * (hi_b - lo_b)
            if a is None or not np.isfinite(a) or a < lo_b + margin or a > hi_b - margin:
                a = 0.5 * (lo + hi)
            f, g, d = phi(a)
            trials += 1
            if not np.isfinite(f) or f > f0 + c1 * a * d0 or f >= flo:
                hi, fhi, dhi = a, f, d
            else:
                if abs(d) <= -c2 * d0:
                    return a, f, g
                if d * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, dlo = a, f, d
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        return None

    a_prev, f_prev, d_prev = 0.0, f0, d0
    a = alpha0
    while trials < max_trials:
        f, g, d = phi(a)
        trials += 1
        if not np.isfinite(f) or f > f0 + c1 * a * d0 or (trials > 1 and f >= f_prev):
            if not np.isfinite(f):
                d = np.inf
            return zoom(a_prev, f_prev, d_prev, a, f, d)
        if abs(d) <= -c2 * d0:
            return a, f, g
        if d >= 0:
            return zoom(a, f, d, a_prev, f_prev, d_prev)
        a_prev, f_prev, d_prev = a, f, d
        a = 2.0 * a
    return None


def bfgs_minimize(fg, x0, tol=1e-3, max_iter=100, gtol=1e-12, curvature_eps=1e-12):
    """Minimise ``fg(x) -> (value, gradient)`` from ``x0``.

    The inverse-Hessian approximation starts at the identity.  Iteration stops
    when ``||x_{i+1} - x_i|| < tol * ||x_i||`` (absolute when ``x_i = 0``), when the
    gradient norm falls below ``gtol`` or after ``max_iter`` iterations.  Updates
    with ``u's <= curvature_eps`` are skipped to keep the matrix positive definite.
    """
    x = np.array(x0, dtype=np.float64).ravel()
    f, g = fg(x)
    f = float(f)
    g = np.asarray(g, dtype=np.float64).ravel()
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the starting point")
    n = x.size
    B = np.eye(n)
    history = [f]
    converged = False
    degraded = False
    it = 0
    while it < max_iter:
        if np.linalg.norm(g) <= gtol:
            converged = True
            break
        p = -B @ g
        if g @ p >= 0:      # numerically lost descent: restart from steepest descent
            B = np.eye(n)
            p = -g
        ls = line_search_wolfe(fg, x, f, g, p)
        if ls is None:
            degraded = True
            break
        alpha, f_new, g_new = ls
        it += 1
        s = alpha * p
        x_new = x + s
        u = np.asarray(g_new, dtype=np.float64).ravel() - g
        su = float(s @ u)
        if su > curvature_eps:
            rho = 1.0 / su
            Bu = B @ u
            B = B - rho * (np.outer(s, Bu) + np.outer(Bu, s)) + (rho * rho * (u @ Bu) + rho) * np.outer(s, s)
        step = np.linalg.norm(s)
        xnorm = np.linalg.norm(x)
        x, f, g = x_new, float(f_new), np.asarray(g_new, dtype=np.float64).ravel()
        history.append(f)
        if step < tol * xnorm if xnorm > 0 else step < tol:
            converged = True
            break
    return BfgsResult(x=x, fun=f, grad=g, iterations=it, converged=converged,
                      degraded=degraded, history=history)
