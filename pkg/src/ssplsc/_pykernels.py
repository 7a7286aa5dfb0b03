"""Pure numpy implementation of the solver kernels.

Mirrors ``_ckernels.pyx`` function for function; used when the compiled
extension is unavailable or ``SSPLSC_BACKEND=python`` is set.
"""

import math

import numpy as np

STATUS_CONVERGED = 0
STATUS_MAX_ITER = 1
STATUS_ZERO_ALPHA = 2
STATUS_ZERO_BETA = 3
STATUS_NON_FINITE = 4

TWO_PI = 2.0 * math.pi
NORM_FLOOR = 1e-12


def wrap_phase(phi):
    phi = math.fmod(phi, TWO_PI)
    if phi < 0.0:
        phi += TWO_PI
    if phi >= TWO_PI:
        phi = 0.0
    return phi


def soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def sub_objective(w, c, A, lam):
    """``-c.w + lam*|w|_1 + 0.5 w'Aw`` for one block with the other fixed."""
    return -c @ w + lam * np.abs(w).sum() + 0.5 * (w @ (A @ w))


def prox_descend(w, c, A, t, lam, inner_steps):
    """Proximal-gradient steps on the block sub-problem.

    One step is plain ISTA; more steps run FISTA with function-value restart,
    which keeps every accepted iterate a descent step.
    """
    if inner_steps == 1:
        return soft_threshold(w - t * (A @ w - c), lam * t)
    x = w
    z = w
    tk = 1.0
    f_prev = sub_objective(x, c, A, lam)
    for _ in range(inner_steps):
        x_new = soft_threshold(z - t * (A @ z - c), lam * t)
        f_new = sub_objective(x_new, c, A, lam)
        if f_new > f_prev:
            tk = 1.0
            x_new = soft_threshold(x - t * (A @ x - c), lam * t)
            f_new = sub_objective(x_new, c, A, lam)
        tk_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
        z = x_new + ((tk - 1.0) / tk_new) * (x_new - x)
        x, tk, f_prev = x_new, tk_new, f_new
    return x


def lm_phase(a, b, phi0, tol=1e-10, max_steps=100, damping=1.0):
    """Damped Gauss-Newton (Levenberg-Marquardt) maximisation of a cos + b sin.

    The residual is ``r(phi) = (cos phi, sin phi) - (a, b)/R``, so with
    ``J'J = 1`` every step is ``-J'r / (1 + damping)``. Returns
    ``(phi, steps)``; ``steps == -1`` flags a = b = 0.
    """
    r = math.hypot(a, b)
    if r == 0.0 or not math.isfinite(r):
        return phi0, -1
    ca = a / r
    sb = b / r
    phi = phi0
    steps = 0
    while steps < max_steps:
        g = ca * math.sin(phi) - sb * math.cos(phi)
        delta = g / (1.0 + damping)
        phi -= delta
        steps += 1
        if abs(delta) < tol:
            break
    if ca * math.cos(phi) + sb * math.sin(phi) < 0.0:
        # stalled on the antipodal stationary point
        phi += math.pi
    return wrap_phase(phi), steps


def _objective(alpha, beta, sr, A, B, lam1, lam2):
    return (
        -(alpha @ (sr @ beta))
        + lam1 * np.abs(alpha).sum()
        + lam2 * np.abs(beta).sum()
        + 0.5 * (alpha @ (A @ alpha))
        + 0.5 * (beta @ (B @ beta))
    )


def solve_alternating(
    s_re,
    s_im,
    A,
    B,
    t_alpha,
    t_beta,
    lam1,
    lam2,
    alpha0,
    beta0,
    phi0,
    max_iter,
    rel_tol,
    inner_steps,
    damping=1.0,
):
    """Alternate alpha, beta and phase updates.

    Returns ``(alpha, beta, phi, trace, n_iter, status)``; ``alpha`` and
    ``beta`` carry unit (I + gamma L)-weighted norm.
    """
    alpha = np.array(alpha0, dtype=float)
    beta = np.array(beta0, dtype=float)
    phi = float(phi0)
    trace = []
    status = STATUS_MAX_ITER
    f_prev = 0.0
    for k in range(max_iter):
        sr = s_re * math.cos(phi) + s_im * math.sin(phi)

        alpha = prox_descend(alpha, sr @ beta, A, t_alpha, lam1, inner_steps)
        nrm = alpha @ (A @ alpha)
        if not nrm > NORM_FLOOR * NORM_FLOOR:
            status = STATUS_ZERO_ALPHA if np.all(np.isfinite(alpha)) else STATUS_NON_FINITE
            break
        alpha = alpha / math.sqrt(nrm)

        beta = prox_descend(beta, sr.T @ alpha, B, t_beta, lam2, inner_steps)
        nrm = beta @ (B @ beta)
        if not nrm > NORM_FLOOR * NORM_FLOOR:
            status = STATUS_ZERO_BETA if np.all(np.isfinite(beta)) else STATUS_NON_FINITE
            break
        beta = beta / math.sqrt(nrm)

        a = alpha @ (s_re @ beta)
        b = alpha @ (s_im @ beta)
        phi, _ = lm_phase(a, b, phi, damping=damping)

        sr = s_re * math.cos(phi) + s_im * math.sin(phi)
        f = _objective(alpha, beta, sr, A, B, lam1, lam2)
        if not math.isfinite(f):
            status = STATUS_NON_FINITE
            break
        trace.append(f)
        if k > 0 and abs(f - f_prev) <= rel_tol * max(abs(f_prev), 1e-300):
            status = STATUS_CONVERGED
            break
        f_prev = f
    return alpha, beta, phi, np.asarray(trace), len(trace), status
