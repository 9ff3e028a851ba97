"""Abundance and per-pixel endmember estimation.

Minimises, over an (R, N) abundance matrix A with simplex columns and a
per-pixel endmember stack M (N, L, R) with nonnegative entries,

    1/2 sum_n ( ||r_n - M_n a_n||^2 + lambda_m ||M_n - M0 * Psi_n||_F^2 )
    + lambda_a ( ||Gh(A)||_{2,1} + ||Gv(A)||_{2,1} )

where Gh/Gv are per-material horizontal/vertical forward differences on the
image grid and ||X||_{2,1} sums the Euclidean norms of the columns.  The two
blocks are minimised alternately: M has a per-pixel closed form followed by
projection onto the nonnegative orthant, and A is solved by ADMM with
variable splits for the two gradient images and for the simplex constraint.

The fully constrained least squares baseline (fixed endmembers, no spatial
term) is the same ADMM with lambda_a = 0 and M_n = M0 for every pixel.
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .core import cube_to_matrix, pixelwise_scaling
from .exceptions import ConvergenceWarning

log = logging.getLogger(__name__)

_CG_TOL = 1e-10
_CG_MAX_ITER = 500


@dataclass
class UnmixConfig:
    """Solver parameters.  ``admm_rho=None`` scales the penalty from the
    data: rho = 1e-2 * mean_n ||r_n||^2."""

    lambda_m: float = 0.1
    lambda_a: float = 0.01
    admm_rho: float | None = None
    admm_max_iter: int = 500
    admm_tol: float = 1e-6
    outer_max_iter: int = 30
    outer_rel_tol: float = 1e-4

    def validate(self):
        if self.lambda_m < 0 or self.lambda_a < 0:
            raise ValueError("lambda_m and lambda_a must be >= 0")
        if self.admm_rho is not None and not self.admm_rho > 0:
            raise ValueError("admm_rho must be positive when given")
        if self.admm_max_iter < 1 or self.outer_max_iter < 1:
            raise ValueError("iteration limits must be >= 1")
        if not self.admm_tol > 0 or not self.outer_rel_tol > 0:
            raise ValueError("tolerances must be positive")


# ---------------------------------------------------------------------------
# image-grid difference operators


def gradient_h(a, shape):
    """Forward difference along image columns (n2), zero last difference.

    ``a`` is (R, N) with pixel order n = n1 + N1*n2.
    """
    n1, n2 = shape
    f = np.asarray(a).reshape(-1, n2, n1)
    g = np.zeros_like(f)
    g[:, :-1, :] = f[:, 1:, :] - f[:, :-1, :]
    return g.reshape(np.asarray(a).shape)


def gradient_v(a, shape):
    """Forward difference along image rows (n1), zero last difference."""
    n1, n2 = shape
    f = np.asarray(a).reshape(-1, n2, n1)
    g = np.zeros_like(f)
    g[:, :, :-1] = f[:, :, 1:] - f[:, :, :-1]
    return g.reshape(np.asarray(a).shape)


def gradient_h_adjoint(y, shape):
    """Adjoint of :func:`gradient_h` (verified by the inner-product test)."""
    n1, n2 = shape
    f = np.asarray(y).reshape(-1, n2, n1)
    out = np.zeros_like(f)
    t = f[:, :-1, :]
    out[:, 1:, :] += t
    out[:, :-1, :] -= t
    return out.reshape(np.asarray(y).shape)


def gradient_v_adjoint(y, shape):
    n1, n2 = shape
    f = np.asarray(y).reshape(-1, n2, n1)
    out = np.zeros_like(f)
    t = f[:, :, :-1]
    out[:, :, 1:] += t
    out[:, :, :-1] -= t
    return out.reshape(np.asarray(y).shape)


# ---------------------------------------------------------------------------
# small convex tools


def project_simplex_columns(v):
    """Euclidean projection of every column of ``v`` onto the unit simplex.

    Sort-based exact algorithm; O(R log R) per column, vectorised over
    columns.
    """
    v = np.asarray(v, dtype=float)
    r, n = v.shape
    u = -np.sort(-v, axis=0)
    css = np.cumsum(u, axis=0) - 1.0
    ind = np.arange(1, r + 1)[:, None]
    rho = np.count_nonzero(u - css / ind > 0, axis=0)
    theta = css[rho - 1, np.arange(n)] / rho
    return np.maximum(v - theta, 0.0)


def group_soft_threshold(v, kappa):
    """Column-wise shrinkage: v_n <- v_n * max(0, 1 - kappa/||v_n||)."""
    norms = np.linalg.norm(v, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    scale = np.where(norms > 0, np.maximum(0.0, 1.0 - kappa / safe), 0.0)
    return v * scale


def _l21_norm(x):
    return float(np.sum(np.linalg.norm(x, axis=0)))


# ---------------------------------------------------------------------------
# objective and closed-form endmember update


def _target_endmembers(m0, psi):
    """Per-pixel regularisation targets M0 * Psi_n, shape (N, L, R)."""
    return np.asarray(m0, dtype=float)[None, :, :] * pixelwise_scaling(psi)


def _expand_m(m, n):
    m = np.asarray(m, dtype=float)
    if m.ndim == 2:
        return np.broadcast_to(m, (n,) + m.shape)
    return m


def objective_unmix(a, m, cube, m0, psi, cfg):
    """Full objective value at abundances ``a`` and endmember stack ``m``."""
    cube = np.asarray(cube, dtype=float)
    n1, n2, _ = cube.shape
    y = cube_to_matrix(cube)
    m = _expand_m(m, y.shape[1])
    recon = np.einsum("nlk,kn->ln", m, a, optimize=True)
    data = 0.5 * np.sum((y - recon) ** 2)
    reg_m = 0.5 * cfg.lambda_m * np.sum((m - _target_endmembers(m0, psi)) ** 2)
    tv = cfg.lambda_a * (
        _l21_norm(gradient_h(a, (n1, n2))) + _l21_norm(gradient_v(a, (n1, n2)))
    )
    return float(data + reg_m + tv)


def update_endmembers(a, cube, m0, psi, cfg, project=True):
    """Per-pixel closed-form endmember update.

    M_n = (r_n a_n^T + lambda_m * M0*Psi_n) (a_n a_n^T + lambda_m I)^{-1},
    then (optionally) negative entries are set to zero.  Raises ValueError
    when the per-pixel system is singular (lambda_m = 0 with degenerate
    abundances).
    """
    cube = np.asarray(cube, dtype=float)
    y = cube_to_matrix(cube)
    a = np.asarray(a, dtype=float)
    r = a.shape[0]
    target = _target_endmembers(m0, psi)
    b = y.T[:, :, None] * a.T[:, None, :] + cfg.lambda_m * target
    g = a.T[:, :, None] * a.T[:, None, :] + cfg.lambda_m * np.eye(r)
    try:
        m = np.linalg.solve(g, b.transpose(0, 2, 1)).transpose(0, 2, 1)
    except np.linalg.LinAlgError as e:
        raise ValueError(
            "singular endmember update system; use lambda_m > 0 or "
            "non-degenerate abundances"
        ) from e
    if project:
        m = np.maximum(m, 0.0)
    return m


# ---------------------------------------------------------------------------
# abundance step (ADMM)


def _abundance_objective(a, m, y, shape, lambda_a):
    recon = np.einsum("nlk,kn->ln", m, a, optimize=True)
    val = 0.5 * np.sum((y - recon) ** 2)
    if lambda_a > 0:
        val += lambda_a * (
            _l21_norm(gradient_h(a, shape)) + _l21_norm(gradient_v(a, shape))
        )
    return float(val)


def _auto_rho(y):
    return max(1e-2 * float(np.mean(np.sum(y**2, axis=0))), 1e-8)


def _cg(matvec, b, x0, tol=_CG_TOL, max_iter=_CG_MAX_ITER):
    # plain conjugate gradient with warm start; deterministic, fixed-order sums
    x = x0.copy()
    r = b - matvec(x)
    p = r.copy()
    rs = float(np.vdot(r, r))
    bn = max(np.linalg.norm(b), np.finfo(float).tiny)
    for _ in range(max_iter):
        if np.sqrt(rs) <= tol * bn:
            break
        ap = matvec(p)
        alpha = rs / float(np.vdot(p, ap))
        x += alpha * p
        r -= alpha * ap
        rs_new = float(np.vdot(r, r))
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


def _admm_decoupled(gram, b, a_init, rho, tol, max_iter):
    """ADMM for the lambda_a = 0 case: per-pixel simplex-constrained LS.

    Columns are frozen as soon as their own residuals converge, so each
    pixel's iterate sequence is independent of the batch it is solved in.
    """
    r, n = b.shape
    inv = np.linalg.inv(gram + rho * np.eye(r))
    a = np.array(a_init, dtype=float)
    u = project_simplex_columns(a)
    du = np.zeros_like(a)
    active = np.ones(n, dtype=bool)
    sqrt_r = np.sqrt(r)
    iters = 0
    for iters in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        rhs = b[:, idx] + rho * (u[:, idx] - du[:, idx])
        if inv.ndim == 2:
            a[:, idx] = inv @ rhs
        else:
            a[:, idx] = np.einsum("njk,kn->jn", inv[idx], rhs, optimize=True)
        u_old = u[:, idx].copy()
        u[:, idx] = project_simplex_columns(a[:, idx] + du[:, idx])
        du[:, idx] += a[:, idx] - u[:, idx]
        pri = np.linalg.norm(a[:, idx] - u[:, idx], axis=0) / sqrt_r
        dua = rho * np.linalg.norm(u[:, idx] - u_old, axis=0) / sqrt_r
        active[idx] = np.maximum(pri, dua) >= tol
    return a, int(np.sum(active)), iters


def update_abundances_admm(m, cube, a_init, cfg=None):
    """Solve the abundance subproblem at fixed endmembers by ADMM.

    ``m`` is the per-pixel stack (N, L, R) or a single (L, R) matrix shared
    by all pixels.  The splitting introduces copies of the two gradient
    images (handled by column-wise group soft-thresholding) and a copy of A
    itself (handled by exact simplex projection); the A block is a sparse
    positive-definite system solved by warm-started conjugate gradient.
    Stopping: RMS-normalised primal and dual residuals both below
    ``cfg.admm_tol``, else ``cfg.admm_max_iter`` with a ConvergenceWarning.

    The returned matrix has exactly simplex-feasible columns, and its
    objective never exceeds the objective at ``a_init`` (up to 1e-8 relative
    slack); if ADMM fails to improve, ``a_init`` is returned unchanged.
    """
    if cfg is None:
        cfg = UnmixConfig()
    cfg.validate()
    cube = np.asarray(cube, dtype=float)
    n1, n2, _ = cube.shape
    shape = (n1, n2)
    y = cube_to_matrix(cube)
    n = y.shape[1]
    a_init = np.asarray(a_init, dtype=float)
    r = a_init.shape[0]
    rho = cfg.admm_rho if cfg.admm_rho is not None else _auto_rho(y)
    shared = np.asarray(m).ndim == 2
    m = _expand_m(m, n)

    if shared:
        gram = m[0].T @ m[0]
        b = m[0].T @ y
    else:
        gram = np.einsum("nlj,nlk->njk", m, m, optimize=True)
        b = np.einsum("nlk,ln->kn", m, y, optimize=True)

    converged = True
    if cfg.lambda_a == 0.0:
        a, n_active, iters = _admm_decoupled(
            gram, b, a_init, rho, cfg.admm_tol, cfg.admm_max_iter
        )
        if n_active > 0:
            converged = False
            warnings.warn(
                f"abundance ADMM: {n_active} pixels not converged after "
                f"{iters} iterations",
                ConvergenceWarning,
                stacklevel=2,
            )
    else:
        kappa = cfg.lambda_a / rho
        a = a_init.copy()
        vh = gradient_h(a, shape)
        vv = gradient_v(a, shape)
        u = project_simplex_columns(a)
        dh = np.zeros_like(a)
        dv = np.zeros_like(a)
        du = np.zeros_like(a)

        if shared:
            def matvec(x):
                out = gram @ x
                out += rho * gradient_h_adjoint(gradient_h(x, shape), shape)
                out += rho * gradient_v_adjoint(gradient_v(x, shape), shape)
                out += rho * x
                return out
        else:
            def matvec(x):
                out = np.einsum("njk,kn->jn", gram, x, optimize=True)
                out += rho * gradient_h_adjoint(gradient_h(x, shape), shape)
                out += rho * gradient_v_adjoint(gradient_v(x, shape), shape)
                out += rho * x
                return out

        pri = dua = np.inf
        for _ in range(cfg.admm_max_iter):
            rhs = b + rho * (
                gradient_h_adjoint(vh - dh, shape)
                + gradient_v_adjoint(vv - dv, shape)
                + (u - du)
            )
            a = _cg(matvec, rhs, a)
            gh = gradient_h(a, shape)
            gv = gradient_v(a, shape)
            vh_old, vv_old, u_old = vh, vv, u
            vh = group_soft_threshold(gh + dh, kappa)
            vv = group_soft_threshold(gv + dv, kappa)
            u = project_simplex_columns(a + du)
            dh = dh + gh - vh
            dv = dv + gv - vv
            du = du + a - u
            pri = np.sqrt(
                np.sum((gh - vh) ** 2) + np.sum((gv - vv) ** 2) + np.sum((a - u) ** 2)
            ) / np.sqrt(3 * r * n)
            dua = rho * np.linalg.norm(
                gradient_h_adjoint(vh - vh_old, shape)
                + gradient_v_adjoint(vv - vv_old, shape)
                + (u - u_old)
            ) / np.sqrt(r * n)
            if max(pri, dua) < cfg.admm_tol:
                break
        else:
            converged = False
            warnings.warn(
                f"abundance ADMM did not converge in {cfg.admm_max_iter} "
                f"iterations (primal={pri:.2e}, dual={dua:.2e})",
                ConvergenceWarning,
                stacklevel=2,
            )

    a_out = project_simplex_columns(a)
    obj_out = _abundance_objective(a_out, m, y, shape, cfg.lambda_a)
    obj_init = _abundance_objective(a_init, m, y, shape, cfg.lambda_a)
    if obj_out > obj_init + 1e-8 * (1.0 + abs(obj_init)):
        feasible = np.all(a_init >= -1e-8) and np.all(
            np.abs(a_init.sum(axis=0) - 1.0) <= 1e-6
        )
        if feasible:
            if converged:
                warnings.warn(
                    "abundance ADMM did not improve on its initialisation; "
                    "returning the initial point",
                    ConvergenceWarning,
                    stacklevel=2,
                )
            return a_init.copy()
    return a_out


# ---------------------------------------------------------------------------
# outer loop and baseline


def fcls(cube, m0, cfg=None):
    """Fully constrained least squares: per-pixel simplex-constrained fit
    against a single endmember matrix."""
    cube = np.asarray(cube, dtype=float)
    m0 = np.asarray(m0, dtype=float)
    n = cube.shape[0] * cube.shape[1]
    r = m0.shape[1]
    if cfg is None:
        base = UnmixConfig()
        cfg = UnmixConfig(
            lambda_a=0.0, admm_max_iter=base.admm_max_iter, admm_tol=base.admm_tol
        )
    else:
        cfg = UnmixConfig(
            lambda_m=cfg.lambda_m,
            lambda_a=0.0,
            admm_rho=cfg.admm_rho,
            admm_max_iter=cfg.admm_max_iter,
            admm_tol=cfg.admm_tol,
            outer_max_iter=cfg.outer_max_iter,
            outer_rel_tol=cfg.outer_rel_tol,
        )
    a0 = np.full((r, n), 1.0 / r)
    return update_abundances_admm(m0, cube, a0, cfg)


def unmix(cube, m0, psi, cfg=None, a_init=None):
    """Alternating endmember/abundance minimisation.

    ``psi`` is the scaling tensor from the variability estimator, or the
    all-ones tensor for the no-variability model.  ``a_init`` defaults to
    the FCLS solution.  Returns (abundances, endmember stack, objective
    trace); the trace is non-increasing up to ADMM inexactness, which is
    logged when it occurs.
    """
    if cfg is None:
        cfg = UnmixConfig()
    cfg.validate()
    cube = np.asarray(cube, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if a_init is None:
        a_init = fcls(cube, m0, cfg)
    a = np.asarray(a_init, dtype=float).copy()
    m = None
    trace = []
    for _ in range(cfg.outer_max_iter):
        m = update_endmembers(a, cube, m0, psi, cfg)
        a = update_abundances_admm(m, cube, a, cfg)
        j = objective_unmix(a, m, cube, m0, psi, cfg)
        if trace and j > trace[-1] + 1e-8 * abs(trace[0]):
            log.warning(
                "unmixing objective increased: %.6e -> %.6e", trace[-1], j
            )
        done = bool(trace) and abs(trace[-1] - j) < cfg.outer_rel_tol * max(
            abs(trace[-1]), np.finfo(float).tiny
        )
        trace.append(j)
        if done:
            break
    return a, m, trace
