"""Evaluation metrics: RMSE over arrays, spectral-angle sums over per-pixel
endmember stacks, and endmember matching for ground-truth comparisons."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .extraction import spectral_angle


@dataclass
class MetricsReport:
    rmse_a: float = None
    rmse_m: float = None
    sam_m: float = None
    rmse_r: float = None
    rmse_psi: float = None
    permutation: tuple = None


def rmse(x, y):
    """Root mean squared error: sqrt(||x - y||_F^2 / number of elements)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return float(np.sqrt(np.mean((x - y) ** 2)))


def sam(m_est, m_true, per_pair=False):
    """Spectral angle between two per-pixel endmember stacks (N, L, R).

    For every pixel the angles of the R column pairs are summed; the sums
    are averaged over pixels, so the value may reach pi * R.  Pass
    ``per_pair=True`` to divide by R as well (mean angle per column pair).
    Angles are in radians.  Raises ValueError naming (n, k) when a column
    has zero norm.
    """
    m_est = np.asarray(m_est, dtype=float)
    m_true = np.asarray(m_true, dtype=float)
    if m_est.shape != m_true.shape:
        raise ValueError(f"shape mismatch: {m_est.shape} vs {m_true.shape}")
    ne = np.linalg.norm(m_est, axis=1)
    nt = np.linalg.norm(m_true, axis=1)
    for name, norms in (("estimate", ne), ("truth", nt)):
        if np.any(norms == 0.0):
            n, k = np.argwhere(norms == 0.0)[0]
            raise ValueError(
                f"zero-norm {name} endmember column at pixel n={n}, k={k}"
            )
    cos = np.clip(np.sum(m_est * m_true, axis=1) / (ne * nt), -1.0, 1.0)
    angles = np.arccos(cos)  # (N, R)
    value = float(angles.sum(axis=1).mean())
    if per_pair:
        value /= m_est.shape[2]
    return value


def match_endmembers(m_est, m_true):
    """Permutation aligning estimated endmember columns with the truth.

    Returns ``perm`` minimising the total spectral angle, such that
    ``m_est[:, perm[j]]`` corresponds to ``m_true[:, j]`` (optimal
    assignment; exact for the small R used here).
    """
    m_est = np.asarray(m_est, dtype=float)
    m_true = np.asarray(m_true, dtype=float)
    if m_est.shape != m_true.shape:
        raise ValueError(f"shape mismatch: {m_est.shape} vs {m_true.shape}")
    r = m_est.shape[1]
    cost = np.empty((r, r))
    for j in range(r):
        for i in range(r):
            cost[j, i] = spectral_angle(m_true[:, j], m_est[:, i])
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(r, dtype=int)
    perm[rows] = cols
    return tuple(int(p) for p in perm)


def evaluate_unmixing(
    cube,
    a_est,
    m_est=None,
    m0_est=None,
    a_true=None,
    m_true=None,
    psi_true=None,
    psi_est=None,
):
    """Assemble a MetricsReport, matching estimated endmembers to the truth.

    ``m_est`` is the per-pixel stack (N, L, R) or a shared (L, R) matrix;
    reconstruction error uses it together with ``a_est``.  When ground truth
    is available the permutation from :func:`match_endmembers` (between
    ``m0_est`` and ``m_true``) is applied to all estimated quantities first.
    """
    from .core import cube_to_matrix, pixelwise_scaling

    report = MetricsReport()
    cube = np.asarray(cube, dtype=float)
    y = cube_to_matrix(cube)
    n = y.shape[1]
    a_est = np.asarray(a_est, dtype=float)

    if m_est is not None:
        m_stack = np.asarray(m_est, dtype=float)
        if m_stack.ndim == 2:
            m_stack = np.broadcast_to(m_stack, (n,) + m_stack.shape)
        recon = np.einsum("nlk,kn->ln", m_stack, a_est, optimize=True)
        report.rmse_r = rmse(y, recon)

    if a_true is None or m_true is None:
        return report

    m_true = np.asarray(m_true, dtype=float)
    perm = (
        match_endmembers(np.asarray(m0_est, dtype=float), m_true)
        if m0_est is not None
        else tuple(range(m_true.shape[1]))
    )
    report.permutation = perm
    perm = list(perm)
    report.rmse_a = rmse(a_est[perm, :], a_true)
    if m_est is not None and psi_true is not None:
        m_stack = np.asarray(m_est, dtype=float)
        if m_stack.ndim == 2:
            m_stack = np.broadcast_to(m_stack, (n,) + m_stack.shape)
        truth_stack = m_true[None, :, :] * pixelwise_scaling(psi_true)
        report.rmse_m = rmse(m_stack[:, :, perm], truth_stack)
        report.sam_m = sam(m_stack[:, :, perm], truth_stack)
    if psi_est is not None and psi_true is not None:
        report.rmse_psi = rmse(
            np.asarray(psi_est)[:, :, :, perm], np.asarray(psi_true)
        )
    return report
