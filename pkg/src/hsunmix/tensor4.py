"""Dense 4-D tensor algebra and rank-r CP decomposition.

Tensors are numpy arrays of shape (N1, N2, L, R).  The canonical linear
element order (used by the binary file format and by the unfoldings) is
Fortran order: index n1 varies fastest, then n2, then l, then k.

The mode-m unfolding has the mode-m index on the rows; the columns run over
the remaining modes with the lowest remaining mode varying fastest, so that

    unfold(t, m) == reshape(moveaxis(t, m-1, 0), (dims[m-1], -1), order="F")

and, for a rank-1 tensor built from vectors (u, v, w, x),

    unfold(t, 1) == u @ khatri_rao(x, w, v).T
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import khatri_rao

from .exceptions import RankWarning

_MODES = (1, 2, 3, 4)
_GRAM_COND_LIMIT = 1e12


@dataclass
class CPDecomposition:
    """Weights and factor matrices of a canonical polyadic decomposition.

    ``factors[m]`` has shape ``(dims[m], rank)`` with unit-norm columns; the
    scale of each rank-1 term sits in ``weights``, which are sorted by
    non-increasing absolute value.  ``fit_trace`` records the Frobenius
    reconstruction error after each ALS sweep.
    """

    rank: int
    weights: np.ndarray
    factors: tuple
    fit_trace: list = field(default_factory=list)

    @property
    def dims(self):
        return tuple(f.shape[0] for f in self.factors)


def unfold(t, mode):
    """Mode-``mode`` unfolding of a 4-D tensor (mode in 1..4)."""
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    t = np.asarray(t)
    if t.ndim != 4:
        raise ValueError(f"expected a 4-D tensor, got ndim={t.ndim}")
    m = mode - 1
    return np.moveaxis(t, m, 0).reshape(t.shape[m], -1, order="F")


def fold(mat, mode, dims):
    """Inverse of :func:`unfold`: rebuild the 4-D tensor of shape ``dims``."""
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    if len(dims) != 4:
        raise ValueError("dims must have length 4")
    m = mode - 1
    other = [d for i, d in enumerate(dims) if i != m]
    mat = np.asarray(mat)
    if mat.shape != (dims[m], int(np.prod(other))):
        raise ValueError(f"matrix shape {mat.shape} does not match dims {dims}")
    return np.moveaxis(mat.reshape([dims[m]] + other, order="F"), 0, m)


def reconstruct(d):
    """Full tensor of a CP decomposition.

    Element (n1, n2, l, k) is the sum over i of
    weights[i] * Z1[n1, i] * Z2[n2, i] * Z3[l, i] * Z4[k, i].
    """
    if len(d.factors) != 4:
        raise ValueError("CPDecomposition must carry exactly 4 factor matrices")
    widths = {f.shape[1] for f in d.factors}
    if widths != {len(d.weights)}:
        raise ValueError("factor widths do not match the number of weights")
    z1, z2, z3, z4 = d.factors
    return np.einsum("r,ar,br,cr,dr->abcd", d.weights, z1, z2, z3, z4, optimize=True)


def _khatri_rao_skip(factors, skip):
    # Khatri-Rao product of all factors except `skip`, highest mode first,
    # so the lowest remaining mode varies fastest in the row index.
    mats = [factors[j] for j in (3, 2, 1, 0) if j != skip]
    out = mats[0]
    for f in mats[1:]:
        out = khatri_rao(out, f)
    return out


def _normalize_columns(w):
    norms = np.linalg.norm(w, axis=0)
    z = np.array(w, dtype=float)
    for i, s in enumerate(norms):
        if s > 0:
            z[:, i] /= s
        else:
            z[:, i] = 0.0
            z[0, i] = 1.0  # keep the unit-norm invariant for dead columns
    return z, norms


def _canonicalize(weights, factors):
    order = np.argsort(-np.abs(weights), kind="stable")
    weights = weights[order]
    factors = tuple(f[:, order] for f in factors)
    return weights, factors


def constant_cp(dims, rank, value=1.0, seed=0):
    """Exact CP of a constant tensor, padded to ``rank`` with zero weights.

    The first column of every factor is the normalised constant vector; the
    remaining columns are seeded random unit vectors carrying zero weight, so
    the reconstruction equals ``value`` everywhere.  Useful as a warm start.
    """
    rng = np.random.default_rng(seed)
    factors = []
    for d in dims:
        f = rng.standard_normal((d, rank))
        f[:, 0] = 1.0
        f /= np.linalg.norm(f, axis=0)
        factors.append(f)
    weights = np.zeros(rank)
    weights[0] = value * np.sqrt(float(np.prod(dims)))
    return CPDecomposition(rank, weights, tuple(factors))


def cp_als(t, rank, seed=0, max_iter=100, rel_tol=1e-6, init=None):
    """Rank-``rank`` CP decomposition by alternating least squares.

    Parameters
    ----------
    t : ndarray, shape (N1, N2, L, R)
        Tensor to decompose.
    rank : int
        Number of rank-1 components (>= 1).
    seed : int
        Seed for the random factor initialisation; the routine is
        deterministic for a fixed seed.
    max_iter : int
        Maximum number of full ALS sweeps (>= 1).
    rel_tol : float
        Stop when the change of the Frobenius reconstruction error between
        sweeps, divided by ||t||_F, falls below this value.
    init : CPDecomposition, optional
        Warm start; its factors must match the tensor dims and ``rank``.

    Returns
    -------
    CPDecomposition
        Canonical form (unit-norm factor columns, weights sorted by
        non-increasing absolute value) with the per-sweep error trace in
        ``fit_trace``.  The error is non-increasing across sweeps.

    Notes
    -----
    Each mode update solves the normal equations with the Hadamard product
    of the other factors' Gram matrices, falling back to a pseudo-inverse
    when that matrix has condition number above 1e12.  A rank exceeding the
    row count of some unfolding (i.e. some tensor dimension) is allowed but
    reported through a :class:`RankWarning`.
    """
    t = np.asarray(t, dtype=float)
    if t.ndim != 4:
        raise ValueError(f"expected a 4-D tensor, got ndim={t.ndim}")
    if rank < 1:
        raise ValueError("rank must be >= 1")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    dims = t.shape
    if rank > min(dims):
        warnings.warn(
            f"CP rank {rank} exceeds the smallest tensor dimension {min(dims)}; "
            "the decomposition is over-parameterised",
            RankWarning,
            stacklevel=2,
        )

    rng = np.random.default_rng(seed)
    if init is None:
        factors = [
            _normalize_columns(rng.standard_normal((d, rank)))[0] for d in dims
        ]
    else:
        if init.dims != dims or init.factors[0].shape[1] != rank:
            raise ValueError("init decomposition does not match tensor dims/rank")
        factors = [_normalize_columns(f)[0] for f in init.factors]

    unfoldings = [unfold(t, m) for m in _MODES]
    norm_t = max(np.linalg.norm(t), np.finfo(float).tiny)
    weights = np.ones(rank)
    errors = []
    prev = None
    for _ in range(max_iter):
        for m in range(4):
            kr = _khatri_rao_skip(factors, m)
            gram = np.ones((rank, rank))
            for j in range(4):
                if j != m:
                    gram *= factors[j].T @ factors[j]
            mttkrp = unfoldings[m] @ kr
            if np.linalg.cond(gram) > _GRAM_COND_LIMIT:
                w = mttkrp @ np.linalg.pinv(gram)
            else:
                w = np.linalg.solve(gram, mttkrp.T).T
            factors[m], weights = _normalize_columns(w)
        model = np.einsum(
            "r,ar,br,cr,dr->abcd", weights, *factors, optimize=True
        )
        err = np.linalg.norm(t - model)
        errors.append(err)
        if prev is not None and abs(prev - err) < rel_tol * norm_t:
            break
        prev = err

    weights, factors = _canonicalize(weights, tuple(factors))
    return CPDecomposition(rank, weights, factors, fit_trace=errors)
