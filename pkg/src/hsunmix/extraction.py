"""Reference endmember extraction and pure-pixel set construction.

Endmember matrices are (L, R) arrays with one spectrum per column.  Pure
pixels are pixels whose spectral angle to some reference endmember is small;
they are collected per endmember, with a pixel assigned to at most one set.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .core import cube_to_matrix
from .exceptions import PurePixelWarning


@dataclass
class PurePixelSets:
    """Per-endmember lists of pure pixel coordinates (n1, n2).

    ``threshold_used`` is the requested angle threshold (threshold policy) or
    the largest selected angle (count policy), in radians.
    """

    sets: list
    threshold_used: float


def spectral_angle(x, y):
    """Angle in radians between two spectra: arccos of the normalised dot.

    Symmetric and invariant to positive rescaling of either argument.
    Raises ValueError when either vector has zero norm.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise ValueError("spectral_angle is undefined for zero-norm spectra")
    c = np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0)
    return float(np.arccos(c))


def _angles_to_endmembers(cube, m0):
    """(R, N) matrix of angles between every pixel and every reference EM.

    Zero-norm pixels get angle +inf so they are never selected.
    """
    y = cube_to_matrix(cube)
    m0 = np.asarray(m0, dtype=float)
    em_norms = np.linalg.norm(m0, axis=0)
    if np.any(em_norms == 0.0):
        bad = int(np.argmin(em_norms))
        raise ValueError(f"reference endmember column {bad} has zero norm")
    px_norms = np.linalg.norm(y, axis=0)
    safe = np.where(px_norms == 0.0, 1.0, px_norms)
    cosines = (m0 / em_norms).T @ (y / safe)
    angles = np.arccos(np.clip(cosines, -1.0, 1.0))
    angles[:, px_norms == 0.0] = np.inf
    return angles


def find_pure_pixels(cube, m0, threshold=None, counts=None):
    """Select pure pixels per endmember by angle threshold or by count.

    Exactly one of ``threshold`` (radians) and ``counts`` (length-R list)
    must be given.  The threshold policy takes all pixels with angle strictly
    below the threshold; the count policy takes the requested number of
    smallest-angle pixels per endmember, ties broken by lexicographic (n1,
    n2) order.  A pixel matched by several endmembers is kept only in the
    set with the smallest angle (ties go to the lower endmember index), so
    the returned sets are disjoint.  Endmembers whose set ends up empty are
    reported through a :class:`PurePixelWarning`.
    """
    cube = np.asarray(cube, dtype=float)
    n1, n2, _ = cube.shape
    n = n1 * n2
    m0 = np.asarray(m0, dtype=float)
    r = m0.shape[1]
    if (threshold is None) == (counts is None):
        raise ValueError("give exactly one of threshold= or counts=")
    if threshold is not None and not (np.isfinite(threshold) and threshold >= 0):
        raise ValueError(f"threshold must be a finite angle >= 0, got {threshold!r}")
    if counts is not None:
        counts = [int(c) for c in counts]
        if len(counts) != r:
            raise ValueError(f"counts must have length {r}, got {len(counts)}")
        if any(c < 0 or c > n for c in counts):
            raise ValueError(f"each count must lie in [0, {n}]")

    angles = _angles_to_endmembers(cube, m0)
    # linear index -> (n1, n2) with n1 varying fastest
    ii = np.arange(n) % n1
    jj = np.arange(n) // n1

    selected = []  # per EM: array of linear pixel indices, ordered by angle
    for k in range(r):
        order = np.lexsort((jj, ii, angles[k]))
        if threshold is not None:
            keep = order[angles[k, order] < threshold]
        else:
            keep = order[: counts[k]]
            keep = keep[np.isfinite(angles[k, keep])]
        selected.append(keep)

    # resolve pixels claimed by several endmembers: smallest angle wins,
    # ties broken by the lower endmember index
    owner = np.full(n, -1, dtype=int)
    best = np.full(n, np.inf)
    for k in range(r):
        for p in selected[k]:
            a = angles[k, p]
            if a < best[p]:
                best[p] = a
                owner[p] = k
    sets = []
    max_angle = 0.0
    for k in range(r):
        keep = [p for p in selected[k] if owner[p] == k]
        if keep:
            max_angle = max(max_angle, float(angles[k, keep].max()))
        else:
            warnings.warn(
                f"no pure pixels found for endmember {k}; its anchoring term "
                "will be absent",
                PurePixelWarning,
                stacklevel=2,
            )
        sets.append([(int(ii[p]), int(jj[p])) for p in keep])

    used = float(threshold) if threshold is not None else max_angle
    return PurePixelSets(sets=sets, threshold_used=used)


def extract_endmembers_vca(cube, n_endmembers, seed=0):
    """Vertex-component endmember extraction.

    The data is projected onto an R-dimensional representation built from the
    SVD of the mean-removed pixel matrix (top R-1 singular directions plus a
    constant coordinate), and endmembers are picked one at a time as the
    pixel maximising the magnitude of the projection onto a random direction
    orthogonal to the span of the already-selected endmembers.  The returned
    columns are actual pixel spectra with negative entries clamped to zero.
    Deterministic for a fixed seed.
    """
    cube = np.asarray(cube, dtype=float)
    y = cube_to_matrix(cube)
    nb, n = y.shape
    r = int(n_endmembers)
    if r < 1:
        raise ValueError("n_endmembers must be >= 1")
    if r > nb or r > n:
        raise ValueError(f"n_endmembers={r} exceeds bands={nb} or pixels={n}")
    sv = np.linalg.svd(y, compute_uv=False)
    tol = sv[0] * max(nb, n) * np.finfo(float).eps
    rank = int(np.sum(sv > tol))
    if rank < r:
        raise ValueError(
            f"data matrix has numerical rank {rank}, need at least {r}"
        )

    if r == 1:
        x = np.ones((1, n))
    else:
        y0 = y - y.mean(axis=1, keepdims=True)
        u = np.linalg.svd(y0, full_matrices=False)[0][:, : r - 1]
        xp = u.T @ y0
        c = np.max(np.linalg.norm(xp, axis=0))
        if c == 0.0:
            c = 1.0
        x = np.vstack([xp, np.full((1, n), c)])

    rng = np.random.default_rng(seed)
    indices = []
    for _ in range(r):
        for _attempt in range(100):
            w = rng.standard_normal(r)
            if indices:
                a = x[:, indices]
                coef = np.linalg.lstsq(a, w, rcond=None)[0]
                f = w - a @ coef
            else:
                f = w
            if np.linalg.norm(f) > 1e-12 * max(np.linalg.norm(w), 1.0):
                break
        else:
            raise RuntimeError("could not draw a direction outside the span")
        scores = np.abs(f @ x)
        scores[indices] = -1.0
        indices.append(int(np.argmax(scores)))

    return np.maximum(y[:, indices], 0.0)
