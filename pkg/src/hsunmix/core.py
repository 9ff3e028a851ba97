"""Array layout conventions shared across the package.

An image cube is a float array of shape (N1, N2, L): N1 rows, N2 columns,
L spectral bands.  Its matrix view is the (L, N) array whose column n holds
the spectrum of pixel (n1, n2) with

    n = n1 + N1 * n2            (n1 varies fastest)

The same ordering is used everywhere a 4-D array (N1, N2, L, R) is
linearised: the canonical element order is Fortran order, i.e.

    flat[n1 + N1*(n2 + N2*(l + L*k))] = t[n1, n2, l, k]

Abundance matrices are (R, N) with columns on the probability simplex, and
per-pixel endmember stacks are (N, L, R) with slice n holding the L x R
endmember matrix of pixel n.
"""

import numpy as np


def cube_to_matrix(cube):
    """Return the (L, N) matrix view of an (N1, N2, L) cube."""
    cube = np.asarray(cube)
    n1, n2, nb = cube.shape
    return cube.reshape(n1 * n2, nb, order="F").T


def matrix_to_cube(mat, shape):
    """Inverse of :func:`cube_to_matrix` for spatial dims ``shape=(N1, N2)``."""
    mat = np.asarray(mat)
    n1, n2 = shape
    return mat.T.reshape(n1, n2, -1, order="F")


def pixelwise_scaling(psi):
    """Reshape a scaling tensor (N1, N2, L, R) to per-pixel form (N, L, R)."""
    psi = np.asarray(psi)
    n1, n2, nb, r = psi.shape
    return psi.reshape(n1 * n2, nb, r, order="F")


def pixel_index(n1, n2, shape):
    """Linear pixel index of coordinate (n1, n2) in an (N1, N2) grid."""
    return n1 + shape[0] * n2
