"""Synthetic scene generation with ground truth.

Scenes follow the multiplicative-variability forward model

    r_n = (M * Psi_n) a_n + e_n

with spatially correlated abundance maps carrying carved pure regions, a
smooth nonnegative scaling tensor, and white Gaussian noise scaled to an
exact target SNR.  Everything is reproducible from the seed.
"""

from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import pixel_index

_FILTER_TRUNCATE = 3.0  # kernel radius 3*sigma
_FILTER_MODE = "nearest"  # replicate boundary


@dataclass
class SynthConfig:
    dims: tuple = (50, 50, 50)
    n_endmembers: int = 3
    snr_db: float = 30.0
    variability_amplitude: float = 2.0
    gaussian_sigmas: tuple = (2.0, 1.0)  # (spatial, spectral)
    pure_region_fraction: float = 0.05
    softmax_temperature: float = 0.5
    seed: int = 0

    def validate(self):
        if any(d < 1 for d in self.dims) or len(self.dims) != 3:
            raise ValueError("dims must be three positive integers")
        if self.n_endmembers < 1:
            raise ValueError("n_endmembers must be >= 1")
        if not np.isfinite(self.snr_db) and not np.isposinf(self.snr_db):
            raise ValueError("snr_db must be finite or +inf")
        if self.variability_amplitude < 0:
            raise ValueError("variability_amplitude must be >= 0")
        if not (0 < self.pure_region_fraction < 1):
            raise ValueError("pure_region_fraction must lie in (0, 1)")
        if self.pure_region_fraction * self.n_endmembers > 1:
            raise ValueError(
                "infeasible pure_region_fraction: the requested pure regions "
                "cover more than the whole image"
            )
        if self.softmax_temperature <= 0:
            raise ValueError("softmax_temperature must be positive")


@dataclass
class GroundTruth:
    cube: np.ndarray       # (N1, N2, L), observed (noisy) scene
    a_true: np.ndarray     # (R, N)
    psi_true: np.ndarray   # (N1, N2, L, R)
    m_true: np.ndarray     # (L, R)
    noise: np.ndarray      # (N1, N2, L), recorded noise realisation


def forward_glmm(a, psi, m):
    """Noiseless forward model: pixel n is (M * Psi_n) a_n."""
    psi = np.asarray(psi, dtype=float)
    n1, n2, nb, r = psi.shape
    a_im = np.asarray(a, dtype=float).reshape(r, n2, n1)
    m = np.asarray(m, dtype=float)
    return np.einsum("ijlk,lk,kji->ijl", psi, m, a_im, optimize=True)


_PURE_BLOCK_SIDE = 2


def _carve_pure_regions(a, shape, n_pure, rng):
    """Overwrite scattered square blocks per endmember with one-hot columns.

    Each endmember gets enough blocks (side 4, or smaller for tiny images)
    to cover ``n_pure`` pixels, taken from a seeded shuffle of a
    non-overlapping grid of slots so regions are spread over the image and
    never collide.  Raises ValueError when the image cannot host them.
    """
    n1, n2 = shape
    r = a.shape[0]
    side = min(_PURE_BLOCK_SIDE, n1, n2, max(1, int(np.ceil(np.sqrt(n_pure)))))
    per_block = side * side
    n_blocks = int(np.ceil(n_pure / per_block))
    slots = [
        (i * side, j * side)
        for i in range(n1 // side)
        for j in range(n2 // side)
    ]
    if len(slots) < r * n_blocks:
        raise ValueError(
            f"infeasible pure_region_fraction: need {r * n_blocks} blocks of "
            f"side {side}, image offers {len(slots)}"
        )
    order = rng.permutation(len(slots))
    pure_pixels = []
    for k in range(r):
        pixels = []
        for b in range(n_blocks):
            i0, j0 = slots[order[k * n_blocks + b]]
            pixels.extend(
                pixel_index(i0 + di, j0 + dj, shape)
                for di in range(side)
                for dj in range(side)
            )
        pixels = pixels[:n_pure]
        a[:, pixels] = 0.0
        a[k, pixels] = 1.0
        pure_pixels.append(pixels)
    return pure_pixels


def generate(cfg, endmember_library):
    """Build a scene with ground truth from the first R library spectra.

    Abundances: per-endmember white-noise fields smoothed spatially,
    standardised, passed through a softmax with the configured temperature,
    then square pure regions covering ``pure_region_fraction`` of the pixels
    per endmember are overwritten with one-hot columns.

    Scaling tensor: clamp(1 + amplitude * smoothed white noise, 0) per
    endmember, smoothed with a separable Gaussian (sigma_spatial over both
    image axes, sigma_spectral over bands; kernel radius 3 sigma, replicate
    boundary).

    Noise: white Gaussian scaled so the realised energy ratio matches
    ``snr_db`` exactly; ``snr_db=inf`` yields the noiseless forward model.
    """
    cfg.validate()
    n1, n2, nb = cfg.dims
    r = cfg.n_endmembers
    n = n1 * n2
    library = np.asarray(endmember_library, dtype=float)
    if library.shape[0] != nb:
        raise ValueError(
            f"library has {library.shape[0]} bands, scene needs {nb}"
        )
    if library.shape[1] < r:
        raise ValueError(
            f"library has {library.shape[1]} spectra, scene needs {r}"
        )
    m_true = library[:, :r].copy()
    sig_sp, sig_bd = cfg.gaussian_sigmas
    rng = np.random.default_rng(cfg.seed)

    fields = np.empty((r, n1, n2))
    for k in range(r):
        f = gaussian_filter(
            rng.standard_normal((n1, n2)),
            sigma=sig_sp,
            truncate=_FILTER_TRUNCATE,
            mode=_FILTER_MODE,
        )
        std = f.std()
        fields[k] = (f - f.mean()) / (std if std > 0 else 1.0)
    logits = fields / cfg.softmax_temperature
    logits -= logits.max(axis=0, keepdims=True)
    expf = np.exp(logits)
    a_im = expf / expf.sum(axis=0, keepdims=True)
    # [k, n1, n2] to the canonical pixel order n = n1 + N1*n2 (n1 fastest)
    a_true = a_im.transpose(0, 2, 1).reshape(r, n).copy()

    n_pure = int(round(cfg.pure_region_fraction * n))
    if n_pure > 0:
        _carve_pure_regions(a_true, (n1, n2), n_pure, rng)

    psi_true = np.empty((n1, n2, nb, r))
    for k in range(r):
        w = rng.standard_normal((n1, n2, nb))
        smooth = gaussian_filter(
            w,
            sigma=(sig_sp, sig_sp, sig_bd),
            truncate=_FILTER_TRUNCATE,
            mode=_FILTER_MODE,
        )
        psi_true[:, :, :, k] = 1.0 + cfg.variability_amplitude * smooth
    psi_true = np.maximum(psi_true, 0.0)

    clean = forward_glmm(a_true, psi_true, m_true)
    if np.isposinf(cfg.snr_db):
        noise = np.zeros_like(clean)
    else:
        g = rng.standard_normal(clean.shape)
        sigma = np.linalg.norm(clean) / (
            np.linalg.norm(g) * 10.0 ** (cfg.snr_db / 20.0)
        )
        noise = sigma * g
    cube = clean + noise
    return GroundTruth(
        cube=cube, a_true=a_true, psi_true=psi_true, m_true=m_true, noise=noise
    )


def load_default_library(bands=None):
    """Bundled synthetic reference spectra (224 bands, 3 columns).

    The spectra are smooth analytic curves shaped like generic vegetation,
    soil, and water reflectances (see ``data/reference_spectra.csv``); they
    stand in for a real spectral library.  When ``bands`` is given the
    curves are linearly resampled to that many bands.
    """
    from .hsio import read_matrix_csv

    path = resources.files("hsunmix.data").joinpath("reference_spectra.csv")
    with resources.as_file(path) as p:
        lib = read_matrix_csv(p)
    if bands is None or bands == lib.shape[0]:
        return lib
    old = np.linspace(0.0, 1.0, lib.shape[0])
    new = np.linspace(0.0, 1.0, int(bands))
    return np.column_stack([np.interp(new, old, lib[:, j]) for j in range(lib.shape[1])])
