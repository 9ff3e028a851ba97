"""End-to-end run orchestration.

A run is described by a flat key=value configuration (file and/or CLI
flags).  The pipeline executes scene synthesis (or cube loading), reference
endmember extraction (or loading), pure-pixel selection, scaling-tensor
estimation, unmixing, the fixed-endmember baseline, and metrics, writing all
artifacts plus a machine-readable manifest into the output directory.  Runs
are bit-reproducible: the manifest and the resolved config contain every
parameter and seed.
"""

import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import hsio
from .core import matrix_to_cube
from .extraction import extract_endmembers_vca, find_pure_pixels
from .metrics import evaluate_unmixing
from .synthgen import SynthConfig, generate, load_default_library
from .unmixing import UnmixConfig, fcls, unmix
from .variability import VariabilityConfig, estimate_variability


@dataclass
class RunConfig:
    # inputs (empty string means "produce internally")
    cube: str = ""
    m0: str = ""
    a_true: str = ""
    psi_true: str = ""
    m_true: str = ""
    out_dir: str = "out"
    # scene synthesis
    n1: int = 50
    n2: int = 50
    bands: int = 50
    endmembers: int = 3
    snr_db: float = 30.0
    amplitude: float = 2.0
    sigma_spatial: float = 3.0
    sigma_spectral: float = 2.0
    pure_fraction: float = 0.06
    temperature: float = 0.5
    seed: int = 0
    # extraction and pure pixels
    vca_seed: int = 0
    pure_threshold: float = float("nan")  # NaN means "use counts"
    pure_counts: str = "100,50,10"
    # scaling-tensor estimation; psi is "estimate", "ones", or a file path
    psi: str = "estimate"
    lambda_psi: float = 1e3
    epsilon: float = 1e-5
    rank: int = 10
    var_max_iter: int = 30
    var_rel_tol: float = 1e-4
    cp_seed: int = 0
    # unmixing
    lambda_m: float = 0.1
    lambda_a: float = 0.01
    admm_rho: float = float("nan")  # NaN means "auto"
    admm_max_iter: int = 500
    admm_tol: float = 1e-6
    outer_max_iter: int = 30
    outer_rel_tol: float = 1e-4
    # extras
    with_fcls: bool = True
    render: bool = False


_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}
VALID_KEYS = frozenset(_FIELDS)


def _convert(key, value):
    kind = _FIELDS[key]
    if kind is bool or kind == "bool":
        low = str(value).strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"config key {key!r}: expected a boolean, got {value!r}")
    if kind is int or kind == "int":
        return int(value)
    if kind is float or kind == "float":
        return float(value)
    return str(value)


def load_run_config(path=None, overrides=None):
    """Build a RunConfig from an optional key=value file plus overrides."""
    cfg = RunConfig()
    merged = {}
    if path is not None:
        merged.update(hsio.read_keyvalue_config(path, VALID_KEYS))
    if overrides:
        for k, v in overrides.items():
            if k not in VALID_KEYS:
                raise ValueError(
                    f"unknown config key {k!r}; valid keys: "
                    + ", ".join(sorted(VALID_KEYS))
                )
            merged[k] = v
    for k, v in merged.items():
        setattr(cfg, k, _convert(k, v))
    return cfg


def _config_dict(cfg):
    out = {}
    for name in sorted(VALID_KEYS):
        v = getattr(cfg, name)
        out[name] = repr(float(v)) if isinstance(v, float) else str(v)
    return out


def _write_resolved_config(cfg, path):
    lines = [f"{k}={v}" for k, v in _config_dict(cfg).items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def _parse_counts(text, r):
    counts = [int(c) for c in str(text).split(",") if c.strip()]
    if len(counts) == 1:
        counts = counts * r
    if len(counts) != r:
        raise ValueError(
            f"pure_counts needs 1 or {r} comma-separated integers, got {text!r}"
        )
    return counts


def _fmt(value):
    if value is None:
        return ""
    return repr(float(value))


def run_pipeline(cfg, log=print):
    """Execute all stages of a run; returns the manifest dictionary."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = {}
    current = {"stage": "setup"}

    def stage(name):
        current["stage"] = name
        log(f"[pipeline] {name}")

    try:
        stage("scene")
        if cfg.cube:
            cube = hsio.read_cube(cfg.cube)
            a_true = hsio.read_matrix_csv(cfg.a_true) if cfg.a_true else None
            psi_true = hsio.read_tensor4(cfg.psi_true) if cfg.psi_true else None
            m_true = hsio.read_matrix_csv(cfg.m_true) if cfg.m_true else None
        else:
            scene_cfg = SynthConfig(
                dims=(cfg.n1, cfg.n2, cfg.bands),
                n_endmembers=cfg.endmembers,
                snr_db=cfg.snr_db,
                variability_amplitude=cfg.amplitude,
                gaussian_sigmas=(cfg.sigma_spatial, cfg.sigma_spectral),
                pure_region_fraction=cfg.pure_fraction,
                softmax_temperature=cfg.temperature,
                seed=cfg.seed,
            )
            truth = generate(scene_cfg, load_default_library(cfg.bands))
            cube, a_true = truth.cube, truth.a_true
            psi_true, m_true = truth.psi_true, truth.m_true
            hsio.write_cube(out / "cube.hscube", cube)
            hsio.write_matrix_csv(out / "a_true.csv", a_true)
            hsio.write_tensor4(out / "psi_true.hsten", psi_true)
            hsio.write_matrix_csv(out / "m_true.csv", m_true)
            artifacts.update(
                cube="cube.hscube",
                a_true="a_true.csv",
                psi_true="psi_true.hsten",
                m_true="m_true.csv",
            )
        n1c, n2c, _ = cube.shape
        r = cfg.endmembers

        stage("extract")
        if cfg.m0:
            m0 = hsio.read_matrix_csv(cfg.m0)
        else:
            m0 = extract_endmembers_vca(cube, r, seed=cfg.vca_seed)
        hsio.write_matrix_csv(out / "m0.csv", m0)
        artifacts["m0"] = "m0.csv"

        stage("purepix")
        if np.isnan(cfg.pure_threshold):
            pure = find_pure_pixels(cube, m0, counts=_parse_counts(cfg.pure_counts, r))
        else:
            pure = find_pure_pixels(cube, m0, threshold=cfg.pure_threshold)
        hsio.write_purepixels(out / "pure.json", pure)
        artifacts["pure"] = "pure.json"

        stage("variability")
        if cfg.psi == "ones":
            psi = np.ones(cube.shape + (r,))
            var_iters = 0
        elif cfg.psi == "estimate":
            var_cfg = VariabilityConfig(
                lambda_psi=cfg.lambda_psi,
                epsilon=cfg.epsilon,
                rank=cfg.rank,
                max_outer_iter=cfg.var_max_iter,
                rel_tol=cfg.var_rel_tol,
                cp_seed=cfg.cp_seed,
            )
            var = estimate_variability(cube, m0, pure, var_cfg)
            psi = var.psi
            var_iters = var.iterations
        else:
            psi = hsio.read_tensor4(cfg.psi)
            var_iters = 0
        hsio.write_tensor4(out / "psi.hsten", psi)
        artifacts["psi"] = "psi.hsten"

        stage("unmix")
        unmix_cfg = UnmixConfig(
            lambda_m=cfg.lambda_m,
            lambda_a=cfg.lambda_a,
            admm_rho=None if np.isnan(cfg.admm_rho) else cfg.admm_rho,
            admm_max_iter=cfg.admm_max_iter,
            admm_tol=cfg.admm_tol,
            outer_max_iter=cfg.outer_max_iter,
            outer_rel_tol=cfg.outer_rel_tol,
        )
        a_est, m_est, trace = unmix(cube, m0, psi, unmix_cfg)
        hsio.write_matrix_csv(out / "a.csv", a_est)
        hsio.write_cube(out / "a.hscube", matrix_to_cube(a_est, (n1c, n2c)))
        hsio.write_tensor4(
            out / "m.hsten", m_est.reshape(n1c, n2c, *m_est.shape[1:], order="F")
        )
        artifacts.update(a="a.csv", a_bin="a.hscube", m="m.hsten")

        a_fcls = None
        if cfg.with_fcls:
            stage("fcls")
            a_fcls = fcls(cube, m0, unmix_cfg)
            hsio.write_matrix_csv(out / "a_fcls.csv", a_fcls)
            artifacts["a_fcls"] = "a_fcls.csv"

        stage("metrics")
        report = evaluate_unmixing(
            cube,
            a_est,
            m_est=m_est,
            m0_est=m0,
            a_true=a_true,
            m_true=m_true,
            psi_true=psi_true,
            psi_est=psi,
        )
        metrics = {
            "rmse_a": report.rmse_a,
            "rmse_m": report.rmse_m,
            "sam_m": report.sam_m,
            "rmse_r": report.rmse_r,
            "rmse_psi": report.rmse_psi,
        }
        if a_fcls is not None:
            fcls_report = evaluate_unmixing(
                cube,
                a_fcls,
                m_est=m0,
                m0_est=m0,
                a_true=a_true,
                m_true=m_true,
                psi_true=psi_true,
            )
            metrics["rmse_a_fcls"] = fcls_report.rmse_a
            metrics["rmse_r_fcls"] = fcls_report.rmse_r
        names = sorted(metrics)
        csv_text = ",".join(names) + "\n" + ",".join(_fmt(metrics[k]) for k in names) + "\n"
        (out / "metrics.csv").write_text(csv_text, encoding="ascii")
        artifacts["metrics"] = "metrics.csv"

        if cfg.render:
            stage("render")
            maps = matrix_to_cube(a_est, (n1c, n2c))
            for k in range(maps.shape[2]):
                name = f"abundance_{k}.ppm"
                hsio.render_heatmap(maps[:, :, k], out / name)
                artifacts[f"render_{k}"] = name
    except Exception as e:
        raise RuntimeError(f"pipeline stage {current['stage']!r} failed: {e}") from e

    import scipy

    manifest = {
        "config": _config_dict(cfg),
        "versions": {
            "hsunmix": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": "%d.%d.%d" % sys.version_info[:3],
        },
        "iterations": {"variability": var_iters, "unmix": len(trace)},
        "metrics": {k: (None if v is None else float(v)) for k, v in metrics.items()},
        "artifacts": artifacts,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="ascii"
    )
    _write_resolved_config(cfg, out / "run.cfg")
    return manifest
