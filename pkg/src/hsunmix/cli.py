"""Command-line interface.

Exit codes: 0 success, 2 argument/config error, 3 data/file-format error,
4 a convergence warning was raised while --strict was active.
"""

import argparse
import sys
import warnings

import numpy as np

from . import hsio
from .core import matrix_to_cube
from .exceptions import ConvergenceWarning, DataFormatError
from .extraction import extract_endmembers_vca, find_pure_pixels
from .metrics import evaluate_unmixing
from .pipeline import RunConfig, VALID_KEYS, load_run_config, run_pipeline
from .synthgen import SynthConfig, generate, load_default_library
from .unmixing import UnmixConfig, fcls, unmix
from .variability import VariabilityConfig, estimate_variability

_ARG_ERROR = 2
_DATA_ERROR = 3
_STRICT_WARN = 4


def _add_unmix_flags(p):
    p.add_argument("--lambda-m", type=float, default=0.1)
    p.add_argument("--lambda-a", type=float, default=0.01)
    p.add_argument("--admm-rho", type=float, default=None,
                   help="ADMM penalty; default scales with the data")
    p.add_argument("--admm-max-iter", type=int, default=500)
    p.add_argument("--admm-tol", type=float, default=1e-6)
    p.add_argument("--outer-max-iter", type=int, default=30)
    p.add_argument("--outer-rel-tol", type=float, default=1e-4)


def _unmix_cfg(args):
    return UnmixConfig(
        lambda_m=args.lambda_m,
        lambda_a=args.lambda_a,
        admm_rho=args.admm_rho,
        admm_max_iter=args.admm_max_iter,
        admm_tol=args.admm_tol,
        outer_max_iter=args.outer_max_iter,
        outer_rel_tol=args.outer_rel_tol,
    )


def _cmd_synth(args):
    cfg = SynthConfig(
        dims=(args.n1, args.n2, args.bands),
        n_endmembers=args.endmembers,
        snr_db=args.snr_db,
        variability_amplitude=args.amplitude,
        gaussian_sigmas=(args.sigma_spatial, args.sigma_spectral),
        pure_region_fraction=args.pure_fraction,
        softmax_temperature=args.temperature,
        seed=args.seed,
    )
    library = (
        hsio.read_matrix_csv(args.library)
        if args.library
        else load_default_library(args.bands)
    )
    truth = generate(cfg, library)
    hsio.write_cube(args.cube, truth.cube)
    if args.a_true:
        hsio.write_matrix_csv(args.a_true, truth.a_true)
    if args.psi_true:
        hsio.write_tensor4(args.psi_true, truth.psi_true)
    if args.m_true:
        hsio.write_matrix_csv(args.m_true, truth.m_true)
    print(f"wrote scene {cfg.dims} with {cfg.n_endmembers} endmembers to {args.cube}")
    return 0


def _cmd_extract(args):
    cube = hsio.read_cube(args.cube)
    m0 = extract_endmembers_vca(cube, args.endmembers, seed=args.seed)
    hsio.write_matrix_csv(args.out, m0)
    print(f"extracted {args.endmembers} endmembers to {args.out}")
    return 0


def _cmd_purepix(args):
    cube = hsio.read_cube(args.cube)
    m0 = hsio.read_matrix_csv(args.m0)
    if (args.pure_threshold is None) == (args.pure_counts is None):
        raise ValueError("give exactly one of --pure-threshold / --pure-counts")
    if args.pure_threshold is not None:
        pure = find_pure_pixels(cube, m0, threshold=args.pure_threshold)
    else:
        counts = [int(c) for c in args.pure_counts.split(",")]
        pure = find_pure_pixels(cube, m0, counts=counts)
    hsio.write_purepixels(args.out, pure)
    sizes = ",".join(str(len(s)) for s in pure.sets)
    print(f"pure pixel set sizes: {sizes} (threshold_used={pure.threshold_used:.6g})")
    return 0


def _cmd_variability(args):
    cube = hsio.read_cube(args.cube)
    m0 = hsio.read_matrix_csv(args.m0)
    pure = hsio.read_purepixels(args.pure)
    cfg = VariabilityConfig(
        lambda_psi=args.lambda_psi,
        epsilon=args.epsilon,
        rank=args.rank,
        max_outer_iter=args.max_iter,
        rel_tol=args.rel_tol,
        cp_seed=args.cp_seed,
    )
    result = estimate_variability(cube, m0, pure, cfg)
    hsio.write_tensor4(args.out, result.psi)
    print(
        f"estimated scaling tensor in {result.iterations} iterations, "
        f"objective {result.objective_trace[-1]:.6e}"
    )
    return 0


def _load_psi(spec, cube_shape, r):
    if spec == "ones":
        return np.ones(cube_shape + (r,))
    return hsio.read_tensor4(spec)


def _cmd_unmix(args):
    cube = hsio.read_cube(args.cube)
    m0 = hsio.read_matrix_csv(args.m0)
    psi = _load_psi(args.psi, cube.shape, m0.shape[1])
    a, m, trace = unmix(cube, m0, psi, _unmix_cfg(args))
    hsio.write_matrix_csv(args.out_a, a)
    if args.out_a_bin:
        hsio.write_cube(args.out_a_bin, matrix_to_cube(a, cube.shape[:2]))
    if args.out_m:
        n1, n2 = cube.shape[:2]
        hsio.write_tensor4(args.out_m, m.reshape(n1, n2, *m.shape[1:], order="F"))
    print(f"unmixing done in {len(trace)} outer iterations, "
          f"objective {trace[-1]:.6e}")
    return 0


def _cmd_fcls(args):
    cube = hsio.read_cube(args.cube)
    m0 = hsio.read_matrix_csv(args.m0)
    a = fcls(cube, m0)
    hsio.write_matrix_csv(args.out_a, a)
    print(f"fcls abundances written to {args.out_a}")
    return 0


def _cmd_metrics(args):
    cube = hsio.read_cube(args.cube) if args.cube else None
    a_est = hsio.read_matrix_csv(args.a_est)
    m_est = hsio.read_tensor4(args.m_est) if args.m_est else None
    if m_est is not None:
        n1, n2, nb, r = m_est.shape
        m_est = m_est.reshape(n1 * n2, nb, r, order="F")
    report = evaluate_unmixing(
        cube,
        a_est,
        m_est=m_est,
        m0_est=hsio.read_matrix_csv(args.m0_est) if args.m0_est else None,
        a_true=hsio.read_matrix_csv(args.a_true) if args.a_true else None,
        m_true=hsio.read_matrix_csv(args.m_true) if args.m_true else None,
        psi_true=hsio.read_tensor4(args.psi_true) if args.psi_true else None,
        psi_est=hsio.read_tensor4(args.psi_est) if args.psi_est else None,
    )
    if args.sam_average_per_pair and report.sam_m is not None:
        report.sam_m = report.sam_m / a_est.shape[0]
    fields = ["rmse_a", "rmse_m", "sam_m", "rmse_r", "rmse_psi"]
    values = [getattr(report, f) for f in fields]
    if args.out:
        row = ",".join("" if v is None else repr(float(v)) for v in values)
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write(",".join(fields) + "\n" + row + "\n")
    for f, v in zip(fields, values):
        print(f"{f:10s} {'-' if v is None else f'{v:.6f}'}")
    return 0


def _cmd_render(args):
    if args.a:
        a = hsio.read_matrix_csv(args.a)
        if args.n1 is None:
            raise ValueError("--n1 is required to reshape an abundance CSV")
        maps = matrix_to_cube(a, (args.n1, a.shape[1] // args.n1))
        tag = "abundance"
    else:
        psi = hsio.read_tensor4(args.psi)
        maps = psi.mean(axis=2)
        tag = "scaling"
    paths = []
    for k in range(maps.shape[2]):
        path = f"{args.out_prefix}_{tag}_{k}.ppm"
        hsio.render_heatmap(maps[:, :, k], path)
        paths.append(path)
    print("wrote " + ", ".join(paths))
    return 0


def _cmd_pipeline(args):
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k] = v
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    if args.psi is not None:
        overrides["psi"] = args.psi
    cfg = load_run_config(args.config, overrides)
    manifest = run_pipeline(cfg)
    shown = {k: v for k, v in manifest["metrics"].items() if v is not None}
    for k in sorted(shown):
        print(f"{k:14s} {shown[k]:.6f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hsunmix",
        description="Hyperspectral unmixing under endmember variability",
    )
    parser.add_argument(
        "--strict",
        action="store_true",
        help="treat solver non-convergence warnings as errors (exit 4)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--cube", required=True)
    p.add_argument("--a-true", default="")
    p.add_argument("--psi-true", default="")
    p.add_argument("--m-true", default="")
    p.add_argument("--library", default="", help="endmember library CSV")
    p.add_argument("--n1", type=int, default=50)
    p.add_argument("--n2", type=int, default=50)
    p.add_argument("--bands", type=int, default=50)
    p.add_argument("--endmembers", type=int, default=3)
    p.add_argument("--snr-db", type=float, default=30.0)
    p.add_argument("--amplitude", type=float, default=2.0)
    p.add_argument("--sigma-spatial", type=float, default=3.0)
    p.add_argument("--sigma-spectral", type=float, default=2.0)
    p.add_argument("--pure-fraction", type=float, default=0.06)
    p.add_argument("--temperature", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("extract", help="extract reference endmembers")
    p.add_argument("--cube", required=True)
    p.add_argument("--endmembers", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("purepix", help="select pure pixels")
    p.add_argument("--cube", required=True)
    p.add_argument("--m0", required=True)
    p.add_argument("--pure-threshold", type=float, default=None)
    p.add_argument("--pure-counts", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_purepix)

    p = sub.add_parser("variability", help="estimate the scaling tensor")
    p.add_argument("--cube", required=True)
    p.add_argument("--m0", required=True)
    p.add_argument("--pure", required=True)
    p.add_argument("--lambda-psi", type=float, default=1e3)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--rank", type=int, default=10)
    p.add_argument("--max-iter", type=int, default=30)
    p.add_argument("--rel-tol", type=float, default=1e-4)
    p.add_argument("--cp-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_variability)

    p = sub.add_parser("unmix", help="abundance and endmember estimation")
    p.add_argument("--cube", required=True)
    p.add_argument("--m0", required=True)
    p.add_argument("--psi", required=True, help="scaling tensor path, or 'ones'")
    _add_unmix_flags(p)
    p.add_argument("--out-a", required=True)
    p.add_argument("--out-a-bin", default="")
    p.add_argument("--out-m", default="")
    p.set_defaults(func=_cmd_unmix)

    p = sub.add_parser("fcls", help="fully constrained least squares baseline")
    p.add_argument("--cube", required=True)
    p.add_argument("--m0", required=True)
    p.add_argument("--out-a", required=True)
    p.set_defaults(func=_cmd_fcls)

    p = sub.add_parser("metrics", help="compare estimates against ground truth")
    p.add_argument("--a-est", required=True)
    p.add_argument("--cube", default="")
    p.add_argument("--m-est", default="")
    p.add_argument("--m0-est", default="")
    p.add_argument("--a-true", default="")
    p.add_argument("--m-true", default="")
    p.add_argument("--psi-true", default="")
    p.add_argument("--psi-est", default="")
    p.add_argument("--sam-average-per-pair", action="store_true")
    p.add_argument("--out", default="")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("render", help="render heatmaps as PPM images")
    p.add_argument("--a", default="", help="abundance CSV (needs --n1)")
    p.add_argument("--psi", default="", help="scaling tensor (mean over bands)")
    p.add_argument("--n1", type=int, default=None)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("pipeline", help="run all stages from a config")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--psi", default=None, help="'estimate', 'ones', or a path")
    p.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override any config key (see docs); repeatable",
    )
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            code = args.func(args)
        except (DataFormatError, FileNotFoundError) as e:
            print(f"error: {e}", file=sys.stderr)
            return _DATA_ERROR
        except ValueError as e:
            print(f"error: {e}", file=sys.stderr)
            return _ARG_ERROR
        except RuntimeError as e:
            cause = e.__cause__
            print(f"error: {e}", file=sys.stderr)
            if isinstance(cause, (DataFormatError, FileNotFoundError)):
                return _DATA_ERROR
            return _ARG_ERROR
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    if args.strict and any(
        issubclass(w.category, ConvergenceWarning) for w in caught
    ):
        print("error: convergence warnings with --strict", file=sys.stderr)
        return _STRICT_WARN
    return code


if __name__ == "__main__":
    sys.exit(main())
