"""supertomo command line: phantom, simulate, reconstruct, sweep, compare.

Exit codes: 0 when a reconstruction terminates by its residual threshold
(and for the non-solver commands), 2 for configuration errors, 3 when the
iteration guard stops a run, 4 on a conjugate-gradient breakdown.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .. import geometry as geo
from ..linops import Image, SparseMatrix, load_matrix, save_matrix
from ..metrics import EllipseMask
from ..precond import PreconditionerSpec, m_operator, n_inv_t_operator, n_operator
from ..solvers import (
    ArtParams,
    RunResult,
    run_art,
    run_cg,
    run_pcg,
    sup_art,
    sup_cg,
    sup_pcg,
    sup_tpcg,
    uniform_prior,
)
from ..tv import SuperiorizationParams
from .config import (
    ALGORITHMS,
    ConfigError,
    ExperimentConfig,
    build_config,
    parse_set_option,
    read_config_file,
    read_grid_file,
    standard_grid,
)
from . import figures, io

EXIT_BY_STATUS = {"converged": 0, "max_iter": 3, "breakdown": 4}

_GEOMETRY_KEYS = (
    "grid_rows",
    "grid_cols",
    "n_angles",
    "n_rays",
    "ray_spacing",
    "pixel_size",
)


def _config_from_args(args, config_path=None) -> ExperimentConfig:
    path = config_path if config_path is not None else getattr(args, "config", None)
    entries = read_config_file(path) if path else {}
    sets = [parse_set_option(s) for s in (getattr(args, "set", None) or [])]
    return build_config(entries, sets, seed=getattr(args, "seed", None), out=getattr(args, "out", None))


def _resolve_ellipses(cfg: ExperimentConfig) -> list[geo.EllipseSpec] | None:
    name = cfg.phantom.strip()
    if not name or name.lower() == "none":
        return None
    if name.lower() == "default":
        return geo.default_head_ellipses()
    return geo.read_phantom_spec(name)


def _projection_for(cfg: ExperimentConfig, geom: geo.ScanGeometry) -> SparseMatrix:
    """Load the projection matrix from cfg.matrix when present, else build it.

    A configured-but-missing matrix path is built once and saved there so
    later commands can reuse it.
    """
    if cfg.matrix:
        path = Path(cfg.matrix)
        if path.exists():
            mat = load_matrix(path)
            if (mat.n_rows, mat.n_cols) != (geom.n_measurements, geom.n_pixels):
                raise ConfigError(
                    f"matrix file {path} is {mat.n_rows}x{mat.n_cols} but the scan "
                    f"expects {geom.n_measurements}x{geom.n_pixels}"
                )
            return mat
        mat = geo.build_projection_matrix(geom)
        save_matrix(path, mat)
        return mat
    return geo.build_projection_matrix(geom)


def _phantom_and_mask(
    cfg: ExperimentConfig, geom: geo.ScanGeometry
) -> tuple[Image | None, EllipseMask | None]:
    ellipses = _resolve_ellipses(cfg)
    if ellipses is None:
        return None, None
    phantom = geo.generate_phantom(ellipses, geom)
    mask = EllipseMask.centered(geom.grid_rows, geom.grid_cols, geom.pixel_size)
    return phantom, mask


def _sinogram_for(cfg: ExperimentConfig, geom=None):
    """Read the configured sinogram, or simulate one in memory."""
    if cfg.sinogram:
        sino = io.read_sinogram(cfg.sinogram)
        for key in _GEOMETRY_KEYS:
            if key in cfg.explicit and getattr(cfg, key) != getattr(sino.geometry, key):
                raise ConfigError(
                    f"config sets {key}={getattr(cfg, key)} but the sinogram header "
                    f"carries {key}={getattr(sino.geometry, key)}"
                )
        return sino, None
    geom = geom or cfg.geometry()
    ellipses = _resolve_ellipses(cfg)
    if ellipses is None:
        raise ConfigError("no sinogram path configured and no phantom to simulate from")
    projection = _projection_for(cfg, geom)
    phantom = geo.generate_phantom(ellipses, geom)
    sino = geo.simulate_data(projection, phantom, geom, cfg.mean_photons, cfg.seed)
    return sino, projection


def _run_algorithm(
    cfg: ExperimentConfig,
    projection: SparseMatrix,
    b: np.ndarray,
    geom: geo.ScanGeometry,
    phantom: Image | None,
    mask: EllipseMask | None,
    eps: float | None = None,
    max_iter: int | None = None,
) -> RunResult:
    eps = cfg.eps if eps is None else eps
    max_iter = cfg.max_iter if max_iter is None else max_iter
    x0 = Image.zeros(geom.grid_rows, geom.grid_cols)
    p = cfg.params
    common = dict(eps=eps, max_iter=max_iter, phantom=phantom, se_mask=mask)

    if cfg.algorithm in ("supcg", "suppcg", "suptpcg", "supart"):
        sup = SuperiorizationParams(n_steps=p["K"], decay=p["a"], base_step=p["gamma"])
    if cfg.algorithm in ("pcg", "suppcg", "suptpcg"):
        filt = PreconditionerSpec(
            ramp_offset=p["mu"],
            hamming=p["rho"],
            grid_rows=geom.grid_rows,
            grid_cols=geom.grid_cols,
        )

    if cfg.algorithm == "cg":
        return run_cg(projection, b, x0, **common)
    if cfg.algorithm == "pcg":
        return run_pcg(projection, b, x0, m_op=m_operator(filt), **common)
    if cfg.algorithm == "supcg":
        common.pop("eps")
        return sup_cg(projection, b, x0, params=sup, eps_prime=eps / 2.0, **common)
    if cfg.algorithm == "suppcg":
        return sup_pcg(projection, b, x0, params=sup, m_op=m_operator(filt), **common)
    if cfg.algorithm == "suptpcg":
        xhat0 = Image(n_inv_t_operator(filt)(x0.data), x0.rows, x0.cols)
        return sup_tpcg(
            projection,
            b,
            xhat0,
            params=sup,
            n_op=n_operator(filt),
            n_inv_op=n_inv_t_operator(filt),
            **common,
        )
    art = ArtParams(
        snr=p["r"],
        relaxation=p["lambda"],
        gray_prior=uniform_prior(projection, b, geom.grid_rows, geom.grid_cols),
    )
    if cfg.algorithm == "art":
        return run_art(projection, b, x0, art_params=art, **common)
    return sup_art(projection, b, x0, art_params=art, params=sup, **common)


# --- subcommands ------------------------------------------------------------


def cmd_phantom(args) -> int:
    cfg = _config_from_args(args)
    geom = cfg.geometry()
    ellipses = _resolve_ellipses(cfg)
    if ellipses is None:
        raise ConfigError("phantom command needs phantom=default or a spec file path")
    image = geo.generate_phantom(ellipses, geom)
    out = io.ensure_dir(cfg.out)
    io.write_image(out / "phantom.vec", image)
    io.write_pgm(out / "phantom.pgm", image, cfg.window_lo, cfg.window_hi)
    figures.save_image_figure(out / "phantom.png", image, cfg.window_lo, cfg.window_hi)
    print(f"wrote {out / 'phantom.vec'} ({geom.grid_rows}x{geom.grid_cols}, "
          f"{len(ellipses)} ellipses)")
    return 0


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    geom = cfg.geometry()
    ellipses = _resolve_ellipses(cfg)
    if ellipses is None:
        raise ConfigError("simulate command needs phantom=default or a spec file path")
    projection = _projection_for(cfg, geom)
    phantom = geo.generate_phantom(ellipses, geom)
    sino = geo.simulate_data(projection, phantom, geom, cfg.mean_photons, cfg.seed)
    out = io.ensure_dir(cfg.out)
    io.write_sinogram(out / "sinogram.vec", sino)
    noise = "exact" if cfg.mean_photons is None else f"poisson({cfg.mean_photons:g})"
    print(f"wrote {out / 'sinogram.vec'} ({sino.data.size} rays, {noise}, seed {cfg.seed})")
    return 0


def cmd_reconstruct(args) -> int:
    cfg = _config_from_args(args)
    if not cfg.sinogram:
        raise ConfigError("reconstruct requires sinogram=PATH in the config")
    sino, projection = _sinogram_for(cfg)
    geom = sino.geometry
    if projection is None:
        projection = _projection_for(cfg, geom)
    phantom, mask = _phantom_and_mask(cfg, geom)
    result = _run_algorithm(cfg, projection, sino.data, geom, phantom, mask)

    out = io.ensure_dir(cfg.out)
    io.write_image(out / "recon.vec", result.x_image)
    io.write_pgm(out / "recon.pgm", result.x_image, cfg.window_lo, cfg.window_hi)
    figures.save_image_figure(
        out / "recon.png",
        result.x_image,
        cfg.window_lo,
        cfg.window_hi,
        title=f"{cfg.algorithm}, k={result.k}",
    )
    io.write_curves_csv(out / "curves.csv", result.trace)
    figures.save_curves_figure(out / "curves.png", [(cfg.algorithm, result.trace)])
    last = result.trace[-1]
    print(
        f"{cfg.algorithm}: status {result.status} at k={result.k}, "
        f"f={last.f:.6g}, wrote {out / 'curves.csv'}"
    )
    return EXIT_BY_STATUS[result.status]


def _sweep_worker(job):
    cfg, projection, sino, geom, phantom, mask, eps, max_iter = job
    try:
        result = _run_algorithm(cfg, projection, sino.data, geom, phantom, mask, eps, max_iter)
    except RuntimeError:
        # a pathological parameter set must not kill the whole sweep; rank
        # it last and keep the row visible in the report
        return {
            "algorithm": cfg.algorithm,
            "params": cfg.params,
            "min_se": float("inf"),
            "argmin_k": 0,
            "status": "error",
        }
    finite = [(rec.se, rec.k) for rec in result.trace if not np.isnan(rec.se)]
    min_se, argmin_k = min(finite)
    return {
        "algorithm": cfg.algorithm,
        "params": cfg.params,
        "min_se": min_se,
        "argmin_k": argmin_k,
        "status": result.status,
    }


def _worker_count() -> int:
    raw = os.environ.get("SUPTOMO_THREADS", "")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"SUPTOMO_THREADS must be an integer, got {raw!r}") from None
        if n < 1:
            raise ConfigError("SUPTOMO_THREADS must be at least 1")
        return n
    return min(4, os.cpu_count() or 1)


def cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    if bool(args.grid) == bool(args.standard):
        raise ConfigError("sweep needs exactly one of --grid FILE or --standard ALGORITHM")
    if args.grid:
        sets = read_grid_file(args.grid)
    else:
        sets = [(args.standard.lower(), params) for params in standard_grid(args.standard)]

    sino, projection = _sinogram_for(cfg)
    geom = sino.geometry
    if projection is None:
        projection = _projection_for(cfg, geom)
    phantom, mask = _phantom_and_mask(cfg, geom)
    if phantom is None:
        raise ConfigError("sweep ranks by selective error and needs a phantom")

    # protocol default: score the first 15 iterations unless overridden
    max_iter = cfg.max_iter if "max_iter" in cfg.explicit else 15
    eps = cfg.eps if "eps" in cfg.explicit else 1e-300

    jobs = []
    for algorithm, params in sets:
        sub = build_config(
            {"algorithm": algorithm},
            [(k, str(v)) for k, v in params.items()],
        )
        jobs.append((sub, projection, sino, geom, phantom, mask, eps, max_iter))

    workers = _worker_count()
    if workers == 1:
        rows = [_sweep_worker(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_worker, jobs))
    # stable sort keeps the grid's declaration order among ties
    ranking = sorted(rows, key=lambda row: row["min_se"])

    out = io.ensure_dir(cfg.out)
    io.write_sweep_csv(out / "sweep.csv", ranking)
    figures.save_sweep_figure(out / "sweep.png", ranking)
    best = ranking[0]
    print(
        f"swept {len(ranking)} parameter sets; best {best['algorithm']} "
        f"min_se={best['min_se']:.6g} at k={best['argmin_k']}, wrote {out / 'sweep.csv'}"
    )
    return 0


def cmd_compare(args) -> int:
    if len(args.configs) < 2:
        raise ConfigError("compare needs at least two config files")
    cfgs = [_config_from_args(args, config_path=path) for path in args.configs]

    reference = None
    for cfg, path in zip(cfgs, args.configs):
        ellipses = _resolve_ellipses(cfg)
        key = (ellipses, cfg.grid_rows, cfg.grid_cols, cfg.pixel_size)
        if reference is None:
            reference = key
        elif key != reference:
            raise ConfigError(f"config {path} uses a different phantom than {args.configs[0]}")

    curves = []
    summary = []
    out = io.ensure_dir(cfgs[0].out)
    seen: dict[str, int] = {}
    for cfg in cfgs:
        sino, projection = _sinogram_for(cfg)
        geom = sino.geometry
        if projection is None:
            projection = _projection_for(cfg, geom)
        phantom, mask = _phantom_and_mask(cfg, geom)
        max_iter = cfg.max_iter if "max_iter" in cfg.explicit else 15
        eps = cfg.eps if "eps" in cfg.explicit else 1e-300
        result = _run_algorithm(cfg, projection, sino.data, geom, phantom, mask, eps, max_iter)
        seen[cfg.algorithm] = seen.get(cfg.algorithm, 0) + 1
        label = cfg.algorithm if seen[cfg.algorithm] == 1 else f"{cfg.algorithm}#{seen[cfg.algorithm]}"
        curves.append((label, result.trace))
        finite = [(rec.se, rec.k) for rec in result.trace if not np.isnan(rec.se)]
        if finite:
            min_se, argmin_k = min(finite)
        else:
            min_se, argmin_k = float("nan"), result.trace[0].k
        summary.append((label, argmin_k, min_se))

    io.write_compare_csv(out / "compare.csv", curves)
    io.write_summary_csv(out / "summary.csv", summary)
    figures.save_curves_figure(out / "compare_iterations.png", curves, x_field="k")
    figures.save_curves_figure(out / "compare_time.png", curves, x_field="seconds")
    for label, argmin_k, min_se in summary:
        print(f"{label}: min_se={min_se:.6g} at k={argmin_k}")
    print(f"wrote {out / 'compare.csv'} and {out / 'summary.csv'}")
    return 0


# --- argument parsing -------------------------------------------------------


def _add_common(sp) -> None:
    sp.add_argument("--config", help="flat key=value config file")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override one config key (repeatable)")
    sp.add_argument("--seed", type=int, help="override the noise seed")
    sp.add_argument("--out", help="override the output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="supertomo",
        description="Superiorized CG/ART reconstruction for parallel-beam scans.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("phantom", help="rasterize an ellipse phantom and previews")
    _add_common(sp)
    sp.set_defaults(func=cmd_phantom)

    sp = sub.add_parser("simulate", help="project a phantom and add counting noise")
    _add_common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("reconstruct", help="run one solver on a stored sinogram")
    _add_common(sp)
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("sweep", help="rank tuning-parameter sets by selective error")
    _add_common(sp)
    sp.add_argument("--grid", help="grid file: 'algorithm key=value ...' per line")
    sp.add_argument("--standard", metavar="ALGORITHM", choices=ALGORITHMS,
                    help="use the stock tuning grid of one algorithm")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("compare", help="run several configs on one phantom")
    sp.add_argument("configs", nargs="+", help="two or more config files")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override one key in every config (repeatable)")
    sp.add_argument("--seed", type=int, help="override the noise seed")
    sp.add_argument("--out", help="override the output directory")
    sp.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        # solver gave up mid-run (e.g. the TV step search exhausted its
        # trial budget); same exit code as a search-direction breakdown
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
