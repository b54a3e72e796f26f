"""
Command-line front end.

    magloc synth   --config CFG --out DIR          synthetic (noisy, possibly partial) data
    magloc extend  --config CFG --data FILE --out DIR
    magloc locate  --config CFG --data FILE --out DIR
    magloc verify  --config CFG [--debug-drop-qz-factor]
    magloc report  --config CFG --out DIR          whole pipeline with a summary table

Exit codes: 0 success, 2 config or input error, 3 degenerate data,
4 ill-conditioned fit, 5 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import imaging, io, pipeline, verify
from .config import RunConfig, read_yaml
from .errors import (
    ConfigError,
    DegenerateDataError,
    EmptyApertureError,
    IllConditionedFitError,
    NeedsQuadratureError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3
EXIT_ILL_CONDITIONED = 4
EXIT_VERIFY = 5

log = logging.getLogger("magloc")


class VerificationFailed(Exception):
    pass


def _common(p):
    p.add_argument("--config", type=Path, help="YAML run configuration")
    p.add_argument("--preset", help="bundled scenario preset (overridden by --config keys)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=int, help="noise seed")
    p.add_argument("--beta", type=float, help="noise level")
    p.add_argument("--aperture", help="full | hemi:AXIS | quarter:AXIS1,AXIS2 | cap:AXIS,ANGLE")
    p.add_argument("--basis", help="VSH truncation N1,N2,N3")
    p.add_argument("--grid", type=float, metavar="H", help="sampling grid spacing")
    p.add_argument("--slice", metavar="PLANE", help="slice plane such as z=0, or 'none' for the volume")
    p.add_argument("--workers", type=int, help="threads for the indicator sweep")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="magloc", description="Locate magnetized anomalies from field data.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("synth", "write synthetic measurement data"),
        ("extend", "fit partial data and extend it to the full sphere"),
        ("locate", "sweep the indicator and report peaks"),
        ("verify", "run the noise-free self-check suite"),
        ("report", "run the whole pipeline and summarize"),
    ]:
        p = sub.add_parser(name, help=helptext)
        _common(p)
        if name in ("extend", "locate"):
            p.add_argument("--data", type=Path, required=True, help="measurement CSV")
        if name == "verify":
            p.add_argument("--debug-drop-qz-factor", action="store_true",
                           help="negative control: omit the 1/R0 prefactor of Q_z")
    return parser


def load_config(args):
    raw = {} if args.config is None else read_yaml(args.config)
    if args.preset is not None:
        raw = dict(raw, preset=args.preset)
    cfg = RunConfig.from_dict(raw)
    overrides = {
        "noise.seed": args.seed,
        "noise.beta": args.beta,
        "aperture": args.aperture,
        "extension.basis": args.basis,
        "grid.h": args.grid,
        "grid.slice": args.slice,
        "grid.workers": args.workers,
        "output.dir": None if args.out is None else str(args.out),
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return cfg.override(**overrides) if overrides else cfg


def _outdir(cfg):
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_data(path):
    try:
        return io.read_measurement(path)
    except OSError as exc:
        raise ConfigError(f"cannot read data file {path}: {exc}") from exc


def cmd_synth(cfg, args):
    out = _outdir(cfg)
    full, partial = pipeline.synth(cfg)
    io.write_measurement(full, out / "measurement.csv")
    if partial is not None:
        io.write_measurement(partial, out / "partial.csv")
    io.write_yaml(cfg.dump(), out / "config.yaml")
    log.info("wrote %d samples to %s", len(full), out)
    return EXIT_OK


def cmd_extend(cfg, args):
    partial = _read_data(args.data)
    out = _outdir(cfg)
    full, coeffs, fit = pipeline.extend(cfg, partial)
    io.write_measurement(full, out / "extended.csv")
    io.write_coefficients(coeffs, out / "coefficients.csv", fit)
    io.write_yaml(
        {
            "relative_residual": pipeline.sci(fit.relative_residual),
            "residual_norm": pipeline.sci(fit.residual_norm),
            "condition": pipeline.sci(fit.condition),
            "rank": fit.rank,
            "n_coefficients": fit.n_coefficients,
            "n_samples": fit.n_samples,
            "truncated": fit.truncated,
        },
        out / "fit.yaml",
    )
    print(f"fit: relative residual {fit.relative_residual:.3e}, condition {fit.condition:.3e}, "
          f"rank {fit.rank}/{fit.n_coefficients}")
    return EXIT_OK


def _print_peaks(rep):
    for k, p in enumerate(rep["peaks"]):
        err = f"  error {p['error']:.3f}" if "error" in p else ""
        x, y, z = p["refined_position"]
        print(f"peak {k}: ({x:.3f}, {y:.3f}, {z:.3f})  I_norm {p['normalized_value']:.3f}{err}")


def cmd_locate(cfg, args):
    meas = _read_data(args.data)
    out = _outdir(cfg)
    res = pipeline.locate(cfg, meas)
    io.write_grid(res.grid, out / "grid.csv")
    rep = pipeline.run_report(cfg, res, label=str(args.data))
    io.write_yaml({"config": cfg.dump(), "run": rep}, out / "report.yaml")
    _print_peaks(rep)
    return EXIT_OK


def cmd_verify(cfg, args):
    scale = imaging.QZ_SCALE
    if args.debug_drop_qz_factor:
        scale = float(cfg["scenario"]["R0"])  # (scale / R0) becomes 1
    checks = verify.run_checks(cfg, seed=int(cfg["noise"]["seed"]), scale=scale)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<20} {c.value:.3e} (tol {c.tolerance:.0e})  {c.detail}")
    if args.out is not None:
        io.write_yaml(
            {"checks": [{"name": c.name, "passed": c.passed, "value": pipeline.sci(c.value),
                         "tolerance": c.tolerance} for c in checks]},
            _outdir(cfg) / "verify.yaml",
        )
    failed = [c.name for c in checks if not c.passed]
    if failed:
        raise VerificationFailed("failed checks: " + ", ".join(failed))
    return EXIT_OK


def cmd_report(cfg, args):
    """synth, then locate on every available data variant, with a summary table."""
    out = _outdir(cfg)
    full, partial = pipeline.synth(cfg)
    io.write_measurement(full, out / "measurement.csv")
    runs = []
    variants = [("full", full, cfg.override(aperture="full"), None)]
    if partial is not None:
        io.write_measurement(partial, out / "partial.csv")
        ext, coeffs, fit = pipeline.extend(cfg, partial)
        io.write_measurement(ext, out / "extended.csv")
        io.write_coefficients(coeffs, out / "coefficients.csv", fit)
        variants += [("raw", partial, cfg, None), ("extended", ext, cfg, fit)]
    rows = ["data,x,y,z,error"]
    for name, meas, vcfg, fit in variants:
        res = pipeline.locate(vcfg, meas)
        io.write_grid(res.grid, out / f"grid_{name}.csv")
        rep = pipeline.run_report(vcfg, res, label=name, fit=fit)
        runs.append(rep)
        for p in rep["peaks"]:
            err = f"{p['error']:.3f}" if "error" in p else ""
            x, y, z = p["refined_position"]
            rows.append(f"{name},{x:.3f},{y:.3f},{z:.3f},{err}")
    io.write_yaml({"config": cfg.dump(), "runs": runs}, out / "report.yaml")
    (out / "summary.csv").write_text("\n".join(rows) + "\n")
    print("\n".join(rows))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "extend": cmd_extend,
    "locate": cmd_locate,
    "verify": cmd_verify,
    "report": cmd_report,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, NeedsQuadratureError, EmptyApertureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateDataError as exc:
        print(f"degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except IllConditionedFitError as exc:
        print(f"ill-conditioned fit (condition {exc.condition:.3e}): {exc}", file=sys.stderr)
        return EXIT_ILL_CONDITIONED
    except VerificationFailed as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
