"""Command-line entry point: ``qta run``, ``qta verify`` and ``qta presets list``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigurationError, QtaError
from .harness import list_presets, load_config, preset_path, run_experiment

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _overrides(extra: list[str]) -> dict:
    """``--key value`` / ``--key=value`` pairs left over by argparse."""
    out, i = {}, 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigurationError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        elif i + 1 < len(extra):
            value = extra[i + 1]
            i += 2
        else:
            raise ConfigurationError(f"missing value for {tok}")
        out[key.replace("-", "_")] = value
    return out


def _resolve_config(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    return preset_path(arg)


def cmd_run(args, extra) -> int:
    cfg = load_config(_resolve_config(args.config), _overrides(extra))
    result = run_experiment(cfg, workers=args.workers)
    out = Path(cfg.output)
    for p in result.points:
        r = p.report
        print(f"beta={p.beta:g} {cfg.sweep}={p.sweep_value} n={r.n_samples} "
              f"d_ene={r.d_ene:.4g}+-{r.d_ene_err:.2g} d_trd={r.d_trd:.4g}+-{r.d_trd_err:.2g}")
    for f in result.fits:
        print(f"fit beta={f['beta']:g} {f['fit_model']}: exponent={f['exponent']:.4g}"
              f"+-{f['exponent_err']:.2g} chi2_red={f['chi2_red']:.3g}")
    print(f"wrote {out}")
    if result.partial:
        for f in result.failures:
            print(f"point {f['point_id']} failed: {f['error']}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_verify(args, extra) -> int:
    if extra:
        raise ConfigurationError(f"unexpected arguments {extra}")
    from .verify import run_checks

    results = run_checks(scale=args.scale, filter_sign=args.filter_sign, only=args.only,
                         on_result=lambda r: print(r.line(), flush=True))
    if args.json:
        Path(args.json).write_text(json.dumps([r.as_dict() for r in results], indent=2) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def cmd_presets(args, extra) -> int:
    if extra:
        raise ConfigurationError(f"unexpected arguments {extra}")
    for path in list_presets():
        first = path.read_text(encoding="utf-8").splitlines()[0].lstrip("# ").strip()
        print(f"{path.stem:8s} {first}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qta", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a sweep from a config file or preset name")
    run.add_argument("--config", required=True, help="path to a key=value file or a preset name")
    run.add_argument("--workers", type=int, default=None,
                     help="parallel replica workers (default: QTA_WORKERS or 1)")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="run the acceptance checks")
    ver.add_argument("--json", help="write a machine-readable report here")
    ver.add_argument("--scale", choices=["full", "quick"], default="full",
                     help="sample sizes: full acceptance scale or a fast smoke run")
    ver.add_argument("--only", action="append", help="run only checks with this id (repeatable)")
    ver.add_argument("--filter-sign", type=int, default=1, choices=[1, -1],
                     help=argparse.SUPPRESS)
    ver.set_defaults(func=cmd_verify)

    pre = sub.add_parser("presets", help="preset configurations")
    pre_sub = pre.add_subparsers(dest="action", required=True)
    pre_sub.add_parser("list", help="list shipped presets").set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args, extra)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QtaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
