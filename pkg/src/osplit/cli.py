"""Command line entry point ``osplit``.

Exit codes: 0 on success, 1 if ``--check`` finds an expectation failure,
2 on configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .correction import parse_strategy
from .lab import (
    apply_checks,
    check_expectations,
    emit,
    emit_smoothness,
    expectations_for,
    run_convergence_study,
    run_smoothness_study,
)
from .presets import PRESETS, get_preset
from .steppers import Scheme, step_count

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2

_CONFIG_KEYS = {
    "preset": "preset",
    "schemes": "schemes",
    "nx": "nx",
    "tau-list": "tau_list",
    "tau_list": "tau_list",
    "correction": "correction",
    "jacobi-iters": "jacobi_iters",
    "jacobi_iters": "jacobi_iters",
    "jacobi-weight": "jacobi_weight",
    "jacobi_weight": "jacobi_weight",
    "out": "out",
    "check": "check",
    "workers": "workers",
    "linear-mode": "linear_mode",
    "linear_mode": "linear_mode",
}


class ConfigError(ValueError):
    pass


def read_config(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value' with a known key, got {raw!r}")
        out[_CONFIG_KEYS[key]] = value.strip()
    return out


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="osplit", description="Boundary-corrected operator splitting studies")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    study = sub.add_parser("study", help="convergence study for one preset")
    study.add_argument("--config", help="file of 'key = value' lines; flags take precedence")
    study.add_argument("--preset", choices=sorted(PRESETS))
    study.add_argument("--schemes", help="comma separated subset of " + ",".join(s.value for s in Scheme))
    study.add_argument("--nx", type=int, help="nodes per direction (including endpoints)")
    study.add_argument("--tau-list", dest="tau_list", help="comma separated step sizes")
    study.add_argument("--correction", help="analytic | harmonic | algorithm1 | custom:<base|none>:<expr>")
    study.add_argument("--jacobi-iters", dest="jacobi_iters", type=int)
    study.add_argument("--jacobi-weight", dest="jacobi_weight", type=float)
    study.add_argument("--linear-mode", dest="linear_mode", choices=("exact_phi", "implicit_adaptive", "sparse_expm"))
    study.add_argument("--workers", type=int, help="parallel (scheme, tau) runs")
    study.add_argument("--out", help="write the CSV report here")
    study.add_argument("--check", action="store_const", const=True, help="compare observed orders with expectations")

    smooth = sub.add_parser("smoothness", help="compare corrections of different smoothness")
    smooth.add_argument("--out", help="write the CSV report here")
    return parser


def _study_settings(args) -> dict:
    settings = {}
    if args.config:
        settings.update(read_config(args.config))
    for key in set(_CONFIG_KEYS.values()):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def _prepare(settings: dict):
    if "preset" not in settings:
        raise ConfigError("no preset given (use --preset or a config file)")
    try:
        preset = get_preset(settings["preset"])
        if "nx" in settings:
            preset = preset.with_nodes(int(settings["nx"]))
            preset.grid()
        if "tau_list" in settings:
            taus = [float(t) for t in str(settings["tau_list"]).split(",") if t.strip()]
            if not taus:
                raise ValueError("empty step size list")
            preset = preset.with_taus(taus)
        for tau in (*preset.taus, preset.tau_ref):
            step_count(preset.final_time, tau)
        schemes = preset.schemes
        if "schemes" in settings:
            schemes = tuple(Scheme(s.strip()).value for s in str(settings["schemes"]).split(",") if s.strip())
        strategy = None
        iters = settings.get("jacobi_iters")
        weight = settings.get("jacobi_weight")
        if "correction" in settings:
            strategy = parse_strategy(str(settings["correction"]), iters, weight)
        elif iters is not None or weight is not None:
            strategy = parse_strategy("algorithm1", iters, weight)
        workers = int(settings.get("workers", 1))
        check = _bool(settings.get("check", False))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return preset, schemes, strategy, workers, check


def _write(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None


def cmd_study(args) -> int:
    settings = _study_settings(args)
    preset, schemes, strategy, workers, check = _prepare(settings)
    report = run_convergence_study(preset, schemes, strategy, settings.get("linear_mode"), workers)
    status = EXIT_OK
    if check:
        checks = check_expectations(report, expectations_for(preset, schemes))
        report = apply_checks(report, checks)
        for c in checks:
            print(c.line())
        if report.failures or not all(c.passed for c in checks):
            status = EXIT_FAILED
    for failure in report.failures:
        print(f"FAILED RUN {failure}", file=sys.stderr)
    print(emit(report, "table"))
    if "out" in settings:
        _write(settings["out"], emit(report, "csv"))
    return status


def cmd_smoothness(args) -> int:
    report = run_smoothness_study()
    print(emit_smoothness(report, "table"))
    if args.out:
        _write(args.out, emit_smoothness(report, "csv"))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "study":
            return cmd_study(args)
        return cmd_smoothness(args)
    except ConfigError as exc:
        print(f"osplit: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
