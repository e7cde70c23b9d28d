"""Command-line front end: ``fracchemo {solve,mc,compare}``.

Settings come from built-in defaults, then an optional ``--config`` file of
``key = value`` lines (``#`` starts a comment), then command-line flags; later
sources win.  Exit status: 0 success, 2 invalid configuration, 3 numerical
failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from typing import Any, Sequence

from . import __version__
from .config import ConfigError, SimulationConfig
from .export import atomic_write, compare_profiles, export_profiles, profiles_to_json, read_profiles

__all__ = [
    "parse_config",
    "read_config_file",
    "build_parser",
    "main",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_NUMERIC",
    "EXIT_IO",
]

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

# external (file / flag) key -> SimulationConfig field
_KEYS = {
    "mode": "mode",
    "model": "model",
    "gamma": "gamma",
    "tau": "tau",
    "beta": "beta",
    "k": "reaction_k",
    "dx": "dx",
    "dt": "dt",
    "tmax": "t_max",
    "grid_points": "grid_points",
    "times": "output_times",
    "particles": "particles",
    "runs": "runs",
    "seed": "master_seed",
    "workers": "workers",
    "density": "density",
    "out": "out",
    "a": "a",
    "b": "b",
    "report": "report",
}
_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(SimulationConfig)}
_MODELS = {"1": 1, "2": 2, "3": 3, "4": 4, "i": 1, "ii": 2, "iii": 3, "iv": 4}


def _convert(key: str, raw: Any) -> Any:
    """Turn a textual setting into the type its config field expects."""
    name = _KEYS[key]
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if name == "output_times":
            return tuple(float(v) for v in text.replace(",", " ").split())
        if name == "model":
            return _MODELS[text.lower()]
        kind = _FIELD_TYPES[name]
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except (KeyError, ValueError):
        raise ConfigError(key, f"cannot interpret {raw!r}") from None
    return text


def read_config_file(path) -> dict[str, Any]:
    """Parse a flat ``key = value`` file; keys use the command-line spelling."""
    values: dict[str, Any] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}", f"expected key = value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _KEYS:
                raise ConfigError(key, "unknown configuration key")
            values[key] = value
    return values


def parse_config(arguments: dict[str, Any] | None = None, config_file=None) -> SimulationConfig:
    """Merge defaults, file values and explicit arguments into a validated config.

    ``arguments`` maps command-line key names (``k``, ``tmax``, ``times``...)
    to raw or typed values; ``None`` values are treated as absent.
    """
    merged: dict[str, Any] = {}
    if config_file is not None:
        merged.update(read_config_file(config_file))
    for key, value in (arguments or {}).items():
        if value is None:
            continue
        if key not in _KEYS:
            raise ConfigError(key, "unknown configuration key")
        merged[key] = value
    fields = {_KEYS[k]: _convert(k, v) for k, v in merged.items()}
    return SimulationConfig(**fields)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracchemo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="mode", required=True)

    def shared(p):
        g = p.add_argument_group("model parameters")
        g.add_argument("--config", help="key = value settings file")
        g.add_argument("--gamma", help="anomalous exponent in (0, 1]")
        g.add_argument("--tau", help="characteristic waiting time")
        g.add_argument("--beta", help="chemotactic sensitivity")
        g.add_argument("--k", help="linear reaction rate")
        g.add_argument("--dx", help="lattice spacing")
        g.add_argument("--dt", help="time step")
        g.add_argument("--tmax", help="final time")
        g.add_argument("--grid-points", dest="grid_points", help="number of lattice sites (odd)")
        g.add_argument("--times", help="comma separated output times")
        g.add_argument("--density", choices=["pareto", "ml"])
        g.add_argument("--out", help="CSV destination (JSON copy written next to it)")

    p = sub.add_parser("solve", help="integrate one of the lattice models")
    shared(p)
    p.add_argument("--model", choices=["1", "2", "3", "4"])

    p = sub.add_parser("mc", help="Monte Carlo ensemble of random walkers")
    shared(p)
    p.add_argument("--particles")
    p.add_argument("--runs")
    p.add_argument("--seed", help="master seed for the run seed sequence")
    p.add_argument("--workers", help="threads used for independent runs")

    p = sub.add_parser("compare", help="distances between two profile CSVs")
    shared(p)
    p.add_argument("--a", required=False, help="first profile CSV")
    p.add_argument("--b", required=False, help="second profile CSV")
    p.add_argument("--report", help="JSON report destination (stdout if omitted)")
    return parser


def _run_solve(cfg: SimulationConfig):
    from .solvers import ModelSpec, delta_field, solve

    spec = ModelSpec(cfg.model, cfg.law, cfg.beta, cfg.reaction_k, cfg.dx)
    initial = delta_field(cfg.grid_points, cfg.dx)
    log.info("solving model %d to t=%g with dt=%g", cfg.model, cfg.t_max, cfg.dt)
    return solve(spec, initial, cfg.dt, cfg.t_max, cfg.output_times)


def _run_mc(cfg: SimulationConfig):
    from .mc import run_ensemble

    log.info("running %d x %d walkers", cfg.runs, cfg.particles)
    return run_ensemble(cfg)


def _emit(result, cfg: SimulationConfig) -> None:
    config = cfg.to_dict()
    config["version"] = __version__
    if cfg.out is None:
        sys.stdout.write(export_profiles(result))
        return
    export_profiles(result, cfg.out)
    atomic_write(cfg.out + ".json", json.dumps(profiles_to_json(result, config), indent=2) + "\n")
    log.info("wrote %s", cfg.out)


def _sidecar(path) -> dict[str, Any] | None:
    try:
        with open(str(path) + ".json") as fh:
            return json.load(fh).get("config")
    except (OSError, ValueError):
        return None


def _run_compare(cfg: SimulationConfig, times_given: bool) -> None:
    if cfg.a is None or cfg.b is None:
        raise ConfigError("a" if cfg.a is None else "b", "compare needs both --a and --b")
    a, b = read_profiles(cfg.a), read_profiles(cfg.b)
    times = list(cfg.output_times) if times_given else None
    meta = {
        "config": cfg.to_dict(),
        "inputs": {"a": cfg.a, "b": cfg.b},
        "configs": {"a": _sidecar(cfg.a), "b": _sidecar(cfg.b)},
        "version": __version__,
    }
    report = compare_profiles(a, b, times, metadata=meta)
    if cfg.report is None:
        sys.stdout.write(report.to_json())
    else:
        report.write(cfg.report)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    logging.basicConfig(
        level=logging.INFO if args.pop("verbose") else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    config_file = args.pop("config", None)
    try:
        cfg = parse_config(args, config_file)
        if cfg.mode == "solve":
            _emit(_run_solve(cfg), cfg)
        elif cfg.mode == "mc":
            _emit(_run_mc(cfg), cfg)
        else:
            _run_compare(cfg, args.get("times") is not None)
    except ConfigError as exc:
        print(f"fracchemo: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotImplementedError as exc:
        print(f"fracchemo: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError) as exc:
        # NumericalError, SolveError and friends
        print(f"fracchemo: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"fracchemo: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"fracchemo: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
