"""Command-line entry point.

Usage::

    repswarm <experiment> [--config PATH|NAME] [--set key=value ...] [--seed N] [--trials N] [--out DIR]

The config file (YAML or JSON) may hold the sections ``scenario``,
``pathloss``, ``optimizer`` and ``params``. ``--set`` keys are dotted
(``scenario.N=10``, ``params.step_hz=1000``); a bare key goes to
``scenario`` when it names a scenario field and to ``params`` otherwise.
On failure a JSON error object is printed to stderr and the exit code is
nonzero.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from importlib import resources
from pathlib import Path

import yaml

from .experiments import EXPERIMENTS, ExperimentSpec, run_experiment
from .io import dumps
from .scenario import Scenario, load_config

__all__ = ["main", "build_parser", "resolve_config", "spec_from_args"]

SECTIONS = ("scenario", "pathloss", "optimizer", "params")
EXIT_USAGE = 2
EXIT_FAILURE = 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="repswarm", description="Repeater swarm uplink experiments.")
    p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--config", help="YAML or JSON config file, or a shipped config name")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry (repeatable)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--out", default="out")
    return p


def _apply_override(cfg: dict, item: str) -> None:
    if "=" not in item:
        raise ValueError(f"override {item!r} is not KEY=VALUE")
    key, raw = item.split("=", 1)
    value = yaml.safe_load(raw)
    parts = key.strip().split(".")
    if parts[0] not in SECTIONS:
        fields = {f.name for f in dataclasses.fields(Scenario)}
        parts = ["scenario" if parts[0] in fields else "params"] + parts
    if parts[0] == "pathloss" and len(parts) == 1:
        cfg["pathloss"] = value
        return
    node = cfg
    for p in parts[:-1]:
        if isinstance(node.get(p), str) and p == "pathloss":
            node[p] = {"preset": node[p]}
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def resolve_config(name: str) -> Path:
    """A file path, or the name of a shipped config (``fr1``, ``circle``, ...)."""
    path = Path(name)
    if path.exists():
        return path
    shipped = resources.files("repswarm") / "configs" / f"{name}.yaml"
    if shipped.is_file():
        return Path(str(shipped))
    raise FileNotFoundError(f"no config file or shipped config named {name!r}")


def spec_from_args(args) -> ExperimentSpec:
    cfg = load_config(resolve_config(args.config)) if args.config else {}
    unknown = set(cfg) - set(SECTIONS)
    if unknown:
        raise KeyError(f"unknown config sections: {sorted(unknown)}")
    for item in args.overrides:
        _apply_override(cfg, item)
    return ExperimentSpec(
        name=args.experiment,
        scenario=Scenario.from_mapping(cfg.get("scenario") or {}),
        pathloss=cfg.get("pathloss", "tr38901"),
        optimizer=cfg.get("optimizer") or {},
        params=cfg.get("params") or {},
        trials=args.trials,
        seed=args.seed,
        out=args.out,
    )


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0) if e.code in (0, None) else EXIT_USAGE
    try:
        spec = spec_from_args(args)
        summary = run_experiment(spec)
    except Exception as e:  # report every failure as JSON
        json.dump({"error": type(e).__name__, "message": str(e), "experiment": args.experiment},
                  sys.stderr)
        sys.stderr.write("\n")
        return EXIT_FAILURE
    sys.stdout.write(dumps(summary) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
