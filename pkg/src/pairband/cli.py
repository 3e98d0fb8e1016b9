"""Command-line entry point: ``pairband <verb> --preset NAME | --config FILE``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, ScenarioConfig, load_config, load_preset, normalize, preset_names
from .propagate import ConvergenceError
from .runner import run_scenario, sweep

VERB_KINDS = {"evolve": ("evolve",), "filter": ("filter",), "phase-map": ("phase-map",), "band": None}


def _scenario(args) -> ScenarioConfig:
    if bool(args.preset) == bool(args.config):
        raise ConfigError("give exactly one of --preset or --config")
    cfg = load_preset(args.preset) if args.preset else load_config(args.config)
    data = json.loads(cfg.canonical_json())
    if args.dt is not None:
        if "run" not in data:
            raise ConfigError(f"--dt: scenario kind {cfg.kind!r} has no time stepping")
        data["run"]["dt"] = args.dt
    if args.n_sites is not None:
        if "model" not in data:
            raise ConfigError(f"--n-sites: scenario kind {cfg.kind!r} has no lattice")
        data["model"]["n_sites"] = args.n_sites
        if "packet" in data:
            data["packet"]["n_a"] = args.n_sites / 2
    return ScenarioConfig(normalize(data))


def _as_band(cfg: ScenarioConfig) -> ScenarioConfig:
    if "model" not in cfg.data:
        raise ConfigError(f"band: scenario kind {cfg.kind!r} has no model section")
    return ScenarioConfig(
        normalize({"name": cfg.name, "kind": "band", "model": cfg.data["model"], "outputs": cfg.data["outputs"]})
    )


def _parse_values(text: str):
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            out.append(int(item) if item.lstrip("-").isdigit() else float(item))
        except ValueError:
            out.append(item)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pairband", description="Two-boson bound-pair bands and driven dynamics.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def scenario_args(sp):
        sp.add_argument("--preset")
        sp.add_argument("--config")
        sp.add_argument("--out", default="runs")
        sp.add_argument("--dt", type=float)
        sp.add_argument("--n-sites", type=int)
        sp.add_argument("--threads", type=int, default=1)

    for verb in ("band", "phase-map", "evolve", "filter"):
        scenario_args(sub.add_parser(verb))
    sw = sub.add_parser("sweep")
    scenario_args(sw)
    sw.add_argument("--axis", required=True, help="section.key, e.g. field.f0")
    sw.add_argument("--values", required=True, help="comma-separated values")
    pr = sub.add_parser("presets")
    pr.add_argument("action", choices=["list"])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.verb == "presets":
            for name in preset_names():
                print(name)
            return 0
        cfg = _scenario(args)
        if args.verb == "sweep":
            dirs, table = sweep(cfg, args.axis, _parse_values(args.values), args.out, args.threads)
            for d in dirs:
                print(d)
            print(table)
            return 0
        if args.verb == "band":
            cfg = _as_band(cfg)
        elif cfg.kind not in VERB_KINDS[args.verb]:
            raise ConfigError(f"kind: scenario {cfg.name!r} is a {cfg.kind!r} run, not {args.verb!r}")
        print(run_scenario(cfg, args.out, args.threads))
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"error: {exc}; retry with --dt {exc.recommended_dt:g}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
