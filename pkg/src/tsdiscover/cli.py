"""Command-line entry point: ``tsdiscover <subcommand> ...``."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

from . import __version__

ENGINE_FLAGS = ("alpha", "tau_max", "max_cond", "preliminary", "max_combinations", "collider_rule", "seed")


class UsageError(Exception):
    pass


# -- file helpers ---------------------------------------------------------------------

def _atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_via(path, writer) -> None:
    """Run ``writer(tmp_path)`` and move the result into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_manifest(path, command: str, args: argparse.Namespace, inputs, outputs) -> dict:
    """Record everything that determines the outputs; no wall-clock fields."""
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("command", "handler", "config")}
    manifest = {
        "subcommand": command,
        "tool_version": __version__,
        "config": config,
        "seed": config.get("seed"),
        "inputs": {str(p): sha256_file(p) for p in inputs if p},
        "outputs": sorted(str(p) for p in outputs),
    }
    _atomic_write(path, _json(manifest))
    return manifest


# -- shared argument groups ------------------------------------------------------------------

def _engine_config(args):
    from .engine import EngineConfig

    return EngineConfig(
        pc_alpha=args.alpha, tau_max=args.tau_max, max_cond_dim=args.max_cond,
        n_preliminary_iterations=args.preliminary, seed=args.seed,
        audit_log=True, max_combinations=args.max_combinations, collider_rule=args.collider_rule,
        knowledge_scope=args.knowledge_scope,
    )


def _add_engine_flags(p):
    p.add_argument("--alpha", type=float, default=0.05, help="significance level of the CI tests")
    p.add_argument("--tau-max", type=int, default=7)
    p.add_argument("--max-cond", type=int, default=3, help="largest conditioning set size")
    p.add_argument("--preliminary", type=int, default=1, help="number of preliminary rounds")
    p.add_argument("--max-combinations", type=int, default=None,
                   help="cap on conditioning sets tried per pair and size")
    p.add_argument("--collider-rule", choices=("conservative", "majority", "standard"),
                   default="conservative")
    p.add_argument("--knowledge-scope", choices=("search", "output"), default="search",
                   help="'search' skips forbidden pairs; 'output' applies knowledge after a free search")
    p.add_argument("--seed", type=int, default=0)


def _add_knowledge_flags(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--knowledge", help="background knowledge JSON")
    g.add_argument("--ercot-defaults", action="store_true",
                   help="derive day-ahead market constraints from the schema roles")


def _load_knowledge(args, dataset):
    from .knowledge import BackgroundKnowledge, ercot_default_knowledge

    if args.knowledge:
        return BackgroundKnowledge.load(args.knowledge)
    if args.ercot_defaults:
        if any(v.role is None for v in dataset.variables):
            raise UsageError("--ercot-defaults needs a schema assigning a role to every variable")
        return ercot_default_knowledge(dataset.variables, args.tau_max)
    return None


def _load_dataset(path, schema_path):
    from .dataset import load_csv, load_schema

    schema = load_schema(schema_path) if schema_path else None
    return load_csv(path, schema)


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) in (None, "")]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join(missing)}")


# -- subcommands -------------------------------------------------------------------------------

def cmd_simulate(args):
    from .simulate import random_svar, sample

    _require(args, "out")
    scm = random_svar(args.k, args.latents, args.density, args.lag_max, seed=args.seed)
    ds = sample(scm, args.n, burn_in=args.burn_in, seed=args.seed)
    _atomic_via(args.out, ds.to_csv)
    outputs = [args.out]
    if args.truth:
        _atomic_write(args.truth, scm.to_json() + "\n")
        outputs.append(args.truth)
    write_manifest(_manifest_path(args.out), "simulate", args, [], outputs)
    return 0


def cmd_discover(args):
    from .engine import discover, write_audit

    _require(args, "data", "out")
    ds = _load_dataset(args.data, args.schema)
    kb = _load_knowledge(args, ds)
    graph, audit = discover(ds, kb, _engine_config(args))
    _atomic_write(args.out, graph.to_json() + "\n")
    outputs = [args.out]
    if args.dot:
        _atomic_write(args.dot, graph.to_dot(hide_self_loops=args.hide_self_loops))
        outputs.append(args.dot)
    if args.audit:
        _atomic_via(args.audit, lambda p: write_audit(audit, p))
        outputs.append(args.audit)
    inputs = [args.data, args.schema, args.knowledge]
    write_manifest(_manifest_path(args.out), "discover", args, inputs, outputs)
    return 0


def _parse_regimes(text):
    from .dataset import ALL_REGIMES, RegimeSpec

    if text == "all":
        return ALL_REGIMES
    return tuple(RegimeSpec.parse(t.strip()) for t in text.split(",") if t.strip())


def cmd_suite(args):
    from .dataset import WindowSpec
    from .engine import run_regime_suite, write_audit
    from .evaluation import stability_report

    _require(args, "out_dir")
    if args.data:
        peak = offpeak = _load_dataset(args.data, args.schema)
        inputs = [args.data]
    elif args.peak_data and args.offpeak_data:
        peak = _load_dataset(args.peak_data, args.schema)
        offpeak = _load_dataset(args.offpeak_data, args.schema)
        inputs = [args.peak_data, args.offpeak_data]
    else:
        raise UsageError("give --data, or both --peak-data and --offpeak-data")
    regimes = _parse_regimes(args.regimes)
    windows = WindowSpec.parse(args.windows)
    kb = _load_knowledge(args, peak)
    result = run_regime_suite({"peak": peak, "offpeak": offpeak}, regimes, windows, kb,
                              _engine_config(args), n_jobs=args.workers)
    out = Path(args.out_dir)
    outputs = []
    for cell in result.cells:
        if cell.graph is None:
            continue
        gpath = out / f"graph_{cell.label}.json"
        _atomic_write(gpath, cell.graph.to_json() + "\n")
        dpath = out / f"graph_{cell.label}.dot"
        _atomic_write(dpath, cell.graph.to_dot(hide_self_loops=args.hide_self_loops))
        apath = out / f"audit_{cell.label}.jsonl"
        _atomic_via(apath, lambda p, a=cell.audit: write_audit(a, p))
        outputs += [gpath, dpath, apath]
    summary = result.summary()
    _atomic_via(out / "summary.csv", lambda p: summary.to_csv(p, index=False))
    report = stability_report(result)
    _atomic_via(out / "stability.csv", lambda p: report.to_csv(p, index=False))
    outputs += [out / "summary.csv", out / "stability.csv"]
    inputs += [args.schema, args.knowledge]
    write_manifest(out / "manifest.json", "suite", args, inputs, outputs)
    if result.failures:
        for cell in result.failures:
            print(_json({"cell": cell.label, "error": cell.error}), file=sys.stderr, end="")
        return 1
    return 0


def _load_truth(path, tau_max):
    from .graph import TemporalCausalGraph
    from .simulate import GroundTruthSCM, expected_marks

    with open(path) as fh:
        d = json.load(fh)
    if "k_observed" in d:
        return expected_marks(GroundTruthSCM.from_dict(d), tau_max=tau_max)
    return TemporalCausalGraph.from_dict(d)


def cmd_evaluate(args):
    from .evaluation import (
        EffectTable,
        edge_precision_recall,
        effect_ratio_periods,
        effect_ratio_summary,
        load_reference_effects,
    )
    from .graph import TemporalCausalGraph

    if args.effects:
        if args.effects == "reference":
            wind, gas = load_reference_effects()
            inputs = []
        else:
            wind = EffectTable.from_csv(args.effects, "wind")
            gas = EffectTable.from_csv(args.effects, "gas")
            inputs = [args.effects]
        periods = effect_ratio_periods(wind, gas)
        report = {"mean_ratio": effect_ratio_summary(wind, gas), "n_periods": len(periods),
                  "periods": periods.to_dict(orient="records")}
    else:
        _require(args, "found", "truth")
        found = TemporalCausalGraph.load(args.found)
        truth = _load_truth(args.truth, found.tau_max)
        report = edge_precision_recall(found, truth).to_dict()
        inputs = [args.found, args.truth]
    text = _json(report)
    if args.out:
        _atomic_write(args.out, text)
        write_manifest(_manifest_path(args.out), "evaluate", args, inputs, [args.out])
    else:
        sys.stdout.write(text)
    return 0


def cmd_export_dot(args):
    from .graph import TemporalCausalGraph

    _require(args, "graph", "out")
    g = TemporalCausalGraph.load(args.graph)
    exclude = [e for e in (args.exclude or "").split(",") if e]
    _atomic_write(args.out, g.to_dot(args.hide_self_loops, args.colormap, exclude))
    write_manifest(_manifest_path(args.out), "export-dot", args, [args.graph], [args.out])
    return 0


def cmd_preprocess(args):
    import pandas as pd

    from .dataset import save_schema
    from .preprocess import PreprocessConfig, build_daily_panel

    _require(args, "data", "rules", "out_dir")
    with open(args.rules) as fh:
        config = PreprocessConfig.from_dict(json.load(fh))
    hourly = pd.read_csv(args.data)
    out = Path(args.out_dir)
    outputs = []
    for hours in ("peak", "offpeak"):
        ds, model = build_daily_panel(hourly, hours, config)
        _atomic_via(out / f"{hours}.csv", ds.to_csv)
        outputs.append(out / f"{hours}.csv")
        if hours == "peak":
            _atomic_via(out / "schema.json", lambda p, v=ds.variables: save_schema(v, p))
            outputs.append(out / "schema.json")
        if model is not None:
            _atomic_via(out / f"pca_{hours}.json", model.save)
            outputs.append(out / f"pca_{hours}.json")
    write_manifest(out / "manifest.json", "preprocess", args, [args.data, args.rules], outputs)
    return 0


def _manifest_path(out) -> Path:
    p = Path(out)
    return p.with_name(p.name + ".manifest.json")


# -- parser -------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsdiscover", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")

    def add(name, handler, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file supplying defaults for any flag of this subcommand")
        p.set_defaults(handler=handler)
        return p

    p = add("preprocess", cmd_preprocess, "hourly panel to peak and off-peak daily panels")
    p.add_argument("--data", help="hourly CSV with a 'timestamp' column")
    p.add_argument("--rules", help="JSON with lambda_column, hubs, rules, roles, gas, temperature, weather")
    p.add_argument("--out-dir")

    p = add("simulate", cmd_simulate, "sample a random linear SVAR")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--latents", type=int, default=0)
    p.add_argument("--density", type=float, default=0.3)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--lag-max", type=int, default=2)
    p.add_argument("--burn-in", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--truth", help="write the generating SCM as JSON")

    p = add("discover", cmd_discover, "run causal discovery on one daily panel")
    p.add_argument("--data")
    p.add_argument("--schema", help="JSON list of {name, role, units}")
    _add_knowledge_flags(p)
    _add_engine_flags(p)
    p.add_argument("--out")
    p.add_argument("--dot")
    p.add_argument("--audit")
    p.add_argument("--hide-self-loops", action="store_true")

    p = add("suite", cmd_suite, "discovery over every regime and rolling window")
    p.add_argument("--data", help="one daily panel used for both peak and off-peak regimes")
    p.add_argument("--peak-data")
    p.add_argument("--offpeak-data")
    p.add_argument("--schema")
    _add_knowledge_flags(p)
    _add_engine_flags(p)
    p.add_argument("--regimes", default="all", help="'all' or comma list such as peak-warm,offpeak-cool")
    p.add_argument("--windows", default="2019:2024:2:1", help="start:end:length:step in years")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir")
    p.add_argument("--hide-self-loops", action="store_true")

    p = add("evaluate", cmd_evaluate, "score a graph against ground truth, or summarize effect tables")
    p.add_argument("--found")
    p.add_argument("--truth", help="SCM JSON from 'simulate --truth' or a graph JSON")
    p.add_argument("--effects", help="effect CSV, or 'reference' for the shipped wind/gas table")
    p.add_argument("--out")

    p = add("export-dot", cmd_export_dot, "render a graph JSON as Graphviz DOT")
    p.add_argument("--graph")
    p.add_argument("--out")
    p.add_argument("--hide-self-loops", action="store_true")
    p.add_argument("--colormap", help="matplotlib colormap name for link strength")
    p.add_argument("--exclude", help="comma list of variables to leave out")
    return parser


def _parse(parser, argv):
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise SystemExit(2)
    if args.config:
        try:
            with open(args.config) as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read --config: {exc}")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        norm = {k.replace("-", "_"): v for k, v in overrides.items()}
        unknown = sorted(set(norm) - known)
        if unknown:
            sub.error(f"unknown keys in --config: {', '.join(unknown)}")
        sub.set_defaults(**norm)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _parse(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(_json({"error": "usage", "message": str(exc)}), file=sys.stderr, end="")
        return 2
    except Exception as exc:
        print(_json({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr, end="")
        return 1


if __name__ == "__main__":
    sys.exit(main())
