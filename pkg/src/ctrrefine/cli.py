"""``ctrrefine`` command line: prepare, train, bench, probe, audit, report, export."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import config as C
from .composer import CTRModel, ModelSpec, compose, model_name
from .data import DatasetBundle, load_cache, prepare, save_cache
from .embedding import load_checkpoint, save_checkpoint
from .probes import AuditFailure, audit_param_counts, criteo_schema, run_probe_suite
from .refine import EVALUATED
from .report import (ReportError, emit_results_table, export_refined_embeddings, load_run_json,
                     write_aggregate_csv, write_run_json)
from .train import grid_search, paired_ttest, run_seeds, train

log = logging.getLogger("ctrrefine")


def _dump(obj, out: str | None):
    text = json.dumps(obj, indent=2, default=str) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def load_data(cfg: dict) -> DatasetBundle:
    cache = cfg["data.cache"]
    if cache and Path(cache).exists():
        return load_cache(cache)
    if not cfg["data.path"]:
        raise SystemExit("no dataset: set --data.path (raw file) or --data.cache (prepared file)")
    bundle = prepare(cfg["data.path"], cfg["data.format"], cfg["data.min_count"], cfg["data.seed"],
                     cfg["data.ratios"], cfg["data.label_column"], cfg["data.delimiter"],
                     cfg["data.numeric_columns"])
    if cache:
        save_cache(bundle, cache)
    return bundle


def _dataset_name(cfg: dict) -> str:
    if cfg["data.name"]:
        return cfg["data.name"]
    src = cfg["data.path"] or cfg["data.cache"] or ""
    return Path(src).name.split(".")[0] if src else ""


def _fit(spec: ModelSpec, data: DatasetBundle, cfg: dict, out_dir: Path) -> list:
    tcfg = C.train_config(cfg)
    if cfg["train.grid_search"]:
        (lr, bs), _ = grid_search(spec, data, tcfg, cfg["train.lr_grid"], cfg["train.batch_grid"])
        log.info("%s: grid picked lr=%g batch_size=%d", model_name(spec), lr, bs)
        tcfg = replace(tcfg, lr=lr, batch_size=bs)
    name = model_name(spec)
    run_dir = out_dir / name
    run_dir.mkdir(parents=True, exist_ok=True)
    results = []
    for seed in run_seeds(tcfg.seed, cfg["train.runs"]):
        model = compose(spec, data.schema, seed=seed)
        res = train(model, data, replace(tcfg, seed=seed))
        write_run_json(res, run_dir / f"run_{seed}.json", _dataset_name(cfg))
        save_checkpoint(run_dir / f"model_{seed}.pt", model, data.schema, spec.dim,
                        {"spec": asdict(spec)})
        log.info("%s seed %d: test AUC %.4f logloss %.4f", name, seed, res.test_auc, res.test_logloss)
        results.append(res)
    return results


def _emit(runs, out: Path):
    """Write and print the results table; drop the Ave.Imp row when no SKIP baseline exists."""
    try:
        table = emit_results_table(runs, out, "results")
        sys.stdout.write(table.to_markdown())
    except ReportError as exc:
        log.warning("%s; writing the table without it", exc)
        table = emit_results_table(runs, out, "results", improvement=False)
        sys.stdout.write(table.to_markdown(improvement=False))


def cmd_prepare(args, cfg):
    bundle = load_data({**cfg, "data.cache": None})
    cache = cfg["data.cache"] or str(Path(cfg["data.path"]).with_suffix(".cache"))
    save_cache(bundle, cache)
    _dump({"cache": cache, "sizes": list(bundle.sizes), "num_fields": bundle.schema.num_fields,
           "num_features": bundle.schema.num_features,
           "vocab_sizes": bundle.schema.vocab_sizes}, None)


def cmd_train(args, cfg):
    data = load_data(cfg)
    out = Path(cfg["output.dir"])
    results = _fit(C.model_spec(cfg), data, cfg, out)
    rows = write_aggregate_csv(results, out / "aggregate.csv", _dataset_name(cfg))
    _dump(rows, None)


def cmd_bench(args, cfg):
    data = load_data(cfg)
    out = Path(cfg["output.dir"])
    bases = list(cfg["bench.base_models"])
    if cfg["bench.separate"]:
        bases += [f"{b}(2)" for b in cfg["bench.base_models"] if len(C.parse_backbones(b)) == 2]
    runs, by_cell = [], {}
    for base in bases:
        for fr in cfg["bench.modules"]:
            if base.endswith("(2)") and fr.upper() == "SKIP":
                continue  # two SKIPs are the base model itself
            res = _fit(C.spec_for(cfg, base, fr), data, cfg, out)
            runs += res
            by_cell[(base, fr)] = [r.test_auc for r in res]
    write_aggregate_csv(runs, out / "aggregate.csv", _dataset_name(cfg))
    sig = {}
    for (base, fr), aucs in by_cell.items():
        skip = by_cell.get((base.removesuffix("(2)"), "SKIP"))
        if fr.upper() != "SKIP" and skip and len(skip) == len(aucs) >= 2:
            sig[f"{base}_{fr}"] = asdict(paired_ttest(skip, aucs))
    _dump(sig, str(out / "significance.json"))
    _emit(runs, out)


def cmd_probe(args, cfg):
    names = args.modules or EVALUATED
    reports = run_probe_suite(names, tuple(args.seeds), args.trials, args.gradient)
    _dump([r.to_dict() for r in reports], args.out)
    return 0 if all(r.matches_declared for r in reports) else 1


def cmd_audit(args, cfg):
    if args.schema == "criteo":
        schema = criteo_schema()
    else:
        schema = load_data(cfg).schema
    cfgs = {k: v for k, v in C.section(cfg, "fr").items() if isinstance(v, dict)}
    try:
        rows = audit_param_counts(schema, dim=cfg["model.dim"], cfgs=cfgs, strict=True)
        code = 0
    except AuditFailure as exc:
        rows, code = exc.rows, 1
    _dump(rows, args.out)
    return code


def cmd_report(args, cfg):
    root = Path(args.runs or cfg["output.dir"])
    runs = [load_run_json(p) for p in sorted(root.rglob("run_*.json"))]
    if not runs:
        raise SystemExit(f"no run records under {root}")
    out = Path(args.out or root)
    write_aggregate_csv(runs, out / "aggregate.csv", _dataset_name(cfg))
    _emit(runs, out)


def cmd_export(args, cfg):
    data = load_data(cfg)
    if args.checkpoint:
        manifest, state = load_checkpoint(args.checkpoint)
        spec = ModelSpec(**manifest["spec"])
        model = CTRModel(spec, manifest["schema"])
        model.load_state_dict(state)
    else:
        model = compose(C.model_spec(cfg), data.schema, seed=cfg["train.seed"])
    if not len(model.fr):
        raise SystemExit("the model has no FR module to export")
    module = model.fr[args.fr_index]
    split = {"train": data.train_x, "valid": data.valid_x, "test": data.test_x}[args.split]
    text = export_refined_embeddings(module, model.embedding, split, args.feature, args.n, args.out)
    if not args.out:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctrrefine", description=__doc__,
                                epilog="Any config key can be overridden as --key value, "
                                       "e.g. --train.lr 0.001 --fr.GFRL.m 32.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def verb(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="YAML config with dotted or nested keys")
        return s

    verb("prepare", "read, encode, split and cache a raw dataset")
    verb("train", "train one model spec for train.runs seeds")
    verb("bench", "train bench.base_models x bench.modules and emit the results table")
    s = verb("probe", "run the taxonomy probes; exit 1 on any mismatch")
    s.add_argument("--modules", nargs="*")
    s.add_argument("--seeds", nargs="*", type=int, default=[0, 1, 2, 3, 4])
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--gradient", action="store_true", help="also run the gradient check")
    s.add_argument("--out")
    s = verb("audit", "parameter-count audit; exit 1 on mismatch")
    s.add_argument("--schema", choices=["criteo", "data"], default="criteo")
    s.add_argument("--out")
    s = verb("report", "rebuild tables from run records")
    s.add_argument("--runs")
    s.add_argument("--out")
    s = verb("export", "dump original and refined embeddings of one feature")
    s.add_argument("--checkpoint")
    s.add_argument("--feature", type=int, required=True)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--fr-index", type=int, default=0)
    s.add_argument("--split", choices=["train", "valid", "test"], default="test")
    s.add_argument("--out")
    return p


COMMANDS = {"prepare": cmd_prepare, "train": cmd_train, "bench": cmd_bench, "probe": cmd_probe,
            "audit": cmd_audit, "report": cmd_report, "export": cmd_export}


def main(argv=None) -> int:
    args, rest = build_parser().parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = C.load_config(args.config, C.parse_overrides(rest))
    return COMMANDS[args.verb](args, cfg) or 0


if __name__ == "__main__":
    sys.exit(main())
