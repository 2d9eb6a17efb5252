"""``rwkg`` command-line entry point.

Every subcommand reads one flat config file (``--config``) plus
``--set key=value`` overrides, writes its reports into ``out`` and embeds
the resolved configuration as ``#`` header lines, so a rerun with the
same inputs reproduces the files byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Callable, Sequence

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import (
    ConfigError,
    RunConfig,
    disease_gene_split,
    load_graph,
    synth_config,
    train_config,
)
from .experiment import (
    BASELINE_METHODS,
    BaselineSettings,
    Protocol,
    ablate,
    compare_weighted,
    fit_and_evaluate,
    metric_row,
    rotate_scorer,
    run_baselines,
    search_weights,
    top_predictions,
    weight_space,
)
from .graph import GraphError, Triple, ingestion_report
from .hypersearch import Categorical, IntRange, RealRange, SearchFailed, write_best_params
from .metrics import (
    build_queries,
    compare_external,
    evaluate,
    fmt,
    write_curve_csv,
    write_metrics_csv,
    write_queries_tsv,
)
from .rotate import DivergenceError, TrainConfig
from .split import SplitError, excise_gene_leakage, write_manifest
from .synth import generate, write_synth

logger = logging.getLogger("rwkg")

LABELS = {"variant": "Variant", "method": "Method", "mean_rank": "Mean Rank",
          "mean_percentile": "Mean Percentile"}
METHOD_LABELS = {"neighborhood": "Direct neighborhood scoring", "diamond": "DIAMOnD",
                 "random_walk": "Random walk"}


# --- small writers -------------------------------------------------------------

def _header_lines(cfg: RunConfig, command: str, notes: Sequence[str] = ()) -> str:
    lines = [f"# command={command}"]
    lines += [f"# {k}={v}" for k, v in cfg.header().items()]
    lines += [f"# {n}" for n in notes]
    return "\n".join(lines) + "\n"


def _header_dict(cfg: RunConfig, command: str) -> dict:
    return {"command": command, **cfg.header()}


def _cell(value) -> str:
    return value if isinstance(value, str) else fmt(value)


def write_table(path: Path, rows: Sequence[dict], columns: Sequence[str], header: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([LABELS.get(c, c) for c in columns])
        for row in rows:
            w.writerow([_cell(row[c]) for c in columns])


def _read_column(path: Path, column: int = 0) -> list[str]:
    """Non-comment, non-blank rows' ``column``-th tab-separated field, in order."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from exc
    out = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) <= column or not parts[column].strip():
            raise ConfigError(f"{path}: row {line!r} has no column {column + 1}")
        out.append(parts[column].strip())
    return out


# --- shared setup ---------------------------------------------------------------

def protocol(cfg: RunConfig) -> Protocol:
    return Protocol(cfg.get("dg_layer"), cfg.get("pp_layer"), cfg.get("gene_type"), cfg.ints("ks"))


def _prepare(cfg: RunConfig):
    layers, types, graph = load_graph(cfg)
    dg = cfg.get("dg_layer")
    if dg not in graph.tags:
        raise ConfigError(f"dg_layer {dg!r} is not among the configured layers {graph.tags}")
    bundle = disease_gene_split(cfg, graph)
    return layers, types, graph, bundle


def _hit_columns(cfg: RunConfig, key: str) -> list[str]:
    ks = cfg.ints(key)
    missing = [k for k in ks if k not in cfg.ints("ks")]
    if missing:
        raise ConfigError(f"{key} asks for hit@{missing[0]} but ks={cfg.get('ks')} does not include it")
    return [f"hit@{k}" for k in ks]


def _out(cfg: RunConfig) -> Path:
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    return out


def search_space(cfg: RunConfig, relations: Sequence[str], fixed_relation: str) -> dict:
    """Log-uniform relation weights plus any ``search.range.<key>=low,high[,log]``
    or ``search.range.<key>=a|b|c`` entries (keys like ``train.lr``)."""
    space = weight_space(relations, fixed_relation, cfg.float("search.weight_low"),
                         cfg.float("search.weight_high"))
    kinds = {f"train.{f.name}": type(f.default) for f in dataclasses.fields(TrainConfig)}
    for name, raw in sorted(cfg.prefixed("search.range.").items()):
        if name not in kinds and not name.startswith("weight."):
            raise ConfigError(f"search.range.{name}: unknown parameter")
        try:
            if "|" in raw:
                conv = kinds.get(name, float)
                space[name] = Categorical(tuple(conv(x) for x in raw.split("|")))
                continue
            parts = [p.strip() for p in raw.split(",")]
            log = len(parts) == 3 and parts[2] == "log"
            if len(parts) not in (2, 3) or (len(parts) == 3 and not log):
                raise ValueError("expected low,high or low,high,log")
            if kinds.get(name) is int:
                space[name] = IntRange(int(parts[0]), int(parts[1]))
            else:
                space[name] = RealRange(float(parts[0]), float(parts[1]), log=log)
        except ValueError as exc:
            raise ConfigError(f"search.range.{name}={raw!r}: {exc}") from None
    return space


# --- subcommands ------------------------------------------------------------------

def cmd_ingest(cfg: RunConfig) -> None:
    layers, types, graph = load_graph(cfg)
    out = _out(cfg)
    lines = [ingestion_report(layers).rstrip("\n")]
    for t in sorted({n.type_tag for n in graph.nodes}):
        lines.append(f"type\t{t}\tnodes={len(graph.nodes_of_type(t))}")
    lines.append(f"total\tnodes={graph.node_count}\ttriples={len(graph.triple_set())}"
                 f"\trelations={','.join(graph.relations)}")
    text = "\n".join(lines) + "\n"
    (out / "ingest.txt").write_text(_header_lines(cfg, "ingest") + text, encoding="utf-8")
    sys.stdout.write(text)


def cmd_split(cfg: RunConfig) -> None:
    _, _, graph, bundle = _prepare(cfg)
    target = _out(cfg) / "split"
    write_manifest(bundle, target)
    print(f"train={len(bundle.train)} valid={len(bundle.valid)} test={len(bundle.test)} -> {target}")


def cmd_train(cfg: RunConfig) -> None:
    _, _, graph, bundle = _prepare(cfg)
    full = bundle.with_layers(graph, graph.tags)
    fit = fit_and_evaluate(graph, full, train_config(cfg), protocol(cfg), cfg.seed, evaluate_test=False)
    out = _out(cfg)
    save_checkpoint(fit.model, out / "model.ckpt")
    with open(out / "history.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(_header_lines(cfg, "train", [f"best_epoch={fit.history.best_epoch}"]))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "valid_MP"])
        for epoch, loss, mp in fit.history.rows():
            w.writerow([epoch, fmt(loss), "" if mp is None else fmt(mp)])
    if fit.valid is not None:
        print(f"valid MP={fit.valid.mean_percentile:.4f} best_epoch={fit.history.best_epoch}")


def _truth_triples(path: Path, relation: str) -> tuple[list[Triple], list[Triple]]:
    """(held-out triples to query, every listed triple) from a truth TSV of
    ``disease, gene[, revealed|held_out]`` rows."""
    diseases, genes = _read_column(path, 0), _read_column(path, 1)
    try:
        flags = _read_column(path, 2)
    except ConfigError:
        flags = ["held_out"] * len(genes)
    rows = [Triple(d, relation, g) for d, g in zip(diseases, genes)]
    return [t for t, f in zip(rows, flags) if f == "held_out"], rows


def cmd_eval(cfg: RunConfig) -> None:
    _, _, graph, bundle = _prepare(cfg)
    proto = protocol(cfg)
    out = _out(cfg)
    model = load_checkpoint(cfg.path("model") if cfg.has("model") else out / "model.ckpt")
    missing = [n.id for n in graph.nodes if n.id not in model.node_ids]
    if missing:
        raise ConfigError(f"checkpoint does not embed graph node {missing[0]!r}")
    relation = bundle.dg_relation
    scorer = rotate_scorer(model, graph, relation, cfg.bool("train.weighted"))
    report = evaluate(scorer, build_queries(graph, bundle.test, proto.gene_type), proto.ks)
    header = _header_dict(cfg, "eval")
    write_metrics_csv(report, out / "metrics.csv", header)
    write_queries_tsv(report, out / "queries.tsv", header)
    print(f"test MP={report.mean_percentile:.4f} MR={report.mean_rank:.4f} queries={report.n}")
    if cfg.has("eval.truth"):
        held, known = _truth_triples(cfg.path("eval.truth"), relation)
        if not held:
            raise ConfigError(f"{cfg.get('eval.truth')} lists no held_out rows")
        truth = evaluate(scorer, build_queries(graph, held, proto.gene_type, known=known), proto.ks)
        write_metrics_csv(truth, out / "truth_metrics.csv", header)
        write_queries_tsv(truth, out / "truth_queries.tsv", header)
        print(f"held-out truth MP={truth.mean_percentile:.4f} queries={truth.n}")


def cmd_ablate(cfg: RunConfig) -> None:
    layers, types, graph, bundle = _prepare(cfg)
    if layers[0].tag != cfg.get("dg_layer"):
        raise ConfigError(f"ablation needs the disease-gene layer first, got {layers[0].tag!r}")
    proto = protocol(cfg)
    hits = _hit_columns(cfg, "report.hits")
    rows = ablate(layers, types, bundle, train_config(cfg), proto, cfg.seed)
    columns = ["variant", *hits, "mean_rank", "mean_percentile",
               *[f"rel_{h}" for h in hits], "rel_mean_rank", "rel_mean_percentile", "best_epoch"]
    write_table(_out(cfg) / "ablation.csv", rows, columns,
                _header_lines(cfg, "ablate", ["rel_* = percent change vs the first stage"]))
    for r in rows:
        print(f"{r['variant']}\tMP={_cell(r['mean_percentile'])}")


def cmd_compare_weighted(cfg: RunConfig) -> None:
    _, _, graph, bundle = _prepare(cfg)
    full = bundle.with_layers(graph, graph.tags)
    proto = protocol(cfg)
    out = _out(cfg)
    space = search_space(cfg, graph.relations, bundle.dg_relation)
    rows, best, trials, _, _ = compare_weighted(
        graph, full, train_config(cfg), proto, cfg.seed, cfg.int("search.budget"), space=space,
        warmup=cfg.int("search.warmup"), grace=cfg.int("search.grace"),
        enqueue_uniform=cfg.bool("search.enqueue_uniform"),
        log_path=out / "trials.csv", log_header=_header_dict(cfg, "compare-weighted"))
    write_best_params(best, out / "best_params.cfg")
    columns = ["variant", *_hit_columns(cfg, "report.hits"), "mean_rank", "mean_percentile"]
    write_table(out / "weighted.csv", rows, columns, _header_lines(cfg, "compare-weighted"))
    for r in rows:
        print(f"{r['variant']}\tMP={_cell(r['mean_percentile'])}")


def cmd_search(cfg: RunConfig) -> None:
    _, _, graph, bundle = _prepare(cfg)
    full = bundle.with_layers(graph, graph.tags)
    proto = protocol(cfg)
    out = _out(cfg)
    space = search_space(cfg, graph.relations, bundle.dg_relation)
    best, trials, fit = search_weights(
        graph, full, train_config(cfg), proto, cfg.seed, cfg.int("search.budget"), space=space,
        warmup=cfg.int("search.warmup"), grace=cfg.int("search.grace"),
        enqueue_uniform=cfg.bool("search.enqueue_uniform"),
        log_path=out / "trials.csv", log_header=_header_dict(cfg, "search"))
    write_best_params(best, out / "best_params.cfg")
    write_metrics_csv(fit.test, out / "search_metrics.csv", _header_dict(cfg, "search"))
    done = sum(t.status == "complete" for t in trials)
    print(f"{done}/{len(trials)} trials complete; best valid MP={fit.valid.mean_percentile:.4f}")


def cmd_baselines(cfg: RunConfig) -> None:
    _, _, graph, bundle = _prepare(cfg)
    full = bundle.with_layers(graph, graph.tags)
    proto = protocol(cfg)
    out = _out(cfg)
    skip = cfg.list("baseline.skip")
    methods_off = tuple(s for s in skip if s in BASELINE_METHODS)
    for s in skip:
        if s.split(".")[0] not in (*BASELINE_METHODS, "model"):
            raise ConfigError(f"baseline.skip entry {s!r} names no method")
    settings = BaselineSettings(cfg.int("baseline.limit"), cfg.floats("baseline.restart_grid"),
                                cfg.float("baseline.tol"), methods_off)
    res = run_baselines_for(graph, full, proto, settings)
    fit = fit_and_evaluate(graph, full, train_config(cfg), proto, cfg.seed)

    def cell_skip(method):
        return {s.split(".", 1)[1] for s in skip if s.startswith(method + ".")}

    weighted = any(cfg.prefixed("weight."))
    rows = [metric_row("Relation-weighted RotatE" if weighted else "RotatE", fit.test, proto.ks,
                       cell_skip("model"))]
    for m in BASELINE_METHODS:
        rows.append(metric_row(METHOD_LABELS[m], res["reports"][m], proto.ks, cell_skip(m)))
    for r in rows:
        r["method"] = r.pop("variant")
    notes = [f"random_walk restart={res['restart']!r} (tuned on validation)",
             f"genes missing from a method's top-{settings.limit} list share the midpoint of the remaining ranks"]
    columns = ["method", *_hit_columns(cfg, "baseline.hits"), "mean_rank", "mean_percentile"]
    write_table(out / "baselines.csv", rows, columns, _header_lines(cfg, "baselines", notes))
    for method, per_disease in res["ranked"].items():
        with open(out / f"ranked_{method}.tsv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(_header_lines(cfg, "baselines"))
            fh.write("disease\trank\tgene\tscore\n")
            for disease, ranked in per_disease.items():
                for i, (gene, score) in enumerate(ranked, 1):
                    fh.write(f"{disease}\t{i}\t{gene}\t{score!r}\n")
    for r in rows:
        print(f"{r['method']}\tMP={_cell(r['mean_percentile'])}")


def run_baselines_for(graph, bundle, proto, settings):
    if proto.pp_tag not in graph.tags:
        raise ConfigError(f"pp_layer {proto.pp_tag!r} is not among the configured layers {graph.tags}")
    return run_baselines(graph, bundle, proto, settings)


def cmd_external(cfg: RunConfig) -> None:
    _, _, graph, bundle = _prepare(cfg)
    proto = protocol(cfg)
    out = _out(cfg)
    disease = cfg.get("external.disease", "")
    if not disease or disease not in graph:
        raise ConfigError(f"external.disease {disease!r} is not a node of the graph")
    truth = _read_column(cfg.path("external.truth"))
    k = cfg.int("external.k")
    full = bundle.with_layers(graph, graph.tags)
    excised: set[str] = set()
    if cfg.has("external.excise"):
        excised = set(_read_column(cfg.path("external.excise")))
        train = excise_gene_leakage(full.train, excised, graph, proto.gene_type)
        valid = [t for t in full.valid if t.tail not in excised and t.head not in excised]
        full = dataclasses.replace(full, train=tuple(sorted(train)), valid=tuple(valid))
    fit = fit_and_evaluate(graph, full, train_config(cfg), proto, cfg.seed, evaluate_test=False)
    known = {t.tail for t in full.train if t.head == disease and t.relation == full.dg_relation}
    ranked = top_predictions(fit.model, graph, disease, full.dg_relation, proto.gene_type,
                             exclude=known, weighted=cfg.bool("train.weighted"))
    if len(ranked) < k:
        raise ConfigError(f"only {len(ranked)} candidate genes remain, fewer than external.k={k}")
    header = _header_dict(cfg, "external")
    notes = [f"excised_genes={len(excised)}", f"excluded_known_genes={len(known)}"]
    with open(out / "top_predictions.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_header_lines(cfg, "external", notes))
        fh.write("rank\tgene\tscore\n")
        for i, (gene, score) in enumerate(ranked[:k], 1):
            fh.write(f"{i}\t{gene}\t{fmt(score)}\n")
    ours = compare_external([g for g, _ in ranked], truth, k)
    write_curve_csv(ours, out / "curve_model.csv", header)
    if cfg.has("external.list"):
        theirs = compare_external(_read_column(cfg.path("external.list")), truth, k)
        write_curve_csv(theirs, out / "curve_external.csv", header)
    print(f"model hits@{k}={ours[-1].hits} of {len(set(truth))} truth genes")


def cmd_synth(cfg: RunConfig) -> None:
    sg = generate(synth_config(cfg))
    files = write_synth(sg, _out(cfg))
    print(f"signal ratio={sg.signal_ratio():.3f} config -> {files['config']}")


COMMANDS: dict[str, tuple[Callable[[RunConfig], None], str]] = {
    "ingest": (cmd_ingest, "load layers and print an ingestion report"),
    "split": (cmd_split, "write the fixed disease-gene train/valid/test split"),
    "train": (cmd_train, "train on the full graph; write a checkpoint and history"),
    "eval": (cmd_eval, "score the test split with a checkpoint"),
    "ablate": (cmd_ablate, "one model per cumulative layer prefix"),
    "compare-weighted": (cmd_compare_weighted, "uniform weights versus searched relation weights"),
    "baselines": (cmd_baselines, "network baselines next to the trained model"),
    "search": (cmd_search, "random search with median pruning on validation MP"),
    "external": (cmd_external, "top-K predictions against an external truth list"),
    "synth": (cmd_synth, "generate a synthetic graph and a ready run.cfg"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rwkg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", help="key=value config file")
        p.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable; wins over the file)")
        p.add_argument("-o", "--out", help="output directory (same as --set out=DIR)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    overrides = list(args.set) + ([f"out={args.out}"] if args.out else [])
    try:
        cfg = RunConfig.load(args.config, overrides)
        COMMANDS[args.command][0](cfg)
    except (ConfigError, GraphError, SplitError, CheckpointError, SearchFailed, DivergenceError) as exc:
        print(f"rwkg {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        detail = f"unknown identifier {exc}" if isinstance(exc, KeyError) else str(exc)
        print(f"rwkg {args.command}: error: {detail}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
