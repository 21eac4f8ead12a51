"""Command-line entry point: ``acpgraph <subcommand> ...`` or ``python -m acpgraph``.

Exit status is 0 on success, 2 for usage errors, 1 for everything else
(missing files, malformed input) with a one-line diagnostic on stderr.
Every command that writes files also writes ``run_config.json`` next to its
outputs. Log lines on stderr are ``level<TAB>component<TAB>message``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .amr import corpus_role_stats, read_penman_records, serialize_penman
from .config import ModelConfig
from .embeddings import WordVectors
from .fileio import atomic_write, read_text
from .graphs import GRAPH_TYPES, build_graph, graph_to_json, tokenize
from .interpret import export_heatmap
from .knowledge import dump_store, ingest_csv, load_store
from .qa import ModelBundle, evaluate, load_questions, metrics_csv, predict, predictions_csv, train

log = logging.getLogger("acpgraph.cli")

LOG_FORMAT = "%(levelname)s\t%(name)s\t%(message)s"


class CliError(Exception):
    """Expected failure; reported as one line, exit status 1."""


# -- helpers -------------------------------------------------------------------

def _parent(path: str) -> Path:
    p = Path(path).parent
    p.mkdir(parents=True, exist_ok=True)
    return p


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_run_config(directory: Path, args: argparse.Namespace, **extra) -> None:
    payload = {"version": __version__, "subcommand": args.command,
               "args": {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}}
    payload.update(extra)
    atomic_write(directory / "run_config.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_amrs(path: str) -> list:
    return list(read_penman_records(read_text(path)))


def _config_flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model and training (override --config)")
    for f in fields(ModelConfig):
        default = f.default
        flag = _config_flag(f.name)
        if isinstance(default, bool):
            g.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None,
                           help=f"default {default}")
        elif f.name == "graph_type":
            g.add_argument(flag, dest=f.name, choices=GRAPH_TYPES, default=None, help=f"default {default}")
        elif f.name == "optimizer":
            g.add_argument(flag, dest=f.name, choices=("adam", "sgd"), default=None, help=f"default {default}")
        else:
            kind = float if default is None or isinstance(default, float) else int
            g.add_argument(flag, dest=f.name, type=kind, default=None, metavar=kind.__name__.upper(),
                           help=f"default {default}")


def resolve_config(args: argparse.Namespace) -> ModelConfig:
    """Built-in defaults, then the --config file, then explicit flags."""
    values = ModelConfig().to_dict()
    if getattr(args, "config", None):
        try:
            from_file = json.loads(read_text(args.config))
        except json.JSONDecodeError as exc:
            raise CliError(f"{args.config}: not a JSON object ({exc})") from exc
        if not isinstance(from_file, dict):
            raise CliError(f"{args.config}: not a JSON object")
        ModelConfig.from_dict({**values, **from_file})  # rejects unknown keys
        values.update(from_file)
    for f in fields(ModelConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return ModelConfig.from_dict(values)


def _questions(args: argparse.Namespace, path: str) -> list:
    insts = load_questions(read_text(path), read_text(args.amr))
    missing = [i.id for i in insts if i.amr is None]
    if missing:
        raise CliError(f"{args.amr}: no AMR for question ids {missing[:5]}")
    return insts


def _bundle(path: str) -> ModelBundle:
    return ModelBundle.from_bytes(Path(path).read_bytes())


# -- subcommands ---------------------------------------------------------------

def cmd_ingest_cn(args) -> int:
    lang = None if args.lang in ("", "any") else args.lang
    with open(args.input, encoding="utf-8") as fh:
        store = ingest_csv(fh, lang)
    atomic_write(args.out, dump_store(store))
    _write_run_config(_parent(args.out), args)
    log.info("stored %d assertions over %d concepts; skipped %d malformed records",
             len(store.assertions), len(store.index), store.skipped)
    return 0


def cmd_parse_amr(args) -> int:
    records = _load_amrs(args.input)
    chunks = []
    for g, meta in records:
        head = "".join(f"# ::{k} {v}\n" for k, v in meta.items())
        chunks.append(head + serialize_penman(g) + "\n")
    text = "\n".join(chunks)
    if args.out:
        atomic_write(args.out, text)
        _write_run_config(_parent(args.out), args)
    else:
        sys.stdout.write(text)
    log.info("parsed %d graphs", len(records))
    return 0


def cmd_build_graph(args) -> int:
    records = _load_amrs(args.amr)
    if not records:
        raise CliError(f"{args.amr}: no graphs")
    if args.id is None:
        amr, meta = records[0]
    else:
        found = [r for r in records if r[0].id == args.id]
        if not found:
            raise CliError(f"{args.amr}: no graph with id {args.id!r}")
        amr, meta = found[0]
    store = load_store(read_text(args.store))
    tokens = None
    if args.type in ("cf", "cp"):
        text = args.question if args.question is not None else meta.get("snt")
        if not text:
            raise CliError("cf/cp graphs need question tokens: pass --question or a '# ::snt' line")
        tokens = tokenize(text)
    g = build_graph(args.type, amr, store, tokens, max_neighbors=args.max_neighbors, hops=args.hops)
    atomic_write(args.out, graph_to_json(g))
    _write_run_config(_parent(args.out), args)
    log.info("%s graph: %d nodes, %d edges", args.type, len(g.nodes), len(g.edges))
    return 0


def _role_order(roles) -> list[str]:
    def key(r):
        name = r.lstrip(":")
        if name.startswith("ARG") and name[3:].isdigit():
            return (0, int(name[3:]), name)
        return (1, 0, name)
    return sorted(roles, key=key)


def format_stats_table(columns: list[tuple[str, object]], roles: list[str]) -> str:
    """Aligned table, one column per corpus, cells like ``17300 (22.70%)``."""
    header = ["Relation"] + [name for name, _ in columns]
    rows = [header]
    for r in roles:
        rows.append([r.lstrip(":")] + [f"{st.counts.get(r, 0)} ({st.percent(r):.2f}%)" for _, st in columns])
    rows.append(["Total relations"] + [str(st.total) for _, st in columns])
    widths = [max(len(row[c]) for row in rows) for c in range(len(header))]
    lines = []
    for row in rows:
        cells = [row[0].ljust(widths[0])] + [cell.rjust(w) for cell, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def stats_csv(stats, roles: list[str]) -> str:
    lines = ["role,count,percent"]
    lines += [f"{r.lstrip(':')},{stats.counts.get(r, 0)},{stats.percent(r):.4f}" for r in roles]
    return "\n".join(lines) + "\n"


def cmd_stats(args) -> int:
    columns = []
    for path in args.amr:
        columns.append((Path(path).stem, corpus_role_stats(g for g, _ in _load_amrs(path))))
    pooled = columns[0][1]
    for _, st in columns[1:]:
        pooled = pooled + st
    if args.roles:
        roles = [r if r.startswith(":") else ":" + r for r in args.roles]
    else:
        roles = _role_order(pooled.counts)
    sys.stdout.write(format_stats_table(columns, roles))
    if args.csv:
        atomic_write(args.csv, stats_csv(pooled, roles))
        _write_run_config(_parent(args.csv), args)
    return 0


def cmd_gen_synthetic(args) -> int:
    from .synthetic import build_synthetic_corpus
    from .qa import dump_questions

    syn = build_synthetic_corpus(args.seed, args.n, args.dim)
    out = _out_dir(args.out)
    penman = "\n".join(f"# ::id {i.id}\n# ::snt {i.question}\n{syn.penman[i.id]}\n" for i in syn.instances)
    atomic_write(out / "questions.penman", penman)
    atomic_write(out / "questions.jsonl", dump_questions(syn.instances))
    atomic_write(out / "store.tsv", dump_store(syn.store))
    atomic_write(out / "vectors.txt", syn.vectors.dumps())
    atomic_write(out / "planted.json", json.dumps({k: list(v) for k, v in syn.planted.items()}, indent=2) + "\n")
    if args.split:
        sizes = [int(x) for x in args.split.split(",")]
        if len(sizes) != 3 or sum(sizes) > args.n:
            raise CliError("--split needs three sizes train,dev,test summing to at most --n")
        for name, part in zip(("train", "dev", "test"), syn.split(*sizes)):
            atomic_write(out / f"{name}.jsonl", dump_questions(part))
    _write_run_config(out, args)
    log.info("wrote %d synthetic questions to %s", len(syn.instances), out)
    return 0


def cmd_train(args) -> int:
    config = resolve_config(args)
    corpus = _questions(args, args.train)
    dev = _questions(args, args.dev) if args.dev else None
    store = load_store(read_text(args.store))
    vectors = WordVectors.loads(read_text(args.vectors))
    bundle, metrics = train(corpus, store, config, vectors, dev=dev)
    out = _out_dir(args.out)
    atomic_write(out / "model.ckpt", bundle.to_bytes())
    atomic_write(out / "metrics.csv", metrics_csv(metrics))
    _write_run_config(out, args, model_config=config.to_dict())
    log.info("trained %d epochs; best dev accuracy %.4f", len(metrics), max(m.dev_acc for m in metrics))
    return 0


def cmd_eval(args) -> int:
    bundle = _bundle(args.model)
    store = load_store(read_text(args.store))
    result = evaluate(_questions(args, args.questions), bundle, store)
    out = _out_dir(args.out)
    atomic_write(out / "predictions.csv", result.to_csv())
    atomic_write(out / "metrics.json", json.dumps({"accuracy": result.accuracy, "n": len(result.predictions)},
                                                  indent=2) + "\n")
    _write_run_config(out, args, model_config=bundle.config.to_dict())
    print(f"accuracy {result.accuracy:.4f} ({len(result.predictions)} questions)")
    return 0


def cmd_predict(args) -> int:
    bundle = _bundle(args.model)
    store = load_store(read_text(args.store))
    prepared = [bundle.prepare(i, store) for i in _questions(args, args.questions)]
    atomic_write(args.out, predictions_csv(predict(prepared, bundle)))
    _write_run_config(_parent(args.out), args, model_config=bundle.config.to_dict())
    return 0


def cmd_explain(args) -> int:
    bundle = _bundle(args.model)
    store = load_store(read_text(args.store))
    insts = [i for i in _questions(args, args.questions) if i.id == args.question]
    if not insts:
        raise CliError(f"{args.questions}: no question with id {args.question!r}")
    prep = bundle.prepare(insts[0], store)
    _, output = bundle.forward(prep)
    out = _out_dir(args.out)
    export_heatmap(output, prep.graph, out, k=args.k, layer=args.layer, heads=args.heads)
    _write_run_config(out, args, model_config=bundle.config.to_dict())
    return 0


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acpgraph", description="AMR + ConceptNet graph reasoning toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    sub = parser.add_subparsers(dest="command", metavar="<command>", required=True)

    p = sub.add_parser("ingest-cn", help="ingest a ConceptNet assertion dump into a store file")
    p.add_argument("--input", required=True, help="tab-separated assertion dump")
    p.add_argument("--lang", default="en", help="keep only concepts in this language ('any' keeps all)")
    p.add_argument("--out", required=True, help="store file to write")
    p.set_defaults(func=cmd_ingest_cn)

    p = sub.add_parser("parse-amr", help="parse PENMAN records and print them in normalized form")
    p.add_argument("--input", required=True, help="PENMAN file, records separated by blank lines")
    p.add_argument("--out", help="write here instead of stdout")
    p.set_defaults(func=cmd_parse_amr)

    p = sub.add_parser("build-graph", help="build an integrated ACP/ACF/CF/CP graph as JSON")
    p.add_argument("--type", required=True, choices=GRAPH_TYPES)
    p.add_argument("--amr", required=True, help="PENMAN file")
    p.add_argument("--store", required=True, help="store file from ingest-cn")
    p.add_argument("--out", required=True, help="graph JSON to write")
    p.add_argument("--id", help="graph id to use when the PENMAN file holds several (default: first)")
    p.add_argument("--question", help="question text for cf/cp tokens (default: the '# ::snt' line)")
    p.add_argument("--max-neighbors", type=int, default=100, help="ConceptNet neighbors per concept (default 100)")
    p.add_argument("--hops", type=int, default=1, help="ConceptNet expansion depth (default 1)")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("stats", help="AMR role counts and percentages")
    p.add_argument("--amr", required=True, nargs="+", help="one or more PENMAN files, one table column each")
    p.add_argument("--roles", nargs="+", help="roles to list, e.g. ARG0 ARG1 (default: all)")
    p.add_argument("--csv", help="also write role,count,percent for all files pooled")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("gen-synthetic", help="write a planted-path synthetic corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=300, help="number of questions (default 300)")
    p.add_argument("--dim", type=int, default=64, help="word-vector dimension (default 64)")
    p.add_argument("--split", help="also write train/dev/test JSONL with these sizes, e.g. 200,50,50")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train", help="train a model; writes model.ckpt and metrics.csv")
    p.add_argument("--train", required=True, help="training questions (JSONL)")
    p.add_argument("--dev", help="dev questions for early stopping (default: the training set)")
    p.add_argument("--amr", required=True, help="PENMAN file holding the AMR of every question, keyed by id")
    p.add_argument("--store", required=True)
    p.add_argument("--vectors", required=True, help="word vectors, one 'token v1 ... vD' per line")
    p.add_argument("--config", help="JSON model config; flags below override it")
    p.add_argument("--out", required=True, help="output directory")
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    for name, help_text, func in (("eval", "accuracy of a trained model", cmd_eval),
                                  ("predict", "predicted labels as CSV", cmd_predict)):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--model", required=True, help="model.ckpt from train")
        p.add_argument("--questions", required=True)
        p.add_argument("--amr", required=True)
        p.add_argument("--store", required=True)
        p.add_argument("--out", required=True,
                       help="output directory" if name == "eval" else "predictions CSV to write")
        p.set_defaults(func=func)

    p = sub.add_parser("explain", help="attention heatmap and top paths for one question")
    p.add_argument("--model", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--amr", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--question", required=True, help="question id")
    p.add_argument("--k", type=int, default=4, help="number of paths (default 4)")
    p.add_argument("--layer", type=int, help="attention layer (default: last relation layer)")
    p.add_argument("--heads", default="mean", help="head aggregation: mean, max, or a head index")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_explain)
    return parser


def _setup_logging(level: str) -> None:
    root = logging.getLogger("acpgraph")
    for h in list(root.handlers):
        if getattr(h, "_acpgraph_cli", False):
            root.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._acpgraph_cli = True
    root.addHandler(handler)
    root.setLevel(level)
    root.propagate = False


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.log_level)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
    except IsADirectoryError as exc:
        print(f"error: is a directory: {exc.filename}", file=sys.stderr)
    except (CliError, ValueError, KeyError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
