"""Command-line entry point: dataset generation, explanation enumeration,
faithfulness reports, training, rule extraction, and exhaustive property
verification, all emitting JSON artifacts plus a run manifest.

Exit codes: 0 success, 2 validation error (bad flags/inputs), 1 internal
error. Errors are printed as structured JSON on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import DatasetSpec, generate, load_split, save_split
from .dsl import get_builtin, parse
from .errors import GxplainError, ParseError, SchemaError, BadParamsError
from .explain import (pi_explanations, trivial_explanations,
                      verify_te_subset_pi, verify_te_ambiguity)
from .faithfulness import (PerturbConfig, faith, topk_explanation,
                           verify_suf_nec)
from .graphs import SizeMetric, SubgraphMask, graph_from_record
from .model import (DualChannelModel, TrainConfig, channel_relevance,
                    evaluate_accuracy, extract_rule, train,
                    verify_loss_identities)

VALIDATION_ERRORS = (BadParamsError, ParseError, SchemaError, ValueError,
                     FileNotFoundError)


def _write_json(path: str | None, obj) -> str:
    text = json.dumps(obj, indent=2, sort_keys=False) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)
    return text


def _manifest(args: argparse.Namespace, started: float,
              outputs: list[str]) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items())
                if k not in ("func", "manifest")}
    obj = {"subcommand": args.command, "config": resolved,
           "seed": getattr(args, "seed", None), "tool_version": __version__,
           "inputs": [v for k, v in sorted(vars(args).items())
                      if k in ("graph", "scores", "model", "eval") and v],
           "outputs": outputs,
           "duration_s": round(time.monotonic() - started, 6)}
    path = args.manifest
    if path is None and getattr(args, "out", None):
        path = str(args.out) + ".manifest.json"
    if path:
        Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def _load_classifier(text: str):
    try:
        return get_builtin(text)
    except KeyError:
        return parse(text)


def _first_graph(path: str, index: int = 0):
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise SchemaError("empty graph file", line=0)
    if index >= len(lines):
        raise BadParamsError(f"graph index {index} out of range")
    g, _, _ = graph_from_record(lines[index])
    return g


# --- subcommands ---

def cmd_gen(args) -> int:
    spec = DatasetSpec(task=args.task, count=args.count,
                       size_range=(args.size_min, args.size_max),
                       ood=args.ood, ood_nodes=args.ood_nodes,
                       seed=args.seed)
    split = generate(spec)
    save_split(split, args.out)
    return 0


def cmd_explain(args) -> int:
    classifier = _load_classifier(args.classifier)
    g = _first_graph(args.graph, args.index)
    metric = SizeMetric[args.metric.upper().replace("-", "_")]
    if args.kind == "te":
        result = trivial_explanations(g, classifier, metric)
    else:
        result = pi_explanations(g, classifier, metric)
    _write_json(args.out, result.to_json_obj())
    return 0


def _mask_from_json(obj: dict) -> SubgraphMask:
    return SubgraphMask(frozenset(obj["nodes"]),
                        frozenset(tuple(e) for e in obj["edges"]))


def cmd_faith(args) -> int:
    classifier = _load_classifier(args.classifier)
    g = _first_graph(args.graph, args.index)
    if args.mask:
        mask = _mask_from_json(json.loads(Path(args.mask).read_text()))
    elif args.scores:
        raw = json.loads(Path(args.scores).read_text())
        scores = {tuple(json.loads(k) if k.startswith("[") else
                        [int(p) for p in k.split("-")]): float(v)
                  for k, v in raw.items()}
        mask = topk_explanation(scores, g, args.k)
    else:
        raise BadParamsError("faith needs --mask or --scores")
    cfg = PerturbConfig(mode=args.mode, samples=args.samples,
                        seed=args.seed, budget_fraction=args.budget)
    report = faith(g, mask, classifier, cfg)
    _write_json(args.out, report.to_json_obj())
    return 0


def cmd_train(args) -> int:
    spec = DatasetSpec(task=args.task, count=args.count, seed=args.seed)
    split = generate(spec)
    n_classes = max(r.label for r in split.records) + 1
    model = DualChannelModel(split.records[0].graph.feature_dim,
                             max(2, n_classes), seed=args.seed)
    cfg = TrainConfig(loss_variant=args.loss, lambda1=args.lambda1,
                      lambda2=args.lambda2, r=args.r, epochs=args.epochs,
                      warmup_epochs=args.warmup, lr=args.lr, seed=args.seed)
    history = train(model, split, cfg)
    model.save(args.out)
    summary = {"train_acc": history.epochs[-1]["acc"],
               "relevance": channel_relevance(model).to_json_obj(),
               "config": cfg.to_json_obj(),
               "history": history.to_json_obj()}
    _write_json(str(args.out) + ".history.json", summary)
    return 0


def cmd_rule(args) -> int:
    model = DualChannelModel.load(args.model)
    eval_split = load_split(args.eval) if args.eval else None
    names = ["red", "blue"][:model.feature_dim]
    if eval_split and eval_split.records:
        names = list(eval_split.records[0].graph.feature_names)
    report = extract_rule(model, names, drop_ratio=args.drop_ratio,
                          eval_split=eval_split)
    _write_json(args.out, report.to_json_obj())
    return 0


def cmd_verify(args) -> int:
    if args.max_nodes > 5:
        raise BadParamsError("--max-nodes is capped at 5")
    ee = get_builtin("edge-exists")
    ae = parse("forall x . exists y . E(x, y)")
    corpus = [("edge-exists", ee, ()),
              ("triangle-motif", get_builtin("triangle-motif"), ()),
              ("exists-red", parse("exists x . red(x)"), ("red", "blue"))]
    reports = []

    def run_te_pi():
        if args.classifier:
            c = _load_classifier(args.classifier)
            reports.append(verify_te_subset_pi(
                c, args.max_nodes).to_json_obj())
            return
        for name, c, palette in corpus:
            rep = verify_te_subset_pi(c, args.max_nodes, palette=palette)
            rep.name = f"te-subset-pi[{name}]"
            reports.append(rep.to_json_obj())

    def run_ambiguity():
        rep = verify_te_ambiguity(ee, ae, args.max_nodes)
        reports.append(rep.to_json_obj())

    def run_suf_nec():
        for name, c, palette in corpus:
            rep = verify_suf_nec(c, min(args.max_nodes, 4), palette=palette)
            rep.name = f"suf-nec[{name}]"
            reports.append(rep.to_json_obj())

    def run_losses():
        reports.append(verify_loss_identities(trials=20, seed=args.seed))

    suites = {"te-pi": [run_te_pi], "ambiguity": [run_ambiguity],
              "suf-nec": [run_suf_nec], "loss-identities": [run_losses],
              "all": [run_te_pi, run_ambiguity, run_suf_nec, run_losses]}
    for fn in suites[args.suite]:
        fn()
    passed = all(r["passed"] for r in reports)
    _write_json(args.out, {"suite": args.suite, "passed": passed,
                           "reports": reports})
    return 0 if passed else 1


# --- parser ---

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gxplain",
        description="Formal explanation laboratory for graph classifiers")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0,
                        help="random seed (default 0)")
        sp.add_argument("--out", default=None,
                        help="output path (default stdout)")
        sp.add_argument("--manifest", default=None,
                        help="manifest path (default <out>.manifest.json)")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker count; 1 guarantees determinism")

    sp = sub.add_parser("gen", help="generate a synthetic dataset split")
    sp.add_argument("--task", required=True,
                    choices=["redblue", "topofeature", "motif"])
    sp.add_argument("--count", type=int, default=100,
                    help="number of graphs")
    sp.add_argument("--size-min", type=int, default=10)
    sp.add_argument("--size-max", type=int, default=20)
    sp.add_argument("--ood", choices=["none", "larger", "baseshift"],
                    default="none")
    sp.add_argument("--ood-nodes", type=int, default=250)
    common(sp)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("explain", help="enumerate TE or PI explanations")
    sp.add_argument("--kind", choices=["te", "pi"], required=True)
    sp.add_argument("--classifier", required=True,
                    help="formula text or builtin name")
    sp.add_argument("--graph", required=True, help="graph JSONL file")
    sp.add_argument("--index", type=int, default=0,
                    help="record index within the JSONL file")
    sp.add_argument("--metric", default="edges-plus-nodes",
                    choices=["edges-plus-nodes", "edges-only", "nodes-only",
                             "edges-nodes-features"])
    common(sp)
    sp.set_defaults(func=cmd_explain)

    sp = sub.add_parser("faith", help="sufficiency/necessity report")
    sp.add_argument("--classifier", required=True)
    sp.add_argument("--graph", required=True)
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--mask", default=None,
                    help='JSON file {"nodes": [...], "edges": [[u,v],...]}')
    sp.add_argument("--scores", default=None,
                    help='JSON file {"u-v": score, ...} for top-k masks')
    sp.add_argument("--k", type=float, default=0.3,
                    help="top-k edge fraction when using --scores")
    sp.add_argument("--mode", choices=["exhaustive", "montecarlo"],
                    default="exhaustive")
    sp.add_argument("--samples", type=int, default=100)
    sp.add_argument("--budget", type=float, default=0.1,
                    help="Monte Carlo removal budget fraction b")
    common(sp)
    sp.set_defaults(func=cmd_faith)

    sp = sub.add_parser("train", help="train the dual-channel model")
    sp.add_argument("--task", required=True,
                    choices=["redblue", "topofeature", "motif"])
    sp.add_argument("--count", type=int, default=500)
    sp.add_argument("--loss", choices=["gisst", "ib"], default="ib")
    sp.add_argument("--r", type=float, default=0.5, help="IB prior")
    sp.add_argument("--lambda1", type=float, default=0.01)
    sp.add_argument("--lambda2", type=float, default=0.01)
    sp.add_argument("--epochs", type=int, default=40)
    sp.add_argument("--warmup", type=int, default=20)
    sp.add_argument("--lr", type=float, default=5e-3)
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("rule", help="extract the linear channel's rule")
    sp.add_argument("--model", required=True, help="model checkpoint JSON")
    sp.add_argument("--eval", default=None,
                    help="JSONL split for agreement rate")
    sp.add_argument("--drop-ratio", type=float, default=1e-2)
    common(sp)
    sp.set_defaults(func=cmd_rule)

    sp = sub.add_parser("verify", help="run exhaustive property checks")
    sp.add_argument("--suite", required=True,
                    choices=["te-pi", "ambiguity", "suf-nec",
                             "loss-identities", "all"])
    sp.add_argument("--max-nodes", type=int, default=4)
    sp.add_argument("--classifier", default=None,
                    help="optional single classifier for the te-pi suite")
    common(sp)
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad flags and 0 on --help; keep both.
        return int(e.code or 0)
    started = time.monotonic()
    try:
        code = args.func(args)
    except VALIDATION_ERRORS as e:
        json.dump({"error": type(e).__name__, "message": str(e)},
                  sys.stderr)
        sys.stderr.write("\n")
        return 2
    except GxplainError as e:
        json.dump({"error": type(e).__name__, "message": str(e)},
                  sys.stderr)
        sys.stderr.write("\n")
        return 2
    except Exception as e:  # internal bug
        json.dump({"error": type(e).__name__, "message": str(e),
                   "internal": True}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    outputs = [args.out] if getattr(args, "out", None) else []
    _manifest(args, started, outputs)
    return code


if __name__ == "__main__":
    sys.exit(main())
