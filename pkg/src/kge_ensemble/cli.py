"""Command-line surface: train, eval, answer, gen-queries.

Exit codes: 0 success, 2 configuration error, 3 data error (missing or
malformed files, incompatible checkpoints), 4 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .checkpoint import Checkpoint, load_checkpoint
from .config import OPTIMIZERS, STRATEGIES, build_train_config
from .ensemble import SnapshotEnsemble, make_snape_scorer
from .errors import (
    CompatError,
    ConfigError,
    ContractError,
    DivergenceError,
    EvalError,
    GenerationError,
    ParseError,
)
from .evaluation import SplitEvaluator
from .kg import dump_vocab, load_dataset
from .models import MODEL_KINDS, make_scorer
from .queries import (
    QUERY_TYPES,
    BeamConfig,
    aggregate_scores,
    evaluate_queries,
    generate_queries,
    read_queries,
    write_queries,
)
from .training import run_training

log = logging.getLogger(__name__)


def _scorer_for(checkpoint: Checkpoint):
    """Snapshot checkpoints score through the weighted ensemble; for plain,
    swa, and aswa checkpoints the base matrices are the thing to score."""
    if isinstance(checkpoint.ensemble, SnapshotEnsemble):
        return make_snape_scorer(checkpoint.ensemble)
    return make_scorer(checkpoint.state)


def _check_compat(checkpoint: Checkpoint, dataset) -> None:
    st = checkpoint.state
    if st.n_entities != dataset.n_entities or st.n_relations != dataset.n_relations_total:
        raise CompatError(
            f"checkpoint holds {st.n_entities} entities / {st.n_relations} relation rows, "
            f"dataset needs {dataset.n_entities} / {dataset.n_relations_total}"
        )


def cmd_train(args: argparse.Namespace) -> int:
    overrides = {
        "dataset_dir": args.dataset,
        "model": args.model,
        "dim": args.dim,
        "epochs": args.epochs,
        "optimizer": args.optimizer,
        "lr": args.lr,
        "batch_size": args.batch_size,
        "strategy": args.strategy,
        "swa_start": args.swa_start,
        "seed": args.seed,
        "smoothing": args.smoothing,
        "val_every": args.val_every,
        "val_sample": args.val_sample,
        "snape_cycles": args.snape_cycles,
        "snape_defer": args.snape_defer,
        "out_dir": args.out,
        "plots": False if args.no_plots else None,
    }
    cfg = build_train_config(args.config, overrides)
    manifest = run_training(cfg)
    print(
        json.dumps(
            {"seed": manifest.seed, "final": manifest.final, "checkpoints": manifest.checkpoints},
            sort_keys=True,
        )
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset)
    _check_compat(checkpoint, dataset)
    triples = getattr(dataset, args.split)
    if triples.shape[0] == 0:
        raise CompatError(f"split {args.split!r} is empty")
    from .kg import build_filter

    evaluator = SplitEvaluator(
        triples,
        build_filter(dataset),
        dataset.n_entities,
        inverse_offset=dataset.n_relations if dataset.reciprocal else None,
    )
    report = evaluator.evaluate(_scorer_for(checkpoint))
    print(report.to_json())
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
        evaluator.write_ranks_csv(report, out / "ranks.csv")
        if not args.no_plots:
            from .plots import plot_rank_histogram

            plot_rank_histogram(report.ranks, out / "ranks.png", title=f"{args.split} ranks")
    return 0


def cmd_answer(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    queries = read_queries(args.queries)
    st = checkpoint.state
    for q in queries:
        if max(q.anchors) >= st.n_entities or max(q.relations) >= st.n_relations:
            raise CompatError("query ids exceed the checkpoint's vocabulary")
    cfg = BeamConfig(beam_width=args.beam_width, tnorm=args.tnorm)
    score_fn = _scorer_for(checkpoint)
    reports = evaluate_queries(queries, score_fn, cfg)
    per_type = {qtype: rep.to_dict() for qtype, rep in sorted(reports.items())}
    print(json.dumps(per_type, sort_keys=True))
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "per_type.json").write_text(
            json.dumps(per_type, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        if args.ranks_csv:
            _write_query_ranks(queries, score_fn, cfg, out / "query_ranks.csv")
        if not args.no_plots:
            from .plots import plot_qtype_mrr

            plot_qtype_mrr(per_type, out / "per_type.png", title=Path(args.queries).name)
    return 0


def _write_query_ranks(queries, score_fn, cfg, path: Path) -> None:
    import csv

    from .evaluation import filtered_rank

    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["qtype", "anchors", "relations", "gold", "rank"])
        for q in queries:
            scores = aggregate_scores(q, score_fn, cfg)
            golds = sorted(q.answers)
            for g in golds:
                rank = filtered_rank(scores, g, [o for o in golds if o != g])
                w.writerow(
                    [q.qtype, " ".join(map(str, q.anchors)), " ".join(map(str, q.relations)), g, rank]
                )


def cmd_gen_queries(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.dataset)
    qtypes = QUERY_TYPES if args.types == "all" else tuple(args.types.split(","))
    for qt in qtypes:
        if qt not in QUERY_TYPES:
            raise ConfigError(f"unknown query type {qt!r}; choose from {QUERY_TYPES}")
    queries = []
    for i, qt in enumerate(qtypes):
        queries.extend(generate_queries(dataset, qt, args.count, seed=args.seed + i))
    write_queries(queries, args.out)
    print(json.dumps({"queries": len(queries), "types": list(qtypes), "out": str(args.out)}, sort_keys=True))
    return 0


def cmd_dump_vocab(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.dataset)
    dump_vocab(dataset, args.out)
    print(json.dumps({"entities": dataset.n_entities, "relations": dataset.n_relations, "out": str(args.out)}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kge", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model with an ensemble strategy")
    t.add_argument("--dataset", help="directory with train.txt/valid.txt/test.txt")
    t.add_argument("--config", help="flat TOML config file; flags override it")
    t.add_argument("--model", choices=MODEL_KINDS)
    t.add_argument("--dim", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--optimizer", choices=OPTIMIZERS)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--strategy", choices=STRATEGIES)
    t.add_argument("--swa-start", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--smoothing", type=float)
    t.add_argument("--val-every", type=int)
    t.add_argument("--val-sample", type=int, help="validation triples per epoch eval (0 = all)")
    t.add_argument("--snape-cycles", type=int)
    t.add_argument("--snape-defer", type=float)
    t.add_argument("--out", help="run directory (default runs/<name>)")
    t.add_argument("--no-plots", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="filtered link-prediction metrics for a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("dataset")
    e.add_argument("--split", choices=("train", "valid", "test"), default="test")
    e.add_argument("--out-dir", help="also write report.json, ranks.csv, ranks.png here")
    e.add_argument("--no-plots", action="store_true")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("answer", help="answer multi-hop queries with a checkpoint")
    a.add_argument("checkpoint")
    a.add_argument("queries", help="JSONL query file from gen-queries")
    a.add_argument("-k", "--beam-width", type=int, default=10)
    a.add_argument("--tnorm", choices=("product", "goedel"), default="product")
    a.add_argument("--out-dir", help="also write per_type.json (+ csv/figure) here")
    a.add_argument("--ranks-csv", action="store_true", help="write per-query gold ranks CSV")
    a.add_argument("--no-plots", action="store_true")
    a.set_defaults(func=cmd_answer)

    g = sub.add_parser("gen-queries", help="sample multi-hop queries from a dataset")
    g.add_argument("--dataset", required=True)
    g.add_argument("--types", default="all", help="comma list of query types or 'all'")
    g.add_argument("--count", type=int, default=500)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_queries)

    d = sub.add_parser("dump-vocab", help="write the id maps of a dataset as JSON")
    d.add_argument("--dataset", required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_dump_vocab)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, CompatError, GenerationError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 4
    except (ContractError, EvalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
