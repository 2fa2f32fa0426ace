"""Command-line pipeline: synth, build, train, eval, compare, ablate.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import shutil
import sys
import time
from pathlib import Path
from typing import Sequence

from . import baselines, kg as kgmod, synth
from .checkpoint import read_arrays
from .errors import DataError, NumericError
from .evaluation import QUESTIONS, TIE_MODES, RankingReport, evaluate, load_grouping, make_grouping, \
    save_grouping, summarize
from .ingest import load_schema, load_table, prune_columns, select_features, write_schema, write_table
from .literals import load_schemes, save_schemes
from .models import DIM_GRID, load_checkpoint, save_checkpoint
from .training import TrainConfig, grid_search, parse_config, train

log = logging.getLogger("weldkge")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
BASELINES = ("kge", "mlp", "kge-mlp")
SPLIT_FILES = {p: f"split_{p}.csv" for p in kgmod.PARTITIONS}
# keys only the MLP baselines read from a shared config file
_MLP_ONLY = {"hidden"}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _csv_numbers(text: str, cast=float) -> list:
    try:
        return [cast(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _read_lines(path: str | None) -> list[str]:
    if path is None:
        return []
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.readlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _train_config(args) -> TrainConfig:
    lines = [ln for ln in _read_lines(args.config) if ln.split("#", 1)[0].split("=", 1)[0].strip()
             not in _MLP_ONLY]
    cfg = parse_config(lines + list(args.set or []))
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _mlp_config(args) -> baselines.MlpConfig:
    """MLP settings come from the same file; KGE-only keys are ignored."""
    fields = {f.name: f for f in dataclasses.fields(baselines.MlpConfig)}
    kge_keys = {f.name for f in dataclasses.fields(TrainConfig)}
    values = {}
    for lineno, raw in enumerate(_read_lines(args.config) + list(args.set or []), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = (s.strip() for s in line.partition("="))
        if not sep:
            raise DataError(f"config line {lineno}: expected key = value")
        if key == "hidden":
            values[key] = tuple(_csv_numbers(val, int))
        elif key in fields:
            try:
                values[key] = type(fields[key].default)(val)
            except ValueError:
                raise DataError(f"config line {lineno}: bad value {val!r} for {key}") from None
        elif key not in kge_keys:
            raise DataError(f"config line {lineno}: unknown key {key!r}")
    if getattr(args, "seed", None) is not None:
        values["seed"] = args.seed
    return baselines.MlpConfig(**values)


def _dump_json(obj, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


@dataclasses.dataclass
class KgContext:
    path: Path
    kg: kgmod.KnowledgeGraph
    schemes: dict
    grouping: dict | None

    @classmethod
    def load(cls, path: str, grouping: str | None = None) -> "KgContext":
        p = Path(path)
        if not p.is_dir():
            raise DataError(f"graph directory {path} does not exist")
        graph = kgmod.parse_kg(p)
        schemes = load_schemes(p / "bins.json") if (p / "bins.json").exists() else {}
        gpath = Path(grouping) if grouping else p / "grouping.tsv"
        if grouping and not gpath.exists():
            raise DataError(f"grouping file {grouping} does not exist")
        groups = load_grouping(gpath) if gpath.exists() else None
        return cls(p, graph, schemes, groups)

    def table(self, split: str):
        schema_path, table_path = self.path / "schema.csv", self.path / SPLIT_FILES[split]
        if not schema_path.exists() or not table_path.exists():
            raise DataError(f"{self.path} lacks the {split} table needed by the MLP baseline")
        return load_table(table_path, load_schema(schema_path))

    def n_stages(self) -> int:
        rep = self.path / "build_report.json"
        if rep.exists():
            with open(rep, encoding="utf-8") as fh:
                return int((json.load(fh).get("options") or {}).get("n_stages", 3))
        return 3


def _question_sidecars(ctx: KgContext, question: str):
    scheme = ctx.schemes.get(kgmod.DIAMETER_KEY)
    if question == "Q1" and scheme is None:
        raise DataError("Q1 needs the diameter scheme (bins.json) in the graph directory")
    if question == "Q2" and ctx.grouping is None:
        raise DataError("Q2 needs a carbody grouping: pass --grouping or keep grouping.tsv in the graph directory")
    return scheme, ctx.grouping


def _run_label(header: dict) -> str:
    kind = header.get("kind")
    if kind == baselines.MLP_KIND:
        model = header.get("model", "MLP")
        return f"KGE-MLP({header.get('kge_kind')})" if model == "KGE-MLP" else "MLP"
    return f"{kind}-{header.get('dim')}"


def evaluate_checkpoint(ctx: KgContext, ckpt: Path, question: str, split: str = "test", ties: str = "realistic",
                        filtered: bool = True, candidates: str = "typed", threads: int = 1) -> RankingReport:
    """Evaluate any checkpoint written by ``train`` (KGE, MLP or KGE-MLP)."""
    scheme, grouping = _question_sidecars(ctx, question)
    header, _ = read_arrays(ckpt)
    if header.get("kind") != baselines.MLP_KIND:
        params = load_checkpoint(ckpt, ctx.kg.n_entities, ctx.kg.n_relations)
        rep = evaluate(params, ctx.kg, question, scheme, grouping, split=split, ties=ties, filtered=filtered,
                       candidates=candidates, threads=threads)
    elif header.get("model") == "KGE-MLP":
        if header.get("question") != question:
            raise DataError(f"{ckpt} was trained for {header.get('question')}, not {question}")
        kge = load_checkpoint(ckpt.parent / header["kge"], ctx.kg.n_entities, ctx.kg.n_relations)
        hybrid = baselines.KgeMlp(kge, baselines.load_mlp(ckpt), question)
        rep = evaluate(hybrid, ctx.kg, question, scheme, grouping, split=split, ties=ties, filtered=filtered,
                       candidates=candidates, threads=threads)
    else:
        if header.get("question") != question:
            raise DataError(f"{ckpt} was trained for {header.get('question')}, not {question}")
        enc = baselines.OneHotEncoding(**header["encoding"])
        enc.blocks = [(name, list(vals)) for name, vals in enc.blocks]
        params = baselines.load_mlp(ckpt)
        X, y, spots = baselines.one_hot_encode(ctx.table(split), ctx.schemes, enc)
        start = time.perf_counter()
        probs = baselines.mlp_predict(params, X)
        rep = baselines.classification_report(probs, y, spots, enc.labels, question, scheme, grouping, ties,
                                              elapsed=time.perf_counter() - start)
    rep.config["model"] = _run_label(header)
    return rep


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    cfg = synth.parse_synth_config(_read_lines(args.config) + list(args.set or []))
    ds, truth = synth.generate(cfg)
    paths = synth.write_dataset(ds, truth, args.out_dir)
    print(f"wrote {len(ds)} rows to {paths['table']}")
    return 0


def cmd_build(args) -> int:
    ds = load_table(args.csv, load_schema(args.schema))
    ds = prune_columns(ds)
    if args.features:
        ds = select_features(ds, [c for c in args.features.split(",") if c.strip()])
    mapping = kgmod.load_mapping(args.mapping)
    options = kgmod.BuildOptions(n_stages=args.n_stages, literal_strategy=args.literal_strategy,
                                 literal_bins=args.literal_bins, diameter_width=args.diameter_width,
                                 include_literals=not args.drop_literals)
    train_ds, valid_ds, test_ds = kgmod.split_table(ds, args.ratios, args.seed)
    schemes, skipped = kgmod.fit_schemes(train_ds, options)
    result = kgmod.build_kg(train_ds, valid_ds, test_ds, schemes, mapping, options)
    out = Path(args.out_dir)
    kgmod.serialize_kg(result.kg, out)
    save_schemes(schemes, out / "bins.json")
    carbodies = [result.kg.vocab.entities[i] for i in result.kg.vocab.entities_of("carbody")]
    save_grouping(make_grouping(carbodies), out / "grouping.tsv")
    write_schema(ds.columns, out / "schema.csv")
    for name, part in zip(kgmod.PARTITIONS, (train_ds, valid_ds, test_ds)):
        write_table(part, out / SPLIT_FILES[name])
    report = dict(result.report)
    report.update({"pruned_columns": dict(sorted(ds.pruned.items())), "skipped_literal_features": skipped,
                   "split_seed": args.seed, "ratios": list(args.ratios)})
    kgmod.save_report(report, out / "build_report.json")
    print(f"built graph: {report['n_entities']} entities, {report['n_relations']} relations, "
          f"{report['n_triples']} triples, leakage violations {report['leakage_violations']}")
    return 0


def _train_kge(graph, args, out: Path) -> dict:
    cfg = _train_config(args)
    stamps = not args.no_timestamp
    if args.grid:
        best_cfg, table, params, report = grid_search(graph, cfg, args.dims)
        with open(out / "grid.tsv", "w", encoding="utf-8") as fh:
            fh.write("dim\tvalid_mrr\tbest_epoch\n")
            for row in table:
                fh.write(f"{row['dim']}\t{row['valid_mrr']:.6f}\t{row['best_epoch']}\n")
        print(f"grid selected dim {best_cfg.dim}")
    else:
        params, report = train(graph, cfg)
    save_checkpoint(params, out / "best.ckpt")
    d = report.to_dict(stamps)
    d["label"] = f"{params.kind}-{params.dim}"
    _dump_json(d, out / "train_report.json")
    print(f"best validation MRR {report.best_mrr:.4f} at epoch {report.best_epoch}")
    return d


def _train_baseline(ctx: KgContext, args, out: Path) -> dict:
    if args.question is None:
        raise UsageError("--question is required for the MLP baselines")
    cfg = _mlp_config(args)
    start = time.perf_counter()
    if args.model == "mlp":
        if args.question == "Q1":
            _question_sidecars(ctx, "Q1")
        train_ds = ctx.table("train")
        enc = baselines.fit_encoding(train_ds, ctx.schemes, args.question, ctx.n_stages())
        X, y, _ = baselines.one_hot_encode(train_ds, ctx.schemes, enc)
        params, losses = baselines.mlp_train(X, y, cfg, len(enc.labels))
        header = {"model": "MLP", "question": args.question, "encoding": dataclasses.asdict(enc)}
        baselines.save_mlp(params, out / "best.ckpt", header)
    else:
        if args.kge is None:
            raise UsageError("--kge CHECKPOINT is required for kge-mlp")
        kge = load_checkpoint(args.kge, ctx.kg.n_entities, ctx.kg.n_relations)
        model, losses = baselines.kge_mlp_train(ctx.kg, kge, args.question, cfg)
        shutil.copyfile(args.kge, out / "kge.ckpt")
        model.mlp.extra.pop("seconds", None)
        baselines.save_mlp(model.mlp, out / "best.ckpt", {"model": "KGE-MLP", "kge": "kge.ckpt"})
    seconds = time.perf_counter() - start
    label = "MLP" if args.model == "mlp" else f"KGE-MLP({kge.kind})"
    d = {"label": label, "losses": losses, "seconds": seconds if not args.no_timestamp else None,
         "config": cfg.to_dict(), "question": args.question}
    _dump_json(d, out / "train_report.json")
    print(f"trained {label}: final loss {losses[-1]:.4f}")
    return d


def cmd_train(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.model == "kge":
        if not Path(args.kg_dir).is_dir():
            raise DataError(f"graph directory {args.kg_dir} does not exist")
        _train_kge(kgmod.parse_kg(args.kg_dir), args, out)
    else:
        _train_baseline(KgContext.load(args.kg_dir), args, out)
    return 0


def cmd_eval(args) -> int:
    ctx = KgContext.load(args.kg_dir, args.grouping)
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise DataError(f"checkpoint {ckpt} does not exist")
    rep = evaluate_checkpoint(ctx, ckpt, args.question, args.split, args.ties, not args.unfiltered,
                              args.candidates, args.threads)
    out = Path(args.out_file)
    if out.is_dir():
        out = out / f"eval_{args.question}.json"
    rep.save(out, timestamps=not args.no_timestamp)
    if args.queries:
        rep.save_queries(args.queries)
    extra = f"nrmse {rep.nrmse:.4f}" if rep.nrmse is not None else f"Hits@GroupBy3 {rep.hits_groupby3:.4f}"
    print(f"{args.question}: Hits@1 {rep.hits_at_1:.4f}  MRR {rep.mrr:.4f}  {extra}")
    return 0


METRIC_ROWS = (
    ("Hits@1", lambda r: r.hits_at_1),
    ("Hits@3", lambda r: r.hits_at_k.get(3)),
    ("Hits@10", lambda r: r.hits_at_k.get(10)),
    ("MRR", lambda r: r.mrr),
    ("Hits@GroupBy3", lambda r: r.hits_groupby3),
    ("nrmse", lambda r: r.nrmse),
    ("time_test", lambda r: r.time_test),
)


def format_table(columns: dict[str, list[dict]], timestamps: bool = True) -> str:
    """Render ``{model: [run metrics, ...]}`` as rows of ``mean ± std`` cells."""
    names = list(columns)
    keys = []
    for runs in columns.values():
        for run in runs:
            keys.extend(k for k in run if k not in keys)
    lines = [["metric"] + names, ["runs"] + [str(len(columns[n])) for n in names]]
    for key in keys:
        if not timestamps and key.endswith(("time_test", "time_train")):
            row = [key] + ["-" for _ in names]
        else:
            row = [key]
            for n in names:
                vals = [run.get(key) for run in columns[n] if run.get(key) is not None]
                if not vals:
                    row.append("-")
                    continue
                mean, std = summarize(vals)
                row.append(f"{mean:.4f} ± {std:.4f}")
        lines.append(row)
    widths = [max(len(r[i]) for r in lines) for i in range(len(names) + 1)]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in lines) + "\n"


def _run_metrics(ctx: KgContext, ckpt: Path, train_seconds, args, questions=QUESTIONS) -> dict:
    row = {}
    for q in questions:
        try:
            _question_sidecars(ctx, q)
            rep = evaluate_checkpoint(ctx, ckpt, q, args.split, args.ties, threads=args.threads)
        except DataError as exc:
            log.info("skipping %s for %s: %s", q, ckpt, exc)
            continue
        for name, get in METRIC_ROWS:
            v = get(rep)
            if v is not None:
                row[f"{q} {name}"] = v
    row["time_train"] = train_seconds
    return row


def cmd_compare(args) -> int:
    ctx = KgContext.load(args.kg_dir, args.grouping)
    columns: dict[str, list[dict]] = {}
    for run in args.run_dirs:
        run = Path(run)
        ckpt, rep_path = run / "best.ckpt", run / "train_report.json"
        if not ckpt.exists() or not rep_path.exists():
            raise DataError(f"{run} is not a training run directory (needs best.ckpt and train_report.json)")
        with open(rep_path, encoding="utf-8") as fh:
            train_rep = json.load(fh)
        header, _ = read_arrays(ckpt)
        questions = (train_rep["question"],) if "question" in train_rep else QUESTIONS
        columns.setdefault(_run_label(header), []).append(
            _run_metrics(ctx, ckpt, train_rep.get("seconds"), args, questions))
    table = format_table(columns, timestamps=not args.no_timestamp)
    Path(args.out_file).write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def cmd_ablate(args) -> int:
    """Train and evaluate per seed with literals and, with --drop-literals, without (marked †)."""
    ctx = KgContext.load(args.kg_dir, args.grouping)
    base = _train_config(args)
    out = Path(args.out_dir)
    variants = [("full", ctx.kg, "")]
    if args.drop_literals:
        variants.append(("no_literals", kgmod.drop_literals(ctx.kg), "†"))
    columns: dict[str, list[dict]] = {}
    for name, graph, mark in variants:
        vctx = dataclasses.replace(ctx, kg=graph)
        for seed in args.seeds:
            run = out / name / f"seed{seed}"
            run.mkdir(parents=True, exist_ok=True)
            params, report = train(graph, dataclasses.replace(base, seed=seed))
            save_checkpoint(params, run / "best.ckpt")
            report.save(run / "train_report.json", timestamps=not args.no_timestamp)
            label = f"{params.kind}-{params.dim}{mark}"
            columns.setdefault(label, []).append(_run_metrics(vctx, run / "best.ckpt", report.seconds, args))
    table = format_table(columns, timestamps=not args.no_timestamp)
    (out / "ablation.txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weldkge", description="Knowledge-graph embeddings for welding quality data.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common_train(sp):
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
        sp.add_argument("--no-timestamp", action="store_true", help="mask wall-clock timings in reports")

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("config", nargs="?", help="key = value synth config (defaults if omitted)")
    s.add_argument("out_dir")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
    s.set_defaults(func=cmd_synth)

    b = sub.add_parser("build", help="prune, split, bin and convert a table into a graph")
    b.add_argument("csv")
    b.add_argument("schema")
    b.add_argument("out_dir")
    b.add_argument("--mapping", help="column=relation_name lines")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--ratios", type=_csv_numbers, default=[0.8, 0.1, 0.1], help="train,valid,test shares")
    b.add_argument("--features", help="comma-separated columns to keep")
    b.add_argument("--n-stages", type=int, default=3)
    b.add_argument("--literal-strategy", choices=("equal_frequency", "equal_width"), default="equal_frequency")
    b.add_argument("--literal-bins", type=int, default=10)
    b.add_argument("--diameter-width", type=float, default=0.5)
    b.add_argument("--drop-literals", action="store_true", help="emit no literal triples")
    b.set_defaults(func=cmd_build)

    t = sub.add_parser("train", help="train a model (or a dim grid) on a built graph")
    t.add_argument("kg_dir")
    t.add_argument("config", help="key = value training config")
    t.add_argument("out_dir")
    t.add_argument("--grid", action="store_true", help="sweep embedding sizes and keep the best")
    t.add_argument("--dims", type=lambda x: _csv_numbers(x, int), default=list(DIM_GRID))
    t.add_argument("--seed", type=int, help="override the config seed")
    t.add_argument("--model", choices=BASELINES, default="kge")
    t.add_argument("--question", choices=QUESTIONS, help="target question for the MLP baselines")
    t.add_argument("--kge", help="frozen KGE checkpoint for kge-mlp")
    common_train(t)
    t.set_defaults(func=cmd_train)

    def eval_flags(sp):
        sp.add_argument("--grouping", help="carbody grouping file (default: grouping.tsv in the graph directory)")
        sp.add_argument("--split", choices=("valid", "test"), default="test")
        sp.add_argument("--ties", choices=TIE_MODES, default="realistic")
        sp.add_argument("--threads", type=int, default=1, help="evaluation worker threads")

    e = sub.add_parser("eval", help="rank held-out triples and report metrics")
    e.add_argument("kg_dir")
    e.add_argument("checkpoint")
    e.add_argument("out_file", help="report path, or a directory for eval_<question>.json")
    e.add_argument("--question", choices=QUESTIONS, required=True)
    e.add_argument("--unfiltered", action="store_true", help="keep other known tails in the ranking")
    e.add_argument("--candidates", choices=("typed", "all"), default="typed")
    e.add_argument("--queries", help="also write spot/true/predicted/rank lines here")
    e.add_argument("--no-timestamp", action="store_true")
    eval_flags(e)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", help="tabulate runs as mean ± std per model")
    c.add_argument("kg_dir")
    c.add_argument("run_dirs", nargs="+")
    c.add_argument("out_file")
    c.add_argument("--no-timestamp", action="store_true")
    eval_flags(c)
    c.set_defaults(func=cmd_compare)

    a = sub.add_parser("ablate", help="train with and without literal triples")
    a.add_argument("kg_dir")
    a.add_argument("config")
    a.add_argument("out_dir")
    a.add_argument("--drop-literals", action="store_true", help="add the variant without literals")
    a.add_argument("--seeds", type=lambda x: _csv_numbers(x, int), default=[0])
    common_train(a)
    eval_flags(a)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"weldkge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"weldkge: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, json.JSONDecodeError) as exc:
        print(f"weldkge: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
