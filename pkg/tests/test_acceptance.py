"""Acceptance criteria, one test per criterion.

Each test prints ``PASS`` or ``FAIL`` with the measured value and the
threshold; the lines are repeated in the pytest terminal summary.
"""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, SMALL
from _gradcheck import kge_worst_error, mlp_worst_error
from _oracles import oracle_rank, random_rank_instance
from weldkge.cli import main
from weldkge.evaluation import TIE_MODES, compute_metrics, evaluate, make_grouping, nrmse, rank_tail
from weldkge.hyperbolic import exp_map0, givens_reflect, hyp_distance, log_map0, mobius_add
from weldkge.ingest import prune_columns
from weldkge.kg import BuildOptions, build_kg, check_leakage, fit_schemes, parse_kg, split_table
from weldkge.kernels import get_backend
from weldkge.models import KINDS
from weldkge.synth import SynthConfig, generate
from weldkge.training import TrainConfig, grid_search, train


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"C{n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(f"criterion {line}")
    print(line)
    assert ok, line


def _backends():
    out = ["numpy"]
    try:
        get_backend("numba")
        out.append("numba")
    except RuntimeError:
        pass
    return out


def test_c1_gradients():
    start = time.perf_counter()
    worst = {f"{k}/{b}": kge_worst_error(k, 100, b) for k in KINDS for b in _backends()}
    worst["MLP"] = mlp_worst_error(100)
    elapsed = time.perf_counter() - start
    top = max(worst, key=worst.get)
    verdict(1, worst[top] <= 1e-4 and elapsed < 60,
            f"worst relative error {worst[top]:.2e} ({top}) <= 1e-4 over 100 instances each; {elapsed:.1f}s < 60s")


def test_c2_hyperbolic():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    n, dim = 1000, 8
    c = rng.uniform(0.2, 3.0, (n, 1))

    def ball(scale=0.9):
        d = rng.normal(size=(n, dim))
        return d / np.linalg.norm(d, axis=1, keepdims=True) * rng.uniform(0, scale, (n, 1)) / np.sqrt(c)

    x, y, z = ball(), ball(), ball()
    d = rng.normal(size=(n, dim))
    v = d / np.linalg.norm(d, axis=1, keepdims=True) * rng.uniform(0, 2.0, (n, 1)) / np.sqrt(c)
    errs = {
        "log(exp(v))": np.abs(log_map0(exp_map0(v, c), c) - v).max(),
        "exp(log(x))": np.abs(exp_map0(log_map0(x, c), c) - x).max(),
        "0+x": np.abs(mobius_add(np.zeros_like(x), x, c) - x).max(),
        "x+0": np.abs(mobius_add(x, np.zeros_like(x), c) - x).max(),
        "-x+x": np.abs(mobius_add(-x, x, c)).max(),
        "d(x,x)": np.abs(hyp_distance(x, x, c)).max(),
        "d(x,y)-d(y,x)": np.abs(hyp_distance(x, y, c) - hyp_distance(y, x, c)).max(),
    }
    angles = rng.uniform(-np.pi, np.pi, (n, dim // 2))
    errs["reflect twice"] = np.abs(givens_reflect(givens_reflect(x, angles), angles) - x).max()
    tri = hyp_distance(x, z, c) - hyp_distance(x, y, c) - hyp_distance(y, z, c)
    elapsed = time.perf_counter() - start
    worst = max(errs, key=errs.get)
    ok = errs[worst] <= 1e-9 and tri.max() <= 1e-9 and np.all(hyp_distance(x, y, c) >= 0) and elapsed < 10
    verdict(2, ok, f"worst law error {errs[worst]:.1e} ({worst}) <= 1e-9; triangle slack {tri.max():.1e}; "
                   f"{elapsed:.2f}s < 10s")


def test_c3_rank_oracle():
    mismatches = 0
    for seed in range(1000):
        p, h, r, t, cands, known = random_rank_instance(seed)
        for ties in TIE_MODES:
            mismatches += rank_tail(p, h, r, t, cands, known, ties) != oracle_rank(p, h, r, t, cands, known, ties)
    verdict(3, mismatches == 0, f"{mismatches} mismatches over 1000 instances x {len(TIE_MODES)} tie modes")


@pytest.fixture(scope="module")
def planted():
    """Criterion 5's run and its drop-literals twin on the same split."""
    ds = prune_columns(generate(SynthConfig(**SMALL))[0])
    parts = split_table(ds, (0.8, 0.1, 0.1), 0)
    schemes, _ = fit_schemes(parts[0], BuildOptions())
    full = build_kg(*parts, schemes)
    bare = build_kg(*parts, schemes, options=BuildOptions(include_literals=False))
    cfg = TrainConfig(kind="TransE", dim=32, epochs=500, select_question="Q1", seed=0)
    out = {"schemes": schemes, "builds": (full, bare), "parts": parts}
    for name, res in (("full", full), ("bare", bare)):
        start = time.perf_counter()
        params, report = train(res.kg, cfg, backend="numpy" if os.environ.get("WELDKGE_DISABLE_NUMBA") else None)
        out[name] = (res.kg, params, report, time.perf_counter() - start)
    return out


def _eval_all(kg, params, schemes):
    grouping = make_grouping(kg.vocab.entities[i] for i in kg.vocab.entities_of("carbody"))
    return {(q, s): evaluate(params, kg, q, schemes["diameter"], grouping, split=s)
            for q in ("Q1", "Q2") for s in ("valid", "test")}


def test_c4_metric_identities(planted):
    reps = []
    for name in ("full", "bare"):
        kg, params, _, _ = planted[name]
        reps.extend(_eval_all(kg, params, planted["schemes"]).values())
    bad = [r for r in reps if r.mrr < r.hits_at_1 or (r.hits_groupby3 is not None and r.hits_groupby3 < r.hits_at_1)]
    m = compute_metrics([1, 2, 4])
    exact = abs(m["hits_at_1"] - 1 / 3) <= 1e-12 and abs(m["mrr"] - 0.58333333333333333) <= 1e-12
    perfect = nrmse([0, 1, 2, 3], [0, 1, 2, 3], planted["schemes"]["diameter"])
    verdict(4, not bad and exact and perfect == 0,
            f"{len(bad)}/{len(reps)} runs break MRR>=Hits@1 or GroupBy3>=Hits@1; "
            f"compute_metrics([1,2,4]) = ({m['hits_at_1']:.12f}, {m['mrr']:.12f}); perfect nrmse {perfect}")


def test_c5_planted_recovery(planted):
    kg, params, report, seconds = planted["full"]
    mrr = evaluate(params, kg, "Q1", planted["schemes"]["diameter"], split="valid").mrr
    verdict(5, mrr >= 0.9 and seconds < 300 and report.epochs_run <= 500,
            f"Q1 validation MRR {mrr:.4f} >= 0.9 (best epoch {report.best_epoch}, {report.epochs_run} epochs); "
            f"{seconds:.1f}s < 300s")


def test_c6_literal_ablation(planted):
    hits = {}
    for name in ("full", "bare"):
        kg, params, _, _ = planted[name]
        hits[name] = evaluate(params, kg, "Q1", planted["schemes"]["diameter"], split="test").hits_at_1
    drop = hits["full"] - hits["bare"]
    verdict(6, drop >= 0.2, f"test Q1 Hits@1 {hits['full']:.4f} -> {hits['bare']:.4f} without literals; "
                            f"drop {drop:.4f} >= 0.2")


def test_c7_leakage(planted):
    counts = []
    builds = list(planted["builds"])
    for seed in range(3):
        ds = prune_columns(generate(SynthConfig(**{**SMALL, "seed": seed, "noise_rate": 0.1}))[0])
        parts = split_table(ds, (0.7, 0.15, 0.15), seed)
        builds.append(build_kg(*parts, fit_schemes(parts[0], BuildOptions())[0]))
    for res in builds:
        kg = res.kg
        train_set = {tuple(t) for t in kg.split("train").tolist()}
        targets = {kg.target_relation("Q1"), kg.target_relation("Q2")}
        held = [tuple(t) for s in ("valid", "test") for t in kg.split(s).tolist() if t[1] in targets]
        leaked = sum(t in train_set for t in held)
        counts.append(leaked + len(check_leakage(kg)) + res.report["leakage_violations"])
    verdict(7, sum(counts) == 0, f"{sum(counts)} leaked target triples across {len(builds)} builds")


def _pipeline(root: Path) -> dict[str, bytes]:
    synth = ["--set", "n_rows=300", "--set", "n_machines=4", "--set", "n_programs=6", "--set", "n_carbodies=12"]
    assert main(["synth", str(root / "data")] + synth) == 0
    assert main(["build", str(root / "data/welds.csv"), str(root / "data/schema.csv"), str(root / "kg")]) == 0
    (root / "train.cfg").write_text("kind = RotatE\ndim = 16\nepochs = 20\n")
    assert main(["train", str(root / "kg"), str(root / "train.cfg"), str(root / "run"), "--no-timestamp"]) == 0
    for q in ("Q1", "Q2"):
        assert main(["eval", str(root / "kg"), str(root / "run/best.ckpt"), str(root / "run"), "--question", q,
                     "--no-timestamp", "--queries", str(root / f"run/queries_{q}.tsv")]) == 0
    files = [p for p in sorted(root.rglob("*")) if p.is_file()]
    return {str(p.relative_to(root)): p.read_bytes() for p in files}


def test_c8_reproducible_pipeline(tmp_path):
    a, b = _pipeline(tmp_path / "a"), _pipeline(tmp_path / "b")
    differ = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    verdict(8, not differ and len(a) > 10, f"{len(a)} files compared, {len(differ)} differ {differ[:3]}")


def test_c9_protocol(tmp_path):
    start = time.perf_counter()
    synth = ["--set", "n_rows=300", "--set", "n_machines=4", "--set", "n_programs=6", "--set", "n_carbodies=12"]
    assert main(["synth", str(tmp_path / "data")] + synth) == 0
    assert main(["build", str(tmp_path / "data/welds.csv"), str(tmp_path / "data/schema.csv"),
                 str(tmp_path / "kg")]) == 0
    (tmp_path / "train.cfg").write_text("kind = TransE\ndim = 16\nepochs = 20\n")
    runs = []
    for seed in range(5):
        run = tmp_path / f"seed{seed}"
        assert main(["train", str(tmp_path / "kg"), str(tmp_path / "train.cfg"), str(run), "--seed", str(seed)]) == 0
        runs.append(str(run))
    assert main(["compare", str(tmp_path / "kg"), *runs, str(tmp_path / "table.txt")]) == 0
    rows = {line.split("  ")[0].strip(): line for line in (tmp_path / "table.txt").read_text().splitlines()}
    needed = ["Q1 Hits@1", "Q1 Hits@3", "Q1 Hits@10", "Q1 MRR", "Q1 nrmse",
              "Q2 Hits@1", "Q2 MRR", "Q2 Hits@GroupBy3", "time_train"]
    table_ok = rows.get("runs", "").split()[-1] == "5" and all(k in rows and "±" in rows[k] for k in needed)

    kg = parse_kg(tmp_path / "kg")
    best_cfg, table, _, best_report = grid_search(kg, TrainConfig(kind="TransE", epochs=20, eval_every=5),
                                                  dims=(16, 32, 64, 128, 256))
    mrrs = {row["dim"]: row["valid_mrr"] for row in table}
    argmax = max(sorted(mrrs), key=lambda d: (mrrs[d], -d))
    grid_ok = sorted(mrrs) == [16, 32, 64, 128, 256] and best_cfg.dim == argmax \
        and best_report.best_mrr == mrrs[argmax]
    elapsed = time.perf_counter() - start
    verdict(9, table_ok and grid_ok and elapsed < 1200,
            f"compare table over 5 seeds {'ok' if table_ok else 'malformed'}; grid picked dim {best_cfg.dim}, "
            f"argmax {argmax} of {{{', '.join(f'{d}: {m:.4f}' for d, m in mrrs.items())}}}; {elapsed:.1f}s < 1200s")


RELEASED_KG = os.environ.get("WELDKGE_RELEASED_KG")


@pytest.mark.skipif(not RELEASED_KG or not Path(RELEASED_KG).is_dir(),
                    reason="set WELDKGE_RELEASED_KG to a directory holding the released TSV graph")
def test_c10_released_graph(tmp_path):
    (tmp_path / "train.cfg").write_text("kind = TransE\ndim = 128\nepochs = 50\n")
    assert main(["train", RELEASED_KG, str(tmp_path / "train.cfg"), str(tmp_path / "run")]) == 0
    reports = {}
    for q in ("Q1", "Q2"):
        assert main(["eval", RELEASED_KG, str(tmp_path / "run/best.ckpt"), str(tmp_path / "run"),
                     "--question", q]) == 0
        reports[q] = json.loads((tmp_path / f"run/eval_{q}.json").read_text())
    ok = all(reports["Q1"].get(k) is not None for k in ("hits_at_1", "mrr", "nrmse")) \
        and reports["Q2"].get("hits_groupby3") is not None
    verdict(10, ok, "TransE-128 trained and evaluated end to end; all four metrics reported")
