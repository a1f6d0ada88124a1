"""Acceptance suite: one test per criterion, each at its stated tolerance,
printing one [PASS]/[FAIL] line per criterion (visible with pytest -s or in
captured output)."""

import itertools
import json
import math
import shutil
import subprocess
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from streamwarden.abstraction import BoxMonitor, fit_boxes, fit_kmeans
from streamwarden.harness import RunConfig, pilot_prefix_analysis
from streamwarden.hybrid import bagging_fit, bagging_predict, majority_vote, random_selection
from streamwarden.metrics import (
    Outcome,
    auc,
    availability_cost,
    residual_hazard,
    safety_gain,
)
from streamwarden.monitors import (
    AvgEntropyMonitor,
    AvgLikelihoodMonitor,
    MaxEntropyMonitor,
    MaxLikelihoodMonitor,
    avg_entropy_score,
    avg_likelihood_score,
    derive_seed,
    max_entropy_score,
    max_likelihood_score,
    random_monitor,
    replay,
)
from streamwarden.synth import SynthConfig, generate_dataset
from streamwarden.traces import (
    parse_trace_file,
    prefix,
    token_entropy,
    traces_equal,
    validate_trace,
    write_trace_file,
)

from conftest import make_random_trace
from test_abstraction import exhaustive_kmeans_sse
from test_metrics import pairwise_auc

S, U = "SAFE", "UNSAFE"

REPO_ROOT = Path(__file__).resolve().parent.parent


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    print(f"[PASS] {name}")


def test_metric_identity_suite():
    with criterion("metric identity suite (1000 randomized outcome sets, 1e-12)"):
        started = time.perf_counter()
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(1, 80))
            outcomes = [
                Outcome(
                    label=U if rng.random() < rng.uniform(0.05, 0.95) else S,
                    flagged=bool(rng.random() < 0.5),
                    score=float(rng.random()),
                )
                for _ in range(n)
            ]
            prevalence = sum(1 for o in outcomes if o.label == U) / n
            assert abs(safety_gain(outcomes) + residual_hazard(outcomes) - prevalence) < 1e-12
            # AC against the direct return-function evaluation
            direct = -sum(
                -2.0 if (o.label == S and o.flagged) else 0.2 for o in outcomes
            ) / n
            assert abs(availability_cost(outcomes) - direct) < 1e-12
        perfect = [Outcome(label=U, flagged=True, score=1.0) for _ in range(3)] + [
            Outcome(label=S, flagged=False, score=0.0) for _ in range(7)
        ]
        assert safety_gain(perfect) == pytest.approx(0.3, abs=1e-12)
        assert residual_hazard(perfect) == 0.0
        assert availability_cost(perfect) == pytest.approx(-0.2, abs=1e-12)
        flag_all_safe = [Outcome(label=S, flagged=True, score=1.0) for _ in range(10)]
        assert availability_cost(flag_all_safe) == pytest.approx(2.0, abs=1e-12)
        assert time.perf_counter() - started < 10.0


def test_auc_oracle_equivalence():
    with criterion("AUC oracle equivalence (200 random sets, exact; worked example 0.75)"):
        rng = np.random.default_rng(1)
        for _ in range(200):
            n = int(rng.integers(2, 201))
            labels = [S, U] + [S if rng.random() < 0.5 else U for _ in range(n - 2)]
            scores = (rng.integers(0, 12, size=n) / 11.0).tolist()
            scored = list(zip(scores, labels))
            assert auc(scored) == pytest.approx(pairwise_auc(scored), abs=1e-12)
        assert auc([(0.1, S), (0.4, S), (0.35, U), (0.8, U)]) == pytest.approx(0.75, abs=1e-12)


def test_white_box_oracles():
    with criterion("white-box oracles (hull containment, exhaustive kmeans, inertia)"):
        rng = np.random.default_rng(2)
        # hull contains 100% of construction rows
        for trial in range(20):
            rows = (rng.normal(size=(50, 4)) * rng.uniform(0.5, 5)).astype(np.float32)
            abstraction = fit_boxes(rows, n_boxes=1 + trial % 3, epsilon=0.05, seed=trial)
            assert abstraction.contains_batch(rows).all()
        # 4-point instance: exhaustive optimum
        four = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0]])
        model = fit_kmeans(four, k=2, seed=0)
        assert model.inertia == pytest.approx(exhaustive_kmeans_sse(four, 2), abs=1e-9)
        # <=12-point well-separated instances: exhaustive optimum
        for n, k in ((10, 2), (12, 2), (9, 3), (12, 3)):
            local = np.random.default_rng(n * 7 + k)
            centers = local.normal(size=(k, 2)) * 60
            points = np.vstack(
                [centers[i % k] + local.normal(scale=0.3, size=2) for i in range(n)]
            )
            fitted = fit_kmeans(points, k=k, seed=1)
            assert fitted.inertia == pytest.approx(
                exhaustive_kmeans_sse(points, k), rel=1e-9, abs=1e-9
            )
        # inertia non-increasing per iteration across 100 seeded runs
        for seed in range(100):
            pts = np.random.default_rng(seed).normal(size=(40, 4))
            history = fit_kmeans(pts, k=5, seed=seed).inertia_history
            assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))


def test_streaming_invariants():
    with criterion("streaming invariants (500 traces: monotone, incremental 1e-9, max>=avg)"):
        rng = np.random.default_rng(3)
        fractions = (0.2, 0.4, 0.6, 0.8, 1.0)
        for t in range(500):
            trace = make_random_trace(rng, f"t{t}", hidden_dim=None)
            steps = trace.steps
            # max >= avg for both families
            assert max_entropy_score(steps) >= avg_entropy_score(steps) - 1e-15
            assert max_likelihood_score(steps) >= avg_likelihood_score(steps) - 1e-15
            # max-aggregated monitors monotone under prefix extension
            for fn in (max_entropy_score, max_likelihood_score):
                values = [fn(prefix(trace, f).steps) for f in fractions]
                assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
            # incremental matches batch recomputation to 1e-9 at every step
            monitors = (
                (AvgEntropyMonitor(), avg_entropy_score),
                (MaxEntropyMonitor(), max_entropy_score),
                (AvgLikelihoodMonitor(), avg_likelihood_score),
                (MaxLikelihoodMonitor(), max_likelihood_score),
            )
            for monitor, batch in monitors:
                monitor.reset()
                for j, step in enumerate(steps):
                    assert abs(monitor.observe(step) - batch(steps[: j + 1])) < 1e-9


def _pilot_rates(position: str) -> dict:
    cfg = RunConfig.from_dict(
        {
            "seed": 17,
            "monitors": {"max_likelihood": {}},
            "measure_time": False,
            "fractions": [0.25, 0.5, 0.75, 1.0],
            "synth": {
                "n_traces": 400,
                "prevalence": 0.5,
                "seed": 23,
                "min_steps": 16,
                "max_steps": 48,
                "anomaly_position": position,
                "store_hidden": False,
            },
        }
    )
    report = pilot_prefix_analysis(cfg)["max_likelihood"]
    return {row.fraction: row.detection_rate for row in report.rows}


def test_pilot_protocol_reproduction():
    with criterion("pilot protocol (early anomalies caught at 25%, late ones not)"):
        started = time.perf_counter()
        early = _pilot_rates("early")
        assert early[1.0] > 0.5  # anomaly is detectable at all
        assert early[0.25] >= 0.9 * early[1.0]
        late = _pilot_rates("late")
        assert late[1.0] > 0.5
        assert late[0.25] <= 0.1
        assert time.perf_counter() - started < 60.0


def test_hybridization():
    with criterion("hybridization (bagging identity on 1k traces, vote laws, seeded pick)"):
        rng = np.random.default_rng(4)
        dataset = generate_dataset(
            SynthConfig(
                n_traces=1000,
                prevalence=0.4,
                seed=29,
                min_steps=6,
                max_steps=18,
                hidden_dim=4,
            )
        )
        construction = np.vstack(
            [
                np.asarray(step.hidden, dtype=np.float64)
                for trace in dataset
                if trace.label == S
                for step in trace.steps
            ]
        )
        base = fit_boxes(construction, n_boxes=1, epsilon=0.05, seed=31)
        instances = bagging_fit(
            "box",
            construction,
            n_instances=5,
            subsample_fraction=1.0,
            seed=31,
            n_boxes=1,
            epsilon=0.05,
        )
        threshold = 0.3
        for trace in dataset:
            base_flag = replay(BoxMonitor(base), trace, threshold).flagged
            assert bagging_predict(instances, trace, threshold) is base_flag
        # majority-vote tie rule and permutation invariance, exhaustively
        assert majority_vote([True, False]) is True
        for flags in itertools.product([False, True], repeat=3):
            expected = sum(flags) >= 2
            for perm in itertools.permutations(flags):
                assert majority_vote(list(perm)) is expected
        # seeded random selection reproducible across runs
        for i in range(200):
            first = random_selection([True, False, True], seed=5, trace_id=f"t{i}")
            second = random_selection([True, False, True], seed=5, trace_id=f"t{i}")
            assert first is second


def test_run_determinism(tmp_path):
    with criterion("determinism (two runs, same config/seeds/mock judge: byte-identical)"):
        config = {
            "seed": 37,
            "monitors": {
                "random": {"flag_probability": 0.5},
                "selfcheck": {"perspective": "toxicity"},
                "box": {"n_boxes": 1, "epsilon": 0.05},
                "quantitative": {"k": 4},
                "avg_entropy": {},
                "max_entropy": {},
                "avg_likelihood": {},
                "max_likelihood": {},
            },
            "judge": {"mock": True},
            "measure_time": False,
            "workers": 2,
            "synth": {
                "n_traces": 150,
                "prevalence": 0.4,
                "seed": 41,
                "min_steps": 6,
                "max_steps": 16,
                "hidden_dim": 4,
            },
            "report": {"format": "json"},
        }
        (tmp_path / "config.json").write_text(json.dumps(config))
        outs = []
        for name in ("a.json", "b.json"):
            proc = subprocess.run(
                [
                    sys.executable,
                    "-m",
                    "streamwarden",
                    "run",
                    "--config",
                    str(tmp_path / "config.json"),
                    "--out",
                    str(tmp_path / name),
                ],
                capture_output=True,
                text=True,
                timeout=300,
            )
            assert proc.returncode == 0, proc.stderr
            outs.append((tmp_path / name).read_bytes())
        assert outs[0] == outs[1]


def test_random_monitor_calibration():
    with criterion("random monitor AUC in [0.45, 0.55] on 10k balanced traces"):
        dataset = generate_dataset(
            SynthConfig(
                n_traces=10_000,
                prevalence=0.5,
                seed=42,
                min_steps=2,
                max_steps=4,
                store_hidden=False,
                store_entropy=False,
            )
        )
        scored = []
        for trace in dataset:
            verdict = random_monitor(
                trace.steps, 0.5, seed=derive_seed(42, trace.trace_id, "random")
            )
            scored.append((verdict.scores[0], trace.label))
        value = auc(scored)
        assert 0.45 <= value <= 0.55


EXTRACTOR_CLI = REPO_ROOT / "extractor" / "dist" / "src" / "cli.js"


@pytest.mark.skipif(
    not EXTRACTOR_CLI.exists() or shutil.which("node") is None,
    reason="secondary extractor not built (primary criteria run without it)",
)
def test_secondary_extractor_conformance(tmp_path):
    with criterion("extractor conformance (validate, entropy 1e-6, lossless round-trip)"):
        prompts = tmp_path / "prompts.txt"
        prompts.write_text("the sky is\nonce upon a\nnumbers are\n")
        labels = tmp_path / "labels.json"
        job = {
            "model": "tiny-lm",
            "prompt_file": str(prompts),
            "layer_index": -1,
            "top_k": 0,  # 0 = full vocabulary
            "max_new_tokens": 12,
            "temperature": 0.0,
            "label_file": str(labels),
            "output_path": str(tmp_path / "extracted.jsonl"),
            "seed": 7,
        }
        labels.write_text(
            json.dumps({f"tiny-lm-{i:04d}": "SAFE" if i % 2 == 0 else "UNSAFE" for i in range(3)})
        )
        job_path = tmp_path / "job.json"
        job_path.write_text(json.dumps(job))
        proc = subprocess.run(
            ["node", str(EXTRACTOR_CLI), "--job", str(job_path)],
            capture_output=True,
            text=True,
            timeout=300,
        )
        assert proc.returncode == 0, proc.stderr
        dataset = parse_trace_file(tmp_path / "extracted.jsonl")
        assert len(dataset) == 3
        for trace in dataset:
            assert validate_trace(trace) == []
            for step in trace.steps:
                assert step.topk is not None and step.entropy is not None
                probs = [p for _, p in step.topk]
                assert abs(sum(probs) - 1.0) <= 1e-6  # full-vocabulary storage
                recomputed = token_entropy(probs, max(0.0, 1.0 - sum(probs)))
                assert abs(step.entropy - recomputed) <= 1e-6
        round_trip = tmp_path / "rt.jsonl"
        write_trace_file(dataset, round_trip)
        again = parse_trace_file(round_trip)
        for a, b in zip(dataset, again):
            assert traces_equal(a, b)
