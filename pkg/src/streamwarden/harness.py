"""Orchestration: fit white-box artifacts, calibrate thresholds per
(task, model) pair, replay datasets through monitors with optional early
stop, run the prefix feasibility analysis, and assemble metric reports.

Traces fan out to a bounded thread pool; per-trace seeds derive from
(global seed, trace_id) so results are independent of scheduling order.
Fitted artifacts and datasets are shared read-only across replay contexts;
reports are reduced over results in trace order.
"""

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from streamwarden import hybrid as hybrid_mod
from streamwarden.abstraction import (
    BoxAbstraction,
    BoxMonitor,
    ClusterModel,
    QuantitativeMonitor,
    fit_boxes,
    fit_kmeans,
    hidden_state_matrix,
    load_artifact,
)
from streamwarden.errors import ConfigError, DataError, JudgeError
from streamwarden.judge import (
    DEFAULT_CHECKPOINTS,
    JudgeClient,
    MockJudge,
    selfcheck_monitor,
    validate_checkpoints,
)
from streamwarden.metrics import (
    MetricReport,
    Outcome,
    ReturnParams,
    calibrate_threshold,
    compute_report,
)
from streamwarden.monitors import (
    AvgEntropyMonitor,
    AvgLikelihoodMonitor,
    MaxEntropyMonitor,
    MaxLikelihoodMonitor,
    Monitor,
    RandomMonitor,
    ReplayResult,
    derive_seed,
    replay_full,
)
from streamwarden.synth import SynthConfig, generate_dataset
from streamwarden.traces import GenerationTrace, TraceDataset, parse_trace_file, prefix

logger = logging.getLogger("streamwarden.harness")

GREY_BOX_MONITORS = ("avg_entropy", "max_entropy", "avg_likelihood", "max_likelihood")
WHITE_BOX_MONITORS = ("box", "quantitative")
MONITOR_NAMES = ("random", "selfcheck") + GREY_BOX_MONITORS + WHITE_BOX_MONITORS

# Monitors whose score trajectory is a running max: a flag at one prefix
# fraction persists at every later fraction.
MONOTONE_MONITORS = ("max_entropy", "max_likelihood", "quantitative", "selfcheck")

THRESHOLDS_FORMAT = "streamwarden-thresholds"


@dataclass
class RunConfig:
    """One JSON document configures a whole run; every default is echoed
    into reports so runs are self-describing."""

    seed: int = 0
    workers: int = 1
    datasets: dict = field(default_factory=dict)
    monitors: dict = field(default_factory=dict)
    judge: dict = field(default_factory=dict)
    thresholds: dict | str | None = None
    calibration_split: float = 0.5
    early_stop: bool = False
    measure_time: bool = True
    fractions: list = field(default_factory=lambda: [0.25, 0.5, 0.75, 1.0])
    ensembles: list = field(default_factory=list)
    return_params: dict = field(default_factory=dict)
    synth: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)

    KNOWN_KEYS = {
        "seed",
        "workers",
        "datasets",
        "monitors",
        "judge",
        "thresholds",
        "calibration_split",
        "early_stop",
        "measure_time",
        "fractions",
        "ensembles",
        "return_params",
        "synth",
        "report",
    }

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        unknown = set(obj) - cls.KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**obj)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        cfg = cls.from_dict(obj)
        cfg._base_dir = path.parent
        return cfg

    def validate(self) -> None:
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not 0.0 < self.calibration_split < 1.0:
            raise ConfigError("calibration_split must be in (0, 1)")
        for name in self.monitors:
            if name not in MONITOR_NAMES:
                raise ConfigError(f"unknown monitor {name!r}; known: {MONITOR_NAMES}")
        fr = [float(f) for f in self.fractions]
        if not fr or any(not 0.0 < f <= 1.0 for f in fr) or any(
            b <= a for a, b in zip(fr, fr[1:])
        ):
            raise ConfigError(
                f"fractions must be strictly increasing within (0, 1]: {self.fractions}"
            )

    _base_dir: Path = field(default_factory=Path, repr=False)

    def resolve(self, path: str | Path) -> Path:
        path = Path(path)
        return path if path.is_absolute() else self._base_dir / path

    def make_return_params(self) -> ReturnParams:
        return ReturnParams(**self.return_params)

    def echo(self) -> dict:
        """Config echo embedded in every report (paths as given)."""
        return {
            "seed": self.seed,
            "workers": self.workers,
            "datasets": self.datasets,
            "monitors": self.monitors,
            "judge": {k: v for k, v in self.judge.items() if k != "api_key"},
            "calibration_split": self.calibration_split,
            "early_stop": self.early_stop,
            "measure_time": self.measure_time,
            "fractions": self.fractions,
            "return_params": self.return_params,
        }


@dataclass
class PrefixRow:
    fraction: float
    detection_rate: float
    false_alarm_rate: float
    n_unsafe: int
    n_safe: int


@dataclass
class PrefixReport:
    """Per (monitor, fraction) detection and false-alarm rates."""

    monitor: str
    rows: list[PrefixRow]

    def to_json(self) -> dict:
        return {
            "monitor": self.monitor,
            "rows": [
                {
                    "fraction": r.fraction,
                    "detection_rate": r.detection_rate,
                    "false_alarm_rate": r.false_alarm_rate,
                    "n_unsafe": r.n_unsafe,
                    "n_safe": r.n_safe,
                }
                for r in self.rows
            ],
        }


@dataclass
class TraceRun:
    """Replay of one trace under one monitor, or the error that stopped it."""

    trace_id: str
    result: ReplayResult | None = None
    outcome: Outcome | None = None
    error: str | None = None


def pair_key(trace: GenerationTrace) -> str:
    return f"{trace.task}|{trace.model_name}"


def split_calibration(
    dataset: TraceDataset, split: float, seed: int
) -> tuple[list[GenerationTrace], list[GenerationTrace]]:
    """Seeded disjoint calibration/evaluation partition per (task, model)."""
    calibration: list[GenerationTrace] = []
    evaluation: list[GenerationTrace] = []
    by_pair: dict[str, list[GenerationTrace]] = {}
    for trace in dataset:
        by_pair.setdefault(pair_key(trace), []).append(trace)
    for key in sorted(by_pair):
        traces = by_pair[key]
        rng = np.random.default_rng(derive_seed(seed, key, "calibration-split"))
        order = rng.permutation(len(traces))
        n_cal = int(round(split * len(traces)))
        cal_idx = set(int(i) for i in order[:n_cal])
        for i, trace in enumerate(traces):
            (calibration if i in cal_idx else evaluation).append(trace)
    return calibration, evaluation


class BenchmarkRun:
    """Shared state for one configured run: datasets, fitted artifacts,
    judge client, and calibrated thresholds."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.params = config.make_return_params()
        self.datasets: dict[str, TraceDataset] = {}
        self.artifacts: dict[str, object] = {}
        self.judge_client = None
        self.thresholds: dict[str, dict[str, float]] = {}
        self.calibration: list[GenerationTrace] = []
        self.evaluation: list[GenerationTrace] = []
        self.replay_seconds = 0.0

    # -- data loading ------------------------------------------------------

    def load_datasets(self) -> None:
        for role, path in self.config.datasets.items():
            if role not in ("construction", "calibration", "evaluation"):
                raise ConfigError(f"unknown dataset role {role!r}")
            self.datasets[role] = parse_trace_file(self.config.resolve(path))
        if "evaluation" not in self.datasets and not self.config.synth:
            raise ConfigError("config needs datasets.evaluation or a synth section")
        if "evaluation" not in self.datasets:
            self.datasets["evaluation"] = generate_dataset(SynthConfig(**self.config.synth))
        if "calibration" in self.datasets:
            self.calibration = list(self.datasets["calibration"])
            self.evaluation = list(self.datasets["evaluation"])
        else:
            self.calibration, self.evaluation = split_calibration(
                self.datasets["evaluation"], self.config.calibration_split, self.config.seed
            )

    def construction_matrix(self) -> np.ndarray:
        if "construction" in self.datasets:
            safe = [t for t in self.datasets["construction"] if t.label == "SAFE"]
        else:
            safe = [t for t in self.calibration if t.label == "SAFE"]
        if not safe:
            raise DataError("no SAFE traces available as construction data")
        return hidden_state_matrix(safe)

    # -- artifacts ---------------------------------------------------------

    def prepare_artifacts(self, force_fit: bool = False) -> None:
        """Load configured artifacts, or fit them when no path is given.
        force_fit refits even when a path is configured (the fit command,
        where the path is the output destination)."""
        for name in WHITE_BOX_MONITORS:
            if name not in self.config.monitors:
                continue
            params = self.config.monitors[name] or {}
            artifact_path = params.get("artifact")
            if artifact_path and not force_fit:
                artifact = load_artifact(self.config.resolve(artifact_path))
                expected = BoxAbstraction if name == "box" else ClusterModel
                if not isinstance(artifact, expected):
                    raise DataError(
                        f"artifact {artifact_path} is not a {expected.__name__} "
                        f"(needed by monitor {name!r})"
                    )
                self.artifacts[name] = artifact
            else:
                self.artifacts[name] = self.fit_artifact(name, params)

    def fit_artifact(self, name: str, params: dict):
        mat = self.construction_matrix()
        if name == "box":
            return fit_boxes(
                mat,
                n_boxes=int(params.get("n_boxes", 1)),
                epsilon=float(params.get("epsilon", 0.05)),
                seed=self.config.seed,
            )
        return fit_kmeans(
            mat,
            k=int(params.get("k", 8)),
            seed=self.config.seed,
            z_normalize=bool(params.get("z_normalize", False)),
        )

    # -- judge --------------------------------------------------------------

    def make_judge(self):
        if self.judge_client is not None:
            return self.judge_client
        judge_cfg = dict(self.config.judge)
        if judge_cfg.pop("mock", False):
            self.judge_client = MockJudge(
                markers=tuple(judge_cfg.get("mock_markers", ("@@ANOMALY@@",))),
                latency=float(judge_cfg.get("mock_latency", 0.0)),
            )
        else:
            judge_cfg.pop("mock_markers", None)
            judge_cfg.pop("mock_latency", None)
            self.judge_client = JudgeClient(**judge_cfg)
        return self.judge_client

    # -- monitors ------------------------------------------------------------

    def check_capability(self, name: str, traces: list[GenerationTrace]) -> None:
        if name in WHITE_BOX_MONITORS:
            if not any(t.hidden_dim is not None for t in traces):
                raise DataError(
                    f"monitor {name!r} needs hidden states but dataset "
                    f"{self.datasets['evaluation'].source_path!r} has none"
                )

    def make_monitor(self, name: str, trace: GenerationTrace) -> Monitor:
        params = self.config.monitors.get(name) or {}
        if name == "random":
            return RandomMonitor(
                flag_probability=float(params.get("flag_probability", 0.5)),
                seed=derive_seed(self.config.seed, trace.trace_id, "random"),
            )
        if name == "avg_entropy":
            return AvgEntropyMonitor(residual_bins=params.get("residual_bins"))
        if name == "max_entropy":
            return MaxEntropyMonitor(residual_bins=params.get("residual_bins"))
        if name == "avg_likelihood":
            return AvgLikelihoodMonitor()
        if name == "max_likelihood":
            return MaxLikelihoodMonitor()
        if name == "box":
            return BoxMonitor(self.artifacts["box"])
        if name == "quantitative":
            return QuantitativeMonitor(self.artifacts["quantitative"])
        raise ConfigError(f"no streaming monitor named {name!r}")

    def fixed_threshold(self, name: str) -> float | None:
        """Thresholds that are defined by the monitor itself, not calibrated."""
        params = self.config.monitors.get(name) or {}
        if name == "random":
            return 1.0 - float(params.get("flag_probability", 0.5))
        if name == "selfcheck":
            return 0.5
        if "threshold" in params:
            return float(params["threshold"])
        return None

    # -- replay ---------------------------------------------------------------

    def replay_trace(
        self, name: str, trace: GenerationTrace, threshold: float, early_stop: bool
    ) -> TraceRun:
        start = time.perf_counter()
        try:
            if name == "selfcheck":
                params = self.config.monitors.get(name) or {}
                sc = selfcheck_monitor(
                    trace,
                    self.make_judge(),
                    checkpoints=params.get("checkpoints", list(DEFAULT_CHECKPOINTS)),
                    perspective=params.get("perspective", "toxicity"),
                    early_stop=early_stop,
                )
                result = ReplayResult(
                    verdict=sc.verdict,
                    steps_observed=sc.steps_observed,
                    tokens_saved=sc.tokens_saved,
                    network_seconds=sc.network_seconds,
                    n_indeterminate=sc.n_indeterminate,
                    n_queries=sc.n_queries,
                )
            else:
                monitor = self.make_monitor(name, trace)
                result = replay_full(monitor, trace, threshold, early_stop=early_stop)
        except JudgeError as exc:
            return TraceRun(trace_id=trace.trace_id, error=f"judge: {exc}")
        except DataError as exc:
            return TraceRun(trace_id=trace.trace_id, error=str(exc))
        # Timed at the replay-unit boundary so per-step cost x steps accounts
        # for (nearly) the whole replay wall time.
        result.seconds = (time.perf_counter() - start) if self.config.measure_time else 0.0
        verdict = result.verdict
        outcome = Outcome(
            label=trace.label,
            flagged=verdict.flagged,
            score=verdict.peak_score,
            per_step_seconds=result.per_step_seconds if self.config.measure_time else 0.0,
            trace_id=trace.trace_id,
        )
        return TraceRun(trace_id=trace.trace_id, result=result, outcome=outcome)

    def replay_many(
        self, name: str, traces: list[GenerationTrace], thresholds: dict[str, float] | float,
        early_stop: bool
    ) -> list[TraceRun]:
        def job(trace: GenerationTrace) -> TraceRun:
            t = (
                thresholds
                if isinstance(thresholds, float)
                else thresholds[pair_key(trace)]
            )
            return self.replay_trace(name, trace, t, early_stop)

        t0 = time.perf_counter()
        if self.config.workers == 1:
            runs = [job(t) for t in traces]
        else:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                runs = list(pool.map(job, traces))
        self.replay_seconds += time.perf_counter() - t0
        return runs

    # -- calibration -----------------------------------------------------------

    def calibrate_monitor(self, name: str) -> dict[str, float]:
        """Per (task, model) thresholds maximizing Youden's J on the
        calibration split; pools all pairs when a pair lacks a class."""
        fixed = self.fixed_threshold(name)
        pairs = sorted({pair_key(t) for t in self.calibration + self.evaluation})
        if fixed is not None:
            return {p: fixed for p in pairs}
        runs = self.replay_many(name, self.calibration, float("inf"), early_stop=False)
        scored_by_pair: dict[str, list[tuple[float, str]]] = {}
        all_scored: list[tuple[float, str]] = []
        for trace, run in zip(self.calibration, runs):
            if run.outcome is None:
                continue
            item = (run.outcome.score, trace.label)
            scored_by_pair.setdefault(pair_key(trace), []).append(item)
            all_scored.append(item)
        thresholds: dict[str, float] = {}
        for p in pairs:
            scored = scored_by_pair.get(p, [])
            try:
                thresholds[p] = calibrate_threshold(scored) if scored else None
            except DataError:
                thresholds[p] = None
            if thresholds[p] is None:
                logger.warning(
                    "pair %s lacks both classes in the calibration split for %s; "
                    "falling back to pooled calibration",
                    p,
                    name,
                )
                thresholds[p] = calibrate_threshold(all_scored)
        return thresholds

    def resolve_thresholds(self, names: list[str]) -> None:
        configured = self.config.thresholds
        if isinstance(configured, str):
            configured = load_thresholds(self.config.resolve(configured))
        pairs = sorted({pair_key(t) for t in self.calibration + self.evaluation})
        for name in names:
            if isinstance(configured, dict) and name in configured:
                value = configured[name]
                if isinstance(value, dict):
                    self.thresholds[name] = {p: float(value[p]) for p in value}
                else:
                    self.thresholds[name] = {p: float(value) for p in pairs}
            else:
                self.thresholds[name] = self.calibrate_monitor(name)

    # -- metrics -----------------------------------------------------------------

    def report_for(self, name: str, runs: list[TraceRun]) -> MetricReport:
        outcomes = [r.outcome for r in runs if r.outcome is not None]
        errored = [r for r in runs if r.error is not None]
        for r in errored:
            logger.warning("trace %s errored under %s: %s", r.trace_id, name, r.error)
        if not outcomes:
            if errored and all(r.error.startswith("judge:") for r in errored):
                raise JudgeError(
                    f"judge endpoint failed for all {len(errored)} traces "
                    f"under {name!r}; first: {errored[0].error}"
                )
            raise DataError(f"every trace errored under monitor {name!r}")
        extras: dict = {
            "thresholds": self.thresholds.get(name, {}),
            "tokens_saved_total": sum(
                r.result.tokens_saved for r in runs if r.result is not None
            ),
        }
        if name == "selfcheck":
            extras["network_seconds_total"] = sum(
                r.result.network_seconds for r in runs if r.result is not None
            )
            extras["n_indeterminate"] = sum(
                r.result.n_indeterminate for r in runs if r.result is not None
            )
        return compute_report(
            monitor=name,
            outcomes=outcomes,
            params=self.params,
            n_errored=len(errored),
            config=self.monitor_echo(name),
            extras=extras,
        )

    def monitor_echo(self, name: str) -> dict:
        echo = dict(self.config.monitors.get(name) or {})
        if name == "box" and "box" in self.artifacts:
            echo.setdefault("n_boxes", len(self.artifacts["box"].boxes))
            echo.setdefault("epsilon", self.artifacts["box"].epsilon)
        if name == "quantitative" and "quantitative" in self.artifacts:
            echo.setdefault("k", self.artifacts["quantitative"].k)
        echo["aggregation"] = {
            "box": "out-of-box fraction",
            "quantitative": "running max of min-center distance",
        }.get(name, "streaming")
        return echo


def run_benchmark(config: RunConfig) -> dict[str, MetricReport]:
    """Full evaluation loop: per-monitor replay of the evaluation split,
    metrics per monitor. Deterministic given seeds and the mock judge."""
    run = BenchmarkRun(config)
    run.load_datasets()
    run.prepare_artifacts()
    names = [n for n in MONITOR_NAMES if n in config.monitors]
    if not names:
        raise ConfigError("no monitors configured")
    for name in names:
        run.check_capability(name, run.evaluation)
    run.resolve_thresholds(names)
    reports: dict[str, MetricReport] = {}
    for name in names:
        runs = run.replay_many(
            name, run.evaluation, run.thresholds[name], early_stop=config.early_stop
        )
        reports[name] = run.report_for(name, runs)
    return reports


def pilot_prefix_analysis(
    config: RunConfig, monitors: list[str] | None = None
) -> dict[str, PrefixReport]:
    """Prefix feasibility analysis: replay prefix(t, f) for every configured
    fraction, reporting detection and false-alarm rates per fraction."""
    run = BenchmarkRun(config)
    run.load_datasets()
    run.prepare_artifacts()
    names = monitors or [n for n in MONITOR_NAMES if n in config.monitors]
    if not names:
        raise ConfigError("no monitors configured")
    fractions = [float(f) for f in config.fractions]
    run.resolve_thresholds(names)
    out: dict[str, PrefixReport] = {}
    for name in names:
        run.check_capability(name, run.evaluation)
        rows = []
        for fraction in fractions:
            prefixed = [prefix(t, fraction) for t in run.evaluation]
            runs = run.replay_many(name, prefixed, run.thresholds[name], early_stop=False)
            n_unsafe = n_safe = hit = fa = 0
            for trace, tr in zip(prefixed, runs):
                if tr.outcome is None:
                    continue
                if trace.label == "UNSAFE":
                    n_unsafe += 1
                    hit += tr.outcome.flagged
                else:
                    n_safe += 1
                    fa += tr.outcome.flagged
            rows.append(
                PrefixRow(
                    fraction=fraction,
                    detection_rate=hit / n_unsafe if n_unsafe else 0.0,
                    false_alarm_rate=fa / n_safe if n_safe else 0.0,
                    n_unsafe=n_unsafe,
                    n_safe=n_safe,
                )
            )
        out[name] = PrefixReport(monitor=name, rows=rows)
    return out


def early_stop_replay(trace: GenerationTrace, monitor: Monitor, threshold: float) -> ReplayResult:
    """Replay halting at the first score above threshold; tokens_saved is
    the number of steps never observed (0 when the trace never flags)."""
    return replay_full(monitor, trace, threshold, early_stop=True)


def run_ensembles(config: RunConfig) -> dict[str, MetricReport]:
    """Replay member monitors and combine their per-trace flags per the
    configured hybridization strategies."""
    if not config.ensembles:
        raise ConfigError("no ensembles configured")
    specs = [hybrid_mod.EnsembleSpec(**spec) for spec in config.ensembles]
    run = BenchmarkRun(config)
    run.load_datasets()
    run.prepare_artifacts()
    member_names = sorted(
        {m for spec in specs if spec.strategy != "bagging" for m in spec.members}
    )
    for name in member_names:
        if name not in MONITOR_NAMES:
            raise ConfigError(f"ensemble member {name!r} is not a known monitor")
        if name not in config.monitors:
            raise ConfigError(
                f"ensemble member {name!r} must be configured under monitors"
            )
        run.check_capability(name, run.evaluation)
    for spec in specs:
        if spec.strategy == "bagging" and spec.base not in config.monitors:
            raise ConfigError(
                f"bagging base {spec.base!r} must be configured under monitors"
            )
    run.resolve_thresholds(member_names)
    member_runs = {
        name: run.replay_many(
            name, run.evaluation, run.thresholds[name], early_stop=False
        )
        for name in member_names
    }
    reports: dict[str, MetricReport] = {}
    for spec in specs:
        if spec.strategy == "bagging":
            reports[spec.name] = _run_bagging(run, spec)
            continue
        outcomes = []
        n_errored = 0
        for idx, trace in enumerate(run.evaluation):
            flags = []
            for m in spec.members:
                tr = member_runs[m][idx]
                if tr.outcome is None:
                    flags = None
                    break
                flags.append(tr.outcome.flagged)
            if flags is None:
                n_errored += 1
                continue
            if spec.strategy == "majority_vote":
                flagged = hybrid_mod.majority_vote(flags)
                score = sum(flags) / len(flags)
            else:
                flagged = hybrid_mod.random_selection(flags, spec.seed, trace.trace_id)
                score = 1.0 if flagged else 0.0
            outcomes.append(
                Outcome(
                    label=trace.label,
                    flagged=flagged,
                    score=score,
                    per_step_seconds=None,
                    trace_id=trace.trace_id,
                )
            )
        reports[spec.name] = compute_report(
            monitor=spec.name,
            outcomes=outcomes,
            params=run.params,
            n_errored=n_errored,
            config={"strategy": spec.strategy, "members": spec.members, "tie_rule": "unsafe"},
        )
    return reports


def _run_bagging(run: BenchmarkRun, spec) -> MetricReport:
    base_params = dict(run.config.monitors.get(spec.base) or {})
    base_params.pop("artifact", None)
    base_params.pop("threshold", None)
    instances = hybrid_mod.bagging_fit(
        spec.base,
        run.construction_matrix(),
        n_instances=spec.n_instances,
        subsample_fraction=spec.subsample_fraction,
        seed=run.config.seed if spec.seed == 0 else spec.seed,
        with_replacement=spec.with_replacement,
        **base_params,
    )
    run.resolve_thresholds([spec.base])
    thresholds = run.thresholds[spec.base]
    outcomes = []
    for trace in run.evaluation:
        threshold = thresholds[pair_key(trace)]
        flags = [
            replay_full(hybrid_mod.monitor_for_artifact(inst), trace, threshold).verdict.flagged
            for inst in instances
        ]
        outcomes.append(
            Outcome(
                label=trace.label,
                flagged=hybrid_mod.majority_vote(flags),
                score=sum(flags) / len(flags),
                per_step_seconds=None,
                trace_id=trace.trace_id,
            )
        )
    return compute_report(
        monitor=spec.name,
        outcomes=outcomes,
        params=run.params,
        config={
            "strategy": "bagging",
            "base": spec.base,
            "n_instances": spec.n_instances,
            "subsample_fraction": spec.subsample_fraction,
            "with_replacement": spec.with_replacement,
            "tie_rule": "unsafe",
        },
    )


def save_thresholds(thresholds: dict[str, dict[str, float]], path: str | Path) -> None:
    doc = {"format": THRESHOLDS_FORMAT, "version": 1, "monitors": thresholds}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_thresholds(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"thresholds file not found: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("format") != THRESHOLDS_FORMAT:
        raise ConfigError(f"{path} is not a thresholds document")
    return doc["monitors"]


def calibrate_all(config: RunConfig) -> dict[str, dict[str, float]]:
    """Calibrate every configured monitor on the calibration split."""
    run = BenchmarkRun(config)
    run.load_datasets()
    run.prepare_artifacts()
    names = [n for n in MONITOR_NAMES if n in config.monitors]
    if not names:
        raise ConfigError("no monitors configured")
    for name in names:
        run.check_capability(name, run.calibration)
    run.resolve_thresholds(names)
    return run.thresholds
