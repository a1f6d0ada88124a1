"""Generation trace data model: per-token observables, JSONL parsing and
serialization, validation, entropy helper, and prefix slicing.

A trace file is UTF-8 text with one JSON object per line. Required keys:
trace_id, task, model_name, prompt, steps, label, oracle_meta. Unknown keys
are preserved on round-trip. Parsed datasets are immutable by convention and
safe for concurrent reads.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from streamwarden.errors import DataError, TraceParseError

TASKS = ("question_answering", "text_continuation", "machine_translation", "code_generation")
LABELS = ("SAFE", "UNSAFE")

TOPK_SUM_SLACK = 1e-6


@dataclass
class TokenStep:
    """Observables recorded for one generated token.

    chosen_logprob is the natural-log probability of the emitted token
    (always <= 0); entropy is in nats. topk is an ordered list of
    (token_id, probability) pairs sorted by probability descending. hidden
    is the monitored layer's activation vector (float32), or None for
    traces extracted without internal access.
    """

    token_id: int
    token_text: str
    chosen_logprob: float
    entropy: float | None = None
    topk: list[tuple[int, float]] | None = None
    hidden: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


@dataclass
class GenerationTrace:
    """One prompt, its token-by-token generation record, and a safety label."""

    trace_id: str
    task: str
    model_name: str
    prompt: str
    steps: list[TokenStep]
    label: str
    oracle_meta: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def hidden_dim(self) -> int | None:
        for step in self.steps:
            if step.hidden is not None:
                return int(len(step.hidden))
        return None

    def text(self, n_steps: int | None = None) -> str:
        """Concatenated token texts of the first n_steps (all when None)."""
        steps = self.steps if n_steps is None else self.steps[:n_steps]
        return "".join(s.token_text for s in steps)


@dataclass
class TraceDataset:
    """An ordered collection of traces loaded from one source."""

    traces: list[GenerationTrace]
    source_path: str = ""

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    @property
    def hidden_dim(self) -> int | None:
        for trace in self.traces:
            dim = trace.hidden_dim
            if dim is not None:
                return dim
        return None


def token_entropy(
    probabilities, residual_mass: float = 0.0, residual_bins: int | None = None
) -> float:
    """Shannon entropy in nats of a (possibly truncated) token distribution.

    The listed probabilities must together with residual_mass sum to 1
    within 1e-6. Residual mass is treated as a single bucket unless a
    residual bin count is given, in which case it is spread uniformly over
    that many bins (-r*ln(r/n)). Zero-probability terms contribute 0.
    """
    probs = np.asarray(list(probabilities), dtype=np.float64)
    if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
        raise DataError("probabilities must lie in [0, 1]")
    if not 0.0 <= residual_mass <= 1.0 + TOPK_SUM_SLACK:
        raise DataError(f"residual_mass {residual_mass} outside [0, 1]")
    total = float(probs.sum()) + residual_mass
    if not (1.0 - TOPK_SUM_SLACK) <= total <= (1.0 + TOPK_SUM_SLACK):
        raise DataError(f"probabilities + residual_mass sum to {total}, expected 1")
    nonzero = probs[probs > 0.0]
    h = float(-(nonzero * np.log(nonzero)).sum()) if nonzero.size else 0.0
    if residual_mass > 0.0:
        bins = 1 if residual_bins is None else int(residual_bins)
        if bins < 1:
            raise DataError(f"residual_bins must be >= 1, got {residual_bins}")
        h += -residual_mass * math.log(residual_mass / bins)
    return max(h, 0.0)


def validate_trace(trace: GenerationTrace) -> list[str]:
    """Check every trace and step invariant; returns violation descriptions.

    An empty list means the trace is valid. Violations are data, not
    failures: each names the offending field and step index.
    """
    violations: list[str] = []
    if not trace.trace_id:
        violations.append("trace_id is empty")
    if trace.task not in TASKS:
        violations.append(f"task {trace.task!r} not one of {TASKS}")
    if trace.label not in LABELS:
        violations.append(f"label {trace.label!r} must be exactly 'SAFE' or 'UNSAFE'")
    if not trace.steps:
        violations.append("steps is empty")
    hidden_dim: int | None = None
    for idx, step in enumerate(trace.steps):
        if step.token_id < 0:
            violations.append(f"step {idx}: token_id {step.token_id} is negative")
        if step.chosen_logprob > 0.0:
            violations.append(f"step {idx}: chosen_logprob {step.chosen_logprob} > 0")
        if step.entropy is not None and step.entropy < 0.0:
            violations.append(f"step {idx}: entropy {step.entropy} is negative")
        if step.topk is not None:
            probs = [p for _, p in step.topk]
            if any(p < 0.0 or p > 1.0 for p in probs):
                violations.append(f"step {idx}: topk probability outside [0, 1]")
            if sum(probs) > 1.0 + TOPK_SUM_SLACK:
                violations.append(f"step {idx}: topk probabilities sum to {sum(probs)} > 1")
            if any(probs[i] < probs[i + 1] for i in range(len(probs) - 1)):
                violations.append(f"step {idx}: topk not sorted by probability descending")
        if step.hidden is not None:
            if hidden_dim is None:
                hidden_dim = len(step.hidden)
            elif len(step.hidden) != hidden_dim:
                violations.append(
                    f"step {idx}: hidden dim {len(step.hidden)} != {hidden_dim} seen earlier"
                )
    return violations


def step_from_json(obj: dict) -> TokenStep:
    known = {"token_id", "token_text", "chosen_logprob", "entropy", "topk", "hidden"}
    for key in ("token_id", "token_text", "chosen_logprob"):
        if key not in obj:
            raise TraceParseError(f"step missing required key {key!r}")
    topk = None
    if obj.get("topk") is not None:
        topk = [(int(t), float(p)) for t, p in obj["topk"]]
    hidden = None
    if obj.get("hidden") is not None:
        hidden = np.asarray(obj["hidden"], dtype=np.float32)
    return TokenStep(
        token_id=int(obj["token_id"]),
        token_text=str(obj["token_text"]),
        chosen_logprob=float(obj["chosen_logprob"]),
        entropy=None if obj.get("entropy") is None else float(obj["entropy"]),
        topk=topk,
        hidden=hidden,
        extra={k: v for k, v in obj.items() if k not in known},
    )


def step_to_json(step: TokenStep) -> dict:
    obj: dict = {
        "token_id": step.token_id,
        "token_text": step.token_text,
        "chosen_logprob": step.chosen_logprob,
    }
    if step.entropy is not None:
        obj["entropy"] = step.entropy
    if step.topk is not None:
        obj["topk"] = [[t, p] for t, p in step.topk]
    if step.hidden is not None:
        obj["hidden"] = [float(v) for v in step.hidden]
    obj.update(step.extra)
    return obj


def trace_from_json(obj: dict) -> GenerationTrace:
    known = {"trace_id", "task", "model_name", "prompt", "steps", "label", "oracle_meta"}
    for key in ("trace_id", "task", "model_name", "prompt", "steps", "label", "oracle_meta"):
        if key not in obj:
            raise TraceParseError(f"trace missing required key {key!r}")
    steps = [step_from_json(s) for s in obj["steps"]]
    return GenerationTrace(
        trace_id=str(obj["trace_id"]),
        task=str(obj["task"]),
        model_name=str(obj["model_name"]),
        prompt=str(obj["prompt"]),
        steps=steps,
        label=str(obj["label"]),
        oracle_meta=dict(obj["oracle_meta"]),
        extra={k: v for k, v in obj.items() if k not in known},
    )


def trace_to_json(trace: GenerationTrace) -> dict:
    obj: dict = {
        "trace_id": trace.trace_id,
        "task": trace.task,
        "model_name": trace.model_name,
        "prompt": trace.prompt,
        "steps": [step_to_json(s) for s in trace.steps],
        "label": trace.label,
        "oracle_meta": trace.oracle_meta,
    }
    obj.update(trace.extra)
    return obj


def parse_trace_file(path: str | Path) -> TraceDataset:
    """Load a JSONL trace file, validating every trace.

    Raises TraceParseError (with the offending line number) on malformed
    lines or invariant violations, and DataError on duplicate trace ids or
    mixed hidden dimensionality across traces.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"trace file not found: {path}")
    traces: list[GenerationTrace] = []
    seen_ids: dict[str, int] = {}
    hidden_dim: int | None = None
    hidden_dim_owner: str | None = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            try:
                trace = trace_from_json(obj)
            except TraceParseError as exc:
                raise TraceParseError(str(exc), line=lineno) from exc
            violations = validate_trace(trace)
            if violations:
                raise TraceParseError(
                    f"trace {trace.trace_id!r} invalid: {'; '.join(violations)}", line=lineno
                )
            if trace.trace_id in seen_ids:
                raise DataError(
                    f"duplicate trace_id {trace.trace_id!r} on lines "
                    f"{seen_ids[trace.trace_id]} and {lineno}"
                )
            seen_ids[trace.trace_id] = lineno
            dim = trace.hidden_dim
            if dim is not None:
                if hidden_dim is None:
                    hidden_dim = dim
                    hidden_dim_owner = trace.trace_id
                elif dim != hidden_dim:
                    raise DataError(
                        f"mixed hidden dimensionality: trace {hidden_dim_owner!r} has dim "
                        f"{hidden_dim} but trace {trace.trace_id!r} has dim {dim}"
                    )
            traces.append(trace)
    return TraceDataset(traces=traces, source_path=str(path))


def write_trace_file(traces, path: str | Path) -> None:
    """Serialize traces (or a TraceDataset) to JSONL, one object per line."""
    if isinstance(traces, TraceDataset):
        traces = traces.traces
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(trace_to_json(trace), ensure_ascii=False) + "\n")


def prefix(trace: GenerationTrace, fraction: float) -> GenerationTrace:
    """Copy of the trace truncated to its first ceil(fraction * J) steps.

    fraction must lie in (0, 1]; the result keeps at least one step and
    preserves the label and all metadata.
    """
    if not 0.0 < fraction <= 1.0:
        raise DataError(f"prefix fraction must be in (0, 1], got {fraction}")
    n = max(1, math.ceil(fraction * len(trace.steps)))
    return GenerationTrace(
        trace_id=trace.trace_id,
        task=trace.task,
        model_name=trace.model_name,
        prompt=trace.prompt,
        steps=list(trace.steps[:n]),
        label=trace.label,
        oracle_meta=dict(trace.oracle_meta),
        extra=dict(trace.extra),
    )


def traces_equal(a: GenerationTrace, b: GenerationTrace) -> bool:
    """Field-for-field equality, comparing hidden vectors exactly."""
    if (
        a.trace_id != b.trace_id
        or a.task != b.task
        or a.model_name != b.model_name
        or a.prompt != b.prompt
        or a.label != b.label
        or a.oracle_meta != b.oracle_meta
        or a.extra != b.extra
        or len(a.steps) != len(b.steps)
    ):
        return False
    for sa, sb in zip(a.steps, b.steps):
        if (
            sa.token_id != sb.token_id
            or sa.token_text != sb.token_text
            or sa.chosen_logprob != sb.chosen_logprob
            or sa.entropy != sb.entropy
            or sa.topk != sb.topk
            or sa.extra != sb.extra
        ):
            return False
        if (sa.hidden is None) != (sb.hidden is None):
            return False
        if sa.hidden is not None and not np.array_equal(sa.hidden, sb.hidden):
            return False
    return True
