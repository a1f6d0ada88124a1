"""Synthetic trace fixtures: seeded generator with configurable prevalence,
anomaly position, and observable distributions.

Unsafe traces carry an anomaly window in which entropy rises, the chosen
token's log-probability drops, hidden states shift out of the safe
distribution, and a marker token appears in the text (so the mock judge can
detect it). Safe traces stay at baseline everywhere, which also makes them
usable as white-box construction data.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from streamwarden.errors import ConfigError
from streamwarden.monitors import derive_seed
from streamwarden.traces import GenerationTrace, TokenStep, TraceDataset

ANOMALY_POSITIONS = ("early", "late", "uniform", "full")

MARKER_TEXT = "@@ANOMALY@@"


@dataclass
class SynthConfig:
    n_traces: int = 1000
    prevalence: float = 0.5
    seed: int = 0
    task: str = "question_answering"
    model_name: str = "synth-lm"
    min_steps: int = 20
    max_steps: int = 60
    hidden_dim: int = 8
    anomaly_position: str = "early"
    anomaly_strength: float = 4.0
    store_entropy: bool = True
    store_topk: bool = False
    topk: int = 5
    store_hidden: bool = True
    marker_text: str = MARKER_TEXT

    def validate(self) -> None:
        if self.n_traces < 1:
            raise ConfigError("n_traces must be >= 1")
        if not 0.0 <= self.prevalence <= 1.0:
            raise ConfigError(f"prevalence must be in [0, 1], got {self.prevalence}")
        if self.anomaly_position not in ANOMALY_POSITIONS:
            raise ConfigError(
                f"anomaly_position must be one of {ANOMALY_POSITIONS}, "
                f"got {self.anomaly_position!r}"
            )
        if not 1 <= self.min_steps <= self.max_steps:
            raise ConfigError("need 1 <= min_steps <= max_steps")
        if self.store_topk and self.topk < 1:
            raise ConfigError("topk must be >= 1 when store_topk is set")


def _anomaly_window(position: str, n_steps: int, rng: np.random.Generator) -> range:
    quarter = max(1, math.ceil(n_steps / 4))
    if position == "early":
        return range(0, quarter)
    if position == "late":
        return range(n_steps - quarter, n_steps)
    if position == "full":
        return range(0, n_steps)
    start = int(rng.integers(0, max(1, n_steps - quarter + 1)))
    return range(start, min(n_steps, start + quarter))


def _topk_for(chosen_id: int, p_chosen: float, k: int, rng: np.random.Generator):
    # Chosen token leads; the rest take geometrically decaying shares of at
    # most 80% of the leftover mass, each capped at p_chosen so the list
    # stays sorted descending and sums below 1.
    entries = [(chosen_id, p_chosen)]
    remaining = max(0.0, 1.0 - p_chosen)
    weights = np.asarray([0.5**i for i in range(1, k)])
    if weights.size and remaining > 0.0:
        shares = remaining * 0.8 * weights / weights.sum()
        for i, share in enumerate(shares):
            entries.append((int(chosen_id + i + 1), float(min(p_chosen, share))))
    return entries


def generate_trace(trace_id: str, unsafe: bool, cfg: SynthConfig, seed: int) -> GenerationTrace:
    rng = np.random.default_rng(seed)
    n_steps = int(rng.integers(cfg.min_steps, cfg.max_steps + 1))
    window = _anomaly_window(cfg.anomaly_position, n_steps, rng) if unsafe else range(0)
    hidden_shift = cfg.anomaly_strength * 2.0
    steps: list[TokenStep] = []
    for j in range(n_steps):
        anomalous = j in window
        entropy = float(rng.gamma(2.0, 0.35))
        logprob = -float(rng.gamma(2.0, 0.25))
        hidden = rng.normal(0.0, 1.0, cfg.hidden_dim)
        if anomalous:
            entropy += cfg.anomaly_strength * (0.5 + rng.random())
            logprob -= cfg.anomaly_strength * (0.5 + rng.random())
            hidden = hidden + hidden_shift
        text = f" tok{j}"
        if anomalous and j == window.start:
            text = f" {cfg.marker_text}"
        steps.append(
            TokenStep(
                token_id=j,
                token_text=text,
                chosen_logprob=logprob,
                entropy=entropy if cfg.store_entropy else None,
                topk=_topk_for(j, math.exp(logprob), cfg.topk, rng) if cfg.store_topk else None,
                hidden=hidden.astype(np.float32) if cfg.store_hidden else None,
            )
        )
    return GenerationTrace(
        trace_id=trace_id,
        task=cfg.task,
        model_name=cfg.model_name,
        prompt=f"synthetic prompt {trace_id}",
        steps=steps,
        label="UNSAFE" if unsafe else "SAFE",
        oracle_meta={
            "source": "synthetic",
            "anomaly_position": cfg.anomaly_position if unsafe else None,
            "seed": seed,
        },
    )


def generate_dataset(cfg: SynthConfig) -> TraceDataset:
    """Seeded dataset with floor(prevalence * n) unsafe traces, shuffled."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n_unsafe = int(round(cfg.prevalence * cfg.n_traces))
    unsafe_flags = np.zeros(cfg.n_traces, dtype=bool)
    unsafe_flags[:n_unsafe] = True
    rng.shuffle(unsafe_flags)
    traces = [
        generate_trace(
            trace_id=f"synth-{cfg.seed}-{i:06d}",
            unsafe=bool(unsafe_flags[i]),
            cfg=cfg,
            seed=derive_seed(cfg.seed, f"synth-{i}", "trace"),
        )
        for i in range(cfg.n_traces)
    ]
    return TraceDataset(traces=traces, source_path=f"synthetic://{asdict(cfg)}")
