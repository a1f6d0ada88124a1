import math

import numpy as np
import pytest

from streamwarden.traces import GenerationTrace, TokenStep


def make_random_trace(
    rng: np.random.Generator,
    trace_id: str,
    n_steps: int | None = None,
    hidden_dim: int | None = 4,
    with_entropy: bool = True,
    with_topk: bool = False,
    label: str = "SAFE",
) -> GenerationTrace:
    """Random valid trace for property tests (not the synth fixture path)."""
    if n_steps is None:
        n_steps = int(rng.integers(1, 40))
    steps = []
    for j in range(n_steps):
        logprob = -float(rng.gamma(2.0, 0.5))
        topk = None
        if with_topk:
            p1 = math.exp(logprob)
            p2 = min(p1, max(0.0, (1.0 - p1) * 0.4))
            topk = [(j, p1), (j + 1, p2)]
        steps.append(
            TokenStep(
                token_id=j,
                token_text=f" w{j}",
                chosen_logprob=logprob,
                entropy=float(rng.gamma(2.0, 0.4)) if with_entropy else None,
                topk=topk,
                hidden=rng.normal(size=hidden_dim).astype(np.float32)
                if hidden_dim is not None
                else None,
            )
        )
    return GenerationTrace(
        trace_id=trace_id,
        task="question_answering",
        model_name="test-lm",
        prompt="p",
        steps=steps,
        label=label,
        oracle_meta={},
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
