"""streamwarden: trace-replay framework for online safety analysis of
autoregressive text generation.

Monitors consume recorded generation traces token by token and emit
suspicion scores; the harness calibrates thresholds, replays datasets,
evaluates safety-gain/residual-hazard/availability-cost/AUC/time metrics,
and combines monitors into ensembles.
"""

from streamwarden._kernels import BACKEND, USING_NUMBA
from streamwarden.abstraction import (
    BoxAbstraction,
    BoxMonitor,
    ClusterModel,
    QuantitativeMonitor,
    box_contains,
    fit_boxes,
    fit_kmeans,
    min_center_distance,
)
from streamwarden.errors import (
    ConfigError,
    DataError,
    JudgeError,
    MonitorError,
    StreamwardenError,
    TraceParseError,
)
from streamwarden.harness import (
    RunConfig,
    early_stop_replay,
    pilot_prefix_analysis,
    run_benchmark,
    run_ensembles,
)
from streamwarden.hybrid import EnsembleSpec, bagging_fit, bagging_predict, majority_vote, random_selection
from streamwarden.judge import (
    JudgeClient,
    MockJudge,
    build_judge_prompt,
    parse_judge_reply,
    selfcheck_monitor,
)
from streamwarden.metrics import (
    MetricReport,
    Outcome,
    ReturnParams,
    auc,
    availability_cost,
    calibrate_threshold,
    residual_hazard,
    safety_gain,
    time_overhead,
)
from streamwarden.monitors import (
    AvgEntropyMonitor,
    AvgLikelihoodMonitor,
    MaxEntropyMonitor,
    MaxLikelihoodMonitor,
    Monitor,
    MonitorVerdict,
    RandomMonitor,
    avg_entropy_score,
    avg_likelihood_score,
    max_entropy_score,
    max_likelihood_score,
    random_monitor,
    replay,
)
from streamwarden.reporting import emit_report
from streamwarden.synth import SynthConfig, generate_dataset
from streamwarden.traces import (
    GenerationTrace,
    TokenStep,
    TraceDataset,
    parse_trace_file,
    prefix,
    token_entropy,
    validate_trace,
    write_trace_file,
)

__version__ = "0.1.0"
