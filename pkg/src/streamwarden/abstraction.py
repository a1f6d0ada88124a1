"""White-box monitors over hidden-state vectors: axis-aligned box abstraction
with out-of-box counting, and seeded KMeans with min-center-distance scoring.

Both reference structures are fitted on construction data (hidden states of
safe traces), are immutable once fitted, and serialize to a versioned JSON
document so `fit` and `run` can be separate CLI invocations.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from streamwarden._kernels import accumulate_centers, boxes_contain, nearest_center
from streamwarden.errors import DataError, MonitorError
from streamwarden.monitors import Monitor
from streamwarden.traces import TokenStep

ARTIFACT_FORMAT = "streamwarden-artifact"
ARTIFACT_VERSION = 1


@dataclass
class BoxAbstraction:
    """A set of inflated axis-aligned hulls of safe hidden states.

    boxes[b] is a list of (lo, hi) pairs, one per dimension, already
    inflated by epsilon * (hi - lo) of the raw hull. Bounds are inclusive.
    """

    boxes: list[list[tuple[float, float]]]
    epsilon: float
    dim: int
    seed: int = 0
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self._lo = np.asarray([[lo for lo, _ in box] for box in self.boxes], dtype=np.float64)
        self._hi = np.asarray([[hi for _, hi in box] for box in self.boxes], dtype=np.float64)

    def contains_batch(self, vectors: np.ndarray) -> np.ndarray:
        vectors = np.ascontiguousarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[1] != self.dim:
            raise MonitorError(
                f"vector dim {vectors.shape[-1] if vectors.ndim else 0} != box dim {self.dim}"
            )
        return boxes_contain(self._lo, self._hi, vectors)


@dataclass
class ClusterModel:
    """KMeans centers fitted on safe hidden states.

    inertia is the final sum of squared distances; inertia_history records
    the assignment-time value per Lloyd iteration (non-increasing). When
    fitted with z-normalization, norm_mean/norm_std map queries into the
    normalized space the centers live in.
    """

    centers: np.ndarray
    k: int
    inertia: float
    inertia_history: list[float] = field(default_factory=list)
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None
    seed: int = 0
    config: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(self.centers.shape[1])

    def normalize(self, vectors: np.ndarray) -> np.ndarray:
        if self.norm_mean is None:
            return vectors
        return (vectors - self.norm_mean) / self.norm_std


def _as_matrix(states) -> np.ndarray:
    mat = np.ascontiguousarray(states, dtype=np.float64)
    if mat.ndim != 2:
        raise DataError(f"expected a 2-D matrix of row vectors, got shape {mat.shape}")
    if not np.isfinite(mat).all():
        raise DataError("construction states contain non-finite values")
    return mat


def _kmeanspp_init(states: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = states.shape[0]
    centers = np.empty((k, states.shape[1]), dtype=np.float64)
    centers[0] = states[rng.integers(n)]
    for c in range(1, k):
        _, sqd = nearest_center(states, centers[:c])
        total = sqd.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=sqd / total))
        centers[c] = states[idx]
    return centers


def fit_kmeans(
    states,
    k: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-6,
    z_normalize: bool = False,
) -> ClusterModel:
    """Lloyd iterations from seeded k-means++ starting centers.

    Stops when the largest center movement drops below tol or after
    max_iter rounds. An empty cluster is re-seeded to the point currently
    farthest from its assigned center. Deterministic given (states, seed).
    """
    mat = _as_matrix(states)
    n = mat.shape[0]
    if k <= 0:
        raise DataError(f"k must be positive, got {k}")
    if k > n:
        raise DataError(f"k={k} exceeds the {n} construction rows")
    if max_iter <= 0 or tol <= 0:
        raise DataError("max_iter and tol must be positive")

    norm_mean = norm_std = None
    if z_normalize:
        norm_mean = mat.mean(axis=0)
        norm_std = mat.std(axis=0)
        norm_std[norm_std == 0.0] = 1.0
        mat = np.ascontiguousarray((mat - norm_mean) / norm_std)

    rng = np.random.default_rng(seed)
    centers = _kmeanspp_init(mat, k, rng)
    history: list[float] = []
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        labels, sqd = nearest_center(mat, centers)
        history.append(float(sqd.sum()))
        counts = np.bincount(labels, minlength=k)
        if (counts == 0).any():
            spare = sqd.copy()
            for c in np.flatnonzero(counts == 0):
                far = int(np.argmax(spare))
                labels[far] = c
                spare[far] = -1.0
        sums, counts = accumulate_centers(mat, labels, k)
        new_centers = sums / counts[:, None]
        movement = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if movement < tol:
            break
    labels, sqd = nearest_center(mat, centers)
    inertia = float(sqd.sum())
    history.append(inertia)
    return ClusterModel(
        centers=centers,
        k=k,
        inertia=inertia,
        inertia_history=history,
        norm_mean=norm_mean,
        norm_std=norm_std,
        seed=seed,
        config={"k": k, "max_iter": max_iter, "tol": tol, "z_normalize": z_normalize},
    )


def _hull(rows: np.ndarray, epsilon: float) -> list[tuple[float, float]]:
    lo = rows.min(axis=0)
    hi = rows.max(axis=0)
    pad = epsilon * (hi - lo)
    return [(float(l - p), float(h + p)) for l, h, p in zip(lo, hi, pad)]


def fit_boxes(safe_states, n_boxes: int, epsilon: float, seed: int) -> BoxAbstraction:
    """Per-dimension hulls of the construction rows, inflated by epsilon.

    With n_boxes=1 a single hull covers all rows; with more, rows are
    partitioned by seeded KMeans and one hull is built per non-empty
    cluster. Inflation is epsilon times each hull's own per-dimension range.
    """
    mat = _as_matrix(safe_states)
    if mat.shape[0] == 0:
        raise DataError("cannot fit boxes on empty construction data")
    if n_boxes <= 0:
        raise DataError(f"n_boxes must be positive, got {n_boxes}")
    if n_boxes > mat.shape[0]:
        raise DataError(f"n_boxes={n_boxes} exceeds the {mat.shape[0]} construction rows")
    if epsilon < 0:
        raise DataError(f"epsilon must be non-negative, got {epsilon}")
    if n_boxes == 1:
        boxes = [_hull(mat, epsilon)]
    else:
        model = fit_kmeans(mat, k=n_boxes, seed=seed)
        labels, _ = nearest_center(mat, model.centers)
        boxes = [
            _hull(mat[labels == c], epsilon) for c in range(n_boxes) if (labels == c).any()
        ]
    return BoxAbstraction(
        boxes=boxes,
        epsilon=epsilon,
        dim=mat.shape[1],
        seed=seed,
        config={"n_boxes": n_boxes, "epsilon": epsilon},
    )


def box_contains(abstraction: BoxAbstraction, v) -> bool:
    """True iff v lies inside at least one box, bounds inclusive."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (abstraction.dim,):
        raise MonitorError(f"vector dim {v.shape} != box dim {abstraction.dim}")
    return bool(abstraction.contains_batch(v[None, :])[0])


def min_center_distance(model: ClusterModel, v) -> float:
    """Euclidean distance from v to the nearest cluster center."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (model.dim,):
        raise MonitorError(f"vector dim {v.shape} != center dim {model.dim}")
    v = model.normalize(v)
    _, sqd = nearest_center(np.ascontiguousarray(v[None, :]), model.centers)
    return float(math.sqrt(sqd[0]))


def _step_hidden(step: TokenStep, dim: int, idx: int) -> np.ndarray:
    if step.hidden is None:
        raise MonitorError(f"step {idx}: no hidden vector (white-box monitor needs one)")
    if len(step.hidden) != dim:
        raise MonitorError(f"step {idx}: hidden dim {len(step.hidden)} != fitted dim {dim}")
    return np.asarray(step.hidden, dtype=np.float64)


class BoxMonitor(Monitor):
    """Score = fraction of observed tokens whose hidden state left every box."""

    name = "box"

    def __init__(self, abstraction: BoxAbstraction):
        self.abstraction = abstraction
        self.reset()

    def reset(self) -> None:
        self._out = 0
        self._seen = 0

    def observe(self, step: TokenStep) -> float:
        v = _step_hidden(step, self.abstraction.dim, self._seen)
        if not self.abstraction.contains_batch(v[None, :])[0]:
            self._out += 1
        self._seen += 1
        return self._out / self._seen


class QuantitativeMonitor(Monitor):
    """Score = running max of min-center distance (most anomalous token so far)."""

    name = "quantitative"

    def __init__(self, model: ClusterModel):
        self.model = model
        self.reset()

    def reset(self) -> None:
        self._max = 0.0
        self._seen = 0

    def observe(self, step: TokenStep) -> float:
        v = _step_hidden(step, self.model.dim, self._seen)
        self._seen += 1
        v = self.model.normalize(v)
        _, sqd = nearest_center(np.ascontiguousarray(v[None, :]), self.model.centers)
        self._max = max(self._max, float(math.sqrt(sqd[0])))
        return self._max


def box_monitor_score(steps_so_far: list[TokenStep], abstraction: BoxAbstraction) -> float:
    """Batch equivalent of BoxMonitor at the last observed step."""
    if not steps_so_far:
        raise MonitorError("no steps observed")
    mon = BoxMonitor(abstraction)
    score = 0.0
    for step in steps_so_far:
        score = mon.observe(step)
    return score


def quantitative_monitor_score(steps_so_far: list[TokenStep], model: ClusterModel) -> float:
    """Batch equivalent of QuantitativeMonitor at the last observed step."""
    if not steps_so_far:
        raise MonitorError("no steps observed")
    mon = QuantitativeMonitor(model)
    score = 0.0
    for step in steps_so_far:
        score = mon.observe(step)
    return score


def save_artifact(artifact, path: str | Path) -> None:
    """Write a fitted BoxAbstraction or ClusterModel as versioned JSON."""
    if isinstance(artifact, BoxAbstraction):
        doc = {
            "format": ARTIFACT_FORMAT,
            "version": ARTIFACT_VERSION,
            "kind": "box",
            "dim": artifact.dim,
            "epsilon": artifact.epsilon,
            "boxes": [[[lo, hi] for lo, hi in box] for box in artifact.boxes],
            "seed": artifact.seed,
            "config": artifact.config,
        }
    elif isinstance(artifact, ClusterModel):
        doc = {
            "format": ARTIFACT_FORMAT,
            "version": ARTIFACT_VERSION,
            "kind": "kmeans",
            "k": artifact.k,
            "centers": artifact.centers.tolist(),
            "inertia": artifact.inertia,
            "inertia_history": artifact.inertia_history,
            "norm_mean": None if artifact.norm_mean is None else artifact.norm_mean.tolist(),
            "norm_std": None if artifact.norm_std is None else artifact.norm_std.tolist(),
            "seed": artifact.seed,
            "config": artifact.config,
        }
    else:
        raise DataError(f"cannot serialize artifact of type {type(artifact).__name__}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_artifact(path: str | Path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"fit artifact not found: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("format") != ARTIFACT_FORMAT:
        raise DataError(f"{path} is not a fitted artifact document")
    if doc.get("version") != ARTIFACT_VERSION:
        raise DataError(f"unsupported artifact version {doc.get('version')}")
    if doc["kind"] == "box":
        return BoxAbstraction(
            boxes=[[(float(lo), float(hi)) for lo, hi in box] for box in doc["boxes"]],
            epsilon=float(doc["epsilon"]),
            dim=int(doc["dim"]),
            seed=int(doc.get("seed", 0)),
            config=doc.get("config", {}),
        )
    if doc["kind"] == "kmeans":
        return ClusterModel(
            centers=np.asarray(doc["centers"], dtype=np.float64),
            k=int(doc["k"]),
            inertia=float(doc["inertia"]),
            inertia_history=[float(x) for x in doc.get("inertia_history", [])],
            norm_mean=None if doc.get("norm_mean") is None else np.asarray(doc["norm_mean"]),
            norm_std=None if doc.get("norm_std") is None else np.asarray(doc["norm_std"]),
            seed=int(doc.get("seed", 0)),
            config=doc.get("config", {}),
        )
    raise DataError(f"unknown artifact kind {doc['kind']!r}")


def hidden_state_matrix(traces) -> np.ndarray:
    """Stack every hidden vector of the given traces into construction rows."""
    rows = []
    for trace in traces:
        for idx, step in enumerate(trace.steps):
            if step.hidden is None:
                raise MonitorError(
                    f"trace {trace.trace_id!r} step {idx}: no hidden vector; "
                    "white-box construction needs hidden states"
                )
            rows.append(np.asarray(step.hidden, dtype=np.float64))
    if not rows:
        raise DataError("no hidden states found in construction traces")
    return np.ascontiguousarray(np.stack(rows))
