"""Ensemble combinators over base monitors: per-trace random selection,
majority voting, and bagging over subsampled construction data.

Vote aggregation is a pure fold over member flags; member monitors replay
independently. Ties in any vote resolve to True (treat as unsafe), the
conservative direction; this is echoed in reports.
"""

from dataclasses import dataclass, field

import numpy as np

from streamwarden.abstraction import (
    BoxAbstraction,
    BoxMonitor,
    ClusterModel,
    QuantitativeMonitor,
    fit_boxes,
    fit_kmeans,
)
from streamwarden.errors import ConfigError, DataError
from streamwarden.monitors import derive_seed, replay

STRATEGIES = ("random_selection", "majority_vote", "bagging")
BAGGING_BASES = ("box", "quantitative")

# Member list used by the reference random-selection and voting ensembles;
# overridable per ensemble in the config.
DEFAULT_MEMBERS = ("random", "avg_entropy", "avg_likelihood", "box", "selfcheck")


@dataclass
class EnsembleSpec:
    """Configuration of one hybridization run."""

    strategy: str
    members: list[str] = field(default_factory=lambda: list(DEFAULT_MEMBERS))
    base: str = "box"
    n_instances: int = 5
    subsample_fraction: float = 0.8
    seed: int = 0
    with_replacement: bool = False
    name: str = ""

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown ensemble strategy {self.strategy!r}")
        if self.strategy == "bagging":
            if self.base not in BAGGING_BASES:
                raise ConfigError(
                    f"bagging needs a fit-based base monitor {BAGGING_BASES}, got {self.base!r}"
                )
            if not 0.0 < self.subsample_fraction <= 1.0:
                raise ConfigError(
                    f"subsample_fraction must be in (0, 1], got {self.subsample_fraction}"
                )
            if self.n_instances < 1:
                raise ConfigError(f"n_instances must be >= 1, got {self.n_instances}")
        elif not self.members:
            raise ConfigError("ensemble members must be non-empty")
        if not self.name:
            base = self.base if self.strategy == "bagging" else None
            self.name = f"{self.strategy}_{base}" if base else self.strategy


def majority_vote(flags) -> bool:
    """True iff at least half the members flag (ties resolve to True)."""
    flags = list(flags)
    if not flags:
        raise DataError("majority_vote needs at least one member flag")
    yes = sum(1 for f in flags if f)
    return yes >= len(flags) - yes


def random_selection(flags, seed: int, trace_id: str) -> bool:
    """One member's verdict, chosen uniformly per trace.

    The pick is seeded by (seed, trace_id) so it is stable across runs and
    independent of replay scheduling.
    """
    flags = list(flags)
    if not flags:
        raise DataError("random_selection needs at least one member flag")
    rng = np.random.default_rng(derive_seed(seed, trace_id, "random_selection"))
    return bool(flags[int(rng.integers(len(flags)))])


def subsample_indices(
    n_rows: int, fraction: float, n_instances: int, seed: int, with_replacement: bool = False
) -> list[np.ndarray]:
    """Seeded per-instance row subsets of size floor(fraction * n_rows).

    Extraction (without replacement) is the default; with_replacement
    switches to classic bootstrap resampling for comparison.
    """
    size = int(fraction * n_rows)
    if size < 1:
        raise DataError(
            f"subsample_fraction {fraction} of {n_rows} rows leaves nothing to fit on"
        )
    subsets = []
    for i in range(n_instances):
        rng = np.random.default_rng(derive_seed(seed, f"instance-{i}", "bagging"))
        if with_replacement:
            subsets.append(rng.integers(n_rows, size=size))
        else:
            subsets.append(rng.permutation(n_rows)[:size])
    return subsets


def bagging_fit(
    base: str,
    safe_states,
    n_instances: int = 5,
    subsample_fraction: float = 0.8,
    seed: int = 0,
    with_replacement: bool = False,
    **base_params,
):
    """Fit n_instances copies of a white-box base monitor on seeded subsets.

    Diversity comes from the data subsets alone: every instance fits with
    the same base seed, so fraction 1.0 (without replacement) reproduces the
    single base monitor exactly.
    """
    if base not in BAGGING_BASES:
        raise ConfigError(f"bagging base must be one of {BAGGING_BASES}, got {base!r}")
    mat = np.asarray(safe_states, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] == 0:
        raise DataError("bagging needs a non-empty matrix of construction rows")
    subsets = subsample_indices(
        mat.shape[0], subsample_fraction, n_instances, seed, with_replacement
    )
    instances = []
    for rows in subsets:
        sub = np.ascontiguousarray(mat[np.sort(rows)])
        if base == "box":
            n_boxes = int(base_params.get("n_boxes", 1))
            epsilon = float(base_params.get("epsilon", 0.05))
            if n_boxes > sub.shape[0]:
                raise DataError(
                    f"subsample of {sub.shape[0]} rows cannot fit {n_boxes} boxes"
                )
            instances.append(fit_boxes(sub, n_boxes=n_boxes, epsilon=epsilon, seed=seed))
        else:
            k = int(base_params.get("k", 8))
            if k > sub.shape[0]:
                raise DataError(f"subsample of {sub.shape[0]} rows cannot fit k={k}")
            instances.append(
                fit_kmeans(
                    sub,
                    k=k,
                    seed=seed,
                    z_normalize=bool(base_params.get("z_normalize", False)),
                )
            )
    return instances


def monitor_for_artifact(artifact):
    """Streaming monitor wrapping a fitted white-box artifact."""
    if isinstance(artifact, BoxAbstraction):
        return BoxMonitor(artifact)
    if isinstance(artifact, ClusterModel):
        return QuantitativeMonitor(artifact)
    raise ConfigError(f"no monitor for artifact type {type(artifact).__name__}")


def bagging_predict(instances, trace, threshold: float) -> bool:
    """Majority vote over the fitted instances' flags on one trace."""
    instances = list(instances)
    if not instances:
        raise DataError("bagging_predict needs at least one fitted instance")
    flags = [
        replay(monitor_for_artifact(inst), trace, threshold=threshold).flagged
        for inst in instances
    ]
    return majority_vote(flags)
