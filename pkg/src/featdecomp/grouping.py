"""Class grouping: k-means over feature samples, plurality class assignment.

The clustering runs on per-sample features; each class then joins the
cluster holding the plurality of its samples. A seeded random grouping and
trivial single-group assignment are provided for comparison runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FeatureFormatError, ParameterError
from .featureio import FeatureDataset


@dataclass
class ClusterResult:
    """Final centroids, per-sample 1-based cluster indices, and exact SSE.

    ``inertia_history`` records the SSE after every assignment step, which
    is non-increasing for Lloyd iterations.
    """

    centroids: np.ndarray
    assignment: np.ndarray
    inertia: float
    inertia_history: list[float] = field(default_factory=list)

    @property
    def num_clusters(self) -> int:
        return self.centroids.shape[0]


@dataclass
class GroupAssignment:
    """Total map from class index (1..C) to group index (1..num_groups)."""

    num_groups: int
    class_to_group: dict[int, int]

    def __post_init__(self):
        if self.num_groups < 1:
            raise ParameterError(f"num_groups must be >= 1, got {self.num_groups}")
        for c, g in self.class_to_group.items():
            if not 1 <= g <= self.num_groups:
                raise ParameterError(f"class {c} mapped to invalid group {g}")

    @property
    def num_classes(self) -> int:
        return len(self.class_to_group)

    def group_of(self, label: int) -> int:
        return self.class_to_group[label]

    def members(self, group: int) -> list[int]:
        """Classes of ``group`` in ascending order (may be empty)."""
        return sorted(c for c, g in self.class_to_group.items() if g == group)

    def group_sizes(self) -> list[int]:
        return [len(self.members(j)) for j in range(1, self.num_groups + 1)]


def _pairwise_sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # |x|^2 + |c|^2 - 2 x.c; clip the tiny negatives the trick can produce
    d2 = (
        (x * x).sum(axis=1)[:, None]
        + (centroids * centroids).sum(axis=1)[None, :]
        - 2.0 * x @ centroids.T
    )
    return np.maximum(d2, 0.0)


def _exact_sse(x: np.ndarray, centroids: np.ndarray, assignment: np.ndarray) -> float:
    diff = x - centroids[assignment]
    return float((diff * diff).sum())


def _seed_centroids(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Distance-weighted seeding: each new centroid is drawn with
    probability proportional to squared distance from the chosen set."""
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    centroids[0] = x[rng.integers(n)]
    for i in range(1, k):
        d2 = _pairwise_sq_dists(x, centroids[:i]).min(axis=1)
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:  # all remaining points coincide with chosen centroids
            idx = rng.integers(n)
        centroids[i] = x[idx]
    return centroids


def kmeans(
    features: FeatureDataset, k: int, seed: int, max_iters: int = 100
) -> ClusterResult:
    """Lloyd k-means with distance-weighted seeding.

    Deterministic given (data, k, seed). Stops at an assignment fixed point
    or after ``max_iters`` assignment/update rounds. Empty clusters are
    repaired by stealing the farthest point of the largest cluster.
    """
    n = len(features)
    if n == 0:
        raise ParameterError("cannot cluster an empty dataset")
    if k < 1 or k > n:
        raise ParameterError(f"k must be in 1..{n}, got {k}")
    if max_iters < 1:
        raise ParameterError(f"max_iters must be >= 1, got {max_iters}")
    x = features.values.astype(np.float64)
    rng = np.random.default_rng(seed)
    centroids = _seed_centroids(x, k, rng)

    assignment = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    for _ in range(max_iters):
        new_assignment = np.argmin(_pairwise_sq_dists(x, centroids), axis=1)
        counts = np.bincount(new_assignment, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            donor = int(np.argmax(counts))
            members = np.flatnonzero(new_assignment == donor)
            d2 = ((x[members] - centroids[donor]) ** 2).sum(axis=1)
            stolen = members[int(np.argmax(d2))]
            new_assignment[stolen] = empty
            counts[donor] -= 1
            counts[empty] += 1
        sse = _exact_sse(x, centroids, new_assignment)
        if history:
            assert sse <= history[-1] * (1 + 1e-9) + 1e-12, "inertia increased"
        history.append(sse)
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for j in range(k):
            centroids[j] = x[assignment == j].mean(axis=0)

    inertia = _exact_sse(x, centroids, assignment)
    return ClusterResult(centroids, assignment + 1, inertia, history)


def assign_groups(
    cluster: ClusterResult, labels: np.ndarray, num_classes: int
) -> GroupAssignment:
    """Map each class to the cluster holding the plurality of its samples.

    Ties break toward the lowest group index. A class with zero samples is
    an error.
    """
    labels = np.asarray(labels)
    if cluster.assignment.shape != labels.shape:
        raise ParameterError(
            f"assignment length {cluster.assignment.shape} != labels length {labels.shape}"
        )
    k = cluster.num_clusters
    mapping: dict[int, int] = {}
    for c in range(1, num_classes + 1):
        member_clusters = cluster.assignment[labels == c]
        if member_clusters.size == 0:
            raise DataError(f"class {c} has no samples to vote with")
        counts = np.bincount(member_clusters - 1, minlength=k)
        mapping[c] = int(np.argmax(counts)) + 1  # argmax takes the lowest index on ties
    return GroupAssignment(k, mapping)


def random_groups(num_classes: int, num_groups: int, seed: int) -> GroupAssignment:
    """Shuffle classes by ``seed`` and deal them round-robin into groups,
    so group sizes differ by at most one."""
    if num_groups > num_classes:
        raise ParameterError(
            f"num_groups ({num_groups}) must not exceed num_classes ({num_classes})"
        )
    if num_groups < 1:
        raise ParameterError(f"num_groups must be >= 1, got {num_groups}")
    order = np.random.default_rng(seed).permutation(num_classes) + 1
    mapping = {int(c): i % num_groups + 1 for i, c in enumerate(order)}
    return GroupAssignment(num_groups, mapping)


def single_group(num_classes: int) -> GroupAssignment:
    """Every class in group 1."""
    return GroupAssignment(1, {c: 1 for c in range(1, num_classes + 1)})


def save_groups(groups: GroupAssignment, path) -> None:
    """Write the plain-text grouping file: ``groups N`` then class/group pairs."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"groups {groups.num_groups}\n")
        for c in sorted(groups.class_to_group):
            fh.write(f"{c} {groups.class_to_group[c]}\n")


def load_groups(path) -> GroupAssignment:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("groups "):
        raise FeatureFormatError(f"{path}: expected leading 'groups N' line")
    try:
        num_groups = int(lines[0].split()[1])
        mapping = {}
        for ln in lines[1:]:
            c, g = ln.split()
            mapping[int(c)] = int(g)
    except (ValueError, IndexError) as exc:
        raise FeatureFormatError(f"{path}: malformed grouping file: {exc}") from exc
    return GroupAssignment(num_groups, mapping)
