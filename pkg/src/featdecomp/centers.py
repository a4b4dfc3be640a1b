"""Class-specific and group-shared feature centers with mini-batch updates.

Class centers move toward the batch mean of their class's discriminative
codes with a damped step:

    delta_c = sum_i [l_i == c] (m_c - code_i) / (1 + count_c)
    m_c    <- m_c - eta * delta_c

so classes absent from a batch stay put. Group centers are then recomputed
from the class centers of their member classes: the divisor is the group
size by default, or the total class count in ``class_count`` mode (both are
kept because either reading of the update rule is defensible; the
class-count divisor shrinks group centers toward the origin when groups are
small, which is why group size is the default).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError
from .grouping import GroupAssignment

DIVISOR_MODES = ("group_size", "class_count")


@dataclass(eq=False)
class CenterState:
    """Class centers ``m`` (C x d_f), group centers ``s`` (N_g x d_f), rate eta."""

    m: np.ndarray
    s: np.ndarray
    eta: float

    def __post_init__(self):
        self.m = np.ascontiguousarray(self.m, dtype=np.float64)
        self.s = np.ascontiguousarray(self.s, dtype=np.float64)
        if self.m.ndim != 2 or self.s.ndim != 2 or self.m.shape[1] != self.s.shape[1]:
            raise ParameterError(
                f"center matrices must be 2-D with equal width, got {self.m.shape} and {self.s.shape}"
            )
        if not (np.isfinite(self.m).all() and np.isfinite(self.s).all()):
            raise DataError("non-finite center entries")
        if not np.isfinite(self.eta) or self.eta < 0:
            raise ParameterError(f"eta must be finite and >= 0, got {self.eta}")

    @property
    def num_classes(self) -> int:
        return self.m.shape[0]

    @property
    def num_groups(self) -> int:
        return self.s.shape[0]

    def copy(self) -> "CenterState":
        return CenterState(self.m.copy(), self.s.copy(), self.eta)


def init_centers(num_classes: int, num_groups: int, code_dim: int, eta: float = 0.01) -> CenterState:
    """All-zero centers of the given shape."""
    if num_classes < 1 or num_groups < 1 or code_dim < 1:
        raise ParameterError("num_classes, num_groups and code_dim must be >= 1")
    return CenterState(
        np.zeros((num_classes, code_dim)), np.zeros((num_groups, code_dim)), eta
    )


def update_class_centers(
    state: CenterState, y_dis: np.ndarray, labels: np.ndarray
) -> CenterState:
    """Damped per-class step toward the batch's discriminative codes.

    Returns a new state; group centers are untouched here.
    """
    y_dis = np.asarray(y_dis, dtype=np.float64)
    labels = np.asarray(labels)
    if y_dis.ndim != 2 or y_dis.shape[1] != state.m.shape[1]:
        raise ParameterError(
            f"codes must have shape (B, {state.m.shape[1]}), got {y_dis.shape}"
        )
    if labels.shape != (y_dis.shape[0],):
        raise ParameterError("labels length must match the batch")
    if not np.isfinite(y_dis).all():
        raise DataError("non-finite discriminative codes in center update")
    c = state.num_classes
    counts = np.bincount(labels - 1, minlength=c).astype(np.float64)
    sums = np.zeros_like(state.m)
    np.add.at(sums, labels - 1, y_dis)
    delta = (counts[:, None] * state.m - sums) / (1.0 + counts[:, None])
    return CenterState(state.m - state.eta * delta, state.s, state.eta)


def update_shared_centers(
    state: CenterState, groups: GroupAssignment, divisor_mode: str = "group_size"
) -> CenterState:
    """Recompute each group center from its member class centers.

    Groups that won no class keep their previous center.
    """
    if divisor_mode not in DIVISOR_MODES:
        raise ParameterError(f"divisor_mode must be one of {DIVISOR_MODES}, got {divisor_mode!r}")
    if groups.num_classes != state.num_classes:
        raise ParameterError(
            f"grouping covers {groups.num_classes} classes, centers have {state.num_classes}"
        )
    if groups.num_groups != state.num_groups:
        raise ParameterError(
            f"grouping has {groups.num_groups} groups, centers have {state.num_groups}"
        )
    s = state.s.copy()
    for j in range(1, groups.num_groups + 1):
        members = groups.members(j)
        if not members:
            continue
        divisor = len(members) if divisor_mode == "group_size" else state.num_classes
        s[j - 1] = state.m[np.asarray(members) - 1].sum(axis=0) / divisor
    return CenterState(state.m, s, state.eta)
