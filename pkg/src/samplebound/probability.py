"""Exact finite probability primitives shared by the whole package.

Distributions, row-stochastic kernels and small joint tensors with hard
numeric contracts: input weights must already sum to one within
``ATOL = 1e-12`` (larger drift is treated as user error and raises), and
that residual drift is then renormalized away.  All values are immutable
after construction, so they can be shared freely between parallel workers.

Conventions used package-wide:

* ``0 * log 0 = 0`` and ``0 * log(0/0) = 0``;
* probability arithmetic is double precision;
* information quantities are computed in nats internally and converted to
  bits only at API boundaries.
"""

from __future__ import annotations

from typing import Hashable, Sequence

import numpy as np

ATOL = 1e-12

Label = Hashable


class ProbabilityError(ValueError):
    """Invalid probabilistic object (negative mass, bad normalization...)."""


class DimensionMismatchError(ProbabilityError):
    """Labels or shapes of two objects do not line up."""


class DegenerateInputError(ProbabilityError):
    """An operation received an input with no usable probability mass."""


def _as_labels(labels: Sequence[Label], what: str) -> tuple[Label, ...]:
    out = tuple(labels)
    if len(set(out)) != len(out):
        raise ProbabilityError(f"{what}: labels are not unique")
    if not out:
        raise ProbabilityError(f"{what}: empty label list")
    return out


def _clean_weights(weights, what: str) -> np.ndarray:
    arr = np.array(weights, dtype=float)
    if np.any(np.isnan(arr)) or np.any(np.isinf(arr)):
        raise ProbabilityError(f"{what}: non-finite weight")
    if np.any(arr < -ATOL):
        raise ProbabilityError(f"{what}: negative weight {arr.min()!r}")
    return np.clip(arr, 0.0, None)


class FiniteDistribution:
    """Probability distribution over an ordered finite label set."""

    __slots__ = ("labels", "probs")

    def __init__(self, labels: Sequence[Label], probs) -> None:
        self.labels = _as_labels(labels, "FiniteDistribution")
        arr = _clean_weights(probs, "FiniteDistribution")
        if arr.shape != (len(self.labels),):
            raise DimensionMismatchError(
                f"FiniteDistribution: {len(self.labels)} labels but "
                f"{arr.shape} weights"
            )
        total = arr.sum()
        if abs(total - 1.0) > ATOL:
            raise ProbabilityError(
                f"FiniteDistribution: weights sum to {total!r}, "
                f"off by more than {ATOL}"
            )
        arr /= total
        arr.setflags(write=False)
        self.probs = arr

    @classmethod
    def from_weights(cls, labels: Sequence[Label], weights) -> "FiniteDistribution":
        """Normalize arbitrary nonnegative weights (internal constructions)."""
        arr = _clean_weights(weights, "FiniteDistribution")
        total = arr.sum()
        if total <= 0.0:
            raise DegenerateInputError("FiniteDistribution: zero total mass")
        return cls(labels, arr / total)

    def index(self, label: Label) -> int:
        return self.labels.index(label)

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FiniteDistribution):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.probs, other.probs)

    def __repr__(self) -> str:
        return f"FiniteDistribution({list(self.labels)!r}, {self.probs.tolist()!r})"


class StochasticKernel:
    """Row-stochastic map between two ordered finite label sets.

    ``support_mask`` optionally forces structural zeros: entries under a
    False cell must be exactly zero and stay exactly zero.
    """

    __slots__ = ("from_labels", "to_labels", "rows", "support_mask")

    def __init__(
        self,
        from_labels: Sequence[Label],
        to_labels: Sequence[Label],
        rows,
        support_mask=None,
    ) -> None:
        self.from_labels = _as_labels(from_labels, "StochasticKernel.from")
        self.to_labels = _as_labels(to_labels, "StochasticKernel.to")
        arr = _clean_weights(rows, "StochasticKernel")
        shape = (len(self.from_labels), len(self.to_labels))
        if arr.shape != shape:
            raise DimensionMismatchError(
                f"StochasticKernel: rows have shape {arr.shape}, expected {shape}"
            )
        if support_mask is not None:
            mask = np.array(support_mask, dtype=bool)
            if mask.shape != shape:
                raise DimensionMismatchError("StochasticKernel: bad support_mask shape")
            off = arr[~mask]
            if off.size and np.any(np.abs(off) > ATOL):
                raise ProbabilityError(
                    "StochasticKernel: positive mass on a masked-out cell"
                )
            arr[~mask] = 0.0
            mask.setflags(write=False)
        else:
            mask = None
        sums = arr.sum(axis=1)
        bad = np.abs(sums - 1.0) > ATOL
        if np.any(bad):
            i = int(np.argmax(bad))
            raise ProbabilityError(
                f"StochasticKernel: row {i} ({self.from_labels[i]!r}) sums to "
                f"{sums[i]!r}, off by more than {ATOL}"
            )
        arr /= sums[:, None]
        arr.setflags(write=False)
        self.rows = arr
        self.support_mask = mask

    @classmethod
    def identity(cls, labels: Sequence[Label]) -> "StochasticKernel":
        n = len(tuple(labels))
        return cls(labels, labels, np.eye(n))

    @classmethod
    def from_rows(
        cls, from_labels, to_labels, rows, support_mask=None
    ) -> "StochasticKernel":
        """Normalize each row of arbitrary nonnegative weights."""
        arr = _clean_weights(rows, "StochasticKernel")
        sums = arr.sum(axis=1, keepdims=True)
        if np.any(sums <= 0.0):
            raise DegenerateInputError("StochasticKernel: a row has zero total mass")
        return cls(from_labels, to_labels, arr / sums, support_mask=support_mask)

    def row(self, label: Label) -> FiniteDistribution:
        i = self.from_labels.index(label)
        return FiniteDistribution(self.to_labels, self.rows[i])

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, StochasticKernel):
            return NotImplemented
        return (
            self.from_labels == other.from_labels
            and self.to_labels == other.to_labels
            and np.array_equal(self.rows, other.rows)
        )

    def __repr__(self) -> str:
        return (
            f"StochasticKernel({len(self.from_labels)}x{len(self.to_labels)})"
        )


class JointDistribution:
    """Joint distribution over 2 or 3 ordered finite axes."""

    __slots__ = ("axes", "mass")

    def __init__(self, axes: Sequence[Sequence[Label]], mass) -> None:
        axes_t = tuple(_as_labels(ax, f"JointDistribution axis {i}") for i, ax in enumerate(axes))
        if len(axes_t) not in (2, 3):
            raise DimensionMismatchError("JointDistribution: need 2 or 3 axes")
        arr = _clean_weights(mass, "JointDistribution")
        shape = tuple(len(ax) for ax in axes_t)
        if arr.shape != shape:
            raise DimensionMismatchError(
                f"JointDistribution: mass has shape {arr.shape}, expected {shape}"
            )
        total = arr.sum()
        if abs(total - 1.0) > ATOL:
            raise ProbabilityError(
                f"JointDistribution: total mass {total!r}, off by more than {ATOL}"
            )
        arr /= total
        arr.setflags(write=False)
        self.axes = axes_t
        self.mass = arr

    @property
    def ndim(self) -> int:
        return len(self.axes)

    def __repr__(self) -> str:
        return f"JointDistribution(shape={self.mass.shape})"


def compose(first: StochasticKernel, second: StochasticKernel) -> StochasticKernel:
    """Chain two kernels: result maps ``first.from`` to ``second.to``.

    Row ``w`` of the result is ``sum_t second[t, :] * first[w, t]``.
    """
    if first.to_labels != second.from_labels:
        raise DimensionMismatchError(
            "compose: intermediate labels do not match "
            f"({first.to_labels!r} vs {second.from_labels!r})"
        )
    return StochasticKernel(
        first.from_labels, second.to_labels, first.rows @ second.rows
    )


def joint(source: FiniteDistribution, channel: StochasticKernel) -> JointDistribution:
    """Input-output joint ``mass[i, j] = source[i] * channel[i, j]``."""
    if source.labels != channel.from_labels:
        raise DimensionMismatchError(
            "joint: source labels do not match channel input labels"
        )
    return JointDistribution(
        (source.labels, channel.to_labels),
        source.probs[:, None] * channel.rows,
    )


def marginal(j: JointDistribution, axis: int) -> FiniteDistribution:
    """Sum out every axis except ``axis``."""
    if not 0 <= axis < j.ndim:
        raise DimensionMismatchError(f"marginal: axis {axis} out of range")
    other = tuple(i for i in range(j.ndim) if i != axis)
    return FiniteDistribution.from_weights(j.axes[axis], j.mass.sum(axis=other))


def condition(j: JointDistribution, given_axis: int) -> StochasticKernel:
    """Conditional kernel from ``given_axis`` to the remaining axes.

    Rows with zero marginal mass are dropped; the returned kernel's
    ``from_labels`` lists the retained labels, so callers can compare it
    with the joint's axis to see what was dropped.  If every row is
    dropped the joint is degenerate and an error is raised.  For a 3-axis
    joint the target labels are pairs from the two remaining axes.
    """
    if not 0 <= given_axis < j.ndim:
        raise DimensionMismatchError(f"condition: axis {given_axis} out of range")
    mass = np.moveaxis(j.mass, given_axis, 0)
    flat = mass.reshape(mass.shape[0], -1)
    weights = flat.sum(axis=1)
    keep = weights > 0.0
    if not np.any(keep):
        raise DegenerateInputError("condition: joint has no mass on any row")
    from_labels = tuple(
        lab for lab, k in zip(j.axes[given_axis], keep) if k
    )
    other_axes = [j.axes[i] for i in range(j.ndim) if i != given_axis]
    if len(other_axes) == 1:
        to_labels = other_axes[0]
    else:
        to_labels = tuple(
            (a, b) for a in other_axes[0] for b in other_axes[1]
        )
    rows = flat[keep] / weights[keep][:, None]
    return StochasticKernel(from_labels, to_labels, rows)
