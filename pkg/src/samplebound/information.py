"""Entropy, divergence and mutual information on finite joints.

Everything here is exact summation over small tensors; there is no
estimation. Public results are in bits. Information densities are kept in
nats (the rest of the package assembles bound expressions in nats and
converts once).
"""

from __future__ import annotations

import numpy as np

from .probability import (
    DimensionMismatchError,
    FiniteDistribution,
    JointDistribution,
)

LN2 = float(np.log(2.0))


def entropy(p: FiniteDistribution) -> float:
    """Shannon entropy ``-sum p log2 p`` in bits."""
    pos = p.probs[p.probs > 0.0]
    return float(-(pos * np.log2(pos)).sum())


def kl_divergence(p: FiniteDistribution, q: FiniteDistribution) -> float:
    """``sum p log2(p/q)`` in bits.

    A support violation (p puts mass where q has none) yields ``inf``
    rather than raising; an infinite return value is the flag.
    """
    if p.labels != q.labels:
        raise DimensionMismatchError("kl_divergence: label mismatch")
    mask = p.probs > 0.0
    if np.any(q.probs[mask] <= 0.0):
        return float("inf")
    pp = p.probs[mask]
    qq = q.probs[mask]
    return float((pp * (np.log2(pp) - np.log2(qq))).sum())


def _require_two_axes(j: JointDistribution, who: str) -> None:
    if j.ndim != 2:
        raise DimensionMismatchError(f"{who}: need a 2-axis joint, got {j.ndim}")


def mutual_information(j: JointDistribution) -> float:
    """``I = sum m log2(m / (m0 x m1))`` in bits, zero-mass cells skipped."""
    _require_two_axes(j, "mutual_information")
    m = j.mass
    m0 = m.sum(axis=1)
    m1 = m.sum(axis=0)
    prod = np.outer(m0, m1)
    pos = m > 0.0
    val = (m[pos] * (np.log(m[pos]) - np.log(prod[pos]))).sum()
    return float(val / LN2)


def conditional_mutual_information(j: JointDistribution, cond_axis: int) -> float:
    """``I(A;B|C) = sum_c P(c) I(A;B|C=c)`` in bits for a 3-axis joint."""
    if j.ndim != 3:
        raise DimensionMismatchError(
            "conditional_mutual_information: need a 3-axis joint"
        )
    if not 0 <= cond_axis < 3:
        raise DimensionMismatchError("conditional_mutual_information: bad axis")
    mass = np.moveaxis(j.mass, cond_axis, 0)
    total = 0.0
    other = tuple(j.axes[i] for i in range(3) if i != cond_axis)
    for slab in mass:
        w = slab.sum()
        if w <= 0.0:
            continue
        total += w * mutual_information(JointDistribution(other, slab / w))
    return float(total)


class DensityTable:
    """Pointwise information density of a 2-axis joint, in nats.

    ``values[i, j] = ln(m[i, j] / (m0[i] * m1[j]))``; cells with zero
    joint mass carry ``-inf`` and are excluded from every moment (they
    never occur under the joint).
    """

    __slots__ = ("axes", "values", "joint")

    def __init__(self, axes, values: np.ndarray, joint: JointDistribution) -> None:
        self.axes = axes
        values.setflags(write=False)
        self.values = values
        self.joint = joint

    def expectation_nats(self) -> float:
        m = self.joint.mass
        pos = m > 0.0
        return float((m[pos] * self.values[pos]).sum())

    def expectation_bits(self) -> float:
        return self.expectation_nats() / LN2


def information_density(j: JointDistribution) -> DensityTable:
    """Density table of a 2-axis joint; expectation equals I in nats."""
    _require_two_axes(j, "information_density")
    m = j.mass
    m0 = m.sum(axis=1)
    m1 = m.sum(axis=0)
    prod = np.outer(m0, m1)
    values = np.full(m.shape, -np.inf)
    pos = m > 0.0
    values[pos] = np.log(m[pos]) - np.log(prod[pos])
    return DensityTable(j.axes, values, j)
