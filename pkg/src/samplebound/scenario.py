"""Finite learning problems, the fixed learner, and the scenario file format.

A :class:`LearningProblem` is a fully finite world: world labels with a
prior, a sample alphabet with per-world observability, hypothesis labels, a
nonnegative distortion matrix ``d(w, h)`` and the per-sample description
length ``b`` in bits.  An :class:`AlgorithmKernel` fixes the learner: one
row-stochastic kernel from the ordered-dataset universe of each size ``n``
to the hypothesis set.

Datasets are ordered tuples over the sample alphabet, so the universe of
size ``n`` has exactly ``|alphabet|**n`` elements and ``b = log2|alphabet|``
(possibly non-integer).  A dataset is obtainable from ``w`` iff every one of
its samples is observable from ``w``; for a tuple of worlds, a sample only
needs to be observable from at least one of them (union rule).

Scenario file format (JSON, ``version`` = 1), probabilities as decimal
strings so round-trips are exact::

    {
      "version": 1,
      "w": {"labels": [...], "p": ["0.8", "0.2"]},
      "samples": {"labels": [...], "b_bits": "1.0"},   # b_bits optional
      "observable": {"w0": ["s0", "s1"], ...},
      "h": {"labels": [...]},
      "distortion": [["0.0", "1.0"], ...],             # W x H, row-major
      "observation": [["0.9", "0.1"], ...],            # optional, W x S
      "algorithm": {
        "1": [["1.0", "0.0"], ...],                    # T_1 x H, rows in
        "2": [...],                                    # lexicographic
        "deterministic": {                             # tuple order
          "seed_p": ["0.5", "0.5"],
          "map": {"1": [["h0", "h1"], ...]}            # tuple x seed -> h
        }
      }
    }

``distortion`` may be replaced by a ``generative`` block (``p_x_given_w``,
``p_y_given_x``, ``hypotheses``, ``mode``, ``loss``); the sample labels then
enumerate (x, y) pairs row-major and the distortion matrix is computed from
the chosen divergence or loss.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from .probability import (
    ATOL,
    DegenerateInputError,
    FiniteDistribution,
    ProbabilityError,
    StochasticKernel,
)
from .information import kl_divergence

DEFAULT_ENUMERATION_CAP = 10**6


class ScenarioFormatError(ValueError):
    """Scenario file violates the schema; message carries the field path."""

    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


class EnumerationCapError(RuntimeError):
    """An exact enumeration would exceed the configured cap."""


class CapabilityError(KeyError):
    """The algorithm does not define a kernel for a requested dataset size."""


def _enumerate_tuples(base: int, length: int) -> np.ndarray:
    """All ordered index tuples of the given length, lexicographic order."""
    if length == 0:
        return np.zeros((1, 0), dtype=np.int64)
    idx = np.arange(base**length)
    return np.stack(np.unravel_index(idx, (base,) * length), axis=1).astype(np.int64)


@dataclass(frozen=True)
class LearningProblem:
    """Finite supervised-learning world with a fixed distortion matrix."""

    w_labels: tuple[str, ...]
    p_w: FiniteDistribution
    sample_labels: tuple[str, ...]
    observable: Mapping[str, frozenset[str]]
    h_labels: tuple[str, ...]
    distortion: np.ndarray  # (W, H), distortion units
    b: float  # bits per sample
    observation: StochasticKernel | None = None  # per-w sampling distribution

    def __post_init__(self) -> None:
        d = np.asarray(self.distortion, dtype=float)
        if d.shape != (len(self.w_labels), len(self.h_labels)):
            raise ProbabilityError("LearningProblem: distortion shape mismatch")
        if np.any(~np.isfinite(d)) or np.any(d < 0.0):
            raise ProbabilityError(
                "LearningProblem: distortion must be finite and nonnegative"
            )
        d.setflags(write=False)
        object.__setattr__(self, "distortion", d)
        if self.p_w.labels != self.w_labels:
            raise ProbabilityError("LearningProblem: p_w labels mismatch")
        sample_set = set(self.sample_labels)
        for w in self.w_labels:
            obs = self.observable.get(w)
            if not obs:
                raise ProbabilityError(f"LearningProblem: observable({w!r}) is empty")
            if not set(obs) <= sample_set:
                raise ProbabilityError(
                    f"LearningProblem: observable({w!r}) has unknown samples"
                )
        if not (self.b > 0.0 and math.isfinite(self.b)):
            raise ProbabilityError("LearningProblem: b must be a positive real")
        if abs(self.b - math.log2(len(self.sample_labels))) > 1e-9:
            raise ProbabilityError(
                "LearningProblem: b must equal log2(|sample alphabet|) for the "
                "full ordered-tuple dataset universe"
            )
        if self.observation is not None:
            ob = self.observation
            if ob.from_labels != self.w_labels or ob.to_labels != self.sample_labels:
                raise ProbabilityError("LearningProblem: observation labels mismatch")
            mask = self.observable_mask()
            if np.any(ob.rows[~mask] > 0.0):
                raise ProbabilityError(
                    "LearningProblem: observation puts mass on unobservable samples"
                )

    def observable_mask(self) -> np.ndarray:
        """Boolean (W, S) matrix of per-world sample observability."""
        mask = np.zeros((len(self.w_labels), len(self.sample_labels)), dtype=bool)
        s_index = {s: j for j, s in enumerate(self.sample_labels)}
        for i, w in enumerate(self.w_labels):
            for s in self.observable[w]:
                mask[i, s_index[s]] = True
        return mask

    @property
    def num_w(self) -> int:
        return len(self.w_labels)

    @property
    def num_h(self) -> int:
        return len(self.h_labels)

    @property
    def num_samples(self) -> int:
        return len(self.sample_labels)


@dataclass(frozen=True)
class SeedForm:
    """Deterministic-map-plus-seed representation of a randomized learner."""

    seed_p: FiniteDistribution
    maps: Mapping[int, tuple[tuple[str, ...], ...]]  # n -> (tuple idx, seed idx) -> h

    def kernel_for(self, n: int, universe: "DatasetUniverse", h_labels) -> StochasticKernel:
        table = self.maps[n]
        h_index = {h: j for j, h in enumerate(h_labels)}
        rows = np.zeros((len(table), len(h_labels)))
        for t, per_seed in enumerate(table):
            for r, h in enumerate(per_seed):
                rows[t, h_index[h]] += self.seed_p.probs[r]
        return StochasticKernel(universe.labels, tuple(h_labels), rows)


class AlgorithmKernel:
    """The fixed randomized learner: per dataset size n, a kernel T_n -> H."""

    def __init__(
        self,
        kernels: Mapping[int, StochasticKernel],
        seed_form: SeedForm | None = None,
    ) -> None:
        self._kernels = dict(kernels)
        self.seed_form = seed_form
        for n, k in self._kernels.items():
            if n < 0:
                raise ProbabilityError("AlgorithmKernel: negative dataset size")
            if seed_form is not None and n in seed_form.maps:
                derived = _seed_rows(seed_form, n, k.to_labels)
                if np.max(np.abs(derived - k.rows)) > ATOL:
                    raise ProbabilityError(
                        f"AlgorithmKernel: seed form for n={n} does not "
                        "marginalize to the kernel rows"
                    )

    def sizes(self) -> list[int]:
        return sorted(self._kernels)

    def __contains__(self, n: int) -> bool:
        return n in self._kernels

    def kernel_for(self, n: int) -> StochasticKernel:
        try:
            return self._kernels[n]
        except KeyError:
            raise CapabilityError(
                f"algorithm has no kernel for dataset size n={n}"
            ) from None

    def rows_for(self, n: int) -> np.ndarray:
        return self.kernel_for(n).rows


def _seed_rows(seed_form: SeedForm, n: int, h_labels) -> np.ndarray:
    table = seed_form.maps[n]
    h_index = {h: j for j, h in enumerate(h_labels)}
    rows = np.zeros((len(table), len(h_labels)))
    for t, per_seed in enumerate(table):
        for r, h in enumerate(per_seed):
            rows[t, h_index[h]] += seed_form.seed_p.probs[r]
    return rows


class DatasetUniverse:
    """Ordered n-tuples over the sample alphabet, lexicographic order.

    Size 0 is allowed (a single empty dataset); it is what remove-one
    stability at n=1 and bound evaluations at n=0 operate on.
    """

    __slots__ = ("problem", "n", "tuples", "labels")

    def __init__(self, problem: LearningProblem, n: int, cap: int = DEFAULT_ENUMERATION_CAP):
        if n < 0:
            raise ValueError("DatasetUniverse: n must be >= 0")
        size = problem.num_samples**n
        if size > cap:
            raise EnumerationCapError(
                f"universe size {problem.num_samples}^{n} = {size} exceeds cap {cap}"
            )
        self.problem = problem
        self.n = n
        self.tuples = _enumerate_tuples(problem.num_samples, n)
        self.labels = tuple(
            tuple(problem.sample_labels[j] for j in row) for row in self.tuples
        )

    def __len__(self) -> int:
        return self.tuples.shape[0]

    def obtainable_mask(self, w_index: int) -> np.ndarray:
        """Datasets whose every sample is observable from world ``w_index``."""
        obs = self.problem.observable_mask()[w_index]
        if self.n == 0:
            return np.ones(1, dtype=bool)
        return obs[self.tuples].all(axis=1)

    def obtainable_mask_for_worlds(self, w_indices: Sequence[int]) -> np.ndarray:
        """Union rule: each sample observable from at least one listed world."""
        obs = self.problem.observable_mask()[list(w_indices)].any(axis=0)
        if self.n == 0:
            return np.ones(1, dtype=bool)
        return obs[self.tuples].all(axis=1)


def dataset_universe(
    problem: LearningProblem, n: int, cap: int = DEFAULT_ENUMERATION_CAP
) -> DatasetUniverse:
    return DatasetUniverse(problem, n, cap=cap)


def expected_distortion_by_dataset(
    problem: LearningProblem, algorithm: AlgorithmKernel, n: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> tuple[DatasetUniverse, np.ndarray]:
    """Universe plus the (W, T_n) matrix ``E_{H|t}[d(w, H)]``."""
    universe = dataset_universe(problem, n, cap=cap)
    rows = algorithm.rows_for(n)
    if rows.shape != (len(universe), problem.num_h):
        raise ProbabilityError(
            f"algorithm kernel for n={n} has shape {rows.shape}, expected "
            f"({len(universe)}, {problem.num_h})"
        )
    return universe, problem.distortion @ rows.T


def build_from_generative(
    p_w: FiniteDistribution,
    p_x_given_w: StochasticKernel,
    p_y_given_x: StochasticKernel,
    hypothesis_predictives: Mapping[str, StochasticKernel],
    mode: str,
    loss_table=None,
) -> LearningProblem:
    """Assemble a problem from a generative description.

    ``mode="kl"``: d(w, h) is the observation-weighted KL divergence (bits)
    between the true label channel and hypothesis h's predictive, averaged
    over x ~ P(x|w).  A hypothesis putting zero mass where the truth is
    positive makes the distortion infinite and is rejected.

    ``mode="loss"``: d(w, h) is the expected loss ``E[l(y_true, y_pred)]``
    with ``loss_table[y_true][y_pred]`` and y_pred drawn from hypothesis h's
    predictive (a point mass for deterministic hypotheses).
    """
    if p_w.labels != p_x_given_w.from_labels:
        raise ProbabilityError("build_from_generative: p_w / p_x_given_w mismatch")
    if p_x_given_w.to_labels != p_y_given_x.from_labels:
        raise ProbabilityError("build_from_generative: x-label mismatch")
    if mode not in ("kl", "loss"):
        raise ValueError(f"build_from_generative: unknown mode {mode!r}")
    x_labels = p_y_given_x.from_labels
    y_labels = p_y_given_x.to_labels
    h_labels = tuple(hypothesis_predictives)
    if mode == "loss":
        if loss_table is None:
            raise ValueError("build_from_generative: loss mode needs a loss_table")
        loss = np.asarray(loss_table, dtype=float)
        if loss.shape != (len(y_labels), len(y_labels)):
            raise ProbabilityError("build_from_generative: loss_table shape mismatch")
        if np.any(~np.isfinite(loss)) or np.any(loss < 0.0):
            raise ProbabilityError("build_from_generative: loss_table must be finite >= 0")
    elif loss_table is not None:
        raise ValueError("build_from_generative: loss_table given but mode is 'kl'")

    for h, pred in hypothesis_predictives.items():
        if pred.from_labels != x_labels or pred.to_labels != y_labels:
            raise ProbabilityError(
                f"build_from_generative: hypothesis {h!r} predictive labels mismatch"
            )

    sample_labels = tuple(f"{x}|{y}" for x in x_labels for y in y_labels)
    n_y = len(y_labels)
    w_labels = p_w.labels
    distortion = np.zeros((len(w_labels), len(h_labels)))
    observation_rows = np.zeros((len(w_labels), len(sample_labels)))
    observable: dict[str, frozenset[str]] = {}

    for i, w in enumerate(w_labels):
        px = p_x_given_w.rows[i]
        obs_set = []
        for a, x in enumerate(x_labels):
            if px[a] <= 0.0:
                continue
            truth = FiniteDistribution(y_labels, p_y_given_x.rows[a])
            for j, h in enumerate(h_labels):
                pred = hypothesis_predictives[h]
                if mode == "kl":
                    div = kl_divergence(truth, FiniteDistribution(y_labels, pred.rows[a]))
                    if math.isinf(div):
                        raise ProbabilityError(
                            f"build_from_generative: hypothesis {h!r} has zero "
                            f"mass where the truth is positive at x={x!r}; "
                            "distortion would be unbounded"
                        )
                    distortion[i, j] += px[a] * div
                else:
                    distortion[i, j] += px[a] * float(
                        truth.probs @ loss @ pred.rows[a]
                    )
            for c, y in enumerate(y_labels):
                mass = px[a] * p_y_given_x.rows[a, c]
                if mass > 0.0:
                    observation_rows[i, a * n_y + c] = mass
                    obs_set.append(sample_labels[a * n_y + c])
        observable[w] = frozenset(obs_set)

    observation = StochasticKernel.from_rows(w_labels, sample_labels, observation_rows)
    return LearningProblem(
        w_labels=w_labels,
        p_w=p_w,
        sample_labels=sample_labels,
        observable=observable,
        h_labels=h_labels,
        distortion=distortion,
        b=math.log2(len(sample_labels)),
        observation=observation,
    )


def grid_partition(
    base_p_x: FiniteDistribution, region_of: Mapping[str, str]
) -> tuple[FiniteDistribution, StochasticKernel]:
    """Partition a base distribution into regions.

    Returns the region-mass distribution and the per-region renormalized
    restriction of the base, ordered by first appearance of each region id
    in the base's label order.  The mixture of the rows under the region
    masses reproduces the base exactly.
    """
    regions: list[str] = []
    for x in base_p_x.labels:
        r = region_of[x]
        if r not in regions:
            regions.append(r)
    masses = np.zeros(len(regions))
    rows = np.zeros((len(regions), len(base_p_x.labels)))
    for j, x in enumerate(base_p_x.labels):
        i = regions.index(region_of[x])
        masses[i] += base_p_x.probs[j]
        rows[i, j] = base_p_x.probs[j]
    if np.any(masses <= 0.0):
        dead = regions[int(np.argmin(masses))]
        raise DegenerateInputError(f"grid_partition: region {dead!r} has zero mass")
    p_w = FiniteDistribution.from_weights(tuple(regions), masses)
    kernel = StochasticKernel.from_rows(tuple(regions), base_p_x.labels, rows)
    return p_w, kernel


def world_tuples(problem: LearningProblem, k: int) -> np.ndarray:
    """All ordered k-tuples of world indices, lexicographic order."""
    return _enumerate_tuples(problem.num_w, k)


def _product_rows(rows: np.ndarray, k: int) -> np.ndarray:
    """Row-wise k-fold tensor power: (N, S) -> (N^k, S^k), lex order."""
    out = rows
    n, s = rows.shape
    for _ in range(k - 1):
        out = (out[:, None, :, None] * rows[None, :, None, :]).reshape(
            out.shape[0] * n, out.shape[1] * s
        )
    return out


def iid_strategy(
    problem: LearningProblem,
    k: int,
    observation: StochasticKernel | None = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> StochasticKernel:
    """The i.i.d. baseline: n = k, one sample per world, drawn independently.

    Row for a world tuple is the product of the per-coordinate observation
    distributions; structural zeros on unobservable samples are inherited
    from the observation model.
    """
    obs = observation if observation is not None else problem.observation
    if obs is None:
        raise ValueError("iid_strategy: no observation model available")
    if k < 1:
        raise ValueError("iid_strategy: k must be >= 1")
    if problem.num_w**k * problem.num_samples**k > cap:
        raise EnumerationCapError("iid_strategy: W^k x S^k exceeds cap")
    universe = dataset_universe(problem, k, cap=cap)
    rows = _product_rows(obs.rows, k)
    wt = world_tuples(problem, k)
    from_labels = tuple(tuple(problem.w_labels[i] for i in row) for row in wt)
    return StochasticKernel(from_labels, universe.labels, rows)


def iid_kernel(
    problem: LearningProblem,
    n: int,
    observation: StochasticKernel | None = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> StochasticKernel:
    """n independent draws from a single world's observation distribution.

    This is the W -> T_n kernel used by the diagnostics that compare the
    optimal strategy against plain repeated sampling of one world.
    """
    obs = observation if observation is not None else problem.observation
    if obs is None:
        raise ValueError("iid_kernel: no observation model available")
    universe = dataset_universe(problem, n, cap=cap)
    if n == 0:
        rows = np.ones((problem.num_w, 1))
    else:
        rows = obs.rows[:, universe.tuples].prod(axis=2)
    return StochasticKernel(problem.w_labels, universe.labels, rows)


# ---------------------------------------------------------------------------
# Built-in scenarios
# ---------------------------------------------------------------------------

def majority_vote_algorithm(
    problem: LearningProblem, sizes: Sequence[int], cap: int = DEFAULT_ENUMERATION_CAP
) -> AlgorithmKernel:
    """Deterministic majority vote; needs |samples| == |hypotheses|.

    Dataset sample counts are tallied per index and the hypothesis with the
    highest count wins; ties go to the lowest hypothesis index (so the empty
    dataset maps to the first hypothesis).
    """
    if problem.num_samples != problem.num_h:
        raise ProbabilityError("majority_vote_algorithm: |samples| != |hypotheses|")
    kernels = {}
    for n in sizes:
        universe = dataset_universe(problem, n, cap=cap)
        rows = np.zeros((len(universe), problem.num_h))
        for t, tup in enumerate(universe.tuples):
            counts = np.bincount(tup, minlength=problem.num_samples)
            rows[t, int(np.argmax(counts))] = 1.0
        kernels[n] = StochasticKernel(universe.labels, problem.h_labels, rows)
    return AlgorithmKernel(kernels)


def _binary_problem(p0: float) -> LearningProblem:
    w_labels = ("w0", "w1")
    sample_labels = ("s0", "s1")
    h_labels = ("h0", "h1")
    return LearningProblem(
        w_labels=w_labels,
        p_w=FiniteDistribution(w_labels, [p0, 1.0 - p0]),
        sample_labels=sample_labels,
        observable={w: frozenset(sample_labels) for w in w_labels},
        h_labels=h_labels,
        distortion=np.array([[0.0, 1.0], [1.0, 0.0]]),
        b=1.0,
    )


BUILTIN_NAMES = ("SYM2", "SKEW2")


def builtin_scenario(
    name: str, max_n: int = 8
) -> tuple[LearningProblem, AlgorithmKernel]:
    """Canonical binary scenarios.

    SYM2: uniform two-world prior, two samples observable from both worlds,
    identity learner at n=1, 0/1 distortion, b=1.  SKEW2 is the same with
    prior (0.8, 0.2).  For n != 1 the learner is majority vote with ties to
    h0.  Both reduce exactly to textbook binary-source rate-distortion with
    per-symbol error, which is what makes them useful as closed-form
    references.
    """
    if name == "SYM2":
        problem = _binary_problem(0.5)
    elif name == "SKEW2":
        problem = _binary_problem(0.8)
    else:
        raise KeyError(f"unknown builtin scenario {name!r}")
    algorithm = majority_vote_algorithm(problem, range(0, max_n + 1))
    return problem, algorithm


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _parse_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (str, int, float)):
        raise ScenarioFormatError(path, f"expected a decimal number, got {value!r}")
    try:
        return float(value)
    except ValueError:
        raise ScenarioFormatError(path, f"not a decimal number: {value!r}") from None


def _parse_matrix(value, shape, path: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) != shape[0]:
        raise ScenarioFormatError(path, f"expected {shape[0]} rows")
    out = np.zeros(shape)
    for i, row in enumerate(value):
        if not isinstance(row, list) or len(row) != shape[1]:
            raise ScenarioFormatError(f"{path}[{i}]", f"expected {shape[1]} entries")
        for j, cell in enumerate(row):
            out[i, j] = _parse_number(cell, f"{path}[{i}][{j}]")
    return out


def _parse_labels(value, path: str) -> tuple[str, ...]:
    if (
        not isinstance(value, list)
        or not value
        or not all(isinstance(s, str) for s in value)
    ):
        raise ScenarioFormatError(path, "expected a nonempty list of strings")
    if len(set(value)) != len(value):
        raise ScenarioFormatError(path, "labels are not unique")
    return tuple(value)


def scenario_to_dict(problem: LearningProblem, algorithm: AlgorithmKernel) -> dict:
    """Canonical JSON-ready form with decimal-string numbers."""
    doc: dict = {"version": 1}
    doc["w"] = {
        "labels": list(problem.w_labels),
        "p": [_fmt(x) for x in problem.p_w.probs],
    }
    doc["samples"] = {
        "labels": list(problem.sample_labels),
        "b_bits": _fmt(problem.b),
    }
    doc["observable"] = {
        w: sorted(problem.observable[w], key=problem.sample_labels.index)
        for w in problem.w_labels
    }
    doc["h"] = {"labels": list(problem.h_labels)}
    doc["distortion"] = [[_fmt(x) for x in row] for row in problem.distortion]
    if problem.observation is not None:
        doc["observation"] = [[_fmt(x) for x in row] for row in problem.observation.rows]
    alg: dict = {}
    for n in algorithm.sizes():
        alg[str(n)] = [[_fmt(x) for x in row] for row in algorithm.rows_for(n)]
    if algorithm.seed_form is not None:
        sf = algorithm.seed_form
        alg["deterministic"] = {
            "seed_p": [_fmt(x) for x in sf.seed_p.probs],
            "map": {
                str(n): [list(per_seed) for per_seed in table]
                for n, table in sorted(sf.maps.items())
            },
        }
    doc["algorithm"] = alg
    return doc


def save_scenario(problem: LearningProblem, algorithm: AlgorithmKernel, path) -> None:
    text = json.dumps(scenario_to_dict(problem, algorithm), indent=2, ensure_ascii=False)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def scenario_from_dict(doc: dict) -> tuple[LearningProblem, AlgorithmKernel]:
    if not isinstance(doc, dict):
        raise ScenarioFormatError("$", "scenario must be a JSON object")
    if doc.get("version") != 1:
        raise ScenarioFormatError("version", f"unsupported version {doc.get('version')!r}")

    w_block = doc.get("w")
    if not isinstance(w_block, dict):
        raise ScenarioFormatError("w", "missing or not an object")
    w_labels = _parse_labels(w_block.get("labels"), "w.labels")
    p_raw = w_block.get("p")
    if not isinstance(p_raw, list) or len(p_raw) != len(w_labels):
        raise ScenarioFormatError("w.p", f"expected {len(w_labels)} entries")
    try:
        p_w = FiniteDistribution(
            w_labels, [_parse_number(x, f"w.p[{i}]") for i, x in enumerate(p_raw)]
        )
    except ProbabilityError as exc:
        raise ScenarioFormatError("w.p", str(exc)) from None

    s_block = doc.get("samples")
    if not isinstance(s_block, dict):
        raise ScenarioFormatError("samples", "missing or not an object")
    sample_labels = _parse_labels(s_block.get("labels"), "samples.labels")
    if "b_bits" in s_block:
        b = _parse_number(s_block["b_bits"], "samples.b_bits")
    else:
        b = math.log2(len(sample_labels))

    obs_block = doc.get("observable")
    if not isinstance(obs_block, dict) or set(obs_block) != set(w_labels):
        raise ScenarioFormatError("observable", "must list exactly the w labels")
    observable = {}
    for w in w_labels:
        entries = obs_block[w]
        if not isinstance(entries, list) or not entries:
            raise ScenarioFormatError(f"observable.{w}", "expected a nonempty list")
        unknown = set(entries) - set(sample_labels)
        if unknown:
            raise ScenarioFormatError(f"observable.{w}", f"unknown samples {sorted(unknown)}")
        observable[w] = frozenset(entries)

    h_block = doc.get("h")
    if not isinstance(h_block, dict):
        raise ScenarioFormatError("h", "missing or not an object")
    h_labels = _parse_labels(h_block.get("labels"), "h.labels")

    if "generative" in doc:
        problem = _problem_from_generative_block(
            doc["generative"], w_labels, p_w, sample_labels, h_labels
        )
        if problem.observable != observable:
            raise ScenarioFormatError(
                "observable", "does not match the generative supports"
            )
    else:
        if "distortion" not in doc:
            raise ScenarioFormatError("distortion", "need distortion or generative")
        distortion = _parse_matrix(
            doc["distortion"], (len(w_labels), len(h_labels)), "distortion"
        )
        observation = None
        if "observation" in doc:
            rows = _parse_matrix(
                doc["observation"], (len(w_labels), len(sample_labels)), "observation"
            )
            try:
                observation = StochasticKernel(w_labels, sample_labels, rows)
            except ProbabilityError as exc:
                raise ScenarioFormatError("observation", str(exc)) from None
        try:
            problem = LearningProblem(
                w_labels=w_labels,
                p_w=p_w,
                sample_labels=sample_labels,
                observable=observable,
                h_labels=h_labels,
                distortion=distortion,
                b=b,
                observation=observation,
            )
        except ProbabilityError as exc:
            raise ScenarioFormatError("distortion", str(exc)) from None

    alg_block = doc.get("algorithm")
    if not isinstance(alg_block, dict) or not alg_block:
        raise ScenarioFormatError("algorithm", "missing or empty")
    kernels = {}
    seed_form = None
    for key, value in alg_block.items():
        if key == "deterministic":
            seed_form = _parse_seed_form(value, problem, h_labels)
            continue
        try:
            n = int(key)
        except ValueError:
            raise ScenarioFormatError(f"algorithm.{key}", "key must be an int or 'deterministic'") from None
        universe = dataset_universe(problem, n)
        rows = _parse_matrix(value, (len(universe), len(h_labels)), f"algorithm.{key}")
        try:
            kernels[n] = StochasticKernel(universe.labels, h_labels, rows)
        except ProbabilityError as exc:
            raise ScenarioFormatError(f"algorithm.{key}", str(exc)) from None
    if seed_form is not None and not kernels:
        for n in seed_form.maps:
            universe = dataset_universe(problem, n)
            kernels[n] = seed_form.kernel_for(n, universe, h_labels)
    try:
        algorithm = AlgorithmKernel(kernels, seed_form=seed_form)
    except ProbabilityError as exc:
        raise ScenarioFormatError("algorithm", str(exc)) from None
    return problem, algorithm


def _parse_seed_form(value, problem: LearningProblem, h_labels) -> SeedForm:
    if not isinstance(value, dict):
        raise ScenarioFormatError("algorithm.deterministic", "expected an object")
    seed_raw = value.get("seed_p")
    if not isinstance(seed_raw, list) or not seed_raw:
        raise ScenarioFormatError("algorithm.deterministic.seed_p", "expected a list")
    seed_labels = tuple(f"r{i}" for i in range(len(seed_raw)))
    try:
        seed_p = FiniteDistribution(
            seed_labels,
            [_parse_number(x, f"algorithm.deterministic.seed_p[{i}]") for i, x in enumerate(seed_raw)],
        )
    except ProbabilityError as exc:
        raise ScenarioFormatError("algorithm.deterministic.seed_p", str(exc)) from None
    map_block = value.get("map")
    if not isinstance(map_block, dict) or not map_block:
        raise ScenarioFormatError("algorithm.deterministic.map", "missing or empty")
    maps = {}
    for key, table in map_block.items():
        path = f"algorithm.deterministic.map.{key}"
        try:
            n = int(key)
        except ValueError:
            raise ScenarioFormatError(path, "key must be an int") from None
        universe = dataset_universe(problem, n)
        if not isinstance(table, list) or len(table) != len(universe):
            raise ScenarioFormatError(path, f"expected {len(universe)} tuple rows")
        parsed = []
        for t, per_seed in enumerate(table):
            if not isinstance(per_seed, list) or len(per_seed) != len(seed_labels):
                raise ScenarioFormatError(f"{path}[{t}]", f"expected {len(seed_labels)} entries")
            for h in per_seed:
                if h not in h_labels:
                    raise ScenarioFormatError(f"{path}[{t}]", f"unknown hypothesis {h!r}")
            parsed.append(tuple(per_seed))
        maps[n] = tuple(parsed)
    return SeedForm(seed_p=seed_p, maps=maps)


def _problem_from_generative_block(
    block, w_labels, p_w, sample_labels, h_labels
) -> LearningProblem:
    if not isinstance(block, dict):
        raise ScenarioFormatError("generative", "expected an object")
    for field_name in ("p_x_given_w", "p_y_given_x", "hypotheses", "mode"):
        if field_name not in block:
            raise ScenarioFormatError(f"generative.{field_name}", "missing")
    x_block = block["p_x_given_w"]
    y_block = block["p_y_given_x"]
    x_labels = _parse_labels(x_block.get("x_labels"), "generative.p_x_given_w.x_labels")
    y_labels = _parse_labels(y_block.get("y_labels"), "generative.p_y_given_x.y_labels")
    if len(sample_labels) != len(x_labels) * len(y_labels):
        raise ScenarioFormatError(
            "samples.labels", "must enumerate (x, y) pairs row-major"
        )
    try:
        p_x_given_w = StochasticKernel(
            w_labels, x_labels,
            _parse_matrix(x_block.get("rows"), (len(w_labels), len(x_labels)),
                          "generative.p_x_given_w.rows"),
        )
        p_y_given_x = StochasticKernel(
            x_labels, y_labels,
            _parse_matrix(y_block.get("rows"), (len(x_labels), len(y_labels)),
                          "generative.p_y_given_x.rows"),
        )
    except ProbabilityError as exc:
        raise ScenarioFormatError("generative", str(exc)) from None
    hyp_block = block["hypotheses"]
    if not isinstance(hyp_block, dict) or set(hyp_block) != set(h_labels):
        raise ScenarioFormatError("generative.hypotheses", "must list exactly the h labels")
    predictives = {}
    for h in h_labels:
        try:
            predictives[h] = StochasticKernel(
                x_labels, y_labels,
                _parse_matrix(hyp_block[h], (len(x_labels), len(y_labels)),
                              f"generative.hypotheses.{h}"),
            )
        except ProbabilityError as exc:
            raise ScenarioFormatError(f"generative.hypotheses.{h}", str(exc)) from None
    mode = block["mode"]
    loss = None
    if mode == "loss":
        loss = _parse_matrix(
            block.get("loss"), (len(y_labels), len(y_labels)), "generative.loss"
        )
    try:
        built = build_from_generative(p_w, p_x_given_w, p_y_given_x, predictives, mode, loss)
    except (ProbabilityError, ValueError) as exc:
        raise ScenarioFormatError("generative", str(exc)) from None
    if built.sample_labels != sample_labels:
        raise ScenarioFormatError(
            "samples.labels",
            f"expected the generative pair labels {list(built.sample_labels)}",
        )
    return built


def load_scenario(path) -> tuple[LearningProblem, AlgorithmKernel]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioFormatError("$", f"invalid JSON: {exc}") from None
    return scenario_from_dict(doc)


def load_builtin_file(name: str) -> tuple[LearningProblem, AlgorithmKernel]:
    """Load one of the shipped scenario data files (SYM2 or SKEW2)."""
    fname = {"SYM2": "sym2.json", "SKEW2": "skew2.json"}[name]
    ref = resources.files("samplebound.data") / fname
    with resources.as_file(ref) as p:
        return load_scenario(p)
