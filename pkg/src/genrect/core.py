"""Shock spaces, priors, capacities and finite-depth adapted trees.

Everything here lives in utility units.  A run fixes a discount factor
``beta``; per-period utilities are confined to ``[beta - 1, 1 - beta]`` so
that discounted lifetime utilities fall in ``[-1, 1]``.

Trees are complete and dense.  Paths are indexed by their base-``n`` digits,
so the leaf of path ``(s_1, ..., s_T)`` sits at ``sum_t s_t * n**(T - t)``
(lexicographic order).  Node-valued trees (consumption plans) are stored
level by level, each level in lexicographic order.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError

PRIOR_TOL = 1e-12
RANGE_TOL = 1e-12
DEFAULT_MAX_LEAVES = 2**20

LEAF_VALUES = "leaf_values"
NODE_VALUES = "node_values"


def max_leaves() -> int:
    """Leaf cap for dense trees; ``RECT_MAX_LEAVES`` overrides the default."""
    raw = os.environ.get("RECT_MAX_LEAVES")
    if raw is None:
        return DEFAULT_MAX_LEAVES
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"RECT_MAX_LEAVES must be an integer, got {raw!r}", "CAP_EXCEEDED")
    if value < 1:
        raise ConfigurationError("RECT_MAX_LEAVES must be positive", "CAP_EXCEEDED")
    return value


def check_leaf_cap(n: int, depth: int) -> None:
    if n**depth > max_leaves():
        raise ConfigurationError(
            f"tree with {n}**{depth} leaves exceeds the cap of {max_leaves()}", "CAP_EXCEEDED"
        )


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ShockSpace:
    """The finite per-period state set, in a fixed index order."""

    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ConfigurationError("a shock space needs at least two states", "STATES")
        if len(set(labels)) != len(labels):
            raise ConfigurationError(f"state labels must be distinct: {labels}", "STATES")

    @classmethod
    def of_size(cls, n: int) -> "ShockSpace":
        return cls(tuple(chr(ord("a") + i) if n <= 26 else f"s{i}" for i in range(n)))

    @property
    def n(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise DomainError(f"unknown state {label!r}") from None

    @property
    def full_mask(self) -> int:
        return (1 << self.n) - 1

    def subset_key(self, mask: int) -> str:
        """Concatenated labels of the subset, in state index order."""
        return "".join(lab for i, lab in enumerate(self.labels) if mask >> i & 1)

    def parse_subset(self, key: str) -> int:
        lookup = self._key_lookup()
        if key not in lookup:
            raise ConfigurationError(f"cannot parse subset key {key!r}", "CAPACITY")
        return lookup[key]

    def _key_lookup(self) -> dict[str, int]:
        table: dict[str, int] = {}
        for mask in range(1 << self.n):
            key = self.subset_key(mask)
            if key in table:
                raise ConfigurationError(
                    f"subset key {key!r} is ambiguous for labels {self.labels}", "CAPACITY"
                )
            table[key] = mask
        return table


@dataclass(frozen=True)
class Prior:
    """A probability vector over the states."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise ConfigurationError("prior weights must be a non-empty vector", "PRIOR")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ConfigurationError(f"prior weights must be non-negative: {w}", "PRIOR")
        if abs(w.sum() - 1.0) > PRIOR_TOL:
            raise ConfigurationError(f"prior weights sum to {w.sum()!r}, not 1", "PRIOR")
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def uniform(cls, n: int) -> "Prior":
        return cls(np.full(n, 1.0 / n))

    @property
    def n(self) -> int:
        return self.weights.size

    def prob(self, mask: int) -> float:
        return float(sum(self.weights[i] for i in range(self.n) if mask >> i & 1))


@dataclass(frozen=True)
class Capacity:
    """Monotone normalized set function on ``2^S``, stored by bitmask."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        size = v.size
        n = size.bit_length() - 1
        if size < 4 or 1 << n != size:
            raise ConfigurationError("capacity needs one value per subset of S (2**n entries)", "CAPACITY")
        if v[0] != 0.0 or v[-1] != 1.0:
            raise ConfigurationError("capacity must satisfy v(empty)=0 and v(S)=1", "CAPACITY")
        if np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v)):
            raise ConfigurationError("capacity values must lie in [0, 1]", "CAPACITY")
        for mask in range(size):
            for i in range(n):
                bigger = mask | (1 << i)
                if bigger != mask and v[mask] > v[bigger]:
                    raise ConfigurationError(
                        f"capacity is not monotone: v({mask:b}) > v({bigger:b})", "CAPACITY"
                    )
        object.__setattr__(self, "values", _frozen(v))

    @property
    def n(self) -> int:
        return self.values.size.bit_length() - 1

    def __call__(self, mask: int) -> float:
        return float(self.values[mask])

    @classmethod
    def from_prior(cls, prior: Prior) -> "Capacity":
        n = prior.n
        vals = np.array([prior.prob(m) for m in range(1 << n)])
        vals[0], vals[-1] = 0.0, 1.0
        return cls(np.clip(vals, 0.0, 1.0))

    @classmethod
    def lower_envelope(cls, priors: Sequence[Prior]) -> "Capacity":
        """``A -> min over priors of l(A)``, the lower probability of a prior set."""
        if not priors:
            raise ConfigurationError("lower envelope of an empty prior set", "PRIOR")
        n = priors[0].n
        vals = np.array([min(p.prob(m) for p in priors) for m in range(1 << n)])
        vals[0], vals[-1] = 0.0, 1.0
        return cls(np.clip(vals, 0.0, 1.0))

    @classmethod
    def from_dict(cls, data: dict, space: ShockSpace) -> "Capacity":
        subsets = data.get("subsets") if isinstance(data, dict) else None
        if not isinstance(subsets, dict):
            raise ConfigurationError('capacity must be given as {"subsets": {...}}', "CAPACITY")
        vals = np.full(1 << space.n, np.nan)
        vals[0] = 0.0
        vals[-1] = 1.0
        for key, value in subsets.items():
            vals[space.parse_subset(key)] = float(value)
        missing = [space.subset_key(m) for m in range(1 << space.n) if np.isnan(vals[m])]
        if missing:
            raise ConfigurationError(f"capacity is missing subsets {missing}", "CAPACITY")
        return cls(vals)

    def to_dict(self, space: ShockSpace) -> dict:
        return {"subsets": {space.subset_key(m): float(self.values[m]) for m in range(1, 1 << self.n)}}


@dataclass(frozen=True)
class DiscountedUtilityScale:
    """Discount factor with the normalization ``u(X) = [beta-1, 1-beta]``."""

    beta: float

    def __post_init__(self):
        b = float(self.beta)
        if not 0.0 < b < 1.0:
            raise ConfigurationError(f"beta must lie in (0, 1), got {b}", "BETA_RANGE")
        object.__setattr__(self, "beta", b)

    @property
    def period_bounds(self) -> tuple[float, float]:
        return (self.beta - 1.0, 1.0 - self.beta)

    @property
    def lifetime_bounds(self) -> tuple[float, float]:
        return (-1.0, 1.0)


def lottery_utility(probabilities: Sequence[float], utilities: Sequence[float]) -> float:
    """Utility of a finite lottery under an affine utility: ``sum p_i u(c_i)``."""
    p = Prior(np.asarray(probabilities, dtype=float))
    u = np.asarray(utilities, dtype=float)
    if u.shape != p.weights.shape:
        raise DomainError("lottery support and utility table differ in length")
    return float(p.weights @ u)


def node_count(n: int, depth: int) -> int:
    return (n ** (depth + 1) - 1) // (n - 1)


@dataclass(frozen=True)
class AdaptedTree:
    """A depth-``T`` complete ``n``-ary tree carrying leaf or node values.

    ``kind == "leaf_values"`` holds a lifetime-utility variable (one value per
    depth-``T`` path, each in ``[-1, 1]``).  ``kind == "node_values"`` holds a
    consumption plan in per-period utility units; the depth-``T`` values are
    repeated forever as a constant tail.  ``beta`` is required for plans.
    """

    space: ShockSpace
    depth: int
    kind: str
    values: np.ndarray
    beta: float | None = None

    def __post_init__(self):
        n = self.space.n
        if not isinstance(self.depth, (int, np.integer)) or self.depth < 0:
            raise ConfigurationError(f"tree depth must be a non-negative integer, got {self.depth!r}", "MALFORMED_TREE")
        object.__setattr__(self, "depth", int(self.depth))
        check_leaf_cap(n, self.depth)
        vals = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(vals)):
            raise ConfigurationError("tree values must be finite", "MALFORMED_TREE")
        if self.kind == LEAF_VALUES:
            expected = n**self.depth
            if vals.size != expected:
                raise ConfigurationError(
                    f"leaf tree of depth {self.depth} over {n} states needs {expected} values, got {vals.size}",
                    "MALFORMED_TREE",
                )
            if np.any(np.abs(vals) > 1.0 + RANGE_TOL):
                raise DomainError("leaf values must lie in [-1, 1]")
        elif self.kind == NODE_VALUES:
            if self.beta is None:
                raise ConfigurationError("a node-valued tree needs beta", "MALFORMED_TREE")
            scale = DiscountedUtilityScale(self.beta)
            object.__setattr__(self, "beta", scale.beta)
            expected = node_count(n, self.depth)
            if vals.size != expected:
                raise ConfigurationError(
                    f"plan of depth {self.depth} over {n} states needs {expected} node values, got {vals.size}",
                    "MALFORMED_TREE",
                )
            hi = scale.period_bounds[1]
            if np.any(np.abs(vals) > hi + RANGE_TOL):
                raise DomainError(f"plan node values must lie in [{-hi}, {hi}]")
        else:
            raise ConfigurationError(f"unknown tree kind {self.kind!r}", "MALFORMED_TREE")
        object.__setattr__(self, "values", _frozen(vals))

    # constructors

    @classmethod
    def leaves(cls, space: ShockSpace, values, depth: int | None = None) -> "AdaptedTree":
        vals = np.asarray(values, dtype=float).ravel()
        if depth is None:
            depth = _depth_from_leaf_count(space.n, vals.size)
        return cls(space, depth, LEAF_VALUES, vals)

    @classmethod
    def plan(cls, space: ShockSpace, values, beta: float, depth: int | None = None) -> "AdaptedTree":
        vals = np.asarray(values, dtype=float).ravel()
        if depth is None:
            depth = _depth_from_node_count(space.n, vals.size)
        return cls(space, depth, NODE_VALUES, vals, beta)

    @classmethod
    def constant(cls, space: ShockSpace, depth: int, value: float) -> "AdaptedTree":
        return cls(space, depth, LEAF_VALUES, np.full(space.n**depth, float(value)))

    @classmethod
    def indicator(cls, space: ShockSpace, path: Sequence) -> "AdaptedTree":
        """Leaf tree equal to 1 on one path and 0 elsewhere."""
        idx = [space.index(s) if isinstance(s, str) else int(s) for s in path]
        vals = np.zeros(space.n ** len(idx))
        vals[path_index(space.n, idx)] = 1.0
        return cls(space, len(idx), LEAF_VALUES, vals)

    # accessors

    @property
    def n(self) -> int:
        return self.space.n

    def level(self, t: int) -> np.ndarray:
        """Node values at depth ``t`` (plans only), lexicographic order."""
        self._require(NODE_VALUES)
        if not 0 <= t <= self.depth:
            raise DomainError(f"level {t} outside 0..{self.depth}")
        start = node_count(self.n, t - 1) if t > 0 else 0
        return self.values[start : start + self.n**t]

    def leaf(self, path: Sequence[int]) -> float:
        self._require(LEAF_VALUES)
        if len(path) != self.depth:
            raise DomainError("path length must equal the tree depth")
        return float(self.values[path_index(self.n, path)])

    def shifted(self, s) -> "AdaptedTree":
        return shift(self, s)

    def with_values(self, values) -> "AdaptedTree":
        return AdaptedTree(self.space, self.depth, self.kind, values, self.beta)

    def _require(self, kind: str) -> None:
        if self.kind != kind:
            raise DomainError(f"operation needs a {kind} tree, got {self.kind}")

    # serialization

    def to_dict(self) -> dict:
        out = {
            "depth": self.depth,
            "states": list(self.space.labels),
            "kind": self.kind,
            "values": [float(v) for v in self.values],
        }
        if self.beta is not None:
            out = {"beta": self.beta, **out}
        return out

    @classmethod
    def from_dict(cls, data: dict, space: ShockSpace | None = None, beta: float | None = None) -> "AdaptedTree":
        try:
            states = data.get("states")
            kind = data["kind"]
            depth = data["depth"]
            values = data["values"]
        except (KeyError, AttributeError, TypeError):
            raise ConfigurationError("tree literal needs depth, kind and values", "MALFORMED_TREE") from None
        if states is not None:
            tree_space = ShockSpace(tuple(states))
            if space is not None and tree_space != space:
                raise ConfigurationError("tree states differ from the run's states", "MALFORMED_TREE")
            space = tree_space
        if space is None:
            raise ConfigurationError("tree literal needs its states", "MALFORMED_TREE")
        tree_beta = data.get("beta", beta)
        if kind == NODE_VALUES and tree_beta is None:
            raise ConfigurationError("plan literal needs beta", "MALFORMED_TREE")
        if not isinstance(values, list) or not all(isinstance(v, (int, float)) for v in values):
            raise ConfigurationError("tree values must be a flat list of numbers", "MALFORMED_TREE")
        if not isinstance(depth, int) or isinstance(depth, bool):
            raise ConfigurationError("tree depth must be an integer", "MALFORMED_TREE")
        return cls(space, depth, kind, np.asarray(values, dtype=float), tree_beta if kind == NODE_VALUES else None)


def path_index(n: int, path: Iterable[int]) -> int:
    idx = 0
    for s in path:
        if not 0 <= s < n:
            raise DomainError(f"state index {s} outside 0..{n - 1}")
        idx = idx * n + int(s)
    return idx


def _depth_from_leaf_count(n: int, count: int) -> int:
    depth, size = 0, 1
    while size < count:
        size *= n
        depth += 1
    if size != count:
        raise ConfigurationError(f"{count} leaves is not a power of {n}", "MALFORMED_TREE")
    return depth


def _depth_from_node_count(n: int, count: int) -> int:
    depth = 0
    while node_count(n, depth) < count:
        depth += 1
    if node_count(n, depth) != count:
        raise ConfigurationError(f"{count} nodes do not form a complete {n}-ary tree", "MALFORMED_TREE")
    return depth


def lifetime_utility(plan: AdaptedTree, scale: DiscountedUtilityScale | None = None) -> AdaptedTree:
    """Discounted lifetime utility of a plan, one value per depth-``T`` path.

    The leaf of path ``s^T`` is ``sum_{t<T} beta^t w_t(s^t) + beta^T w_T(s^T) / (1 - beta)``;
    the last term is the closed-form value of the constant tail.
    """
    plan._require(NODE_VALUES)
    beta = plan.beta if scale is None else scale.beta
    if scale is not None and abs(scale.beta - plan.beta) > 0:
        raise DomainError("plan beta differs from the scale's beta")
    n, T = plan.n, plan.depth
    acc = np.zeros(1)
    for t in range(T + 1):
        w = plan.level(t)
        weight = beta**t if t < T else beta**T / (1.0 - beta)
        acc = np.repeat(acc, n if t > 0 else 1) + weight * w
    return AdaptedTree(plan.space, T, LEAF_VALUES, np.clip(acc, -1.0, 1.0))


def shift(xi: AdaptedTree, s) -> AdaptedTree:
    """The continuation of ``xi`` after first-period state ``s`` (depth ``T - 1``)."""
    xi._require(LEAF_VALUES)
    if xi.depth == 0:
        raise DomainError("cannot shift a depth-0 tree")
    i = xi.space.index(s) if isinstance(s, str) else int(s)
    if not 0 <= i < xi.n:
        raise DomainError(f"state index {i} outside 0..{xi.n - 1}")
    block = xi.n ** (xi.depth - 1)
    return AdaptedTree(xi.space, xi.depth - 1, LEAF_VALUES, xi.values[i * block : (i + 1) * block])


def continuation_plan(plan: AdaptedTree, s) -> AdaptedTree:
    """The plan ``h^{s,1}`` re-rooted at child ``s``; a depth-0 plan is its own continuation."""
    plan._require(NODE_VALUES)
    i = plan.space.index(s) if isinstance(s, str) else int(s)
    if plan.depth == 0:
        return plan
    n = plan.n
    parts = [plan.level(t).reshape(n, -1)[i] for t in range(1, plan.depth + 1)]
    return AdaptedTree(plan.space, plan.depth - 1, NODE_VALUES, np.concatenate(parts), plan.beta)


def truncation_error_bound(T: int, scale: DiscountedUtilityScale) -> float:
    """Spread of lifetime utility left undetermined after ``T`` periods: ``2 beta^T``."""
    if T < 0:
        raise DomainError("truncation depth must be non-negative")
    return 2.0 * scale.beta**T


def random_tree(space: ShockSpace, depth: int, rng: np.random.Generator, low: float = -1.0, high: float = 1.0) -> AdaptedTree:
    return AdaptedTree.leaves(space, rng.uniform(low, high, space.n**depth), depth)


def random_plan(space: ShockSpace, depth: int, scale: DiscountedUtilityScale, rng: np.random.Generator) -> AdaptedTree:
    lo, hi = scale.period_bounds
    vals = rng.uniform(lo, hi, node_count(space.n, depth))
    return AdaptedTree.plan(space, vals, scale.beta, depth)
