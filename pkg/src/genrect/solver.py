"""Ex-ante certainty equivalents from a one-step functional.

Two routes compute the same number:

* ``solve_nested`` folds a leaf tree from the bottom up,
  ``value(node) = beta * I(value(children) / beta)``.
* ``solve_value_iteration`` iterates the recursive operator
  ``V(h) = w_0(h) + beta * I(V(h^{s,1}))`` over every sub-plan of the inputs,
  where a depth-0 sub-plan (the constant tail) is its own continuation.

Value iteration runs in increment form: it propagates ``D_k = V_k - V_{k-1}``
through ``I(x) - I(x - d)`` evaluated accurately for each functional, so the
measured sup-norm residuals keep their contraction rate all the way down to
the stopping tolerance instead of drowning in rounding noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cequiv import DOMAIN_SLACK, CertaintyEquivalent, Choquet, Expectation
from .core import (
    LEAF_VALUES,
    NODE_VALUES,
    AdaptedTree,
    Capacity,
    DiscountedUtilityScale,
    Prior,
    lifetime_utility,
    node_count,
    truncation_error_bound,
)
from .errors import ConfigurationError, DomainError
from .reporting import csv_text


@dataclass(frozen=True)
class SolveConfig:
    i_plus_one: CertaintyEquivalent
    scale: DiscountedUtilityScale
    tol: float = 1e-10
    max_iter: int = 10_000

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive", "INVALID_SPEC")
        if int(self.max_iter) < 1:
            raise ConfigurationError("max_iter must be at least 1", "INVALID_SPEC")

    @property
    def beta(self) -> float:
        return self.scale.beta

    @property
    def slack(self) -> float:
        """Room needed for arguments ``value / beta`` with ``|value| <= 1``."""
        return max(DOMAIN_SLACK, 1.0 / self.beta - 1.0)


@dataclass
class SolveReport:
    values: list[float]
    iterations: int
    residuals: list[float]
    contraction_ratios: list[float]
    truncation_bound: float
    converged: bool
    uniqueness_guaranteed: bool
    fixed_point_residual: float
    method: str = "value_iteration"
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "values": list(self.values),
            "iterations": self.iterations,
            "converged": self.converged,
            "uniqueness_guaranteed": self.uniqueness_guaranteed,
            "fixed_point_residual": self.fixed_point_residual,
            "truncation_bound": self.truncation_bound,
            "residuals": list(self.residuals),
            "contraction_ratios": list(self.contraction_ratios),
            "notes": list(self.notes),
        }

    def to_csv(self) -> str:
        rows = []
        for k, r in enumerate(self.residuals):
            ratio = self.contraction_ratios[k - 1] if 0 < k <= len(self.contraction_ratios) else None
            rows.append([k + 1, r, ratio])
        return csv_text(["index", "residual", "ratio"], rows)


# ---------------------------------------------------------------------------
# nested evaluation


def solve_nested_batch(cfg: SolveConfig, leaves: np.ndarray, n: int) -> np.ndarray:
    """Nested evaluation of many leaf vectors of equal depth (rows of ``leaves``)."""
    X = np.atleast_2d(np.asarray(leaves, dtype=float))
    if X.shape[1] == 1:
        return X[:, 0].copy()
    if np.any(np.abs(X) > 1.0 + 1e-12):
        raise DomainError("leaf values must lie in [-1, 1]")
    beta, spec, slack = cfg.beta, cfg.i_plus_one, cfg.slack
    if spec.n_states != n:
        raise ConfigurationError("one-step functional and tree disagree on the number of states", "INVALID_SPEC")
    m = X.shape[0]
    vals = X.reshape(-1)
    while vals.size > m:
        vals = beta * spec.evaluate_batch(vals.reshape(-1, n) / beta, slack)
    return vals


def solve_nested(cfg: SolveConfig, xi: AdaptedTree) -> float:
    """Ex-ante value of a leaf tree by backward recursion."""
    xi._require(LEAF_VALUES)
    return float(solve_nested_batch(cfg, xi.values[None, :], xi.n)[0])


# ---------------------------------------------------------------------------
# value iteration


def worst_case_seed(n: int) -> Choquet:
    """``xi -> min(xi)``: Choquet integral of the capacity that is 1 only on S."""
    vals = np.zeros(1 << n)
    vals[-1] = 1.0
    return Choquet(Capacity(vals))


@dataclass(frozen=True)
class _Closure:
    """All sub-plans of a batch of plans, one slot per tree node."""

    flow: np.ndarray  # per-period utility at the root of each sub-plan
    children: np.ndarray  # (N, n) slot of each continuation
    roots: np.ndarray  # slot of each input plan
    order: list  # slot groups, deepest first, for backward seeding


def _closure(plans: list[AdaptedTree]) -> _Closure:
    flows, children, roots, groups = [], [], [], {}
    offset = 0
    for plan in plans:
        n, T = plan.n, plan.depth
        size = node_count(n, T)
        flows.append(plan.values)
        ch = np.empty((size, n), dtype=np.int64)
        for t in range(T + 1):
            start = node_count(n, t - 1) if t > 0 else 0
            idx = np.arange(n**t)
            if t < T:
                nxt = node_count(n, t)
                ch[start + idx] = offset + nxt + idx[:, None] * n + np.arange(n)
            else:
                ch[start + idx] = offset + start + idx[:, None]
            groups.setdefault(T - t, []).append(offset + start + idx)
        children.append(ch)
        roots.append(offset)
        offset += size
    order = [np.concatenate(groups[h]) for h in sorted(groups)]
    return _Closure(np.concatenate(flows), np.vstack(children), np.array(roots), order)


def _seed_values(closure: _Closure, seed: CertaintyEquivalent, beta: float) -> np.ndarray:
    """Initial guess: each sub-plan's value under the seed functional (nested, exact)."""
    V = np.empty_like(closure.flow)
    terminal = closure.order[0]
    V[terminal] = closure.flow[terminal] / (1.0 - beta)
    for group in closure.order[1:]:
        V[group] = closure.flow[group] + beta * seed.evaluate_batch(V[closure.children[group]])
    return np.clip(V, -1.0, 1.0)


def solve_value_iteration(
    cfg: SolveConfig, plans: list[AdaptedTree], seed: CertaintyEquivalent | None = None
) -> SolveReport:
    """Fixed point of the recursive operator over the sub-plan closure of ``plans``.

    ``seed`` is the translation-invariant functional that builds the starting
    value function (uniform expectation by default).  The iteration stops once
    the sup-norm change drops to ``cfg.tol`` or after ``cfg.max_iter`` steps.
    """
    if not plans:
        raise ConfigurationError("value iteration needs at least one plan", "INVALID_SPEC")
    n = plans[0].n
    for p in plans:
        p._require(NODE_VALUES)
        if p.n != n or abs(p.beta - cfg.beta) > 0:
            raise ConfigurationError("plans must share the run's states and beta", "MALFORMED_TREE")
    spec, beta = cfg.i_plus_one, cfg.beta
    if spec.n_states != n:
        raise ConfigurationError("one-step functional and plans disagree on the number of states", "INVALID_SPEC")
    seed = seed if seed is not None else Expectation(Prior.uniform(n))
    if not seed.translation_invariant:
        raise ConfigurationError("the seed functional must be translation invariant", "INVALID_SPEC")

    cl = _closure(plans)
    ti = spec.translation_invariant

    def operator(V):
        return cl.flow + beta * spec.evaluate_batch(V[cl.children], cfg.slack)

    V = _seed_values(cl, seed, beta)
    D = operator(V) - V
    V = V + D
    residuals = [float(np.max(np.abs(D)))]
    while residuals[-1] > cfg.tol and len(residuals) < cfg.max_iter:
        if ti:
            D = beta * spec.increment_batch(V[cl.children], D[cl.children])
        else:
            D = operator(V) - V
        V = V + D
        residuals.append(float(np.max(np.abs(D))))
    ratios = [b / a for a, b in zip(residuals[:-1], residuals[1:]) if a > 0]
    converged = residuals[-1] <= cfg.tol
    notes = []
    if not ti:
        notes.append("one-step functional is not translation invariant: uniqueness is not guaranteed")
    if not converged:
        notes.append(f"stopped after {cfg.max_iter} iterations without reaching tol")
    return SolveReport(
        values=[float(v) for v in V[cl.roots]],
        iterations=len(residuals),
        residuals=residuals,
        contraction_ratios=ratios,
        truncation_bound=truncation_error_bound(max(p.depth for p in plans), cfg.scale),
        converged=converged,
        uniqueness_guaranteed=ti,
        fixed_point_residual=float(np.max(np.abs(operator(V) - V))),
        notes=notes,
    )


def cross_check(cfg: SolveConfig, plans: list[AdaptedTree], report: SolveReport | None = None) -> float:
    """Largest gap between nested evaluation of lifetime utility and value iteration."""
    if isinstance(plans, AdaptedTree):
        plans = [plans]
    if report is None:
        report = solve_value_iteration(cfg, plans)
    nested = [solve_nested(cfg, lifetime_utility(p, cfg.scale)) for p in plans]
    return float(np.max(np.abs(np.array(nested) - np.array(report.values))))
