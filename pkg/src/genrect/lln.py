"""Finite-horizon coverage experiments for long-run averages under ambiguity.

Paths are drawn from rectangular selections of a finite prior set: each period
a selection rule picks one prior and the next state is drawn from it.  The
running average of ``xi(s_t)`` is compared with the Choquet bounds of the
lower-envelope capacity.  These are finite-horizon surrogates; nothing here
represents a tail event.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cequiv import Choquet
from .core import Capacity, Prior
from .errors import ConfigurationError
from .reporting import csv_text

RULES = ("fixed_vertex", "per_period_random", "adversarial_low", "adversarial_high")


def choquet_bounds(source, xi) -> tuple[float, float]:
    """``(integral of xi, -integral of -xi)`` for a capacity or the lower envelope of priors."""
    cap = source if isinstance(source, Capacity) else Capacity.lower_envelope(list(source))
    spec = Choquet(cap)
    x = np.asarray(xi, dtype=float)
    lower = float(spec.evaluate_batch(x, math.inf)[0])
    upper = -float(spec.evaluate_batch(-x, math.inf)[0])
    return lower, upper


@dataclass(frozen=True)
class PathSampler:
    """Draws state paths period by period from a prior chosen by ``rule``.

    ``fixed_vertex`` always uses prior ``vertex``; ``per_period_random``
    picks a prior uniformly each period; ``adversarial_low`` (``_high``)
    picks the prior with the lowest (highest) mean of ``xi``, ties going to
    the lower index.  Trial ``j`` uses numpy's PCG64 generator seeded with
    ``[seed, j]``, so trials are independent and reproducible in any order.
    """

    priors: tuple
    rule: str
    horizon: int
    seed: int
    vertex: int = 0

    def __post_init__(self):
        priors = tuple(p if isinstance(p, Prior) else Prior(np.asarray(p, dtype=float)) for p in self.priors)
        if not priors:
            raise ConfigurationError("path sampler needs at least one prior", "INVALID_SPEC")
        object.__setattr__(self, "priors", priors)
        if self.rule not in RULES:
            raise ConfigurationError(f"unknown selection rule {self.rule!r}", "UNKNOWN_KIND")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be at least 1", "INVALID_SPEC")
        if not 0 <= self.vertex < len(priors):
            raise ConfigurationError("vertex index out of range", "INVALID_SPEC")

    @property
    def label(self) -> str:
        return f"fixed_vertex({self.vertex})" if self.rule == "fixed_vertex" else self.rule

    def _choices(self, xi: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        k = len(self.priors)
        means = np.array([p.weights @ xi for p in self.priors])
        if self.rule == "fixed_vertex":
            return np.full(self.horizon, self.vertex)
        if self.rule == "per_period_random":
            return rng.integers(0, k, self.horizon)
        pick = int(np.argmin(means)) if self.rule == "adversarial_low" else int(np.argmax(means))
        return np.full(self.horizon, pick)

    def sample(self, xi, trial: int) -> np.ndarray:
        """State indices of one path of length ``horizon``."""
        xi = np.asarray(xi, dtype=float)
        rng = np.random.default_rng([self.seed, trial])
        choice = self._choices(xi, rng)
        cdf = np.cumsum(np.vstack([p.weights for p in self.priors]), axis=1)
        cdf[:, -1] = 1.0
        u = rng.random(self.horizon)
        return np.sum(u[:, None] >= cdf[choice], axis=1)

    def running_average(self, xi, trial: int) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        path = xi[self.sample(xi, trial)]
        return np.cumsum(path) / np.arange(1, self.horizon + 1)


@dataclass
class CoverageTable:
    rows: list[dict]
    worst: dict[int, float] = field(default_factory=dict)

    HEADER = ("rule", "horizon", "trials", "frequency", "lower", "upper", "epsilon", "seed")

    def to_csv(self) -> str:
        return csv_text(list(self.HEADER), [[r[h] for h in self.HEADER] for r in self.rows])


def default_samplers(priors: Sequence[Prior], horizon: int, seed: int) -> list[PathSampler]:
    """One sampler per fixed vertex plus the three moving rules."""
    priors = tuple(priors)
    out = [PathSampler(priors, "fixed_vertex", horizon, seed, i) for i in range(len(priors))]
    out += [PathSampler(priors, r, horizon, seed) for r in RULES[1:]]
    return out


def coverage_experiment(
    priors: Sequence[Prior],
    xi,
    epsilon: float,
    horizons: Sequence[int],
    trials: int,
    seed: int,
    samplers: Sequence[PathSampler] | None = None,
) -> CoverageTable:
    """Share of trials whose running average lies in ``[lower - eps, upper + eps]``.

    One row per (rule, horizon); ``worst`` maps each horizon to the smallest
    frequency across rules.
    """
    if not epsilon > 0:
        raise ConfigurationError("epsilon must be positive", "INVALID_SPEC")
    if trials < 1:
        raise ConfigurationError("trials must be at least 1", "INVALID_SPEC")
    horizons = sorted({int(h) for h in horizons})
    if not horizons or horizons[0] < 1:
        raise ConfigurationError("horizons must be positive integers", "INVALID_SPEC")
    xi = np.asarray(xi, dtype=float)
    priors = tuple(p if isinstance(p, Prior) else Prior(np.asarray(p, dtype=float)) for p in priors)
    lower, upper = choquet_bounds(priors, xi)
    top = horizons[-1]
    if samplers is None:
        samplers = default_samplers(priors, top, seed)
    rows, worst = [], {}
    idx = np.array(horizons) - 1
    for sampler in samplers:
        if sampler.horizon < top:
            raise ConfigurationError("sampler horizon is shorter than the longest requested horizon", "INVALID_SPEC")
        hits = np.zeros(len(horizons))
        for trial in range(trials):
            avg = sampler.running_average(xi, trial)[idx]
            hits += (avg >= lower - epsilon) & (avg <= upper + epsilon)
        for h, count in zip(horizons, hits):
            freq = float(count / trials)
            rows.append(
                {
                    "rule": sampler.label,
                    "horizon": h,
                    "trials": trials,
                    "frequency": freq,
                    "lower": lower,
                    "upper": upper,
                    "epsilon": float(epsilon),
                    "seed": seed,
                }
            )
            worst[h] = min(worst.get(h, 1.0), freq)
    return CoverageTable(rows, worst)
