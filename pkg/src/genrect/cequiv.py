"""One-step-ahead certainty equivalents on real vectors indexed by states.

Each functional maps a batch ``X`` of shape ``(m, n)`` to ``m`` values.  Besides
plain evaluation every functional offers ``increment_batch(X, D)``, the exact
difference ``I(X) - I(X - D)`` computed so that its error is relative to
``|D|`` rather than to ``|X|``.  Value iteration propagates these increments;
that keeps measured contraction ratios clean down to tiny residuals.

Arguments may leave ``[-1, 1]`` by ``DOMAIN_SLACK``: the rescaled values
``I_0(xi^1) / beta`` that feed the one-step functional need that room.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, ClassVar

import numpy as np
from scipy.special import logsumexp, rel_entr

from .core import Capacity, Prior, ShockSpace
from .errors import ConfigurationError, DomainError

DOMAIN_SLACK = 2.0
PASS_TOL = 1e-9
MAX_GRID_POINTS = 10**6


def _as_batch(X, n: int) -> np.ndarray:
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != n:
        raise DomainError(f"expected {n} entries per state vector, got shape {np.shape(X)}")
    return arr


def _check_box(X: np.ndarray, slack: float) -> None:
    bound = 1.0 + slack
    if X.size and np.max(np.abs(X)) > bound + 1e-12:
        raise DomainError(f"argument entries must lie in [{-bound}, {bound}]")


# ---------------------------------------------------------------------------
# transformation descriptors


@dataclass(frozen=True)
class PhiDescriptor:
    """Strictly increasing transform used by smooth ambiguity functionals.

    ``linear``: ``t``.  ``exponential``: ``-exp(-theta t)`` (``theta = 0`` falls
    back to linear).  ``power``: ``(t + shift)^rho`` on ``t >= -shift``.
    ``custom``: user callables, library use only.
    """

    kind: str
    theta: float = 0.0
    rho: float = 0.5
    shift: float = 1.0 + DOMAIN_SLACK
    func: Callable | None = field(default=None, compare=False)
    inverse: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == "exponential":
            if not self.theta >= 0 or not math.isfinite(self.theta):
                raise ConfigurationError("exponential phi needs theta >= 0", "INVALID_SPEC")
        elif self.kind == "power":
            if not 0.0 < self.rho < 1.0:
                raise ConfigurationError("power phi needs rho in (0, 1)", "INVALID_SPEC")
            if not self.shift >= 0:
                raise ConfigurationError("power phi needs a non-negative shift", "INVALID_SPEC")
        elif self.kind == "custom":
            if self.func is None or self.inverse is None:
                raise ConfigurationError("custom phi needs func and inverse", "INVALID_SPEC")
        elif self.kind != "linear":
            raise ConfigurationError(f"unknown phi kind {self.kind!r}", "UNKNOWN_KIND")

    @classmethod
    def linear(cls) -> "PhiDescriptor":
        return cls("linear")

    @classmethod
    def exponential(cls, theta: float) -> "PhiDescriptor":
        return cls("exponential", theta=float(theta))

    @classmethod
    def power(cls, rho: float, shift: float = 1.0 + DOMAIN_SLACK) -> "PhiDescriptor":
        return cls("power", rho=float(rho), shift=float(shift))

    @classmethod
    def custom(cls, func: Callable, inverse: Callable) -> "PhiDescriptor":
        return cls("custom", func=func, inverse=inverse)

    @property
    def is_exponential_or_linear(self) -> bool:
        return self.kind in ("linear", "exponential")

    @property
    def effective_kind(self) -> str:
        if self.kind == "exponential" and self.theta == 0.0:
            return "linear"
        return self.kind

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        kind = self.effective_kind
        if kind == "linear":
            return t
        if kind == "exponential":
            return -np.exp(-self.theta * t)
        if kind == "power":
            base = t + self.shift
            if np.any(base < 0):
                raise DomainError(f"power phi is defined only for t >= {-self.shift}")
            return base**self.rho
        return np.asarray(self.func(t), dtype=float)

    def inv(self, y):
        y = np.asarray(y, dtype=float)
        kind = self.effective_kind
        if kind == "linear":
            return y
        if kind == "exponential":
            return -np.log(-y) / self.theta
        if kind == "power":
            return y ** (1.0 / self.rho) - self.shift
        return np.asarray(self.inverse(y), dtype=float)

    def to_dict(self) -> dict:
        if self.kind == "linear":
            return {"kind": "linear"}
        if self.kind == "exponential":
            return {"kind": "exponential", "theta": self.theta}
        if self.kind == "power":
            return {"kind": "power", "rho": self.rho, "shift": self.shift}
        raise ConfigurationError("custom phi cannot be serialized", "INVALID_SPEC")

    @classmethod
    def from_dict(cls, data: dict) -> "PhiDescriptor":
        kind = data.get("kind") if isinstance(data, dict) else None
        if kind == "linear":
            return cls.linear()
        if kind == "exponential":
            return cls.exponential(_num(data, "theta"))
        if kind == "power":
            return cls.power(_num(data, "rho"), float(data.get("shift", 1.0 + DOMAIN_SLACK)))
        raise ConfigurationError(f"unknown phi kind {kind!r}", "UNKNOWN_KIND")


@dataclass(frozen=True)
class Distortion:
    """Probability weighting ``g: [0, 1] -> [0, 1]``, increasing, ``g(0)=0``, ``g(1)=1``.

    ``prelec`` with ``alpha < 1`` and ``tversky_kahneman`` with ``gamma < 1`` are
    inverse-S shaped (neither convex nor concave).
    """

    kind: str
    param: float = 1.0
    func: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("identity", "power", "prelec", "tversky_kahneman", "custom"):
            raise ConfigurationError(f"unknown distortion kind {self.kind!r}", "UNKNOWN_KIND")
        if self.kind == "custom" and self.func is None:
            raise ConfigurationError("custom distortion needs func", "INVALID_SPEC")
        if self.kind in ("power", "prelec", "tversky_kahneman") and not self.param > 0:
            raise ConfigurationError("distortion parameter must be positive", "INVALID_SPEC")
        grid = np.linspace(0.0, 1.0, 1001)
        g = self(grid)
        if abs(g[0]) > 1e-12 or abs(g[-1] - 1.0) > 1e-12 or np.any(np.diff(g) < -1e-12):
            raise ConfigurationError("distortion must increase from g(0)=0 to g(1)=1", "INVALID_SPEC")

    def __call__(self, p):
        p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
        if self.kind == "identity":
            return p
        if self.kind == "power":
            return p**self.param
        if self.kind == "prelec":
            with np.errstate(divide="ignore"):
                out = np.exp(-((-np.log(p)) ** self.param))
            return np.where(p <= 0.0, 0.0, out)
        if self.kind == "tversky_kahneman":
            gam = self.param
            num = p**gam
            return num / (num + (1.0 - p) ** gam) ** (1.0 / gam)
        return np.asarray(self.func(p), dtype=float)

    def to_dict(self) -> dict:
        if self.kind == "custom":
            raise ConfigurationError("custom distortion cannot be serialized", "INVALID_SPEC")
        if self.kind == "identity":
            return {"kind": "identity"}
        key = {"power": "gamma", "prelec": "alpha", "tversky_kahneman": "gamma"}[self.kind]
        return {"kind": self.kind, key: self.param}

    @classmethod
    def from_dict(cls, data: dict) -> "Distortion":
        kind = data.get("kind") if isinstance(data, dict) else None
        if kind == "identity":
            return cls("identity")
        if kind in ("power", "tversky_kahneman"):
            return cls(kind, _num(data, "gamma"))
        if kind == "prelec":
            return cls(kind, _num(data, "alpha"))
        raise ConfigurationError(f"unknown distortion kind {kind!r}", "UNKNOWN_KIND")


# ---------------------------------------------------------------------------
# functionals


class CertaintyEquivalent:
    """Base class: continuous, monotone, normalized functional on ``R^S``."""

    kind: ClassVar[str] = ""
    translation_invariant: ClassVar[bool] = True

    @property
    def n_states(self) -> int:
        raise NotImplementedError

    def _eval(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def evaluate_batch(self, X, slack: float = DOMAIN_SLACK) -> np.ndarray:
        X = _as_batch(X, self.n_states)
        _check_box(X, slack)
        return self._eval(X)

    def increment_batch(self, X, D) -> np.ndarray:
        """``I(X) - I(X - D)`` row by row."""
        X = _as_batch(X, self.n_states)
        D = _as_batch(D, self.n_states)
        return self._increment(X, D)

    def _increment(self, X: np.ndarray, D: np.ndarray) -> np.ndarray:
        return self._eval(X) - self._eval(X - D)

    def __call__(self, xi, slack: float = DOMAIN_SLACK) -> float:
        return evaluate(self, xi, slack)

    def to_dict(self, space: ShockSpace | None = None) -> dict:
        raise NotImplementedError


def evaluate(spec: CertaintyEquivalent, xi, slack: float = DOMAIN_SLACK) -> float:
    """Value of the functional at one state vector."""
    arr = np.asarray(xi, dtype=float)
    if arr.ndim != 1:
        raise DomainError("evaluate takes a single state vector")
    return float(spec.evaluate_batch(arr, slack)[0])


def _prior_matrix(priors) -> np.ndarray:
    mats = [p.weights if isinstance(p, Prior) else Prior(np.asarray(p, dtype=float)).weights for p in priors]
    if not mats:
        raise ConfigurationError("need at least one prior", "INVALID_SPEC")
    n = mats[0].size
    if any(m.size != n for m in mats):
        raise ConfigurationError("priors must all have the same length", "INVALID_SPEC")
    out = np.vstack(mats)
    out.setflags(write=False)
    return out


def _linear_min_increment(A: np.ndarray, costs: np.ndarray, X: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Increment of ``min_j (a_j . x + c_j)``.

    With ``j_x`` and ``j_y`` the minimizers at ``x`` and ``y = x - d`` the true
    increment lies in ``[a_{j_x} . d, a_{j_y} . d]``; both ends coincide when the
    minimizer does not switch.
    """
    Y = X - D
    vx = X @ A.T + costs
    vy = Y @ A.T + costs
    jx = np.argmin(vx, axis=1)
    jy = np.argmin(vy, axis=1)
    lo = np.einsum("ij,ij->i", A[jx], D)
    hi = np.einsum("ij,ij->i", A[jy], D)
    naive = vx[np.arange(len(X)), jx] - vy[np.arange(len(X)), jy]
    clipped = np.clip(naive, np.minimum(lo, hi), np.maximum(lo, hi))
    return np.where(jx == jy, lo, clipped)


@dataclass(frozen=True, eq=False)
class Expectation(CertaintyEquivalent):
    prior: Prior
    kind: ClassVar[str] = "expectation"

    def __post_init__(self):
        if not isinstance(self.prior, Prior):
            object.__setattr__(self, "prior", Prior(np.asarray(self.prior, dtype=float)))

    @property
    def n_states(self) -> int:
        return self.prior.n

    def _eval(self, X):
        return X @ self.prior.weights

    def _increment(self, X, D):
        return D @ self.prior.weights

    def to_dict(self, space=None):
        return {"kind": self.kind, "prior": self.prior.weights.tolist()}


@dataclass(frozen=True, eq=False)
class Maxmin(CertaintyEquivalent):
    """``min over priors of E_l[xi]`` for a finite prior list (its convex hull)."""

    priors: tuple
    kind: ClassVar[str] = "maxmin"

    def __post_init__(self):
        object.__setattr__(self, "_A", _prior_matrix(self.priors))
        object.__setattr__(self, "priors", tuple(Prior(a) for a in self._A))

    @property
    def n_states(self) -> int:
        return self._A.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        return self._A

    def _eval(self, X):
        return np.min(X @ self._A.T, axis=1)

    def _increment(self, X, D):
        return _linear_min_increment(self._A, np.zeros(len(self._A)), X, D)

    def to_dict(self, space=None):
        return {"kind": self.kind, "priors": self._A.tolist()}


@dataclass(frozen=True, eq=False)
class VariationalGrid(CertaintyEquivalent):
    """``min over grid priors of E_l[xi] + c(l)``; the grid discretizes the simplex."""

    points: np.ndarray
    costs: np.ndarray
    kind: ClassVar[str] = "variational_grid"

    def __post_init__(self):
        P = np.asarray(self.points, dtype=float)
        c = np.asarray(self.costs, dtype=float).ravel()
        if P.ndim != 2 or P.shape[0] != c.size or c.size == 0:
            raise ConfigurationError("variational grid needs one cost per grid prior", "INVALID_SPEC")
        if np.any(P < -1e-15) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise ConfigurationError("variational grid points must be priors", "INVALID_SPEC")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ConfigurationError("variational costs must be finite and non-negative", "INVALID_SPEC")
        if c.min() > 1e-9:
            raise ConfigurationError("variational cost must be grounded (min cost 0)", "INVALID_SPEC")
        P.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "costs", c)

    @property
    def n_states(self) -> int:
        return self.points.shape[1]

    def _eval(self, X):
        return np.min(X @ self.points.T + self.costs, axis=1)

    def _increment(self, X, D):
        return _linear_min_increment(self.points, self.costs, X, D)

    def to_dict(self, space=None):
        return {"kind": self.kind, "points": self.points.tolist(), "costs": self.costs.tolist()}


@dataclass(frozen=True, eq=False)
class Entropic(CertaintyEquivalent):
    """Multiplier functional ``-(1/theta) log E_l[exp(-theta xi)]``."""

    theta: float
    prior: Prior
    kind: ClassVar[str] = "entropic"

    def __post_init__(self):
        if not isinstance(self.prior, Prior):
            object.__setattr__(self, "prior", Prior(np.asarray(self.prior, dtype=float)))
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise ConfigurationError("entropic theta must be positive", "INVALID_SPEC")
        object.__setattr__(self, "theta", float(self.theta))

    @property
    def n_states(self) -> int:
        return self.prior.n

    def _eval(self, X):
        with np.errstate(divide="ignore"):
            return -logsumexp(-self.theta * X, b=self.prior.weights, axis=1) / self.theta

    def _increment(self, X, D):
        with np.errstate(divide="ignore"):
            logw = np.log(self.prior.weights) - self.theta * X
        pi = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
        return np.log1p(np.sum(pi * np.expm1(self.theta * D), axis=1)) / self.theta

    def to_dict(self, space=None):
        return {"kind": self.kind, "theta": self.theta, "prior": self.prior.weights.tolist()}


class _ComonotoneBase(CertaintyEquivalent):
    """Shared machinery for Choquet-type functionals (layer-cake sums)."""

    def _set_weights(self, X: np.ndarray, order: np.ndarray) -> np.ndarray:
        """``v(A_i)`` for the top-``i`` sets ``A_i``, ``i = 1..n-1``, per row."""
        raise NotImplementedError

    def _gradient(self, X: np.ndarray, order: np.ndarray) -> np.ndarray:
        m, n = X.shape
        v = np.concatenate([np.zeros((m, 1)), self._set_weights(X, order), np.ones((m, 1))], axis=1)
        w_sorted = np.diff(v, axis=1)
        grad = np.empty_like(w_sorted)
        np.put_along_axis(grad, order, w_sorted, axis=1)
        return grad

    def _eval(self, X):
        order = _desc_order(X)
        xs = np.take_along_axis(X, order, axis=1)
        vA = self._set_weights(X, order)
        return xs[:, -1] + np.sum((xs[:, :-1] - xs[:, 1:]) * vA, axis=1)

    def _increment(self, X, D):
        Y = X - D
        ox = _desc_order(X)
        oy = _desc_order(Y)
        out = np.einsum("ij,ij->i", self._gradient(X, ox), D)
        for r in np.nonzero(np.any(ox != oy, axis=1))[0]:
            out[r] = self._path_increment(Y[r], D[r])
        return out

    def _path_increment(self, y: np.ndarray, d: np.ndarray) -> float:
        # integrate the piecewise-constant gradient along y + t d, t in [0, 1]
        n = y.size
        cuts = [0.0, 1.0]
        for a in range(n):
            for b in range(a + 1, n):
                dd = d[a] - d[b]
                if dd != 0.0:
                    t = (y[b] - y[a]) / dd
                    if 0.0 < t < 1.0:
                        cuts.append(t)
        cuts = np.unique(cuts)
        total = 0.0
        for t0, t1 in zip(cuts[:-1], cuts[1:]):
            mid = (y + 0.5 * (t0 + t1) * d)[None, :]
            grad = self._gradient(mid, _desc_order(mid))[0]
            total += float(grad @ d) * (t1 - t0)
        return total


def _desc_order(X: np.ndarray) -> np.ndarray:
    """Descending order, ties broken by state index."""
    return np.argsort(-X, axis=1, kind="stable")


@dataclass(frozen=True, eq=False)
class Choquet(_ComonotoneBase):
    capacity: Capacity
    kind: ClassVar[str] = "choquet"

    @property
    def n_states(self) -> int:
        return self.capacity.n

    def _set_weights(self, X, order):
        masks = np.cumsum(np.left_shift(1, order[:, :-1]), axis=1)
        return self.capacity.values[masks]

    def to_dict(self, space=None):
        if space is None:
            space = ShockSpace.of_size(self.n_states)
        return {"kind": self.kind, "capacity": self.capacity.to_dict(space)}


@dataclass(frozen=True, eq=False)
class RankDependent(_ComonotoneBase):
    """Choquet integral with respect to the distorted prior ``g(l(A))``."""

    distortion: Distortion
    prior: Prior
    kind: ClassVar[str] = "rank_dependent"

    def __post_init__(self):
        if not isinstance(self.prior, Prior):
            object.__setattr__(self, "prior", Prior(np.asarray(self.prior, dtype=float)))

    @property
    def n_states(self) -> int:
        return self.prior.n

    def _set_weights(self, X, order):
        cum = np.cumsum(self.prior.weights[order[:, :-1]], axis=1)
        return self.distortion(np.clip(cum, 0.0, 1.0))

    def capacity(self) -> Capacity:
        n = self.n_states
        vals = np.array([float(self.distortion(self.prior.prob(m))) for m in range(1 << n)])
        vals[0], vals[-1] = 0.0, 1.0
        return Capacity(vals)

    def to_dict(self, space=None):
        return {"kind": self.kind, "prior": self.prior.weights.tolist(), "distortion": self.distortion.to_dict()}


@dataclass(frozen=True, eq=False)
class Smooth(CertaintyEquivalent):
    """``phi^{-1}( sum_i mu_i phi(E_{p_i}[xi]) )`` for a finite second-order prior."""

    support: np.ndarray
    weights: Prior
    phi: PhiDescriptor
    kind: ClassVar[str] = "smooth"

    def __post_init__(self):
        P = _prior_matrix(self.support)
        mu = self.weights if isinstance(self.weights, Prior) else Prior(np.asarray(self.weights, dtype=float))
        if mu.n != P.shape[0]:
            raise ConfigurationError("smooth model needs one weight per support prior", "INVALID_SPEC")
        object.__setattr__(self, "support", P)
        object.__setattr__(self, "weights", mu)

    @property
    def translation_invariant(self) -> bool:  # type: ignore[override]
        return self.phi.is_exponential_or_linear or self.is_degenerate

    @property
    def is_degenerate(self) -> bool:
        live = self.support[self.weights.weights > 0]
        return bool(np.all(np.abs(live - live[0]) <= 1e-15))

    @property
    def n_states(self) -> int:
        return self.support.shape[1]

    def _eval(self, X):
        M = X @ self.support.T
        mu = self.weights.weights
        kind = self.phi.effective_kind
        if kind == "linear":
            return M @ mu
        if kind == "exponential":
            th = self.phi.theta
            with np.errstate(divide="ignore"):
                return -logsumexp(-th * M, b=mu, axis=1) / th
        return self.phi.inv(self.phi(M) @ mu)

    def _increment(self, X, D):
        kind = self.phi.effective_kind
        mu = self.weights.weights
        if kind == "linear":
            return (D @ self.support.T) @ mu
        if kind == "exponential":
            th = self.phi.theta
            with np.errstate(divide="ignore"):
                logw = np.log(mu) - th * (X @ self.support.T)
            pi = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
            return np.log1p(np.sum(pi * np.expm1(th * (D @ self.support.T)), axis=1)) / th
        return self._eval(X) - self._eval(X - D)

    def to_dict(self, space=None):
        return {
            "kind": self.kind,
            "support": self.support.tolist(),
            "weights": self.weights.weights.tolist(),
            "phi": self.phi.to_dict(),
        }


# ---------------------------------------------------------------------------
# simplex grids and relative entropy


def simplex_grid_size(n: int, m: int) -> int:
    return math.comb(m + n - 1, n - 1)


def simplex_grid(n: int, m: int, cap: int = MAX_GRID_POINTS) -> np.ndarray:
    """All priors on ``n`` states with coordinates in ``{0, 1/m, ..., 1}``."""
    if n < 1 or m < 1:
        raise ConfigurationError("simplex grid needs n >= 1 and m >= 1", "INVALID_SPEC")
    size = simplex_grid_size(n, m)
    if size > cap:
        raise ConfigurationError(f"simplex grid with {size} points exceeds the cap of {cap}", "CAP_EXCEEDED")
    if n == 1:
        return np.ones((1, 1))
    bars = np.array(list(itertools.combinations(range(m + n - 1), n - 1)), dtype=np.int64)
    edges = np.hstack([np.full((size, 1), -1), bars, np.full((size, 1), m + n - 1)])
    counts = np.diff(edges, axis=1) - 1
    return counts / m


def relative_entropy(p, q) -> np.ndarray | float:
    """``R(p || q) = sum p log(p / q)``; infinite when ``p`` is not dominated by ``q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = np.sum(rel_entr(p, q), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def variational_from_entropic(theta: float, reference, mesh: int) -> VariationalGrid:
    """Grid version of the entropic functional: cost ``R(p || l) / theta`` on mesh ``1/m``."""
    if mesh < 2:
        raise ConfigurationError("grid mesh denominator must be at least 2", "INVALID_SPEC")
    if not theta > 0:
        raise ConfigurationError("theta must be positive", "INVALID_SPEC")
    ref = reference if isinstance(reference, Prior) else Prior(np.asarray(reference, dtype=float))
    grid = simplex_grid(ref.n, mesh)
    cost = relative_entropy(grid, ref.weights) / theta
    keep = np.isfinite(cost)
    cost = np.asarray(cost)[keep]
    return VariationalGrid(grid[keep], cost - min(cost.min(), 0.0))


# ---------------------------------------------------------------------------
# (de)serialization


def _num(data: dict, key: str) -> float:
    try:
        return float(data[key])
    except (KeyError, TypeError, ValueError):
        raise ConfigurationError(f"missing or non-numeric field {key!r}", "INVALID_SPEC") from None


def spec_from_dict(data: dict, space: ShockSpace) -> CertaintyEquivalent:
    """Build a functional from its config literal."""
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigurationError("certainty equivalent needs a kind", "INVALID_SPEC")
    kind = data["kind"]
    try:
        if kind == "expectation":
            spec = Expectation(Prior(data["prior"]))
        elif kind == "maxmin":
            spec = Maxmin(tuple(Prior(p) for p in data["priors"]))
        elif kind == "variational_grid":
            if "points" in data:
                spec = VariationalGrid(np.asarray(data["points"], float), np.asarray(data["costs"], float))
            else:
                spec = variational_from_entropic(_num(data, "theta"), Prior(data["reference"]), int(data["mesh"]))
        elif kind == "entropic":
            spec = Entropic(_num(data, "theta"), Prior(data["prior"]))
        elif kind == "choquet":
            spec = Choquet(Capacity.from_dict(data["capacity"], space))
        elif kind == "rank_dependent":
            spec = RankDependent(Distortion.from_dict(data["distortion"]), Prior(data["prior"]))
        elif kind == "smooth":
            spec = Smooth(np.asarray(data["support"], float), Prior(data["weights"]), PhiDescriptor.from_dict(data["phi"]))
        else:
            raise ConfigurationError(f"unknown certainty equivalent kind {kind!r}", "UNKNOWN_KIND")
    except KeyError as exc:
        raise ConfigurationError(f"{kind} spec is missing field {exc.args[0]!r}", "INVALID_SPEC") from None
    if spec.n_states != space.n:
        raise ConfigurationError(
            f"{kind} spec is defined on {spec.n_states} states, the run has {space.n}", "INVALID_SPEC"
        )
    return spec


# ---------------------------------------------------------------------------
# property probes


@dataclass
class PropertyReport:
    violations: dict[str, float]
    worst_inputs: dict[str, dict]
    samples: int
    seed: int
    tolerance: float = PASS_TOL

    def passes(self, name: str) -> bool:
        return self.violations[name] <= self.tolerance

    @property
    def summary(self) -> dict[str, bool]:
        return {k: self.passes(k) for k in self.violations}


PROPERTIES = ("monotone", "normalized", "translation_invariant", "positively_homogeneous", "concave")


def probe_properties(spec: CertaintyEquivalent, samples: int, seed: int) -> PropertyReport:
    """Worst sampled violation of each certainty-equivalent property.

    Random draws use numpy's PCG64 generator seeded with ``seed``; states are
    uniform on ``[-1, 1]^n``.  Translation invariance is also swept on a fixed
    grid of two-valued acts (see :func:`ti_counterexample_search`).
    """
    if samples < 1:
        raise ConfigurationError("samples must be at least 1", "INVALID_SPEC")
    rng = np.random.default_rng(seed)
    n = spec.n_states
    ev = spec.evaluate_batch
    viol: dict[str, float] = {}
    worst: dict[str, dict] = {}

    def record(name, values, inputs):
        i = int(np.argmax(values))
        viol[name] = max(float(values[i]), 0.0)
        worst[name] = {k: np.asarray(v[i]).tolist() for k, v in inputs.items()}

    X = rng.uniform(-1, 1, (samples, n))
    bump = rng.uniform(0, 1, (samples, n)) * (1 - X)
    Xup = X + bump
    record("monotone", ev(X) - ev(Xup), {"xi": X, "eta": Xup})

    k = rng.uniform(-1, 1, samples)
    record("normalized", np.abs(ev(np.repeat(k[:, None], n, axis=1)) - k), {"k": k})

    lo = -1 - X.min(axis=1)
    hi = 1 - X.max(axis=1)
    kk = lo + rng.uniform(0, 1, samples) * (hi - lo)
    ti = np.abs(ev(X + kk[:, None]) - ev(X) - kk)
    record("translation_invariant", ti, {"xi": X, "k": kk})
    sweep = ti_counterexample_search(spec)
    if sweep["violation"] > viol["translation_invariant"]:
        viol["translation_invariant"] = sweep["violation"]
        worst["translation_invariant"] = {"xi": sweep["xi"], "k": sweep["k"]}

    lam = rng.uniform(0, 1, samples)
    record("positively_homogeneous", np.abs(ev(lam[:, None] * X) - lam * ev(X)), {"xi": X, "lambda": lam})

    Y = rng.uniform(-1, 1, (samples, n))
    a = rng.uniform(0, 1, samples)
    mix = a[:, None] * X + (1 - a[:, None]) * Y
    record("concave", a * ev(X) + (1 - a) * ev(Y) - ev(mix), {"xi": X, "eta": Y, "alpha": a})
    return PropertyReport(viol, worst, samples, seed)


def _two_valued_masks(n: int) -> list[int]:
    if n <= 8:
        return list(range(1, (1 << n) - 1))
    return [1 << i for i in range(n)]


def ti_counterexample_search(spec: CertaintyEquivalent, points: int = 21) -> dict:
    """Deterministic sweep for ``|I(xi + k) - I(xi) - k|`` over two-valued acts.

    ``xi = x on A, y off A`` with ``x, y`` on a ``points``-grid of ``[-1, 1]`` and
    ``k`` on a grid of ``[-2, 2]`` (kept only when ``xi + k`` stays in the box),
    followed by one local refinement around the worst grid point.
    """
    n = spec.n_states
    masks = _two_valued_masks(n)
    g = np.linspace(-1, 1, points)
    kg = np.linspace(-2, 2, points)
    best = {"violation": 0.0, "xi": None, "k": 0.0}

    def scan(mask, xs, ys, ks):
        x, y, k = (a.ravel() for a in np.meshgrid(xs, ys, ks, indexing="ij"))
        keep = (np.maximum(x, y) + k <= 1 + 1e-12) & (np.minimum(x, y) + k >= -1 - 1e-12)
        x, y, k = x[keep], y[keep], k[keep]
        if x.size == 0:
            return
        sel = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        xi = np.where(sel[None, :], x[:, None], y[:, None])
        v = np.abs(spec.evaluate_batch(xi + k[:, None]) - spec.evaluate_batch(xi) - k)
        i = int(np.argmax(v))
        if v[i] > best["violation"]:
            best.update(violation=float(v[i]), xi=xi[i].tolist(), k=float(k[i]), mask=mask, xy=(x[i], y[i]))

    for mask in masks:
        scan(mask, g, g, kg)
    if best["xi"] is not None:
        step = g[1] - g[0]
        x0, y0 = best["xy"]
        fine = np.linspace(-step, step, 11)
        scan(best["mask"], x0 + fine, y0 + fine, best["k"] + fine)
    best.pop("mask", None)
    best.pop("xy", None)
    if best["xi"] is None:
        best["xi"] = [0.0] * n
    return best
