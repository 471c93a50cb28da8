import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from genrect.cequiv import (
    Choquet,
    Distortion,
    Entropic,
    Expectation,
    Maxmin,
    PhiDescriptor,
    RankDependent,
    Smooth,
    VariationalGrid,
    evaluate,
    probe_properties,
    simplex_grid,
    simplex_grid_size,
    spec_from_dict,
    ti_counterexample_search,
    variational_from_entropic,
)
from genrect.core import Capacity, Prior, ShockSpace
from genrect.errors import ConfigurationError, DomainError

S2 = ShockSpace(("a", "b"))
S3 = ShockSpace(("a", "b", "c"))
ELL = Prior([0.2, 0.3, 0.5])

MENU = {
    "expectation": Expectation(ELL),
    "maxmin": Maxmin((Prior([0.2, 0.3, 0.5]), Prior([0.5, 0.3, 0.2]), Prior([1 / 3, 1 / 3, 1 / 3]))),
    "variational": variational_from_entropic(1.5, ELL, 20),
    "entropic": Entropic(2.0, ELL),
    "choquet": Choquet(
        Capacity.from_dict({"subsets": {"a": 0.5, "b": 0.1, "c": 0.2, "ab": 0.55, "ac": 0.6, "bc": 0.7}}, S3)
    ),
    "rank_dependent": RankDependent(Distortion("tversky_kahneman", 0.61), ELL),
    "smooth_power": Smooth(np.array([[0.2, 0.3, 0.5], [0.6, 0.2, 0.2]]), Prior([0.5, 0.5]), PhiDescriptor.power(0.5)),
    "smooth_exponential": Smooth(
        np.array([[0.2, 0.3, 0.5], [0.6, 0.2, 0.2]]), Prior([0.5, 0.5]), PhiDescriptor.exponential(3.0)
    ),
}

# -- worked values -----------------------------------------------------------


def test_expectation_symmetry():
    assert evaluate(Expectation(Prior([0.5, 0.5])), [1, -1]) == 0.0


def test_maxmin_two_priors():
    spec = Maxmin((Prior([0.3, 0.7]), Prior([0.7, 0.3])))
    assert evaluate(spec, [1, 0]) == pytest.approx(0.3, abs=1e-15)


def test_choquet_layer_cake():
    spec = Choquet(Capacity.from_dict({"subsets": {"a": 0.2, "b": 0.3}}, S2))
    assert evaluate(spec, [1, 0]) == pytest.approx(0.2, abs=1e-15)
    assert evaluate(spec, [0, 1]) == pytest.approx(0.3, abs=1e-15)


def test_entropic_closed_form():
    spec = Entropic(1.0, Prior([0.5, 0.5]))
    assert evaluate(spec, [0, 1]) == pytest.approx(-math.log((1 + math.exp(-1)) / 2), abs=1e-15)


@pytest.mark.parametrize("phi", [PhiDescriptor.power(0.3), PhiDescriptor.exponential(4.0), PhiDescriptor.linear()])
def test_smooth_point_mass_is_expectation(phi):
    spec = Smooth(np.array([[0.2, 0.3, 0.5]]), Prior([1.0]), phi)
    xi = np.array([0.4, -0.9, 0.1])
    assert evaluate(spec, xi) == pytest.approx(ELL.weights @ xi, abs=1e-12)
    assert spec.translation_invariant


def test_variational_grid_matches_entropic():
    grid = variational_from_entropic(1.0, Prior([0.5, 0.5]), 200)
    exact = evaluate(Entropic(1.0, Prior([0.5, 0.5])), [0, 1])
    assert abs(evaluate(grid, [0, 1]) - exact) <= 5e-3
    assert evaluate(grid, [0.3, 0.3]) == pytest.approx(0.3, abs=1e-15)


def test_variational_small_theta_is_expectation():
    grid = variational_from_entropic(1e-6, ELL, 20)
    xi = np.array([0.7, -0.2, 0.1])
    assert abs(evaluate(grid, xi) - ELL.weights @ xi) <= 1e-4


def test_simplex_grid():
    g = simplex_grid(3, 4)
    assert g.shape == (simplex_grid_size(3, 4), 3) == (15, 3)
    assert np.allclose(g.sum(axis=1), 1.0)
    with pytest.raises(ConfigurationError) as exc:
        simplex_grid(6, 200)
    assert exc.value.code == "CAP_EXCEEDED"


# -- invariants --------------------------------------------------------------

box = arrays(np.float64, 3, elements=st.floats(-1, 1, allow_nan=False))


@pytest.mark.parametrize("name", list(MENU))
@settings(max_examples=60, deadline=None)
@given(xi=box)
def test_betweenness(name, xi):
    v = evaluate(MENU[name], xi)
    assert xi.min() - 1e-12 <= v <= xi.max() + 1e-12


@pytest.mark.parametrize("name", [k for k in MENU if k != "smooth_power"])
@settings(max_examples=60, deadline=None)
@given(xi=box, u=st.floats(0, 1))
def test_translation_invariance_of_ti_menu(name, xi, u):
    k = -1 - xi.min() + u * (2 - xi.max() + xi.min())
    spec = MENU[name]
    assert abs(evaluate(spec, xi + k) - evaluate(spec, xi) - k) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(xi=box)
def test_additive_capacity_is_expectation(xi):
    spec = Choquet(Capacity.from_prior(ELL))
    assert abs(evaluate(spec, xi) - ELL.weights @ xi) <= 1e-14


@settings(max_examples=100, deadline=None)
@given(xi=box)
def test_identity_distortion_and_singleton_maxmin(xi):
    assert abs(evaluate(RankDependent(Distortion("identity"), ELL), xi) - ELL.weights @ xi) <= 1e-14
    assert abs(evaluate(Maxmin((ELL,)), xi) - ELL.weights @ xi) <= 1e-15


@settings(max_examples=100, deadline=None)
@given(base=box, a=st.floats(0.1, 3), b=st.floats(-0.5, 0.5))
def test_choquet_comonotonic_additivity(base, a, b):
    spec = MENU["choquet"]
    xi = np.tanh(base) / 2
    eta = (a * base**3 + b) / 8  # increasing transform of the same vector
    assert abs(evaluate(spec, xi + eta) - evaluate(spec, xi) - evaluate(spec, eta)) <= 1e-10


@pytest.mark.parametrize("name", ["choquet", "rank_dependent"])
def test_choquet_ties_are_permutation_free(name):
    spec = MENU[name]
    xi = np.array([0.4, 0.4, -0.1])
    assert evaluate(spec, xi) == evaluate(spec, xi[[1, 0, 2]])
    xi = np.array([0.2, -0.3, 0.2])
    assert abs(evaluate(spec, xi) - evaluate(spec, xi[[2, 1, 0]])) <= 1e-15


@pytest.mark.parametrize("name", list(MENU))
def test_increment_matches_difference(name):
    spec = MENU[name]
    rng = np.random.default_rng(5)
    X = rng.uniform(-1, 1, (200, 3))
    D = rng.uniform(-0.3, 0.3, (200, 3)) * rng.uniform(0, 1, (200, 1)) ** 4
    direct = spec.evaluate_batch(X) - spec.evaluate_batch(X - D)
    assert np.allclose(spec.increment_batch(X, D), direct, atol=1e-13)


# -- probes ------------------------------------------------------------------


def test_probe_entropic_is_ti():
    report = probe_properties(MENU["entropic"], 500, 1)
    assert report.violations["translation_invariant"] <= 1e-12
    assert not report.passes("positively_homogeneous")


def test_probe_power_smooth_fails_ti():
    report = probe_properties(MENU["smooth_power"], 200, 1)
    assert report.violations["translation_invariant"] > 1e-3
    xi, k = np.array(report.worst_inputs["translation_invariant"]["xi"]), report.worst_inputs["translation_invariant"]["k"]
    spec = MENU["smooth_power"]
    assert abs(evaluate(spec, xi + k) - evaluate(spec, xi) - k) > 1e-3


def test_probe_maxmin_homogeneous_and_concave():
    report = probe_properties(MENU["maxmin"], 500, 2)
    assert report.passes("positively_homogeneous") and report.passes("concave")
    assert all(report.summary.values())


def test_probe_non_convex_choquet_is_not_concave():
    report = probe_properties(MENU["choquet"], 2000, 3)
    assert report.passes("translation_invariant") and report.passes("monotone")
    assert not report.passes("concave")


def test_probe_is_reproducible():
    a = probe_properties(MENU["rank_dependent"], 100, 9)
    b = probe_properties(MENU["rank_dependent"], 100, 9)
    assert a.violations == b.violations


def test_ti_search_is_deterministic():
    assert ti_counterexample_search(MENU["smooth_power"]) == ti_counterexample_search(MENU["smooth_power"])


# -- validation --------------------------------------------------------------


def test_domain_errors():
    with pytest.raises(DomainError):
        evaluate(MENU["expectation"], [0.0, 0.0])
    with pytest.raises(DomainError):
        evaluate(MENU["expectation"], [0.0, 0.0, 3.5])


@pytest.mark.parametrize(
    "data, code",
    [
        ({"kind": "nope"}, "UNKNOWN_KIND"),
        ({"kind": "entropic", "prior": [0.5, 0.5]}, "INVALID_SPEC"),
        ({"kind": "entropic", "theta": -1, "prior": [0.5, 0.5]}, "INVALID_SPEC"),
        ({"kind": "expectation", "prior": [0.2, 0.3, 0.5]}, "INVALID_SPEC"),
        ({"kind": "rank_dependent", "prior": [0.5, 0.5], "distortion": {"kind": "power", "gamma": 0}}, "INVALID_SPEC"),
        ({"kind": "smooth", "support": [[0.5, 0.5]], "weights": [1.0], "phi": {"kind": "power", "rho": 2}}, "INVALID_SPEC"),
    ],
)
def test_spec_from_dict_errors(data, code):
    with pytest.raises(ConfigurationError) as exc:
        spec_from_dict(data, S2)
    assert exc.value.code == code


def test_ungrounded_variational_costs_rejected():
    with pytest.raises(ConfigurationError):
        VariationalGrid(np.array([[0.5, 0.5], [1.0, 0.0]]), np.array([0.1, 0.2]))


@pytest.mark.parametrize("name", [k for k in MENU if k != "variational"])
def test_round_trip_through_dict(name):
    spec = MENU[name]
    again = spec_from_dict(spec.to_dict(S3), S3)
    xi = np.array([0.3, -0.6, 0.9])
    assert evaluate(again, xi) == pytest.approx(evaluate(spec, xi), abs=1e-15)


@pytest.mark.parametrize("alpha", [0.5, 0.65, 0.9])
def test_prelec_is_inverse_s(alpha):
    g = Distortion("prelec", alpha)
    p = np.linspace(0.01, 0.99, 99)
    curv = np.diff(g(p), 2)
    assert curv[0] < 0 < curv[-1]
