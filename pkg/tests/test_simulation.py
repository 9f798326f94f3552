import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bvnma.data_model import serialize_dataset
from bvnma.simulation import ContrastSpec, ScenarioSpec, builtin_scenario, simulate


def test_builtin_scenario_parameters():
    s1 = builtin_scenario("scenario1")
    by = {c.label: c for c in s1.contrasts}
    assert (by["AB"].d1, by["AB"].d2, by["AB"].tau1, by["AB"].tau2) == (1.0, 2.0, 0.3, 0.6)
    assert (by["BC"].d1, by["BC"].d2) == (2.0, 1.0)
    assert (by["AC"].d1, by["AC"].d2, by["AC"].tau1) == (3.0, 3.0, 0.6)
    assert all(c.rho == 0.98 and c.n_studies == 10 for c in s1.contrasts)
    s2 = {c.label: c for c in builtin_scenario("scenario2").contrasts}
    assert s2["BC"].rho == 0.0 and s2["AB"].rho == 0.98 and s2["AC"].rho == 0.98
    assert (s2["AB"].tau1, s2["AB"].tau2, s2["AC"].tau1, s2["AC"].tau2) == (0.2, 0.3, 0.3, 0.2)
    with pytest.raises(ValueError):
        builtin_scenario("scenario9")


def test_simulated_dataset_shape(scenario1):
    assert len(scenario1) == 30
    assert scenario1.network.treatments == ("A", "B", "C")
    for s in scenario1.studies:
        assert 0.15 <= s.se1 <= 0.25 and 0.15 <= s.se2 <= 0.25
        assert s.rho_w == 0.6 and s.has_final
    assert scenario1.study("AB_01").contrast == ("A", "B")


def test_simulation_deterministic():
    spec = builtin_scenario("scenario2")
    a = serialize_dataset(simulate(spec, seed=7))
    assert a == serialize_dataset(simulate(spec, seed=7))
    assert a != serialize_dataset(simulate(spec, seed=8))
    assert a == serialize_dataset(simulate(spec.with_seed(7)))
    with pytest.raises(ValueError):
        simulate(spec)


def test_spec_json_round_trip():
    spec = builtin_scenario("scenario1", seed=3)
    again = ScenarioSpec.from_json(spec.to_json())
    assert again == spec


@given(st.floats(-3, 3), st.floats(0, 1), st.floats(0, 1), st.floats(-1, 1))
def test_contrast_spec_round_trip(d1, t1, t2, r):
    c = ContrastSpec("A", "B", d1, 0.0, t1, t2, r)
    spec = ScenarioSpec((c,), seed=0)
    assert ScenarioSpec.from_dict(spec.to_dict()) == spec


def test_invalid_specs():
    with pytest.raises(ValueError):
        ContrastSpec("A", "A", 0, 0, 0.1, 0.1, 0)
    with pytest.raises(ValueError):
        ContrastSpec("A", "B", 0, 0, -0.1, 0.1, 0)
    with pytest.raises(ValueError):
        ContrastSpec("A", "B", 0, 0, 0.1, 0.1, 1.1)
    c = ContrastSpec("A", "B", 0, 0, 0.1, 0.1, 0)
    with pytest.raises(ValueError):
        ScenarioSpec((c,), se_lo=(0.3, 0.3), se_hi=(0.2, 0.2))
    with pytest.raises(ValueError):
        ScenarioSpec(())


def test_marginal_covariance_large_sample():
    # with no heterogeneity the draws follow the within-study covariance
    c = ContrastSpec("A", "B", 1.0, -1.0, 0.0, 0.0, 0.0, n_studies=20000)
    spec = ScenarioSpec((c,), se_lo=(0.2, 0.2), se_hi=(0.2, 0.2), rho_w=0.6)
    ds = simulate(spec, seed=1)
    y = np.array([[s.y1, s.y2] for s in ds.studies])
    np.testing.assert_allclose(y.mean(axis=0), [1.0, -1.0], atol=0.01)
    np.testing.assert_allclose(np.cov(y.T), [[0.04, 0.024], [0.024, 0.04]], atol=0.002)
    c = ContrastSpec("A", "B", 0.0, 0.0, 0.5, 0.3, -0.9, n_studies=20000)
    ds = simulate(ScenarioSpec((c,), se_lo=(0.2, 0.2), se_hi=(0.2, 0.2), rho_w=0.6), seed=2)
    y = np.array([[s.y1, s.y2] for s in ds.studies])
    expected = np.array([[0.04 + 0.25, 0.024 - 0.9 * 0.15], [0.024 - 0.9 * 0.15, 0.04 + 0.09]])
    np.testing.assert_allclose(np.cov(y.T), expected, atol=0.01)
