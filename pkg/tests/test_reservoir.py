import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import deepesn as de
from deepesn import reservoir as rc
from deepesn.exceptions import DegenerateConfigurationError, UnscalableMatrixError

from conftest import gelfand_radius


# ---------------------------------------------------------------- HyperParams

@pytest.mark.parametrize("kwargs", [
    dict(num_layers=0, units_per_layer=5),
    dict(num_layers=2, units_per_layer=0),
    dict(num_layers=2, units_per_layer=5, input_dim=0),
    dict(num_layers=2, units_per_layer=5, leak_rate=-0.1),
    dict(num_layers=2, units_per_layer=5, leak_rate=1.1),
    dict(num_layers=2, units_per_layer=5, spectral_radius_target=0.0),
    dict(num_layers=2, units_per_layer=5, input_scale=-1.0),
    dict(num_layers=2, units_per_layer=5, activation="relu"),
    dict(num_layers=2, units_per_layer=5, seed=-1),
])
def test_hyperparams_validation(kwargs):
    with pytest.raises(ValueError):
        de.HyperParams(**kwargs)


def test_total_units():
    assert de.HyperParams(10, 100).total_units == 1000


# ------------------------------------------------------------ spectral_radius

def test_spectral_radius_identity():
    assert de.spectral_radius(np.eye(5)) == pytest.approx(1.0, rel=1e-12)


def test_spectral_radius_diagonal():
    assert de.spectral_radius(np.diag([0.5, -0.9])) == pytest.approx(0.9, rel=1e-12)


def test_spectral_radius_rotation():
    # eigenvalues are the purely imaginary pair +/- i
    m = np.array([[0.0, -1.0], [1.0, 0.0]])
    assert de.spectral_radius(m) == pytest.approx(1.0, rel=1e-12)


def test_spectral_radius_rejects_nonsquare():
    with pytest.raises(ValueError):
        de.spectral_radius(np.ones((2, 3)))


def test_spectral_radius_rejects_nonfinite():
    with pytest.raises(ValueError):
        de.spectral_radius(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_spectral_radius_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        de.spectral_radius(np.eye(2), rel_tol=0.0)


def test_spectral_radius_matches_gelfand_oracle(rng):
    for n in (3, 7, 20):
        m = rng.uniform(-1.0, 1.0, (n, n))
        assert de.spectral_radius(m) == pytest.approx(gelfand_radius(m), rel=1e-10)


# ------------------------------------------------------------- init_reservoir

def test_init_is_deterministic(small_params):
    a = de.init_reservoir(small_params)
    b = de.init_reservoir(small_params)
    assert np.array_equal(a.input_weights, b.input_weights)
    for x, y in zip(a.inter_layer_weights, b.inter_layer_weights):
        assert np.array_equal(x, y)
    for x, y in zip(a.recurrent_weights, b.recurrent_weights):
        assert np.array_equal(x, y)


def test_init_shapes(small_reservoir, small_params):
    p = small_params
    assert small_reservoir.input_weights.shape == (p.units_per_layer, p.input_dim)
    assert len(small_reservoir.inter_layer_weights) == p.num_layers - 1
    assert len(small_reservoir.recurrent_weights) == p.num_layers
    for w in small_reservoir.inter_layer_weights + small_reservoir.recurrent_weights:
        assert w.shape == (p.units_per_layer, p.units_per_layer)


def test_init_weight_bounds(small_reservoir, small_params):
    s = small_params.input_scale
    assert np.all(np.abs(small_reservoir.input_weights) <= s)
    for w in small_reservoir.inter_layer_weights:
        assert np.all(np.abs(w) <= s)


def test_zero_input_scale_zeroes_feed_matrices():
    p = de.HyperParams(3, 4, input_scale=0.0, leak_rate=0.9,
                       spectral_radius_target=0.7, seed=9)
    r = de.init_reservoir(p)
    assert np.all(r.input_weights == 0.0)
    for w in r.inter_layer_weights:
        assert np.all(w == 0.0)


def test_spectral_radius_postcondition_headline_config():
    # the headline configuration: 10 layers of 100 units
    p = de.HyperParams(10, 100, input_scale=1.0, leak_rate=0.9,
                       spectral_radius_target=0.7, seed=77)
    r = de.init_reservoir(p)
    for w in r.recurrent_weights:
        measured = de.spectral_radius(de.effective_matrix(w, p.leak_rate))
        assert measured == pytest.approx(0.7, rel=1e-10)
    # independent oracle on the first layer
    eff = de.effective_matrix(r.recurrent_weights[0], p.leak_rate)
    assert gelfand_radius(eff) == pytest.approx(0.7, rel=1e-10)


def test_more_layers_do_not_perturb_earlier_matrices(small_params):
    shallow = de.init_reservoir(small_params)
    deeper = de.init_reservoir(dataclasses.replace(small_params, num_layers=5))
    assert np.array_equal(shallow.input_weights, deeper.input_weights)
    for x, y in zip(shallow.inter_layer_weights, deeper.inter_layer_weights):
        assert np.array_equal(x, y)
    for x, y in zip(shallow.recurrent_weights, deeper.recurrent_weights):
        assert np.array_equal(x, y)


def test_zero_leak_rate_rejected(small_params):
    with pytest.raises(DegenerateConfigurationError):
        de.init_reservoir(dataclasses.replace(small_params, leak_rate=0.0))


def test_unscalable_matrix_error(monkeypatch, small_params):
    monkeypatch.setattr(rc, "_recurrent_base", lambda *args: None)
    with pytest.raises(UnscalableMatrixError):
        de.init_reservoir(small_params)


def test_unscalable_retry_uses_next_substream(monkeypatch, small_params):
    plain = de.init_reservoir(small_params)
    real = rc._recurrent_base.__wrapped__

    def flaky(seed, layer, n_units, attempt):
        if attempt == 0:
            return None
        return real(seed, layer, n_units, attempt)

    monkeypatch.setattr(rc, "_recurrent_base", flaky)
    retried = de.init_reservoir(small_params)
    assert not np.array_equal(plain.recurrent_weights[0], retried.recurrent_weights[0])
    # the retried draw still satisfies the spectral-radius post-condition
    eff = de.effective_matrix(retried.recurrent_weights[0], small_params.leak_rate)
    assert de.spectral_radius(eff) == pytest.approx(0.7, rel=1e-10)


def test_weight_arrays_are_readonly(small_reservoir):
    with pytest.raises(ValueError):
        small_reservoir.input_weights[0, 0] = 1.0


# ----------------------------------------------------------------------- step

def test_step_zero_fixed_point(small_reservoir, small_params):
    state = de.zero_state(small_params)
    out = de.step(small_reservoir, state, np.zeros(1))
    assert np.all(out == 0.0)


def test_step_full_leak_layer1(rng):
    p = de.HyperParams(2, 5, leak_rate=1.0, spectral_radius_target=0.8, seed=3)
    r = de.init_reservoir(p)
    state = rng.standard_normal((2, 5))
    u = rng.standard_normal(1)
    out = de.step(r, state, u)
    expected = r.input_weights @ u + r.recurrent_weights[0] @ state[0]
    np.testing.assert_allclose(out[0], expected, rtol=1e-15)


def test_step_hand_expanded_two_layers():
    # one step from zero: layer 2 sees a^2 * W2 @ W_in * u
    a = 0.6
    w_in = np.array([[1.0], [2.0]])
    w2 = np.array([[0.5, -1.0], [2.0, 0.25]])
    w_hat = np.array([[0.3, 0.1], [0.0, 0.2]])
    p = de.HyperParams(2, 2, leak_rate=a, spectral_radius_target=0.5, seed=0)
    r = de.DeepReservoir(input_weights=w_in, inter_layer_weights=(w2,),
                         recurrent_weights=(w_hat, w_hat), params=p)
    u = np.array([1.5])
    out = de.step(r, de.zero_state(p), u)
    np.testing.assert_allclose(out[0], a * (w_in @ u), rtol=1e-15)
    np.testing.assert_allclose(out[1], a * a * (w2 @ w_in @ u), rtol=1e-15)


def test_step_saturating_applies_tanh():
    p = de.HyperParams(1, 3, leak_rate=0.5, spectral_radius_target=0.9,
                       activation="saturating", seed=11)
    r = de.init_reservoir(p)
    state = np.full((1, 3), 0.4)
    u = np.array([2.0])
    out = de.step(r, state, u)
    pre = r.input_weights @ u + r.recurrent_weights[0] @ state[0]
    np.testing.assert_allclose(out[0], 0.5 * state[0] + 0.5 * np.tanh(pre), rtol=1e-15)


def test_step_dimension_errors(small_reservoir):
    with pytest.raises(ValueError):
        de.step(small_reservoir, np.zeros((2, 6)), np.zeros(1))
    with pytest.raises(ValueError):
        de.step(small_reservoir, np.zeros((3, 6)), np.zeros(2))


# ------------------------------------------------------------------------ run

def test_run_single_step(small_reservoir):
    traj = de.run(small_reservoir, np.array([0.7]))
    assert traj.num_steps == 1
    assert traj.states.shape == (1, 3, 6)


def test_run_zero_inputs_zero_trajectory(small_reservoir):
    traj = de.run(small_reservoir, np.zeros(20))
    assert np.all(traj.states == 0.0)


def test_run_rejects_empty(small_reservoir):
    with pytest.raises(ValueError):
        de.run(small_reservoir, np.zeros((0, 1)))


def test_run_matches_manual_stepping(small_reservoir, small_params, rng):
    u = rng.uniform(-1, 1, 17)
    traj = de.run(small_reservoir, u)
    state = de.zero_state(small_params)
    for t in range(17):
        state = de.step(small_reservoir, state, u[t:t + 1])
        assert np.array_equal(traj.states[t], state)


def test_concatenated_layout(small_reservoir, rng):
    u = rng.uniform(-1, 1, 5)
    traj = de.run(small_reservoir, u)
    flat = traj.concatenated
    assert flat.shape == (5, 18)
    np.testing.assert_array_equal(flat[:, :6], traj.states[:, 0, :])
    np.testing.assert_array_equal(flat[:, 12:], traj.states[:, 2, :])


def test_causality(small_reservoir, rng):
    u = rng.uniform(-1, 1, 30)
    v = u.copy()
    v[20] += 0.5
    a = de.run(small_reservoir, u)
    b = de.run(small_reservoir, v)
    assert np.array_equal(a.states[:20], b.states[:20])
    assert not np.array_equal(a.states[20], b.states[20])


@settings(max_examples=20, deadline=None)
@given(scale=st.floats(-3.0, 3.0, allow_nan=False), seed=st.integers(0, 2 ** 16))
def test_linear_homogeneity(scale, seed):
    p = de.HyperParams(2, 4, leak_rate=0.7, spectral_radius_target=0.9, seed=17)
    r = de.init_reservoir(p)
    u = np.random.default_rng(seed).uniform(-1, 1, 25)
    base = de.run(r, u).states
    scaled = de.run(r, scale * u).states
    np.testing.assert_allclose(scaled, scale * base,
                               rtol=1e-12, atol=1e-12 * max(1.0, abs(scale)))


def test_linear_superposition(rng):
    p = de.HyperParams(3, 5, leak_rate=0.8, spectral_radius_target=0.9, seed=23)
    r = de.init_reservoir(p)
    u = rng.uniform(-1, 1, 40)
    v = rng.uniform(-1, 1, 40)
    left = de.run(r, u + v).states
    right = de.run(r, u).states + de.run(r, v).states
    np.testing.assert_allclose(left, right, atol=1e-10)


# ------------------------------------------------------------------ run_batch

def test_run_batch_matches_run(rng):
    p = de.HyperParams(3, 8, leak_rate=0.9, spectral_radius_target=0.7, seed=0)
    reservoirs = [de.init_reservoir(dataclasses.replace(p, seed=s)) for s in (1, 2, 3)]
    u = rng.uniform(-1, 1, 60)
    batched = de.run_batch(reservoirs, u)
    for r, traj in zip(reservoirs, batched):
        assert np.array_equal(traj.states, de.run(r, u).states)


def test_run_batch_rejects_mixed_shapes():
    a = de.init_reservoir(de.HyperParams(2, 4, seed=1))
    b = de.init_reservoir(de.HyperParams(2, 5, seed=1))
    with pytest.raises(ValueError):
        de.run_batch([a, b], np.ones(3))


def test_run_batch_empty():
    assert de.run_batch([], np.ones(3)) == []


# ----------------------------------------------------------------------- dump

def test_dump_reservoir_roundtrip(tmp_path, small_reservoir):
    path = tmp_path / "res.npz"
    de.dump_reservoir(small_reservoir, path)
    data = np.load(path)
    np.testing.assert_array_equal(data["input_weights"], small_reservoir.input_weights)
    np.testing.assert_array_equal(data["recurrent_1"], small_reservoir.recurrent_weights[0])
    np.testing.assert_array_equal(data["inter_layer_2"], small_reservoir.inter_layer_weights[0])
