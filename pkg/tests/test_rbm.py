from __future__ import annotations

import itertools

import numpy as np
import pytest

from conftest import central_difference, max_relative_error, oracle_loss, random_state
from vqst import rbm as rb
from vqst.core import all_configurations
from vqst.measurement import MeasurementDataset, generate_bases, sample_dataset
from vqst.mps import ZeroAmplitudeError


def randomized(n, h, seed, scale=0.5):
    r = rb.init_rbm(n, h, seed, chains=256)
    rng = np.random.default_rng(seed + 100)
    r.set_parameters(scale * rng.normal(size=r.n_parameters))
    return r


def hidden_sum(s, w, a, b):
    """Explicit sum over every hidden configuration."""
    total = 0.0
    for h in itertools.product([0, 1], repeat=len(b)):
        h = np.array(h)
        total += np.exp(s @ a + h @ b + s @ w @ h)
    return total


def test_free_energy_equals_hidden_enumeration():
    r = randomized(3, 2, 0)
    for s in all_configurations(3):
        p = hidden_sum(s, r.w_amp, r.a_amp, r.b_amp)
        assert rb.rbm_log_unnormalized_p(r, s) == pytest.approx(np.log(p), rel=1e-12)
        phi = np.log(hidden_sum(s, r.w_phase, r.a_phase, r.b_phase))
        assert rb.rbm_phase(r, s) == pytest.approx(phi, rel=1e-12)
        expected = np.sqrt(p) * np.exp(1j * phi)
        assert rb.rbm_amplitude(r, s) == pytest.approx(expected, rel=1e-12)


def test_zero_parameters_give_uniform_weight():
    r = rb.init_rbm(4, 3, 0)
    r.set_parameters(np.zeros(r.n_parameters))
    assert rb.rbm_log_unnormalized_p(r, np.array([1, 0, 1, 1])) == pytest.approx(3 * np.log(2))
    assert np.allclose(np.abs(rb.rbm_to_dense(r)) ** 2, 1 / 16)


def test_parameter_count():
    assert rb.parameter_count(20, 100) == 4240
    assert rb.init_rbm(20, 100, 0, chains=4).n_parameters == 4240
    assert rb.init_rbm(20, 100, 0, chains=4).get_parameters().size == 4240


def test_to_dense_is_normalized():
    psi = rb.rbm_to_dense(randomized(6, 4, 1, scale=2.0))
    assert abs(np.linalg.norm(psi) - 1) < 1e-12


def test_contrastive_divergence_reaches_model_distribution():
    r = randomized(4, 3, 2, scale=1.0)
    r.chains = np.zeros((2000, 4), dtype=np.uint8)
    for _ in range(50):  # burn-in
        rb.rbm_cd_step(r)
    s = rb.rbm_sample(r, 200_000)
    freq = np.zeros(16)
    freq[s.unique] = s.counts / s.size
    p = np.abs(rb.rbm_to_dense(r)) ** 2
    assert 0.5 * np.abs(freq - p).sum() < 0.02


def test_sample_pools_all_chain_steps():
    r = rb.init_rbm(5, 3, 0, chains=100)
    assert rb.rbm_sample(r, 250).size == 300


def test_full_support_loss_equals_dense_loss():
    r = randomized(4, 3, 3)
    rec = sample_dataset(random_state(4, 0), generate_bases(4), 20, seed=0).records()
    support = np.arange(16)
    assert rb.rbm_loss(r, rec, support) == pytest.approx(oracle_loss(rb.rbm_to_dense(r), rec), rel=1e-11)


def test_single_configuration_support_explains_z_data_exactly():
    r = randomized(3, 2, 4)
    rec = MeasurementDataset(3, ["ZZZ"], [np.array([5, 5, 5])]).records()
    assert rb.rbm_loss(r, rec, np.array([5])) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ZeroAmplitudeError):
        rb.rbm_loss(r, rec, np.array([4]))


def test_global_phase_shift_leaves_loss_unchanged():
    r = randomized(4, 3, 5)
    rec = sample_dataset(random_state(4, 1), generate_bases(4), 10, seed=2).records()
    support = np.arange(16)
    # with zero weights on hidden unit 0, its phase bias adds a constant phase
    r.w_phase[:, 0] = 0.0
    base = rb.rbm_loss(r, rec, support)
    r.b_phase[0] += 0.9
    assert rb.rbm_loss(r, rec, support) == pytest.approx(base, rel=1e-12)


@pytest.mark.parametrize("method", ["dense", "direct"])
def test_gradient_matches_finite_differences(method):
    r = randomized(4, 4, 6, scale=0.3)
    rec = sample_dataset(random_state(4, 3), generate_bases(4), 20, seed=4).records()
    support = np.array([0, 1, 3, 4, 6, 7, 9, 10, 12, 15])
    x0 = r.get_parameters()

    def f(x):
        t = r.copy()
        t.set_parameters(x)
        return rb.rbm_loss(t, rec, support, floor=1e-12)

    loss, grad = rb.rbm_loss_and_gradient(r, rec, support, floor=1e-12, method=method)
    assert loss == pytest.approx(f(x0), rel=1e-12)
    assert max_relative_error(grad, central_difference(f, x0)) < 1e-4


def test_fidelity_objective_gradient():
    r = randomized(3, 2, 7, scale=0.3)
    target = random_state(3, 5)
    x0 = r.get_parameters()

    def f(x):
        t = r.copy()
        t.set_parameters(x)
        return t.fidelity_objective(target)[0]

    value, grad = r.fidelity_objective(target)
    assert -value == pytest.approx(abs(np.vdot(target, rb.rbm_to_dense(r))) ** 2, rel=1e-12)
    assert max_relative_error(grad, central_difference(f, x0)) < 1e-5


def test_training_protocol_requires_support():
    r = rb.init_rbm(3, 2, 0)
    rec = MeasurementDataset(3, ["ZZZ"], [np.array([1])]).records()
    with pytest.raises(ValueError, match="prepare_epoch"):
        r.loss(rec)
    r.prepare_epoch(2048)
    assert np.isfinite(r.loss(rec, 1e-12))


def test_save_and_load_restores_chains_and_rng(tmp_path):
    r = randomized(5, 3, 8)
    rb.rbm_cd_step(r)
    r.save(tmp_path / "r.npz")
    back = rb.load_rbm(tmp_path / "r.npz")
    assert np.array_equal(back.get_parameters(), r.get_parameters())
    assert np.array_equal(rb.rbm_cd_step(back), rb.rbm_cd_step(r))


def test_copy_is_independent():
    r = randomized(3, 2, 9)
    c = r.copy()
    c.w_amp[0, 0] += 1.0
    assert r.w_amp[0, 0] != c.w_amp[0, 0]
    assert c.rng.bit_generator.state == r.rng.bit_generator.state
    c.rng.random()
    assert c.rng.bit_generator.state != r.rng.bit_generator.state
