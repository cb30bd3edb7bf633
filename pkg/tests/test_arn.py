from __future__ import annotations

import numpy as np
import pytest

from conftest import central_difference, max_relative_error, oracle_loss, random_state
from vqst import arn as ar
from vqst.core import all_configurations, fidelity
from vqst.measurement import generate_bases, sample_dataset
from vqst.mps import init_mps
from vqst.training import TrainConfig, train_fidelity


def randomized(n, seed, std=0.7):
    a = ar.init_arn(n, seed)
    rng = np.random.default_rng(seed + 50)
    a.set_parameters(std * rng.normal(size=a.n_parameters))
    return a


def explicit_forward(a: ar.ARN, bits: np.ndarray) -> complex:
    """Site-by-site evaluation that only ever feeds the prefix s_<i."""
    n = a.n_qubits
    amp = 1.0 + 0j
    for i in range(n):
        x = np.zeros(n)
        x[:i] = 2.0 * bits[:i] - 1.0  # later inputs are unseen; any value works
        h1 = np.tanh(x @ a.weights[0] + a.biases[0])
        h2 = np.tanh(h1 @ a.weights[1] + a.biases[1])
        out = h2 @ a.weights[2] + a.biases[2]
        p0 = 1.0 / (1.0 + np.exp(-out[i]))
        p = p0 if bits[i] == 0 else 1.0 - p0
        amp *= np.sqrt(p) * np.exp(2j * np.pi * bits[i] * out[n + i])
    return amp


def test_masks_are_autoregressive():
    m1, m2, m3 = ar.made_masks(5)
    reach = (m1 @ m2 @ m3) > 0  # input -> output connectivity
    for i in range(5):
        for out in (i, 5 + i):
            assert not reach[i:, out].any()


def test_outputs_ignore_current_and_later_bits():
    a = randomized(6, 0)
    rng = np.random.default_rng(0)
    base = rng.integers(0, 2, size=6)
    p0, theta = ar.arn_forward(a, base)
    for i in range(6):
        flipped = base.copy()
        flipped[i:] = 1 - flipped[i:]
        q0, phi = ar.arn_forward(a, flipped)
        assert np.allclose(q0[: i + 1], p0[: i + 1]) and np.allclose(phi[: i + 1], theta[: i + 1])


def test_amplitudes_match_explicit_prefix_evaluation():
    a = randomized(6, 1)
    bits = all_configurations(6)
    got = ar.arn_amplitude(a, bits)
    ref = np.array([explicit_forward(a, b) for b in bits])
    assert np.max(np.abs(got - ref) / np.abs(ref)) < 1e-10


@pytest.mark.parametrize("n", [3, 8, 12])
def test_normalized_by_construction(n):
    psi = ar.arn_to_dense(randomized(n, n))
    assert abs(np.vdot(psi, psi).real - 1) < 1e-10


def test_parameter_count_matches_masks():
    a = ar.init_arn(20, 0)
    assert a.get_parameters().size == a.n_parameters
    m1, m2, m3 = ar.made_masks(20)
    assert a.n_parameters == int(m1.sum() + m2.sum() + m3.sum()) + 60 + 60 + 40


def test_ancestral_sampling_matches_born_distribution():
    a = randomized(6, 2)
    s = ar.arn_sample(a, 100_000, np.random.default_rng(0))
    assert s.size == 100_000
    freq = np.zeros(64)
    freq[s.unique] = s.counts / s.size
    p = np.abs(ar.arn_to_dense(a)) ** 2
    assert 0.5 * np.abs(freq - p).sum() < 0.02
    assert np.all(np.diff(s.unique) > 0)


def test_sampling_is_seeded():
    a = randomized(5, 3)
    x = ar.arn_sample(a, 500, np.random.default_rng(4))
    y = ar.arn_sample(a, 500, np.random.default_rng(4))
    assert np.array_equal(x.unique, y.unique) and np.array_equal(x.counts, y.counts)
    with pytest.raises(ValueError):
        ar.arn_sample(a, 0)


def test_full_support_loss_equals_dense_loss():
    a = randomized(4, 4)
    rec = sample_dataset(random_state(4, 0), generate_bases(4), 20, seed=0).records()
    assert ar.arn_loss(a, rec, np.arange(16)) == pytest.approx(oracle_loss(ar.arn_to_dense(a), rec), rel=1e-11)


@pytest.mark.parametrize("renormalize", [True, False])
def test_gradient_matches_finite_differences(renormalize):
    a = randomized(4, 5, std=0.4)
    a.renormalize = renormalize
    rec = sample_dataset(random_state(4, 3), generate_bases(4), 20, seed=4).records()
    support = np.arange(16) if not renormalize else np.array([0, 2, 3, 5, 6, 9, 10, 12, 13, 15])
    x0 = a.get_parameters()

    def f(x):
        t = a.copy()
        t.set_parameters(x)
        return ar.arn_loss(t, rec, support, floor=1e-12)

    _, grad = ar.arn_loss_and_gradient(a, rec, support, floor=1e-12)
    assert max_relative_error(grad, central_difference(f, x0)) < 1e-4


def test_fidelity_objective_and_gradient():
    a = randomized(4, 6, std=0.4)
    target = random_state(4, 1)
    target[[3, 7]] = 0.0
    target /= np.linalg.norm(target)
    value, grad = a.fidelity_objective(target)
    assert -value == pytest.approx(fidelity(target, ar.arn_to_dense(a)), rel=1e-12)
    x0 = a.get_parameters()

    def f(x):
        t = a.copy()
        t.set_parameters(x)
        return t.fidelity_objective(target)[0]

    assert max_relative_error(grad, central_difference(f, x0)) < 1e-5


def test_fidelity_training_learns_a_small_state():
    target = random_state(3, 2)
    res = train_fidelity(ar.init_arn(3, 0), target, TrainConfig(learning_rate=0.02, max_epochs=3000,
                                                               patience=200, target_fidelity=0.99))
    assert fidelity(target, res.best.to_dense()) >= 0.99


def test_save_and_load(tmp_path):
    a = randomized(5, 7)
    a.save(tmp_path / "a.npz")
    back = ar.load_arn(tmp_path / "a.npz")
    assert np.array_equal(back.get_parameters(), a.get_parameters())
    assert np.allclose(back.to_dense(), a.to_dense())
    init_mps(3, 2, 0).save(tmp_path / "m.npz")
    with pytest.raises(ValueError, match="not an ARN"):
        ar.load_arn(tmp_path / "m.npz")
