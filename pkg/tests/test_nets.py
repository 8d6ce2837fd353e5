import numpy as np
import pytest

from sptm.nets import (
    AdamState,
    LocomotionPolicy,
    SimilarityModel,
    adam_step,
    grad_check,
    obs_batch_to_mat,
    obs_to_vec,
    perturb_params,
    softmax,
)


def tiny_similarity(seed=0, encoder="patch"):
    return SimilarityModel(frame_width=4, frame_height=3, embed_dim=4,
                           enc_hidden=8, head_hidden=6, head_layers=2, seed=seed,
                           encoder=encoder, patch=1, patch_units=2)


def tiny_policy(seed=0, encoder="patch"):
    return LocomotionPolicy(frame_width=4, frame_height=3, hidden=(8, 6), seed=seed,
                            encoder=encoder, patch=1, patch_units=2)


def rand_obs_vec(rng, model):
    return rng.random(model.obs_dim)


def test_similarity_output_in_unit_interval():
    m = tiny_similarity()
    rng = np.random.default_rng(0)
    x = rand_obs_vec(rng, m)
    p = m.similarity(x, x)
    assert p.shape == (1,)
    assert 0.0 <= p[0] <= 1.0


def test_similarity_factorizes_exactly():
    m = tiny_similarity(3)
    rng = np.random.default_rng(1)
    x1 = rng.random((100, m.obs_dim))
    x2 = rng.random((100, m.obs_dim))
    via_head = m.head_similarity(m.embed(x1), m.embed(x2))
    direct = m.similarity(x1, x2)
    assert (via_head == direct).all()


def test_embed_deterministic_and_resolution_checked():
    m = tiny_similarity()
    rng = np.random.default_rng(2)
    x = rng.random((5, m.obs_dim))
    assert (m.embed(x) == m.embed(x)).all()
    with pytest.raises(ValueError, match="dim"):
        m.embed(x[:, :-1])


def test_policy_distribution_sums_to_one():
    pol = tiny_policy()
    rng = np.random.default_rng(3)
    x = rng.random((50, pol.obs_dim))
    g = rng.random((50, pol.obs_dim))
    p = pol.action_probs(x, g)
    assert p.shape == (50, 7)
    assert (p >= 0).all()
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_policy_zeroed_final_layer_uniform():
    pol = tiny_policy()
    last = pol.net.n_layers - 1
    pol.params[f"pol.W{last}"][:] = 0.0
    pol.params[f"pol.b{last}"][:] = 0.0
    rng = np.random.default_rng(4)
    p = pol.action_probs(rng.random(pol.obs_dim), rng.random(pol.obs_dim))
    assert (p == 1.0 / 7.0).all()


def test_adam_zero_gradient_leaves_params():
    params = {"w": np.array([1.0, -2.0, 3.0])}
    grads = {"w": np.zeros(3)}
    state = AdamState(params)
    adam_step(params, grads, state)
    assert (params["w"] == np.array([1.0, -2.0, 3.0])).all()


def test_adam_single_step_hand_computed():
    # t=1 with g=1: m_hat = 1, v_hat = 1 -> w' = w - lr * 1/(1 + eps)
    lr, eps = 1e-4, 1e-8
    params = {"w": np.array([1.0])}
    grads = {"w": np.array([1.0])}
    state = AdamState(params)
    adam_step(params, grads, state, lr=lr, eps=eps)
    expected = 1.0 - lr * 1.0 / (1.0 + eps)
    assert abs(params["w"][0] - expected) < 1e-12


def test_adam_hand_oracle_two_steps():
    # scalar oracle computed straight from the update equations
    lr, b1, b2, eps = 1e-2, 0.9, 0.999, 1e-8
    w, m, v = 5.0, 0.0, 0.0
    params = {"w": np.array([5.0])}
    state = AdamState(params)
    for t in (1, 2):
        g = 2.0 * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        g_arr = {"w": np.array([2.0 * params["w"][0]])}
        adam_step(params, g_arr, state, lr=lr, beta1=b1, beta2=b2, eps=eps)
        assert abs(params["w"][0] - w) < 1e-12


def test_adam_converges_on_quadratic():
    params = {"w": np.array([5.0])}
    state = AdamState(params)
    for _ in range(1000):
        grads = {"w": 2.0 * params["w"]}
        adam_step(params, grads, state, lr=1e-2)
    assert abs(params["w"][0]) < 0.5


def test_adam_shape_mismatch_rejected():
    params = {"w": np.zeros((2, 3))}
    state = AdamState(params)
    with pytest.raises(ValueError, match="shape"):
        adam_step(params, {"w": np.zeros((3, 2))}, state)


def test_grad_check_similarity_all_entries():
    m = tiny_similarity(7)
    perturb_params(m, seed=7)
    rng = np.random.default_rng(7)
    batch = (rng.random((4, m.obs_dim)), rng.random((4, m.obs_dim)),
             np.array([0, 1, 1, 0]))
    report = grad_check(m, batch, tolerance=1e-4)
    assert report["passed"], report["max_rel_err"]


def test_grad_check_policy_all_entries():
    pol = tiny_policy(8)
    perturb_params(pol, seed=8)
    rng = np.random.default_rng(8)
    batch = (rng.random((4, pol.obs_dim)), rng.random((4, pol.obs_dim)),
             np.array([0, 3, 6, 1]))
    report = grad_check(pol, batch, tolerance=1e-4)
    assert report["passed"], report["max_rel_err"]


def test_grad_check_catches_corruption():
    pol = tiny_policy(9)
    perturb_params(pol, seed=9)
    rng = np.random.default_rng(9)
    batch = (rng.random((4, pol.obs_dim)), rng.random((4, pol.obs_dim)),
             np.array([2, 2, 5, 0]))

    _, ref = pol.loss_and_grads(batch)
    victim = int(np.argmax(np.abs(ref["pol.W0"])))

    class Corrupted:
        params = pol.params

        def loss_and_grads(self, b):
            loss, grads = pol.loss_and_grads(b)
            grads["pol.W0"] = grads["pol.W0"].copy()
            grads["pol.W0"].reshape(-1)[victim] *= 2.0
            return loss, grads

    report = grad_check(Corrupted(), batch, tolerance=1e-4)
    assert not report["passed"]


def test_softmax_rows_normalized():
    rng = np.random.default_rng(10)
    z = rng.normal(size=(30, 7)) * 50
    p = softmax(z)
    assert (p >= 0).all()
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_obs_vector_scaling():
    obs = np.full((2, 3, 4, 3), 255, dtype=np.uint8)
    v = obs_to_vec(obs)
    assert v.shape == (2 * 3 * 4 * 3,)
    assert (v == 1.0).all()
    batch = np.stack([obs, np.zeros_like(obs)])
    m = obs_batch_to_mat(batch)
    assert m.shape == (2, 72)
    assert (m[1] == 0.0).all()
