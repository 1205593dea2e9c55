import copy
import math

import numpy as np
import pytest

from helpers import rand_point, rand_spd, rel_err, trajectory_dataset
from spdemg.errors import InvalidInput, OdeDiverged
from spdemg.geometry import CholeskyPoint, SplitPair, chart_log
from spdemg.gru import (
    GATES,
    GruModel,
    GruModelConfig,
    GruParams,
    _cell_bwd,
    _cell_fwd,
    candidate,
    gate_r,
    gate_z,
    gru_model_forward,
    gru_train,
    ode_evolve,
    output_combine,
    softplus,
)
from spdemg.linalg import cholesky_lower
from spdemg.spdnet import classify_forward, reeig_forward


def _random_params(d, rng, scale=0.5):
    params = GruParams.init(d, rng, scale=scale)
    mask = np.tril(np.ones((d, d)), -1)
    for g in GATES:
        params.strict_b[g] = rng.standard_normal((d, d)) * scale * mask
        params.diag_scale_raw[g] = rng.standard_normal(d) * scale
    return params


# ---------------------------------------------------------------------------
# gates


def test_gate_at_zero_parameters():
    d = 4
    params = GruParams.zeros(d)
    l = CholeskyPoint.identity(d)
    z = gate_z(l, l, params)
    mask = np.tril(np.ones((d, d)), -1)
    assert np.allclose(z.strict[mask == 1], 0.5)
    assert np.array_equal(z.strict * (1 - mask), np.zeros((d, d)))
    # diagonal: sigmoid of softplus(0) * exp(0)
    expected = 1.0 / (1.0 + math.exp(-softplus(np.zeros(1))[0]))
    assert np.allclose(z.diag, expected)


def test_gate_range():
    # magnitudes kept moderate so the sigmoid stays representable below
    # 1.0 in float64 (it saturates exactly past ~36.7)
    rng = np.random.default_rng(0)
    d = 4
    mask = np.tril(np.ones((d, d)), -1)
    for _ in range(1000):
        params = _random_params(d, rng, scale=0.5)
        l, h = rand_point(d, rng, scale=0.5), rand_point(d, rng, scale=0.5)
        for gate in (gate_z, gate_r):
            g = gate(l, h, params)
            strict_vals = g.strict[mask == 1]
            assert np.all((strict_vals > 0) & (strict_vals < 1))
            assert np.all((g.diag > 0) & (g.diag < 1))


def test_gate_monotone_in_strict_bias():
    rng = np.random.default_rng(1)
    d = 4
    params = _random_params(d, rng)
    l, h = rand_point(d, rng), rand_point(d, rng)
    low = gate_z(l, h, params)
    bumped = copy.deepcopy(params)
    bumped.strict_b["z"] = params.strict_b["z"] + 0.5 * np.tril(np.ones((d, d)), -1)
    high = gate_z(l, h, bumped)
    mask = np.tril(np.ones((d, d)), -1) == 1
    assert np.all(high.strict[mask] > low.strict[mask])


def test_gate_dim_mismatch():
    params = GruParams.zeros(3)
    with pytest.raises(InvalidInput):
        gate_z(CholeskyPoint.identity(4), CholeskyPoint.identity(4), params)


# ---------------------------------------------------------------------------
# candidate


def test_candidate_zero_strict_parameters():
    rng = np.random.default_rng(2)
    d = 4
    params = GruParams.zeros(d)
    l, h = rand_point(d, rng), rand_point(d, rng)
    r = gate_r(l, h, params)
    c = candidate(l, r, h, params)
    assert np.array_equal(c.strict, np.zeros((d, d)))


def test_candidate_positive_diagonal_and_bounded_strict():
    rng = np.random.default_rng(3)
    d = 5
    mask = np.tril(np.ones((d, d)), -1) == 1
    for _ in range(200):
        params = _random_params(d, rng, scale=1.5)
        l, h = rand_point(d, rng), rand_point(d, rng)
        r = gate_r(l, h, params)
        c = candidate(l, r, h, params)
        assert np.all(c.diag > 0)
        assert np.all(np.abs(c.strict[mask]) < 1)


# ---------------------------------------------------------------------------
# output combination


def test_output_combine_endpoints_exact():
    rng = np.random.default_rng(4)
    d = 4
    h_prev, h_hat = rand_point(d, rng), rand_point(d, rng)
    zeros = SplitPair(strict=np.zeros((d, d)), diag=np.zeros(d))
    ones = SplitPair(strict=np.tril(np.ones((d, d)), -1), diag=np.ones(d))
    assert np.array_equal(output_combine(zeros, h_hat, h_prev).L, h_prev.L)
    assert np.array_equal(output_combine(ones, h_hat, h_prev).L, h_hat.L)


def test_output_combine_diagonal_between_interpolants():
    rng = np.random.default_rng(5)
    d = 4
    for _ in range(100):
        h_prev, h_hat = rand_point(d, rng), rand_point(d, rng)
        params = _random_params(d, rng)
        z = gate_z(h_hat, h_prev, params)
        out = output_combine(z, h_hat, h_prev)
        lo = np.minimum(h_prev.diag, h_hat.diag)
        hi = np.maximum(h_prev.diag, h_hat.diag)
        assert np.all(out.diag >= lo - 1e-12) and np.all(out.diag <= hi + 1e-12)
        assert np.all(out.diag > 0)


def test_state_remains_valid_over_many_steps():
    rng = np.random.default_rng(6)
    d = 4
    params = _random_params(d, rng, scale=2.0)
    h = CholeskyPoint.identity(d)
    for _ in range(1000):
        l = rand_point(d, rng)
        z = gate_z(l, h, params)
        r = gate_r(l, h, params)
        c = candidate(l, r, h, params)
        h = output_combine(z, c, h)
        assert np.all(np.isfinite(h.L))
        assert np.all(h.diag > 0)


# ---------------------------------------------------------------------------
# ODE evolution


def test_ode_zero_field_identity():
    rng = np.random.default_rng(7)
    h = rand_point(5, rng)
    out = ode_evolve(h, lambda x: np.zeros_like(x), 0.0, 1.0, 7)
    assert np.max(np.abs(out.L - h.L)) <= 1e-12 * max(1.0, np.max(np.abs(h.L)))


def test_ode_linear_field_exponential():
    rng = np.random.default_rng(8)
    h = rand_point(4, rng)
    out = ode_evolve(h, lambda x: -x, 0.0, 1.0, 10)
    expected = chart_log(h) * math.exp(-1.0)
    got = chart_log(out)
    assert rel_err(got, expected) <= 1e-6


def test_ode_order_four_convergence():
    rng = np.random.default_rng(9)
    h = rand_point(4, rng)
    exact = chart_log(h) * math.exp(-1.0)
    e10 = np.linalg.norm(chart_log(ode_evolve(h, lambda x: -x, 0.0, 1.0, 10)) - exact)
    e20 = np.linalg.norm(chart_log(ode_evolve(h, lambda x: -x, 0.0, 1.0, 20)) - exact)
    assert 12.0 <= e10 / e20 <= 20.0


def test_ode_divergent_field():
    rng = np.random.default_rng(10)
    h = rand_point(3, rng)
    with pytest.raises(OdeDiverged):
        ode_evolve(h, lambda x: np.full_like(x, np.nan), 0.0, 1.0, 2)


def test_ode_steps_validation():
    with pytest.raises(InvalidInput):
        ode_evolve(CholeskyPoint.identity(3), lambda x: x, 0.0, 1.0, 0)


# ---------------------------------------------------------------------------
# full model


def _tiny_config(**kws):
    base = dict(
        frontend_dims=(5, 4), eps=1e-4, ode_hidden=6, ode_steps=3,
        n_classes=3, learning_rate=0.1, epochs=3, seed=0,
    )
    base.update(kws)
    return GruModelConfig(**base)


def test_length_one_sequence_equals_single_cell_pass():
    rng = np.random.default_rng(11)
    cfg = _tiny_config()
    model = GruModel.init(cfg, rng)
    model.field.w_out = rng.standard_normal(model.field.w_out.shape) * 0.2
    E = rand_spd(5, rng)
    logits = gru_model_forward([E], model)

    # manual single-cell pass
    x = reeig_forward(model.frontend[0].T @ E @ model.frontend[0], cfg.eps)
    l = CholeskyPoint(cholesky_lower(x))
    h = ode_evolve(CholeskyPoint.identity(4), model.field, 0.0, 1.0, cfg.ode_steps)
    z = gate_z(l, h, model.cell)
    r = gate_r(l, h, model.cell)
    c = candidate(l, r, h, model.cell)
    h = output_combine(z, c, h)
    manual = classify_forward(chart_log(h), model.head_w, model.head_b)
    assert np.allclose(logits, manual, atol=1e-12)


def test_order_sensitivity():
    rng = np.random.default_rng(12)
    model = GruModel.init(_tiny_config(), rng)
    model.field.w_out = rng.standard_normal(model.field.w_out.shape) * 0.2
    E1, E2 = rand_spd(5, rng), rand_spd(5, rng)
    a = model.forward([E1, E2])
    b = model.forward([E2, E1])
    assert not np.allclose(a, b, atol=1e-8)


def test_identity_fixed_point_constant_logits():
    # parameters chosen so the candidate diagonal is exactly one at the
    # identity: the identity state is then a cell fixed point and logits
    # cannot depend on the sequence length
    rng = np.random.default_rng(13)
    cfg = _tiny_config()
    model = GruModel.init(cfg, rng)
    d = cfg.hidden_dim
    model.cell = GruParams.zeros(d)
    raw = math.log(math.expm1(math.log(math.e - 1.0)))
    model.cell.diag_scale_raw["h"] = np.full(d, raw)
    seqs = [[np.eye(5)] * n for n in (1, 2, 3, 5)]
    outs = [model.forward(s) for s in seqs]
    for out in outs[1:]:
        assert np.allclose(out, outs[0], atol=1e-12)


def test_cell_gradients_match_finite_differences():
    rng = np.random.default_rng(14)
    d = 4
    mask = np.tril(np.ones((d, d)), -1)
    params = _random_params(d, rng)
    A = rng.standard_normal((d, d)) * mask
    a = rng.standard_normal(d) * 0.5
    B = rng.standard_normal((d, d)) * mask
    b = rng.standard_normal(d) * 0.5
    CB = rng.standard_normal((d, d)) * mask
    cb = rng.standard_normal(d)

    def phi(p):
        Bn, bn, _ = _cell_fwd(A, a, B, b, p)
        return float(np.sum(CB * Bn) + np.sum(cb * bn))

    _, _, cache = _cell_fwd(A, a, B, b, params)
    grads = GruParams.zeros(d)
    _cell_bwd(CB, cb, cache, params, grads)
    h = 1e-5
    for field_name in ("strict_w", "strict_u", "strict_b",
                       "diag_w", "diag_u", "diag_scale_raw"):
        for g in GATES:
            X = getattr(params, field_name)[g]
            fd = np.zeros_like(X)
            it = np.nditer(X, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                if field_name.startswith("strict") and mask[idx] == 0:
                    continue
                p2 = copy.deepcopy(params)
                getattr(p2, field_name)[g][idx] += h
                p3 = copy.deepcopy(params)
                getattr(p3, field_name)[g][idx] -= h
                fd[idx] = (phi(p2) - phi(p3)) / (2 * h)
            G = getattr(grads, field_name)[g]
            if field_name.startswith("strict"):
                G = G * mask
            assert rel_err(fd, G) <= 1e-4, (field_name, g)


def test_default_parameter_count_order_1e5():
    rng = np.random.default_rng(15)
    model = GruModel.init(GruModelConfig(), rng)
    assert 1e5 <= model.parameter_count() < 2e5


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(16)
    model = GruModel.init(_tiny_config(), rng)
    model.field.w_out = rng.standard_normal(model.field.w_out.shape) * 0.2
    path = tmp_path / "model.spdg"
    model.save(path)
    loaded = GruModel.load(path)
    for a, b in zip(model.parameters(), loaded.parameters()):
        assert np.array_equal(a, b)
    seq = [rand_spd(5, rng) for _ in range(3)]
    assert np.allclose(model.forward(seq), loaded.forward(seq), atol=1e-15)


def test_training_on_synthetic_trajectories():
    rng = np.random.default_rng(100)
    train = trajectory_dataset(3, 10, 5, 6, rng)
    test = trajectory_dataset(3, 6, 5, 6, rng)
    cfg = GruModelConfig(frontend_dims=(6, 4), eps=1e-4, ode_hidden=8, ode_steps=2,
                         n_classes=3, learning_rate=0.2, epochs=35, seed=0)
    model, metrics = gru_train(cfg, train, test)
    assert max(m["val_accuracy"] for m in metrics) >= 0.9
    for W in model.frontend:
        assert np.max(np.abs(W.T @ W - np.eye(W.shape[1]))) <= 1e-6


def test_training_deterministic():
    rng = np.random.default_rng(101)
    train = trajectory_dataset(3, 4, 4, 5, rng)
    cfg = _tiny_config(epochs=3)
    _, m1 = gru_train(cfg, train, train)
    _, m2 = gru_train(cfg, train, train)
    assert m1 == m2


def test_model_end_to_end_gradients_match_finite_differences():
    rng = np.random.default_rng(30)
    cfg = _tiny_config()
    model = GruModel.init(cfg, rng)
    model.field.w_out = rng.standard_normal(model.field.w_out.shape) * 0.3
    model.field.b_out = rng.standard_normal(model.field.b_out.shape) * 0.2
    seq = [rand_spd(5, rng) for _ in range(3)]
    y = 2

    from spdemg.spdnet import softmax_cross_entropy

    def loss_of(m):
        return softmax_cross_entropy(m.forward(seq), y)[0]

    logits, cache = model.forward(seq, want_cache=True)
    _, grad_logits = softmax_cross_entropy(logits, y)
    grads = model.backward(cache, grad_logits)

    h = 1e-5

    def fd_of(get, set_):
        X = get(model)
        fd = np.zeros_like(X)
        it = np.nditer(X, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            m2 = copy.deepcopy(model)
            get(m2)[idx] += h
            m3 = copy.deepcopy(model)
            get(m3)[idx] -= h
            fd[idx] = (loss_of(m2) - loss_of(m3)) / (2 * h)
        return fd

    fd = fd_of(lambda m: m.frontend[0], None)
    assert rel_err(fd, grads["frontend"][0]) <= 1e-4
    fd = fd_of(lambda m: m.field.w_out, None)
    assert rel_err(fd, grads["field"][2]) <= 1e-4
    fd = fd_of(lambda m: m.head_w, None)
    assert rel_err(fd, grads["head_w"]) <= 1e-4
    mask = np.tril(np.ones((4, 4)), -1)
    fd = fd_of(lambda m: m.cell.strict_u["h"], None)
    assert rel_err(fd * mask, grads["cell"].strict_u["h"] * mask) <= 1e-4
    fd = fd_of(lambda m: m.cell.diag_scale_raw["z"], None)
    assert rel_err(fd, grads["cell"].diag_scale_raw["z"]) <= 1e-4
