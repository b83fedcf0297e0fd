import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mimovq.autodiff import Tape, Tensor, backward
from mimovq.errors import ContractError, DegenerateInputError, ShapeError
from mimovq.losses import (
    kl_gaussian, loss_ae, loss_vae, loss_vqvae, mse, nmse, nmse_db, vq_terms,
)
from mimovq.models import build_model, encode, forward, to_positions


def two_pass_mse(x, y):
    total = 0.0
    for a, b in zip(x.ravel(), y.ravel()):
        total += (a - b) ** 2
    return total / x.size


def test_mse_examples():
    x = Tensor(np.random.default_rng(0).normal(size=(3, 4)))
    assert mse(x, x).item() == 0.0
    assert mse(Tensor([0.0, 0.0]), Tensor([1.0, 1.0])).item() == 1.0
    with pytest.raises(ShapeError):
        mse(Tensor([0.0]), Tensor([0.0, 1.0]))


def test_mse_matches_accumulation_oracle():
    rng = np.random.default_rng(1)
    for _ in range(5):
        a, b = rng.normal(size=(4, 5, 6)), rng.normal(size=(4, 5, 6))
        assert abs(mse(Tensor(a), Tensor(b)).item() - two_pass_mse(a, b)) < 1e-12


def test_nmse_examples():
    rng = np.random.default_rng(2)
    x = rng.normal(size=500)
    assert nmse(x, x) == 0.0 and nmse_db(x, x) == -100.0
    assert nmse(x, np.full_like(x, x.mean())) == pytest.approx(1.0, abs=1e-12)
    assert nmse_db(x, np.full_like(x, x.mean())) == pytest.approx(0.0, abs=1e-10)
    y = x + rng.normal(size=500) * 0.3
    assert abs(nmse(3.7 * x, 3.7 * y) - nmse(x, y)) < 1e-12
    with pytest.raises(DegenerateInputError):
        nmse(np.ones(4), np.zeros(4))


def test_kl_closed_forms():
    z = np.zeros((2, 3))
    assert kl_gaussian(Tensor(z), Tensor(z)).item() == 0.0
    assert abs(kl_gaussian(Tensor(np.ones((2, 3))), Tensor(z)).item() - 0.5 * 6) < 1e-10
    per_element = 0.5 * (4.0 - math.log(4.0) - 1.0)
    assert per_element == pytest.approx(0.806852, abs=1e-6)
    got = kl_gaussian(Tensor(z), Tensor(np.full((2, 3), math.log(4.0)))).item()
    assert abs(got - 6 * per_element) < 1e-10


def test_kl_averages_over_batch():
    mu = np.ones((4, 2, 3, 1))
    assert abs(kl_gaussian(Tensor(mu), Tensor(np.zeros_like(mu))).item() - 0.5 * 6) < 1e-12


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, (5,), elements=st.floats(-30, 30)),
       arrays(np.float64, (5,), elements=st.floats(-30, 30)))
def test_kl_non_negative(mu, logvar):
    assert kl_gaussian(Tensor(mu), Tensor(logvar)).item() >= 0.0


def test_vq_terms_hand_example():
    ze = Tensor([[0.2, 0.1]])
    zq = Tensor([[0.0, 0.0]])
    vq, commit = vq_terms(ze, zq, beta=0.25)
    assert abs(vq.item() - 0.05) < 1e-10
    assert abs(commit.item() - 0.0125) < 1e-10
    assert abs(vq.item() + commit.item() - 0.0625) < 1e-10


@pytest.fixture(scope="module")
def batch():
    rng = np.random.default_rng(3)
    return Tensor(rng.normal(size=(2, 4, 64, 16))), Tensor(rng.normal(size=(2, 4, 64, 16)))


def test_vqvae_loss_on_codewords_is_mse(batch):
    x, target = batch
    m = build_model("VQVAE", seed=2)
    rows = to_positions(encode(m, Tensor(x.data[:1]))).data
    m.params["codebook"].data[:64] = rows
    pred, aux = forward(m, Tensor(x.data[:1]), "train")
    parts = loss_vqvae(Tensor(target.data[:1]), pred, aux, beta=0.25)
    assert parts.vq == 0.0 and parts.commit == 0.0
    assert parts.total == parts.mse


def test_loss_decomposition(batch):
    x, target = batch
    for kind, fn, kw in [("AE", loss_ae, {}), ("VAE", loss_vae, {"kl_weight": 2.5e-5}),
                         ("VQVAE", loss_vqvae, {"beta": 0.25})]:
        m = build_model(kind, seed=4)
        pred, aux = forward(m, x, "train", eps_seed=1)
        p = fn(target, pred, aux, **kw)
        combined = p.mse + 2.5e-5 * p.kl if kind == "VAE" else p.mse + p.vq + p.commit
        assert abs(p.total - combined) < 1e-12
        assert min(p.mse, p.kl, p.vq, p.commit) >= 0.0


def test_missing_aux_is_contract_error(batch):
    x, target = batch
    with pytest.raises(ContractError):
        loss_vae(target, target, {}, 1.0)
    with pytest.raises(ContractError):
        loss_vqvae(target, target, {"z_e_rows": x}, 0.25)


def _grads_of(term_name, model, x):
    pred, aux = forward(model, x, "train")
    for p in model.params.values():
        p.grad = None
    with Tape() as tape:
        pred, aux = forward(model, x, "train")
        vq, commit = vq_terms(aux["z_e_rows"], aux["z_q_rows"], 0.25)
    backward(vq if term_name == "vq" else commit, tape)
    return {k: (p.grad.copy() if p.grad is not None else None) for k, p in model.params.items()}


def test_stop_gradient_audit(batch):
    x, _ = batch
    m = build_model("VQVAE", seed=5)
    g = _grads_of("vq", m, x)
    for name, grad in g.items():
        if name.startswith("enc."):
            assert grad is None or np.all(grad == 0.0), name
    assert np.any(g["codebook"] != 0.0)
    m.zero_grad()
    g = _grads_of("commit", m, x)
    assert g["codebook"] is None or np.all(g["codebook"] == 0.0)
    assert any(np.any(g[n] != 0.0) for n in g if n.startswith("enc.") and g[n] is not None)
