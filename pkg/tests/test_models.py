import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mimovq.autodiff import Tape, Tensor, add, backward, mean, square, sub
from mimovq.autodiff.gradcheck import numerical_grad
from mimovq.errors import ConfigError, FormatError, ShapeError
from mimovq.models import (
    ArchitectureSpec, LayerSpec, build_model, decode, encode, forward, load_model,
    nearest_codewords, param_count, reparameterize, save_model, to_positions, vq_quantize,
)


def linear_scan(z, book):
    """Brute-force nearest codeword: exact squared distances, first minimum wins."""
    out = []
    for row in z:
        best, best_i = math.inf, -1
        for i, e in enumerate(book):
            d = math.fsum((row - e) ** 2)
            if d < best:
                best, best_i = d, i
        out.append(best_i)
    return np.array(out)


def tiny_arch():
    return ArchitectureSpec(in_channels=2, height=8, width=4,
                            encoder=(LayerSpec(3, 3, 2, 1), LayerSpec(4, 1, 1, 0)),
                            decoder=(LayerSpec(3, 1, 1, 0), LayerSpec(2, 4, 2, 1)),
                            codebook_size=6)


def zero_params(model):
    for p in model.params.values():
        if p.name != "codebook":
            p.data[...] = 0.0
    return model


@pytest.fixture(scope="module")
def x():
    return Tensor(np.random.default_rng(0).normal(size=(2, 4, 64, 16)))


def test_default_geometry(x):
    arch = ArchitectureSpec()
    assert arch.latent_shape() == (64, 16, 4) and arch.latent_dim == 64
    m = build_model("AE", arch, seed=1)
    z = encode(m, x)
    assert z.shape == (2, 64, 16, 4)
    assert decode(m, z).shape == (2, 4, 64, 16)
    single = encode(m, Tensor(x.data[0]))
    assert single.shape == (64, 16, 4)


def test_zero_params_propagate_zero(x):
    m = zero_params(build_model("AE", seed=1))
    assert np.array_equal(encode(m, x).data, np.zeros((2, 64, 16, 4)))
    assert np.array_equal(decode(m, Tensor(np.ones((1, 64, 16, 4)))).data, np.zeros((1, 4, 64, 16)))


def test_encode_is_pure(x):
    m = build_model("VQVAE", seed=2)
    assert encode(m, x).data.tobytes() == encode(m, x).data.tobytes()


def test_shape_mismatch_rejected():
    m = build_model("AE", seed=0)
    with pytest.raises(ShapeError):
        encode(m, Tensor(np.zeros((4, 32, 16))))
    with pytest.raises(ShapeError):
        decode(m, Tensor(np.zeros((64, 8, 4))))


def test_unknown_kind():
    with pytest.raises(ConfigError):
        build_model("GAN")


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([1, 2, 3, 5]), st.sampled_from([1, 2]),
                          st.integers(0, 2)), min_size=1, max_size=3),
       st.sampled_from([(16, 8), (12, 6), (9, 7)]))
def test_decoder_inverts_encoder_geometry(layers, hw):
    """Any encoder stack gets a decoder mirror; decode(encode(x)) restores the input grid."""
    h, w = hw
    enc, sizes = [], [(h, w)]
    for i, (k, s, p) in enumerate(layers):
        ch, cw = sizes[-1]
        if k > ch + 2 * p or k > cw + 2 * p:
            return
        enc.append(LayerSpec(3 + i, k, s, p))
        sizes.append(((ch + 2 * p - k) // s + 1, (cw + 2 * p - k) // s + 1))
    dec = []
    for i in reversed(range(len(enc))):
        (ih, iw), (oh, ow) = sizes[i], sizes[i + 1]
        k, s, p = enc[i].kernel, enc[i].stride, enc[i].padding
        kh = ih - (oh - 1) * s + 2 * p
        if kh != iw - (ow - 1) * s + 2 * p:
            return  # square kernels only
        dec.append(LayerSpec(2 if i == 0 else enc[i - 1].out_channels, kh, s, p))
    arch = ArchitectureSpec(in_channels=2, height=h, width=w, encoder=tuple(enc), decoder=tuple(dec), codebook_size=4)
    arch.validate()
    for kind in ("AE", "VAE", "VQVAE"):
        m = build_model(kind, arch, seed=0)
        out, _ = forward(m, Tensor(np.ones((2, h, w))), "eval")
        assert out.shape == (2, h, w)


# -- VAE sampling -----------------------------------------------------------------

def test_reparameterize_zero_noise():
    mu = Tensor(np.random.default_rng(1).normal(size=(3, 2, 2)))
    z = reparameterize(mu, Tensor(np.ones((3, 2, 2))), eps=np.zeros((3, 2, 2)))
    assert np.array_equal(z.data, mu.data)


def test_reparameterize_moments():
    z = reparameterize(Tensor(np.zeros(10**5)), Tensor(np.zeros(10**5)), eps_seed=3)
    assert abs(z.data.mean()) < 0.02 and abs(z.data.var() - 1.0) < 0.02


def test_reparameterize_gradients():
    rng = np.random.default_rng(2)
    mu, logvar, eps = Tensor(rng.normal(size=5)), Tensor(rng.normal(size=5)), rng.normal(size=5)
    w = Tensor(rng.normal(size=5))
    from mimovq.autodiff import mul, sum as tsum
    fn = lambda m, l: tsum(mul(reparameterize(m, l, eps=eps), w))
    with Tape() as tape:
        for t in (mu, logvar):
            t.requires_grad = True
        loss = fn(mu, logvar)
    backward(loss, tape)
    num_mu, num_lv = numerical_grad(fn, [mu, logvar])
    assert np.allclose(mu.grad, w.data, rtol=0, atol=1e-15)  # dz/dmu == 1
    assert np.allclose(mu.grad, num_mu, rtol=1e-6)
    assert np.allclose(logvar.grad, num_lv, rtol=1e-6)


# -- quantizer ----------------------------------------------------------------------

def test_quantize_small_examples():
    book = np.array([[0.0, 0.0], [1.0, 1.0]])
    zq, idx = vq_quantize(Tensor(np.array([0.2, 0.1]).reshape(2, 1, 1)), book)
    assert idx.tolist() == [[0]] and np.array_equal(zq.data.ravel(), [0.0, 0.0])
    zq, idx = vq_quantize(Tensor(np.array([1.0, 1.0]).reshape(2, 1, 1)), book)
    assert idx.tolist() == [[1]] and np.array_equal(zq.data.ravel(), [1.0, 1.0])


def test_quantize_ties_go_to_lowest_index():
    book = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    assert nearest_codewords(np.array([[0.0, 0.0]]), book).tolist() == [0]
    assert nearest_codewords(np.array([[0.0, 0.0]]), book[::-1].copy()).tolist() == [0]


def test_quantize_matches_linear_scan():
    rng = np.random.default_rng(5)
    book = rng.normal(size=(512, 64))
    z = rng.normal(size=(64, 64))
    assert np.array_equal(nearest_codewords(z, book), linear_scan(z, book))


def test_quantize_empty_codebook():
    with pytest.raises(ConfigError):
        nearest_codewords(np.zeros((2, 3)), np.zeros((0, 3)))


def test_quantize_copies_rows_exactly():
    rng = np.random.default_rng(6)
    book = rng.normal(size=(16, 4))
    zq, idx = vq_quantize(Tensor(rng.normal(size=(2, 4, 3, 2))), book)
    rows = to_positions(zq).data
    assert rows.tobytes() == book[idx.ravel()].tobytes()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 20), st.integers(1, 6))
def test_quantizer_idempotent_and_contracting(seed, k, d):
    rng = np.random.default_rng(seed)
    book = rng.normal(size=(k, d))
    z = Tensor(rng.normal(size=(d, 3, 2)))
    zq, idx = vq_quantize(z, book)
    zq2, idx2 = vq_quantize(zq, book)
    assert np.array_equal(idx, idx2) and np.array_equal(zq.data, zq2.data)
    rows, qrows = to_positions(z).data, to_positions(zq).data
    for r, q in zip(rows, qrows):
        assert np.sum((r - q) ** 2) <= np.min(np.sum((r - book) ** 2, axis=1))


# -- straight-through through the whole model ------------------------------------

def test_straight_through_matches_surrogate_finite_difference():
    arch = tiny_arch()
    m = build_model("VQVAE", arch, seed=4)
    rng = np.random.default_rng(7)
    x, target = Tensor(rng.normal(size=(2, 2, 8, 4))), Tensor(rng.normal(size=(2, 2, 8, 4)))
    # Spread the codebook over the latent range so several codewords are used.
    m.params["codebook"].data[...] = rng.normal(size=(6, 4))
    with Tape() as tape:
        pred, aux = forward(m, x, "train")
        loss = mean(square(sub(pred, target)))
    backward(loss, tape)
    w = m.params["enc.0.weight"]
    assert np.any(w.grad != 0)

    z0 = encode(m, x).data.copy()
    zq0 = vq_quantize(Tensor(z0), m.codebook)[0].data

    def surrogate(weight):
        z = encode(m, x)
        shifted = add(sub(z, Tensor(z0)), Tensor(zq0))
        return mean(square(sub(decode(m, shifted), target)))

    grad = w.grad.copy()
    num = numerical_grad(surrogate, [w])[0]
    assert np.allclose(grad, num, rtol=1e-5, atol=1e-9)


# -- forward contract ------------------------------------------------------------------

def test_ae_forward_is_composition(x):
    m = build_model("AE", seed=3)
    out, _ = forward(m, x, "eval")
    assert out.data.tobytes() == decode(m, encode(m, x)).data.tobytes()


def test_vae_eval_is_deterministic_and_uses_mean(x):
    m = build_model("VAE", seed=3)
    a, aux = forward(m, x, "eval")
    b, _ = forward(m, x, "eval")
    assert a.data.tobytes() == b.data.tobytes()
    assert a.data.tobytes() == decode(m, aux["mu"]).data.tobytes()
    t1, _ = forward(m, x, "train", eps_seed=1)
    assert not np.array_equal(t1.data, a.data)


def test_vqvae_on_codewords_decodes_unchanged(x):
    m = build_model("VQVAE", seed=3)
    sub_x = Tensor(x.data[:1])
    z1 = encode(m, sub_x)
    m.params["codebook"].data[:64] = to_positions(z1).data
    out, _ = forward(m, sub_x, "eval")
    assert out.data.tobytes() == decode(m, z1).data.tobytes()


# -- parameter accounting and checkpoints -------------------------------------------

def test_param_counts():
    ae, vae, vq = (build_model(k, seed=0) for k in ("AE", "VAE", "VQVAE"))
    one_by_one = ae.params["enc.2.weight"].size + ae.params["enc.2.bias"].size
    assert one_by_one == 4160  # 64 -> 64 with bias
    assert param_count(vq) == param_count(ae) + 512 * 64
    assert param_count(vae) == param_count(ae) + 2 * 4160


def test_codebook_rows_distinct():
    book = build_model("VQVAE", seed=9).codebook.data
    assert len(np.unique(book, axis=0)) == 512
    assert np.all(np.abs(book) <= 1 / 512)


@pytest.mark.parametrize("kind", ["AE", "VAE", "VQVAE"])
def test_checkpoint_round_trip(tmp_path, kind, x):
    m = build_model(kind, seed=11)
    path = tmp_path / f"{kind}.mmdl"
    save_model(m, path)
    back = load_model(path)
    assert back.kind == kind and back.arch == m.arch
    assert param_count(back) == param_count(m)
    for name in m.params:
        assert back.params[name].data.tobytes() == m.params[name].data.tobytes()
    assert forward(back, x, "eval")[0].data.tobytes() == forward(m, x, "eval")[0].data.tobytes()


def test_checkpoint_errors(tmp_path):
    path = tmp_path / "m.mmdl"
    save_model(build_model("AE", seed=0), path)
    with pytest.raises(FormatError, match="kind"):
        load_model(path, expected_kind="VQVAE")
    raw = path.read_bytes()
    (tmp_path / "bad").write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(FormatError, match="magic"):
        load_model(tmp_path / "bad")
    (tmp_path / "cut").write_bytes(raw[:-100])
    with pytest.raises(FormatError, match="truncated"):
        load_model(tmp_path / "cut")
