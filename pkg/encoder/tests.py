import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from serialization.domain import CLS_ID, TokenSequence

from .domain import EncoderConfig, Variant
from .services import backward, encode, encode_batch, init_params

FD_EPS = 1e-4
# Por debajo de este piso un gradiente se compara en términos absolutos
GRAD_FLOOR = 1e-6


def tiny_config(variant, seed=0, **overrides):
    options = dict(
        variant=variant, vocab_size=263, max_len=8, hidden=8, out_dim=4, heads=2,
        seed=seed, dtype="float64", init_std=0.3,
    )
    options.update(overrides)
    return EncoderConfig(**options)


def random_sequence(rng, config, length):
    body = rng.integers(0, config.vocab_size, size=length - 1)
    return TokenSequence((CLS_ID, *body.tolist()))


def max_relative_errors(params, config, seq, grad_out):
    """
    Error relativo por tensor entre el gradiente analítico y diferencias centrales.

    Devuelve también los pares (analítico, numérico) para chequeos absolutos.
    """
    analytic = backward(params, config, seq, grad_out)
    used_rows = sorted(set(seq.ids)) + [next(i for i in range(config.vocab_size) if i not in seq.ids)]
    errors, grads = {}, {}
    for name, tensor in params.items():
        if name == "token_emb":
            indices = [(r, c) for r in used_rows for c in range(tensor.shape[1])]
        else:
            indices = list(np.ndindex(tensor.shape))
        numeric = np.zeros(len(indices))
        exact = np.array([analytic[name][idx] for idx in indices])
        for n, idx in enumerate(indices):
            old = tensor[idx]
            tensor[idx] = old + FD_EPS
            plus = float(grad_out @ encode(params, config, seq))
            tensor[idx] = old - FD_EPS
            minus = float(grad_out @ encode(params, config, seq))
            tensor[idx] = old
            numeric[n] = (plus - minus) / (2 * FD_EPS)
        scale = max(np.abs(exact).max(), np.abs(numeric).max(), GRAD_FLOOR)
        errors[name] = float(np.abs(exact - numeric).max() / scale)
        grads[name] = (exact, numeric)
    return errors, grads


class InitParamsTests(SimpleTestCase):
    def test_same_seed_bit_identical(self):
        config = EncoderConfig(variant=Variant.ATTENTIVE, vocab_size=263, hidden=16, out_dim=8, heads=4)
        a, b = init_params(config), init_params(config)
        for name, tensor in a.items():
            self.assertEqual(tensor.tobytes(), b[name].tobytes())

    def test_different_seeds_differ(self):
        a = init_params(tiny_config(Variant.POOLER, seed=1))
        b = init_params(tiny_config(Variant.POOLER, seed=2))
        self.assertFalse(np.array_equal(a["token_emb"], b["token_emb"]))

    def test_layer_norm_gains_and_biases(self):
        params = init_params(tiny_config(Variant.ATTENTIVE))
        np.testing.assert_array_equal(params["ln1_g"], np.ones(8))
        np.testing.assert_array_equal(params["ln2_g"], np.ones(8))
        for name in ("ln1_b", "b_q", "b_o", "ffn_b1", "proj_b"):
            self.assertFalse(params[name].any())

    def test_default_std(self):
        config = EncoderConfig(variant=Variant.POOLER, vocab_size=300, hidden=64, out_dim=32, dtype="float64")
        std = init_params(config)["token_emb"].std()
        self.assertAlmostEqual(std, 0.02, delta=0.002)

    def test_invalid_config(self):
        with self.assertRaises(ValidationError):
            EncoderConfig(hidden=10, heads=4)
        with self.assertRaises(ValidationError):
            EncoderConfig(vocab_size=100)


class EncodeTests(SimpleTestCase):
    def test_pooler_zero_embeddings_output_bias(self):
        config = tiny_config(Variant.POOLER)
        params = init_params(config)
        params["token_emb"][:] = 0.0
        params["proj_b"][:] = [1.0, -2.0, 0.5, 3.0]
        out = encode(params, config, TokenSequence((CLS_ID, 65, 66)))
        np.testing.assert_array_equal(out, params["proj_b"])

    def test_pooler_single_token_identity_projection(self):
        config = tiny_config(Variant.POOLER, out_dim=8)
        params = init_params(config)
        params["proj_w"][:] = np.eye(8)
        out = encode(params, config, TokenSequence((CLS_ID,)))
        np.testing.assert_allclose(out, params["token_emb"][CLS_ID])

    def test_attentive_output_finite_with_shape_k(self):
        config = EncoderConfig(variant=Variant.ATTENTIVE, vocab_size=275, seed=0)
        params = init_params(config)
        rng = np.random.default_rng(0)
        for length in (1, 2, 17, 128):
            out = encode(params, config, random_sequence(rng, config, length))
            self.assertEqual(out.shape, (32,))
            self.assertTrue(np.isfinite(out).all())

    def test_pooler_is_order_invariant_attentive_is_not(self):
        seq = TokenSequence((CLS_ID, 65, 66, 67, 68))
        permuted = TokenSequence((CLS_ID, 68, 66, 65, 67))
        pooler = tiny_config(Variant.POOLER)
        p = init_params(pooler)
        np.testing.assert_allclose(encode(p, pooler, seq), encode(p, pooler, permuted), rtol=1e-12)
        attentive = tiny_config(Variant.ATTENTIVE)
        a = init_params(attentive)
        self.assertFalse(np.allclose(encode(a, attentive, seq), encode(a, attentive, permuted)))

    def test_encode_is_deterministic(self):
        config = tiny_config(Variant.ATTENTIVE)
        params = init_params(config)
        seq = TokenSequence((CLS_ID, 1, 2, 3))
        self.assertEqual(encode(params, config, seq).tobytes(), encode(params, config, seq).tobytes())

    def test_token_out_of_range(self):
        config = tiny_config(Variant.POOLER)
        with self.assertRaises(ValidationError) as ctx:
            encode(init_params(config), config, TokenSequence((CLS_ID, 263)))
        self.assertEqual(ctx.exception.code, "token_out_of_range")

    def test_sequence_too_long(self):
        config = tiny_config(Variant.ATTENTIVE)
        with self.assertRaises(ValidationError) as ctx:
            encode(init_params(config), config, TokenSequence((CLS_ID,) + (65,) * 8))
        self.assertEqual(ctx.exception.code, "sequence_too_long")


class EncodeBatchTests(SimpleTestCase):
    def setUp(self):
        self.config = tiny_config(Variant.ATTENTIVE)
        self.params = init_params(self.config)
        rng = np.random.default_rng(3)
        self.seqs = [random_sequence(rng, self.config, n) for n in (2, 5, 8)]

    def test_batch_of_one(self):
        [out] = encode_batch(self.params, self.config, self.seqs[:1])
        self.assertEqual(out.tobytes(), encode(self.params, self.config, self.seqs[0]).tobytes())

    def test_batch_equals_single_calls(self):
        batch = encode_batch(self.params, self.config, self.seqs)
        for seq, vec in zip(self.seqs, batch):
            self.assertEqual(vec.tobytes(), encode(self.params, self.config, seq).tobytes())

    def test_empty_batch(self):
        self.assertEqual(encode_batch(self.params, self.config, []), [])


class BackwardTests(SimpleTestCase):
    def test_zero_grad_out_gives_zero_gradients(self):
        config = tiny_config(Variant.POOLER)
        params = init_params(config)
        grads = backward(params, config, TokenSequence((CLS_ID, 70, 71)), np.zeros(4))
        for _, g in grads.items():
            self.assertFalse(g.any())

    def test_pooler_token_rows(self):
        config = tiny_config(Variant.POOLER)
        params = init_params(config)
        seq = TokenSequence((CLS_ID, 70, 71))
        grad_out = np.array([0.5, -1.0, 2.0, 0.25])
        grads = backward(params, config, seq, grad_out)
        expected_row = params["proj_w"] @ grad_out / 3
        for row in range(config.vocab_size):
            if row in seq.ids:
                np.testing.assert_allclose(grads["token_emb"][row], expected_row, rtol=1e-12)
            else:
                self.assertFalse(grads["token_emb"][row].any())

    def test_accumulates_into_buffer(self):
        config = tiny_config(Variant.ATTENTIVE)
        params = init_params(config)
        seq = TokenSequence((CLS_ID, 80, 81))
        g = np.ones(4)
        once = backward(params, config, seq, g)
        buffer = backward(params, config, seq, g)
        backward(params, config, seq, g, out=buffer)
        np.testing.assert_allclose(buffer["w_q"], 2 * once["w_q"])

    def test_nonfinite_grad_out(self):
        config = tiny_config(Variant.POOLER)
        with self.assertRaises(ValidationError):
            backward(init_params(config), config, TokenSequence((CLS_ID,)), np.array([np.nan, 0, 0, 0]))


class GradientCheckTests(SimpleTestCase):
    """Gradiente analítico vs diferencias centrales (ε=1e-4, float64)."""

    def check_variant(self, variant):
        for seed in range(5):
            config = tiny_config(variant, seed=seed)
            params = init_params(config)
            rng = np.random.default_rng(100 + seed)
            for _ in range(5):
                seq = random_sequence(rng, config, int(rng.integers(2, config.max_len + 1)))
                grad_out = rng.normal(size=config.out_dim)
                errors, _ = max_relative_errors(params, config, seq, grad_out)
                worst = max(errors, key=errors.get)
                self.assertLess(errors[worst], 1e-4, f"{variant} seed={seed} tensor={worst}")

    def test_pooler(self):
        self.check_variant(Variant.POOLER)

    def test_attentive(self):
        self.check_variant(Variant.ATTENTIVE)

    def test_key_bias_gradient_is_zero(self):
        # Softmax es invariante a sumar la misma constante a todos los logits de una fila
        config = tiny_config(Variant.ATTENTIVE, seed=3)
        params = init_params(config)
        rng = np.random.default_rng(7)
        for _ in range(3):
            seq = random_sequence(rng, config, config.max_len)
            _, grads = max_relative_errors(params, config, seq, rng.normal(size=config.out_dim))
            exact, numeric = grads["b_k"]
            self.assertLess(np.abs(exact).max(), 1e-8)
            self.assertLess(np.abs(numeric).max(), 1e-8)
