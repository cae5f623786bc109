import math

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from .services import (
    ScoreMatrix, SimKind, embedding_grads, inbatch_loss, loss_grad, score_matrix,
    similarity, softmax_rows,
)


class SimilarityTests(SimpleTestCase):
    def test_ips(self):
        self.assertEqual(similarity(SimKind.IPS, [1, 2], [3, 4]), 11.0)

    def test_nsd(self):
        self.assertEqual(similarity(SimKind.NSD, [0, 0], [3, 4]), -25.0)
        self.assertEqual(similarity("nsd", [1.5, -2.0, 7.0], [1.5, -2.0, 7.0]), 0.0)

    def test_dimension_mismatch(self):
        with self.assertRaises(ValidationError) as ctx:
            similarity(SimKind.IPS, [1, 2], [1, 2, 3])
        self.assertEqual(ctx.exception.code, "dimension_mismatch")


class ScoreMatrixTests(SimpleTestCase):
    def test_orthonormal_ips_identity(self):
        eye = np.eye(2)
        np.testing.assert_array_equal(score_matrix(SimKind.IPS, eye, eye).values, eye)

    def test_nsd_zero_diagonal(self):
        v = np.array([[1.0, 2.0], [-1.0, 0.5]])
        m = score_matrix(SimKind.NSD, v, v).values
        np.testing.assert_array_equal(np.diagonal(m), [0.0, 0.0])
        self.assertLess(m[0, 1], 0)
        self.assertLess(m[1, 0], 0)

    def test_matches_pairwise_similarity(self):
        rng = np.random.default_rng(0)
        Q, E = rng.normal(size=(6, 5)), rng.normal(size=(6, 5))
        for kind in SimKind:
            m = score_matrix(kind, Q, E).values
            for i in range(6):
                for j in range(6):
                    self.assertAlmostEqual(m[i, j], similarity(kind, Q[i], E[j]), places=10)

    def test_batch_of_one_rejected(self):
        with self.assertRaises(ValidationError) as ctx:
            score_matrix(SimKind.IPS, [[1.0]], [[1.0]])
        self.assertEqual(ctx.exception.code, "batch_too_small")

    def test_nonfinite_rejected(self):
        with self.assertRaises(ValidationError):
            ScoreMatrix(SimKind.IPS, np.array([[np.inf, 0.0], [0.0, 1.0]]))


class InbatchLossTests(SimpleTestCase):
    def test_uniform_scores(self):
        self.assertAlmostEqual(inbatch_loss(np.zeros((2, 2))), math.log(2), places=12)

    def test_identity_scores(self):
        self.assertAlmostEqual(inbatch_loss(np.eye(2)), 0.313262, places=6)

    def test_diagonal_dominant_limit(self):
        scores = np.array([[500.0, 0.0], [0.0, 500.0]])
        self.assertAlmostEqual(inbatch_loss(scores), 0.0, places=12)

    def test_large_ips_scores_stay_finite(self):
        scores = np.array([[1e4, 9e3], [2e4, 1e4]])
        self.assertTrue(math.isfinite(inbatch_loss(scores)))

    def test_nsd_equal_embeddings_is_log_b(self):
        v = np.ones((5, 3))
        self.assertAlmostEqual(inbatch_loss(score_matrix(SimKind.NSD, v, v)), math.log(5), places=12)

    def test_row_shift_invariance(self):
        rng = np.random.default_rng(1)
        scores = rng.normal(size=(4, 4))
        shifted = scores.copy()
        shifted[2] += 37.5
        self.assertAlmostEqual(inbatch_loss(scores), inbatch_loss(shifted), delta=1e-9)

    def test_nonnegative(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            self.assertGreaterEqual(inbatch_loss(rng.normal(scale=5, size=(3, 3))), 0.0)

    def test_weights(self):
        scores = np.array([[1.0, 0.0], [0.0, 0.0]])
        expected = (3 * math.log(1 + math.exp(-1)) + math.log(2)) / 4
        self.assertAlmostEqual(inbatch_loss(scores, [3.0, 1.0]), expected, places=12)

    def test_nonpositive_weights_rejected(self):
        with self.assertRaises(ValidationError) as ctx:
            inbatch_loss(np.eye(2), [1.0, 0.0])
        self.assertEqual(ctx.exception.code, "weights")

    def test_nonfinite_scores_rejected(self):
        with self.assertRaises(ValidationError) as ctx:
            inbatch_loss(np.array([[np.nan, 0.0], [0.0, 0.0]]))
        self.assertEqual(ctx.exception.code, "nonfinite")


class LossGradTests(SimpleTestCase):
    def test_uniform_scores(self):
        np.testing.assert_allclose(loss_grad(np.zeros((2, 2))), [[-0.25, 0.25], [0.25, -0.25]])

    def test_rows_sum_to_zero(self):
        rng = np.random.default_rng(3)
        g = loss_grad(rng.normal(size=(6, 6)), rng.uniform(0.5, 2.0, size=6))
        np.testing.assert_allclose(g.sum(axis=1), 0.0, atol=1e-12)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(4)
        np.testing.assert_allclose(softmax_rows(rng.normal(scale=30, size=(5, 5))).sum(axis=1), 1.0, atol=1e-9)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        scores = rng.normal(size=(4, 4))
        weights = rng.uniform(0.5, 2.0, size=4)
        analytic = loss_grad(scores, weights)
        eps = 1e-6
        for i in range(4):
            for j in range(4):
                plus, minus = scores.copy(), scores.copy()
                plus[i, j] += eps
                minus[i, j] -= eps
                numeric = (inbatch_loss(plus, weights) - inbatch_loss(minus, weights)) / (2 * eps)
                self.assertAlmostEqual(analytic[i, j], numeric, delta=1e-6)


class EmbeddingGradsTests(SimpleTestCase):
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        Q, E = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
        eps = 1e-6
        for kind in SimKind:
            G = loss_grad(score_matrix(kind, Q, E))
            dQ, dE = embedding_grads(kind, Q, E, G)
            for target, analytic in ((Q, dQ), (E, dE)):
                for idx in np.ndindex(target.shape):
                    old = target[idx]
                    target[idx] = old + eps
                    plus = inbatch_loss(score_matrix(kind, Q, E))
                    target[idx] = old - eps
                    minus = inbatch_loss(score_matrix(kind, Q, E))
                    target[idx] = old
                    self.assertAlmostEqual(analytic[idx], (plus - minus) / (2 * eps), delta=1e-6)
