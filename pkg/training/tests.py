import struct
import tempfile
import zlib
from dataclasses import replace
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from encoder.domain import EncoderConfig, Variant
from encoder.services import encode
from records.domain import Association, Record, Schema, Side
from serialization.domain import CLS_ID, TokenSequence
from serialization.services import serialize

from .checkpoints import dumps_checkpoint, load_checkpoint, loads_checkpoint, save_checkpoint
from .domain import TrainConfig, Weighting, new_rng
from .services import new_checkpoint, sample_batch, train, train_step

QUERY_SCHEMA = Schema.of(Side.QUERY, ["name", "phone"])
ENTRY_SCHEMA = Schema.of(Side.ENTRY, ["name", "phone", "street"])

NAMES = ["alpha grill", "bravo bakery", "charlie cafe", "delta diner"]
PHONES = ["0311112222", "0455556666", "0677778888", "0899990000"]


def toy_data():
    queries = [Record(f"q{i}", {"name": n, "phone": None}) for i, n in enumerate(NAMES)]
    entries = [
        Record(f"e{i}", {"name": n, "phone": p, "street": None})
        for i, (n, p) in enumerate(zip(NAMES, PHONES))
    ]
    associations = [Association(f"q{i}", f"e{i}") for i in range(len(NAMES))]
    return queries, entries, associations


def tiny_config(**overrides):
    options = dict(
        batch_size=4, steps=5, lr=1e-2, seed=0, log_every=1,
        encoder=EncoderConfig(variant=Variant.POOLER, hidden=16, out_dim=8, heads=2, max_len=32, dtype="float64"),
    )
    options.update(overrides)
    return TrainConfig(**options)


def run(config, resume=None):
    queries, entries, associations = toy_data()
    losses = []
    ckpt = train(
        config, queries, entries, associations,
        query_schema=QUERY_SCHEMA, entry_schema=ENTRY_SCHEMA,
        resume=resume, on_step=lambda step, loss: losses.append(loss),
    )
    return ckpt, losses


class TrainConfigTests(SimpleTestCase):
    def test_invalid_values(self):
        for bad in (dict(batch_size=1), dict(steps=0), dict(lr=0.0), dict(lr=-1.0)):
            with self.assertRaises(ValidationError, msg=bad) as ctx:
                TrainConfig(**bad)
            self.assertEqual(ctx.exception.code, "train_config")

    def test_dict_round_trip(self):
        config = tiny_config(sim="ips", sep="single", mask="none", weighting="both")
        self.assertEqual(TrainConfig.from_dict(config.to_dict()), config)


class SampleBatchTests(SimpleTestCase):
    def draw_counts(self, associations, draws=100_000):
        rng = new_rng(7)
        counts = {}
        for _ in range(draws):
            [a] = sample_batch(associations, rng, 1)
            counts[a.entry_id] = counts.get(a.entry_id, 0) + 1
        return counts

    def test_equal_strengths_uniform(self):
        associations = [Association(f"q{i}", f"e{i}") for i in range(4)]
        counts = self.draw_counts(associations)
        n, p = 100_000, 0.25
        sigma = (n * p * (1 - p)) ** 0.5
        for count in counts.values():
            self.assertLess(abs(count - n * p), 4 * sigma)

    def test_proportional_to_strength(self):
        associations = [Association("q0", "e0", 9.0), Association("q1", "e1", 1.0)]
        counts = self.draw_counts(associations)
        self.assertAlmostEqual(counts["e0"] / counts["e1"], 9.0, delta=0.5)

    def test_entries_distinct_within_batch(self):
        associations = [Association(f"q{i}", f"e{i % 5}") for i in range(20)]
        rng = new_rng(0)
        for _ in range(50):
            batch = sample_batch(associations, rng, 5)
            self.assertEqual(len({a.entry_id for a in batch}), 5)

    def test_not_enough_distinct_entries(self):
        associations = [Association("q0", "e0"), Association("q1", "e0")]
        with self.assertRaises(ValidationError) as ctx:
            sample_batch(associations, new_rng(0), 2)
        self.assertEqual(ctx.exception.code, "duplicate_entries")


class TrainStepTests(SimpleTestCase):
    def setUp(self):
        self.queries, self.entries, _ = toy_data()
        self.batch = [(q, e, 1.0) for q, e in zip(self.queries, self.entries)]

    def test_zero_learning_rate_keeps_params(self):
        ckpt = new_checkpoint(tiny_config(), QUERY_SCHEMA, ENTRY_SCHEMA)
        before = ckpt.query_params.copy()
        ckpt, loss = train_step(ckpt, self.batch, lr=0.0)
        self.assertGreater(loss, 0.0)
        for name, tensor in before.items():
            np.testing.assert_array_equal(tensor, ckpt.query_params[name])
        self.assertEqual(ckpt.step, 1)

    def test_first_adam_step_moves_against_gradient(self):
        config = tiny_config(lr=1e-3)
        ckpt = new_checkpoint(config, QUERY_SCHEMA, ENTRY_SCHEMA)
        before = ckpt.entry_params.copy()
        ckpt, _ = train_step(ckpt, self.batch)
        for name, tensor in ckpt.entry_params.items():
            grad = ckpt.m_entry[name] / (1 - config.beta1)
            expected = before[name] - config.lr * grad / (np.abs(grad) + config.eps)
            np.testing.assert_allclose(tensor, expected, rtol=1e-9, atol=1e-15)

    def test_loss_weights_change_loss(self):
        ckpt_a = new_checkpoint(tiny_config(), QUERY_SCHEMA, ENTRY_SCHEMA)
        ckpt_b = new_checkpoint(tiny_config(weighting=Weighting.LOSS), QUERY_SCHEMA, ENTRY_SCHEMA)
        weighted = [(q, e, float(i + 1)) for i, (q, e, _) in enumerate(self.batch)]
        _, plain = train_step(ckpt_a, weighted)
        _, scaled = train_step(ckpt_b, weighted)
        self.assertNotAlmostEqual(plain, scaled, places=9)

    def test_shared_towers_are_one_object(self):
        ckpt = new_checkpoint(tiny_config(share_towers=True), QUERY_SCHEMA, ENTRY_SCHEMA)
        self.assertIs(ckpt.query_params, ckpt.entry_params)
        ckpt, _ = train_step(ckpt, self.batch)
        seq = TokenSequence((CLS_ID, 65, 66, 67))
        q = encode(ckpt.query_params, ckpt.query_params.config, seq)
        e = encode(ckpt.entry_params, ckpt.entry_params.config, seq)
        self.assertEqual(q.tobytes(), e.tobytes())


class TrainTests(SimpleTestCase):
    def test_same_seed_identical_traces(self):
        ckpt_a, a = run(tiny_config(steps=20))
        ckpt_b, b = run(tiny_config(steps=20))
        self.assertEqual(a, b)
        self.assertEqual(dumps_checkpoint(ckpt_a), dumps_checkpoint(ckpt_b))

    def test_loss_decreases_on_separable_toy_set(self):
        ckpt, losses = run(tiny_config(steps=200, lr=1e-2))
        self.assertEqual(len(losses), 200)
        self.assertLess(losses[-1], losses[0])
        self.assertLess(np.mean(losses[-20:]), np.mean(losses[:20]))
        self.assertTrue(ckpt.all_finite())

    def test_attentive_loss_decreases(self):
        encoder = EncoderConfig(variant=Variant.ATTENTIVE, hidden=16, out_dim=8, heads=2, max_len=32, dtype="float64")
        _, losses = run(tiny_config(steps=60, lr=5e-3, encoder=encoder, sim="ips"))
        self.assertLess(np.mean(losses[-10:]), np.mean(losses[:10]))

    def test_resume_continues_exactly(self):
        full, full_losses = run(tiny_config(steps=20))
        half, first = run(tiny_config(steps=10))
        with tempfile.TemporaryDirectory() as tmp:
            reloaded = load_checkpoint(save_checkpoint(half, Path(tmp) / "half.gckpt"))
        resumed, second = run(tiny_config(steps=10), resume=reloaded)
        self.assertEqual(first + second, full_losses)
        self.assertEqual(resumed.step, 20)
        for name, tensor in full.query_params.items():
            self.assertEqual(tensor.tobytes(), resumed.query_params[name].tobytes())

    def test_dangling_association(self):
        queries, entries, associations = toy_data()
        with self.assertRaises(ValidationError) as ctx:
            train(
                tiny_config(), queries, entries, associations + [Association("q0", "missing")],
                query_schema=QUERY_SCHEMA, entry_schema=ENTRY_SCHEMA,
            )
        self.assertEqual(ctx.exception.code, "dangling")

    def test_empty_data(self):
        with self.assertRaises(ValidationError) as ctx:
            train(tiny_config(), [], [], [], query_schema=QUERY_SCHEMA, entry_schema=ENTRY_SCHEMA)
        self.assertEqual(ctx.exception.code, "empty_data")


class CheckpointFileTests(SimpleTestCase):
    def setUp(self):
        self.ckpt, _ = run(tiny_config(steps=3, encoder=replace(tiny_config().encoder, dtype="float32")))

    def test_round_trip_encodes_identically(self):
        restored = loads_checkpoint(dumps_checkpoint(self.ckpt))
        self.assertEqual(restored.config, self.ckpt.config)
        self.assertEqual(restored.step, 3)
        rng = np.random.default_rng(0)
        vocab = self.ckpt.vocab
        for _ in range(10):
            ids = rng.integers(0, vocab.size, size=int(rng.integers(1, 20)))
            seq = TokenSequence((CLS_ID, *ids.tolist()))
            for before, after in (
                (self.ckpt.query_params, restored.query_params),
                (self.ckpt.entry_params, restored.entry_params),
            ):
                self.assertEqual(
                    encode(before, before.config, seq).tobytes(),
                    encode(after, after.config, seq).tobytes(),
                )

    def test_round_trip_serialized_records(self):
        restored = loads_checkpoint(dumps_checkpoint(self.ckpt))
        record = Record("x", {"name": "alpha grill", "phone": "031"})
        seq = serialize(record, QUERY_SCHEMA, "multi", "multi", restored.vocab)
        q = self.ckpt.query_params
        self.assertEqual(
            encode(q, q.config, seq).tobytes(),
            encode(restored.query_params, q.config, seq).tobytes(),
        )

    def test_shared_towers_round_trip(self):
        ckpt, _ = run(tiny_config(steps=2, share_towers=True))
        restored = loads_checkpoint(dumps_checkpoint(ckpt))
        self.assertIs(restored.query_params, restored.entry_params)
        self.assertIs(restored.m_query, restored.m_entry)

    def test_truncated_file(self):
        data = dumps_checkpoint(self.ckpt)
        with self.assertRaises(ValidationError) as ctx:
            loads_checkpoint(data[: len(data) // 2])
        self.assertEqual(ctx.exception.code, "checksum")

    def test_flipped_byte(self):
        data = bytearray(dumps_checkpoint(self.ckpt))
        data[len(data) // 2] ^= 0xFF
        with self.assertRaises(ValidationError) as ctx:
            loads_checkpoint(bytes(data))
        self.assertEqual(ctx.exception.code, "checksum")

    def test_wrong_magic(self):
        data = b"XXXXX" + dumps_checkpoint(self.ckpt)[5:]
        with self.assertRaises(ValidationError) as ctx:
            loads_checkpoint(data)
        self.assertEqual(ctx.exception.code, "bad_magic")

    def test_version_mismatch(self):
        body = bytearray(dumps_checkpoint(self.ckpt)[:-4])
        struct.pack_into("<I", body, 5, 99)
        data = bytes(body) + struct.pack("<I", zlib.crc32(bytes(body)))
        with self.assertRaises(ValidationError) as ctx:
            loads_checkpoint(data)
        self.assertEqual(ctx.exception.code, "version")
