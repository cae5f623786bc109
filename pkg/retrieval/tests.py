import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from encoder.domain import EncoderConfig, Variant
from encoder.services import encode
from records.domain import Association, Record, Schema, Side
from scoring.services import SimKind, similarity
from serialization.services import serialize
from training.domain import TrainConfig
from training.services import new_checkpoint, train

from .domain import IndexSnapshot
from .services import build_index, ground, search
from .snapshots import dumps_index, load_index, loads_index, save_index

QUERY_SCHEMA = Schema.of(Side.QUERY, ["name", "phone"])
ENTRY_SCHEMA = Schema.of(Side.ENTRY, ["name", "phone", "street"])
NAMES = ["alpha grill", "bravo bakery", "charlie cafe", "delta diner"]


def toy_entries():
    return [Record(f"e{i}", {"name": n, "phone": f"03{i}1234567"}) for i, n in enumerate(NAMES)]


def toy_config(**overrides):
    options = dict(
        batch_size=4, steps=300, lr=1e-2, seed=0,
        encoder=EncoderConfig(variant=Variant.POOLER, hidden=16, out_dim=8, heads=2, max_len=32, dtype="float64"),
    )
    options.update(overrides)
    return TrainConfig(**options)


def oracle(snapshot, q, k):
    order = sorted(
        range(snapshot.size),
        key=lambda j: (-similarity(snapshot.sim, q, snapshot.matrix[j]), snapshot.ids[j]),
    )
    return [snapshot.ids[j] for j in order[:k]]


class IndexSnapshotTests(SimpleTestCase):
    def test_invariants(self):
        with self.assertRaises(ValidationError):
            IndexSnapshot(SimKind.IPS, (), np.zeros((0, 2)))
        with self.assertRaises(ValidationError):
            IndexSnapshot(SimKind.IPS, ("a", "a"), np.zeros((2, 2)))
        with self.assertRaises(ValidationError):
            IndexSnapshot(SimKind.IPS, ("a",), np.zeros((2, 2)))
        with self.assertRaises(ValidationError):
            IndexSnapshot(SimKind.IPS, ("a",), np.array([[np.nan, 0.0]]))


class SearchTests(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        self.ids = tuple(f"id{j:04d}" for j in range(1000))
        self.matrix = rng.normal(size=(1000, 8)).astype(np.float32)
        self.queries = rng.normal(size=(10, 8))

    def test_matches_sort_all_oracle(self):
        for sim in SimKind:
            snapshot = IndexSnapshot(sim, self.ids, self.matrix)
            for q in self.queries:
                for k in (1, 5, 50):
                    result = search(snapshot, q, k)
                    self.assertEqual(result.ids, oracle(snapshot, q, k))
                    scores = [s for _, s in result.hits]
                    self.assertEqual(scores, sorted(scores, reverse=True))

    def test_nsd_exact_match_ranks_first(self):
        snapshot = IndexSnapshot(SimKind.NSD, self.ids, self.matrix)
        result = search(snapshot, self.matrix[123].astype(np.float64), 3)
        self.assertEqual(result.hits[0], ("id0123", 0.0))

    def test_k_larger_than_m(self):
        snapshot = IndexSnapshot(SimKind.IPS, ("b", "a", "c"), np.array([[1.0], [2.0], [3.0]]))
        result = search(snapshot, [1.0], 10)
        self.assertEqual(result.ids, ["c", "a", "b"])

    def test_ties_broken_by_ascending_id(self):
        snapshot = IndexSnapshot(SimKind.IPS, ("z", "m", "a", "q"), np.ones((4, 2)))
        self.assertEqual(search(snapshot, [1.0, 1.0], 4).ids, ["a", "m", "q", "z"])

    def test_prefix_consistency(self):
        snapshot = IndexSnapshot(SimKind.NSD, self.ids, self.matrix)
        q = self.queries[0]
        for k in range(1, 20):
            self.assertEqual(search(snapshot, q, k).hits, search(snapshot, q, k + 1).hits[:k])

    def test_errors(self):
        snapshot = IndexSnapshot(SimKind.IPS, self.ids, self.matrix)
        with self.assertRaises(ValidationError) as ctx:
            search(snapshot, self.queries[0], 0)
        self.assertEqual(ctx.exception.code, "k")
        with self.assertRaises(ValidationError) as ctx:
            search(snapshot, [1.0, 2.0], 1)
        self.assertEqual(ctx.exception.code, "dimension_mismatch")


class SnapshotFileTests(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(1)
        self.snapshot = IndexSnapshot(
            SimKind.NSD, ("café-1", "b", "Ω"), rng.normal(size=(3, 4)).astype(np.float32)
        )

    def test_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            loaded = load_index(save_index(self.snapshot, Path(tmp) / "entries.gidx"))
        self.assertEqual(loaded, self.snapshot)
        q = np.array([0.5, -1.0, 0.0, 2.0])
        self.assertEqual(search(loaded, q, 3), search(self.snapshot, q, 3))

    def test_truncated_mid_matrix(self):
        data = dumps_index(self.snapshot)
        with self.assertRaises(ValidationError) as ctx:
            loads_index(data[:-10])
        self.assertEqual(ctx.exception.code, "checksum")

    def test_bad_magic(self):
        with self.assertRaises(ValidationError) as ctx:
            loads_index(b"NOPE" + dumps_index(self.snapshot)[4:])
        self.assertEqual(ctx.exception.code, "bad_magic")

    def test_version(self):
        body = bytearray(dumps_index(self.snapshot)[:-4])
        struct.pack_into("<I", body, 4, 7)
        with self.assertRaises(ValidationError) as ctx:
            loads_index(bytes(body) + struct.pack("<I", zlib.crc32(bytes(body))))
        self.assertEqual(ctx.exception.code, "version")


class BuildIndexTests(SimpleTestCase):
    def setUp(self):
        self.ckpt = new_checkpoint(toy_config(), QUERY_SCHEMA, ENTRY_SCHEMA)
        self.entries = toy_entries()

    def test_single_entry(self):
        snapshot = build_index(self.ckpt, self.entries[:1])
        self.assertEqual(snapshot.matrix.shape, (1, 8))

    def test_rows_equal_direct_encode(self):
        snapshot = build_index(self.ckpt, self.entries)
        params, config = self.ckpt.entry_params, self.ckpt.config
        for j, record in enumerate(self.entries):
            seq = serialize(record, ENTRY_SCHEMA, config.sep, config.mask, self.ckpt.vocab)
            expected = encode(params, params.config, seq).astype(np.float32)
            self.assertEqual(snapshot.matrix[j].tobytes(), expected.tobytes())

    def test_rebuild_is_bit_identical(self):
        self.assertEqual(build_index(self.ckpt, self.entries), build_index(self.ckpt, self.entries))

    def test_sim_override(self):
        self.assertEqual(build_index(self.ckpt, self.entries, "ips").sim, SimKind.IPS)

    def test_errors(self):
        with self.assertRaises(ValidationError) as ctx:
            build_index(self.ckpt, [])
        self.assertEqual(ctx.exception.code, "empty_index")
        with self.assertRaises(ValidationError) as ctx:
            build_index(self.ckpt, [Record("x", {"business_number": "1"})])
        self.assertEqual(ctx.exception.code, "schema")


class GroundTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.entries = toy_entries()
        cls.queries = [Record(f"q{i}", {"name": n}) for i, n in enumerate(NAMES)]
        associations = [Association(f"q{i}", f"e{i}") for i in range(len(NAMES))]
        cls.ckpt = train(
            toy_config(), cls.queries, cls.entries, associations,
            query_schema=QUERY_SCHEMA, entry_schema=ENTRY_SCHEMA,
        )
        cls.snapshot = build_index(cls.ckpt, cls.entries)

    def test_trained_positive_ranks_first(self):
        for i, query in enumerate(self.queries):
            self.assertEqual(ground(self.ckpt, self.snapshot, query, 1).top, f"e{i}")

    def test_deterministic(self):
        q = self.queries[2]
        self.assertEqual(ground(self.ckpt, self.snapshot, q, 4), ground(self.ckpt, self.snapshot, q, 4))

    def test_k1_prefix_of_k10(self):
        q = self.queries[1]
        top10 = ground(self.ckpt, self.snapshot, q, 10)
        self.assertEqual(len(top10), 4)
        self.assertEqual(ground(self.ckpt, self.snapshot, q, 1).hits, top10.hits[:1])

    def test_query_outside_schema(self):
        with self.assertRaises(ValidationError) as ctx:
            ground(self.ckpt, self.snapshot, Record("q", {"street": "x"}), 1)
        self.assertEqual(ctx.exception.code, "schema")
