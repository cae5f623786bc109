import tempfile
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from records.domain import Record

from .domain import Benchmark, GeneratorConfig, NoiseConfig
from .services import (
    corrupt_text, derive_query, evaluate, generate_database, make_benchmark, map_entry_to_query,
    read_benchmark, write_benchmark,
)

SMALL = GeneratorConfig(n_entries=200, seed=3)


class GeneratorConfigTests(SimpleTestCase):
    def test_invalid(self):
        for bad in (dict(n_entries=0), dict(franchise_fraction=1.5), dict(missing_rates={"phone": -0.1}),
                    dict(missing_rates={"fax": 0.1})):
            with self.assertRaises(ValidationError, msg=bad):
                GeneratorConfig(**bad)

    def test_noise_invalid(self):
        with self.assertRaises(ValidationError):
            NoiseConfig(char_sub_rate=0.7, char_del_rate=0.5)
        with self.assertRaises(ValidationError):
            NoiseConfig(field_drop_prob={"street": 0.1})


class GenerateDatabaseTests(SimpleTestCase):
    def test_missing_phone_rate(self):
        entries = generate_database(GeneratorConfig(n_entries=1000, seed=0))
        missing = sum(e.get("phone") is None for e in entries)
        sigma = (1000 * 0.21 * 0.79) ** 0.5
        self.assertLess(abs(missing - 210), 3 * sigma)

    def test_no_franchises_all_names_distinct(self):
        entries = generate_database(GeneratorConfig(n_entries=500, franchise_fraction=0.0, missing_rates={}))
        names = [e.get("name") for e in entries]
        self.assertEqual(len(set(names)), 500)

    def test_franchises_share_brand(self):
        entries = generate_database(GeneratorConfig(n_entries=60, franchise_fraction=1.0, missing_rates={}))
        brands = {e.get("name").split()[0] for e in entries}
        self.assertLess(len(brands), 60)
        self.assertEqual(len({e.get("name") for e in entries}), 60)

    def test_same_seed_identical(self):
        self.assertEqual(generate_database(SMALL), generate_database(SMALL))
        other = generate_database(GeneratorConfig(n_entries=200, seed=4))
        self.assertNotEqual(generate_database(SMALL), other)

    def test_fields_and_formats(self):
        entries = generate_database(GeneratorConfig(n_entries=100, missing_rates={}))
        self.assertEqual(len({e.id for e in entries}), 100)
        for e in entries:
            self.assertEqual(set(e.values), {"name", "phone", "address", "street", "business_number"})
            self.assertEqual(len(e.get("business_number").replace("-", "")), 10)
            self.assertTrue(e.get("phone").startswith("0"))
            self.assertIn("-dong", e.get("address"))


class CorruptTextTests(SimpleTestCase):
    def test_zero_noise_is_identity(self):
        rng = np.random.default_rng(0)
        self.assertEqual(corrupt_text("Gold Cafe 02-123", NoiseConfig.zero(), rng), "Gold Cafe 02-123")

    def test_full_substitution_changes_every_character(self):
        noise = NoiseConfig(char_sub_rate=1.0, char_del_rate=0.0, word_shuffle_prob=0.0)
        s = "Gold Cafe 0 l 5 --"
        out = corrupt_text(s, noise, np.random.default_rng(1))
        self.assertEqual(len(out), len(s))
        self.assertTrue(all(a != b for a, b in zip(s, out)))

    def test_substitution_frequency(self):
        rng = np.random.default_rng(2)
        s = "".join(rng.choice(list("abcdefghij"), size=100_000))
        noise = NoiseConfig(char_sub_rate=0.05, char_del_rate=0.0, word_shuffle_prob=0.0)
        out = corrupt_text(s, noise, np.random.default_rng(3))
        changed = sum(a != b for a, b in zip(s, out))
        sigma = (100_000 * 0.05 * 0.95) ** 0.5
        self.assertLess(abs(changed - 5000), 3 * sigma)

    def test_full_deletion(self):
        noise = NoiseConfig(char_sub_rate=0.0, char_del_rate=1.0, word_shuffle_prob=0.0)
        self.assertEqual(corrupt_text("abc", noise, np.random.default_rng(0)), "")

    def test_word_shuffle_keeps_words(self):
        noise = NoiseConfig(char_sub_rate=0.0, char_del_rate=0.0, word_shuffle_prob=1.0)
        s = "Norvale Kestin-dong 12-3 Brava-ro 7"
        outputs = {corrupt_text(s, noise, np.random.default_rng(seed)) for seed in range(10)}
        for out in outputs:
            self.assertEqual(sorted(out.split()), sorted(s.split()))
        self.assertGreater(len(outputs), 1)


class DeriveQueryTests(SimpleTestCase):
    def setUp(self):
        self.entries = generate_database(SMALL)

    def test_zero_noise_follows_mapping(self):
        rng = np.random.default_rng(0)
        for entry in self.entries[:50]:
            query = derive_query(entry, NoiseConfig.zero(), rng)
            self.assertEqual(dict(query.values), map_entry_to_query(entry))

    def test_mapping_composes_address(self):
        entry = Record("e", {"name": "A", "address": "R D-dong 1-2", "street": "X-ro 3"})
        self.assertEqual(map_entry_to_query(entry)["address"], "R D-dong 1-2 X-ro 3")

    def test_phone_always_dropped(self):
        noise = NoiseConfig(char_sub_rate=0.0, char_del_rate=0.0, word_shuffle_prob=0.0,
                            field_drop_prob={"phone": 1.0}, outdated_prob=0.0)
        rng = np.random.default_rng(1)
        self.assertTrue(all(derive_query(e, noise, rng).get("phone") is None for e in self.entries))

    def test_default_noise_changes_most_queries(self):
        rng = np.random.default_rng(2)
        changed = sum(
            dict(derive_query(e, NoiseConfig(), rng).values) != map_entry_to_query(e) for e in self.entries
        )
        self.assertGreater(changed, len(self.entries) / 2)

    def test_outdated_value_differs(self):
        noise = NoiseConfig(char_sub_rate=0.0, char_del_rate=0.0, word_shuffle_prob=0.0,
                            field_drop_prob={}, outdated_prob=1.0)
        rng = np.random.default_rng(3)
        for entry in self.entries[:30]:
            query = derive_query(entry, noise, rng)
            self.assertNotEqual(dict(query.values), map_entry_to_query(entry))


class CalibrationTests(SimpleTestCase):
    """Frecuencias observadas dentro de 3σ de las tasas configuradas (n ≥ 10⁴)."""

    N = 10_000

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.entries = generate_database(GeneratorConfig(n_entries=cls.N, seed=11))

    def assert_rate(self, count, n, p):
        sigma = (n * p * (1 - p)) ** 0.5
        self.assertLess(abs(count - n * p), 3 * sigma, f"{count}/{n} vs p={p}")

    def only(self, **rates):
        options = dict(char_sub_rate=0.0, char_del_rate=0.0, word_shuffle_prob=0.0,
                       field_drop_prob={}, outdated_prob=0.0)
        options.update(rates)
        return NoiseConfig(**options)

    def test_missing_street_and_phone(self):
        self.assert_rate(sum(e.get("street") is None for e in self.entries), self.N, 0.17)
        self.assert_rate(sum(e.get("phone") is None for e in self.entries), self.N, 0.21)
        self.assertFalse(any(e.get("business_number") is None for e in self.entries))

    def test_char_deletion_rate(self):
        rng = np.random.default_rng(5)
        s = "".join(rng.choice(list("abcdefghij"), size=100_000))
        out = corrupt_text(s, self.only(char_del_rate=0.01), np.random.default_rng(6))
        self.assert_rate(len(s) - len(out), len(s), 0.01)

    def test_word_shuffle_prob(self):
        # Con 8 palabras distintas la permutación identidad tiene probabilidad 1/8!
        s = "uno dos tres cuatro cinco seis siete ocho"
        noise, rng = self.only(word_shuffle_prob=0.15), np.random.default_rng(7)
        shuffled = sum(corrupt_text(s, noise, rng) != s for _ in range(self.N))
        self.assert_rate(shuffled, self.N, 0.15 * (1 - 1 / 40320))

    def test_field_drop_prob(self):
        with_phone = [e for e in self.entries if e.get("phone") is not None]
        noise, rng = self.only(field_drop_prob={"phone": 0.2}), np.random.default_rng(8)
        queries = [derive_query(with_phone[i % len(with_phone)], noise, rng) for i in range(self.N)]
        self.assert_rate(sum(q.get("phone") is None for q in queries), self.N, 0.2)
        self.assertTrue(all(q.get("name") is not None for q in queries))

    def test_outdated_prob(self):
        noise, rng = self.only(outdated_prob=0.05), np.random.default_rng(9)
        entry = Record("e", {"name": "Gold Cafe", "phone": "02-123-4567"})
        changed = sum(dict(derive_query(entry, noise, rng).values) != map_entry_to_query(entry)
                      for _ in range(self.N))
        self.assert_rate(changed, self.N, 0.05)


class MakeBenchmarkTests(SimpleTestCase):
    def setUp(self):
        self.bench = make_benchmark(SMALL, NoiseConfig(), n_queries=1000, test_fraction=0.1)

    def test_split_sizes(self):
        self.assertEqual(len(self.bench.test_ids), 100)
        self.assertEqual(len(self.bench.train_ids), 900)
        self.assertFalse(self.bench.train_ids & self.bench.test_ids)

    def test_gold_integrity(self):
        entry_ids = {e.id for e in self.bench.entries}
        self.assertEqual(len(self.bench.gold), 1000)
        self.assertTrue(set(self.bench.gold.values()) <= entry_ids)
        self.assertEqual(len(self.bench.train_associations), 900)

    def test_same_seed_identical(self):
        again = make_benchmark(SMALL, NoiseConfig(), n_queries=1000, test_fraction=0.1)
        self.assertEqual(again.queries, self.bench.queries)
        self.assertEqual(again.gold, self.bench.gold)
        self.assertEqual(again.test_ids, self.bench.test_ids)

    def test_invalid_arguments(self):
        with self.assertRaises(ValidationError) as ctx:
            make_benchmark(SMALL, NoiseConfig(), n_queries=100, test_fraction=1.0)
        self.assertEqual(ctx.exception.code, "test_fraction")
        with self.assertRaises(ValidationError) as ctx:
            make_benchmark(SMALL, NoiseConfig(), n_queries=5, test_fraction=0.1)
        self.assertEqual(ctx.exception.code, "n_queries")

    def test_files_round_trip_and_are_stable(self):
        with tempfile.TemporaryDirectory() as tmp:
            a, b = Path(tmp) / "a", Path(tmp) / "b"
            paths_a = write_benchmark(self.bench, a)
            paths_b = write_benchmark(make_benchmark(SMALL, NoiseConfig(), 1000, 0.1), b)
            self.assertEqual([p.read_bytes() for p in paths_a], [p.read_bytes() for p in paths_b])
            restored = read_benchmark(a)
        self.assertEqual(restored.entries, self.bench.entries)
        self.assertEqual(restored.queries, self.bench.queries)
        self.assertEqual(restored.gold, self.bench.gold)
        self.assertEqual(restored.test_ids, self.bench.test_ids)


class EvaluateTests(SimpleTestCase):
    def setUp(self):
        self.bench = make_benchmark(SMALL, NoiseConfig(), n_queries=200, test_fraction=0.25)

    def test_oracle(self):
        metrics = evaluate(lambda q: [self.bench.gold[q.id]], self.bench)
        self.assertEqual(metrics.top1_acc, 1.0)
        self.assertEqual(metrics.mrr, 1.0)
        self.assertEqual(metrics.n, 50)

    def test_adversarial(self):
        metrics = evaluate(lambda q: "nobody", self.bench)
        self.assertEqual(metrics.top1_acc, 0.0)
        self.assertEqual(metrics.mrr, 0.0)

    def test_monotone_in_k(self):
        ids = [e.id for e in self.bench.entries]
        rng = np.random.default_rng(0)
        metrics = evaluate(lambda q: list(rng.permutation(ids)[:60]), self.bench, ks=(1, 5, 50))
        self.assertLessEqual(metrics.topk_acc[1], metrics.topk_acc[5])
        self.assertLessEqual(metrics.topk_acc[5], metrics.topk_acc[50])
        self.assertTrue(0.0 <= metrics.mrr <= 1.0)

    def test_second_rank_counts_half(self):
        def resolver(q):
            return ["nobody", self.bench.gold[q.id]]
        metrics = evaluate(resolver, self.bench, ks=(1, 2))
        self.assertEqual(metrics.top1_acc, 0.0)
        self.assertEqual(metrics.topk_acc[2], 1.0)
        self.assertAlmostEqual(metrics.mrr, 0.5)

    def test_failures_and_none_are_misses(self):
        def resolver(q):
            if q.id.endswith(("0", "2", "4", "6", "8")):
                raise RuntimeError("boom")
            return None
        metrics = evaluate(resolver, self.bench)
        self.assertEqual(metrics.top1_acc, 0.0)
        self.assertGreater(metrics.failures, 0)

    def test_duplicate_entries_count_only_for_dedup_accuracy(self):
        entries = [Record("e1", {"name": "A"}), Record("e2", {"name": "A"}), Record("e3", {"name": "B"})]
        queries = [Record("q1", {"name": "A"})]
        bench = Benchmark(entries, queries, {"q1": "e1"}, frozenset(), frozenset({"q1"}))
        duplicate = evaluate(lambda q: ["e2", "e1"], bench)
        self.assertEqual(duplicate.top1_acc, 0.0)
        self.assertEqual(duplicate.top1_acc_dedup, 1.0)
        self.assertAlmostEqual(duplicate.mrr, 0.5)
        other = evaluate(lambda q: ["e3"], bench)
        self.assertEqual((other.top1_acc, other.top1_acc_dedup), (0.0, 0.0))
        exact = evaluate(lambda q: ["e1"], bench)
        self.assertEqual((exact.top1_acc, exact.top1_acc_dedup), (1.0, 1.0))
        self.assertIn("top1_acc_dedup", exact.to_dict())

    def test_empty_split(self):
        bench = Benchmark([Record("e1", {})], [], {}, frozenset(), frozenset())
        with self.assertRaises(ValidationError):
            evaluate(lambda q: [], bench)
