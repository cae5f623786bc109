from collections import Counter

from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from records.domain import Record, Schema, Side

from .domain import CLS_ID, MASK_ID, SEP_ID, MaskMode, SepMode, TokenSequence
from .services import build_vocab, render, serialize

QUERY = Schema.of(Side.QUERY, ["name", "phone"])
ENTRY = Schema.of(Side.ENTRY, ["name", "phone"])
A, B = ord("A"), ord("B")


class BuildVocabTests(SimpleTestCase):
    def test_four_plus_four_distinct_fields(self):
        q = Schema.of(Side.QUERY, ["q1", "q2", "q3", "q4"])
        e = Schema.of(Side.ENTRY, ["e1", "e2", "e3", "e4"])
        self.assertEqual(build_vocab(q, e).size, 275)

    def test_one_plus_one(self):
        vocab = build_vocab(Schema.of(Side.QUERY, ["a"]), Schema.of(Side.ENTRY, ["b"]))
        self.assertEqual(vocab.size, 263)

    def test_shared_names_are_merged(self):
        vocab = build_vocab(QUERY, ENTRY)
        self.assertEqual(vocab.size, 259 + 4)

    def test_deterministic_and_ordered(self):
        v1, v2 = build_vocab(QUERY, ENTRY), build_vocab(QUERY, ENTRY)
        self.assertEqual(v1, v2)
        self.assertEqual(v1.specials[:5], ("[CLS]", "[SEP]", "[MASK]", "[SEP]_name", "[MASK]_name"))
        self.assertEqual(v1.field_sep_id("name"), 259)
        self.assertEqual(v1.field_mask_id("phone"), 262)


class SerializeModeTableTests(SimpleTestCase):
    """Tabla completa separador × máscara con 0, 1 y todos los campos faltantes."""

    def setUp(self):
        self.vocab = build_vocab(QUERY, ENTRY)
        self.sep_name = self.vocab.field_sep_id("name")
        self.sep_phone = self.vocab.field_sep_id("phone")
        self.mask_name = self.vocab.field_mask_id("name")
        self.mask_phone = self.vocab.field_mask_id("phone")

    def ids(self, record, sep, mask, max_len=16):
        return list(serialize(record, QUERY, sep, mask, self.vocab, max_len).ids)

    def test_one_missing(self):
        r = Record("q", {"name": "AB"})
        expected = {
            ("single", "none"): [CLS_ID, A, B, SEP_ID, SEP_ID],
            ("single", "single"): [CLS_ID, A, B, SEP_ID, MASK_ID, SEP_ID],
            ("single", "multi"): [CLS_ID, A, B, SEP_ID, self.mask_phone, SEP_ID],
            ("multi", "none"): [CLS_ID, A, B, self.sep_name, self.sep_phone],
            ("multi", "single"): [CLS_ID, A, B, self.sep_name, MASK_ID, self.sep_phone],
            ("multi", "multi"): [CLS_ID, A, B, self.sep_name, self.mask_phone, self.sep_phone],
        }
        for (sep, mask), want in expected.items():
            with self.subTest(sep=sep, mask=mask):
                self.assertEqual(self.ids(r, sep, mask), want)

    def test_none_missing_mask_mode_has_no_effect(self):
        r = Record("q", {"name": "A", "phone": "B"})
        for sep, sep_ids in (("single", (SEP_ID, SEP_ID)), ("multi", (self.sep_name, self.sep_phone))):
            want = [CLS_ID, A, sep_ids[0], B, sep_ids[1]]
            for mask in MaskMode.values:
                with self.subTest(sep=sep, mask=mask):
                    self.assertEqual(self.ids(r, sep, mask), want)

    def test_all_missing(self):
        r = Record("q", {})
        expected = {
            ("single", "none"): [CLS_ID, SEP_ID, SEP_ID],
            ("single", "single"): [CLS_ID, MASK_ID, SEP_ID, MASK_ID, SEP_ID],
            ("single", "multi"): [CLS_ID, self.mask_name, SEP_ID, self.mask_phone, SEP_ID],
            ("multi", "none"): [CLS_ID, self.sep_name, self.sep_phone],
            ("multi", "single"): [CLS_ID, MASK_ID, self.sep_name, MASK_ID, self.sep_phone],
            ("multi", "multi"): [CLS_ID, self.mask_name, self.sep_name, self.mask_phone, self.sep_phone],
        }
        for (sep, mask), want in expected.items():
            with self.subTest(sep=sep, mask=mask):
                self.assertEqual(self.ids(r, sep, mask), want)

    def test_multi_multi_specials_reveal_missing_fields(self):
        for values, missing in (({"name": "x"}, {"phone"}), ({"phone": "1"}, {"name"}), ({}, {"name", "phone"})):
            seq = serialize(Record("q", values), QUERY, SepMode.MULTI, MaskMode.MULTI, self.vocab)
            counts = Counter(i for i in seq.ids if self.vocab.is_special(i))
            revealed = {n for n in QUERY.names if counts[self.vocab.field_mask_id(n)]}
            self.assertEqual(revealed, missing)

    def test_utf8_bytes(self):
        seq = serialize(Record("q", {"name": "é"}), QUERY, "single", "none", self.vocab)
        self.assertEqual(list(seq.ids[1:3]), list("é".encode("utf-8")))

    def test_truncation_keeps_cls_and_prefix(self):
        r = Record("q", {"name": "ABCDEFG", "phone": "123"})
        full = serialize(r, QUERY, "multi", "multi", self.vocab, max_len=128)
        for max_len in (2, 3, 5, 9):
            seq = serialize(r, QUERY, "multi", "multi", self.vocab, max_len=max_len)
            self.assertEqual(seq.length, max_len)
            self.assertEqual(seq.ids[0], CLS_ID)
            self.assertEqual(seq.ids, full.ids[:max_len])

    def test_max_len_below_two(self):
        with self.assertRaises(ValidationError) as ctx:
            serialize(Record("q", {}), QUERY, "single", "none", self.vocab, max_len=1)
        self.assertEqual(ctx.exception.code, "max_len")

    def test_pure_function(self):
        r1 = Record("q1", {"name": "Gold Cafe"})
        r2 = Record("q2", {"name": "Gold Cafe"})
        self.assertEqual(
            serialize(r1, QUERY, "multi", "single", self.vocab),
            serialize(r2, QUERY, "multi", "single", self.vocab),
        )


class RenderTests(SimpleTestCase):
    def setUp(self):
        self.vocab = build_vocab(QUERY, ENTRY)

    def test_bytes_and_specials(self):
        self.assertEqual(render(TokenSequence((CLS_ID, A, SEP_ID)), self.vocab), "[CLS] A [SEP]")

    def test_field_mask(self):
        self.assertEqual(render([self.vocab.field_mask_id("phone")], self.vocab), "[MASK]_phone")

    def test_empty_sequence_is_an_error(self):
        with self.assertRaises(ValidationError):
            render([], self.vocab)

    def test_unknown_id(self):
        with self.assertRaises(ValidationError):
            render([CLS_ID, self.vocab.size], self.vocab)
