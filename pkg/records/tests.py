import tempfile
from pathlib import Path

from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from .domain import Association, Record, Schema, Side
from .services import (
    dump_associations,
    dump_records,
    load_associations,
    load_records,
    validate,
    validate_collection,
)

ENTRY_SCHEMA = Schema.of(Side.ENTRY, ["name", "phone", "address", "street"])


class RecordsTestBase(SimpleTestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write_lines(self, name, lines):
        path = self.tmp / name
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        return path


class SchemaTests(SimpleTestCase):
    def test_schema_requires_fields(self):
        with self.assertRaises(ValidationError):
            Schema.of(Side.QUERY, [])

    def test_field_name_without_whitespace(self):
        with self.assertRaises(ValidationError):
            Schema.of(Side.QUERY, ["store name"])

    def test_duplicate_field_names_rejected(self):
        with self.assertRaises(ValidationError):
            Schema.of(Side.ENTRY, ["name", "name"])

    def test_restrict_keeps_schema_order(self):
        sub = ENTRY_SCHEMA.restrict(["street", "name"])
        self.assertEqual(sub.names, ("name", "street"))


class LoadRecordsTests(RecordsTestBase):
    def test_direct_field_mapping(self):
        path = self.write_lines("e.jsonl", ['{"id":"e1","name":"Gold Cafe","phone":"021234567"}'])
        records, report = load_records(path, ENTRY_SCHEMA)
        self.assertEqual(len(records), 1)
        r = records[0]
        self.assertEqual(r.id, "e1")
        self.assertEqual(r.get("name"), "Gold Cafe")
        self.assertEqual(r.get("phone"), "021234567")
        self.assertTrue(r.is_missing("address"))
        self.assertTrue(r.is_missing("street"))
        self.assertEqual(report.accepted, 1)

    def test_unknown_field_skipped_and_counted(self):
        path = self.write_lines("e.jsonl", ['{"id":"e2","name":"X","color":"red"}'])
        records, report = load_records(path, ENTRY_SCHEMA)
        self.assertEqual(records[0].get("name"), "X")
        self.assertTrue(records[0].is_missing("phone"))
        self.assertEqual(report.unknown_fields_skipped, 1)

    def test_empty_file(self):
        path = self.write_lines("e.jsonl", [])
        records, report = load_records(path, ENTRY_SCHEMA)
        self.assertEqual(records, [])
        self.assertEqual(
            (report.lines_read, report.accepted, report.rejected, report.skipped_lines), (0, 0, 0, 0)
        )

    def test_null_equals_absent(self):
        path = self.write_lines("e.jsonl", ['{"id":"e1","name":"A","phone":null}', '{"id":"e2","name":"A"}'])
        records, _ = load_records(path, ENTRY_SCHEMA)
        self.assertTrue(records[0].is_missing("phone"))
        self.assertTrue(records[1].is_missing("phone"))

    def test_malformed_and_duplicate_lines_are_counted(self):
        path = self.write_lines("e.jsonl", [
            '{"id":"e1","name":"A"}',
            '{"id":"e1","name":"B"}',
            '{not json',
            '',
            '["array"]',
            '{"name":"no id"}',
            '{"id":"e3","phone":123}',
            '{"id":"e4"}',
        ])
        records, report = load_records(path, ENTRY_SCHEMA)
        self.assertEqual([r.id for r in records], ["e1", "e4"])
        self.assertEqual(records[0].get("name"), "A")
        self.assertEqual(report.lines_read, 7)
        self.assertEqual(report.duplicate_ids, 1)
        self.assertEqual(report.skipped_lines, 4)
        self.assertIn(3, [lineno for lineno, _ in report.errors])
        self.assertEqual(report.accepted + report.rejected + report.skipped_lines, report.lines_read)

    def test_unreadable_file(self):
        with self.assertRaises(OSError):
            load_records(self.tmp / "missing.jsonl", ENTRY_SCHEMA)

    def test_round_trip_identity(self):
        original = [
            Record("e1", {"name": "Gold Cafe", "phone": "021234567"}),
            Record("e2", {"name": "Kim's\tDiner", "street": "Teheran-ro 12", "address": "Seoul Gangnam"}),
            Record("e3", {"name": "카페 골드"}),
        ]
        path = self.tmp / "rt.jsonl"
        dump_records(original, ENTRY_SCHEMA, path)
        loaded, _ = load_records(path, ENTRY_SCHEMA)
        self.assertEqual(loaded, original)
        again = self.tmp / "rt2.jsonl"
        dump_records(loaded, ENTRY_SCHEMA, again)
        self.assertEqual(path.read_bytes(), again.read_bytes())


class LoadAssociationsTests(RecordsTestBase):
    def setUp(self):
        super().setUp()
        self.queries = [Record("q1", {"name": "a"})]
        self.entries = [Record("e1", {"name": "a"}), Record("e2", {"name": "b"})]

    def test_default_strength(self):
        path = self.write_lines("a.jsonl", ['{"query_id":"q1","entry_id":"e1"}'])
        assocs, _ = load_associations(path, self.queries, self.entries)
        self.assertEqual(assocs, [Association("q1", "e1", 1.0)])

    def test_explicit_strength_counts_links(self):
        path = self.write_lines("a.jsonl", ['{"query_id":"q1","entry_id":"e1","strength":3}'])
        assocs, _ = load_associations(path, self.queries, self.entries)
        self.assertEqual(assocs[0].strength, 3.0)

    def test_dangling_id_skipped(self):
        path = self.write_lines("a.jsonl", ['{"query_id":"q9","entry_id":"e1"}'])
        assocs, report = load_associations(path, self.queries, self.entries)
        self.assertEqual(assocs, [])
        self.assertEqual(report.dangling, 1)

    def test_non_positive_strength_is_fatal(self):
        path = self.write_lines("a.jsonl", ['{"query_id":"q1","entry_id":"e1","strength":0}'])
        with self.assertRaises(ValidationError) as ctx:
            load_associations(path, self.queries, self.entries)
        self.assertEqual(ctx.exception.code, "strength")

    def test_no_dangling_after_load_and_round_trip(self):
        path = self.write_lines("a.jsonl", [
            '{"query_id":"q1","entry_id":"e1","strength":2.5}',
            '{"query_id":"q1","entry_id":"e9"}',
            '{"query_id":"q1","entry_id":"e1"}',
            '{"query_id":"q1","entry_id":"e2"}',
        ])
        assocs, report = load_associations(path, self.queries, self.entries)
        ids = {r.id for r in self.queries} | {r.id for r in self.entries}
        self.assertTrue(all(a.query_id in ids and a.entry_id in ids for a in assocs))
        self.assertEqual(report.duplicates, 1)
        out = self.tmp / "out.jsonl"
        dump_associations(assocs, out)
        reloaded, _ = load_associations(out, self.queries, self.entries)
        self.assertEqual(reloaded, assocs)


class ValidateTests(SimpleTestCase):
    def test_fully_populated(self):
        r = Record("e1", {"name": "a", "phone": "1", "address": "x", "street": "y"})
        self.assertEqual(validate(r, ENTRY_SCHEMA).missing_total, 0)

    def test_missing_fields_reported(self):
        r = Record("e1", {"name": "a", "address": "x"})
        self.assertEqual(validate(r, ENTRY_SCHEMA).missing_fields, {"phone", "street"})

    def test_control_characters_flagged_not_rejected(self):
        r = Record("e1", {"name": "a\tb", "phone": "1", "address": "x", "street": "y"})
        report = validate(r, ENTRY_SCHEMA)
        self.assertEqual(report.flagged, 1)
        self.assertEqual(report.missing_total, 0)

    def test_collection_counts_per_field(self):
        records = [Record("a", {"name": "x"}), Record("b", {"name": "y", "phone": "1"})]
        report = validate_collection(records, ENTRY_SCHEMA)
        self.assertEqual(report.records, 2)
        self.assertEqual(report.missing["phone"], 1)
        self.assertEqual(report.missing["street"], 2)
