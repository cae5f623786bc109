import json
import tempfile
from pathlib import Path

from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from records.domain import Association, Record, Schema, Side

from .domain import Matcher, Normalizer, Rule, RuleStage, VisitHistory
from .services import (
    MatchIndex, default_rules, history_from_associations, load_visit_history, normalize,
    rule_holds, rule_match, rules_from_config, winning_stage,
)

QUERY_SCHEMA = Schema.of(Side.QUERY, ["name", "phone", "address", "business_number"])
ENTRY_SCHEMA = Schema.of(Side.ENTRY, ["name", "phone", "address", "street", "business_number"])


def entry(entry_id, **values):
    return Record(entry_id, values)


ENTRIES = [
    entry("e1", name="Gold Cafe", phone="02-123-4567", address="Norvale Kestin 12", business_number="1234567890"),
    entry("e2", name="Gold  Cafe", phone="021234567", address="Norvale Kestin 40", business_number="2222222222"),
    entry("e3", name="Blue Mart", phone="031-555-0000", address="Brava Tolun 7", business_number="3333333333"),
    entry("e4", name="Blue Mart", phone=None, address="Sorel Amdi 3", business_number=None),
]


class NormalizeTests(SimpleTestCase):
    def test_digits_only(self):
        self.assertEqual(normalize(Normalizer.DIGITS_ONLY, "02) 123-4567"), "021234567")
        self.assertEqual(normalize(Normalizer.DIGITS_ONLY, ""), "")

    def test_collapse_spaces(self):
        self.assertEqual(normalize(Normalizer.COLLAPSE_SPACES, "  Gold   Cafe "), "Gold Cafe")

    def test_identity(self):
        self.assertEqual(normalize("identity", "  x "), "  x ")


class DefaultRulesTests(SimpleTestCase):
    def test_four_stages_in_order(self):
        stages = default_rules(QUERY_SCHEMA, ENTRY_SCHEMA)
        self.assertEqual(len(stages), 4)
        self.assertEqual(stages[0].rules[0].entry_field.name, "business_number")
        self.assertEqual(stages[1].rules[0].query_field.name, "phone")
        self.assertEqual(len(stages[2].rules), 2)
        self.assertEqual(stages[2].rules[1].matcher, Matcher.PREFIX)

    def test_missing_standard_field(self):
        with self.assertRaises(ValidationError) as ctx:
            default_rules(Schema.of(Side.QUERY, ["name"]), ENTRY_SCHEMA)
        self.assertEqual(ctx.exception.code, "schema")

    def test_conjunctive_stage_requires_both(self):
        stage = default_rules(QUERY_SCHEMA, ENTRY_SCHEMA)[2]
        index = MatchIndex(ENTRIES, [stage])
        only_name = Record("q", {"name": "Blue Mart", "address": "Nowhere 1"})
        self.assertEqual(index.candidates(stage, only_name), [])
        both = Record("q", {"name": "Blue Mart", "address": "Sorel Amdi 3 Oaklane"})
        self.assertEqual([e.id for e in index.candidates(stage, both)], ["e4"])

    def test_address_prefix_only_extends_entry_value(self):
        rule = Rule.of("address", "address", Matcher.PREFIX, Normalizer.COLLAPSE_SPACES)
        self.assertTrue(rule_holds(rule, "Sorel Amdi 3 Oaklane", ENTRIES[3]))
        self.assertTrue(rule_holds(rule, "Sorel Amdi 3", ENTRIES[3]))
        self.assertFalse(rule_holds(rule, "Sorel Amdi", ENTRIES[3]))


class RuleMatchTests(SimpleTestCase):
    def setUp(self):
        self.rules = default_rules(QUERY_SCHEMA, ENTRY_SCHEMA)

    def test_business_number_wins_over_later_stages(self):
        query = Record("q", {"business_number": "123-45-67890", "name": "Blue Mart", "phone": "0315550000"})
        self.assertEqual(rule_match(query, ENTRIES, self.rules), "e1")

    def test_franchise_phone_reranked_by_visits(self):
        query = Record("q", {"phone": "(02) 123 4567"})
        history = VisitHistory({"e1": 2, "e2": 5})
        self.assertEqual(rule_match(query, ENTRIES, self.rules, history), "e2")
        self.assertEqual(rule_match(query, ENTRIES, self.rules, VisitHistory({"e1": 5, "e2": 2})), "e1")

    def test_visit_ties_broken_by_id(self):
        query = Record("q", {"phone": "021234567"})
        self.assertEqual(rule_match(query, ENTRIES, self.rules, VisitHistory()), "e1")

    def test_all_fields_missing(self):
        self.assertIsNone(rule_match(Record("q", {"name": None}), ENTRIES, self.rules))

    def test_one_digit_changed_phone_fails_closed(self):
        query = Record("q", {"phone": "031-555-0001"})
        self.assertIsNone(rule_match(query, ENTRIES, self.rules))

    def test_falls_through_to_name(self):
        query = Record("q", {"name": " Blue   Mart", "phone": "999"})
        index = MatchIndex(ENTRIES, self.rules)
        self.assertEqual(rule_match(query, ENTRIES, self.rules, index=index), "e3")
        self.assertEqual(winning_stage(query, index, self.rules).label, "name")

    def test_result_satisfies_winning_rule(self):
        query = Record("q", {"name": "Gold Cafe", "address": "Norvale Kestin 40 2F"})
        index = MatchIndex(ENTRIES, self.rules)
        result = rule_match(query, ENTRIES, self.rules, index=index)
        stage = winning_stage(query, index, self.rules)
        chosen = next(e for e in ENTRIES if e.id == result)
        for rule in stage.rules:
            value = normalize(rule.normalizer, query.get(rule.query_field.name))
            self.assertTrue(rule_holds(rule, value, chosen))

    def test_deterministic(self):
        query = Record("q", {"phone": "021234567"})
        results = {rule_match(query, list(reversed(ENTRIES)), self.rules) for _ in range(3)}
        self.assertEqual(results, {"e1"})

    def test_empty_rules(self):
        with self.assertRaises(ValidationError):
            rule_match(Record("q", {}), ENTRIES, [])


class RulesFromConfigTests(SimpleTestCase):
    def test_none_gives_defaults(self):
        self.assertEqual(
            rules_from_config(None, QUERY_SCHEMA, ENTRY_SCHEMA), default_rules(QUERY_SCHEMA, ENTRY_SCHEMA)
        )

    def test_custom_cascade(self):
        data = [{"label": "tel", "rules": [
            {"query_field": "phone", "entry_field": "phone", "matcher": "exact_normalized", "normalizer": "digits_only"},
        ]}]
        [stage] = rules_from_config(data, QUERY_SCHEMA, ENTRY_SCHEMA)
        self.assertEqual(stage, RuleStage((Rule.of("phone", "phone", Matcher.EXACT, Normalizer.DIGITS_ONLY),), "tel"))

    def test_unknown_field(self):
        data = [{"rules": [
            {"query_field": "fax", "entry_field": "phone", "matcher": "exact_normalized", "normalizer": "identity"},
        ]}]
        with self.assertRaises(ValidationError) as ctx:
            rules_from_config(data, QUERY_SCHEMA, ENTRY_SCHEMA)
        self.assertEqual(ctx.exception.code, "rules")

    def test_unknown_matcher(self):
        data = [{"rules": [
            {"query_field": "name", "entry_field": "name", "matcher": "fuzzy", "normalizer": "identity"},
        ]}]
        with self.assertRaises(ValidationError):
            rules_from_config(data, QUERY_SCHEMA, ENTRY_SCHEMA)


class VisitHistoryTests(SimpleTestCase):
    def test_missing_id_is_zero(self):
        self.assertEqual(VisitHistory({"a": 3}).get("b"), 0)

    def test_negative_rejected(self):
        with self.assertRaises(ValidationError):
            VisitHistory({"a": -1})

    def test_from_associations(self):
        history = history_from_associations(
            [Association("q1", "e1"), Association("q2", "e1"), Association("q3", "e2")]
        )
        self.assertEqual(dict(history.counts), {"e1": 2, "e2": 1})

    def test_load_jsonl(self):
        lines = [
            {"entry_id": "e1", "count": 4},
            {"entry_id": "e2", "count": -1},
            {"entry_id": "e1", "count": 1},
            {"count": 3},
        ]
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "visits.jsonl"
            path.write_text("\n".join(json.dumps(x) for x in lines) + "\nnot json\n", encoding="utf-8")
            history = load_visit_history(path)
        self.assertEqual(dict(history.counts), {"e1": 5})
