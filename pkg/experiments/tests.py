import io
import json
import shutil
import tempfile
from pathlib import Path

from django.contrib.auth import get_user_model
from django.core.exceptions import ValidationError
from django.core.management import call_command
from django.core.management.base import CommandError
from django.db import IntegrityError, transaction
from django.test import SimpleTestCase, TestCase
from django.urls import reverse

from baseline.services import rule_match
from records.domain import Record
from training.checkpoints import load_checkpoint

from .config import build_run_config, load_run_config, merge_layers, seed_overrides
from .models import ExperimentRow, ExperimentRun
from .services import (
    Combination, GridReport, GridRow, SweepRow, ablation_field_sets, ensure_benchmark, evaluate_rules,
    grid_combinations, job_seed, load_benchmark, project, record_report, run_grid, sweep_report, train_model,
    write_report,
)


def tiny_sections(tmp: Path) -> dict:
    return {
        "train": {"batch_size": 8, "steps": 6, "log_every": 2, "lr": 0.01},
        "encoder": {"variant": "pooler", "max_len": 48, "hidden": 8, "out_dim": 4, "heads": 2,
                    "dtype": "float64"},
        "generator": {"n_entries": 60},
        "noise": {"n_queries": 80, "test_fraction": 0.25},
        "paths": {"data": str(tmp / "data"), "checkpoints": str(tmp / "ckpt"),
                  "index": str(tmp / "index"), "reports": str(tmp / "reports")},
    }


def write_config(tmp: Path, **changes) -> Path:
    sections = tiny_sections(tmp)
    for section, values in changes.items():
        sections.setdefault(section, {}).update(values)
    path = tmp / "run.json"
    path.write_text(json.dumps(sections), encoding="utf-8")
    return path


def run_command(name, *args, **options) -> str:
    out = io.StringIO()
    call_command(name, *args, stdout=out, stderr=io.StringIO(), **options)
    return out.getvalue()


# ─────────────────────────────────────────────────────────────────────────────
# Configuración
# ─────────────────────────────────────────────────────────────────────────────
class RunConfigTests(SimpleTestCase):
    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp, ignore_errors=True)

    def test_defaults(self):
        run = load_run_config()
        self.assertEqual(run.query_schema.names, ("name", "phone", "address", "business_number"))
        self.assertEqual(run.entry_schema.names, ("name", "phone", "address", "street"))
        self.assertIn("business_number", run.entry_record_schema)
        self.assertEqual(run.train.batch_size, 32)
        self.assertEqual(run.n_queries, 20_000)
        self.assertEqual(run.ks, (1, 5, 10, 50))
        self.assertEqual(len(run.baseline_rules()), 4)

    def test_file_then_flags(self):
        path = write_config(self.tmp, train={"seed": 4})
        self.assertEqual(load_run_config(path).train.seed, 4)
        run = load_run_config(path, seed_overrides(9))
        self.assertEqual(run.train.seed, 9)
        self.assertEqual(run.generator.seed, 9)
        self.assertEqual(run.train.batch_size, 8)
        self.assertEqual(run.paths["data"], self.tmp / "data")

    def test_unknown_section_and_key(self):
        for layer in ({"trian": {}}, {"train": {"bacth_size": 3}}):
            with self.assertRaises(ValidationError) as ctx:
                merge_layers({"train": {"batch_size": 1}}, layer)
            self.assertEqual(ctx.exception.code, "config")

    def test_invalid_values_name_the_key(self):
        path = write_config(self.tmp, train={"batch_size": 1}, noise={"test_fraction": 1.0})
        with self.assertRaises(ValidationError) as ctx:
            load_run_config(path)
        self.assertEqual(ctx.exception.code, "config")
        self.assertIn("train.batch_size", ctx.exception.messages[0])
        self.assertIn("noise.test_fraction", ctx.exception.messages[0])

    def test_heads_must_divide_hidden(self):
        with self.assertRaises(ValidationError) as ctx:
            load_run_config(write_config(self.tmp, encoder={"hidden": 6, "heads": 4}))
        self.assertIn("encoder.heads", ctx.exception.messages[0])

    def test_drop_rate_outside_query_schema(self):
        path = write_config(self.tmp, schemas={"query": ["name", "address"]})
        with self.assertRaises(ValidationError) as ctx:
            load_run_config(path)
        self.assertIn("field_drop_prob.phone", ctx.exception.messages[0])

    def test_rules_against_schema(self):
        path = write_config(
            self.tmp,
            schemas={"query": ["name"], "entry": ["name"]},
            noise={"field_drop_prob": {"name": 0.1}},
            generator={"missing_rates": {}},
        )
        run = load_run_config(path)
        with self.assertRaises(ValidationError) as ctx:
            run.baseline_rules()
        self.assertEqual(ctx.exception.code, "schema")

    def test_invalid_json_file(self):
        path = self.tmp / "bad.json"
        path.write_text("{nope", encoding="utf-8")
        with self.assertRaises(ValidationError) as ctx:
            load_run_config(path)
        self.assertEqual(ctx.exception.code, "config")

    def test_raw_rebuilds_same_config(self):
        run = load_run_config(write_config(self.tmp))
        self.assertEqual(build_run_config(run.raw), run)


# ─────────────────────────────────────────────────────────────────────────────
# Grilla, ablación y barrido
# ─────────────────────────────────────────────────────────────────────────────
class GridShapeTests(SimpleTestCase):
    def test_twenty_four_distinct_combinations(self):
        combos = grid_combinations()
        self.assertEqual(len(combos), 24)
        self.assertEqual(len({c.label for c in combos}), 24)

    def test_job_seed_is_stable_and_label_dependent(self):
        label = "attentive/nsd/multi/multi"
        self.assertEqual(job_seed(0, label), job_seed(0, label))
        self.assertNotEqual(job_seed(0, label), job_seed(1, label))
        self.assertNotEqual(job_seed(0, label), job_seed(0, "pooler/nsd/multi/multi"))

    def test_marginals(self):
        rows = [GridRow(c, accuracies=[0.5 if c.variant == "pooler" else 0.7]) for c in grid_combinations()]
        marginals = GridReport((0,), rows).marginals()
        self.assertEqual(len(marginals), 9)
        by_key = {(m["axis"], m["value"]): m["accuracy"] for m in marginals}
        self.assertAlmostEqual(by_key[("variant", "pooler")], 0.5)
        self.assertAlmostEqual(by_key[("variant", "attentive")], 0.7)
        self.assertAlmostEqual(by_key[("mask", "none")], 0.6)

    def test_failed_row(self):
        row = GridRow(Combination("pooler", "ips", "single", "none"), [0.4, 0.6], ["seed 2: boom"])
        self.assertTrue(row.failed)
        self.assertEqual(row.runs, 2)
        self.assertAlmostEqual(row.mean, 0.5)
        self.assertAlmostEqual(row.std, 0.1)
        empty = GridRow(Combination("pooler", "ips", "single", "none"), [], ["seed 0: boom"])
        self.assertIsNone(empty.mean)
        self.assertIn("\t\t0\t1", GridReport((0,), [empty]).to_tsv())

    def test_ablation_sets_are_nested(self):
        run = load_run_config()
        sets = ablation_field_sets(run.query_schema, run.entry_schema)
        self.assertEqual([label for label, _, _ in sets],
                         ["name", "name+address", "name+address+phone", "name+address+phone+business_number"])
        for (_, q1, e1), (_, q2, e2) in zip(sets, sets[1:]):
            self.assertLess(set(q1.names), set(q2.names))
            self.assertLessEqual(set(e1.names), set(e2.names))
        self.assertEqual(sets[1][2].names, ("name", "address", "street"))
        self.assertEqual(sets[-1][2].names, sets[-2][2].names)
        self.assertNotIn("business_number", sets[-1][2])
        self.assertIn("business_number", sets[-1][1])

    def test_sweep_report_drops(self):
        rows = [SweepRow(0.0, [0.9], [0.8]), SweepRow(0.1, [0.5], [0.7])]
        report = sweep_report(rows)
        self.assertAlmostEqual(report[1]["baseline_drop"], 0.4)
        self.assertAlmostEqual(report[1]["model_drop"], 0.1)
        self.assertEqual(report[0]["baseline_drop"], 0.0)
        no_model = sweep_report([SweepRow(0.0, [0.9]), SweepRow(0.1, [0.5])])
        self.assertIsNone(no_model[1]["model_drop"])


class RunGridTests(SimpleTestCase):
    def test_subset_is_deterministic(self):
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            run = load_run_config(write_config(tmp))
            data = ensure_benchmark(run, tmp / "data")
            combos = grid_combinations()[:2]
            first = run_grid(run, data, [0, 1], combinations=combos)
            second = run_grid(run, data, [0, 1], combinations=combos)
        self.assertEqual(first.to_dict(), second.to_dict())
        for row in first.rows:
            self.assertEqual(row.runs, 2)
            self.assertTrue(0.0 <= row.mean <= 1.0)
            self.assertGreaterEqual(row.std, 0.0)

    def test_requires_seeds(self):
        with self.assertRaises(ValidationError) as ctx:
            run_grid(load_run_config(), "/nonexistent", [])
        self.assertEqual(ctx.exception.code, "seeds")


class EntryRecordSchemaTests(SimpleTestCase):
    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp, ignore_errors=True)
        self.run = load_run_config(write_config(self.tmp))
        self.benchmark = load_benchmark(ensure_benchmark(self.run, self.tmp / "data"))

    def test_entry_files_keep_business_number(self):
        self.assertTrue(all(e.get("business_number") for e in self.benchmark.entries))
        towered = project(self.benchmark.entries, self.run.entry_schema)
        self.assertFalse(any("business_number" in e.values for e in towered))

    def test_model_entry_tower_has_four_fields(self):
        checkpoint = train_model(self.run, self.benchmark)
        self.assertEqual(checkpoint.entry_schema.names, ("name", "phone", "address", "street"))

    def test_business_number_stage_reads_entry_records(self):
        entries = project(self.benchmark.entries, self.run.entry_record_schema)
        target = entries[7]
        query = Record("q", {"business_number": target.get("business_number").replace("-", "")})
        self.assertEqual(rule_match(query, entries, self.run.baseline_rules()), target.id)
        metrics = evaluate_rules(self.run, self.benchmark)
        self.assertEqual(metrics.n, len(self.benchmark.test_ids))


class WriteReportTests(SimpleTestCase):
    def test_json_and_tsv(self):
        with tempfile.TemporaryDirectory() as tmp:
            json_path, tsv_path = write_report({"a": 1}, "x\ty\n", Path(tmp) / "sub" / "grid")
            self.assertEqual(json.loads(json_path.read_text()), {"a": 1})
            self.assertEqual(tsv_path.read_text(), "x\ty\n")


# ─────────────────────────────────────────────────────────────────────────────
# Comandos
# ─────────────────────────────────────────────────────────────────────────────
class CommandTests(TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)
        self.config = str(write_config(self.tmp))

    def tearDown(self):
        self._tmp.cleanup()

    def gen_data(self, **options):
        return json.loads(run_command("gen_data", config=self.config, **options))

    def train(self, **options):
        return run_command("train", config=self.config, **options)

    def test_gen_data_files_and_stability(self):
        summary = self.gen_data()
        self.assertEqual(summary["entries"], 60)
        self.assertEqual(summary["queries"], 80)
        self.assertEqual(summary["test"], 20)
        files = [Path(p) for p in summary["files"]]
        self.assertEqual([f.name for f in files],
                         ["entries.jsonl", "queries.jsonl", "gold.jsonl", "associations.jsonl"])
        lines = [len(f.read_text().splitlines()) for f in files]
        self.assertEqual(lines, [60, 80, 80, 60])
        again = self.gen_data(out=str(self.tmp / "again"))
        self.assertEqual([f.read_bytes() for f in files], [Path(p).read_bytes() for p in again["files"]])

    def test_gen_data_invalid_test_fraction(self):
        config = write_config(self.tmp, noise={"test_fraction": 1.5})
        with self.assertRaises(CommandError):
            run_command("gen_data", config=str(config))

    def test_train_writes_checkpoint_and_trace(self):
        self.gen_data()
        out = self.tmp / "m.gckpt"
        trace = self.train(out=str(out)).splitlines()
        self.assertEqual(trace[0], "step\tloss")
        self.assertEqual([line.split("\t")[0] for line in trace[1:]], ["2", "4", "6"])
        self.assertEqual(load_checkpoint(out).step, 6)

    def test_train_resume_continues_numbering(self):
        self.gen_data()
        first = self.tmp / "a.gckpt"
        self.train(out=str(first))
        log = self.tmp / "trace.tsv"
        self.train(out=str(self.tmp / "b.gckpt"), checkpoint=str(first), steps=4, log_file=str(log))
        self.assertEqual(load_checkpoint(self.tmp / "b.gckpt").step, 10)
        steps = [line.split("\t")[0] for line in log.read_text().splitlines()[1:]]
        self.assertEqual(steps, ["8", "10"])

    def test_train_without_data(self):
        with self.assertRaises(CommandError):
            self.train()

    def test_index_and_query(self):
        self.gen_data()
        checkpoint = str(self.tmp / "m.gckpt")
        self.train(out=checkpoint)
        index = str(self.tmp / "i.gidx")
        built = json.loads(run_command("build_index", config=self.config, checkpoint=checkpoint, out=index))
        self.assertEqual(built["entries"], 60)

        record = json.dumps({"id": "q", "name": "Gold Cafe", "phone": None})
        result = json.loads(run_command("query", record, config=self.config, checkpoint=checkpoint,
                                        index=index, k=5))
        self.assertEqual(result["query_id"], "q")
        self.assertEqual([h["rank"] for h in result["hits"]], [1, 2, 3, 4, 5])
        scores = [h["score"] for h in result["hits"]]
        self.assertEqual(scores, sorted(scores, reverse=True))

        everything = json.loads(run_command("query", record, config=self.config, checkpoint=checkpoint,
                                            index=index, k=500))
        self.assertEqual(len(everything["hits"]), 60)

        for bad in ("{not json", "[1, 2]", json.dumps({"fax": "1"})):
            with self.assertRaises(CommandError):
                run_command("query", bad, config=self.config, checkpoint=checkpoint, index=index, k=1)

    def test_eval_both_and_record(self):
        self.gen_data()
        checkpoint = str(self.tmp / "m.gckpt")
        self.train(out=checkpoint)
        payload = json.loads(run_command("eval", config=self.config, baseline=True, checkpoint=checkpoint,
                                         record=True, out=str(self.tmp / "eval")))
        self.assertEqual(payload["baseline"]["n"], payload["model"]["n"])
        self.assertEqual(payload["model"]["n"], 20)
        for metrics in payload.values():
            self.assertTrue(0.0 <= metrics["top1_acc"] <= 1.0)
        run = ExperimentRun.objects.get(kind=ExperimentRun.Kind.EVAL)
        self.assertEqual([row.label for row in run.rows.all()], ["baseline", "model"])
        self.assertTrue((self.tmp / "eval.tsv").is_file())

    def test_eval_needs_a_method(self):
        self.gen_data()
        with self.assertRaises(CommandError):
            run_command("eval", config=self.config)

    def test_ablate_fields(self):
        out = run_command("ablate_fields", config=self.config, record=True)
        lines = out.splitlines()
        self.assertEqual(len(lines), 5)
        run = ExperimentRun.objects.get(kind=ExperimentRun.Kind.ABLATION)
        rows = list(run.rows.all())
        self.assertEqual(rows[0].label, "name")
        self.assertEqual(len(rows), 4)
        for i, row in enumerate(rows, start=1):
            self.assertTrue(Path(row.extra["checkpoint"]).name.endswith(f"fields_{i}.gckpt"))
            self.assertTrue(Path(row.extra["checkpoint"]).is_file())

    def test_sweep_noise_baseline_only(self):
        out = run_command("sweep_noise", config=self.config, rates=[0.0, 0.2], seeds=[0],
                          baseline_only=True, record=True)
        self.assertEqual(len(out.splitlines()), 3)
        rows = list(ExperimentRun.objects.get(kind=ExperimentRun.Kind.NOISE_SWEEP).rows.all())
        self.assertEqual(len(rows), 2)
        self.assertEqual(rows[0].extra["baseline_drop"], 0.0)
        self.assertIsNone(rows[1].extra["model_accuracy"])

    def test_grid_full(self):
        config = str(write_config(self.tmp, train={"steps": 2}))
        run_command("grid", config=config, seeds=[0], record=True)
        report = json.loads((self.tmp / "reports" / "grid.json").read_text())
        self.assertEqual(len(report["rows"]), 24)
        self.assertEqual(len(report["marginals"]), 9)
        run = ExperimentRun.objects.get(kind=ExperimentRun.Kind.GRID)
        self.assertEqual(run.rows.count(), 24)
        self.assertEqual(len(run.summary["marginals"]), 9)


# ─────────────────────────────────────────────────────────────────────────────
# Modelos, admin y panel
# ─────────────────────────────────────────────────────────────────────────────
class ExperimentModelTests(TestCase):
    def test_record_report_splits_extra(self):
        run = record_report(ExperimentRun.Kind.EVAL, "x", {"a": 1}, {"b": 2},
                            [{"label": "baseline", "accuracy": 0.5, "runs": 1, "mrr": 0.6}])
        row = run.rows.get()
        self.assertEqual(row.accuracy, 0.5)
        self.assertEqual(row.extra, {"mrr": 0.6})
        self.assertEqual(row.position, 0)

    def test_accuracy_constraint(self):
        run = ExperimentRun.objects.create(kind=ExperimentRun.Kind.GRID)
        with self.assertRaises(IntegrityError), transaction.atomic():
            ExperimentRow.objects.create(run=run, position=0, label="bad", accuracy=1.5)

    def test_position_unique(self):
        run = ExperimentRun.objects.create(kind=ExperimentRun.Kind.GRID)
        ExperimentRow.objects.create(run=run, position=0, label="a")
        with self.assertRaises(IntegrityError), transaction.atomic():
            ExperimentRow.objects.create(run=run, position=0, label="b")


class PanelViewTests(TestCase):
    def setUp(self):
        self.user = get_user_model().objects.create_superuser("admin", "admin@example.com", "pw")

    def test_requires_login(self):
        response = self.client.get(reverse("experiments:panel"))
        self.assertEqual(response.status_code, 302)

    def test_home_redirects_to_panel(self):
        response = self.client.get("/")
        self.assertRedirects(response, reverse("experiments:panel"), fetch_redirect_response=False)

    def test_panel_renders_latest_grid(self):
        rows = [GridRow(c, accuracies=[0.5]) for c in grid_combinations()]
        report = GridReport((0,), rows).to_dict()
        record_report(ExperimentRun.Kind.GRID, "seeds=[0]", {}, {"marginals": report["marginals"]},
                      report["rows"])
        self.client.force_login(self.user)
        response = self.client.get(reverse("experiments:panel"))
        self.assertEqual(response.status_code, 200)
        self.assertEqual(len(response.context["marginals"]), 9)
        self.assertContains(response, 'id="chart-data"')
        self.assertEqual(len(response.context["chart"]["marginal_acc"]), 9)

    def test_admin_changelist(self):
        record_report(ExperimentRun.Kind.EVAL, "x", {}, {}, [{"label": "baseline", "accuracy": 0.1}])
        self.client.force_login(self.user)
        response = self.client.get(reverse("admin:experiments_experimentrun_changelist"))
        self.assertEqual(response.status_code, 200)
        run = ExperimentRun.objects.get()
        detail = self.client.get(reverse("admin:experiments_experimentrun_change", args=[run.pk]))
        self.assertEqual(detail.status_code, 200)
