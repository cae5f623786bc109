"""
manage.py eval: top-1 / top-k / MRR sobre la partición test del benchmark,
para el baseline de reglas (--baseline), un checkpoint (--checkpoint) o ambos.
"""
from django.core.management.base import CommandError

from baseline.services import load_visit_history
from experiments.management.base import GroundingCommand
from experiments.models import ExperimentRun
from experiments.services import (
    evaluate_checkpoint, evaluate_rules, load_benchmark, record_report, rows_to_tsv, write_report,
)
from retrieval.snapshots import load_index
from training.checkpoints import load_checkpoint


class Command(GroundingCommand):
    help = "Evalúa el baseline y/o un checkpoint sobre la partición test."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--data", metavar="DIR", help="Benchmark (por defecto paths.data).")
        parser.add_argument("--baseline", action="store_true", help="Evalúa la cascada de reglas.")
        parser.add_argument("--checkpoint", metavar="PATH", help="Evalúa este checkpoint.")
        parser.add_argument("--index", metavar="PATH", help="Snapshot ya construido para el checkpoint.")
        parser.add_argument("--history", metavar="PATH", help="JSONL de visitas para el baseline.")
        parser.add_argument("--k", type=int, metavar="N", help="k adicional a reportar.")
        parser.add_argument("--out", metavar="PATH", help="Prefijo del reporte (.json y .tsv).")
        parser.add_argument("--record", action="store_true", help="Guarda el reporte en la base de datos.")

    def run(self, run_config, **options):
        if not options["baseline"] and not options.get("checkpoint"):
            raise CommandError("Indique --baseline, --checkpoint PATH o ambos.")
        if options.get("index") and not options.get("checkpoint"):
            raise CommandError("--index requiere --checkpoint.")
        ks = sorted(set(run_config.ks) | ({options["k"]} if options.get("k") else set()))
        benchmark = load_benchmark(options.get("data") or run_config.paths["data"])

        results = {}
        if options["baseline"]:
            history = load_visit_history(options["history"]) if options.get("history") else None
            results["baseline"] = evaluate_rules(run_config, benchmark, history=history, ks=ks)
        if options.get("checkpoint"):
            checkpoint = load_checkpoint(options["checkpoint"])
            snapshot = load_index(options["index"]) if options.get("index") else None
            results["model"] = evaluate_checkpoint(checkpoint, benchmark, ks, snapshot=snapshot)

        payload = {name: metrics.to_dict() for name, metrics in results.items()}
        rows = [
            {"label": name, "accuracy": m.top1_acc, "runs": 1, "n": m.n, "mrr": m.mrr,
             "top1_dedup": m.top1_acc_dedup, "failures": m.failures,
             **{f"top{k}": v for k, v in sorted(m.topk_acc.items())}}
            for name, m in results.items()
        ]
        if options.get("out"):
            columns = ["label", "n", *[f"top{k}" for k in ks], "top1_dedup", "mrr", "failures"]
            write_report(payload, rows_to_tsv(rows, columns), options["out"])
        if options["record"]:
            record_report(ExperimentRun.Kind.EVAL, options.get("checkpoint") or "baseline",
                          run_config.raw, payload, rows)
        self.emit_json(payload)
