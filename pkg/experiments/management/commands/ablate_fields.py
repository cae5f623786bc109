"""
manage.py ablate_fields: entrena un modelo por conjunto anidado de campos
válidos ({name} ⊂ {name, address} ⊂ ...) y reporta la exactitud de cada uno.
"""
from experiments.management.base import GroundingCommand
from experiments.models import ExperimentRun
from experiments.services import (
    ablate_fields, ensure_benchmark, load_benchmark, record_report, rows_to_tsv, write_report,
)


class Command(GroundingCommand):
    help = "Exactitud según el número de campos válidos."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--data", metavar="DIR", help="Benchmark (se genera si no existe).")
        parser.add_argument("--checkpoint-dir", metavar="DIR", help="Destino de los checkpoints.")
        parser.add_argument("--out", metavar="PATH", help="Prefijo del reporte (por defecto paths.reports/ablation).")
        parser.add_argument("--record", action="store_true", help="Guarda el reporte en la base de datos.")

    def run(self, run_config, **options):
        benchmark = load_benchmark(ensure_benchmark(run_config, options.get("data") or run_config.paths["data"]))
        checkpoint_dir = options.get("checkpoint_dir") or run_config.paths["checkpoints"]
        rows = [row.to_dict() for row in ablate_fields(run_config, benchmark, checkpoint_dir)]
        tsv = rows_to_tsv(rows, ["label", "accuracy", "checkpoint"])
        write_report({"rows": rows}, tsv, options.get("out") or run_config.paths["reports"] / "ablation")
        if options["record"]:
            record_report(ExperimentRun.Kind.ABLATION, "campos válidos", run_config.raw, {},
                          [{**row, "runs": 1} for row in rows])
        self.stdout.write(tsv)
