"""
manage.py sweep_noise: exactitud del baseline y del modelo a medida que crece
la tasa de sustitución de caracteres (OCR), con la caída respecto de la menor
tasa.
"""
from experiments.management.base import GroundingCommand, float_list, int_list
from experiments.models import ExperimentRun
from experiments.services import record_report, rows_to_tsv, sweep_noise, sweep_report, write_report

COLUMNS = ["rate", "baseline_accuracy", "baseline_drop", "model_accuracy", "model_drop", "runs"]


class Command(GroundingCommand):
    help = "Barrido de char_sub_rate para baseline y modelo."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--rates", type=float_list, default=[0.0, 0.03, 0.06, 0.1], metavar="R,R,...")
        parser.add_argument("--seeds", type=int_list, default=[0], metavar="N,N,...")
        parser.add_argument("--baseline-only", action="store_true", help="No entrena modelos.")
        parser.add_argument("--out", metavar="PATH", help="Prefijo del reporte (por defecto paths.reports/noise).")
        parser.add_argument("--record", action="store_true", help="Guarda el reporte en la base de datos.")

    def run(self, run_config, **options):
        rows = sweep_report(
            sweep_noise(run_config, options["rates"], options["seeds"], with_model=not options["baseline_only"])
        )
        tsv = rows_to_tsv(rows, COLUMNS)
        write_report({"seeds": options["seeds"], "rows": rows}, tsv,
                     options.get("out") or run_config.paths["reports"] / "noise")
        if options["record"]:
            record_report(ExperimentRun.Kind.NOISE_SWEEP, f"seeds={options['seeds']}", run_config.raw, {}, rows)
        self.stdout.write(tsv)
