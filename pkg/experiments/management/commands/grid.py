"""
manage.py grid: entrena y evalúa las 24 combinaciones (variant × sim × sep ×
mask) con cada semilla; reporta media, desvío y marginales por eje.
"""
from experiments.management.base import GroundingCommand, int_list
from experiments.models import ExperimentRun
from experiments.services import ensure_benchmark, record_report, run_grid, write_report


class Command(GroundingCommand):
    help = "Grilla completa de combinaciones de módulos."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--data", metavar="DIR", help="Benchmark (se genera si no existe).")
        parser.add_argument("--seeds", type=int_list, default=[0, 1, 2], metavar="N,N,...")
        parser.add_argument("--parallel", type=int, default=1, metavar="N")
        parser.add_argument("--out", metavar="PATH", help="Prefijo del reporte (por defecto paths.reports/grid).")
        parser.add_argument("--record", action="store_true", help="Guarda el reporte en la base de datos.")

    def run(self, run_config, **options):
        data_dir = ensure_benchmark(run_config, options.get("data") or run_config.paths["data"])
        report = run_grid(run_config, data_dir, options["seeds"], parallel=options["parallel"])
        payload = report.to_dict()
        write_report(payload, report.to_tsv(), options.get("out") or run_config.paths["reports"] / "grid")
        if options["record"]:
            record_report(ExperimentRun.Kind.GRID, f"seeds={options['seeds']}", run_config.raw,
                          {"seeds": payload["seeds"], "marginals": payload["marginals"]}, payload["rows"])
        self.stdout.write(report.to_tsv())
