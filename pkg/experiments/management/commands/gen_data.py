"""
manage.py gen_data: genera el benchmark sintético y lo escribe como JSONL
(entries, queries, gold, associations) en --out o paths.data.
"""
from pathlib import Path

from experiments.management.base import GroundingCommand
from experiments.services import generate_benchmark
from synthbench.services import write_benchmark


class Command(GroundingCommand):
    help = "Genera la base sintética, las consultas ruidosas y el mapa gold."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--out", metavar="DIR", help="Directorio de salida (por defecto paths.data).")

    def run(self, run_config, **options):
        out = Path(options.get("out") or run_config.paths["data"])
        benchmark = generate_benchmark(run_config)
        paths = write_benchmark(benchmark, out)
        self.emit_json({
            "entries": len(benchmark.entries),
            "queries": len(benchmark.queries),
            "train": len(benchmark.train_ids),
            "test": len(benchmark.test_ids),
            "files": [str(p) for p in paths],
        })
