"""
manage.py build_index: embebe las entradas con la torre de entradas de un
checkpoint y guarda el snapshot del índice.
"""
from pathlib import Path

from django.core.management.base import CommandError

from experiments.management.base import GroundingCommand
from records.services import load_records
from retrieval.services import build_index
from retrieval.snapshots import save_index
from training.checkpoints import load_checkpoint


class Command(GroundingCommand):
    help = "Construye el índice de entradas para un checkpoint."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--checkpoint", metavar="PATH", required=True)
        parser.add_argument("--entries", metavar="PATH", help="JSONL de entradas (por defecto paths.data/entries.jsonl).")
        parser.add_argument("--out", metavar="PATH", help="Snapshot de salida.")

    def run(self, run_config, **options):
        checkpoint = load_checkpoint(options["checkpoint"])
        entries_path = options.get("entries") or run_config.paths["data"] / "entries.jsonl"
        entries, report = load_records(entries_path, checkpoint.entry_schema)
        if report.skipped_lines or report.rejected:
            raise CommandError(
                f"{entries_path}: {report.skipped_lines} líneas inválidas, {report.rejected} rechazadas."
            )
        out = Path(options.get("out") or run_config.paths["index"] / "index.gidx")
        snapshot = build_index(checkpoint, entries)
        save_index(snapshot, out)
        self.emit_json({"entries": snapshot.size, "dim": snapshot.dim, "sim": str(snapshot.sim), "path": str(out)})
