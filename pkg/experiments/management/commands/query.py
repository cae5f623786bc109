"""
manage.py query: resuelve un único registro JSON contra un índice y devuelve
los k mejores candidatos con su score.
"""
import json
import sys

from django.core.management.base import CommandError

from experiments.management.base import GroundingCommand
from records.domain import Record
from records.forms import record_form_for
from retrieval.services import ground
from retrieval.snapshots import load_index
from training.checkpoints import load_checkpoint


class Command(GroundingCommand):
    help = "Devuelve las k entradas más cercanas a una consulta."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("record", help='Consulta JSON, p. ej. \'{"name": "..."}\'; "-" lee stdin.')
        parser.add_argument("--checkpoint", metavar="PATH", required=True)
        parser.add_argument("--index", metavar="PATH", required=True)
        parser.add_argument("--k", type=int, default=10, metavar="N")

    def parse_record(self, text: str, schema) -> Record:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CommandError(f"Consulta JSON inválida: {exc}") from exc
        if not isinstance(obj, dict):
            raise CommandError("La consulta debe ser un objeto JSON.")
        obj.setdefault("id", "query")
        unknown = sorted(k for k in obj if k != "id" and k not in schema)
        if unknown:
            raise CommandError(f"Campos fuera del esquema de consultas {schema.names}: {unknown}")
        form = record_form_for(schema)(data=obj)
        if not form.is_valid():
            raise CommandError(f"Consulta inválida: {dict(form.errors)}")
        return Record(form.cleaned_data["id"], {n: form.cleaned_data[n] for n in schema.names})

    def run(self, run_config, **options):
        checkpoint = load_checkpoint(options["checkpoint"])
        snapshot = load_index(options["index"])
        text = sys.stdin.read() if options["record"] == "-" else options["record"]
        record = self.parse_record(text, checkpoint.query_schema)
        result = ground(checkpoint, snapshot, record, options["k"])
        self.emit_json({
            "query_id": record.id,
            "hits": [
                {"rank": rank, "entry_id": entry_id, "score": score}
                for rank, (entry_id, score) in enumerate(result.hits, start=1)
            ],
        })
