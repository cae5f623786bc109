# records/services.py
"""
Servicios de ingesta para la app 'records'.

Propósito:
    Leer y escribir las colecciones semi-estructuradas (consultas, entradas de la
    base y asociaciones) en formato JSONL, validando cada línea con los forms de la
    app y dejando trazas en los reportes de ingesta.

Responsabilidades:
    - load_records / dump_records: registros de un esquema (ida y vuelta exacta).
    - load_associations / dump_associations: vínculos con strength (por defecto 1.0).
    - validate / validate_collection: faltantes por campo y caracteres de control.
    - iter_json_lines: lector de bajo nivel compartido con baseline/synthbench.

Reglas:
    - Línea JSON malformada → se salta y se cuenta (no es fatal).
    - Campo desconocido → se ignora y se cuenta.
    - id duplicado → el registro posterior se rechaza y se cuenta.
    - Asociación con id colgante → se salta y se cuenta.
    - strength ≤ 0 → ValidationError fatal (code="strength").

Notas:
    - null y clave ausente son el mismo valor faltante.
    - Las colecciones devueltas son inmutables (Record congelado).
"""
from __future__ import annotations

import json
import logging
import unicodedata
from pathlib import Path
from typing import Iterable, Iterator

from django.core.exceptions import ValidationError

from .domain import (
    Association,
    AssociationReport,
    IngestReport,
    Record,
    Schema,
    ValidationReport,
)
from .forms import AssociationLineForm, record_form_for

logger = logging.getLogger(__name__)


# ─────────────────────────────────────────────────────────────────────────────
# Lectura JSONL
# ─────────────────────────────────────────────────────────────────────────────
def iter_json_lines(path: str | Path) -> Iterator[tuple[int, dict | None, str | None]]:
    """
    Recorre un archivo JSONL UTF-8 devolviendo (nro_linea, objeto, error).

    Las líneas en blanco se omiten. Si la línea no es un objeto JSON válido,
    `objeto` es None y `error` describe el problema.

    Raises:
        OSError: si el archivo no se puede abrir.
    """
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                yield lineno, None, f"JSON malformado: {exc.msg}"
                continue
            if not isinstance(obj, dict):
                yield lineno, None, "La línea no es un objeto JSON"
                continue
            yield lineno, obj, None


def _form_errors(form) -> str:
    return "; ".join(f"{k}: {' '.join(v)}" for k, v in form.errors.items())


# ─────────────────────────────────────────────────────────────────────────────
# Registros
# ─────────────────────────────────────────────────────────────────────────────
def load_records(path: str | Path, schema: Schema) -> tuple[list[Record], IngestReport]:
    """
    Carga registros de un JSONL conforme a `schema`.

    Args:
        path (str | Path): archivo JSONL (un objeto por línea, campo "id" obligatorio).
        schema (Schema): esquema que define los campos válidos.

    Returns:
        tuple[list[Record], IngestReport]: registros aceptados en orden de archivo y
        sus contadores.

    Raises:
        OSError: archivo ilegible.
    """
    form_class = record_form_for(schema)
    report = IngestReport()
    records: list[Record] = []
    seen: set[str] = set()

    for lineno, obj, error in iter_json_lines(path):
        report.lines_read += 1
        if obj is None:
            report.skipped_lines += 1
            report.errors.append((lineno, error))
            logger.warning("%s:%d %s", path, lineno, error)
            continue

        unknown = [k for k in obj if k != "id" and k not in schema]
        form = form_class(data=obj)
        if not form.is_valid():
            report.skipped_lines += 1
            report.errors.append((lineno, _form_errors(form)))
            logger.warning("%s:%d línea inválida: %s", path, lineno, _form_errors(form))
            continue

        report.unknown_fields_skipped += len(unknown)
        record_id = form.cleaned_data["id"]
        if record_id in seen:
            report.rejected += 1
            report.duplicate_ids += 1
            report.errors.append((lineno, f"id duplicado {record_id!r}"))
            continue
        seen.add(record_id)
        values = {name: form.cleaned_data[name] for name in schema.names}
        records.append(Record(record_id, values))
        report.accepted += 1

    logger.info(
        "Ingesta %s: %d líneas, %d aceptados, %d rechazados, %d saltadas, %d campos desconocidos",
        path, report.lines_read, report.accepted, report.rejected,
        report.skipped_lines, report.unknown_fields_skipped,
    )
    return records, report


def record_to_json(record: Record, schema: Schema) -> dict:
    """Objeto JSON del registro: id y los valores presentes en orden de esquema."""
    obj: dict[str, str] = {"id": record.id}
    for name in schema.names:
        value = record.get(name)
        if value is not None:
            obj[name] = value
    return obj


def dump_records(records: Iterable[Record], schema: Schema, path: str | Path) -> int:
    """
    Escribe registros en JSONL (orden de esquema, faltantes omitidos).

    Returns:
        int: cantidad de líneas escritas.
    """
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_json(record, schema), ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count


# ─────────────────────────────────────────────────────────────────────────────
# Asociaciones
# ─────────────────────────────────────────────────────────────────────────────
def load_associations(
    path: str | Path,
    queries: Iterable[Record],
    entries: Iterable[Record],
) -> tuple[list[Association], AssociationReport]:
    """
    Carga asociaciones consulta↔entrada descartando ids colgantes.

    Returns:
        tuple[list[Association], AssociationReport]

    Raises:
        ValidationError: code="strength" si alguna línea trae strength ≤ 0.
        OSError: archivo ilegible.
    """
    query_ids = {r.id for r in queries}
    entry_ids = {r.id for r in entries}
    report = AssociationReport()
    associations: list[Association] = []
    seen: set[tuple[str, str]] = set()

    for lineno, obj, error in iter_json_lines(path):
        report.lines_read += 1
        if obj is None:
            report.skipped_lines += 1
            report.errors.append((lineno, error))
            logger.warning("%s:%d %s", path, lineno, error)
            continue
        form = AssociationLineForm(data=obj)
        if not form.is_valid():
            if form.has_error("strength", code="strength"):
                raise ValidationError(
                    f"{path}:{lineno} strength no positivo: datos corruptos.", code="strength"
                )
            report.skipped_lines += 1
            report.errors.append((lineno, _form_errors(form)))
            continue

        data = form.cleaned_data
        if data["query_id"] not in query_ids or data["entry_id"] not in entry_ids:
            report.dangling += 1
            continue
        key = (data["query_id"], data["entry_id"])
        if key in seen:
            report.duplicates += 1
            continue
        seen.add(key)
        associations.append(Association(data["query_id"], data["entry_id"], float(data["strength"])))
        report.accepted += 1

    logger.info(
        "Asociaciones %s: %d aceptadas, %d colgantes, %d duplicadas, %d saltadas",
        path, report.accepted, report.dangling, report.duplicates, report.skipped_lines,
    )
    return associations, report


def dump_associations(associations: Iterable[Association], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for a in associations:
            fh.write(json.dumps(
                {"query_id": a.query_id, "entry_id": a.entry_id, "strength": a.strength},
                ensure_ascii=False,
            ))
            fh.write("\n")
            count += 1
    return count


# ─────────────────────────────────────────────────────────────────────────────
# Validación
# ─────────────────────────────────────────────────────────────────────────────
def _has_control_chars(value: str) -> bool:
    return any(unicodedata.category(ch) == "Cc" for ch in value)


def validate(record: Record, schema: Schema) -> ValidationReport:
    """
    Reporta valores faltantes por campo y valores con caracteres de control.

    Los caracteres de control (p. ej. tabulador) solo se señalan; nunca se rechazan.
    """
    missing = {name: int(record.is_missing(name)) for name in schema.names}
    flagged_fields = [
        name for name in schema.names
        if record.get(name) is not None and _has_control_chars(record.get(name))
    ]
    return ValidationReport(missing=missing, flagged=len(flagged_fields), flagged_fields=flagged_fields)


def validate_collection(records: Iterable[Record], schema: Schema) -> ValidationReport:
    """Agrega validate() sobre una colección (faltantes por campo en toda la colección)."""
    total = ValidationReport(missing={name: 0 for name in schema.names}, records=0)
    for record in records:
        total = total.merge(validate(record, schema))
    return total
