# records/domain.py
"""
Tipos de dominio de la app 'records'.

Propósito:
    Representar consultas (queries) y entradas de la base (entries) como objetos
    semi-estructurados clave→valor opcional, junto con sus esquemas y las
    asociaciones consulta↔entrada que sirven de señal de entrenamiento.

Responsabilidades:
    - FieldKey / Schema: nombre y orden de los campos válidos por lado.
    - Record: un objeto (consulta o entrada) con id y valores opcionales.
    - Association: vínculo (query_id, entry_id, strength) con strength > 0.
    - IngestReport / AssociationReport / ValidationReport: contadores de ingesta.

Diseño:
    - Dataclasses congeladas: las colecciones cargadas son inmutables y se pueden
      compartir entre hilos en solo lectura.
    - Un valor ausente y un JSON null se representan igual (None).
    - Los enums usan TextChoices de Django para reutilizar etiquetas legibles.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

from django.core.exceptions import ValidationError
from django.db import models


class Side(models.TextChoices):
    QUERY = "query", "Consulta"
    ENTRY = "entry", "Entrada"


# ─────────────────────────────────────────────────────────────────────────────
# Campos y esquemas
# ─────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class FieldKey:
    """
    Identificador de un campo válido.

    Invariantes:
        - name no vacío y sin espacios en blanco.
    """
    name: str
    side: Side

    def __post_init__(self):
        if not self.name or any(ch.isspace() for ch in self.name):
            raise ValidationError(
                f"Nombre de campo inválido: {self.name!r}.", code="field_name"
            )


@dataclass(frozen=True)
class Schema:
    """
    Lista ordenada de campos válidos de un lado (consulta o entrada).

    El orden es significativo: es el orden de serialización.
    """
    side: Side
    fields: tuple[FieldKey, ...]

    def __post_init__(self):
        if not self.fields:
            raise ValidationError("El esquema necesita al menos un campo.", code="empty_schema")
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise ValidationError(f"Campos repetidos en el esquema: {names}.", code="duplicate_field")
        for f in self.fields:
            if f.side != self.side:
                raise ValidationError(
                    f"El campo {f.name!r} pertenece al lado {f.side}, no a {self.side}.",
                    code="field_side",
                )

    @classmethod
    def of(cls, side: Side | str, names: Iterable[str]) -> "Schema":
        side = Side(side)
        return cls(side=side, fields=tuple(FieldKey(n, side) for n in names))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)

    def __contains__(self, name: object) -> bool:
        return name in self.names

    def restrict(self, names: Iterable[str]) -> "Schema":
        """Sub-esquema con los campos indicados, conservando el orden original."""
        wanted = set(names)
        return Schema(self.side, tuple(f for f in self.fields if f.name in wanted))


# ─────────────────────────────────────────────────────────────────────────────
# Registros y asociaciones
# ─────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class Record:
    """
    Objeto semi-estructurado (consulta q_i o entrada d_j).

    Campos:
        id     (str): identificador único dentro de la colección.
        values (Mapping[str, str | None]): valor por nombre de campo; None = ausente.
    """
    id: str
    values: Mapping[str, str | None] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValidationError("El id del registro no puede estar vacío.", code="record_id")
        object.__setattr__(self, "values", MappingProxyType(dict(self.values)))

    def get(self, name: str) -> str | None:
        return self.values.get(name)

    def is_missing(self, name: str) -> bool:
        return self.values.get(name) is None

    def conforms_to(self, schema: Schema) -> bool:
        return all(k in schema for k in self.values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Record):
            return NotImplemented
        mine = {k: v for k, v in self.values.items() if v is not None}
        theirs = {k: v for k, v in other.values.items() if v is not None}
        return self.id == other.id and mine == theirs

    def __hash__(self) -> int:
        return hash((self.id, tuple(sorted((k, v) for k, v in self.values.items() if v is not None))))


@dataclass(frozen=True)
class Association:
    """Vínculo observado a_ij entre una consulta y una entrada (strength > 0)."""
    query_id: str
    entry_id: str
    strength: float = 1.0

    def __post_init__(self):
        if not self.strength > 0:
            raise ValidationError(
                f"strength debe ser > 0 (recibido {self.strength}).", code="strength"
            )


# ─────────────────────────────────────────────────────────────────────────────
# Reportes de ingesta/validación
# ─────────────────────────────────────────────────────────────────────────────
@dataclass
class IngestReport:
    """
    Contadores de load_records.

    Invariante: accepted + rejected + skipped_lines == lines_read
    (lines_read cuenta solo líneas no vacías).
    """
    lines_read: int = 0
    accepted: int = 0
    rejected: int = 0
    skipped_lines: int = 0
    unknown_fields_skipped: int = 0
    duplicate_ids: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)


@dataclass
class AssociationReport:
    lines_read: int = 0
    accepted: int = 0
    dangling: int = 0
    duplicates: int = 0
    skipped_lines: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)


@dataclass
class ValidationReport:
    """
    Resultado de validate(): faltantes por campo y valores con caracteres de control.

    `records` > 1 cuando el reporte agrega una colección completa.
    """
    missing: dict[str, int] = field(default_factory=dict)
    flagged: int = 0
    flagged_fields: list[str] = field(default_factory=list)
    records: int = 1

    @property
    def missing_fields(self) -> set[str]:
        return {name for name, count in self.missing.items() if count}

    @property
    def missing_total(self) -> int:
        return sum(self.missing.values())

    def merge(self, other: "ValidationReport") -> "ValidationReport":
        merged = dict(self.missing)
        for name, count in other.missing.items():
            merged[name] = merged.get(name, 0) + count
        return ValidationReport(
            missing=merged,
            flagged=self.flagged + other.flagged,
            flagged_fields=self.flagged_fields + other.flagged_fields,
            records=self.records + other.records,
        )
