# baseline/domain.py
"""
Tipos del matcher por reglas.

    - Rule: compara un campo de consulta con un campo de entrada, ambos
      normalizados, por igualdad exacta o por prefijo.
    - RuleStage: conjunción de reglas; una etapa de la cascada.
    - VisitHistory: visitas por entry_id (para re-ranking entre candidatos).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

from django.core.exceptions import ValidationError
from django.db import models

from records.domain import FieldKey, Side


class Normalizer(models.TextChoices):
    DIGITS_ONLY = "digits_only", "Solo dígitos"
    COLLAPSE_SPACES = "collapse_spaces", "Espacios colapsados"
    IDENTITY = "identity", "Sin cambios"


class Matcher(models.TextChoices):
    EXACT = "exact_normalized", "Igualdad normalizada"
    PREFIX = "prefix_normalized", "Prefijo normalizado"


@dataclass(frozen=True)
class Rule:
    query_field: FieldKey
    entry_field: FieldKey
    matcher: Matcher = Matcher.EXACT
    normalizer: Normalizer = Normalizer.IDENTITY

    def __post_init__(self):
        object.__setattr__(self, "matcher", Matcher(self.matcher))
        object.__setattr__(self, "normalizer", Normalizer(self.normalizer))
        if self.query_field.side != Side.QUERY or self.entry_field.side != Side.ENTRY:
            raise ValidationError("Una regla va de un campo de consulta a uno de entrada.", code="rule")

    @classmethod
    def of(cls, query_field: str, entry_field: str, matcher, normalizer) -> "Rule":
        return cls(FieldKey(query_field, Side.QUERY), FieldKey(entry_field, Side.ENTRY), matcher, normalizer)

    def describe(self) -> str:
        return f"{self.query_field.name}~{self.entry_field.name}[{self.matcher.value}/{self.normalizer.value}]"


@dataclass(frozen=True)
class RuleStage:
    """Etapa conjuntiva: una entrada es candidata si cumple todas las reglas."""
    rules: tuple[Rule, ...]
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        if not self.rules:
            raise ValidationError("Una etapa necesita al menos una regla.", code="rule")
        if not self.label:
            object.__setattr__(self, "label", " & ".join(r.describe() for r in self.rules))


@dataclass(frozen=True)
class VisitHistory:
    counts: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        bad = [k for k, v in self.counts.items() if v < 0]
        if bad:
            raise ValidationError(f"Conteos negativos para {bad[:5]}.", code="visits")
        object.__setattr__(self, "counts", MappingProxyType(dict(self.counts)))

    def get(self, entry_id: str) -> int:
        return self.counts.get(entry_id, 0)
