# baseline/services.py
"""
Servicios de la app 'baseline': matcher convencional por reglas.

Propósito:
    Sistema de comparación para el modelo de embeddings: normaliza campos,
    evalúa una cascada de etapas (igualdad exacta o prefijo sobre valores
    normalizados) y, si una etapa devuelve varios candidatos, elige la entrada
    más visitada.

Reglas de la cascada:
    - Las etapas se evalúan en orden; gana la primera con ≥ 1 candidato.
    - Una etapa cuyo campo de consulta falta (o queda vacío al normalizar) se salta.
    - Entre candidatos: máximo de visitas; empate → id ascendente.
    - Sin candidatos en ninguna etapa → None.

Diseño:
    - Falla cerrada: no hay coincidencia aproximada. Un dígito cambiado en el
      teléfono hace fallar esa etapa.
    - MatchIndex precalcula diccionarios valor normalizado → entradas para las
      reglas exactas; las etapas sin regla exacta recorren todas las entradas.
"""
from __future__ import annotations

import logging
import re
from collections import Counter, defaultdict
from pathlib import Path
from typing import Iterable, Sequence

from django.core.exceptions import ValidationError

from records.domain import Association, Record, Schema
from records.forms import VisitLineForm
from records.services import iter_json_lines

from .domain import Matcher, Normalizer, Rule, RuleStage, VisitHistory
from .forms import RuleForm

logger = logging.getLogger(__name__)

_NON_DIGITS = re.compile(r"[^0-9]")


# ─────────────────────────────────────────────────────────────────────────────
# Normalización y predicados
# ─────────────────────────────────────────────────────────────────────────────
def normalize(kind: Normalizer | str, s: str) -> str:
    kind = Normalizer(kind)
    if kind == Normalizer.DIGITS_ONLY:
        return _NON_DIGITS.sub("", s)
    if kind == Normalizer.COLLAPSE_SPACES:
        return " ".join(s.split())
    return s


def _query_value(rule: Rule, query: Record) -> str | None:
    raw = query.get(rule.query_field.name)
    if raw is None:
        return None
    value = normalize(rule.normalizer, raw)
    return value or None


def _entry_value(rule: Rule, entry: Record) -> str | None:
    raw = entry.get(rule.entry_field.name)
    if raw is None:
        return None
    return normalize(rule.normalizer, raw) or None


def rule_holds(rule: Rule, query_value: str, entry: Record) -> bool:
    """
    Predicado de una regla sobre un valor de consulta ya normalizado.

    PrefixNormalized exige que el valor normalizado de la entrada sea prefijo del
    de la consulta: la consulta puede extender la dirección (región → calle), no
    recortarla.
    """
    value = _entry_value(rule, entry)
    if value is None:
        return False
    if rule.matcher == Matcher.EXACT:
        return value == query_value
    return query_value.startswith(value)


# ─────────────────────────────────────────────────────────────────────────────
# Cascada por defecto y desde configuración
# ─────────────────────────────────────────────────────────────────────────────
_STANDARD_FIELDS = ("name", "phone", "address", "business_number")


def default_rules(query_schema: Schema, entry_schema: Schema) -> list[RuleStage]:
    """
    Cascada de 4 etapas: número de negocio → teléfono → nombre + prefijo de
    dirección → nombre.

    entry_schema describe los campos de los registros de entradas, no el
    esquema de la torre: business_number se compara en crudo aunque la torre
    de entradas no lo serialice.

    Raises:
        ValidationError: falta un campo estándar en algún esquema (code="schema").
    """
    missing = [
        f"{side}.{name}"
        for side, schema in (("query", query_schema), ("entry", entry_schema))
        for name in _STANDARD_FIELDS
        if name not in schema
    ]
    if missing:
        raise ValidationError(f"Faltan campos estándar: {', '.join(missing)}.", code="schema")
    return [
        RuleStage((Rule.of("business_number", "business_number", Matcher.EXACT, Normalizer.DIGITS_ONLY),),
                  "business_number"),
        RuleStage((Rule.of("phone", "phone", Matcher.EXACT, Normalizer.DIGITS_ONLY),), "phone"),
        RuleStage(
            (
                Rule.of("name", "name", Matcher.EXACT, Normalizer.COLLAPSE_SPACES),
                Rule.of("address", "address", Matcher.PREFIX, Normalizer.COLLAPSE_SPACES),
            ),
            "name+address",
        ),
        RuleStage((Rule.of("name", "name", Matcher.EXACT, Normalizer.COLLAPSE_SPACES),), "name"),
    ]


def rules_from_config(data: Sequence[dict] | None, query_schema: Schema, entry_schema: Schema) -> list[RuleStage]:
    """
    Construye la cascada desde la sección baseline.rules; None → default_rules.

    Raises:
        ValidationError: estructura inválida o campos fuera de los esquemas.
    """
    if data is None:
        return default_rules(query_schema, entry_schema)
    if not isinstance(data, list) or not data:
        raise ValidationError("baseline.rules debe ser una lista no vacía de etapas.", code="rules")
    stages = []
    for i, stage in enumerate(data):
        if not isinstance(stage, dict) or not isinstance(stage.get("rules"), list):
            raise ValidationError(f"Etapa {i}: se esperaba {{'rules': [...]}}.", code="rules")
        rules = []
        for j, item in enumerate(stage["rules"]):
            form = RuleForm(data=item, query_schema=query_schema, entry_schema=entry_schema)
            if not form.is_valid():
                errors = "; ".join(f"{k}: {' '.join(v)}" for k, v in form.errors.items())
                raise ValidationError(f"Etapa {i}, regla {j}: {errors}", code="rules")
            rules.append(Rule.of(**form.cleaned_data))
        stages.append(RuleStage(tuple(rules), stage.get("label", "")))
    return stages


# ─────────────────────────────────────────────────────────────────────────────
# Índice de reglas y matching
# ─────────────────────────────────────────────────────────────────────────────
class MatchIndex:
    """Diccionarios valor normalizado → entradas para cada regla exacta."""

    def __init__(self, entries: Sequence[Record], stages: Sequence[RuleStage]):
        self.entries = list(entries)
        self._exact: dict[tuple[str, Normalizer], dict[str, list[Record]]] = {}
        for stage in stages:
            for rule in stage.rules:
                key = (rule.entry_field.name, rule.normalizer)
                if rule.matcher != Matcher.EXACT or key in self._exact:
                    continue
                table: dict[str, list[Record]] = defaultdict(list)
                for entry in self.entries:
                    value = _entry_value(rule, entry)
                    if value is not None:
                        table[value].append(entry)
                self._exact[key] = dict(table)

    def candidates(self, stage: RuleStage, query: Record) -> list[Record] | None:
        """Entradas que cumplen la etapa; None si la etapa no aplica a la consulta."""
        values = [_query_value(rule, query) for rule in stage.rules]
        if any(v is None for v in values):
            return None
        pool = self.entries
        for rule, value in zip(stage.rules, values):
            key = (rule.entry_field.name, rule.normalizer)
            if rule.matcher == Matcher.EXACT and key in self._exact:
                pool = self._exact[key].get(value, [])
                break
        return [e for e in pool if all(rule_holds(r, v, e) for r, v in zip(stage.rules, values))]


def rule_match(
    query: Record,
    entries: Sequence[Record],
    rules: Sequence[RuleStage],
    history: VisitHistory | None = None,
    index: MatchIndex | None = None,
) -> str | None:
    """
    Entrada elegida por la cascada, o None.

    Args:
        index: MatchIndex ya construido sobre `entries` (evita recalcularlo por consulta).
    """
    if not rules:
        raise ValidationError("Se requiere al menos una etapa de reglas.", code="rules")
    history = history or VisitHistory()
    index = index or MatchIndex(entries, rules)
    for stage in rules:
        found = index.candidates(stage, query)
        if found:
            best = min(found, key=lambda e: (-history.get(e.id), e.id))
            return best.id
    return None


def winning_stage(query: Record, index: MatchIndex, rules: Sequence[RuleStage]) -> RuleStage | None:
    """Etapa que decide el resultado (para auditoría)."""
    for stage in rules:
        if index.candidates(stage, query):
            return stage
    return None


# ─────────────────────────────────────────────────────────────────────────────
# Historial de visitas
# ─────────────────────────────────────────────────────────────────────────────
def load_visit_history(path: str | Path) -> VisitHistory:
    """
    Lee un JSONL {"entry_id": ..., "count": ...}. Las líneas inválidas se
    registran como warning y se omiten; ids repetidos se suman.
    """
    counts: Counter[str] = Counter()
    skipped = 0
    for lineno, obj, error in iter_json_lines(path):
        form = VisitLineForm(data=obj) if obj is not None else None
        if form is None or not form.is_valid():
            skipped += 1
            logger.warning("%s:%d visita inválida: %s", path, lineno, error or dict(form.errors))
            continue
        counts[form.cleaned_data["entry_id"]] += form.cleaned_data["count"]
    logger.info("Historial %s: %d entradas, %d líneas omitidas", path, len(counts), skipped)
    return VisitHistory(dict(counts))


def history_from_associations(associations: Iterable[Association]) -> VisitHistory:
    """Una visita por asociación de entrenamiento."""
    return VisitHistory(dict(Counter(a.entry_id for a in associations)))
