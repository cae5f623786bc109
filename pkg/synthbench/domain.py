# synthbench/domain.py
"""
Tipos de la app 'synthbench'.

    - GeneratorConfig: tamaño y estructura de la base sintética de comercios.
    - NoiseConfig: ruido aplicado al derivar consultas (OCR, orden de palabras,
      campos faltantes, valores desactualizados).
    - Benchmark: entradas, consultas, mapa gold y partición train/test.
    - Metrics: top-1, top-k y MRR de una evaluación.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from types import MappingProxyType
from typing import Mapping

from django.core.exceptions import ValidationError

from records.domain import Association, Record, Schema, Side

ENTRY_FIELDS = ("name", "phone", "address", "street", "business_number")
QUERY_FIELDS = ("name", "phone", "address", "business_number")

# Campos de los archivos de entradas; la torre de entradas no serializa business_number
ENTRY_RECORD_SCHEMA = Schema.of(Side.ENTRY, ENTRY_FIELDS)
QUERY_SCHEMA = Schema.of(Side.QUERY, QUERY_FIELDS)

DEFAULT_MISSING_RATES = {"phone": 0.21, "street": 0.17}
DEFAULT_FIELD_DROP = {"name": 0.02, "phone": 0.2, "address": 0.1, "business_number": 0.5}


def _check_rate(errors: list[str], label: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        errors.append(f"{label} debe estar en [0, 1] ({value})")


@dataclass(frozen=True)
class GeneratorConfig:
    n_entries: int = 10_000
    franchise_fraction: float = 0.3
    franchise_mean_size: int = 5
    missing_rates: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_MISSING_RATES))
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "missing_rates", MappingProxyType(dict(self.missing_rates)))
        errors: list[str] = []
        if self.n_entries < 1:
            errors.append("n_entries debe ser ≥ 1")
        if self.franchise_mean_size < 2:
            errors.append("franchise_mean_size debe ser ≥ 2")
        _check_rate(errors, "franchise_fraction", self.franchise_fraction)
        for name, rate in self.missing_rates.items():
            if name not in ENTRY_FIELDS:
                errors.append(f"missing_rates: campo desconocido {name!r}")
            _check_rate(errors, f"missing_rates.{name}", rate)
        if self.seed < 0:
            errors.append("seed debe ser ≥ 0")
        if errors:
            raise ValidationError("; ".join(errors), code="generator_config")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["missing_rates"] = dict(self.missing_rates)
        return data


@dataclass(frozen=True)
class NoiseConfig:
    char_sub_rate: float = 0.03
    char_del_rate: float = 0.01
    word_shuffle_prob: float = 0.15
    field_drop_prob: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_FIELD_DROP))
    outdated_prob: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "field_drop_prob", MappingProxyType(dict(self.field_drop_prob)))
        errors: list[str] = []
        for name in ("char_sub_rate", "char_del_rate", "word_shuffle_prob", "outdated_prob"):
            _check_rate(errors, name, getattr(self, name))
        if self.char_sub_rate + self.char_del_rate > 1.0:
            errors.append("char_sub_rate + char_del_rate debe ser ≤ 1")
        for name, rate in self.field_drop_prob.items():
            if name not in QUERY_FIELDS:
                errors.append(f"field_drop_prob: campo desconocido {name!r}")
            _check_rate(errors, f"field_drop_prob.{name}", rate)
        if errors:
            raise ValidationError("; ".join(errors), code="noise_config")

    @classmethod
    def zero(cls) -> "NoiseConfig":
        return cls(0.0, 0.0, 0.0, {}, 0.0)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["field_drop_prob"] = dict(self.field_drop_prob)
        return data


@dataclass
class Benchmark:
    """
    Invariantes:
        - todo gold apunta a una entrada existente.
        - train_ids y test_ids son disjuntos y cubren todas las consultas.
    """
    entries: list[Record]
    queries: list[Record]
    gold: dict[str, str]
    train_ids: frozenset[str]
    test_ids: frozenset[str]
    gold_sets: dict[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self):
        entry_ids = {e.id for e in self.entries}
        dangling = [q for q, e in self.gold.items() if e not in entry_ids]
        if dangling:
            raise ValidationError(f"Gold sin entrada: {dangling[:5]}.", code="gold")
        if self.train_ids & self.test_ids:
            raise ValidationError("Las particiones train/test se solapan.", code="split")
        if not self.gold_sets:
            self.gold_sets = _duplicate_gold_sets(self.entries, self.gold)

    @property
    def associations(self) -> list[Association]:
        return [Association(q.id, self.gold[q.id]) for q in self.queries]

    @property
    def train_associations(self) -> list[Association]:
        return [a for a in self.associations if a.query_id in self.train_ids]

    @property
    def train_queries(self) -> list[Record]:
        return [q for q in self.queries if q.id in self.train_ids]

    @property
    def test_queries(self) -> list[Record]:
        return [q for q in self.queries if q.id in self.test_ids]

    def accepted(self, query_id: str) -> frozenset[str]:
        """Ids que cuentan como acierto deduplicado (el gold y sus duplicados exactos)."""
        return self.gold_sets.get(query_id, frozenset({self.gold[query_id]}))


def _duplicate_gold_sets(entries: list[Record], gold: dict[str, str]) -> dict[str, frozenset[str]]:
    by_values: dict[tuple, set[str]] = {}
    key_of: dict[str, tuple] = {}
    for e in entries:
        key = tuple(sorted((k, v) for k, v in e.values.items() if v is not None))
        by_values.setdefault(key, set()).add(e.id)
        key_of[e.id] = key
    return {q: frozenset(by_values[key_of[e]]) for q, e in gold.items()}


@dataclass(frozen=True)
class Metrics:
    """
    top1_acc, topk_acc y mrr cuentan solo el id gold. top1_acc_dedup acepta
    además los duplicados exactos del gold (entradas con los mismos valores).
    """
    n: int
    top1_acc: float
    topk_acc: Mapping[int, float]
    mrr: float
    top1_acc_dedup: float
    failures: int = 0

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "top1_acc": self.top1_acc,
            "top1_acc_dedup": self.top1_acc_dedup,
            "topk_acc": {str(k): v for k, v in sorted(self.topk_acc.items())},
            "mrr": self.mrr,
            "failures": self.failures,
        }
