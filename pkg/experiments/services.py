# experiments/services.py
"""
Servicios de la app 'experiments'.

Propósito:
    Orquestar los componentes (benchmark, entrenamiento, índice, baseline,
    evaluación) para los comandos de manage.py y persistir sus reportes.

Responsabilidades:
    - Benchmark: generar / leer desde el directorio de datos.
    - Modelo: entrenar sobre la partición train, indexar y evaluar.
    - Baseline: evaluar la cascada de reglas con historial de visitas.
    - Grilla de módulos (variant × sim × sep × mask = 24 combinaciones) con
      media, desvío y marginales por eje.
    - Ablación de campos válidos (4 conjuntos anidados).
    - Barrido de ruido (char_sub_rate) para baseline y modelo.
    - Reportes: JSON + TSV en disco y, opcionalmente, ExperimentRun en la BD.

Notas:
    - Cada combinación de la grilla usa una semilla propia
      seed XOR crc32(etiqueta), de modo que ejecutarla en paralelo o en serie da
      exactamente el mismo resultado.
    - Un fallo en una combinación marca la fila como fallida; la grilla sigue.
"""
from __future__ import annotations

import itertools
import json
import logging
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from django.core.exceptions import ValidationError
from django.db import transaction

from baseline.domain import VisitHistory
from baseline.services import MatchIndex, history_from_associations, rule_match
from encoder.domain import Variant
from records.domain import Record, Schema
from retrieval.domain import IndexSnapshot
from retrieval.services import build_index, ground
from scoring.services import SimKind
from serialization.domain import MaskMode, SepMode
from synthbench.domain import Benchmark, Metrics
from synthbench.services import BENCHMARK_FILES, evaluate, make_benchmark, read_benchmark, write_benchmark
from training.checkpoints import save_checkpoint
from training.domain import Checkpoint, TrainConfig
from training.services import train

from .config import RunConfig
from .models import ExperimentRow, ExperimentRun

logger = logging.getLogger(__name__)


# ─────────────────────────────────────────────────────────────────────────────
# Benchmark
# ─────────────────────────────────────────────────────────────────────────────
def generate_benchmark(run: RunConfig) -> Benchmark:
    return make_benchmark(run.generator, run.noise, run.n_queries, run.test_fraction)


def load_benchmark(directory: str | Path) -> Benchmark:
    """
    Raises:
        ValidationError: faltan archivos del benchmark (code="no_data").
    """
    directory = Path(directory)
    missing = [name for name in BENCHMARK_FILES if not (directory / name).is_file()]
    if missing:
        raise ValidationError(
            f"Faltan {', '.join(missing)} en {directory}; ejecute gen_data primero.", code="no_data"
        )
    return read_benchmark(directory)


def ensure_benchmark(run: RunConfig, directory: str | Path) -> Path:
    """Genera y escribe el benchmark en `directory` si todavía no existe."""
    directory = Path(directory)
    if not all((directory / name).is_file() for name in BENCHMARK_FILES):
        write_benchmark(generate_benchmark(run), directory)
    return directory


def project(records: Iterable[Record], schema: Schema) -> list[Record]:
    """Conserva solo los campos del esquema (los demás se consideran no válidos)."""
    return [Record(r.id, {n: r.get(n) for n in schema.names if r.get(n) is not None}) for r in records]


# ─────────────────────────────────────────────────────────────────────────────
# Modelo
# ─────────────────────────────────────────────────────────────────────────────
def train_model(
    run: RunConfig,
    benchmark: Benchmark,
    *,
    train_config: TrainConfig | None = None,
    query_schema: Schema | None = None,
    entry_schema: Schema | None = None,
    resume: Checkpoint | None = None,
    on_step: Callable[[int, float], None] | None = None,
) -> Checkpoint:
    """Entrena sobre las asociaciones de la partición train."""
    query_schema = query_schema or run.query_schema
    entry_schema = entry_schema or run.entry_schema
    return train(
        train_config or run.train,
        project(benchmark.train_queries, query_schema),
        project(benchmark.entries, entry_schema),
        benchmark.train_associations,
        query_schema=query_schema,
        entry_schema=entry_schema,
        resume=resume,
        on_step=on_step,
    )


def evaluate_checkpoint(
    checkpoint: Checkpoint,
    benchmark: Benchmark,
    ks: Sequence[int] = (1,),
    snapshot: IndexSnapshot | None = None,
) -> Metrics:
    """Indexa las entradas (si no se pasa un índice) y evalúa ground sobre test."""
    if snapshot is None:
        snapshot = build_index(checkpoint, project(benchmark.entries, checkpoint.entry_schema))
    k = max(ks)
    queries = project(benchmark.test_queries, checkpoint.query_schema)
    return evaluate(lambda q: ground(checkpoint, snapshot, q, k), benchmark, ks, queries=queries)


# ─────────────────────────────────────────────────────────────────────────────
# Baseline
# ─────────────────────────────────────────────────────────────────────────────
def evaluate_rules(
    run: RunConfig,
    benchmark: Benchmark,
    history: VisitHistory | None = None,
    ks: Sequence[int] | None = None,
) -> Metrics:
    """
    Evalúa la cascada de reglas sobre la partición test.

    Sin historial explícito se usa una visita por asociación de entrenamiento.
    """
    stages = run.baseline_rules()
    entries = project(benchmark.entries, run.entry_record_schema)
    index = MatchIndex(entries, stages)
    history = history or history_from_associations(benchmark.train_associations)
    queries = project(benchmark.test_queries, run.query_schema)
    return evaluate(
        lambda q: rule_match(q, entries, stages, history, index), benchmark, ks or run.ks, queries=queries
    )


# ─────────────────────────────────────────────────────────────────────────────
# Grilla de módulos
# ─────────────────────────────────────────────────────────────────────────────
GRID_AXES: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("variant", tuple(Variant.values)),
    ("sim", tuple(SimKind.values)),
    ("sep", tuple(SepMode.values)),
    ("mask", tuple(MaskMode.values)),
)


@dataclass(frozen=True)
class Combination:
    variant: str
    sim: str
    sep: str
    mask: str

    @property
    def label(self) -> str:
        return f"{self.variant}/{self.sim}/{self.sep}/{self.mask}"


def grid_combinations() -> list[Combination]:
    return [Combination(*values) for values in itertools.product(*(values for _, values in GRID_AXES))]


def job_seed(seed: int, label: str) -> int:
    return seed ^ zlib.crc32(label.encode("utf-8"))


def combination_config(base: TrainConfig, combo: Combination, seed: int) -> TrainConfig:
    return replace(
        base,
        seed=job_seed(seed, combo.label),
        sim=combo.sim,
        sep=combo.sep,
        mask=combo.mask,
        encoder=replace(base.encoder, variant=combo.variant),
    )


@dataclass
class GridRow:
    combination: Combination
    accuracies: list[float] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    @property
    def runs(self) -> int:
        return len(self.accuracies)

    @property
    def failed(self) -> bool:
        return bool(self.errors)

    @property
    def mean(self) -> float | None:
        return float(np.mean(self.accuracies)) if self.accuracies else None

    @property
    def std(self) -> float | None:
        return float(np.std(self.accuracies)) if self.accuracies else None

    def to_dict(self) -> dict:
        return {
            "label": self.combination.label,
            "variant": self.combination.variant,
            "sim": self.combination.sim,
            "sep": self.combination.sep,
            "mask": self.combination.mask,
            "accuracy": self.mean,
            "stddev": self.std,
            "runs": self.runs,
            "failed": self.failed,
            "errors": list(self.errors),
        }


@dataclass
class GridReport:
    """
    Invariantes:
        - una fila por combinación, en el orden de grid_combinations().
        - accuracy ∈ [0, 1] y stddev ≥ 0 en las filas con corridas.
    """
    seeds: tuple[int, ...]
    rows: list[GridRow]

    def marginals(self) -> list[dict]:
        """Media de las medias por valor de cada eje (2 + 2 + 2 + 3 = 9 filas)."""
        out = []
        for axis, values in GRID_AXES:
            for value in values:
                means = [
                    row.mean for row in self.rows
                    if getattr(row.combination, axis) == value and row.mean is not None
                ]
                out.append({
                    "axis": axis,
                    "value": value,
                    "accuracy": float(np.mean(means)) if means else None,
                    "rows": len(means),
                })
        return out

    def to_dict(self) -> dict:
        return {
            "seeds": list(self.seeds),
            "rows": [row.to_dict() for row in self.rows],
            "marginals": self.marginals(),
        }

    def to_tsv(self) -> str:
        lines = ["variant\tsim\tsep\tmask\tmean_acc\tstddev\truns\tfailed"]
        for row in self.rows:
            c = row.combination
            lines.append("\t".join([
                c.variant, c.sim, c.sep, c.mask, _fmt(row.mean), _fmt(row.std), str(row.runs),
                "1" if row.failed else "0",
            ]))
        lines.append("")
        lines.append("axis\tvalue\tmean_acc")
        lines.extend(f"{m['axis']}\t{m['value']}\t{_fmt(m['accuracy'])}" for m in self.marginals())
        return "\n".join(lines) + "\n"


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


def _run_combination(
    base: TrainConfig,
    query_schema: Schema,
    entry_schema: Schema,
    benchmark: Benchmark,
    combo: Combination,
    seed: int,
) -> tuple[float | None, str]:
    """(exactitud top-1, "") o (None, mensaje) si la corrida falla."""
    config = combination_config(base, combo, seed)
    try:
        checkpoint = train(
            config,
            project(benchmark.train_queries, query_schema),
            project(benchmark.entries, entry_schema),
            benchmark.train_associations,
            query_schema=query_schema,
            entry_schema=entry_schema,
        )
        return evaluate_checkpoint(checkpoint, benchmark, ks=(1,)).top1_acc, ""
    except Exception as exc:  # noqa: BLE001 - la fila se marca como fallida y la grilla sigue
        return None, f"{type(exc).__name__}: {exc}"


@lru_cache(maxsize=4)
def _cached_benchmark(directory: str) -> Benchmark:
    return load_benchmark(directory)


def _init_worker() -> None:
    import django

    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "grounding.settings")
    django.setup()


def _grid_job(base, query_schema, entry_schema, data_dir: str, combo: Combination, seed: int):
    return _run_combination(base, query_schema, entry_schema, _cached_benchmark(data_dir), combo, seed)


def run_grid(
    run: RunConfig,
    data_dir: str | Path,
    seeds: Sequence[int],
    *,
    parallel: int = 1,
    combinations: Sequence[Combination] | None = None,
) -> GridReport:
    """
    Entrena y evalúa cada combinación con cada semilla.

    Args:
        data_dir: directorio del benchmark (los workers lo leen por su cuenta).
        parallel: procesos; 1 ejecuta en serie.
        combinations: subconjunto explícito (por defecto las 24).

    Raises:
        ValidationError: seeds vacío (code="seeds") o parallel < 1 (code="parallel").
    """
    if not seeds:
        raise ValidationError("Se requiere al menos una semilla.", code="seeds")
    if parallel < 1:
        raise ValidationError("parallel debe ser ≥ 1.", code="parallel")
    combos = list(combinations) if combinations is not None else grid_combinations()
    jobs = [(combo, seed) for combo in combos for seed in seeds]
    data_dir = str(data_dir)
    logger.info("Grilla: %s combinaciones × %s semillas, %s proceso(s)", len(combos), len(seeds), parallel)

    if parallel == 1:
        benchmark = load_benchmark(data_dir)
        results = []
        for i, (combo, seed) in enumerate(jobs, start=1):
            results.append(_run_combination(run.train, run.query_schema, run.entry_schema, benchmark, combo, seed))
            logger.info("[%s/%s] %s seed=%s → %s", i, len(jobs), combo.label, seed, results[-1][0])
    else:
        with ProcessPoolExecutor(max_workers=parallel, initializer=_init_worker) as pool:
            futures = [
                pool.submit(_grid_job, run.train, run.query_schema, run.entry_schema, data_dir, combo, seed)
                for combo, seed in jobs
            ]
            results = [f.result() for f in futures]

    rows = {combo.label: GridRow(combo) for combo in combos}
    for (combo, seed), (accuracy, error) in zip(jobs, results):
        row = rows[combo.label]
        if accuracy is None:
            logger.warning("Combinación %s seed=%s falló: %s", combo.label, seed, error)
            row.errors.append(f"seed {seed}: {error}")
        else:
            row.accuracies.append(accuracy)
    return GridReport(tuple(seeds), [rows[c.label] for c in combos])


# ─────────────────────────────────────────────────────────────────────────────
# Ablación de campos válidos
# ─────────────────────────────────────────────────────────────────────────────
# (campo de consulta, campos de entrada que le corresponden); business_number
# solo existe del lado de la consulta.
ABLATION_STEPS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("name", ("name",)),
    ("address", ("address", "street")),
    ("phone", ("phone",)),
    ("business_number", ()),
)


def ablation_field_sets(query_schema: Schema, entry_schema: Schema) -> list[tuple[str, Schema, Schema]]:
    """
    Conjuntos anidados {name} ⊂ {name, address} ⊂ ... como pares de sub-esquemas.

    Raises:
        ValidationError: algún campo de la ablación falta en los esquemas (code="schema").
    """
    missing = [q for q, _ in ABLATION_STEPS if q not in query_schema]
    missing += [e for _, es in ABLATION_STEPS for e in es if e not in entry_schema]
    if missing:
        raise ValidationError(f"La ablación requiere los campos {missing}.", code="schema")
    sets, query_fields, entry_fields = [], [], []
    for query_field, entry_names in ABLATION_STEPS:
        query_fields.append(query_field)
        entry_fields.extend(entry_names)
        sets.append(("+".join(query_fields), query_schema.restrict(query_fields), entry_schema.restrict(entry_fields)))
    return sets


@dataclass(frozen=True)
class AblationRow:
    label: str
    query_fields: tuple[str, ...]
    entry_fields: tuple[str, ...]
    checkpoint: Path
    metrics: Metrics

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "query_fields": list(self.query_fields),
            "entry_fields": list(self.entry_fields),
            "checkpoint": str(self.checkpoint),
            "accuracy": self.metrics.top1_acc,
            "metrics": self.metrics.to_dict(),
        }


def ablate_fields(run: RunConfig, benchmark: Benchmark, checkpoint_dir: str | Path) -> list[AblationRow]:
    """Entrena y evalúa un modelo por conjunto de campos; guarda cada checkpoint."""
    checkpoint_dir = Path(checkpoint_dir)
    rows = []
    for i, (label, query_schema, entry_schema) in enumerate(
        ablation_field_sets(run.query_schema, run.entry_schema), start=1
    ):
        logger.info("Ablación %s/4: %s", i, label)
        checkpoint = train_model(run, benchmark, query_schema=query_schema, entry_schema=entry_schema)
        path = save_checkpoint(checkpoint, checkpoint_dir / f"fields_{i}.gckpt")
        metrics = evaluate_checkpoint(checkpoint, benchmark, run.ks)
        rows.append(AblationRow(label, query_schema.names, entry_schema.names, path, metrics))
    return rows


# ─────────────────────────────────────────────────────────────────────────────
# Barrido de ruido
# ─────────────────────────────────────────────────────────────────────────────
@dataclass
class SweepRow:
    rate: float
    baseline: list[float] = field(default_factory=list)
    model: list[float] = field(default_factory=list)

    @property
    def baseline_mean(self) -> float:
        return float(np.mean(self.baseline))

    @property
    def model_mean(self) -> float | None:
        return float(np.mean(self.model)) if self.model else None


def sweep_noise(
    run: RunConfig,
    rates: Sequence[float],
    seeds: Sequence[int],
    *,
    with_model: bool = True,
) -> list[SweepRow]:
    """
    Mismo generador y ruido salvo char_sub_rate; una base por semilla.

    Raises:
        ValidationError: rates o seeds vacíos (code="sweep") o una tasa que
            NoiseConfig rechaza.
    """
    if not rates or not seeds:
        raise ValidationError("Se requieren tasas y semillas.", code="sweep")
    rows = []
    for rate in sorted(rates):
        row = SweepRow(float(rate))
        noise = replace(run.noise, char_sub_rate=float(rate))
        for seed in seeds:
            benchmark = make_benchmark(
                replace(run.generator, seed=seed), noise, run.n_queries, run.test_fraction
            )
            row.baseline.append(evaluate_rules(run, benchmark, ks=(1,)).top1_acc)
            if with_model:
                checkpoint = train_model(run, benchmark, train_config=replace(run.train, seed=seed))
                row.model.append(evaluate_checkpoint(checkpoint, benchmark).top1_acc)
        logger.info("Ruido %.3f: baseline=%.4f modelo=%s", row.rate, row.baseline_mean, row.model_mean)
        rows.append(row)
    return rows


def sweep_report(rows: Sequence[SweepRow]) -> list[dict]:
    """Exactitud por tasa y caída respecto de la menor tasa (0 si se incluyó)."""
    reference = rows[0]
    out = []
    for row in rows:
        model_drop = None
        if row.model_mean is not None and reference.model_mean is not None:
            model_drop = reference.model_mean - row.model_mean
        out.append({
            "label": f"char_sub_rate={row.rate:g}",
            "rate": row.rate,
            "baseline_accuracy": row.baseline_mean,
            "baseline_drop": reference.baseline_mean - row.baseline_mean,
            "model_accuracy": row.model_mean,
            "model_drop": model_drop,
            "runs": len(row.baseline),
        })
    return out


# ─────────────────────────────────────────────────────────────────────────────
# Reportes
# ─────────────────────────────────────────────────────────────────────────────
def rows_to_tsv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    lines = ["\t".join(columns)]
    for row in rows:
        cells = []
        for column in columns:
            value = row.get(column)
            cells.append(_fmt(value) if isinstance(value, float) else "" if value is None else str(value))
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def write_report(payload: dict, tsv: str, out: str | Path) -> tuple[Path, Path]:
    """Escribe <out>.json y <out>.tsv (se crea el directorio)."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    json_path, tsv_path = out.with_suffix(".json"), out.with_suffix(".tsv")
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    tsv_path.write_text(tsv, encoding="utf-8")
    logger.info("Reporte escrito en %s y %s", json_path, tsv_path)
    return json_path, tsv_path


_ROW_FIELDS = ("label", "variant", "sim", "sep", "mask", "accuracy", "stddev", "runs", "failed")


@transaction.atomic
def record_report(kind: str, label: str, config: dict, summary: dict, rows: Sequence[dict]) -> ExperimentRun:
    """
    Persiste un reporte como ExperimentRun + ExperimentRow (una transacción).

    Las claves de cada fila que no son columnas del modelo van a `extra`.
    """
    run = ExperimentRun.objects.create(kind=kind, label=label[:200], config=config, summary=summary)
    objects = []
    for position, row in enumerate(rows):
        values = {k: row[k] for k in _ROW_FIELDS if row.get(k) is not None}
        values.setdefault("label", str(position))
        extra = {k: v for k, v in row.items() if k not in _ROW_FIELDS}
        objects.append(ExperimentRow(run=run, position=position, extra=extra, **values))
    ExperimentRow.objects.bulk_create(objects)
    logger.info("Reporte %s #%s guardado con %s filas", kind, run.pk, len(objects))
    return run
