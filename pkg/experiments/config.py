# experiments/config.py
"""
Configuración efectiva de una corrida.

Propósito:
    Resolver settings.GROUNDING ← archivo --config ← flags (los flags ganan),
    validar cada sección con su Form (experiments/forms.py) y construir los
    tipos de dominio que consumen los servicios.

Diseño:
    - Las secciones desconocidas o las claves desconocidas dentro de una
      sección son errores (un typo no debe pasar desapercibido).
    - RunConfig.raw conserva el dict efectivo (JSON puro): es lo que se guarda
      en ExperimentRun.config y lo que reciben los workers de la grilla.
    - La cascada del baseline se construye bajo demanda: un comando que no usa
      el baseline no exige que los esquemas tengan los campos estándar.

Errores:
    - ValidationError(code="config") con todas las claves inválidas.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from django.conf import settings
from django.core.exceptions import ValidationError

from baseline.domain import RuleStage
from baseline.services import rules_from_config
from records.domain import Schema, Side
from synthbench.domain import ENTRY_FIELDS, GeneratorConfig, NoiseConfig
from training.domain import TrainConfig

from .forms import SECTION_FORMS


@dataclass(frozen=True)
class RunConfig:
    """
    Campos:
        raw (dict): configuración efectiva, ya validada.
        query_schema / entry_schema (Schema): campos que serializa cada torre.
        train (TrainConfig): incluye la sección encoder.
        generator (GeneratorConfig) / noise (NoiseConfig)
        n_queries (int) / test_fraction (float): tamaño y partición del benchmark.
        ks (tuple[int, ...]): k reportados en la evaluación (incluye 1).
        paths (dict[str, Path]): data, checkpoints, index, reports.
    """
    raw: dict
    query_schema: Schema
    entry_schema: Schema
    train: TrainConfig
    generator: GeneratorConfig
    noise: NoiseConfig
    n_queries: int
    test_fraction: float
    ks: tuple[int, ...]
    paths: dict[str, Path]

    @property
    def entry_record_schema(self) -> Schema:
        """Campos de los registros de entradas: los del generador más los de la torre."""
        extra = [n for n in self.entry_schema.names if n not in ENTRY_FIELDS]
        return Schema.of(Side.ENTRY, [*ENTRY_FIELDS, *extra])

    def baseline_rules(self) -> list[RuleStage]:
        return rules_from_config(self.raw["baseline"]["rules"], self.query_schema, self.entry_record_schema)


# ─────────────────────────────────────────────────────────────────────────────
# Fusión de capas
# ─────────────────────────────────────────────────────────────────────────────
def merge_layers(base: dict, *layers: dict | None) -> dict:
    """
    Aplica cada capa sobre `base` sección por sección (clave a clave).

    Raises:
        ValidationError: sección o clave desconocida (code="config").
    """
    merged = copy.deepcopy(base)
    problems = []
    for layer in layers:
        if not layer:
            continue
        if not isinstance(layer, dict):
            raise ValidationError("La configuración debe ser un objeto JSON.", code="config")
        for section, values in layer.items():
            if section not in merged:
                problems.append(f"sección desconocida {section!r}")
                continue
            if not isinstance(values, dict):
                problems.append(f"{section}: se esperaba un objeto")
                continue
            unknown = sorted(set(values) - set(merged[section]))
            problems.extend(f"{section}.{key}: clave desconocida" for key in unknown)
            merged[section].update({k: copy.deepcopy(v) for k, v in values.items() if k not in unknown})
    if problems:
        raise ValidationError("; ".join(problems), code="config")
    return merged


def _validated_sections(raw: dict) -> dict[str, dict]:
    cleaned, problems = {}, []
    for section, form_class in SECTION_FORMS.items():
        form = form_class(data=raw.get(section, {}))
        if form.is_valid():
            cleaned[section] = form.cleaned_data
            continue
        for key, messages in form.errors.items():
            label = section if key == "__all__" else f"{section}.{key}"
            problems.append(f"{label}: {' '.join(messages)}")
    if problems:
        raise ValidationError("; ".join(problems), code="config")
    return cleaned


# ─────────────────────────────────────────────────────────────────────────────
# Construcción
# ─────────────────────────────────────────────────────────────────────────────
def build_run_config(raw: dict) -> RunConfig:
    """
    Construye el RunConfig desde un dict completo (todas las secciones).

    Raises:
        ValidationError(code="config"): sección inválida o valores que los
            tipos de dominio rechazan (campos fuera de los esquemas, etc.).
    """
    sections = _validated_sections(raw)
    noise = dict(sections["noise"])
    n_queries = noise.pop("n_queries")
    test_fraction = noise.pop("test_fraction")
    try:
        query_schema = Schema.of(Side.QUERY, sections["schemas"]["query"])
        entry_schema = Schema.of(Side.ENTRY, sections["schemas"]["entry"])
        train = TrainConfig(**sections["train"], encoder=dict(sections["encoder"]))
        generator = GeneratorConfig(**sections["generator"])
        noise_config = NoiseConfig(**noise)
    except ValidationError as exc:
        raise ValidationError("; ".join(exc.messages), code="config") from exc

    outside = [f"noise.field_drop_prob.{n}" for n in noise_config.field_drop_prob if n not in query_schema]
    record_fields = set(ENTRY_FIELDS) | set(entry_schema.names)
    outside += [f"generator.missing_rates.{n}" for n in generator.missing_rates if n not in record_fields]
    if outside:
        raise ValidationError(f"Campos fuera de los esquemas: {', '.join(outside)}.", code="config")

    effective = copy.deepcopy(raw)
    effective["eval"]["ks"] = sections["eval"]["ks"]
    return RunConfig(
        raw=effective,
        query_schema=query_schema,
        entry_schema=entry_schema,
        train=train,
        generator=generator,
        noise=noise_config,
        n_queries=n_queries,
        test_fraction=test_fraction,
        ks=tuple(sorted(set(sections["eval"]["ks"]) | {1})),
        paths={name: Path(value) for name, value in sections["paths"].items()},
    )


def read_config_file(path: str | Path) -> dict:
    """
    Raises:
        OSError: el archivo no se puede leer.
        ValidationError(code="config"): JSON inválido.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: JSON inválido ({exc}).", code="config") from exc


def load_run_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """settings.GROUNDING ← archivo ← overrides (flags)."""
    layers = [read_config_file(path) if path else None, overrides]
    return build_run_config(merge_layers(settings.GROUNDING, *layers))


def seed_overrides(seed: int | None) -> dict:
    """--seed N fija la semilla del entrenamiento y la del generador."""
    if seed is None:
        return {}
    return {"train": {"seed": seed}, "generator": {"seed": seed}}
