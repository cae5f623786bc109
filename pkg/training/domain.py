# training/domain.py
"""
Tipos de la app 'training'.

Propósito:
    - TrainConfig: hiperparámetros de una corrida (batch, pasos, Adam, ejes de
      serialización, similitud, encoder, ponderación por fuerza de asociación).
    - Checkpoint: estado completo de entrenamiento (parámetros de ambas torres,
      momentos de Adam, paso y estado del generador aleatorio).

Notas:
    - Con share_towers=True, entry_params ES query_params (mismo objeto) y los
      momentos de Adam también se comparten.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np
from django.core.exceptions import ValidationError
from django.db import models

from encoder.domain import EncoderConfig, EncoderParams
from records.domain import Schema, Side
from scoring.services import SimKind
from serialization.domain import MaskMode, SepMode, Vocab
from serialization.services import build_vocab


class Weighting(models.TextChoices):
    SAMPLING = "sampling", "Muestreo proporcional a la fuerza"
    LOSS = "loss", "Pesos en la pérdida"
    BOTH = "both", "Muestreo y pesos"


@dataclass(frozen=True)
class TrainConfig:
    """
    Hiperparámetros de entrenamiento.

    Invariantes:
        - batch_size ≥ 2, steps ≥ 1, lr > 0, log_every ≥ 1.
        - 0 ≤ beta1, beta2 < 1; eps > 0.
    """
    batch_size: int = 32
    steps: int = 2000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    share_towers: bool = False
    sep: SepMode = SepMode.MULTI
    mask: MaskMode = MaskMode.MULTI
    sim: SimKind = SimKind.NSD
    weighting: Weighting = Weighting.SAMPLING
    log_every: int = 50
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def __post_init__(self):
        for name, enum in (("sep", SepMode), ("mask", MaskMode), ("sim", SimKind), ("weighting", Weighting)):
            object.__setattr__(self, name, enum(getattr(self, name)))
        if isinstance(self.encoder, dict):
            object.__setattr__(self, "encoder", EncoderConfig.from_dict(self.encoder))
        errors = []
        if self.batch_size < 2:
            errors.append("batch_size debe ser ≥ 2")
        if self.steps < 1:
            errors.append("steps debe ser ≥ 1")
        if not self.lr > 0:
            errors.append("lr debe ser > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            errors.append("beta1 y beta2 deben estar en [0, 1)")
        if not self.eps > 0:
            errors.append("eps debe ser > 0")
        if self.log_every < 1:
            errors.append("log_every debe ser ≥ 1")
        if self.seed < 0:
            errors.append("seed debe ser ≥ 0")
        if errors:
            raise ValidationError("; ".join(errors), code="train_config")

    def to_dict(self) -> dict:
        data = asdict(self)
        for name in ("sep", "mask", "sim", "weighting"):
            data[name] = str(getattr(self, name).value)
        data["encoder"] = self.encoder.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)

    def tower_configs(self, vocab_size: int) -> tuple[EncoderConfig, EncoderConfig]:
        """Configuración de cada torre; la de entradas usa seed + 1 salvo si se comparten."""
        query = replace(self.encoder, vocab_size=vocab_size, seed=self.seed)
        if self.share_towers:
            return query, query
        return query, replace(query, seed=self.seed + 1)


@dataclass
class Checkpoint:
    """
    Estado de entrenamiento.

    Campos:
        config (TrainConfig): snapshot de la configuración.
        query_schema / entry_schema (Schema): esquemas que fijan el vocabulario.
        query_params / entry_params (EncoderParams): torres (alias si se comparten).
        m_query / v_query / m_entry / v_entry (EncoderParams): momentos de Adam.
        step (int): pasos de optimización ya aplicados.
        rng_state (dict | None): estado de PCG64 tras el último batch muestreado.
    """
    config: TrainConfig
    query_schema: Schema
    entry_schema: Schema
    query_params: EncoderParams
    entry_params: EncoderParams
    m_query: EncoderParams
    v_query: EncoderParams
    m_entry: EncoderParams
    v_entry: EncoderParams
    step: int = 0
    rng_state: dict | None = None

    def __post_init__(self):
        if self.query_schema.side != Side.QUERY or self.entry_schema.side != Side.ENTRY:
            raise ValidationError("Esquemas con lado incorrecto.", code="schema")
        if self.query_params.config.vocab_size != self.vocab.size:
            raise ValidationError(
                f"vocab_size {self.query_params.config.vocab_size} ≠ {self.vocab.size} de los esquemas.",
                code="config_mismatch",
            )

    @property
    def shared(self) -> bool:
        return self.query_params is self.entry_params

    @property
    def vocab(self) -> Vocab:
        return build_vocab(self.query_schema, self.entry_schema)

    def towers(self) -> list[tuple[EncoderParams, EncoderParams, EncoderParams]]:
        """(params, m, v) de cada torre distinta."""
        towers = [(self.query_params, self.m_query, self.v_query)]
        if not self.shared:
            towers.append((self.entry_params, self.m_entry, self.v_entry))
        return towers

    def all_finite(self) -> bool:
        return self.query_params.all_finite() and self.entry_params.all_finite()


def new_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))
