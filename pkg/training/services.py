# training/services.py
"""
Servicios de la app 'training': muestreo de batches, paso de optimización y bucle.

Propósito:
    Aprender los parámetros de las dos torres maximizando la log-verosimilitud
    ponderada de los pares asociados, con negativos dentro del batch.

Flujo de un paso:
    1) serializar consultas (esquema de consultas) y entradas (esquema de entradas)
    2) codificar con cada torre → Q, E
    3) score_matrix → inbatch_loss → loss_grad → gradientes de Q y E
    4) backward por ambas torres (acumulando en orden fijo)
    5) una actualización de Adam con corrección de sesgo

Diseño:
    - Un batch nunca repite entry_id: un positivo duplicado sería a la vez el
      negativo de otra fila.
    - La fuerza de asociación entra por muestreo, por pesos de la pérdida o por
      ambos (TrainConfig.weighting); por defecto solo por muestreo.
    - Determinista: (config, datos, seed) fijan el checkpoint final bit a bit.
"""
from __future__ import annotations

import logging
import math
from typing import Callable, Sequence

import numpy as np
from django.core.exceptions import ValidationError

from encoder.domain import EncoderParams
from encoder.services import backward, encode_with_cache, init_params
from records.domain import Association, Record, Schema
from scoring.services import embedding_grads, inbatch_loss, loss_grad, score_matrix
from serialization.services import build_vocab, serialize

from .domain import Checkpoint, TrainConfig, Weighting, new_rng

logger = logging.getLogger(__name__)

# Pares (consulta, entrada, fuerza) ya resueltos a registros.
Batch = Sequence[tuple[Record, Record, float]]


# ─────────────────────────────────────────────────────────────────────────────
# Muestreo
# ─────────────────────────────────────────────────────────────────────────────
def sample_batch(
    associations: Sequence[Association],
    rng: np.random.Generator,
    batch_size: int,
    proportional: bool = True,
) -> list[Association]:
    """
    Extrae batch_size asociaciones con entry_id distintos.

    Cada extracción elige una asociación con probabilidad proporcional a su
    fuerza (uniforme si proportional=False); si su entrada ya está en el batch
    se descarta y se vuelve a extraer.

    Raises:
        ValidationError: no se logran batch_size entradas distintas tras
            100 · batch_size extracciones (code="duplicate_entries").
    """
    if batch_size < 1:
        raise ValidationError("batch_size debe ser ≥ 1.", code="batch_size")
    if not associations:
        raise ValidationError("No hay asociaciones para muestrear.", code="empty_data")
    if len({a.entry_id for a in associations}) < batch_size:
        raise ValidationError(
            f"Menos de {batch_size} entradas distintas disponibles.", code="duplicate_entries"
        )
    if proportional:
        weights = np.fromiter((a.strength for a in associations), dtype=np.float64, count=len(associations))
    else:
        weights = np.ones(len(associations))
    cumulative = np.cumsum(weights)
    total = cumulative[-1]

    batch: list[Association] = []
    seen: set[str] = set()
    for _ in range(100 * batch_size):
        idx = int(np.searchsorted(cumulative, rng.random() * total, side="right"))
        pick = associations[min(idx, len(associations) - 1)]
        if pick.entry_id in seen:
            continue
        seen.add(pick.entry_id)
        batch.append(pick)
        if len(batch) == batch_size:
            return batch
    raise ValidationError(
        f"No se pudo armar un batch de {batch_size} entradas distintas tras {100 * batch_size} extracciones.",
        code="duplicate_entries",
    )


# ─────────────────────────────────────────────────────────────────────────────
# Checkpoint inicial y Adam
# ─────────────────────────────────────────────────────────────────────────────
def new_checkpoint(config: TrainConfig, query_schema: Schema, entry_schema: Schema) -> Checkpoint:
    """Parámetros iniciales y momentos en cero (paso 0)."""
    vocab = build_vocab(query_schema, entry_schema)
    q_config, e_config = config.tower_configs(vocab.size)
    query_params = init_params(q_config)
    m_query, v_query = query_params.zeros_like(), query_params.zeros_like()
    if config.share_towers:
        entry_params, m_entry, v_entry = query_params, m_query, v_query
    else:
        entry_params = init_params(e_config)
        m_entry, v_entry = entry_params.zeros_like(), entry_params.zeros_like()
    return Checkpoint(
        config=config,
        query_schema=query_schema,
        entry_schema=entry_schema,
        query_params=query_params,
        entry_params=entry_params,
        m_query=m_query, v_query=v_query, m_entry=m_entry, v_entry=v_entry,
    )


def adam_update(
    params: EncoderParams,
    grads: EncoderParams,
    m: EncoderParams,
    v: EncoderParams,
    t: int,
    config: TrainConfig,
    lr: float,
) -> None:
    """Actualización de Adam en el lugar; t es el número de paso (1-based)."""
    b1, b2 = config.beta1, config.beta2
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    for name, g in grads.items():
        m_k, v_k = m[name], v[name]
        m_k *= b1
        m_k += (1.0 - b1) * g
        v_k *= b2
        v_k += (1.0 - b2) * (g * g)
        if lr:
            params[name] -= (lr * (m_k / c1) / (np.sqrt(v_k / c2) + config.eps)).astype(params[name].dtype)


# ─────────────────────────────────────────────────────────────────────────────
# Paso de entrenamiento
# ─────────────────────────────────────────────────────────────────────────────
def _encode_side(params: EncoderParams, records, schema: Schema, config: TrainConfig, vocab):
    seqs, outs, caches = [], [], []
    for record in records:
        seq = serialize(record, schema, config.sep, config.mask, vocab, max_len=params.config.max_len)
        y, cache = encode_with_cache(params, params.config, seq)
        seqs.append(seq)
        outs.append(y)
        caches.append(cache)
    return seqs, np.stack(outs).astype(np.float64), caches


def train_step(
    checkpoint: Checkpoint,
    batch: Batch,
    config: TrainConfig | None = None,
    *,
    lr: float | None = None,
) -> tuple[Checkpoint, float]:
    """
    Un paso de descenso sobre un batch; actualiza el checkpoint en el lugar.

    Args:
        checkpoint: estado a actualizar.
        batch: B tríos (consulta, entrada, fuerza).
        config: por defecto checkpoint.config.
        lr: reemplaza config.lr (0 → solo se actualizan los momentos).

    Returns:
        tuple[Checkpoint, float]: el checkpoint y la pérdida previa a la actualización.

    Raises:
        ValidationError: pérdida o parámetros no finitos (code="nonfinite_loss").
    """
    config = config or checkpoint.config
    lr = config.lr if lr is None else lr
    step = checkpoint.step + 1
    vocab = checkpoint.vocab
    qp, ep = checkpoint.query_params, checkpoint.entry_params

    q_seqs, Q, q_caches = _encode_side(qp, (q for q, _, _ in batch), checkpoint.query_schema, config, vocab)
    e_seqs, E, e_caches = _encode_side(ep, (e for _, e, _ in batch), checkpoint.entry_schema, config, vocab)

    weights = None
    if config.weighting in (Weighting.LOSS, Weighting.BOTH):
        weights = [strength for _, _, strength in batch]

    with np.errstate(over="ignore", invalid="ignore"):
        raw = Q @ E.T
    if not (np.isfinite(Q).all() and np.isfinite(E).all() and np.isfinite(raw).all()):
        _raise_nonfinite(step, raw)
    scores = score_matrix(config.sim, Q, E)
    loss = inbatch_loss(scores, weights)
    if not math.isfinite(loss):
        _raise_nonfinite(step, scores.values)

    dQ, dE = embedding_grads(config.sim, Q, E, loss_grad(scores, weights))
    q_grads = qp.zeros_like()
    e_grads = q_grads if checkpoint.shared else ep.zeros_like()
    for seq, cache, g in zip(q_seqs, q_caches, dQ):
        backward(qp, qp.config, seq, g, out=q_grads, cache=cache)
    for seq, cache, g in zip(e_seqs, e_caches, dE):
        backward(ep, ep.config, seq, g, out=e_grads, cache=cache)

    adam_update(qp, q_grads, checkpoint.m_query, checkpoint.v_query, step, config, lr)
    if not checkpoint.shared:
        adam_update(ep, e_grads, checkpoint.m_entry, checkpoint.v_entry, step, config, lr)
    if not checkpoint.all_finite():
        raise ValidationError(f"Parámetros no finitos tras el paso {step}.", code="nonfinite_loss")
    checkpoint.step = step
    return checkpoint, loss


def _raise_nonfinite(step: int, values: np.ndarray):
    finite = np.abs(values[np.isfinite(values)])
    peak = float(finite.max()) if finite.size else float("nan")
    raise ValidationError(
        f"Pérdida no finita en el paso {step} (max |score| finito = {peak:.4g}).",
        code="nonfinite_loss",
    )


# ─────────────────────────────────────────────────────────────────────────────
# Bucle
# ─────────────────────────────────────────────────────────────────────────────
def train(
    config: TrainConfig,
    queries: Sequence[Record],
    entries: Sequence[Record],
    associations: Sequence[Association],
    *,
    query_schema: Schema,
    entry_schema: Schema,
    resume: Checkpoint | None = None,
    on_step: Callable[[int, float], None] | None = None,
) -> Checkpoint:
    """
    Ejecuta config.steps pasos de sample_batch + train_step.

    Args:
        resume: si se indica, continúa desde ese checkpoint (numeración de pasos,
            momentos y estado del generador incluidos).
        on_step: callback (paso, pérdida) invocado tras cada paso.

    Raises:
        ValidationError: datos vacíos (code="empty_data"), asociaciones que
            referencian ids inexistentes (code="dangling") o errores de train_step.
    """
    if not (queries and entries and associations):
        raise ValidationError("Se requieren consultas, entradas y asociaciones.", code="empty_data")
    query_by_id = {r.id: r for r in queries}
    entry_by_id = {r.id: r for r in entries}
    dangling = [a for a in associations if a.query_id not in query_by_id or a.entry_id not in entry_by_id]
    if dangling:
        raise ValidationError(
            f"{len(dangling)} asociaciones referencian ids inexistentes.", code="dangling"
        )

    checkpoint = resume or new_checkpoint(config, query_schema, entry_schema)
    rng = new_rng(config.seed)
    if resume is not None and resume.rng_state is not None:
        rng.bit_generator.state = resume.rng_state

    proportional = config.weighting in (Weighting.SAMPLING, Weighting.BOTH)
    first = checkpoint.step
    logger.info(
        "Entrenando %s pasos (desde %s), B=%s, sim=%s, sep=%s, mask=%s, backbone=%s",
        config.steps, first, config.batch_size, config.sim, config.sep, config.mask, config.encoder.variant,
    )
    for _ in range(config.steps):
        picked = sample_batch(associations, rng, config.batch_size, proportional=proportional)
        batch = [(query_by_id[a.query_id], entry_by_id[a.entry_id], a.strength) for a in picked]
        checkpoint, loss = train_step(checkpoint, batch, config)
        if on_step is not None:
            on_step(checkpoint.step, loss)
        if checkpoint.step % config.log_every == 0:
            logger.info("paso=%s loss=%.6f", checkpoint.step, loss)
    checkpoint.rng_state = rng.bit_generator.state
    return checkpoint
