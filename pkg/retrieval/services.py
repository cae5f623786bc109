# retrieval/services.py
"""
Servicios de la app 'retrieval': construcción del índice, búsqueda exacta y
resolución de consultas de punta a punta.

Diseño:
    - Búsqueda exhaustiva (full scan): a escala de escritorio (≤100k entradas)
      es a la vez el oráculo y el producto.
    - Orden total: score descendente y, ante empate, id ascendente.
"""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from django.core.exceptions import ValidationError

from encoder.services import encode
from records.domain import Record
from scoring.services import SimKind
from serialization.services import serialize
from training.domain import Checkpoint

from .domain import IndexSnapshot, QueryResult

logger = logging.getLogger(__name__)


def build_index(
    checkpoint: Checkpoint,
    entries: Sequence[Record],
    sim: SimKind | str | None = None,
) -> IndexSnapshot:
    """
    Embebe todas las entradas con la torre de entradas.

    Args:
        sim: similitud del índice; por defecto la del entrenamiento.

    Raises:
        ValidationError: sin entradas (code="empty_index"), entrada fuera del
            esquema (code="schema") o fallo de encode.
    """
    if not entries:
        raise ValidationError("No hay entradas para indexar.", code="empty_index")
    config = checkpoint.config
    schema = checkpoint.entry_schema
    vocab = checkpoint.vocab
    params = checkpoint.entry_params
    rows = np.empty((len(entries), params.config.out_dim), dtype=np.float32)
    for j, record in enumerate(entries):
        if not record.conforms_to(schema):
            raise ValidationError(
                f"La entrada {record.id!r} tiene campos fuera del esquema {schema.names}.", code="schema"
            )
        seq = serialize(record, schema, config.sep, config.mask, vocab, max_len=params.config.max_len)
        rows[j] = encode(params, params.config, seq)
    snapshot = IndexSnapshot(sim or config.sim, tuple(r.id for r in entries), rows)
    logger.info("Índice construido: %s entradas, K=%s, sim=%s", snapshot.size, snapshot.dim, snapshot.sim)
    return snapshot


def all_scores(snapshot: IndexSnapshot, query_vec) -> np.ndarray:
    """Score de query_vec contra cada fila del índice (float64)."""
    q = np.asarray(query_vec, dtype=np.float64)
    if q.shape != (snapshot.dim,):
        raise ValidationError(
            f"Vector de consulta {q.shape}, el índice tiene K={snapshot.dim}.", code="dimension_mismatch"
        )
    m = snapshot.matrix.astype(np.float64)
    if snapshot.sim == SimKind.IPS:
        return m @ q
    diff = m - q
    return -np.einsum("ij,ij->i", diff, diff)


def search(snapshot: IndexSnapshot, query_vec, k: int) -> QueryResult:
    """
    Top-k exacto por similitud.

    Raises:
        ValidationError: k < 1 (code="k") o dimensiones distintas.
    """
    if k < 1:
        raise ValidationError("k debe ser ≥ 1.", code="k")
    scores = all_scores(snapshot, query_vec)
    order = np.lexsort((snapshot.id_rank, -scores))[: min(k, snapshot.size)]
    return QueryResult(tuple((snapshot.ids[j], float(scores[j])) for j in order))


def ground(checkpoint: Checkpoint, snapshot: IndexSnapshot, query_record: Record, k: int) -> QueryResult:
    """
    Serializa la consulta con (sep, mask) del checkpoint, la codifica con la
    torre de consultas y busca en el índice.
    """
    schema = checkpoint.query_schema
    if not query_record.conforms_to(schema):
        raise ValidationError(
            f"La consulta {query_record.id!r} tiene campos fuera del esquema {schema.names}.", code="schema"
        )
    params = checkpoint.query_params
    config = checkpoint.config
    seq = serialize(query_record, schema, config.sep, config.mask, checkpoint.vocab, max_len=params.config.max_len)
    return search(snapshot, encode(params, params.config, seq), k)
