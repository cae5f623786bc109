# scoring/services.py
"""
Servicios de la app 'scoring': similitud, matriz de scores y pérdida in-batch.

Propósito:
    Puntuar pares (consulta, entrada) en el espacio de embeddings y definir el
    objetivo de entrenamiento con negativos dentro del batch.

Definiciones:
    - IPS: s(a, b) = Σ a_k b_k
    - NSD: s(a, b) = −Σ (a_k − b_k)²
    - Pérdida: −(1/Σw) Σ_i w_i · log softmax(fila i)_i
      (la entrada i del batch es el positivo de la consulta i; el resto de
      entradas del batch son sus negativos).

Notas:
    - El softmax se calcula siempre con el corrimiento por el máximo (log-sum-exp);
      los scores IPS no están acotados.
    - Funciones puras; seguras para uso concurrente.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from django.core.exceptions import ValidationError
from django.db import models


class SimKind(models.TextChoices):
    IPS = "ips", "Inner product"
    NSD = "nsd", "Negative squared distance"


@dataclass(frozen=True)
class ScoreMatrix:
    """
    Scores B×B de un batch: values[i, j] = s(query_i, entry_j).

    Invariantes:
        - matriz cuadrada con B ≥ 2 y todos los valores finitos.
    """
    kind: SimKind
    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValidationError(f"ScoreMatrix debe ser cuadrada, forma {v.shape}.", code="dimension_mismatch")
        if v.shape[0] < 2:
            raise ValidationError("Se requieren al menos 2 pares por batch.", code="batch_too_small")
        if not np.isfinite(v).all():
            raise ValidationError("La matriz de scores contiene valores no finitos.", code="nonfinite")

    @property
    def size(self) -> int:
        return self.values.shape[0]


# ─────────────────────────────────────────────────────────────────────────────
# Similitud
# ─────────────────────────────────────────────────────────────────────────────
def _as_vector(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def similarity(kind: SimKind | str, a, b) -> float:
    """
    Similitud entre dos embeddings.

    Raises:
        ValidationError: dimensiones distintas (code="dimension_mismatch").
    """
    a, b = _as_vector(a), _as_vector(b)
    if a.shape != b.shape:
        raise ValidationError(f"Dimensiones distintas: {a.shape} vs {b.shape}.", code="dimension_mismatch")
    if SimKind(kind) == SimKind.IPS:
        return float(a @ b)
    d = a - b
    return float(-(d @ d))


def _stack(vectors: Sequence[np.ndarray]) -> np.ndarray:
    if isinstance(vectors, np.ndarray):
        return vectors.astype(np.float64, copy=False)
    return np.stack([_as_vector(v) for v in vectors]) if len(vectors) else np.zeros((0, 0))


def score_matrix(kind: SimKind | str, queries, entries) -> ScoreMatrix:
    """
    Matriz B×B con values[i, j] = similarity(kind, queries[i], entries[j]).

    Raises:
        ValidationError: B < 2 (code="batch_too_small") o dimensiones distintas.
    """
    kind = SimKind(kind)
    Q, E = _stack(queries), _stack(entries)
    if Q.shape[0] != E.shape[0]:
        raise ValidationError(
            f"Batch desbalanceado: {Q.shape[0]} consultas vs {E.shape[0]} entradas.",
            code="dimension_mismatch",
        )
    if Q.shape[0] < 2:
        raise ValidationError("Se requieren al menos 2 pares por batch.", code="batch_too_small")
    if Q.shape[1] != E.shape[1]:
        raise ValidationError(f"Dimensiones distintas: {Q.shape[1]} vs {E.shape[1]}.", code="dimension_mismatch")
    if kind == SimKind.IPS:
        values = Q @ E.T
    else:
        diff = Q[:, None, :] - E[None, :, :]
        values = -(diff * diff).sum(axis=-1)
    return ScoreMatrix(kind, values)


# ─────────────────────────────────────────────────────────────────────────────
# Pérdida in-batch
# ─────────────────────────────────────────────────────────────────────────────
def _weights(weights, size: int) -> np.ndarray:
    if weights is None:
        return np.ones(size)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (size,):
        raise ValidationError(f"Se esperaban {size} pesos, hay {w.shape}.", code="dimension_mismatch")
    if not (np.isfinite(w).all() and (w > 0).all()):
        raise ValidationError("Los pesos deben ser positivos y finitos.", code="weights")
    return w


def _values(scores: ScoreMatrix | np.ndarray) -> np.ndarray:
    if isinstance(scores, ScoreMatrix):
        return scores.values
    values = np.asarray(scores, dtype=np.float64)
    if not np.isfinite(values).all():
        raise ValidationError("La matriz de scores contiene valores no finitos.", code="nonfinite")
    return values


def log_softmax_rows(values: np.ndarray) -> np.ndarray:
    shifted = values - values.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_rows(values: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax_rows(values))


def inbatch_loss(scores: ScoreMatrix | np.ndarray, weights=None) -> float:
    """
    Pérdida softmax con negativos in-batch, ponderada por fila.

    Args:
        scores: ScoreMatrix (o matriz B×B ya validada).
        weights: B reales positivos; None equivale a pesos unitarios.

    Returns:
        float: valor ≥ 0.
    """
    values = _values(scores)
    w = _weights(weights, values.shape[0])
    diag = np.diagonal(log_softmax_rows(values))
    return float(-(w * diag).sum() / w.sum())


def loss_grad(scores: ScoreMatrix | np.ndarray, weights=None) -> np.ndarray:
    """
    ∂loss/∂s_ij = (w_i / Σw) · (softmax(fila i)_j − δ_ij). Cada fila suma 0.
    """
    values = _values(scores)
    w = _weights(weights, values.shape[0])
    grad = softmax_rows(values)
    grad[np.diag_indices_from(grad)] -= 1.0
    return grad * (w / w.sum())[:, None]


def embedding_grads(kind: SimKind | str, queries: np.ndarray, entries: np.ndarray, grad_scores: np.ndarray):
    """
    Propaga ∂loss/∂S a los embeddings de consulta y de entrada.

    Returns:
        tuple[np.ndarray, np.ndarray]: (dQ, dE), con las formas de queries y entries.
    """
    Q, E, G = _stack(queries), _stack(entries), np.asarray(grad_scores, dtype=np.float64)
    if SimKind(kind) == SimKind.IPS:
        return G @ E, G.T @ Q
    # s_ij = −|q_i|² + 2 q_i·e_j − |e_j|²
    dQ = 2.0 * (G @ E - G.sum(axis=1)[:, None] * Q)
    dE = 2.0 * (G.T @ Q - G.sum(axis=0)[:, None] * E)
    return dQ, dE
