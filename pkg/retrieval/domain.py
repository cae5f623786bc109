# retrieval/domain.py
"""
Tipos de la app 'retrieval'.

    - IndexSnapshot: embeddings de toda la base (una fila por entrada) más la
      similitud con la que se consultan. Inmutable una vez construido.
    - QueryResult: hits ordenados por score descendente; empates por id ascendente.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from django.core.exceptions import ValidationError

from scoring.services import SimKind


@dataclass(frozen=True)
class IndexSnapshot:
    """
    Índice exacto en memoria.

    Campos:
        sim    (SimKind): similitud de búsqueda.
        ids    (tuple[str, ...]): id de cada fila.
        matrix (np.ndarray): m×K float32, fila j = embedding de ids[j].

    Invariantes:
        - m ≥ 1, ids únicos, filas = ids, todos los valores finitos.
    """
    sim: SimKind
    ids: tuple[str, ...]
    matrix: np.ndarray
    id_rank: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "sim", SimKind(self.sim))
        object.__setattr__(self, "ids", tuple(self.ids))
        matrix = np.array(self.matrix, dtype=np.float32, order="C")
        if not self.ids:
            raise ValidationError("El índice necesita al menos una entrada.", code="empty_index")
        if len(set(self.ids)) != len(self.ids):
            raise ValidationError("Ids repetidos en el índice.", code="duplicate_ids")
        if matrix.ndim != 2 or matrix.shape[0] != len(self.ids):
            raise ValidationError(
                f"Matriz {matrix.shape} no corresponde a {len(self.ids)} ids.", code="dimension_mismatch"
            )
        if not np.isfinite(matrix).all():
            raise ValidationError("El índice contiene valores no finitos.", code="nonfinite")
        matrix.flags.writeable = False
        object.__setattr__(self, "matrix", matrix)
        # Posición de cada fila en el orden lexicográfico de ids (desempate).
        order = sorted(range(len(self.ids)), key=self.ids.__getitem__)
        rank = np.empty(len(order), dtype=np.int64)
        rank[order] = np.arange(len(order))
        object.__setattr__(self, "id_rank", rank)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IndexSnapshot):
            return NotImplemented
        return (
            self.sim == other.sim
            and self.ids == other.ids
            and self.matrix.shape == other.matrix.shape
            and self.matrix.tobytes() == other.matrix.tobytes()
        )


@dataclass(frozen=True)
class QueryResult:
    """hits: lista de (entry_id, score) en orden de ranking."""
    hits: tuple[tuple[str, float], ...] = ()

    @property
    def ids(self) -> list[str]:
        return [entry_id for entry_id, _ in self.hits]

    @property
    def top(self) -> str | None:
        return self.hits[0][0] if self.hits else None

    def __len__(self) -> int:
        return len(self.hits)
