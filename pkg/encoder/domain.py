# encoder/domain.py
"""
Tipos de la app 'encoder'.

Propósito:
    Describir la configuración de una torre (EncoderConfig) y sus parámetros
    aprendibles (EncoderParams). Dos variantes ocupan el eje "backbone":
        - Pooler:    promedio de embeddings de token + proyección (bolsa de bytes).
        - Attentive: un bloque transformer pre-norm + promedio + proyección.

Diseño:
    - EncoderParams guarda los tensores en un dict con un orden declarado
      (PARAM_ORDER); ese orden es el de los checkpoints y el del optimizador.
    - Los gradientes usan la misma estructura (EncoderParams con ceros).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np
from django.core.exceptions import ValidationError
from django.db import models

from serialization.domain import BASE_VOCAB_SIZE

# Un vector de K reales.
EmbeddingVector = np.ndarray


class Variant(models.TextChoices):
    POOLER = "pooler", "Pooler"
    ATTENTIVE = "attentive", "Attentive"


DTYPES = ("float32", "float64")

POOLER_PARAMS = ("token_emb", "proj_w", "proj_b")
ATTENTIVE_PARAMS = (
    "token_emb", "pos_emb",
    "ln1_g", "ln1_b",
    "w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_o", "b_o",
    "ln2_g", "ln2_b",
    "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2",
    "proj_w", "proj_b",
)


@dataclass(frozen=True)
class EncoderConfig:
    """
    Configuración de una torre.

    Invariantes:
        - hidden ≥ 1, out_dim ≥ 1, heads divide a hidden, vocab_size ≥ 259.
    """
    variant: Variant = Variant.ATTENTIVE
    vocab_size: int = BASE_VOCAB_SIZE
    max_len: int = 128
    hidden: int = 64
    out_dim: int = 32
    heads: int = 4
    seed: int = 0
    dtype: str = "float32"
    init_std: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        errors = []
        if self.hidden < 1:
            errors.append("hidden debe ser ≥ 1")
        if self.out_dim < 1:
            errors.append("out_dim debe ser ≥ 1")
        if self.heads < 1 or self.hidden % self.heads:
            errors.append("heads debe dividir a hidden")
        if self.vocab_size < BASE_VOCAB_SIZE:
            errors.append(f"vocab_size debe ser ≥ {BASE_VOCAB_SIZE}")
        if self.max_len < 2:
            errors.append("max_len debe ser ≥ 2")
        if self.dtype not in DTYPES:
            errors.append(f"dtype debe ser uno de {DTYPES}")
        if not self.init_std > 0:
            errors.append("init_std debe ser > 0")
        if errors:
            raise ValidationError("; ".join(errors), code="encoder_config")

    @property
    def param_order(self) -> tuple[str, ...]:
        return POOLER_PARAMS if self.variant == Variant.POOLER else ATTENTIVE_PARAMS

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Forma de cada tensor, en orden declarado."""
        V, L, H, K = self.vocab_size, self.max_len, self.hidden, self.out_dim
        table = {
            "token_emb": (V, H), "pos_emb": (L, H),
            "ln1_g": (H,), "ln1_b": (H,),
            "w_q": (H, H), "b_q": (H,), "w_k": (H, H), "b_k": (H,),
            "w_v": (H, H), "b_v": (H,), "w_o": (H, H), "b_o": (H,),
            "ln2_g": (H,), "ln2_b": (H,),
            "ffn_w1": (H, 4 * H), "ffn_b1": (4 * H,),
            "ffn_w2": (4 * H, H), "ffn_b2": (H,),
            "proj_w": (H, K), "proj_b": (K,),
        }
        return {name: table[name] for name in self.param_order}

    def to_dict(self) -> dict:
        data = asdict(self)
        data["variant"] = str(self.variant.value)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "EncoderConfig":
        return cls(**data)


@dataclass
class EncoderParams:
    """
    Parámetros de una torre (θ de consultas o ϑ de entradas).

    Campos:
        config  (EncoderConfig): configuración que fija formas y dtype.
        tensors (dict[str, np.ndarray]): tensores en orden declarado.
    """
    config: EncoderConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        shapes = self.config.shapes()
        if set(self.tensors) != set(shapes):
            raise ValidationError(
                f"Tensores {sorted(self.tensors)} no coinciden con {sorted(shapes)}.",
                code="param_shapes",
            )
        for name, shape in shapes.items():
            if self.tensors[name].shape != shape:
                raise ValidationError(
                    f"{name}: forma {self.tensors[name].shape}, se esperaba {shape}.",
                    code="param_shapes",
                )
        self.tensors = {name: self.tensors[name] for name in shapes}

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        if name not in self.tensors or value.shape != self.tensors[name].shape:
            raise ValidationError(f"Tensor inválido para {name!r}.", code="param_shapes")
        self.tensors[name] = value

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(self.tensors.items())

    def zeros_like(self) -> "EncoderParams":
        return EncoderParams(self.config, {k: np.zeros_like(v) for k, v in self.tensors.items()})

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.tensors.values())

    def num_values(self) -> int:
        return sum(v.size for v in self.tensors.values())
