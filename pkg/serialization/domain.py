# serialization/domain.py
"""
Tipos de la serialización registro → secuencia de tokens.

Propósito:
    Definir los modos de separador/máscara y el vocabulario a nivel de byte
    (256 bytes + especiales) que comparten ambas torres del encoder.

Diseño:
    - Vocabulario determinista: ids 0..255 son bytes; 256=[CLS], 257=[SEP],
      258=[MASK]; luego, por cada nombre de campo distinto (campos de consulta y
      después los de entrada que no aparecieron), [SEP]_f y [MASK]_f.
    - Los tokens por campo se comparten por nombre entre ambos esquemas.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from django.core.exceptions import ValidationError
from django.db import models

BYTE_TOKENS = 256
CLS_ID = 256
SEP_ID = 257
MASK_ID = 258
BASE_VOCAB_SIZE = 259


class SepMode(models.TextChoices):
    SINGLE = "single", "Single"
    MULTI = "multi", "Multi"


class MaskMode(models.TextChoices):
    NONE = "none", "None"
    SINGLE = "single", "Single"
    MULTI = "multi", "Multi"


@dataclass(frozen=True)
class Vocab:
    """
    Vocabulario compartido por ambas torres.

    Campos:
        field_names (tuple[str, ...]): nombres distintos en orden de alta.
        specials    (tuple[str, ...]): nombres de los tokens especiales (id = 256 + posición).
    """
    field_names: tuple[str, ...]
    specials: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        specials = ["[CLS]", "[SEP]", "[MASK]"]
        for name in self.field_names:
            specials += [f"[SEP]_{name}", f"[MASK]_{name}"]
        object.__setattr__(self, "specials", tuple(specials))

    @property
    def size(self) -> int:
        return BYTE_TOKENS + len(self.specials)

    def field_sep_id(self, name: str) -> int:
        return BASE_VOCAB_SIZE + 2 * self._field_index(name)

    def field_mask_id(self, name: str) -> int:
        return BASE_VOCAB_SIZE + 2 * self._field_index(name) + 1

    def _field_index(self, name: str) -> int:
        try:
            return self.field_names.index(name)
        except ValueError:
            raise ValidationError(f"Campo {name!r} fuera del vocabulario.", code="unknown_field") from None

    def token_name(self, token_id: int) -> str:
        if 0 <= token_id < BYTE_TOKENS:
            return _byte_name(token_id)
        if BYTE_TOKENS <= token_id < self.size:
            return self.specials[token_id - BYTE_TOKENS]
        raise ValidationError(f"Token id {token_id} fuera del vocabulario.", code="unknown_token")

    def is_special(self, token_id: int) -> bool:
        return BYTE_TOKENS <= token_id < self.size


def _byte_name(b: int) -> str:
    """ASCII imprimible tal cual; el resto como <0xNN> (incluye el espacio)."""
    if 0x21 <= b <= 0x7E:
        return chr(b)
    return f"<0x{b:02X}>"


@dataclass(frozen=True)
class TokenSequence:
    """
    Registro serializado. Invariantes: al menos un token y ids[0] == [CLS].
    """
    ids: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        if not self.ids:
            raise ValidationError("Secuencia vacía.", code="empty_sequence")
        if self.ids[0] != CLS_ID:
            raise ValidationError("La secuencia debe empezar con [CLS].", code="missing_cls")

    @property
    def length(self) -> int:
        return len(self.ids)

    def __len__(self) -> int:
        return len(self.ids)
