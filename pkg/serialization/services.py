# serialization/services.py
"""
Servicios de serialización (registro → TokenSequence).

Propósito:
    Convertir un Record en la secuencia de tokens que consume el encoder,
    implementando los ejes de separador (Single/Multi) y de máscara
    (None/Single/Multi) para valores faltantes.

Regla de serialización (por cada campo f en orden de esquema):
    - valor presente  → bytes UTF-8 del valor, luego el separador.
    - valor faltante  → máscara según MaskMode (None: nada; Single: [MASK];
      Multi: [MASK]_f), luego el mismo separador.
    - separador: [SEP] si Single, [SEP]_f si Multi. Se emite también tras el
      último campo.
    La secuencia empieza con [CLS] y se trunca por la derecha a max_len.

Notas:
    - Funciones puras y reentrantes; el vocabulario es inmutable.
"""
from __future__ import annotations

from typing import Sequence

from django.core.exceptions import ValidationError

from records.domain import Record, Schema

from .domain import CLS_ID, MASK_ID, SEP_ID, MaskMode, SepMode, TokenSequence, Vocab

DEFAULT_MAX_LEN = 128


def build_vocab(query_schema: Schema, entry_schema: Schema) -> Vocab:
    """
    Vocabulario determinista a partir de ambos esquemas.

    Los campos de consulta van primero; los de entrada se agregan en su orden si
    no aparecieron antes. Tamaño = 259 + 2 · nombres distintos.
    """
    names: list[str] = []
    for name in (*query_schema.names, *entry_schema.names):
        if name not in names:
            names.append(name)
    return Vocab(tuple(names))


def serialize(
    record: Record,
    schema: Schema,
    sep: SepMode | str,
    mask: MaskMode | str,
    vocab: Vocab,
    max_len: int = DEFAULT_MAX_LEN,
) -> TokenSequence:
    """
    Serializa un registro según el esquema y los modos de separador/máscara.

    Raises:
        ValidationError: max_len < 2 (code="max_len") o campo fuera de vocabulario.
    """
    if max_len < 2:
        raise ValidationError(f"max_len debe ser ≥ 2 (recibido {max_len}).", code="max_len")
    sep = SepMode(sep)
    mask = MaskMode(mask)

    ids = [CLS_ID]
    for name in schema.names:
        value = record.get(name)
        if value is not None:
            ids.extend(value.encode("utf-8"))
        elif mask == MaskMode.SINGLE:
            ids.append(MASK_ID)
        elif mask == MaskMode.MULTI:
            ids.append(vocab.field_mask_id(name))
        ids.append(SEP_ID if sep == SepMode.SINGLE else vocab.field_sep_id(name))
        if len(ids) >= max_len:
            break
    return TokenSequence(tuple(ids[:max_len]))


def render(seq: TokenSequence | Sequence[int], vocab: Vocab) -> str:
    """
    Representación legible: bytes como texto, especiales por nombre, separados por espacio.

    Raises:
        ValidationError: secuencia vacía o id desconocido.
    """
    ids = seq.ids if isinstance(seq, TokenSequence) else tuple(seq)
    if not ids:
        raise ValidationError("No se puede renderizar una secuencia vacía.", code="empty_sequence")
    return " ".join(vocab.token_name(i) for i in ids)
