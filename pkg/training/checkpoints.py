# training/checkpoints.py
"""
Persistencia de checkpoints (formato binario GCKPT).

Estructura del archivo (little-endian):
    b"GCKPT" | u32 versión | u64 largo del JSON | JSON (UTF-8) |
    bloques de tensores | u32 CRC32 de todo lo anterior

El JSON guarda la configuración, los esquemas, la configuración de cada torre,
el paso, el estado del generador y la lista de bloques. Cada bloque es una torre
(params, m o v) con sus tensores en el orden declarado por EncoderConfig y en el
dtype de la torre, de modo que la ida y vuelta es exacta bit a bit.

Orden de verificación al cargar: magic → CRC → versión.
"""
from __future__ import annotations

import json
import logging
import struct
import zlib
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError

from encoder.domain import EncoderConfig, EncoderParams
from records.domain import Schema, Side

from .domain import Checkpoint, TrainConfig

logger = logging.getLogger(__name__)

MAGIC = b"GCKPT"
VERSION = 1
_HEADER = struct.Struct("<5sIQ")


def _blocks(ckpt: Checkpoint) -> list[tuple[str, EncoderParams]]:
    blocks = [("query", ckpt.query_params), ("m_query", ckpt.m_query), ("v_query", ckpt.v_query)]
    if not ckpt.shared:
        blocks += [("entry", ckpt.entry_params), ("m_entry", ckpt.m_entry), ("v_entry", ckpt.v_entry)]
    return blocks


def _tensor_bytes(params: EncoderParams) -> bytes:
    le = params.config.np_dtype.newbyteorder("<")
    return b"".join(np.ascontiguousarray(t, dtype=le).tobytes() for _, t in params.items())


def dumps_checkpoint(ckpt: Checkpoint) -> bytes:
    meta = {
        "train": ckpt.config.to_dict(),
        "schemas": {"query": list(ckpt.query_schema.names), "entry": list(ckpt.entry_schema.names)},
        "towers": {
            "query": ckpt.query_params.config.to_dict(),
            "entry": None if ckpt.shared else ckpt.entry_params.config.to_dict(),
        },
        "step": ckpt.step,
        "rng_state": ckpt.rng_state,
        "blocks": [name for name, _ in _blocks(ckpt)],
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    body = _HEADER.pack(MAGIC, VERSION, len(blob)) + blob
    body += b"".join(_tensor_bytes(params) for _, params in _blocks(ckpt))
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    """Escribe el checkpoint en path (crea directorios padre)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_checkpoint(ckpt))
    logger.info("Checkpoint guardado en %s (paso %s)", path, ckpt.step)
    return path


def _read_block(buf: bytes, offset: int, config: EncoderConfig) -> tuple[EncoderParams, int]:
    le = config.np_dtype.newbyteorder("<")
    tensors = {}
    for name, shape in config.shapes().items():
        count = int(np.prod(shape))
        arr = np.frombuffer(buf, dtype=le, count=count, offset=offset)
        tensors[name] = arr.astype(config.np_dtype).reshape(shape)
        offset += count * le.itemsize
    return EncoderParams(config, tensors), offset


def loads_checkpoint(buf: bytes) -> Checkpoint:
    """
    Reconstruye un Checkpoint desde bytes.

    Raises:
        ValidationError: code="bad_magic", "checksum", "version" o "format".
    """
    if buf[: len(MAGIC)] != MAGIC:
        raise ValidationError("No es un checkpoint (magic inválido).", code="bad_magic")
    if len(buf) < _HEADER.size + 4:
        raise ValidationError("Checkpoint truncado.", code="checksum")
    (stored_crc,) = struct.unpack("<I", buf[-4:])
    if zlib.crc32(buf[:-4]) != stored_crc:
        raise ValidationError("CRC32 no coincide: archivo corrupto o truncado.", code="checksum")
    _, version, blob_len = _HEADER.unpack_from(buf, 0)
    if version != VERSION:
        raise ValidationError(f"Versión {version} no soportada (se espera {VERSION}).", code="version")

    offset = _HEADER.size
    meta = json.loads(buf[offset: offset + blob_len].decode("utf-8"))
    offset += blob_len

    q_config = EncoderConfig.from_dict(meta["towers"]["query"])
    e_meta = meta["towers"]["entry"]
    e_config = q_config if e_meta is None else EncoderConfig.from_dict(e_meta)
    blocks: dict[str, EncoderParams] = {}
    try:
        for name in meta["blocks"]:
            config = q_config if name.endswith("query") else e_config
            blocks[name], offset = _read_block(buf, offset, config)
    except ValueError as exc:
        raise ValidationError(f"Bloques de tensores inconsistentes: {exc}", code="format") from exc
    if offset != len(buf) - 4:
        raise ValidationError("Bytes sobrantes tras los tensores.", code="format")

    shared = e_meta is None
    return Checkpoint(
        config=TrainConfig.from_dict(meta["train"]),
        query_schema=Schema.of(Side.QUERY, meta["schemas"]["query"]),
        entry_schema=Schema.of(Side.ENTRY, meta["schemas"]["entry"]),
        query_params=blocks["query"],
        entry_params=blocks["query"] if shared else blocks["entry"],
        m_query=blocks["m_query"],
        v_query=blocks["v_query"],
        m_entry=blocks["m_query"] if shared else blocks["m_entry"],
        v_entry=blocks["v_query"] if shared else blocks["v_entry"],
        step=meta["step"],
        rng_state=meta["rng_state"],
    )


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Lee un checkpoint de disco; OSError se propaga."""
    return loads_checkpoint(Path(path).read_bytes())
