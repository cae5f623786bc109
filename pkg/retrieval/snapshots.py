# retrieval/snapshots.py
"""
Persistencia del índice (formato binario GIDX).

Estructura (little-endian):
    b"GIDX" | u32 versión | u8 sim (0=IPS, 1=NSD) | u32 K | u64 m |
    m × (u32 largo + id UTF-8) | matriz m×K f32 por filas | u32 CRC32

Orden de verificación al cargar: magic → CRC → versión.
"""
from __future__ import annotations

import logging
import struct
import zlib
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError

from scoring.services import SimKind

from .domain import IndexSnapshot

logger = logging.getLogger(__name__)

MAGIC = b"GIDX"
VERSION = 1
_HEADER = struct.Struct("<4sIBIQ")
_SIM_CODES = {SimKind.IPS: 0, SimKind.NSD: 1}
_SIM_BY_CODE = {v: k for k, v in _SIM_CODES.items()}
_F4 = np.dtype("<f4")


def dumps_index(snapshot: IndexSnapshot) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, _SIM_CODES[snapshot.sim], snapshot.dim, snapshot.size)]
    for entry_id in snapshot.ids:
        raw = entry_id.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    parts.append(snapshot.matrix.astype(_F4).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_index(snapshot: IndexSnapshot, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_index(snapshot))
    logger.info("Índice guardado en %s (%s entradas)", path, snapshot.size)
    return path


def loads_index(buf: bytes) -> IndexSnapshot:
    """
    Raises:
        ValidationError: code="bad_magic", "checksum", "version" o "format".
    """
    if buf[: len(MAGIC)] != MAGIC:
        raise ValidationError("No es un índice (magic inválido).", code="bad_magic")
    if len(buf) < _HEADER.size + 4:
        raise ValidationError("Índice truncado.", code="checksum")
    (stored_crc,) = struct.unpack("<I", buf[-4:])
    if zlib.crc32(buf[:-4]) != stored_crc:
        raise ValidationError("CRC32 no coincide: archivo corrupto o truncado.", code="checksum")
    _, version, sim_code, dim, size = _HEADER.unpack_from(buf, 0)
    if version != VERSION:
        raise ValidationError(f"Versión {version} no soportada (se espera {VERSION}).", code="version")
    if sim_code not in _SIM_BY_CODE:
        raise ValidationError(f"Código de similitud desconocido: {sim_code}.", code="format")

    offset = _HEADER.size
    ids = []
    try:
        for _ in range(size):
            (n,) = struct.unpack_from("<I", buf, offset)
            offset += 4
            ids.append(buf[offset: offset + n].decode("utf-8"))
            offset += n
        matrix = np.frombuffer(buf, dtype=_F4, count=size * dim, offset=offset).reshape(size, dim)
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise ValidationError(f"Índice mal formado: {exc}", code="format") from exc
    if offset + size * dim * _F4.itemsize != len(buf) - 4:
        raise ValidationError("Bytes sobrantes tras la matriz.", code="format")
    return IndexSnapshot(_SIM_BY_CODE[sim_code], tuple(ids), matrix.astype(np.float32))


def load_index(path: str | Path) -> IndexSnapshot:
    return loads_index(Path(path).read_bytes())
