# encoder/services.py
"""
Servicios de la app 'encoder': inicialización, forward y backward analítico.

Propósito:
    Mapear una TokenSequence a un vector de K dimensiones con una de las dos
    variantes de torre, y calcular los gradientes exactos de ⟨grad_out, encode(seq)⟩
    respecto de todos los parámetros.

Arquitecturas:
    - Pooler:    y = mean_t(token_emb[ids_t]) · proj_w + proj_b
    - Attentive: x0 = token_emb[ids] + pos_emb[:T]
                 x1 = x0 + MHA(LN1(x0)) · w_o + b_o
                 x2 = x1 + GELU(LN2(x1) · ffn_w1 + ffn_b1) · ffn_w2 + ffn_b2
                 y  = mean_t(x2) · proj_w + proj_b

Notas:
    - Sin dropout ni operaciones estocásticas: encode es determinista.
    - Los parámetros no se modifican; backward acumula en un buffer del llamador.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from django.core.exceptions import ValidationError

from serialization.domain import TokenSequence

from . import layers
from .domain import EmbeddingVector, EncoderConfig, EncoderParams, Variant

_WEIGHT_MATRICES = {
    "token_emb", "pos_emb", "w_q", "w_k", "w_v", "w_o", "ffn_w1", "ffn_w2", "proj_w",
}
_GAINS = {"ln1_g", "ln2_g"}


def init_params(config: EncoderConfig) -> EncoderParams:
    """
    Parámetros iniciales deterministas a partir de config.seed.

    Reglas:
        - Matrices de pesos ~ Normal(0, init_std²) (por defecto 0.02).
        - Ganancias de layer-norm = 1; sesgos = 0.
    """
    rng = np.random.default_rng(config.seed)
    dtype = config.np_dtype
    tensors = {}
    for name, shape in config.shapes().items():
        if name in _WEIGHT_MATRICES:
            tensors[name] = rng.normal(0.0, config.init_std, size=shape).astype(dtype)
        elif name in _GAINS:
            tensors[name] = np.ones(shape, dtype=dtype)
        else:
            tensors[name] = np.zeros(shape, dtype=dtype)
    return EncoderParams(config, tensors)


def _check_inputs(params: EncoderParams, config: EncoderConfig, seq: TokenSequence) -> np.ndarray:
    if params.config != config:
        raise ValidationError("Los parámetros no corresponden a la configuración.", code="config_mismatch")
    ids = np.asarray(seq.ids, dtype=np.int64)
    if ids.size > config.max_len:
        raise ValidationError(
            f"Secuencia de {ids.size} tokens > max_len={config.max_len}.", code="sequence_too_long"
        )
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise ValidationError(
            f"Token fuera de rango (vocab_size={config.vocab_size}).", code="token_out_of_range"
        )
    return ids


# ─────────────────────────────────────────────────────────────────────────────
# Forward
# ─────────────────────────────────────────────────────────────────────────────
def _pooler_forward(p: EncoderParams, ids: np.ndarray):
    pooled = p["token_emb"][ids].mean(axis=0)
    y = pooled @ p["proj_w"] + p["proj_b"]
    return y, {"ids": ids, "pooled": pooled}


def _attentive_forward(p: EncoderParams, ids: np.ndarray, heads: int):
    T = ids.size
    x0 = p["token_emb"][ids] + p["pos_emb"][:T]
    n1, ln1 = layers.layer_norm(x0, p["ln1_g"], p["ln1_b"])
    q = n1 @ p["w_q"] + p["b_q"]
    k = n1 @ p["w_k"] + p["b_k"]
    v = n1 @ p["w_v"] + p["b_v"]
    att, att_cache = layers.self_attention(q, k, v, heads)
    x1 = x0 + att @ p["w_o"] + p["b_o"]
    n2, ln2 = layers.layer_norm(x1, p["ln2_g"], p["ln2_b"])
    f1 = n2 @ p["ffn_w1"] + p["ffn_b1"]
    g, gelu_cache = layers.gelu(f1)
    x2 = x1 + g @ p["ffn_w2"] + p["ffn_b2"]
    pooled = x2.mean(axis=0)
    y = pooled @ p["proj_w"] + p["proj_b"]
    cache = {
        "ids": ids, "n1": n1, "ln1": ln1, "att": att, "att_cache": att_cache,
        "n2": n2, "ln2": ln2, "g": g, "gelu_cache": gelu_cache, "pooled": pooled,
    }
    return y, cache


def encode_with_cache(params: EncoderParams, config: EncoderConfig, seq: TokenSequence):
    """Forward que además devuelve el cache necesario para backward."""
    ids = _check_inputs(params, config, seq)
    if config.variant == Variant.POOLER:
        return _pooler_forward(params, ids)
    return _attentive_forward(params, ids, config.heads)


def encode(params: EncoderParams, config: EncoderConfig, seq: TokenSequence) -> EmbeddingVector:
    """
    Embedding de K dimensiones de una secuencia.

    Raises:
        ValidationError: token fuera de rango o secuencia más larga que max_len.
    """
    y, _ = encode_with_cache(params, config, seq)
    return y


def encode_batch(
    params: EncoderParams, config: EncoderConfig, seqs: Sequence[TokenSequence]
) -> list[EmbeddingVector]:
    """Igual elemento a elemento a aplicar encode sobre cada secuencia."""
    return [encode(params, config, seq) for seq in seqs]


# ─────────────────────────────────────────────────────────────────────────────
# Backward
# ─────────────────────────────────────────────────────────────────────────────
def _pooler_backward(p: EncoderParams, cache, gy: np.ndarray, grads: EncoderParams):
    ids, pooled = cache["ids"], cache["pooled"]
    grads["proj_w"] += np.outer(pooled, gy)
    grads["proj_b"] += gy
    d_pooled = p["proj_w"] @ gy
    np.add.at(grads["token_emb"], ids, np.broadcast_to(d_pooled / ids.size, (ids.size, d_pooled.size)))


def _attentive_backward(p: EncoderParams, cache, gy: np.ndarray, grads: EncoderParams):
    ids = cache["ids"]
    T = ids.size
    grads["proj_w"] += np.outer(cache["pooled"], gy)
    grads["proj_b"] += gy
    dx2 = np.broadcast_to((p["proj_w"] @ gy) / T, (T, p["proj_w"].shape[0]))

    # FFN + residual
    grads["ffn_w2"] += cache["g"].T @ dx2
    grads["ffn_b2"] += dx2.sum(axis=0)
    df1 = layers.gelu_backward(dx2 @ p["ffn_w2"].T, cache["gelu_cache"])
    grads["ffn_w1"] += cache["n2"].T @ df1
    grads["ffn_b1"] += df1.sum(axis=0)
    dx1_ln, d_g2, d_b2 = layers.layer_norm_backward(df1 @ p["ffn_w1"].T, cache["ln2"])
    grads["ln2_g"] += d_g2
    grads["ln2_b"] += d_b2
    dx1 = dx2 + dx1_ln

    # Atención + residual
    grads["w_o"] += cache["att"].T @ dx1
    grads["b_o"] += dx1.sum(axis=0)
    dq, dk, dv = layers.self_attention_backward(dx1 @ p["w_o"].T, cache["att_cache"])
    n1 = cache["n1"]
    grads["w_q"] += n1.T @ dq
    grads["b_q"] += dq.sum(axis=0)
    grads["w_k"] += n1.T @ dk
    grads["b_k"] += dk.sum(axis=0)
    grads["w_v"] += n1.T @ dv
    grads["b_v"] += dv.sum(axis=0)
    dn1 = dq @ p["w_q"].T + dk @ p["w_k"].T + dv @ p["w_v"].T
    dx0_ln, d_g1, d_b1 = layers.layer_norm_backward(dn1, cache["ln1"])
    grads["ln1_g"] += d_g1
    grads["ln1_b"] += d_b1
    dx0 = dx1 + dx0_ln

    grads["pos_emb"][:T] += dx0
    np.add.at(grads["token_emb"], ids, dx0)


def backward(
    params: EncoderParams,
    config: EncoderConfig,
    seq: TokenSequence,
    grad_out: np.ndarray,
    out: EncoderParams | None = None,
    cache=None,
) -> EncoderParams:
    """
    Gradientes exactos de ⟨grad_out, encode(seq)⟩ respecto de cada parámetro.

    Args:
        grad_out (np.ndarray): K reales finitos.
        out (EncoderParams | None): buffer donde acumular; si es None se crea en ceros.
        cache: cache de encode_with_cache para no repetir el forward.

    Returns:
        EncoderParams: el buffer de gradientes (mismas formas que params).
    """
    gy = np.asarray(grad_out, dtype=config.np_dtype)
    if gy.shape != (config.out_dim,):
        raise ValidationError(
            f"grad_out con forma {gy.shape}, se esperaba ({config.out_dim},).", code="dimension_mismatch"
        )
    if not np.isfinite(gy).all():
        raise ValidationError("grad_out contiene valores no finitos.", code="nonfinite")
    if cache is None:
        _, cache = encode_with_cache(params, config, seq)
    grads = out if out is not None else params.zeros_like()
    if config.variant == Variant.POOLER:
        _pooler_backward(params, cache, gy, grads)
    else:
        _attentive_backward(params, cache, gy, grads)
    return grads
