# encoder/layers.py
"""
Primitivas de forward/backward en numpy para el bloque transformer.

Cada forward devuelve (salida, cache) y su backward recibe el gradiente de la
salida y el cache. Todas operan sobre una sola secuencia (T, H).
"""
from __future__ import annotations

import math

import numpy as np

LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


# ─────────────────────────────────────────────────────────────────────────────
# LayerNorm
# ─────────────────────────────────────────────────────────────────────────────
def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return xhat * gain + bias, (xhat, inv, gain)


def layer_norm_backward(dy: np.ndarray, cache):
    xhat, inv, gain = cache
    d_gain = (dy * xhat).sum(axis=0)
    d_bias = dy.sum(axis=0)
    dxhat = dy * gain
    n = xhat.shape[-1]
    dx = inv / n * (
        n * dxhat
        - dxhat.sum(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
    )
    return dx, d_gain, d_bias


# ─────────────────────────────────────────────────────────────────────────────
# GELU (aproximación tanh)
# ─────────────────────────────────────────────────────────────────────────────
def gelu(x: np.ndarray):
    t = np.tanh(_GELU_C * (x + _GELU_A * x ** 3))
    return 0.5 * x * (1.0 + t), (x, t)


def gelu_backward(dy: np.ndarray, cache):
    x, t = cache
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


# ─────────────────────────────────────────────────────────────────────────────
# Atención multi-cabeza (sin máscara: todas las posiciones son reales)
# ─────────────────────────────────────────────────────────────────────────────
def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    T, H = x.shape
    return x.reshape(T, heads, H // heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    h, T, d = x.shape
    return x.transpose(1, 0, 2).reshape(T, h * d)


def self_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, heads: int):
    qh, kh, vh = (_split_heads(m, heads) for m in (q, k, v))
    scale = 1.0 / math.sqrt(qh.shape[-1])
    attn = softmax(qh @ kh.transpose(0, 2, 1) * scale, axis=-1)
    out = _merge_heads(attn @ vh)
    return out, (qh, kh, vh, attn, scale, heads)


def self_attention_backward(d_out: np.ndarray, cache):
    qh, kh, vh, attn, scale, heads = cache
    doh = _split_heads(d_out, heads)
    d_attn = doh @ vh.transpose(0, 2, 1)
    dvh = attn.transpose(0, 2, 1) @ doh
    d_scores = attn * (d_attn - (d_attn * attn).sum(axis=-1, keepdims=True)) * scale
    dqh = d_scores @ kh
    dkh = d_scores.transpose(0, 2, 1) @ qh
    return _merge_heads(dqh), _merge_heads(dkh), _merge_heads(dvh)
