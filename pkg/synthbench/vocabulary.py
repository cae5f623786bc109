# synthbench/vocabulary.py
"""
Piezas de texto para el mundo sintético: sílabas para pseudo-palabras,
categorías de comercio, sufijos de calle y caracteres confundibles por OCR.
"""
from __future__ import annotations

import string

import numpy as np

ONSETS = ("b", "br", "c", "d", "dr", "f", "g", "gr", "h", "k", "l", "m", "n", "p", "r", "s", "st", "t", "tr", "v", "z")
VOWELS = ("a", "e", "i", "o", "u", "ae", "ou")
CODAS = ("", "", "n", "l", "r", "s", "m", "k")

CATEGORIES = (
    "Cafe", "Bakery", "Mart", "Pharmacy", "Grill", "Noodle", "Books", "Florist",
    "Dental", "Optical", "Pizza", "Tea House", "Bistro", "Stationery", "Laundry",
)
DISTRICT_SUFFIX = "-dong"
ROAD_SUFFIXES = ("-ro", "-gil")

# Sustituciones típicas de OCR (ambas direcciones).
CONFUSABLES = {
    "0": "O", "O": "0", "o": "0",
    "1": "l", "l": "1", "I": "1", "i": "l",
    "5": "S", "S": "5", "s": "5",
    "8": "B", "B": "8",
    "2": "Z", "Z": "2",
    "6": "G", "G": "6",
    "9": "g", "g": "9",
    "n": "m", "m": "n",
    "u": "v", "v": "u",
    "c": "e", "e": "c",
    "-": "~", ".": ",", ",": ".",
}
ALPHABET = string.ascii_letters + string.digits + " -"


def pseudo_word(rng: np.random.Generator, syllables: int | None = None) -> str:
    """Palabra pronunciable capitalizada de 2 a 3 sílabas."""
    n = syllables or int(rng.integers(2, 4))
    parts = [
        ONSETS[rng.integers(len(ONSETS))] + VOWELS[rng.integers(len(VOWELS))] + CODAS[rng.integers(len(CODAS))]
        for _ in range(n)
    ]
    return "".join(parts).capitalize()


def word_pool(rng: np.random.Generator, size: int) -> list[str]:
    """`size` pseudo-palabras distintas, en orden de generación."""
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < size:
        w = pseudo_word(rng)
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words
