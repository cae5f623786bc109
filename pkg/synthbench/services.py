# synthbench/services.py
"""
Servicios de la app 'synthbench': mundo sintético de comercios, inyección de
ruido, armado del benchmark y métricas.

Generación de entradas:
    - name:            "<Marca> <Categoría>" (independientes) o
                       "<Marca> <Categoría> <Sucursal>" (franquicias: marca compartida).
    - phone:           "0AA-BBB-CCCC"; en la mitad de las franquicias todas las
                       sucursales comparten el teléfono central.
    - address:         "<Región> <Distrito>-dong <lote>" (dirección por lote).
    - street:          "<Vía>-ro <número>" (dirección por calle).
    - business_number: "XXX-XX-XXXXX", único.
    Valores faltantes según missing_rates.

Derivación de consultas (mapeo declarado):
    name → name, phone → phone, business_number → business_number,
    address + " " + street → address. Luego: caída de campos, corrupción de
    texto y, con outdated_prob, un valor desactualizado.

Notas:
    - Todo es función pura de (config, seed); los generadores se derivan con
      SeedSequence para separar base y consultas.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from django.core.exceptions import ValidationError

from records.domain import Association, Record
from records.services import dump_associations, dump_records, iter_json_lines, load_records

from . import vocabulary
from .domain import (
    ENTRY_FIELDS, ENTRY_RECORD_SCHEMA, QUERY_FIELDS, QUERY_SCHEMA, Benchmark, GeneratorConfig, Metrics, NoiseConfig,
)

logger = logging.getLogger(__name__)

REGIONS = 8
DISTRICTS_PER_REGION = 6
ROADS = 120
POPULARITY_SIGMA = 1.0


# ─────────────────────────────────────────────────────────────────────────────
# Valores de campo
# ─────────────────────────────────────────────────────────────────────────────
class _World:
    """Vocabulario fijo de un mundo (regiones, distritos, vías) y generador."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        words = vocabulary.word_pool(rng, REGIONS + REGIONS * DISTRICTS_PER_REGION + ROADS)
        self.regions = words[:REGIONS]
        self.districts = [
            words[REGIONS + r * DISTRICTS_PER_REGION: REGIONS + (r + 1) * DISTRICTS_PER_REGION]
            for r in range(REGIONS)
        ]
        self.roads = words[REGIONS + REGIONS * DISTRICTS_PER_REGION:]
        self.used_names: set[str] = set()
        self.used_business: set[str] = set()
        self.used_brands: set[str] = set(words)

    def phone(self) -> str:
        r = self.rng
        return f"0{r.integers(2, 70):02d}-{r.integers(100, 1000)}-{r.integers(0, 10000):04d}"

    def address(self) -> str:
        r = self.rng
        region = int(r.integers(REGIONS))
        district = self.districts[region][int(r.integers(DISTRICTS_PER_REGION))]
        return f"{self.regions[region]} {district}{vocabulary.DISTRICT_SUFFIX} {r.integers(1, 999)}-{r.integers(1, 30)}"

    def street(self) -> str:
        r = self.rng
        road = self.roads[int(r.integers(ROADS))]
        suffix = vocabulary.ROAD_SUFFIXES[int(r.integers(len(vocabulary.ROAD_SUFFIXES)))]
        return f"{road}{suffix} {r.integers(1, 300)}"

    def business_number(self) -> str:
        while True:
            digits = "".join(str(d) for d in self.rng.integers(0, 10, size=10))
            if digits[0] != "0" and digits not in self.used_business:
                self.used_business.add(digits)
                return f"{digits[:3]}-{digits[3:5]}-{digits[5:]}"

    def brand(self) -> str:
        while True:
            word = vocabulary.pseudo_word(self.rng)
            if word not in self.used_brands:
                self.used_brands.add(word)
                return word

    def category(self) -> str:
        return vocabulary.CATEGORIES[int(self.rng.integers(len(vocabulary.CATEGORIES)))]

    def unique_name(self, make: Callable[[], str]) -> str:
        while True:
            name = make()
            if name not in self.used_names:
                self.used_names.add(name)
                return name


def _cluster_sizes(config: GeneratorConfig, rng: np.random.Generator) -> list[int]:
    """Tamaños de franquicia (≥ 2) que suman franchise_fraction · n_entries."""
    budget = int(round(config.franchise_fraction * config.n_entries))
    sizes: list[int] = []
    while budget >= 2:
        size = min(budget, 2 + int(rng.poisson(config.franchise_mean_size - 2)))
        if budget - size == 1:
            size += 1
        sizes.append(size)
        budget -= size
    return sizes


def generate_database(config: GeneratorConfig, rng: np.random.Generator | None = None) -> list[Record]:
    """
    Genera n_entries entradas conforme al esquema de entradas.

    Las franquicias comparten la marca (y la categoría); cada sucursal agrega un
    token propio, por lo que todos los nombres son distintos.
    """
    rng = rng or np.random.default_rng(config.seed)
    world = _World(rng)
    rows: list[dict[str, str | None]] = []

    sizes = _cluster_sizes(config, rng)
    for size in sizes:
        brand, category = world.brand(), world.category()
        shared_phone = world.phone() if rng.random() < 0.5 else None
        for _ in range(size):
            rows.append({
                "name": world.unique_name(lambda: f"{brand} {category} {vocabulary.pseudo_word(rng)}"),
                "phone": shared_phone or world.phone(),
            })
    while len(rows) < config.n_entries:
        rows.append({
            "name": world.unique_name(lambda: f"{world.brand()} {world.category()}"),
            "phone": world.phone(),
        })

    order = rng.permutation(len(rows))
    entries = []
    for j, idx in enumerate(order):
        values = dict(rows[idx])
        values["address"] = world.address()
        values["street"] = world.street()
        values["business_number"] = world.business_number()
        for name in ENTRY_FIELDS:
            if rng.random() < config.missing_rates.get(name, 0.0):
                values[name] = None
        entries.append(Record(f"e{j:06d}", values))
    logger.info(
        "Base sintética: %s entradas (%s en %s franquicias), seed=%s",
        len(entries), sum(sizes), len(sizes), config.seed,
    )
    return entries


# ─────────────────────────────────────────────────────────────────────────────
# Ruido
# ─────────────────────────────────────────────────────────────────────────────
def _substitute(ch: str, rng: np.random.Generator) -> str:
    confusable = vocabulary.CONFUSABLES.get(ch)
    if confusable is not None and rng.random() < 0.5:
        return confusable
    alphabet = vocabulary.ALPHABET
    while True:
        pick = alphabet[int(rng.integers(len(alphabet)))]
        if pick != ch:
            return pick


def corrupt_text(s: str, noise: NoiseConfig, rng: np.random.Generator) -> str:
    """
    Ruido de OCR y de orden de palabras.

    Por carácter: sustitución (confundible o aleatoria, siempre distinta) con
    char_sub_rate, borrado con char_del_rate. Luego, con word_shuffle_prob,
    permuta el orden de las palabras.
    """
    sub, dele = noise.char_sub_rate, noise.char_del_rate
    if sub or dele:
        out = []
        for ch in s:
            r = rng.random()
            if r < sub:
                out.append(_substitute(ch, rng))
            elif r < sub + dele:
                continue
            else:
                out.append(ch)
        s = "".join(out)
    if noise.word_shuffle_prob and rng.random() < noise.word_shuffle_prob:
        words = s.split()
        if len(words) > 1:
            s = " ".join(words[i] for i in rng.permutation(len(words)))
    return s


def map_entry_to_query(entry: Record) -> dict[str, str | None]:
    """Mapeo declarado de campos de entrada a campos de consulta (sin ruido)."""
    address, street = entry.get("address"), entry.get("street")
    if address and street:
        full_address = f"{address} {street}"
    else:
        full_address = address or street
    return {
        "name": entry.get("name"),
        "phone": entry.get("phone"),
        "address": full_address,
        "business_number": entry.get("business_number"),
    }


def _stale_value(name: str, value: str, rng: np.random.Generator) -> str:
    """Variante plausible y distinta de un valor (mudanza, cambio de número, rebranding)."""
    if name in ("phone", "business_number"):
        digits = [i for i, ch in enumerate(value) if ch.isdigit()]
        chars = list(value)
        for i in rng.choice(digits, size=min(4, len(digits)), replace=False):
            chars[i] = str((int(chars[i]) + int(rng.integers(1, 10))) % 10)
        return "".join(chars)
    words = value.split()
    if name == "address":
        return " ".join(words[:-1] + [f"{rng.integers(1, 999)}-{rng.integers(1, 30)}"]) if words else value
    return f"{value} {vocabulary.pseudo_word(rng)}"


def derive_query(
    entry: Record,
    noise: NoiseConfig,
    rng: np.random.Generator,
    query_id: str | None = None,
) -> Record:
    """Consulta ruidosa derivada de una entrada (ver mapeo en el docstring del módulo)."""
    values = map_entry_to_query(entry)
    for name in QUERY_FIELDS:
        if values[name] is not None and rng.random() < noise.field_drop_prob.get(name, 0.0):
            values[name] = None
    for name in QUERY_FIELDS:
        if values[name] is not None:
            values[name] = corrupt_text(values[name], noise, rng) or None
    if noise.outdated_prob and rng.random() < noise.outdated_prob:
        present = [n for n in QUERY_FIELDS if values[n] is not None]
        if present:
            name = present[int(rng.integers(len(present)))]
            values[name] = _stale_value(name, values[name], rng)
    return Record(query_id or f"q-{entry.id}", values)


# ─────────────────────────────────────────────────────────────────────────────
# Benchmark
# ─────────────────────────────────────────────────────────────────────────────
def make_benchmark(
    gen_config: GeneratorConfig,
    noise: NoiseConfig,
    n_queries: int,
    test_fraction: float,
) -> Benchmark:
    """
    Base + una consulta ruidosa por entrada muestreada (con reposición, según
    una popularidad lognormal), mapa gold y partición train/test por query id.

    Raises:
        ValidationError: n_queries < 10 (code="n_queries") o test_fraction fuera
            de (0, 1) (code="test_fraction").
    """
    if n_queries < 10:
        raise ValidationError("n_queries debe ser ≥ 10.", code="n_queries")
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError(f"test_fraction debe estar en (0, 1) ({test_fraction}).", code="test_fraction")

    db_seq, query_seq = np.random.SeedSequence(gen_config.seed).spawn(2)
    entries = generate_database(gen_config, np.random.default_rng(db_seq))
    rng = np.random.default_rng(query_seq)

    popularity = rng.lognormal(0.0, POPULARITY_SIGMA, size=len(entries))
    picks = rng.choice(len(entries), size=n_queries, p=popularity / popularity.sum())
    queries, gold = [], {}
    for i, j in enumerate(picks):
        query = derive_query(entries[j], noise, rng, query_id=f"q{i:06d}")
        queries.append(query)
        gold[query.id] = entries[j].id

    n_test = min(n_queries - 1, max(1, int(round(n_queries * test_fraction))))
    shuffled = rng.permutation(n_queries)
    test_ids = frozenset(queries[i].id for i in shuffled[:n_test])
    train_ids = frozenset(q.id for q in queries) - test_ids
    logger.info(
        "Benchmark: %s entradas, %s consultas (%s train / %s test)",
        len(entries), n_queries, len(train_ids), len(test_ids),
    )
    return Benchmark(entries, queries, gold, train_ids, test_ids)


# ─────────────────────────────────────────────────────────────────────────────
# Persistencia
# ─────────────────────────────────────────────────────────────────────────────
BENCHMARK_FILES = ("entries.jsonl", "queries.jsonl", "gold.jsonl", "associations.jsonl")


def write_benchmark(benchmark: Benchmark, directory: str | Path) -> list[Path]:
    """
    Escribe entries/queries (JSONL de registros), gold ({query_id, entry_id, split})
    y associations (pares de entrenamiento). Salida idéntica byte a byte para un
    mismo benchmark.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = [directory / name for name in BENCHMARK_FILES]
    dump_records(benchmark.entries, ENTRY_RECORD_SCHEMA, paths[0])
    dump_records(benchmark.queries, QUERY_SCHEMA, paths[1])
    with open(paths[2], "w", encoding="utf-8") as fh:
        for query in benchmark.queries:
            split = "test" if query.id in benchmark.test_ids else "train"
            row = {"query_id": query.id, "entry_id": benchmark.gold[query.id], "split": split}
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    dump_associations(benchmark.train_associations, paths[3])
    logger.info("Benchmark escrito en %s", directory)
    return paths


def read_gold(path: str | Path) -> tuple[dict[str, str], set[str], set[str]]:
    gold, train_ids, test_ids = {}, set(), set()
    for lineno, obj, error in iter_json_lines(path):
        if obj is None or not {"query_id", "entry_id"} <= set(obj):
            raise ValidationError(f"{path}:{lineno} línea gold inválida ({error or obj}).", code="gold")
        gold[obj["query_id"]] = obj["entry_id"]
        (test_ids if obj.get("split") == "test" else train_ids).add(obj["query_id"])
    return gold, train_ids, test_ids


def read_benchmark(directory: str | Path) -> Benchmark:
    """Reconstruye el Benchmark escrito por write_benchmark."""
    directory = Path(directory)
    entries, _ = load_records(directory / "entries.jsonl", ENTRY_RECORD_SCHEMA)
    queries, _ = load_records(directory / "queries.jsonl", QUERY_SCHEMA)
    gold, train_ids, test_ids = read_gold(directory / "gold.jsonl")
    return Benchmark(entries, queries, gold, frozenset(train_ids), frozenset(test_ids))


# ─────────────────────────────────────────────────────────────────────────────
# Métricas
# ─────────────────────────────────────────────────────────────────────────────
def _ranking(output) -> list[str]:
    if output is None:
        return []
    if isinstance(output, str):
        return [output]
    if hasattr(output, "ids"):
        return list(output.ids)
    return list(output)


def evaluate(
    resolver: Callable[[Record], Sequence[str] | str | None],
    benchmark: Benchmark,
    ks: Iterable[int] = (1, 5, 10, 50),
    queries: Sequence[Record] | None = None,
) -> Metrics:
    """
    Top-1, top-k y MRR sobre la partición de test.

    Un fallo del resolver (excepción) o un resultado vacío cuenta como error.
    El acierto estricto exige el id gold; top1_acc_dedup acepta cualquier id
    del conjunto gold de la consulta.

    Raises:
        ValidationError: partición de test vacía (code="empty_split").
    """
    queries = list(queries if queries is not None else benchmark.test_queries)
    if not queries:
        raise ValidationError("La partición de test está vacía.", code="empty_split")
    ks = sorted(set(ks) | {1})
    hits = {k: 0 for k in ks}
    dedup_hits = 0
    reciprocal = 0.0
    failures = 0
    for query in queries:
        try:
            ranking = _ranking(resolver(query))
        except Exception as exc:  # noqa: BLE001 - cualquier fallo cuenta como error
            failures += 1
            logger.warning("Fallo al resolver %s: %s", query.id, exc)
            ranking = []
        if ranking and ranking[0] in benchmark.accepted(query.id):
            dedup_hits += 1
        gold = benchmark.gold[query.id]
        rank = next((i + 1 for i, entry_id in enumerate(ranking) if entry_id == gold), None)
        if rank is None:
            continue
        reciprocal += 1.0 / rank
        for k in ks:
            if rank <= k:
                hits[k] += 1
    n = len(queries)
    topk = {k: hits[k] / n for k in ks}
    return Metrics(
        n=n, top1_acc=topk[1], topk_acc=topk, mrr=reciprocal / n, top1_acc_dedup=dedup_hits / n, failures=failures
    )
