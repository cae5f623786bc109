# experiments/management/base.py
"""
Base común de los comandos de manage.py.

Responsabilidades:
    - Flags compartidos: --config PATH y --seed N.
    - Resolver la configuración efectiva (settings ← archivo ← flags).
    - Traducir ValidationError / OSError / JSONDecodeError en CommandError
      (código de salida distinto de cero, mensaje en stderr).
    - Escribir JSON en stdout.
"""
import argparse
import json

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from experiments.config import RunConfig, load_run_config, seed_overrides


def int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"se esperaba una lista de enteros: {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("la lista no puede estar vacía")
    return values


def float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"se esperaba una lista de números: {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("la lista no puede estar vacía")
    return values


def merge_overrides(*layers: dict) -> dict:
    merged: dict = {}
    for layer in layers:
        for section, values in layer.items():
            merged.setdefault(section, {}).update(values)
    return merged


class GroundingCommand(BaseCommand):
    """Los subcomandos implementan run(run_config, **options)."""

    def add_arguments(self, parser):
        parser.add_argument("--config", metavar="PATH", help="Archivo JSON de configuración.")
        parser.add_argument("--seed", type=int, metavar="N", help="Semilla de entrenamiento y del generador.")

    def overrides(self, options) -> dict:
        """Secciones de configuración fijadas por flags propios del comando."""
        return {}

    def handle(self, *args, **options):
        try:
            run_config = load_run_config(
                options.get("config"),
                merge_overrides(seed_overrides(options.get("seed")), self.overrides(options)),
            )
            return self.run(run_config, **options)
        except ValidationError as exc:
            raise CommandError("; ".join(exc.messages)) from exc
        except (OSError, json.JSONDecodeError) as exc:
            raise CommandError(str(exc)) from exc

    def run(self, run_config: RunConfig, **options):
        raise NotImplementedError

    def emit_json(self, payload) -> None:
        self.stdout.write(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False))
