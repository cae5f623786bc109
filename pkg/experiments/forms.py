# experiments/forms.py
"""
Formularios de validación de la configuración de una corrida.

Propósito:
    Validar cada sección del archivo --config (ya fusionada con los valores por
    defecto de settings.GROUNDING y con los flags) antes de construir los tipos
    de dominio. Cada sección tiene su Form; los errores se reportan como
    "seccion.clave: mensaje".

Responsabilidades:
    - SchemasForm: listas de campos de consultas y de entradas.
    - TrainForm / EncoderForm: hiperparámetros de entrenamiento y de la torre.
    - GeneratorForm / NoiseForm: base sintética y ruido de las consultas.
    - BaselineForm: cascada de reglas (None → cascada por defecto).
    - EvalForm: lista de k para top-k.
    - PathsForm: directorios de datos, checkpoints, índices y reportes.

Notas:
    - Los dicts/listas llegan como objetos Python (no como texto), por eso se usa
      forms.JSONField: acepta list/dict directamente.
    - JSONField trata {} y [] como vacíos (None); los campos opcionales de tipo
      dict se normalizan a {} en clean_*.
"""
from django import forms

from encoder.domain import DTYPES, Variant
from scoring.services import SimKind
from serialization.domain import MaskMode, SepMode
from training.domain import Weighting


def _rate_field(**kwargs):
    return forms.FloatField(min_value=0.0, max_value=1.0, **kwargs)


def _clean_rate_map(value, label: str) -> dict:
    """{campo: tasa} con tasas en [0, 1]; None → {}."""
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise forms.ValidationError(f"{label} debe ser un objeto {{campo: tasa}}.", code="invalid")
    for name, rate in value.items():
        if isinstance(rate, bool) or not isinstance(rate, (int, float)) or not 0.0 <= rate <= 1.0:
            raise forms.ValidationError(
                "%(label)s.%(name)s debe ser un número en [0, 1].",
                code="invalid", params={"label": label, "name": name},
            )
    return {name: float(rate) for name, rate in value.items()}


# ─────────────────────────────────────────────────────────────────────────────
# Esquemas
# ─────────────────────────────────────────────────────────────────────────────
class SchemasForm(forms.Form):
    query = forms.JSONField()
    entry = forms.JSONField()

    @staticmethod
    def _field_names(value, side: str) -> list[str]:
        if not isinstance(value, list) or not value:
            raise forms.ValidationError(f"El esquema {side} debe ser una lista no vacía.", code="invalid")
        if not all(isinstance(v, str) and v.strip() for v in value):
            raise forms.ValidationError(f"El esquema {side} solo admite nombres no vacíos.", code="invalid")
        if len(set(value)) != len(value):
            raise forms.ValidationError(f"El esquema {side} tiene campos repetidos.", code="invalid")
        return list(value)

    def clean_query(self):
        return self._field_names(self.cleaned_data["query"], "query")

    def clean_entry(self):
        return self._field_names(self.cleaned_data["entry"], "entry")


# ─────────────────────────────────────────────────────────────────────────────
# Entrenamiento y encoder
# ─────────────────────────────────────────────────────────────────────────────
class TrainForm(forms.Form):
    batch_size = forms.IntegerField(min_value=2)
    steps = forms.IntegerField(min_value=1)
    lr = forms.FloatField()
    beta1 = forms.FloatField(min_value=0.0)
    beta2 = forms.FloatField(min_value=0.0)
    eps = forms.FloatField()
    seed = forms.IntegerField(min_value=0)
    share_towers = forms.BooleanField(required=False)
    sep = forms.ChoiceField(choices=SepMode.choices)
    mask = forms.ChoiceField(choices=MaskMode.choices)
    sim = forms.ChoiceField(choices=SimKind.choices)
    weighting = forms.ChoiceField(choices=Weighting.choices)
    log_every = forms.IntegerField(min_value=1)

    def clean_lr(self):
        lr = self.cleaned_data["lr"]
        if not lr > 0:
            raise forms.ValidationError("lr debe ser > 0.", code="min_value")
        return lr

    def clean_eps(self):
        eps = self.cleaned_data["eps"]
        if not eps > 0:
            raise forms.ValidationError("eps debe ser > 0.", code="min_value")
        return eps

    def clean(self):
        cleaned = super().clean()
        for name in ("beta1", "beta2"):
            value = cleaned.get(name)
            if value is not None and value >= 1.0:
                self.add_error(name, forms.ValidationError("Debe ser < 1.", code="max_value"))
        return cleaned


class EncoderForm(forms.Form):
    variant = forms.ChoiceField(choices=Variant.choices)
    max_len = forms.IntegerField(min_value=2)
    hidden = forms.IntegerField(min_value=1)
    out_dim = forms.IntegerField(min_value=1)
    heads = forms.IntegerField(min_value=1)
    dtype = forms.ChoiceField(choices=[(d, d) for d in DTYPES])
    init_std = forms.FloatField()

    def clean(self):
        cleaned = super().clean()
        hidden, heads = cleaned.get("hidden"), cleaned.get("heads")
        if hidden and heads and hidden % heads:
            self.add_error("heads", forms.ValidationError("heads debe dividir a hidden.", code="invalid"))
        init_std = cleaned.get("init_std")
        if init_std is not None and not init_std > 0:
            self.add_error("init_std", forms.ValidationError("init_std debe ser > 0.", code="min_value"))
        return cleaned


# ─────────────────────────────────────────────────────────────────────────────
# Benchmark sintético
# ─────────────────────────────────────────────────────────────────────────────
class GeneratorForm(forms.Form):
    n_entries = forms.IntegerField(min_value=1)
    franchise_fraction = _rate_field()
    franchise_mean_size = forms.IntegerField(min_value=2)
    missing_rates = forms.JSONField(required=False)
    seed = forms.IntegerField(min_value=0)

    def clean_missing_rates(self):
        return _clean_rate_map(self.cleaned_data.get("missing_rates"), "missing_rates")


class NoiseForm(forms.Form):
    char_sub_rate = _rate_field()
    char_del_rate = _rate_field()
    word_shuffle_prob = _rate_field()
    field_drop_prob = forms.JSONField(required=False)
    outdated_prob = _rate_field()
    n_queries = forms.IntegerField(min_value=10)
    test_fraction = forms.FloatField(min_value=0.0, max_value=1.0)

    def clean_field_drop_prob(self):
        return _clean_rate_map(self.cleaned_data.get("field_drop_prob"), "field_drop_prob")

    def clean(self):
        cleaned = super().clean()
        sub, dele = cleaned.get("char_sub_rate"), cleaned.get("char_del_rate")
        if sub is not None and dele is not None and sub + dele > 1.0:
            self.add_error(
                "char_del_rate",
                forms.ValidationError("char_sub_rate + char_del_rate debe ser ≤ 1.", code="invalid"),
            )
        fraction = cleaned.get("test_fraction")
        if fraction is not None and not 0.0 < fraction < 1.0:
            self.add_error(
                "test_fraction", forms.ValidationError("test_fraction debe estar en (0, 1).", code="invalid")
            )
        return cleaned


# ─────────────────────────────────────────────────────────────────────────────
# Baseline, evaluación y rutas
# ─────────────────────────────────────────────────────────────────────────────
class BaselineForm(forms.Form):
    # La estructura de cada etapa se valida en baseline.services.rules_from_config
    rules = forms.JSONField(required=False)

    def clean_rules(self):
        rules = self.cleaned_data.get("rules")
        if rules is not None and not isinstance(rules, list):
            raise forms.ValidationError("rules debe ser una lista de etapas o null.", code="invalid")
        return rules


class EvalForm(forms.Form):
    ks = forms.JSONField()

    def clean_ks(self):
        ks = self.cleaned_data["ks"]
        if (
            not isinstance(ks, list) or not ks
            or not all(isinstance(k, int) and not isinstance(k, bool) and k >= 1 for k in ks)
        ):
            raise forms.ValidationError("ks debe ser una lista de enteros ≥ 1.", code="invalid")
        return sorted(set(ks))


class PathsForm(forms.Form):
    data = forms.CharField(max_length=1024)
    checkpoints = forms.CharField(max_length=1024)
    index = forms.CharField(max_length=1024)
    reports = forms.CharField(max_length=1024)


SECTION_FORMS: dict[str, type[forms.Form]] = {
    "schemas": SchemasForm,
    "train": TrainForm,
    "encoder": EncoderForm,
    "generator": GeneratorForm,
    "noise": NoiseForm,
    "baseline": BaselineForm,
    "eval": EvalForm,
    "paths": PathsForm,
}
