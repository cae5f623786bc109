# records/forms.py
"""
Formularios de validación de líneas JSONL.

Propósito:
    Reutilizar la validación de formularios de Django para cada objeto leído de un
    archivo JSONL (registros, asociaciones, historial de visitas), de modo que los
    servicios solo orquesten y cuenten.

Responsabilidades:
    - record_form_for(schema): form dinámico con `id` + un campo por campo del esquema.
    - AssociationLineForm: query_id, entry_id, strength (opcional, por defecto 1.0).
    - VisitLineForm: entry_id, count ≥ 0.

Notas:
    - strength ≤ 0 se marca con code="strength": el servicio lo trata como fatal
      (señal de corrupción de datos), a diferencia del resto de errores de línea.
"""
from __future__ import annotations

from django import forms
from django.core.validators import ProhibitNullCharactersValidator

from .domain import Schema


class JSONStringField(forms.CharField):
    """
    CharField que exige un string JSON (o null) sin convertir números a texto.

    Notas:
        - strip=False: los valores se conservan byte a byte.
        - Ausente/null → None (valor faltante).
    """

    def __init__(self, **kwargs):
        kwargs.setdefault("required", False)
        kwargs.setdefault("strip", False)
        kwargs.setdefault("empty_value", None)
        super().__init__(**kwargs)
        # Los caracteres de control se reportan en validate(), no se rechazan aquí.
        self.validators = [
            v for v in self.validators if not isinstance(v, ProhibitNullCharactersValidator)
        ]

    def to_python(self, value):
        if value is None:
            return None
        if not isinstance(value, str):
            raise forms.ValidationError("Se esperaba un string.", code="not_string")
        return value


# ─────────────────────────────────────────────────────────────────────────────
# FORM dinámico de registro
# ─────────────────────────────────────────────────────────────────────────────
def record_form_for(schema: Schema) -> type[forms.Form]:
    """
    Construye la clase de formulario para una línea de registro del esquema dado.

    Returns:
        type[forms.Form]: form con `id` obligatorio y un JSONStringField por campo.
    """
    attrs = {"id": JSONStringField(required=True, empty_value="")}
    for name in schema.names:
        attrs[name] = JSONStringField()
    return type(f"{schema.side.title()}RecordForm", (forms.Form,), attrs)


# ─────────────────────────────────────────────────────────────────────────────
# FORM: asociación consulta↔entrada
# ─────────────────────────────────────────────────────────────────────────────
class AssociationLineForm(forms.Form):
    query_id = JSONStringField(required=True, empty_value="")
    entry_id = JSONStringField(required=True, empty_value="")
    strength = forms.FloatField(required=False)

    def clean_strength(self):
        value = self.cleaned_data.get("strength")
        if value is None:
            return 1.0
        if value <= 0:
            raise forms.ValidationError(
                "strength debe ser positivo (%(value)s).", code="strength", params={"value": value}
            )
        return value


# ─────────────────────────────────────────────────────────────────────────────
# FORM: historial de visitas
# ─────────────────────────────────────────────────────────────────────────────
class VisitLineForm(forms.Form):
    entry_id = JSONStringField(required=True, empty_value="")
    count = forms.IntegerField(min_value=0)
