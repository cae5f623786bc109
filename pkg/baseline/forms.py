# baseline/forms.py
"""
Validación de la cascada de reglas leída del archivo de configuración.

Formato (sección "baseline.rules"):
    [
      {"label": "phone", "rules": [
          {"query_field": "phone", "entry_field": "phone",
           "matcher": "exact_normalized", "normalizer": "digits_only"}
      ]},
      ...
    ]
"""
from django import forms

from records.domain import Schema

from .domain import Matcher, Normalizer


class RuleForm(forms.Form):
    query_field = forms.CharField(max_length=64)
    entry_field = forms.CharField(max_length=64)
    matcher = forms.ChoiceField(choices=Matcher.choices)
    normalizer = forms.ChoiceField(choices=Normalizer.choices)

    def __init__(self, *args, query_schema: Schema, entry_schema: Schema, **kwargs):
        """Los esquemas se usan para verificar que los campos existan."""
        super().__init__(*args, **kwargs)
        self.query_schema = query_schema
        self.entry_schema = entry_schema

    def clean_query_field(self):
        name = self.cleaned_data["query_field"]
        if name not in self.query_schema:
            raise forms.ValidationError(
                "Campo %(f)s no está en el esquema de consultas.", code="schema", params={"f": name}
            )
        return name

    def clean_entry_field(self):
        name = self.cleaned_data["entry_field"]
        if name not in self.entry_schema:
            raise forms.ValidationError(
                "Campo %(f)s no está en el esquema de entradas.", code="schema", params={"f": name}
            )
        return name
