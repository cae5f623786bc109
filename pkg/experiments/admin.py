# experiments/admin.py
"""
Admin de la app 'experiments'.

Responsabilidades:
- Listar las corridas registradas con --record (tipo, etiqueta, fecha).
- Mostrar las filas del reporte como inline tabular de solo lectura.

Diseño:
- Los reportes son resultados, no datos editables: todo en solo lectura.
"""
from django.contrib import admin

from .models import ExperimentRow, ExperimentRun


# ─────────────────────────────────────────────────────────────────────────────
# Inline de filas del reporte
# ─────────────────────────────────────────────────────────────────────────────
class ExperimentRowInline(admin.TabularInline):
    model = ExperimentRow
    extra = 0
    can_delete = False
    fields = ('position', 'label', 'variant', 'sim', 'sep', 'mask', 'accuracy', 'stddev', 'runs', 'failed')
    readonly_fields = fields
    show_change_link = True

    def has_add_permission(self, request, obj=None):
        return False


# ─────────────────────────────────────────────────────────────────────────────
# Admin de cabecera
# ─────────────────────────────────────────────────────────────────────────────
@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ('id', 'kind', 'label', 'created_at', 'row_count')
    list_filter = ('kind', 'created_at')
    search_fields = ('label',)
    readonly_fields = ('kind', 'label', 'created_at', 'config', 'summary')
    inlines = [ExperimentRowInline]

    @admin.display(description='Filas')
    def row_count(self, obj):
        return obj.rows.count()


@admin.register(ExperimentRow)
class ExperimentRowAdmin(admin.ModelAdmin):
    list_display = ('run', 'position', 'label', 'accuracy', 'stddev', 'runs', 'failed')
    list_filter = ('run__kind', 'failed', 'variant', 'sim', 'sep', 'mask')
    search_fields = ('label',)
    readonly_fields = ('run', 'position', 'label', 'variant', 'sim', 'sep', 'mask',
                       'accuracy', 'stddev', 'runs', 'failed', 'extra')
