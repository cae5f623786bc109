"""
Vista del panel de experimentos.

Propósito:
    Mostrar las últimas corridas registradas (--record) y graficar las
    marginales de la grilla más reciente y la ablación de campos.

Dependencias/Assume:
    - ExperimentRun.summary de una grilla trae "marginals" (lista de
      {axis, value, accuracy}).
    - El template consume {{ chart|json_script:"chart-data" }}.
"""
# experiments/views.py
from django.contrib.auth.decorators import login_required
from django.shortcuts import render

from .models import ExperimentRun


# ─────────────────────────────────────────────────────────────────────────────
# VISTA: panel
# ─────────────────────────────────────────────────────────────────────────────
@login_required
def panel(request):
    """
    Flujo:
        1) Últimas 20 corridas (cualquier tipo).
        2) Grilla más reciente → marginales por eje.
        3) Ablación más reciente → exactitud por conjunto de campos.

    Returns:
        HttpResponse: render("experiments/panel.html") con 'runs', 'grid',
        'ablation' y el payload 'chart'.
    """
    runs = list(ExperimentRun.objects.all()[:20])
    grid = ExperimentRun.objects.filter(kind=ExperimentRun.Kind.GRID).first()
    ablation = ExperimentRun.objects.filter(kind=ExperimentRun.Kind.ABLATION).first()

    marginals = (grid.summary.get("marginals") or []) if grid else []
    ablation_rows = list(ablation.rows.all()) if ablation else []

    chart = {
        "marginal_labels": [f"{m['axis']}={m['value']}" for m in marginals],
        "marginal_acc": [m.get("accuracy") for m in marginals],
        "ablation_labels": [row.label for row in ablation_rows],
        "ablation_acc": [row.accuracy for row in ablation_rows],
    }
    return render(request, "experiments/panel.html", {
        "runs": runs,
        "grid": grid,
        "ablation": ablation,
        "marginals": marginals,
        "chart": chart,
    })
