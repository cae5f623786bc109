"""
Rutas del proyecto.

Decisiones:
- '/' redirige al panel de experimentos.
- Cada app con su namespace para reverses claros.
"""

from django.contrib import admin
from django.urls import include, path
from django.views.generic import RedirectView

urlpatterns = [
    # Admin
    path('admin/', admin.site.urls),

    # Home → panel
    path("", RedirectView.as_view(pattern_name="experiments:panel", permanent=False), name='home'),

    # Apps
    path("experiments/", include(("experiments.urls", "experiments"), namespace="experiments")),
]
