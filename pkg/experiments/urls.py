"""
URLs de la app 'experiments'.

Diseño:
- Namespace propio (`app_name = "experiments"`).
"""

# experiments/urls.py
from django.urls import path
from . import views

app_name = "experiments"

urlpatterns = [
    path("", views.panel, name="panel"),
]
