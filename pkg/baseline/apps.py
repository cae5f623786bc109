from django.apps import AppConfig


class BaselineConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'baseline'
    verbose_name = 'Baseline de reglas'
