from django.apps import AppConfig


class EncoderAppConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'encoder'
    verbose_name = 'Encoders (torres)'
