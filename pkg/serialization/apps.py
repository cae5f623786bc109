from django.apps import AppConfig


class SerializationConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'serialization'
    verbose_name = 'Serialización a tokens'
