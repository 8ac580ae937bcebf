from django.apps import AppConfig

class EmitterLabConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'emitter_lab'
    verbose_name = 'Emitter Identification Lab'
