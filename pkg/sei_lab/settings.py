from pathlib import Path
from decouple import config

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config('SECRET_KEY', default='sei-lab-local-key')
DEBUG = config('DEBUG', default=True, cast=bool)

ALLOWED_HOSTS = []

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'rest_framework',
    'emitter_lab',
]

# Experiments persist to flat files only.
DATABASES = {}

USE_TZ = True

# Logging
LOG_LEVEL = config('LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'timestamped': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'timestamped',
        },
    },
    'loggers': {
        'emitter_lab': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}

# SEI laboratory configuration
SEI_LAB_OUTPUT_ROOT = Path(config('SEI_LAB_OUTPUT_ROOT', default=str(BASE_DIR / 'runs')))
SEI_LAB_CHECKED = config('SEI_LAB_CHECKED', default=False, cast=bool)
SEI_LAB_WORKERS = config('SEI_LAB_WORKERS', default=1, cast=int)
SEI_LAB_SLOW_TESTS = config('SEI_LAB_SLOW_TESTS', default=False, cast=bool)

# Django REST Framework settings (serializers only)
REST_FRAMEWORK = {
    'UNAUTHENTICATED_USER': None,
}
