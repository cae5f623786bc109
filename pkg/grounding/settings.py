"""
Django settings for grounding project.

Generated by 'django-admin startproject' using Django 5.2.5.

Además de la configuración estándar de Django, este módulo define:
    - GROUNDING: valores por defecto de una corrida (esquemas, entrenamiento,
      encoder, generador sintético, ruido, evaluación y rutas). El archivo
      --config de cada comando y los flags se aplican encima de estos valores.
    - LOGGING: un handler de consola con loggers por app.

For more information on this file, see
https://docs.djangoproject.com/en/5.2/topics/settings/

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# Quick-start development settings - unsuitable for production
# See https://docs.djangoproject.com/en/5.2/howto/deployment/checklist/

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get(
    'GROUNDING_SECRET_KEY',
    'django-insecure-grounding-dev-key-change-me-8k2v!x0q#r4m',
)

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.environ.get('GROUNDING_DEBUG', '1') == '1'

ALLOWED_HOSTS = [h for h in os.environ.get('GROUNDING_ALLOWED_HOSTS', '').split(',') if h]


# Application definition

INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',
    "records.apps.RecordsConfig",
    "serialization.apps.SerializationConfig",
    "encoder.apps.EncoderAppConfig",
    "scoring.apps.ScoringConfig",
    "training.apps.TrainingConfig",
    "retrieval.apps.RetrievalConfig",
    "baseline.apps.BaselineConfig",
    "synthbench.apps.SynthbenchConfig",
    "experiments.apps.ExperimentsConfig",  # comandos + reportes + panel
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

# --- Autenticación ---
LOGIN_URL = "/admin/login/"
LOGIN_REDIRECT_URL = "/"
LOGOUT_REDIRECT_URL = "/"


ROOT_URLCONF = 'grounding.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]

WSGI_APPLICATION = 'grounding.wsgi.application'


# Database
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases

# ------------- Base de reportes: SQLite por defecto, PostgreSQL opcional -------------
if os.environ.get('GROUNDING_DB_ENGINE') == 'postgresql':
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.postgresql',
            'OPTIONS': {
                'options': '-c client_encoding=UTF8',
            },
            'NAME': os.environ.get('GROUNDING_DB_NAME', 'grounding_db'),
            'USER': os.environ.get('GROUNDING_DB_USER', 'postgres'),
            'PASSWORD': os.environ.get('GROUNDING_DB_PASSWORD', ''),
            'HOST': os.environ.get('GROUNDING_DB_HOST', 'localhost'),
            'PORT': os.environ.get('GROUNDING_DB_PORT', '5432'),
        }
    }
else:
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.sqlite3',
            'NAME': BASE_DIR / 'db.sqlite3',
        }
    }

# Password validation
# https://docs.djangoproject.com/en/5.2/ref/settings/#auth-password-validators

AUTH_PASSWORD_VALIDATORS = [
    {
        'NAME': 'django.contrib.auth.password_validation.UserAttributeSimilarityValidator',
    },
    {
        'NAME': 'django.contrib.auth.password_validation.MinimumLengthValidator',
    },
    {
        'NAME': 'django.contrib.auth.password_validation.CommonPasswordValidator',
    },
    {
        'NAME': 'django.contrib.auth.password_validation.NumericPasswordValidator',
    },
]


# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = 'es'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


# Static files (CSS, JavaScript, Images)
# https://docs.djangoproject.com/en/5.2/howto/static-files/

STATIC_URL = 'static/'
STATIC_ROOT = BASE_DIR / "staticfiles"  # carpeta destino de collectstatic

# Default primary key field type
# https://docs.djangoproject.com/en/5.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# ─────────────────────────────────────────────────────────────────────────────
# Logging
# ─────────────────────────────────────────────────────────────────────────────
GROUNDING_LOG_LEVEL = os.environ.get('GROUNDING_LOG_LEVEL', 'INFO')

_APP_LOGGERS = (
    'records', 'serialization', 'encoder', 'scoring', 'training',
    'retrieval', 'baseline', 'synthbench', 'experiments',
)

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {name} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
    'loggers': {
        name: {'handlers': ['console'], 'level': GROUNDING_LOG_LEVEL, 'propagate': False}
        for name in _APP_LOGGERS
    },
}


# ─────────────────────────────────────────────────────────────────────────────
# Valores por defecto de una corrida (ver experiments/config.py)
# ─────────────────────────────────────────────────────────────────────────────
GROUNDING = {
    "schemas": {
        "query": ["name", "phone", "address", "business_number"],
        "entry": ["name", "phone", "address", "street"],
    },
    "train": {
        "batch_size": 32,
        "steps": 2000,
        "lr": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "seed": 0,
        "share_towers": False,
        "sep": "multi",
        "mask": "multi",
        "sim": "nsd",
        "weighting": "sampling",
        "log_every": 50,
    },
    "encoder": {
        "variant": "attentive",
        "max_len": 128,
        "hidden": 64,
        "out_dim": 32,
        "heads": 4,
        "dtype": "float32",
        "init_std": 0.02,
    },
    "generator": {
        "n_entries": 10_000,
        "franchise_fraction": 0.3,
        "franchise_mean_size": 5,
        "missing_rates": {"phone": 0.21, "street": 0.17},
        "seed": 0,
    },
    "noise": {
        "char_sub_rate": 0.03,
        "char_del_rate": 0.01,
        "word_shuffle_prob": 0.15,
        "field_drop_prob": {
            "name": 0.02, "phone": 0.2, "address": 0.1, "business_number": 0.5,
        },
        "outdated_prob": 0.05,
        "n_queries": 20_000,
        "test_fraction": 0.1,
    },
    "baseline": {
        "rules": None,  # None → default_rules()
    },
    "eval": {
        "ks": [1, 5, 10, 50],
    },
    "paths": {
        "data": str(BASE_DIR / "runs" / "data"),
        "checkpoints": str(BASE_DIR / "runs" / "checkpoints"),
        "index": str(BASE_DIR / "runs" / "index"),
        "reports": str(BASE_DIR / "runs" / "reports"),
    },
}
