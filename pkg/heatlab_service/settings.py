"""
Django settings for heatlab_service (local runs + shared ledger database).
"""
import os
from pathlib import Path
from urllib.parse import urlparse
import dj_database_url

BASE_DIR = Path(__file__).resolve().parent.parent

# ----------------------------- Core -----------------------------
SECRET_KEY = os.getenv("SECRET_KEY", "dev-insecure-key")  # only the admin uses it
DEBUG = os.getenv("DEBUG", "false").lower() == "true"

ALLOWED_HOSTS = ["127.0.0.1", "localhost"]

# ----------------------------- Apps -----------------------------
INSTALLED_APPS = [
    "whitenoise.runserver_nostatic",  # keep before django.contrib.staticfiles
    "django.contrib.admin",
    "django.contrib.auth",
    "django.contrib.contenttypes",
    "django.contrib.sessions",
    "django.contrib.messages",
    "django.contrib.staticfiles",
    "heatlab.apps.HeatlabConfig",
]

# -------------------------- Middleware --------------------------
MIDDLEWARE = [
    "django.middleware.security.SecurityMiddleware",
    "whitenoise.middleware.WhiteNoiseMiddleware",  # serves the admin assets under gunicorn
    "django.contrib.sessions.middleware.SessionMiddleware",
    "django.middleware.common.CommonMiddleware",
    "django.middleware.csrf.CsrfViewMiddleware",
    "django.contrib.auth.middleware.AuthenticationMiddleware",
    "django.contrib.messages.middleware.MessageMiddleware",
    "django.middleware.clickjacking.XFrameOptionsMiddleware",
]

ROOT_URLCONF = "heatlab_service.urls"

# --------------------------- Templates --------------------------
TEMPLATES = [
    {
        "BACKEND": "django.template.backends.django.DjangoTemplates",
        "DIRS": [],
        "APP_DIRS": True,
        "OPTIONS": {
            "context_processors": [
                "django.template.context_processors.debug",
                "django.template.context_processors.request",
                "django.contrib.auth.context_processors.auth",
                "django.contrib.messages.context_processors.messages",
            ],
        },
    },
]

WSGI_APPLICATION = "heatlab_service.wsgi.application"

# --------------------------- Database ---------------------------
# The run ledger. Reports on disk never depend on it.
DATABASE_URL = os.getenv("DATABASE_URL", "")

def _needs_ssl(url: str) -> bool:
    scheme = urlparse(url).scheme.lower()
    return scheme.startswith("postgres")

if DATABASE_URL:
    DATABASES = {
        "default": dj_database_url.config(
            default=DATABASE_URL,
            conn_max_age=600,
            ssl_require=_needs_ssl(DATABASE_URL),
        )
    }
else:
    DATABASES = {
        "default": {
            "ENGINE": "django.db.backends.sqlite3",
            "NAME": BASE_DIR / "db.sqlite3",
        }
    }

# --------------------------- I18N/TZ ----------------------------
LANGUAGE_CODE = "en-us"
TIME_ZONE = os.getenv("TIME_ZONE", "UTC")
USE_I18N = True
USE_TZ = True

STATIC_URL = "/static/"
STATIC_ROOT = BASE_DIR / "staticfiles"
STORAGES = {
    "default": {"BACKEND": "django.core.files.storage.FileSystemStorage"},
    "staticfiles": {"BACKEND": "whitenoise.storage.CompressedStaticFilesStorage"},
}

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# ---------------------------- Lab ------------------------------
def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name, "").strip()
    return int(raw) if raw else default

HEATLAB = {
    "quad": {
        "abs_tol": 1e-10,
        "rel_tol": 1e-9,
        "max_evals": 200_000,
    },
    "ot": {
        "levels": 4096,
    },
    "grid": {
        "t_min": 1e-3,
        "t_max": 10.0,
        "points_per_decade": 8,
    },
    "evi": {
        "f_nodes": 8,          # Gauss-Legendre nodes per grid interval when integrating 1/U_N
        "limit_samples": 6,    # smallest grid points fed to the small-t extrapolation
    },
    "rigidity": {"tol": 1e-5},
    "inequalities": {"tol": 1e-6},
    "workers": _env_int("HEATLAB_WORKERS", 4),
    "output_dir": os.getenv("HEATLAB_OUTPUT_DIR", str(BASE_DIR / "heatlab_output")),
    "record_runs": os.getenv("HEATLAB_RECORD_RUNS", "false").lower() == "true",
}

# -------------------------- Logging ----------------------------
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {"console": {"class": "logging.StreamHandler", "formatter": "plain"}},
    "root": {"handlers": ["console"], "level": os.getenv("DJANGO_LOG_LEVEL", "INFO")},
    "loggers": {
        "heatlab": {
            "handlers": ["console"],
            "level": os.getenv("HEATLAB_LOG_LEVEL", "WARNING"),
            "propagate": False,
        },
    },
}
