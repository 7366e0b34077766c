"""
WSGI config for heatlab_service project.

Only the admin view of the run ledger is served; the lab itself runs through
management commands.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'heatlab_service.settings')

application = get_wsgi_application()
