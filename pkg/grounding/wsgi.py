"""
WSGI config for grounding project.

It exposes the WSGI callable as a module-level variable named ``application``.
Se sirve con gunicorn para publicar el panel de experimentos:

    gunicorn grounding.wsgi:application

For more information on this file, see
https://docs.djangoproject.com/en/5.2/howto/deployment/wsgi/
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'grounding.settings')

application = get_wsgi_application()
