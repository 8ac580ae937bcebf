import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "sei_lab.settings")
django.setup()
