import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'DichotomyLab.settings')
django.setup()
