from django.apps import AppConfig


class DichotomyConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'dichotomy'
    verbose_name = '退化抛物方程二分性数值实验室'
