from dichotomy.management.base import LabCommand
from dichotomy.services.runners import run_infconv


class Command(LabCommand):
    help = "时空下卷积 v^ε，暴力法与逐维扫描对照"
    experiment = 'infconv'
    runner = staticmethod(run_infconv)

    def add_extra_arguments(self, parser):
        parser.add_argument('--epsilon', type=float)
