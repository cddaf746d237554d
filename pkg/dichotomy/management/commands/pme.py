from dichotomy.management.base import LabCommand
from dichotomy.services.runners import PME_ACTIONS, run_pme


class Command(LabCommand):
    help = "多孔介质方程镜像：eigen / evaluate / evolve / classify / harnack / truncation"
    experiment = 'pme'
    positional = ('target', PME_ACTIONS)
    runner = staticmethod(run_pme)

    def add_extra_arguments(self, parser):
        parser.add_argument('--j', type=float, help="截断值的起点，依次加倍")
        parser.add_argument('--q', type=float)
        parser.add_argument('--c-used', type=float)

    def handle(self, *args, **options):
        options['equation'] = 'PME'
        return super().handle(*args, **options)
