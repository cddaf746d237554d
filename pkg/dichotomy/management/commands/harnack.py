from dichotomy.management.base import LabCommand
from dichotomy.services.runners import run_harnack


class Command(LabCommand):
    help = "抽样测量内蕴 Harnack 常数 γ"
    experiment = 'harnack'
    runner = staticmethod(run_harnack)

    def add_extra_arguments(self, parser):
        parser.add_argument('--c-used', type=float, help="等待时间常数 C")
