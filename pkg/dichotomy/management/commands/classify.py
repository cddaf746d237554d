from dichotomy.management.base import LabCommand
from dichotomy.services.runners import run_classify


class Command(LabCommand):
    help = "可积性壳层检验与 B/M 类别判定"
    experiment = 'classify'
    runner = staticmethod(run_classify)

    def add_extra_arguments(self, parser):
        parser.add_argument('--q', type=float, help="只检验这一个指数")
