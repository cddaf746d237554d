from dichotomy.management.base import LabCommand
from dichotomy.services.runners import run_probe


class Command(LabCommand):
    help = "环形区域截断边值问题，检测内部爆破"
    experiment = 'probe'
    runner = staticmethod(run_probe)

    def add_extra_arguments(self, parser):
        parser.add_argument('--trace', choices=('separable', 'bounded', 'zero'), help="内边界数据")
