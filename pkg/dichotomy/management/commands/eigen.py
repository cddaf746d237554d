from dichotomy.management.base import LabCommand
from dichotomy.services.runners import run_eigen


class Command(LabCommand):
    help = "极小化尺度不变商求特征函数，--oracle 时与首次积分轮廓对照"
    experiment = 'eigen'
    runner = staticmethod(run_eigen)

    def add_extra_arguments(self, parser):
        parser.add_argument('--oracle', action='store_true', default=None, help="输出首次积分对照")
