from dichotomy.management.base import LabCommand
from dichotomy.services.runners import run_caccioppoli


class Command(LabCommand):
    help = "演化 Barenblatt 窗口上的 Caccioppoli 估计两侧"
    experiment = 'caccioppoli'
    runner = staticmethod(run_caccioppoli)
