from dichotomy.management.base import LabCommand
from dichotomy.services.runners import run_evolve


class Command(LabCommand):
    help = "显式单调格式演化 Barenblatt 切片或鼓包初值"
    experiment = 'evolve'
    runner = staticmethod(run_evolve)
