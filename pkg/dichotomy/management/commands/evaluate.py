from dichotomy.management.base import LabCommand
from dichotomy.services.runners import run_evaluate


class Command(LabCommand):
    help = "在网格上求 Barenblatt 解、梯度模或分离变量解的取值"
    experiment = 'evaluate'
    positional = ('target', ('barenblatt', 'barenblatt_gradient', 'separable', 'pme_separable'))
    runner = staticmethod(run_evaluate)
