from dichotomy.management.base import LabCommand
from dichotomy.services.experiments import EXPERIMENTS, run_experiment


class Command(LabCommand):
    help = "按名称执行验收实验，产物写入 --out 目录"

    def add_arguments(self, parser):
        parser.add_argument('name', choices=sorted(EXPERIMENTS))
        super().add_arguments(parser)
        parser.add_argument('--c-used', type=float)
        parser.add_argument('--epsilon', type=float)
        parser.add_argument('--j', type=float)
        parser.add_argument('--trace', choices=('separable', 'bounded', 'zero'))

    def handle(self, *args, **options):
        self.experiment = options['name']
        return super().handle(*args, **options)

    def run(self, config):
        return run_experiment(self.experiment, config)
