from utils.run_config import RunConfig

from .commands.eval_command import EvalCommand
from .commands.explain_command import ExplainCommand
from .commands.synth_command import SynthCommand
from .commands.train_command import TrainCommand


class Workbench:
    """Main orchestrator: one component per command, sharing config and logger."""

    def __init__(self, config, logger):
        self.config = config
        self.logger = logger

        self.synth_command = SynthCommand(config, logger)
        self.train_command = TrainCommand(config, logger)
        self.eval_command = EvalCommand(config, logger)
        self.explain_command = ExplainCommand(config, logger)

    def run_config(self, out=None):
        return RunConfig.from_config(self.config, output_dir=out)

    def synth(self, kind="classification", out=None, force=False):
        return self.synth_command.synthesize(kind, out, force)

    def train(self, dataset=None, out=None):
        run = self.run_config(out)
        self.logger.info(f"Run seeds: {run.seeds}")
        return self.train_command.train(run, dataset)

    def evaluate(self, checkpoint_path, **options):
        return self.eval_command.evaluate(checkpoint_path, **options)

    def explain(self, checkpoint_path, **options):
        return self.explain_command.explain(checkpoint_path, **options)
