from .base_command import BaseCommand
from .eval_command import EvalCommand
from .explain_command import ExplainCommand, parse_layer
from .synth_command import CORPUS_KINDS, SynthCommand
from .train_command import TrainCommand
