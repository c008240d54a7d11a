import argparse
import sys
from pathlib import Path

# Add the project root to the Python path
sys.path.append(str(Path(__file__).parent))

from utils.config_manager import apply_overrides, get_config_value, load_config
from utils.logger import setup_logger
from src.errors import EXIT_DATA, EXIT_INTERRUPTED, EXIT_OK, CstError
from src.workbench import Workbench


def _int_list(text):
    return [int(part) for part in text.split(',') if part.strip()]


def build_parser():
    parser = argparse.ArgumentParser(description="Convolutional set transformer workbench")
    parser.add_argument('--config', help="YAML configuration file (default: config/config.yaml)")
    parser.add_argument('--log-level', help="Override logging.level")
    commands = parser.add_subparsers(dest='command', required=True)

    synth = commands.add_parser('synth', help="Generate a synthetic corpus")
    synth.add_argument('--kind', choices=('classification', 'anomaly'), default='classification')
    synth.add_argument('--out', help="Corpus directory")
    synth.add_argument('--force', action='store_true', help="Replace a non-empty corpus directory")
    synth.add_argument('--seed', type=int, help="Override seeds.data")

    train = commands.add_parser('train', help="Train a preset on a stored corpus")
    train.add_argument('--data', help="Corpus directory")
    train.add_argument('--out', help="Run directory")
    train.add_argument('--task', choices=('cic', 'sc_sf', 'sc_lf', 'anomaly'))
    train.add_argument('--preset')
    train.add_argument('--divisor', type=int)
    train.add_argument('--max-epochs', type=int)
    train.add_argument('--no-ct', action='store_true', help="Train on fixed sets built once before training")

    evaluate = commands.add_parser('eval', help="Evaluate a checkpoint on the test split")
    evaluate.add_argument('checkpoint')
    evaluate.add_argument('--data', help="Corpus directory")
    evaluate.add_argument('--out', help="Output directory")
    evaluate.add_argument('--sizes', type=_int_list, help="Comma-separated set sizes")
    evaluate.add_argument('--trials', type=int)
    evaluate.add_argument('--seed', type=int)

    explain = commands.add_parser('explain', help="Grad-CAM heatmaps for one input set")
    explain.add_argument('checkpoint')
    explain.add_argument('--data', help="Corpus directory")
    explain.add_argument('--out', help="Output directory")
    explain.add_argument('--layer', help="penultimate_setconv, last_setconv, last_conv or a layer index")
    explain.add_argument('--target', type=int, help="Class index, or image index for anomaly models")
    explain.add_argument('--indices', type=_int_list, help="Comma-separated corpus image indices")
    explain.add_argument('--episode-size', type=int)
    explain.add_argument('--prevalence', type=float)
    explain.add_argument('--seed', type=int)
    return parser


def _overrides(args):
    """Configuration keys set by command-line flags."""
    overrides = {'logging.level': args.log_level.upper() if args.log_level else None}
    if args.command == 'synth':
        overrides['seeds.data'] = args.seed
    elif args.command == 'train':
        overrides.update({
            'model.task': args.task,
            'model.preset': args.preset,
            'model.divisor': args.divisor,
            'training.max_epochs': args.max_epochs,
            'training.ct.enabled': False if args.no_ct else None,
        })
    elif args.command == 'eval':
        overrides.update({
            'seeds.eval': args.seed,
        })
    elif args.command == 'explain':
        overrides.update({
            'explain.layer': args.layer,
            'explain.episode_size': args.episode_size,
            'explain.prevalence': args.prevalence,
            'seeds.eval': args.seed,
        })
    return overrides


def run(args, workbench):
    if args.command == 'synth':
        workbench.synth(args.kind, args.out, args.force)
    elif args.command == 'train':
        workbench.train(args.data, args.out)
    elif args.command == 'eval':
        workbench.evaluate(args.checkpoint, dataset=args.data, sizes=args.sizes, trials=args.trials, out=args.out)
    elif args.command == 'explain':
        workbench.explain(
            args.checkpoint,
            dataset=args.data,
            out=args.out,
            target=args.target,
            indices=args.indices,
        )


def main(argv=None):
    args = build_parser().parse_args(argv)

    try:
        config = apply_overrides(load_config(args.config), _overrides(args))
    except CstError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return e.exit_code

    # Setup logging
    logs_dir = get_config_value(config, 'paths.logs', './logs')
    logger = setup_logger(logs_dir, get_config_value(config, 'logging.level', 'INFO'))
    logger.info(f"Starting {args.command}")

    try:
        run(args, Workbench(config, logger))
    except CstError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_DATA
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return EXIT_INTERRUPTED

    logger.info(f"{args.command} completed successfully")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
