#!/usr/bin/env python3
import argparse
import logging
import os
import sys

sys.path.append(os.path.join(os.path.dirname(__file__), 'src'))

from experiments.config_loader import KINDS, ConfigError, load_config
from experiments.report_writer import ReportWriter
from experiments.runner import ExperimentRunner, apply_overrides

EXIT_PASSED, EXIT_FAILED, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3


def setup_logging(config):
    """Setup logging configuration"""
    log_dir = os.path.join(config['output']['dir'], 'logs')
    os.makedirs(log_dir, exist_ok=True)
    logging.basicConfig(
        level=getattr(logging, config['logging']['level']),
        format=config['logging']['format'],
        handlers=[
            logging.FileHandler(os.path.join(log_dir, 'run.log')),
            logging.StreamHandler()
        ],
        force=True
    )


def main(argv=None):
    parser = argparse.ArgumentParser(description='Dispersive estimate experiments on discretized spaces')
    parser.add_argument('--config', default='config/default_config.yaml',
                        help='Path to configuration file')
    parser.add_argument('--out', help='Output directory (overrides output.dir)')
    parser.add_argument('--workers', type=int, help='Worker threads for sweep cells')
    parser.add_argument('--seed', type=int, help='Random seed (overrides seed)')
    parser.add_argument('--list-kinds', action='store_true',
                        help='List experiment kinds and exit')

    args = parser.parse_args(argv)

    if args.list_kinds:
        print('\n'.join(KINDS))
        return EXIT_PASSED

    try:
        config = apply_overrides(load_config(args.config), args.out, args.workers, args.seed)
    except ConfigError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    setup_logging(config)
    logger = logging.getLogger(__name__)

    logger.info(f"Starting {config['experiment']['kind']} experiment from {args.config}")

    try:
        report = ExperimentRunner(config).run()

        logger.info("Step 3: Writing reports")
        ReportWriter(config).save(report)

    except Exception as e:
        logger.error(f"Experiment failed: {e}")
        return EXIT_INTERNAL

    if not report.passed:
        logger.warning(f"Some checks failed; see {config['output']['dir']}/checks.csv")
        return EXIT_FAILED

    logger.info("All checks passed!")
    logger.info(f"Results saved to: {config['output']['dir']}")
    return EXIT_PASSED


if __name__ == "__main__":
    sys.exit(main())
