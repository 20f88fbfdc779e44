"""`run` command: execute one experiment and write its metrics CSV and manifest"""

import argparse
import os
from datetime import datetime, timezone

from loguru import logger

from config import Config
from decorators.cli_decorators import EXIT_DIVERGED, EXIT_OK, exit_on_error
from models.experiment import RunManifest
from pipeline.post_processing import MetricsCsvWriter, summarize_rounds
from pipeline.simulation import run_experiment
from services.config_service import ConfigService
from services.prune_service import PruneService
from utils.file_utils import write_json, write_mask_file, write_mask_sidecar

NAME = "run"

METRICS_FILENAME = "metrics.csv"
MANIFEST_FILENAME = "manifest.json"
RESOLVED_CONFIG_FILENAME = "config.resolved.txt"
MASK_FILENAME = "mask.sbmk"


def register(subparsers):
    parser = subparsers.add_parser(NAME, help="Run a federated training experiment")
    parser.add_argument("--config", required=True, help="Experiment config file (key = value lines)")
    parser.add_argument("--out", default=None, help="Output directory (default: <output folder>/<config name>)")
    parser.add_argument("--seed", type=int, default=None, help="Override the config seed")
    parser.add_argument("--threads", type=int, default=Config.DEFAULT_THREADS, help="Parallel client computations")
    parser.set_defaults(handler=handle)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@exit_on_error
def handle(args: argparse.Namespace) -> int:
    """
    Run the experiment described by --config

    Returns:
        0 when completed, 4 when training diverged
    """
    started = _now()
    resolved, cfg = ConfigService.load_config(args.config, args.seed)
    out_dir = args.out or os.path.join(
        Config.OUTPUT_FOLDER, os.path.splitext(os.path.basename(args.config))[0]
    )
    os.makedirs(out_dir, exist_ok=True)

    outputs = {
        "metrics": os.path.join(out_dir, METRICS_FILENAME),
        "manifest": os.path.join(out_dir, MANIFEST_FILENAME),
        "config": os.path.join(out_dir, RESOLVED_CONFIG_FILENAME),
    }
    with open(outputs["config"], "w", encoding="utf-8") as f:
        f.write(ConfigService.canonicalize(resolved))

    logger.info(f"[RUN] Writing metrics to {outputs['metrics']}")
    with MetricsCsvWriter(outputs["metrics"]) as writer:
        result = run_experiment(cfg, threads=args.threads, sink=writer.write)

    if result.mask is not None and result.mask_generated:
        outputs["mask"] = os.path.join(out_dir, MASK_FILENAME)
        write_mask_file(outputs["mask"], result.mask)
        write_mask_sidecar(outputs["mask"], result.mask, PruneService.format_occupancy(result.mask))

    manifest = RunManifest(
        config_path=os.path.abspath(args.config),
        config_hash=ConfigService.config_hash(resolved),
        seed=resolved["seed"],
        outputs=outputs,
        started_at=started,
        finished_at=_now(),
        artifact_version=Config.ARTIFACT_VERSION,
        status=result.status,
        summary=summarize_rounds(result.metrics),
    )
    write_json(outputs["manifest"], manifest.as_dict())

    if result.diverged:
        logger.warning(f"[RUN] ⚠️ Training diverged; see {outputs['metrics']}")
        return EXIT_DIVERGED
    logger.info(f"[RUN] ✅ Completed: final accuracy {result.final_accuracy}")
    return EXIT_OK
