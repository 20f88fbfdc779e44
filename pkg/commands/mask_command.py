"""`make-mask` command: generate an SBMK attack mask and its occupancy sidecar"""

import argparse

from loguru import logger

from config import Config
from decorators.cli_decorators import EXIT_OK, exit_on_error
from models.mask import MaskPolicy
from models.network import final_fc_segment, init_model
from services.config_service import MASK_METHODS, parse_bool, parse_model_spec
from services.data_service import load_mnist, partition_iid, synthetic_blobs
from services.prune_service import PruneService
from utils.errors import ConfigError, InvalidParameterError
from utils.file_utils import write_mask_file, write_mask_sidecar

NAME = "make-mask"

BLOBS = "blobs"
BLOB_PER_CLASS = 200
BLOB_SPREAD = 0.3


def _bool_arg(text: str) -> bool:
    try:
        return parse_bool(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def register(subparsers):
    parser = subparsers.add_parser(NAME, help="Generate a sparse attack mask")
    parser.add_argument("--method", required=True, choices=sorted(MASK_METHODS))
    parser.add_argument("--delta", type=float, default=0.005, help="Fraction of weight coordinates set to one")
    parser.add_argument("--critical", type=_bool_arg, default=False, help="Also set the critical layers to one")
    parser.add_argument("--fc-cap", type=float, default=None, help="Maximum density of the final FC layer")
    parser.add_argument("--model", default="mlp2", help="Model spec, e.g. mlp2:784-64-10")
    parser.add_argument("--data", default=None, help="MNIST directory or 'blobs' (snip / force)")
    parser.add_argument("--steps", type=int, default=None, help="FORCE schedule length")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--clients", type=int, default=25, help="Clients the training data is split among")
    parser.add_argument("--byzantine", type=int, default=5, help="Colluding clients (the last ids)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=Config.DEFAULT_THREADS)
    parser.add_argument("--out", required=True, help="Output SBMK file")
    parser.set_defaults(handler=handle)


def _colluded(args: argparse.Namespace, spec):
    """Training partitions of the colluding clients (the last --byzantine of --clients)"""
    if args.data == BLOBS:
        train = synthetic_blobs(spec.classes, BLOB_PER_CLASS, spec.input_size, BLOB_SPREAD, args.seed)
    else:
        train, _ = load_mnist(args.data)
    if not 1 <= args.byzantine <= args.clients:
        raise ConfigError(f"--byzantine must lie in [1, {args.clients}]")
    partition = partition_iid(train, args.clients, args.seed)
    byzantine_ids = range(args.clients - args.byzantine, args.clients)
    return [train.subset(partition.assignments[c]) for c in byzantine_ids]


@exit_on_error
def handle(args: argparse.Namespace) -> int:
    """Build the mask, write SBMK + sidecar and print the occupancy table"""
    spec = parse_model_spec(args.model, args.seed)
    kind = MASK_METHODS[args.method]
    if kind in ("force", "snip") and args.data is None:
        raise ConfigError(f"--method {args.method} requires --data")
    if kind == "force" and args.steps is None:
        raise ConfigError("--method force requires --steps")

    try:
        caps = ((final_fc_segment(spec), args.fc_cap),) if args.fc_cap is not None else ()
        policy = MaskPolicy(
            kind=kind,
            delta=args.delta,
            critical=args.critical,
            caps=caps,
            seed=args.seed,
            steps=args.steps or 1,
            batch_size=args.batch_size,
        )
    except InvalidParameterError as e:
        raise ConfigError(str(e)) from e

    model = init_model(spec, args.seed)
    colluded = _colluded(args, spec) if kind in ("force", "snip") else ()
    mask = PruneService.build_mask(policy, model, colluded, args.threads)

    table = PruneService.format_occupancy(mask)
    write_mask_file(args.out, mask)
    sidecar = write_mask_sidecar(args.out, mask, table)
    print(table)
    logger.info(f"[MASK] ✅ Wrote {args.out} and {sidecar}")
    return EXIT_OK
