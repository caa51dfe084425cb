# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Command line entry points."""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from blockffnpy.common import ConfigError, ContractViolation, NonFiniteError
from blockffnpy.decoding import build_drafter, decode_loop
from blockffnpy.kernel import bench_chunk_ffn, write_bench_csv
from blockffnpy.training import (
    CheckpointError,
    EmptyHeldoutError,
    IngestError,
    TrainingDiverged,
    encode,
    evaluate_ppl,
    ingest,
    load_config,
    load_model,
    parse_matrix,
    run_ablation,
    train,
    write_report,
)

_log = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

_HANDLED_ERRORS = (ConfigError, ContractViolation, NonFiniteError, CheckpointError,
                   EmptyHeldoutError, IngestError, TrainingDiverged)


def _densities(text: str) -> List[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as error:
        raise argparse.ArgumentTypeError(f"bad density list {text!r}") from error
    if not values or any(not 0.0 <= value <= 1.0 for value in values):
        raise argparse.ArgumentTypeError("densities must lie in [0, 1]")
    return values


def _cmd_train(args) -> int:
    result = train(load_config(args.config))
    print(result.final_checkpoint)
    return 0


def _cmd_eval(args) -> int:
    print(f"{evaluate_ppl(args.ckpt, args.data):.6f}")
    return 0


def _cmd_report(args) -> int:
    artifacts = write_report(args.ckpt, args.data, args.out, max_windows=args.max_windows)
    print(artifacts.sparsity_json.read_text(encoding="utf-8"))
    return 0


def _cmd_bench_kernel(args) -> int:
    config = load_config(args.config)
    rows = bench_chunk_ffn(config.model.ffn, args.densities, n=args.n, repeats=args.repeats,
                           seed=config.seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_bench_csv(rows, args.out)
    print(args.out)
    return 0


def _cmd_spec_decode(args) -> int:
    model = load_model(args.ckpt).astype(np.float64)
    corpus = ingest(args.corpus) if args.corpus else None
    drafter = build_drafter(args.policy, model=model, corpus=corpus, order=args.order,
                            seed=args.seed)
    prompt = [int(token) for token in encode(args.prompt)]
    stats = decode_loop(model, drafter, prompt, args.max_tokens, args.n)
    print(stats.to_json())
    return 0


def _cmd_ablate(args) -> int:
    rows = run_ablation(load_config(args.config), parse_matrix(args.matrix), args.out,
                        match_tls=args.match_tls, tolerance=args.tolerance, rounds=args.rounds)
    for row in rows:
        print(",".join(str(cell) for cell in row.row()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    """The argument parser with every subcommand."""
    parser = argparse.ArgumentParser(prog="blockffnpy", description=__doc__)
    parser.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="Logging verbosity")
    commands = parser.add_subparsers(dest="command", required=True)

    cmd = commands.add_parser("train", help="Train a toy model from a TOML config")
    cmd.add_argument("--config", type=Path, required=True)
    cmd.set_defaults(handler=_cmd_train)

    cmd = commands.add_parser("eval", help="Held-out perplexity of a checkpoint")
    cmd.add_argument("--ckpt", type=Path, required=True)
    cmd.add_argument("--data", type=Path, required=True)
    cmd.set_defaults(handler=_cmd_eval)

    cmd = commands.add_parser("report", help="Sparsity, allocation and magnitude tables")
    cmd.add_argument("--ckpt", type=Path, required=True)
    cmd.add_argument("--data", type=Path, required=True)
    cmd.add_argument("--out", type=Path, default=Path("report"))
    cmd.add_argument("--max-windows", type=int, default=None)
    cmd.set_defaults(handler=_cmd_report)

    cmd = commands.add_parser("bench-kernel", help="Time the chunk kernel against dense")
    cmd.add_argument("--config", type=Path, required=True)
    cmd.add_argument("--densities", type=_densities, default=_densities("0.05,0.1,0.25,0.5,1.0"))
    cmd.add_argument("--n", type=int, default=32, help="Tokens per chunk")
    cmd.add_argument("--repeats", type=int, default=20)
    cmd.add_argument("--out", type=Path, default=Path("bench.csv"))
    cmd.set_defaults(handler=_cmd_bench_kernel)

    cmd = commands.add_parser("spec-decode", help="Speculative decoding with counted FFN cost")
    cmd.add_argument("--ckpt", type=Path, required=True)
    cmd.add_argument("--prompt", required=True)
    cmd.add_argument("--policy", default="self_greedy",
                     help="self_greedy, ngram or random")
    cmd.add_argument("--n", type=int, default=4, help="Drafts per verification")
    cmd.add_argument("--max-tokens", type=int, default=32)
    cmd.add_argument("--corpus", type=Path, default=None, help="Corpus for the ngram drafter")
    cmd.add_argument("--order", type=int, default=3)
    cmd.add_argument("--seed", type=int, default=0)
    cmd.set_defaults(handler=_cmd_spec_decode)

    cmd = commands.add_parser("ablate", help="Train and compare objective kinds")
    cmd.add_argument("--config", type=Path, required=True)
    cmd.add_argument("--matrix", required=True,
                     help="Comma separated objective kinds with optional starting "
                          "factors, e.g. null,cs,l1:0.005,al+cs")
    cmd.add_argument("--match-tls", type=float, default=None,
                     help="Calibrate sparsified arms without a factor onto the TLS of the "
                          "first unsparsified arm plus this offset, e.g. 0.15")
    cmd.add_argument("--tolerance", type=float, default=0.025,
                     help="Allowed TLS distance from the calibration target")
    cmd.add_argument("--rounds", type=int, default=6, help="Calibration runs per arm")
    cmd.add_argument("--out", type=Path, default=Path("runs/ablation"))
    cmd.set_defaults(handler=_cmd_ablate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, configure logging and run one subcommand."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT)
    try:
        return args.handler(args)
    except _HANDLED_ERRORS as error:
        _log.error("%s: %s", type(error).__name__, error)
        return 1


if __name__ == "__main__":
    sys.exit(main())
