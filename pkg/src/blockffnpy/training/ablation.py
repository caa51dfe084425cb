# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""
Objective ablations: train one model per objective kind on the same data
and compare sparsity and perplexity.

An arm may carry its own starting sparsifier factor ("l1:0.005"), and
sparsified arms may instead have that factor searched so their held-out
TLS lands on a common target, which makes CLS comparable across arms.
"""
import csv
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, List, Optional, Union

import numpy as np

from blockffnpy.common import ConfigError, SparsifierKind
from blockffnpy.objectives import ABLATION_KINDS, objective_for_kind
from blockffnpy.training.config import TrainConfig
from blockffnpy.training.evaluate import model_perplexity
from blockffnpy.training.report import collect_activations, layer_reports
from blockffnpy.training.tokenizer import ingest
from blockffnpy.training.trainer import METRICS_CHUNK_LEN, train

_log = logging.getLogger(__name__)

ABLATION_HEADER = ("kind", "lambda_cs0", "tls", "cls8", "reuse", "ppl")

LAMBDA_BOUNDS = (1e-4, 1.0)


@dataclass(frozen=True)
class AblationArm:
    """An objective kind and, optionally, its own starting sparsifier factor."""
    kind: str
    lambda_cs0: Optional[float] = None

    def __post_init__(self) -> None:
        kind = self.kind.strip().lower()
        if kind not in ABLATION_KINDS:
            raise ConfigError(
                f"Unknown ablation kind {self.kind!r}, expected one of: {', '.join(ABLATION_KINDS)}")
        if self.lambda_cs0 is not None and not self.lambda_cs0 >= 0:
            raise ConfigError(f"lambda_cs0 of {kind} must be non-negative")
        object.__setattr__(self, "kind", kind)

    @property
    def sparsified(self) -> bool:
        """Whether the arm trains with a sparsifier whose factor can be tuned."""
        return ABLATION_KINDS[self.kind][1] is not SparsifierKind.NONE

    @property
    def label(self) -> str:
        """``kind`` or ``kind:lambda`` as written in the matrix."""
        return self.kind if self.lambda_cs0 is None else f"{self.kind}:{self.lambda_cs0:g}"

    @property
    def dirname(self) -> str:
        """Directory name of the arm's run."""
        return self.label.replace("+", "_").replace(":", "_")

    def config_for(self, base: TrainConfig, out_dir: Path) -> TrainConfig:
        """The training config of this arm writing into ``out_dir``."""
        objective = objective_for_kind(self.kind, base.objective)
        if self.lambda_cs0 is not None:
            objective = replace(objective, lambda_cs0=self.lambda_cs0)
        return replace(base, objective=objective, data=replace(base.data, out_dir=str(out_dir)))


@dataclass
class AblationRow:
    """Held-out results of one ablation arm."""
    kind: str
    lambda_cs0: Optional[float]
    tls: float
    cls8: float
    reuse: Optional[float]
    ppl: float

    def row(self) -> list:
        """CSV cells."""
        reuse = "" if self.reuse is None else f"{self.reuse:.6f}"
        factor = "" if self.lambda_cs0 is None else f"{self.lambda_cs0:.6g}"
        return [self.kind, factor, f"{self.tls:.6f}", f"{self.cls8:.6f}", reuse,
                f"{self.ppl:.4f}"]


def parse_matrix(text: str) -> List[AblationArm]:
    """
    Split a comma separated matrix such as ``null,cs,l1:0.005,al+cs`` into
    arms, checking every kind and factor.
    """
    arms = []
    for item in text.split(","):
        if not item.strip():
            continue
        kind, _, factor = item.partition(":")
        if not factor.strip():
            arms.append(AblationArm(kind))
            continue
        try:
            value = float(factor)
        except ValueError as error:
            raise ConfigError(
                f"Bad factor {factor.strip()!r} for ablation arm {kind.strip()!r}") from error
        arms.append(AblationArm(kind, value))
    if not arms:
        raise ConfigError("the ablation matrix names no objective kinds")
    return arms


def _as_arm(arm: Union[str, AblationArm]) -> AblationArm:
    return arm if isinstance(arm, AblationArm) else AblationArm(arm)


def measure_arm(config: TrainConfig, arm: AblationArm, corpus: np.ndarray,
                heldout: np.ndarray) -> AblationRow:
    """Train one arm and measure TLS, CLS_8, reuse and perplexity on held-out text."""
    model = train(config, corpus).model
    _, layers = collect_activations(model, heldout)
    reports = layer_reports(layers, (METRICS_CHUNK_LEN,))
    reuse = [r.reuse_ratio for r in reports if r.reuse_ratio is not None]
    return AblationRow(
        kind=arm.kind,
        lambda_cs0=config.objective.lambda_cs0 if arm.sparsified else None,
        tls=sum(r.tls for r in reports) / len(reports),
        cls8=sum(r.cls.get(METRICS_CHUNK_LEN, float("nan")) for r in reports) / len(reports),
        reuse=sum(reuse) / len(reuse) if reuse else None,
        ppl=model_perplexity(model, heldout),
    )


def calibrate_arm(config: TrainConfig, arm: AblationArm, target_tls: float,
                  corpus: np.ndarray, heldout: np.ndarray, out_dir: Path,
                  tolerance: float = 0.025, rounds: int = 6) -> AblationRow:
    """
    Search the arm's starting sparsifier factor so its held-out TLS lands
    within ``tolerance`` of ``target_tls``.

    Bisection over log(lambda_cs0) inside LAMBDA_BOUNDS, starting from the
    arm's own factor. Returns the closest row when ``rounds`` runs do not
    reach the tolerance.
    """
    if not arm.sparsified:
        raise ConfigError(f"ablation arm {arm.kind} has no sparsifier factor to calibrate")
    if not 0.0 < target_tls < 1.0 or tolerance <= 0 or rounds < 1:
        raise ConfigError("target TLS must lie in (0, 1), tolerance and rounds must be positive")
    low, high = (math.log(bound) for bound in LAMBDA_BOUNDS)
    start = config.objective.lambda_cs0 if arm.lambda_cs0 is None else arm.lambda_cs0
    log_factor = min(max(math.log(max(start, LAMBDA_BOUNDS[0])), low), high)
    best = None
    for attempt in range(rounds):
        factor = math.exp(log_factor)
        candidate = AblationArm(arm.kind, factor)
        row = measure_arm(candidate.config_for(config, out_dir / f"search{attempt}"),
                          candidate, corpus, heldout)
        _log.info("Calibrating %s: lambda_cs0 %.4g gives tls %.4f (target %.4f)",
                  arm.kind, factor, row.tls, target_tls)
        if best is None or abs(row.tls - target_tls) < abs(best.tls - target_tls):
            best = row
        if abs(row.tls - target_tls) <= tolerance:
            break
        if row.tls < target_tls:
            low = log_factor
        else:
            high = log_factor
        log_factor = (low + high) / 2.0
    return best


def run_ablation(config: TrainConfig, arms: Iterable[Union[str, AblationArm]], out_dir: Path,
                 match_tls: Optional[float] = None, tolerance: float = 0.025,
                 rounds: int = 6) -> List[AblationRow]:
    """
    Train every arm from the same seed and data and measure it on held-out text.

    With ``match_tls`` (an offset in TLS points above the first arm without
    a sparsifier, or above 0 when there is none), every sparsified arm
    without its own factor is calibrated onto that common TLS.
    """
    out_dir = Path(out_dir)
    arms = [_as_arm(arm) for arm in arms]
    corpus = ingest(Path(config.data.corpus))
    heldout = ingest(Path(config.data.heldout)) if config.data.heldout else corpus
    fixed = [arm for arm in arms if match_tls is None or not arm.sparsified
             or arm.lambda_cs0 is not None]
    measured = {}
    for arm in fixed:
        _log.info("Ablation arm %s: training", arm.label)
        measured[arm] = measure_arm(arm.config_for(config, out_dir / arm.dirname), arm,
                                    corpus, heldout)
    if match_tls is not None:
        baseline = next((measured[arm].tls for arm in fixed if not arm.sparsified), 0.0)
        target = baseline + match_tls
        for arm in arms:
            if arm not in measured:
                measured[arm] = calibrate_arm(config, arm, target, corpus, heldout,
                                              out_dir / arm.dirname, tolerance, rounds)
    rows = [measured[arm] for arm in arms]
    for row in rows:
        _log.info("Ablation arm %s: lambda_cs0 %s tls %.4f cls8 %.4f ppl %.3f", row.kind,
                  row.row()[1] or "-", row.tls, row.cls8, row.ppl)
    write_ablation_csv(rows, out_dir / "ablation.csv")
    return rows


def write_ablation_csv(rows: Iterable[AblationRow], path: Path) -> None:
    """Columns: kind, lambda_cs0, tls, cls8, reuse, ppl."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(ABLATION_HEADER)
        for row in rows:
            writer.writerow(row.row())
