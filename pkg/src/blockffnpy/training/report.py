# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Sparsity, CLS curve, allocation and magnitude reports of a trained model."""
import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

import numpy as np

from blockffnpy.metrics import (
    DEFAULT_CHUNK_LENGTHS,
    SparsityReport,
    activation_magnitude,
    allocation_histogram,
    mean_report,
    sparsity_report,
)
from blockffnpy.training.evaluate import EmptyHeldoutError, load_model
from blockffnpy.training.model import ToyLM
from blockffnpy.training.tokenizer import ingest

_log = logging.getLogger(__name__)


@dataclass
class ReportArtifacts:
    """Paths of the files one report run writes."""
    sparsity_json: Path
    cls_curve_csv: Path
    allocation_csv: Path
    magnitude_csv: Path


def collect_activations(model: ToyLM, tokens: np.ndarray,
                        max_windows: Optional[int] = None) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    Run the model over consecutive context-length windows and return the
    token ids with the activation values A of every layer, row-aligned.
    """
    tokens = np.asarray(tokens, dtype=np.int64).reshape(-1)
    ids, per_layer = [], [[] for _ in range(model.n_layers)]
    length = model.context_length
    for index, start in enumerate(range(0, tokens.size, length)):
        if max_windows is not None and index >= max_windows:
            break
        window = tokens[start:start + length]
        result = model.forward(window)
        ids.append(window)
        for layer, acts in enumerate(result.activations):
            per_layer[layer].append(acts.a)
    if not ids:
        raise EmptyHeldoutError("no tokens to measure")
    return np.concatenate(ids), [np.concatenate(rows) for rows in per_layer]


def layer_reports(layers: Iterable[np.ndarray],
                  chunk_lengths: Iterable[int] = DEFAULT_CHUNK_LENGTHS) -> List[SparsityReport]:
    """One sparsity report per layer."""
    chunk_lengths = tuple(chunk_lengths)
    return [sparsity_report(a, chunk_lengths, with_union=True) for a in layers]


def write_report(checkpoint_path: Path, data_path: Path, out_dir: Path,
                 chunk_lengths: Iterable[int] = DEFAULT_CHUNK_LENGTHS,
                 max_windows: Optional[int] = None) -> ReportArtifacts:
    """Measure a checkpoint on a corpus file and write every report table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = load_model(checkpoint_path)
    ids, layers = collect_activations(model, ingest(data_path), max_windows)
    reports = layer_reports(layers, chunk_lengths)
    mean = mean_report(reports)
    artifacts = ReportArtifacts(
        sparsity_json=out_dir / "sparsity.json",
        cls_curve_csv=out_dir / "cls_curve.csv",
        allocation_csv=out_dir / "allocation.csv",
        magnitude_csv=out_dir / "magnitude.csv",
    )

    artifacts.sparsity_json.write_text(json.dumps(
        {"layers": [report.to_dict() for report in reports], "mean": mean.to_dict()},
        indent=2, sort_keys=True), encoding="utf-8")

    with open(artifacts.cls_curve_csv, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["L"] + [f"layer{i}" for i in range(len(reports))] + ["mean"])
        for length in sorted(mean.cls):
            writer.writerow([length] + [f"{r.cls[length]:.6f}" for r in reports]
                            + [f"{mean.cls[length]:.6f}"])

    # ratio per token over the experts of all layers
    allocation_histogram(ids, np.hstack(layers)).write_csv(artifacts.allocation_csv)

    with open(artifacts.magnitude_csv, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["layer", "magnitude"])
        for layer, a in enumerate(layers):
            writer.writerow([layer, f"{activation_magnitude(a):.6f}"])

    _log.info("Report for %s over %d tokens written to %s", checkpoint_path, ids.size, out_dir)
    return artifacts
