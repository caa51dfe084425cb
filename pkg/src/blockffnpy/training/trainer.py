# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""
Training loop for the toy BlockFFN language model.

Every step samples a batch of windows from the corpus, builds the
objective on a fresh gradient tape, clips, applies AdamW under the WSD
schedule and feeds the chunk sparsification value to the adaptive factor
scheduler.
"""
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from blockffnpy.common import ConfigError, NonFiniteError, SparsifierKind
from blockffnpy.metrics import cls, reuse_ratio, tls
from blockffnpy.numerics import GradTape, Variable
from blockffnpy.objectives import (
    LossBundle,
    LossParts,
    activation_locality_loss,
    activation_locality_loss_taped,
    chunk_sparsification_loss,
    chunk_sparsification_loss_taped,
    l1_loss_taped,
    load_balance_loss_taped,
    new_scheduler_state,
    router_entropy_loss_taped,
    scheduler_step,
    total_loss,
)
from blockffnpy.training.checkpoint import save_checkpoint
from blockffnpy.training.config import TrainConfig
from blockffnpy.training.model import ToyLM
from blockffnpy.training.optimizer import AdamW, clip_grad_norm, learning_rate
from blockffnpy.training.tokenizer import ingest

_log = logging.getLogger(__name__)

METRICS_HEADER = ("step", "lr", "L_lm", "L_al", "L_cs", "lambda_cs", "tls", "cls8", "reuse")
METRICS_CHUNK_LEN = 8
FINAL_CHECKPOINT = "final.ckpt"
DIVERGED_CHECKPOINT = "diverged.ckpt"


class TrainingDiverged(RuntimeError):
    """
    The loss stopped being finite. A diagnostic checkpoint of the last
    parameters has been written before this is raised.
    """


@dataclass
class StepRecord:
    """One row of the metrics log."""
    step: int
    lr: float
    l_lm: float
    l_al: float
    l_cs: float
    lambda_cs: float
    tls: float
    cls8: float
    reuse: Optional[float]

    def row(self) -> list:
        """CSV cells, an empty cell for an undefined reuse ratio."""
        reuse = "" if self.reuse is None else f"{self.reuse:.8g}"
        return [self.step, f"{self.lr:.8g}", f"{self.l_lm:.8g}", f"{self.l_al:.8g}",
                f"{self.l_cs:.8g}", f"{self.lambda_cs:.8g}", f"{self.tls:.8g}",
                f"{self.cls8:.8g}", reuse]


@dataclass
class TrainResult:
    """The trained model, its logged history and where artifacts went."""
    model: ToyLM
    history: List[StepRecord] = field(default_factory=list)
    metrics_path: Optional[Path] = None
    final_checkpoint: Optional[Path] = None


def sample_batch(tokens: np.ndarray, batch_size: int, seq_len: int,
                 rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Random windows of ``seq_len`` inputs and their next-token targets."""
    starts = rng.integers(0, tokens.size - seq_len, size=batch_size)
    windows = np.stack([tokens[start:start + seq_len + 1] for start in starts])
    return windows[:, :-1], windows[:, 1:]


def batch_sparsity(layer_activations: Sequence[np.ndarray], seq_len: int,
                   chunk_len: int = METRICS_CHUNK_LEN) -> Tuple[float, float, Optional[float]]:
    """TLS, CLS and reuse ratio averaged over layers and the packed sequences."""
    tls_values, cls_values, reuse_values = [], [], []
    for a in layer_activations:
        tls_values.append(tls(a))
        for start in range(0, a.shape[0], seq_len):
            sequence = a[start:start + seq_len]
            if seq_len >= chunk_len:
                cls_values.append(cls(sequence, chunk_len))
            reuse = reuse_ratio(sequence) if seq_len >= 2 else None
            if reuse is not None:
                reuse_values.append(reuse)
    return (float(np.mean(tls_values)),
            float(np.mean(cls_values)) if cls_values else float("nan"),
            float(np.mean(reuse_values)) if reuse_values else None)


def _layer_mean(tape: GradTape, terms: List[Variable]) -> Variable:
    total = terms[0]
    for term in terms[1:]:
        total = tape.add(total, term)
    return tape.scale(total, 1.0 / len(terms))


class Trainer:
    """Owns the model, optimizer and scheduler state of one run."""

    def __init__(self, config: TrainConfig, corpus: Optional[np.ndarray] = None):
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.model = ToyLM.init(config.model, self.rng)
        self.corpus = ingest(Path(config.data.corpus)) if corpus is None else np.asarray(corpus)
        if self.corpus.size < config.model.context_length + 1:
            raise ConfigError(
                f"corpus of {self.corpus.size} tokens is shorter than one training window")
        self.optimizer = AdamW(config.optim)
        objective = config.objective
        self.scheduler = (new_scheduler_state(objective.lambda_cs0, objective.n_st,
                                              objective.n_adj, objective.gamma_min)
                          if objective.uses_scheduler else None)
        self.step_count = 0
        self.out_dir = Path(config.data.out_dir)

    @property
    def lambda_cs(self) -> float:
        """Current sparsifier factor; zero without a sparsifier."""
        return self.scheduler.lambda_cs if self.scheduler else 0.0

    def _sparsifier_term(self, tape: GradTape, a1: Variable, seq_len: int) -> Variable:
        kind = self.config.objective.sparsifier
        if kind is SparsifierKind.CS:
            return chunk_sparsification_loss_taped(tape, a1, self.config.objective.chunk_len,
                                                   seq_len)
        if kind is SparsifierKind.L1:
            return l1_loss_taped(tape, a1)
        return router_entropy_loss_taped(tape, a1)

    def _objective(self, tape: GradTape, logits: Variable, targets: np.ndarray,
                   activations, seq_len: int) -> Tuple[Variable, LossBundle]:
        objective = self.config.objective
        l_lm = tape.cross_entropy(logits, targets)
        total = l_lm
        lambda_al = objective.lambda_al if objective.al_enabled else 0.0
        lambda_cs = self.lambda_cs
        lambda_aux = objective.lambda_balance if objective.balance_enabled else 0.0

        if lambda_al > 0:
            al = _layer_mean(tape, [activation_locality_loss_taped(
                tape, acts.a0, objective.alpha, seq_len, objective.detach_target)
                for acts in activations])
            total = tape.add(total, tape.scale(al, lambda_al))
            al_value = al.item()
        else:
            al_value = float(np.mean([activation_locality_loss(acts.a0.value, objective.alpha,
                                                               seq_len)
                                      for acts in activations]))

        if lambda_cs > 0:
            cs = _layer_mean(tape, [self._sparsifier_term(tape, acts.a1, seq_len)
                                    for acts in activations])
            total = tape.add(total, tape.scale(cs, lambda_cs))
            cs_value = cs.item()
        else:
            cs_value = float(np.mean([chunk_sparsification_loss(acts.a1.value, objective.chunk_len,
                                                                seq_len)
                                      for acts in activations]))

        aux_value = 0.0
        if lambda_aux > 0:
            aux = _layer_mean(tape, [load_balance_loss_taped(tape, acts.a1)
                                     for acts in activations])
            total = tape.add(total, tape.scale(aux, lambda_aux))
            aux_value = aux.item()

        sparsifier = objective.sparsifier if lambda_cs > 0 else SparsifierKind.CS
        bundle = total_loss(LossParts(l_lm.item(), al_value, cs_value, aux_value),
                            lambda_al, lambda_cs, lambda_aux, sparsifier)
        return total, bundle

    def _diverged(self, error: Exception) -> None:
        path = save_checkpoint(self.out_dir / DIVERGED_CHECKPOINT, self.config,
                               self.model.tensors, self.step_count)
        raise TrainingDiverged(
            f"Loss became non-finite at step {self.step_count + 1}; "
            f"parameters saved to {path}") from error

    def step(self) -> StepRecord:
        """Run one optimisation step and return its metrics."""
        seq_len = self.config.model.context_length
        inputs, targets = sample_batch(self.corpus, self.config.data.batch_size, seq_len, self.rng)
        tape = GradTape()
        variables = {name: Variable(value, name=name)
                     for name, value in self.model.tensors.items()}
        lambda_cs = self.lambda_cs
        try:
            logits, activations = self.model.forward_taped(tape, variables, inputs)
            total, bundle = self._objective(tape, logits, targets.reshape(-1), activations,
                                            seq_len)
        except NonFiniteError as error:
            self._diverged(error)

        tape.backward(total)
        grads = {name: tape.gradient(var) for name, var in variables.items()}
        grad_norm = clip_grad_norm(grads, self.config.optim.grad_clip)
        if not math.isfinite(grad_norm):
            self._diverged(NonFiniteError(f"gradient norm {grad_norm}"))
        self.step_count += 1
        lr = learning_rate(self.step_count, self.config.optim)
        self.optimizer.step(self.model.tensors, grads, lr)

        if self.scheduler is not None:
            self.scheduler = scheduler_step(self.scheduler, bundle.l_cs)
        tls_value, cls_value, reuse = batch_sparsity(
            [acts.a.value for acts in activations], seq_len)
        return StepRecord(self.step_count, lr, bundle.l_lm, bundle.l_al, bundle.l_cs,
                          lambda_cs, tls_value, cls_value, reuse)

    def run(self) -> TrainResult:
        """Train for ``data.steps`` steps, logging and checkpointing along the way."""
        data = self.config.data
        self.out_dir.mkdir(parents=True, exist_ok=True)
        result = TrainResult(self.model, metrics_path=self.out_dir / "metrics.csv")
        with open(result.metrics_path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(METRICS_HEADER)
            while self.step_count < data.steps:
                record = self.step()
                if record.step % data.log_interval == 0 or record.step == data.steps:
                    writer.writerow(record.row())
                    handle.flush()
                    result.history.append(record)
                    _log.info("step %d lr %.3g L_lm %.4f L_al %.4f L_cs %.4f "
                              "lambda_cs %.3g tls %.3f cls8 %.3f",
                              record.step, record.lr, record.l_lm, record.l_al, record.l_cs,
                              record.lambda_cs, record.tls, record.cls8)
                if record.step % data.checkpoint_interval == 0 and record.step < data.steps:
                    save_checkpoint(self.out_dir / f"step{record.step:06d}.ckpt", self.config,
                                    self.model.tensors, record.step)
        result.final_checkpoint = save_checkpoint(self.out_dir / FINAL_CHECKPOINT, self.config,
                                                  self.model.tensors, self.step_count)
        return result


def train(config: TrainConfig, corpus: Optional[np.ndarray] = None) -> TrainResult:
    """Run a full training job."""
    return Trainer(config, corpus).run()
