# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""
Toy decoder-only language model with BlockFFN layers.

Token and learned position embeddings feed pre-RMSNorm residual blocks
(causal multi-head attention, then BlockFFN), a final RMSNorm and an
untied output projection.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from blockffnpy.common import ContractViolation
from blockffnpy.ffn import (
    FfnParams,
    RouterActivations,
    TapedRouterActivations,
    expected_shapes,
    ffn_forward,
    ffn_forward_taped,
    init_ffn_params,
    router_forward,
)
from blockffnpy.kernel import ChunkUnionPlan, build_union_plan, sparse_chunk_ffn
from blockffnpy.numerics import GradTape, Variable, causal_attention, check_finite, rmsnorm
from blockffnpy.training.config import ModelConfig

EMBEDDING_STD = 0.02
FFN_PREFIX = "ffn."


@dataclass
class ForwardResult:
    """
    Logits for every position, router activations per layer, and the
    union plans of the chunk rows when a sparse chunk was requested.
    """
    logits: np.ndarray
    activations: List[RouterActivations] = field(default_factory=list)
    plans: List[ChunkUnionPlan] = field(default_factory=list)


def model_shapes(config: ModelConfig) -> Dict[str, tuple]:
    """Every tensor name and shape, in the order checkpoints store them."""
    d_h = config.d_h
    shapes = {
        "tok_emb": (config.vocab_size, d_h),
        "pos_emb": (config.context_length, d_h),
    }
    for layer in range(config.n_layers):
        prefix = f"layer{layer}."
        shapes[prefix + "attn_norm"] = (1, d_h)
        for name in ("w_q", "w_k", "w_v", "w_o"):
            shapes[prefix + name] = (d_h, d_h)
        shapes[prefix + "ffn_norm"] = (1, d_h)
        for name, shape in expected_shapes(config.ffn).items():
            shapes[prefix + FFN_PREFIX + name] = shape
    shapes["final_norm"] = (1, d_h)
    shapes["w_out"] = (d_h, config.vocab_size)
    return shapes


class ToyLM:
    """Parameters and both forwards (taped for training, plain for inference)."""

    def __init__(self, config: ModelConfig, tensors: Dict[str, np.ndarray]):
        shapes = model_shapes(config)
        if set(shapes) != set(tensors):
            missing = sorted(set(shapes) - set(tensors))
            extra = sorted(set(tensors) - set(shapes))
            raise ContractViolation(f"model tensors differ: missing {missing}, unexpected {extra}")
        for name, shape in shapes.items():
            if tensors[name].shape != shape:
                raise ContractViolation(f"{name} has shape {tensors[name].shape}, expected {shape}")
        self.config = config
        self.tensors = {name: tensors[name] for name in shapes}

    @classmethod
    def init(cls, config: ModelConfig, rng: np.random.Generator, dtype=np.float32) -> "ToyLM":
        """Fresh weights: small normal embeddings, 1 / fan-in projections, unit gains."""
        d_h = config.d_h
        tensors = {
            "tok_emb": rng.normal(0.0, EMBEDDING_STD, (config.vocab_size, d_h)),
            "pos_emb": rng.normal(0.0, EMBEDDING_STD, (config.context_length, d_h)),
        }
        for layer in range(config.n_layers):
            prefix = f"layer{layer}."
            tensors[prefix + "attn_norm"] = np.ones((1, d_h))
            for name in ("w_q", "w_k", "w_v", "w_o"):
                tensors[prefix + name] = rng.normal(0.0, np.sqrt(1.0 / d_h), (d_h, d_h))
            tensors[prefix + "ffn_norm"] = np.ones((1, d_h))
            for name, value in init_ffn_params(config.ffn, rng, dtype).tensors().items():
                tensors[prefix + FFN_PREFIX + name] = value
        tensors["final_norm"] = np.ones((1, d_h))
        tensors["w_out"] = rng.normal(0.0, np.sqrt(1.0 / d_h), (d_h, config.vocab_size))
        return cls(config, {name: np.ascontiguousarray(value, dtype=dtype)
                            for name, value in tensors.items()})

    def astype(self, dtype) -> "ToyLM":
        """A copy with every tensor cast to ``dtype``."""
        return ToyLM(self.config, {name: np.ascontiguousarray(value, dtype=dtype)
                                   for name, value in self.tensors.items()})

    @property
    def vocab_size(self) -> int:
        """Output vocabulary size."""
        return self.config.vocab_size

    @property
    def context_length(self) -> int:
        """Longest sequence the position table covers."""
        return self.config.context_length

    @property
    def n_layers(self) -> int:
        """Number of residual blocks."""
        return self.config.n_layers

    def ffn_params(self, layer: int) -> FfnParams:
        """The BlockFFN tensors of one layer."""
        prefix = f"layer{layer}.{FFN_PREFIX}"
        return FfnParams(**{name[len(prefix):]: value for name, value in self.tensors.items()
                            if name.startswith(prefix)})

    def _check_tokens(self, length: int) -> None:
        if length < 1 or length > self.context_length:
            raise ContractViolation(
                f"sequence length {length} outside [1, {self.context_length}]")

    def forward_taped(self, tape: GradTape, variables: Dict[str, Variable],
                      tokens: np.ndarray) -> Tuple[Variable, List[TapedRouterActivations]]:
        """
        Training forward over a batch of equally long sequences
        (``tokens`` is batch x seq_len). Rows of the result are the
        sequences packed one after another.
        """
        tokens = np.asarray(tokens, dtype=np.int64)
        batch, seq_len = tokens.shape
        self._check_tokens(seq_len)
        positions = np.tile(np.arange(seq_len), batch)
        x = tape.add(tape.embedding(variables["tok_emb"], tokens.reshape(-1)),
                     tape.embedding(variables["pos_emb"], positions))
        activations = []
        for layer in range(self.n_layers):
            prefix = f"layer{layer}."
            h = tape.rmsnorm(x, variables[prefix + "attn_norm"])
            attended = tape.causal_attention(
                tape.matmul(h, variables[prefix + "w_q"]),
                tape.matmul(h, variables[prefix + "w_k"]),
                tape.matmul(h, variables[prefix + "w_v"]),
                self.config.n_heads, seq_len)
            x = tape.add(x, tape.matmul(attended, variables[prefix + "w_o"]))
            h = tape.rmsnorm(x, variables[prefix + "ffn_norm"])
            ffn_vars = {name[len(prefix + FFN_PREFIX):]: var for name, var in variables.items()
                        if name.startswith(prefix + FFN_PREFIX)}
            y, acts = ffn_forward_taped(tape, h, ffn_vars, self.config.ffn)
            activations.append(acts)
            x = tape.add(x, y)
        x = tape.rmsnorm(x, variables["final_norm"])
        return tape.matmul(x, variables["w_out"]), activations

    def _attention_block(self, x: np.ndarray, layer: int) -> np.ndarray:
        prefix = f"layer{layer}."
        w = self.tensors
        h = rmsnorm(x, w[prefix + "attn_norm"])
        attended, _ = causal_attention(h @ w[prefix + "w_q"], h @ w[prefix + "w_k"],
                                       h @ w[prefix + "w_v"], self.config.n_heads, x.shape[0])
        return x + attended @ w[prefix + "w_o"]

    def forward(self, tokens: Sequence[int], sparse_from: Optional[int] = None) -> ForwardResult:
        """
        Inference forward over one sequence.

        Rows before ``sparse_from`` run the expert-by-expert layer; rows
        from ``sparse_from`` on form one chunk that runs through the
        chunk-union kernel, and its plan per layer is returned.
        """
        tokens = np.asarray(tokens, dtype=np.int64).reshape(-1)
        self._check_tokens(tokens.size)
        if sparse_from is not None and not 0 <= sparse_from < tokens.size:
            raise ContractViolation(f"sparse_from {sparse_from} outside [0, {tokens.size})")
        w = self.tensors
        x = w["tok_emb"][tokens] + w["pos_emb"][:tokens.size]
        result = ForwardResult(logits=np.empty(0))
        for layer in range(self.n_layers):
            x = self._attention_block(x, layer)
            h = rmsnorm(x, w[f"layer{layer}.ffn_norm"])
            params = self.ffn_params(layer)
            if sparse_from is None:
                y, acts = ffn_forward(h, params, self.config.ffn)
            else:
                acts = router_forward(h, params, self.config.ffn)
                y = np.empty_like(h)
                if sparse_from:
                    y[:sparse_from] = ffn_forward(h[:sparse_from], params, self.config.ffn)[0]
                chunk = acts.a[sparse_from:]
                plan = build_union_plan(chunk)
                y[sparse_from:] = sparse_chunk_ffn(h[sparse_from:], params, plan, chunk,
                                                   self.config.ffn)
                result.plans.append(plan)
            result.activations.append(acts)
            x = x + y
        x = rmsnorm(x, w["final_norm"])
        result.logits = check_finite(x @ w["w_out"], "ToyLM.forward")
        return result
