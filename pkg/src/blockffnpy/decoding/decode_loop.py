# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Speculative decoding loop with counted FFN cost."""
import json
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from blockffnpy.common import ConfigError, ContractViolation
from blockffnpy.decoding.drafters import Drafter, propose_drafts
from blockffnpy.decoding.target import TargetModel, ffn_config
from blockffnpy.decoding.verify import verify_chunk
from blockffnpy.kernel import cost_accounting

_log = logging.getLogger(__name__)

BYTES_PER_GIGABYTE = 1_000_000_000


@dataclass
class DecodeStats:
    """Everything one decode run produced and counted."""
    accepted_lengths: List[int] = field(default_factory=list)
    tokens: List[int] = field(default_factory=list)
    counted_ffn_bytes: int = 0
    counted_ffn_bytes_dense_equivalent: int = 0
    steps: int = 0

    @property
    def tokens_generated(self) -> int:
        """Tokens appended to the prompt."""
        return len(self.tokens)

    @property
    def mean_accepted_length(self) -> Optional[float]:
        """Mean accepted drafts per step."""
        return float(np.mean(self.accepted_lengths)) if self.accepted_lengths else None

    @property
    def median_accepted_length(self) -> Optional[float]:
        """Median accepted drafts per step."""
        return float(np.median(self.accepted_lengths)) if self.accepted_lengths else None

    @property
    def mean_tokens_per_step(self) -> Optional[float]:
        """Emitted tokens per verification, at least 1."""
        return self.tokens_generated / self.steps if self.steps else None

    @property
    def tokens_per_counted_gigabyte(self) -> Optional[float]:
        """Emitted tokens per 10^9 counted expert weight bytes."""
        if not self.counted_ffn_bytes:
            return None
        return self.tokens_generated * BYTES_PER_GIGABYTE / self.counted_ffn_bytes

    def to_dict(self) -> dict:
        """Summary for JSON output."""
        return {
            "steps": self.steps,
            "tokens_generated": self.tokens_generated,
            "mean_accepted_length": self.mean_accepted_length,
            "median_accepted_length": self.median_accepted_length,
            "mean_tokens_per_step": self.mean_tokens_per_step,
            "counted_ffn_bytes": self.counted_ffn_bytes,
            "counted_ffn_bytes_dense_equivalent": self.counted_ffn_bytes_dense_equivalent,
            "tokens_per_counted_gigabyte": self.tokens_per_counted_gigabyte,
        }

    def to_json(self) -> str:
        """Serialise the summary."""
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def dense_bytes_per_token(model: TargetModel, bytes_per_param: int = 4) -> int:
    """Expert weight bytes one autoregressive dense step touches over all layers."""
    config = ffn_config(model)
    return model.n_layers * config.n_experts * 2 * config.d_h * config.d_e * bytes_per_param


def decode_loop(model: TargetModel, drafter: Drafter, prompt: Sequence[int], max_tokens: int,
                n: int, bytes_per_param: int = 4) -> DecodeStats:
    """
    Propose and verify until ``max_tokens`` tokens are emitted. The final
    step proposes only as many drafts as tokens remain, and emitted tokens
    beyond ``max_tokens`` are dropped.
    """
    if not prompt:
        raise ConfigError("decoding needs a non-empty prompt")
    if max_tokens < 0 or n < 1:
        raise ConfigError("max_tokens must be non-negative and n positive")
    if len(prompt) + max_tokens > model.context_length:
        raise ContractViolation(
            f"prompt of {len(prompt)} plus {max_tokens} tokens exceeds "
            f"context length {model.context_length}")
    config = ffn_config(model)
    stats = DecodeStats()
    sequence = list(prompt)
    while stats.tokens_generated < max_tokens:
        remaining = max_tokens - stats.tokens_generated
        batch = propose_drafts(sequence, drafter, min(n, remaining))
        result = verify_chunk(model, batch)
        emitted = result.emitted[:remaining]
        sequence.extend(emitted)
        stats.tokens.extend(emitted)
        stats.accepted_lengths.append(result.accepted)
        stats.steps += 1
        for plan in result.plans:
            cost = cost_accounting(plan, config, bytes_per_param)
            stats.counted_ffn_bytes += cost.expert_weight_bytes_touched
            stats.counted_ffn_bytes_dense_equivalent += cost.dense_expert_weight_bytes
    _log.info("Decoded %d tokens in %d steps, mean accepted %s", stats.tokens_generated,
              stats.steps, stats.mean_accepted_length)
    return stats
