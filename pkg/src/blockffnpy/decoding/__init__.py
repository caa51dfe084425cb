# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0

"""Export the speculative decoding harness."""
from .target import TargetModel, ffn_config
from .greedy import greedy_decode
from .drafters import (
    DraftBatch,
    Drafter,
    NgramDrafter,
    RandomDrafter,
    SelfGreedyDrafter,
    build_drafter,
    propose_drafts,
)
from .verify import VerifyResult, verify_chunk
from .decode_loop import DecodeStats, decode_loop, dense_bytes_per_token
