# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0

"""Export the training objectives and the adaptive factor scheduler."""
from .losses import (
    ACT_PROB_CLAMP,
    BCE_CLAMP,
    DEFAULT_ALPHA,
    DEFAULT_CHUNK_LEN,
    activation_locality_loss,
    activation_locality_loss_taped,
    chunk_sparsification_loss,
    chunk_sparsification_loss_taped,
    l1_loss,
    l1_loss_taped,
    load_balance_loss,
    load_balance_loss_taped,
    router_entropy_loss,
    router_entropy_loss_taped,
)
from .bundle import LossBundle, LossParts, total_loss
from .scheduler import SchedulerState, new_scheduler_state, scheduler_step
from .config import ABLATION_KINDS, ObjectiveConfig, objective_for_kind
