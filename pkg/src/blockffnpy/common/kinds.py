# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Contains the enums for router, expert, sparsifier and draft policy kinds."""
from enum import Enum
from typing import Type, TypeVar

from blockffnpy.common.config_error import ConfigError

KindT = TypeVar("KindT", bound=Enum)


class RouterKind(Enum):
    """An enum of the supported routers."""
    RELU_RMSNORM = 1
    RELU_PLAIN = 2
    TOPK_SOFTMAX = 3
    SHARED_TOPK_SOFTMAX = 4
    SIGMOID_NORM_TOPK = 5
    TOPP_SOFTMAX = 6

    @property
    def is_relu(self) -> bool:
        """ReLU routers activate an adaptive number of experts per token."""
        return self in (RouterKind.RELU_RMSNORM, RouterKind.RELU_PLAIN)

    @property
    def uses_top_k(self) -> bool:
        """Routers that keep a fixed number of routed experts."""
        return self in (
            RouterKind.TOPK_SOFTMAX,
            RouterKind.SHARED_TOPK_SOFTMAX,
            RouterKind.SIGMOID_NORM_TOPK,
        )

    @property
    def supports_shared(self) -> bool:
        """Routers that may reserve the first slots for shared experts."""
        return self in (RouterKind.SHARED_TOPK_SOFTMAX, RouterKind.SIGMOID_NORM_TOPK)


class ExpertKind(Enum):
    """An enum of the expert MLP variants."""
    NONGATED_SWISH = 1
    GATED_SWISH = 2


class SparsifierKind(Enum):
    """An enum of the objectives that push overall sparsity."""
    NONE = 0
    CS = 1
    L1 = 2
    ENT = 3


class DraftPolicy(Enum):
    """An enum of the draft proposers used by speculative decoding."""
    SELF_GREEDY = 1
    NGRAM = 2
    RANDOM = 3


def parse_kind(enum_type: Type[KindT], value) -> KindT:
    """
    Turn a config value into an enum member.

    Accepts a member, or its name in any case ("relu_rmsnorm", "CS").
    """
    if isinstance(value, enum_type):
        return value
    if isinstance(value, str):
        try:
            return enum_type[value.strip().upper()]
        except KeyError:
            pass
    names = ", ".join(member.name.lower() for member in enum_type)
    raise ConfigError(f"Unknown {enum_type.__name__} {value!r}, expected one of: {names}")
