# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Shared enums, exceptions and helpers."""
from .config_error import ConfigError
from .contract_violation import ContractViolation
from .non_finite_error import NonFiniteError
from .kinds import DraftPolicy, ExpertKind, RouterKind, SparsifierKind, parse_kind
from .checksum import crc32
