# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Defines an error for broken operation preconditions."""


class ContractViolation(ValueError):
    """
    Raised when the inputs of an operation break its preconditions,
    for example mismatched shapes or a plan built from other activations.
    """
