# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Defines an error for NaN or infinite values."""


class NonFiniteError(ArithmeticError):
    """A primitive produced, or was handed, a NaN or infinite value."""
