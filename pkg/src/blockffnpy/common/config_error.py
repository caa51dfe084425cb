# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Defines an error for invalid configurations."""


class ConfigError(ValueError):
    """Defines an error for invalid or unknown configuration values."""
