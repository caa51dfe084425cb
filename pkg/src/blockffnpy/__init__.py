# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""BlockFFNPy is a desk-scale lab for chunk-sparse BlockFFN layers: training, metrics, kernel and decoding."""
