# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0

"""Export the sparsity measurement suite."""
from .sparsity import (
    DEFAULT_CHUNK_LENGTHS,
    SparsityReport,
    activated,
    activation_magnitude,
    cls,
    mean_report,
    reuse_ratio,
    sparsity_report,
    tls,
    union_sparsity,
)
from .allocation import AllocationHistogram, allocation_histogram
