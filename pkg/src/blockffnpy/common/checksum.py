# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""CRC-32 checksums for the integrity fields of checkpoint files."""
from crc import Calculator, Configuration

# CRC configuration (IEEE 802.3)
WIDTH = 32  # bits
POLY = 0x04C11DB7  # Polynomial
INIT_VALUE = 0xFFFFFFFF  # Init value
FINAL_XOR_VALUE = 0xFFFFFFFF  # Final XOR value
REVERSE_INPUT = True  # Input reflection
REVERSE_OUTPUT = True  # Output reflection

_configuration = Configuration(
    WIDTH, POLY, INIT_VALUE, FINAL_XOR_VALUE, REVERSE_INPUT, REVERSE_OUTPUT)
_calculator = Calculator(_configuration, optimized=True)


def crc32(data: bytes) -> int:
    """Calculate the CRC-32 checksum of a byte string."""
    return _calculator.checksum(data)
