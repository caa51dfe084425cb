# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Byte-level tokenizer: ids 0..255 are bytes, 256 is reserved for end-of-text."""
import logging
from pathlib import Path
from typing import Iterable

import numpy as np

_log = logging.getLogger(__name__)

BYTE_VOCAB = 256
EOT_TOKEN = 256
VOCAB_SIZE = 257


class IngestError(OSError):
    """A corpus file could not be read."""


def encode(text: str) -> np.ndarray:
    """UTF-8 bytes of ``text`` as token ids."""
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.int64)


def decode(tokens: Iterable[int]) -> str:
    """Bytes back to text; end-of-text and undecodable bytes are dropped or replaced."""
    data = bytes(int(token) for token in tokens if 0 <= int(token) < BYTE_VOCAB)
    return data.decode("utf-8", errors="replace")


def ingest(path: Path) -> np.ndarray:
    """Read a corpus file as a flat array of byte tokens."""
    try:
        data = Path(path).read_bytes()
    except OSError as error:
        raise IngestError(f"Cannot read corpus {path}: {error}") from error
    tokens = np.frombuffer(data, dtype=np.uint8).astype(np.int64)
    _log.debug("Ingested %d bytes from %s", tokens.size, path)
    return tokens
