# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Misc. utilities for seig."""

import logging
import os
import random
import secrets
import struct
from argparse import ArgumentTypeError
from gettext import gettext as _
from os import PathLike
from pathlib import Path
from typing import List, Optional, Protocol, Sequence, Tuple, Union

from . import FormatError

# TODO: When removing Python 3.8 support, use PathLike[str]
StrPath = Union[str, PathLike]

#: Environment variable that overrides the default data directory.
DATA_DIR_ENV = "SEIG_DATA_DIR"
DEFAULT_DATA_DIR = "seig-data"

_LOGGER = logging.getLogger(__name__)


class RandomSource(Protocol):
    """The subset of :class:`random.Random` that seig draws from. Tests pass
    objects with a scripted :meth:`randrange` to force coefficients.
    """

    def randrange(self, start: int, stop: int = ...) -> int:
        ...

    def getrandbits(self, k: int) -> int:
        ...


def setup_logging(level: int = logging.WARNING) -> None:
    """Configure logging for seig.

    You can only call this function once.
    """
    # library_logger is the root logger for seig. We configure logging solely
    # for seig, not for any other libraries.
    library_logger = logging.getLogger("seig")

    if not library_logger.hasHandlers():
        library_logger.setLevel(level)
        handler = logging.StreamHandler()
        formatter = logging.Formatter("%(name)s - %(levelname)s - %(message)s")
        handler.setFormatter(formatter)
        library_logger.addHandler(handler)


def make_rng(seed: Optional[int] = None) -> random.Random:
    """Return a reproducible generator for *seed*, or one backed by the
    operating system's entropy pool if *seed* is None.

    >>> make_rng(7).randrange(1000) == make_rng(7).randrange(1000)
    True
    """
    if seed is None:
        return secrets.SystemRandom()
    return random.Random(seed)


def resolve_data_dir(value: Optional[StrPath] = None) -> Path:
    """Find the data directory. An explicit *value* wins over the environment,
    which wins over the default.
    """
    if value is not None:
        return Path(value)
    from_env = os.environ.get(DATA_DIR_ENV)
    if from_env:
        _LOGGER.debug("data directory taken from %s", DATA_DIR_ENV)
        return Path(from_env)
    return Path(DEFAULT_DATA_DIR)


def int_to_bytes(value: int, width: int) -> bytes:
    """Big-endian, zero-padded to *width* bytes.

    >>> int_to_bytes(258, 4)
    b'\\x00\\x00\\x01\\x02'
    """
    try:
        return int(value).to_bytes(width, "big")
    except OverflowError as error:
        raise FormatError(
            _("{value} does not fit in {width} bytes").format(
                value=value, width=width
            )
        ) from error


def int_from_bytes(data: bytes) -> int:
    """Inverse of :func:`int_to_bytes`."""
    return int.from_bytes(data, "big")


def byte_length(value: int) -> int:
    """Number of bytes needed to hold *value*, at least one.

    >>> byte_length(0), byte_length(255), byte_length(256)
    (1, 1, 2)
    """
    return max(1, (value.bit_length() + 7) // 8)


def pack_integers(values: Sequence[int]) -> bytes:
    """Serialize non-negative integers as u32 length + big-endian bytes each."""
    chunks = []
    for value in values:
        width = byte_length(value)
        chunks.append(struct.pack("!I", width))
        chunks.append(int_to_bytes(value, width))
    return b"".join(chunks)


def unpack_integers(
    data: bytes, count: int, offset: int = 0
) -> Tuple[List[int], int]:
    """Read *count* integers written by :func:`pack_integers`. Return them
    and the offset just past the last one.
    """
    values = []
    for _index in range(count):
        if offset + 4 > len(data):
            raise FormatError(_("truncated integer length"))
        (width,) = struct.unpack_from("!I", data, offset)
        offset += 4
        if offset + width > len(data):
            raise FormatError(_("truncated integer"))
        values.append(int_from_bytes(data[offset : offset + width]))
        offset += width
    return values, offset


class PathType:
    """argparse type for matrix and ciphertext files. *mode* is ``"r"`` for
    an existing file or ``"w"`` for a file that may be created.
    """

    def __init__(self, mode: str = "r", force_file: bool = False):
        if mode not in ("r", "w"):
            raise ValueError(f"mode='{mode}' is not valid")
        self._mode = mode
        self._force_file = force_file

    def __call__(self, string: str) -> Path:
        path = Path(string)
        try:
            if self._mode == "r":
                if not os.access(path, os.R_OK):
                    raise ArgumentTypeError(
                        _("can't open '{}'").format(path)
                    )
                if self._force_file and not path.is_file():
                    raise ArgumentTypeError(
                        _("'{}' is not a file").format(path)
                    )
            elif path.is_dir():
                raise ArgumentTypeError(
                    _("can't write to directory '{}'").format(path)
                )
            elif not os.access(
                path if path.exists() else path.parent, os.W_OK
            ):
                raise ArgumentTypeError(_("can't write to '{}'").format(path))
        except OSError as error:
            raise ArgumentTypeError(
                _("can't read or write '{}'").format(path)
            ) from error
        return path
