# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Formatting functions primarily for the CLI and the reports."""

from textwrap import fill, indent
from typing import Iterator

WIDTH = 78
INDENT = 2

_SIZE_UNITS = ("bytes", "KB", "MB", "GB", "TB", "PB")


def fill_paragraph(text: str, width: int = WIDTH, indent_width: int = 0) -> str:
    """Wrap a single paragraph."""
    return indent(
        fill(text.strip(), width=width - indent_width), indent_width * " "
    )


def fill_all(text: str, width: int = WIDTH, indent_width: int = 0) -> str:
    """Wrap all paragraphs."""
    return "\n\n".join(
        fill_paragraph(paragraph, width=width, indent_width=indent_width)
        for paragraph in split_into_paragraphs(text)
    )


def split_into_paragraphs(text: str) -> Iterator[str]:
    """Yield all paragraphs in a text. A paragraph is a piece of text
    surrounded by empty lines.
    """
    paragraph = ""
    for line in text.splitlines():
        if line:
            paragraph = f"{paragraph} {line}" if paragraph else line
        elif paragraph:
            yield paragraph
            paragraph = ""
    if paragraph:
        yield paragraph


def human_size(size: int) -> str:
    """Decimal (powers of 1000) rendering of a byte count, three significant
    digits.

    >>> human_size(2_560_000)
    '2.56 MB'
    >>> human_size(25_600_000_000)
    '25.6 GB'
    >>> human_size(256)
    '256 bytes'
    """
    value = float(size)
    unit = 0
    while value >= 1000 and unit < len(_SIZE_UNITS) - 1:
        value /= 1000
        unit += 1
    if unit == 0:
        return f"{size} bytes"
    return f"{value:.3g} {_SIZE_UNITS[unit]}"


def exact_size(size: int) -> str:
    """Byte count with thousands separators followed by :func:`human_size`.

    >>> exact_size(2_560_000)
    '2,560,000 bytes (2.56 MB)'
    """
    if size < 1000:
        return human_size(size)
    return f"{size:,} bytes ({human_size(size)})"
