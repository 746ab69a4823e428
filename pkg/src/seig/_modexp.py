# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Modular exponentiation strategies used by the cloud engine.

All strategies compute ``base ** exponent % modulus`` for non-negative
exponents. The hand-written ones count the squarings and multiplications they
perform, which the benchmark reports per row.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Optional

import gmpy2

DEFAULT_WINDOW = 4


@dataclass
class ExpCounter:
    """Operation counts accumulated over any number of exponentiations."""

    calls: int = 0
    squarings: int = 0
    multiplications: int = 0

    def merge(self, other: "ExpCounter") -> None:
        """Add the counts of *other* to this counter."""
        self.calls += other.calls
        self.squarings += other.squarings
        self.multiplications += other.multiplications


ExpFunc = Callable[[int, int, int, Optional[ExpCounter]], int]


def builtin_exp(
    base: int,
    exponent: int,
    modulus: int,
    counter: Optional[ExpCounter] = None,
) -> int:
    """gmpy2's own powmod. Only calls are counted.

    >>> builtin_exp(3, 5, 7)
    5
    """
    if counter is not None:
        counter.calls += 1
    return int(gmpy2.powmod(base, exponent, modulus))


def binary_exp(
    base: int,
    exponent: int,
    modulus: int,
    counter: Optional[ExpCounter] = None,
) -> int:
    """Left-to-right square-and-multiply.

    >>> binary_exp(3, 5, 7)
    5
    >>> binary_exp(3, 0, 7)
    1
    """
    if counter is not None:
        counter.calls += 1
    result = gmpy2.mpz(1)
    base = gmpy2.f_mod(gmpy2.mpz(base), modulus)
    squarings = multiplications = 0
    for i in range(gmpy2.bit_length(exponent) - 1, -1, -1):
        result = gmpy2.f_mod(gmpy2.square(result), modulus)
        squarings += 1
        if gmpy2.bit_test(exponent, i):
            result = gmpy2.f_mod(result * base, modulus)
            multiplications += 1
    if counter is not None:
        counter.squarings += squarings
        counter.multiplications += multiplications
    return int(gmpy2.f_mod(result, modulus))


def window_exp(
    base: int,
    exponent: int,
    modulus: int,
    counter: Optional[ExpCounter] = None,
    width: int = DEFAULT_WINDOW,
) -> int:
    """Fixed-window exponentiation with ``2**width`` precomputed powers.

    >>> window_exp(3, 5, 7)
    5
    >>> window_exp(2, 2**70 + 13, 1_000_003) == pow(2, 2**70 + 13, 1_000_003)
    True
    """
    if width < 1:
        raise ValueError("window width must be at least 1")
    if counter is not None:
        counter.calls += 1
    if exponent == 0:
        return 1 % modulus

    base = gmpy2.f_mod(gmpy2.mpz(base), modulus)
    mask = (1 << width) - 1
    table = [gmpy2.mpz(1), base]
    for _ in range(2, 1 << width):
        table.append(gmpy2.f_mod(table[-1] * base, modulus))
    multiplications = len(table) - 2
    squarings = 0

    digits = (gmpy2.bit_length(exponent) + width - 1) // width
    shift = (digits - 1) * width
    result = table[(exponent >> shift) & mask]
    for position in range(digits - 2, -1, -1):
        for _ in range(width):
            result = gmpy2.f_mod(gmpy2.square(result), modulus)
        squarings += width
        digit = (exponent >> (position * width)) & mask
        if digit:
            result = gmpy2.f_mod(result * table[digit], modulus)
            multiplications += 1

    if counter is not None:
        counter.squarings += squarings
        counter.multiplications += multiplications
    return int(result)


STRATEGIES: Dict[str, ExpFunc] = {
    "builtin": builtin_exp,
    "binary": binary_exp,
    "window": window_exp,
}

DEFAULT_STRATEGY = "window"


def get_strategy(name: str) -> ExpFunc:
    """Look up a strategy by name."""
    try:
        return STRATEGIES[name]
    except KeyError:
        raise ValueError(
            f"unknown exponentiation strategy '{name}', choose from"
            f" {', '.join(sorted(STRATEGIES))}"
        ) from None
