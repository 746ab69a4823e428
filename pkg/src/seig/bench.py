# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Sizes and costs at production scale.

Sizes follow from the key size alone and are exact. Timings are measured on
a small sample of elements on this machine and scaled up to the requested
dimension.
"""

import logging
import math
import sys
import time
import zlib
from argparse import ArgumentParser, Namespace
from dataclasses import asdict, dataclass
from gettext import gettext as _
from typing import IO, Any, Dict, Optional

from ._modexp import DEFAULT_STRATEGY, STRATEGIES, ExpCounter, get_strategy
from ._util import RandomSource, byte_length, make_rng
from .codec import DEFAULT_Q_BITS, default_q
from .paillier import (
    PaillierKeypair,
    decrypt,
    encrypt_vector,
    keygen,
    serialize,
)
from .store import (
    DEFAULT_BLOCK_BYTES,
    ciphertext_width,
    matrix_payload_size,
    rows_per_block,
)

_LOGGER = logging.getLogger(__name__)

REFERENCE_LABEL = (
    "hardware-dependent; published reference values: encrypt 56 s / decrypt"
    " 31 s per 10,000-dim vector"
)
DEFAULT_MAP_SLOTS = 256
#: Bytes of a double.
DOUBLE_BYTES = 8


@dataclass
class BenchReport:
    """Everything :func:`run_bench` measured or computed."""

    key_bits: int
    n: int
    ciphertext_width: int
    vector_bytes: int
    text_vector_bytes: int
    compressed_vector_bytes: int
    compressed_binary_bytes: int
    plain_vector_bytes: int
    sample: int
    encrypt_seconds: float
    decrypt_seconds: float
    strategy: str = DEFAULT_STRATEGY
    matrix_bytes: Optional[int] = None
    plain_matrix_bytes: Optional[int] = None
    pool_bytes: Optional[int] = None
    pool_vectors: int = 0
    block_bytes: int = DEFAULT_BLOCK_BYTES
    map_blocks: Optional[int] = None
    map_slots: int = DEFAULT_MAP_SLOTS
    map_rounds: Optional[int] = None
    matvec_seconds: Optional[float] = None
    multiplications_per_exp: Optional[float] = None
    reference_label: str = REFERENCE_LABEL

    def to_dict(self) -> Dict[str, Any]:
        """Plain data for JSON output."""
        return asdict(self)


def map_rounds(n: int, key_bits: int, block_bytes: int, slots: int) -> int:
    """Waves of map tasks for an n x n matrix when *slots* tasks run at once.

    >>> map_rounds(10_000, 1024, 64 * 1024 * 1024, 256)
    2
    """
    blocks = math.ceil(
        n / rows_per_block(n * ciphertext_width(key_bits), block_bytes)
    )
    return math.ceil(blocks / slots)


def run_bench(
    key_bits: int = 1024,
    n: int = 10_000,
    sample: int = 100,
    vector_only: bool = False,
    map_slots: int = DEFAULT_MAP_SLOTS,
    strategy: str = DEFAULT_STRATEGY,
    q_bits: int = DEFAULT_Q_BITS,
    block_bytes: int = DEFAULT_BLOCK_BYTES,
    pool_size: int = 5,
    iters: int = 40,
    rng: Optional[RandomSource] = None,
    keypair: Optional[PaillierKeypair] = None,
) -> BenchReport:
    """Compute sizes for dimension *n* and time *sample* elements."""
    if rng is None:
        rng = make_rng()
    if keypair is None:
        keypair = keygen(key_bits, rng)
    public_key = keypair.public_key
    sample = max(1, min(sample, n))
    q = default_q(q_bits)
    scale = n / sample

    plaintexts = [rng.randrange(q) for _ in range(sample)]
    started = time.perf_counter()
    ciphertexts = encrypt_vector(public_key, plaintexts, rng)
    encrypt_seconds = (time.perf_counter() - started) * scale

    started = time.perf_counter()
    for ciphertext in ciphertexts:
        decrypt(keypair.private_key, ciphertext, crt=True)
    decrypt_seconds = (time.perf_counter() - started) * scale

    text = "\n".join(str(ciphertext.value) for ciphertext in ciphertexts)
    text_bytes = len(text.encode("ascii")) + 1
    compressed = len(zlib.compress(text.encode("ascii"), 9))
    binary = b"".join(
        serialize(public_key, ciphertext) for ciphertext in ciphertexts
    )
    compressed_binary = len(zlib.compress(binary, 9))

    width = ciphertext_width(key_bits)
    report = BenchReport(
        key_bits=key_bits,
        n=n,
        ciphertext_width=width,
        vector_bytes=n * width,
        text_vector_bytes=round(text_bytes * scale),
        compressed_vector_bytes=round(compressed * scale),
        compressed_binary_bytes=round(compressed_binary * scale),
        plain_vector_bytes=n * DOUBLE_BYTES,
        sample=sample,
        encrypt_seconds=encrypt_seconds,
        decrypt_seconds=decrypt_seconds,
        strategy=strategy,
        block_bytes=block_bytes,
        map_slots=map_slots,
    )
    if vector_only:
        return report

    report.matrix_bytes = matrix_payload_size(key_bits, n, n)
    report.plain_matrix_bytes = n * n * DOUBLE_BYTES
    # Seeds and iterates with their images, b0 included.
    report.pool_vectors = pool_size + iters + 1
    report.pool_bytes = 2 * report.pool_vectors * n * byte_length(q)
    report.map_blocks = math.ceil(
        n / rows_per_block(n * width, block_bytes)
    )
    report.map_rounds = map_rounds(n, key_bits, block_bytes, map_slots)

    exp = get_strategy(strategy)
    counter = ExpCounter()
    exponents = [rng.randrange(q) for _ in range(sample)]
    started = time.perf_counter()
    for ciphertext, exponent in zip(ciphertexts, exponents):
        exp(ciphertext.value, exponent, public_key.nsquare, counter)
    per_exp = (time.perf_counter() - started) / sample
    report.matvec_seconds = per_exp * n * n
    report.multiplications_per_exp = (
        counter.squarings + counter.multiplications
    ) / sample
    _LOGGER.debug("one exponentiation takes %s s", per_exp)
    return report


def add_arguments(parser: ArgumentParser) -> None:
    """Add arguments to parser."""
    parser.add_argument(
        "--key-bits", type=int, default=1024, help=_("bits of N")
    )
    parser.add_argument(
        "--n", type=int, default=10_000, help=_("vector dimension")
    )
    parser.add_argument(
        "--sample",
        type=int,
        default=100,
        help=_("elements actually encrypted and timed"),
    )
    parser.add_argument(
        "--vector-only",
        action="store_true",
        help=_("skip the matrix sizes and the product estimate"),
    )
    parser.add_argument(
        "--map-slots",
        type=int,
        default=DEFAULT_MAP_SLOTS,
        help=_("map tasks that run at the same time"),
    )
    parser.add_argument(
        "--strategy",
        choices=sorted(STRATEGIES),
        default=DEFAULT_STRATEGY,
        help=_("modular exponentiation strategy"),
    )
    parser.add_argument(
        "--q-bits", type=int, default=DEFAULT_Q_BITS, help=_("bits of q")
    )
    parser.add_argument(
        "--m", type=int, default=5, help=_("seed vectors in the pool")
    )
    parser.add_argument(
        "--iters", type=int, default=40, help=_("iterations of the eigensolver")
    )
    parser.add_argument(
        "--format",
        choices=["plain", "json"],
        default="plain",
        help=_("output format"),
    )


def run(args: Namespace, out: IO[str] = sys.stdout) -> int:
    """Print sizes and timings."""
    # pylint: disable=import-outside-toplevel
    from .report import render_bench

    report = run_bench(
        key_bits=args.key_bits,
        n=args.n,
        sample=args.sample,
        vector_only=args.vector_only,
        map_slots=args.map_slots,
        strategy=args.strategy,
        q_bits=args.q_bits,
        pool_size=args.m,
        iters=args.iters,
        rng=make_rng(args.seed),
    )
    out.write(render_bench(report, args.format))
    return 0
