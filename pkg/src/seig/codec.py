# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Fixed-point encoding of reals and the two moduli of the protocol.

A real *x* is encoded as the integer ``round(x * 10**d)``, ties away from
zero. Signed integers are mapped to residues with the centered convention: a
negative *v* becomes ``modulus + v``, and residues above ``modulus / 2`` lift
back to negative integers. Unlike a global additive shift, this keeps signed
dot products exact, which the homomorphic matrix-vector product relies on.

Two moduli are involved. Paillier plaintexts live modulo N. Perturbed vectors
live modulo the prime q, with q < N.
"""

import logging
import math
import struct
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from gettext import gettext as _
from numbers import Integral
from pathlib import Path
from typing import Iterable, List, Sequence, Union

import gmpy2

from . import CapacityError, ConfigError, DomainError, FormatError
from ._util import StrPath, byte_length, int_from_bytes, int_to_bytes

_LOGGER = logging.getLogger(__name__)

DEFAULT_DIGITS = 6
DEFAULT_Q_BITS = 128

CODEC_MAGIC = b"SCOD"
CODEC_FILE_VERSION = 1

Real = Union[float, int, Integral]


def encode(value: Real, d: int) -> int:
    """Fixed-point integer ``round(value * 10**d)``, ties away from zero.

    >>> encode(1.234, 3), encode(-0.5, 3), encode(0.0005, 3)
    (1234, -500, 1)
    """
    if isinstance(value, Integral):
        return int(value) * 10**d
    value = float(value)
    if not math.isfinite(value):
        raise DomainError(_("cannot encode non-finite value {}").format(value))
    scaled = Decimal(repr(value)).scaleb(d)
    return int(scaled.to_integral_value(rounding=ROUND_HALF_UP))


def decode(value: int, scale_power: int) -> float:
    """The real ``value / 10**scale_power``.

    >>> decode(30000, 4), decode(-500, 3)
    (3.0, -0.5)
    """
    return value / 10**scale_power


def to_residue(value: int, modulus: int) -> int:
    """Centered mapping of a signed integer to ``[0, modulus)``.

    >>> to_residue(-500, 10007), to_residue(1234, 10007)
    (9507, 1234)
    """
    if 2 * abs(value) >= modulus:
        raise CapacityError(
            _("|{value}| does not fit below half of the modulus").format(
                value=value
            )
        )
    return value % modulus


def centered_lift(residue: int, modulus: int) -> int:
    """Inverse of :func:`to_residue`.

    >>> centered_lift(9507, 10007), centered_lift(0, 10007)
    (-500, 0)
    """
    if not 0 <= residue < modulus:
        raise DomainError(
            _("residue {residue} lies outside of [0, modulus)").format(
                residue=residue
            )
        )
    if 2 * residue > modulus:
        return residue - modulus
    return residue


def default_q(q_bits: int = DEFAULT_Q_BITS) -> int:
    """The smallest prime above ``2**(q_bits - 1)``.

    >>> default_q(4)
    11
    """
    if q_bits < 2:
        raise ConfigError(_("q needs at least 2 bits"))
    return int(gmpy2.next_prime(1 << (q_bits - 1)))


def dot_bound(n: int, d: int, max_matrix: float, max_vector: float) -> int:
    """Largest magnitude of a dot product of two encoded vectors of length
    *n* whose reals are bounded by *max_matrix* and *max_vector*.

    >>> dot_bound(100, 4, 1.0, 1.0)
    10000000000
    """
    return n * abs(encode(max_matrix, d)) * abs(encode(max_vector, d))


def check_capacity(
    n: int,
    d: int,
    q: int,
    plaintext_n: int,
    max_matrix: float = 1.0,
    max_vector: float = 1.0,
) -> None:
    """Make sure that no intermediate value of the protocol wraps around.

    Two bounds are checked. A product of the encoded matrix with an encoded
    iteration vector must stay below ``q / 2``. A product of the encoded
    matrix with a vector of residues in ``[0, q)``, which is what the cloud
    computes, must stay below ``N / 2``.

    Raises:
        CapacityError: a bound is violated. *required_q_bits* is set for the
            first bound.
    """
    if n < 1 or d < 0:
        raise ConfigError(_("dimension must be positive and d non-negative"))
    if max_matrix <= 0 or max_vector <= 0:
        raise ConfigError(_("magnitude bounds must be positive"))
    bound = dot_bound(n, d, max_matrix, max_vector)
    if 2 * bound >= q:
        required = (2 * bound).bit_length()
        raise CapacityError(
            _(
                "q is too small for n={n} and d={d}: it must exceed {limit},"
                " so use at least {bits} bits for q or lower d"
            ).format(n=n, d=d, limit=2 * bound, bits=required),
            required_q_bits=required,
        )
    cloud_bound = n * abs(encode(max_matrix, d)) * (q - 1)
    if 2 * cloud_bound >= plaintext_n:
        raise CapacityError(
            _(
                "the Paillier modulus is too small for q and n={n}: use a key"
                " of at least {bits} bits"
            ).format(n=n, bits=(2 * cloud_bound).bit_length() + 1)
        )
    _LOGGER.debug("capacity check passed for n=%s, d=%s", n, d)


@dataclass(frozen=True)
class EncodedScalar:
    """A residue together with its decimal scale."""

    residue: int
    scale_power: int

    def lift(self, modulus: int) -> int:
        """The signed integer behind the residue."""
        return centered_lift(self.residue, modulus)

    def to_real(self, modulus: int) -> float:
        """Decode the residue to a real."""
        return decode(self.lift(modulus), self.scale_power)


@dataclass(frozen=True)
class CodecParams:
    """Precision *d*, perturbation prime *q* and the Paillier modulus *n*."""

    d: int
    q: int
    n: int

    def __post_init__(self) -> None:
        if not 0 <= self.d <= 255:
            raise ConfigError(_("d must lie in [0, 255]"))
        if self.q < 3 or not gmpy2.is_prime(self.q):
            raise ConfigError(_("q must be an odd prime"))
        if self.q >= self.n:
            raise ConfigError(_("q must be smaller than the Paillier modulus"))

    @property
    def q_bits(self) -> int:
        """Bit length of q."""
        return self.q.bit_length()

    def encode_scalar(self, value: Real, modulus: int) -> EncodedScalar:
        """Encode *value* at scale d as a residue modulo *modulus*."""
        return EncodedScalar(to_residue(encode(value, self.d), modulus), self.d)

    def encode_vector(self, values: Iterable[Real], modulus: int) -> List[int]:
        """Residues modulo *modulus* of the encoded *values*."""
        return [
            self.encode_scalar(value, modulus).residue for value in values
        ]

    def encode_integers(self, values: Iterable[Real]) -> List[int]:
        """Signed encodings of *values*, no reduction."""
        return [encode(value, self.d) for value in values]

    def decode_vector(
        self, values: Sequence[int], scale_power: int
    ) -> List[float]:
        """Decode signed integers at *scale_power*."""
        return [decode(value, scale_power) for value in values]

    def check(
        self, n: int, max_matrix: float = 1.0, max_vector: float = 1.0
    ) -> None:
        """:func:`check_capacity` with these parameters."""
        check_capacity(n, self.d, self.q, self.n, max_matrix, max_vector)


def params_to_bytes(params: CodecParams) -> bytes:
    """``SCOD``, u16 version, d as u8, then u16 length and q."""
    q_len = byte_length(params.q)
    return (
        CODEC_MAGIC
        + struct.pack("!HBH", CODEC_FILE_VERSION, params.d, q_len)
        + int_to_bytes(params.q, q_len)
    )


def params_from_bytes(data: bytes, plaintext_n: int) -> CodecParams:
    """Inverse of :func:`params_to_bytes`. N comes from the public key."""
    if len(data) < 9 or data[:4] != CODEC_MAGIC:
        raise FormatError(_("not a codec parameter file"))
    file_version, d, q_len = struct.unpack_from("!HBH", data, 4)
    if file_version != CODEC_FILE_VERSION:
        raise FormatError(
            _("unsupported codec file version {version}").format(
                version=file_version
            )
        )
    if len(data) != 9 + q_len:
        raise FormatError(_("malformed codec parameter file"))
    return CodecParams(d=d, q=int_from_bytes(data[9:]), n=plaintext_n)


def save_params(params: CodecParams, path: StrPath) -> None:
    """Write a codec parameter file."""
    Path(path).write_bytes(params_to_bytes(params))


def load_params(path: StrPath, plaintext_n: int) -> CodecParams:
    """Read a codec parameter file."""
    return params_from_bytes(Path(path).read_bytes(), plaintext_n)
