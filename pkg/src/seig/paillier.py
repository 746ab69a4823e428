# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Paillier cryptosystem with generator ``g = N + 1``.

Plaintexts are residues modulo N, ciphertexts are residues modulo N². The
scheme is additively homomorphic:

- multiplying two ciphertexts adds their plaintexts (:func:`hom_add`);
- raising a ciphertext to a power *k* multiplies its plaintext by *k*
  (:func:`scalar_mul`).

Ciphertexts serialize to exactly ``ciphertext_width`` big-endian bytes, which is
``2 * key_bits / 8`` for the usual even key sizes.
"""

import logging
import multiprocessing as mp
import struct
import warnings
from dataclasses import dataclass, field
from gettext import gettext as _
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence

import gmpy2

from . import (
    CryptoError,
    DecryptionError,
    DomainError,
    FormatError,
    InsecureKeyWarning,
    KeyGenerationError,
    WidthMismatchError,
)
from ._util import (
    RandomSource,
    StrPath,
    int_from_bytes,
    int_to_bytes,
    make_rng,
    pack_integers,
    unpack_integers,
)

_LOGGER = logging.getLogger(__name__)

#: Keys shorter than this are flagged with :class:`InsecureKeyWarning`.
SECURE_KEY_BITS = 1024
MIN_KEY_BITS = 16
_MAX_PRIME_ATTEMPTS = 100

PUBLIC_KEY_MAGIC = b"PKEY"
PRIVATE_KEY_MAGIC = b"SKEY"
KEY_FILE_VERSION = 1


@dataclass(frozen=True)
class PaillierPublicKey:
    """Public parameters. The generator is always ``n + 1``."""

    n: int
    key_bits: int
    nsquare: int = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "nsquare", self.n * self.n)

    @property
    def g(self) -> int:
        """The generator, fixed to ``n + 1``."""
        return self.n + 1

    @property
    def ciphertext_width(self) -> int:
        """Number of bytes of a serialized ciphertext."""
        return (2 * self.key_bits + 7) // 8


@dataclass(frozen=True)
class PaillierPrivateKey:
    """Secret factorisation of the modulus plus the decryption constants."""

    public_key: PaillierPublicKey
    p: int
    q: int
    lambda_: int
    mu: int

    def __post_init__(self) -> None:
        if self.p * self.q != self.public_key.n:
            raise CryptoError(_("p * q does not match the public modulus"))
        if self.p == self.q:
            raise CryptoError(_("p and q must be different primes"))


class PaillierKeypair(NamedTuple):
    """A matching public and private key."""

    public_key: PaillierPublicKey
    private_key: PaillierPrivateKey

    @property
    def insecure(self) -> bool:
        """The key is too short for real data."""
        return self.public_key.key_bits < SECURE_KEY_BITS


@dataclass(frozen=True)
class Ciphertext:
    """An encrypted residue. ``0 <= value < N**2``."""

    value: int


def _generate_prime(bits: int, rng: RandomSource) -> int:
    for _attempt in range(_MAX_PRIME_ATTEMPTS):
        # Top two bits set so that the product of two such primes has
        # exactly the sum of their bit lengths.
        candidate = rng.getrandbits(bits) | (3 << (bits - 2)) | 1
        prime = int(gmpy2.next_prime(candidate))
        if prime.bit_length() == bits:
            return prime
    raise KeyGenerationError(
        _("could not find a {bits}-bit prime").format(bits=bits)
    )


def keypair_from_primes(p: int, q: int) -> PaillierKeypair:
    """Build a keypair from two known primes. Meant for known-answer tests
    with toy primes; :func:`keygen` is the production path.

    >>> keypair = keypair_from_primes(5, 7)
    >>> keypair.public_key.n, keypair.public_key.g, keypair.private_key.lambda_
    (35, 36, 12)
    """
    if not (gmpy2.is_prime(p) and gmpy2.is_prime(q)):
        raise KeyGenerationError(_("p and q must both be prime"))
    if p == q:
        raise KeyGenerationError(_("p and q must be different primes"))
    n = p * q
    if gmpy2.gcd(n, (p - 1) * (q - 1)) != 1:
        raise KeyGenerationError(_("gcd(pq, (p-1)(q-1)) must be 1"))
    lambda_ = int(gmpy2.lcm(p - 1, q - 1))
    # With g = n + 1, L(g^lambda mod n^2) = lambda mod n.
    mu = int(gmpy2.invert(lambda_ % n, n))
    public_key = PaillierPublicKey(n=n, key_bits=n.bit_length())
    private_key = PaillierPrivateKey(
        public_key=public_key, p=p, q=q, lambda_=lambda_, mu=mu
    )
    return PaillierKeypair(public_key, private_key)


def keygen(
    key_bits: int, rng: Optional[RandomSource] = None
) -> PaillierKeypair:
    """Generate a fresh keypair with a *key_bits*-bit modulus.

    Keys under 1024 bits are generated but flagged with
    :class:`InsecureKeyWarning`.

    Raises:
        DomainError: *key_bits* is below 16.
        KeyGenerationError: no suitable primes were found.
    """
    if key_bits < MIN_KEY_BITS:
        raise DomainError(
            _("key size must be at least {minimum} bits").format(
                minimum=MIN_KEY_BITS
            )
        )
    if rng is None:
        rng = make_rng()
    if key_bits < SECURE_KEY_BITS:
        warnings.warn(
            _("key size of {bits} bits is not considered secure").format(
                bits=key_bits
            ),
            InsecureKeyWarning,
            stacklevel=2,
        )

    p_bits = key_bits // 2
    q_bits = key_bits - p_bits
    for _attempt in range(_MAX_PRIME_ATTEMPTS):
        p = _generate_prime(p_bits, rng)
        q = _generate_prime(q_bits, rng)
        if p == q or (p * q).bit_length() != key_bits:
            continue
        try:
            keypair = keypair_from_primes(p, q)
        except KeyGenerationError:
            continue
        _LOGGER.debug("generated %s-bit keypair", key_bits)
        return keypair
    raise KeyGenerationError(
        _("could not generate a {bits}-bit keypair").format(bits=key_bits)
    )


def random_unit(public_key: PaillierPublicKey, rng: RandomSource) -> int:
    """Draw r uniformly from [1, N) with gcd(r, N) = 1."""
    while True:
        value = rng.randrange(1, public_key.n)
        if gmpy2.gcd(value, public_key.n) == 1:
            return value


def encrypt(
    public_key: PaillierPublicKey,
    plaintext: int,
    rng: Optional[RandomSource] = None,
    r_value: Optional[int] = None,
) -> Ciphertext:
    """Encrypt a residue ``0 <= plaintext < N``. *r_value* fixes the blinding
    factor, otherwise one is drawn from *rng*.

    >>> public_key = keypair_from_primes(5, 7).public_key
    >>> encrypt(public_key, 4, r_value=2).value == pow(36, 4) * pow(2, 35) % 1225
    True
    """
    n = public_key.n
    nsquare = public_key.nsquare
    if not 0 <= plaintext < n:
        raise DomainError(
            _("plaintext must lie in [0, N), got {value}").format(
                value=plaintext
            )
        )
    if r_value is None:
        r_value = random_unit(
            public_key, rng if rng is not None else make_rng()
        )
    # (n + 1)^m = 1 + m*n (mod n^2)
    nude = (1 + plaintext * n) % nsquare
    obfuscator = gmpy2.powmod(r_value, n, nsquare)
    return Ciphertext(int(nude * obfuscator % nsquare))


def _l_function(x: int, divisor: int) -> int:
    return (x - 1) // divisor


def _check_ciphertext(public_key: PaillierPublicKey, value: int) -> None:
    if not 0 < value < public_key.nsquare:
        raise DecryptionError(_("ciphertext lies outside of (0, N^2)"))
    if gmpy2.gcd(value, public_key.n) != 1:
        raise DecryptionError(_("ciphertext is not a unit modulo N^2"))


def decrypt(
    private_key: PaillierPrivateKey, ciphertext: Ciphertext, crt: bool = False
) -> int:
    """Recover the residue modulo N. With *crt*, the exponentiation runs
    modulo p² and q² separately.

    >>> keypair = keypair_from_primes(5, 7)
    >>> c = encrypt(keypair.public_key, 4, r_value=2)
    >>> decrypt(keypair.private_key, c), decrypt(keypair.private_key, c, crt=True)
    (4, 4)
    """
    public_key = private_key.public_key
    value = ciphertext.value
    _check_ciphertext(public_key, value)
    if crt:
        return _decrypt_crt(private_key, value)
    n = public_key.n
    x = gmpy2.powmod(value, private_key.lambda_, public_key.nsquare)
    return int(_l_function(x, n) * private_key.mu % n)


def _decrypt_crt(private_key: PaillierPrivateKey, value: int) -> int:
    p, q = private_key.p, private_key.q
    g = private_key.public_key.g
    psquare, qsquare = p * p, q * q
    hp = gmpy2.invert(_l_function(gmpy2.powmod(g, p - 1, psquare), p), p)
    hq = gmpy2.invert(_l_function(gmpy2.powmod(g, q - 1, qsquare), q), q)
    mp_ = _l_function(gmpy2.powmod(value, p - 1, psquare), p) * hp % p
    mq = _l_function(gmpy2.powmod(value, q - 1, qsquare), q) * hq % q
    # Garner recombination.
    u = (mq - mp_) * gmpy2.invert(p, q) % q
    return int(mp_ + u * p)


def hom_add(
    public_key: PaillierPublicKey, first: Ciphertext, second: Ciphertext
) -> Ciphertext:
    """Ciphertext of the sum of both plaintexts modulo N.

    >>> keypair = keypair_from_primes(5, 7)
    >>> total = hom_add(
    ...     keypair.public_key,
    ...     encrypt(keypair.public_key, 20, r_value=3),
    ...     encrypt(keypair.public_key, 30, r_value=4),
    ... )
    >>> decrypt(keypair.private_key, total)
    15
    """
    return Ciphertext(first.value * second.value % public_key.nsquare)


def hom_sum(
    public_key: PaillierPublicKey, ciphertexts: Iterable[Ciphertext]
) -> Ciphertext:
    """Fold :func:`hom_add` over *ciphertexts*. The empty sum is the trivial
    encryption of 0.
    """
    nsquare = public_key.nsquare
    accumulator = 1
    for ciphertext in ciphertexts:
        accumulator = accumulator * ciphertext.value % nsquare
    return Ciphertext(accumulator)


def scalar_mul(
    public_key: PaillierPublicKey, ciphertext: Ciphertext, scalar: int
) -> Ciphertext:
    """Ciphertext of ``scalar * m mod N`` for a natural *scalar*."""
    if scalar < 0:
        raise DomainError(_("scalar must not be negative"))
    return Ciphertext(
        int(gmpy2.powmod(ciphertext.value, scalar, public_key.nsquare))
    )


def scalar_mul_signed(
    public_key: PaillierPublicKey, ciphertext: Ciphertext, scalar: int
) -> Ciphertext:
    """Like :func:`scalar_mul`, but a negative *scalar* raises the inverse
    ciphertext to ``-scalar``. The result decrypts to ``scalar * m mod N``.
    """
    if scalar >= 0:
        return scalar_mul(public_key, ciphertext, scalar)
    try:
        inverse = gmpy2.invert(ciphertext.value, public_key.nsquare)
    except ZeroDivisionError as error:
        raise DomainError(_("ciphertext is not invertible")) from error
    return Ciphertext(int(gmpy2.powmod(inverse, -scalar, public_key.nsquare)))


def serialize(public_key: PaillierPublicKey, ciphertext: Ciphertext) -> bytes:
    """Exactly ``ciphertext_width`` big-endian bytes."""
    if not 0 <= ciphertext.value < public_key.nsquare:
        raise FormatError(_("ciphertext lies outside of [0, N^2)"))
    return int_to_bytes(ciphertext.value, public_key.ciphertext_width)


def deserialize(public_key: PaillierPublicKey, data: bytes) -> Ciphertext:
    """Inverse of :func:`serialize`."""
    if len(data) != public_key.ciphertext_width:
        raise WidthMismatchError(
            _("expected {expected} bytes, got {actual}").format(
                expected=public_key.ciphertext_width, actual=len(data)
            )
        )
    value = int_from_bytes(data)
    if value >= public_key.nsquare:
        raise FormatError(_("ciphertext lies outside of [0, N^2)"))
    return Ciphertext(value)


def encrypt_vector(
    public_key: PaillierPublicKey,
    plaintexts: Iterable[int],
    rng: Optional[RandomSource] = None,
) -> List[Ciphertext]:
    """Encrypt every residue of *plaintexts*."""
    if rng is None:
        rng = make_rng()
    return [encrypt(public_key, value, rng) for value in plaintexts]


class _DecryptContainer:
    """Picklable callable that decrypts one ciphertext in a worker."""

    def __init__(self, private_key: PaillierPrivateKey, crt: bool):
        self.private_key = private_key
        self.crt = crt

    def __call__(self, value: int) -> int:
        return decrypt(self.private_key, Ciphertext(value), crt=self.crt)


def decrypt_vector(
    private_key: PaillierPrivateKey,
    ciphertexts: Sequence[Ciphertext],
    workers: int = 1,
    crt: bool = True,
) -> List[int]:
    """Decrypt element-wise, on a process pool if *workers* > 1."""
    container = _DecryptContainer(private_key, crt)
    values = [ciphertext.value for ciphertext in ciphertexts]
    if workers > 1 and len(values) > 1:
        chunksize = max(1, len(values) // (4 * workers))
        with mp.Pool(workers) as pool:
            result = pool.map(container, values, chunksize=chunksize)
        pool.join()
        return result
    return [container(value) for value in values]


def _check_key_header(data: bytes, magic: bytes) -> int:
    if len(data) < 6 or data[:4] != magic:
        raise FormatError(
            _("not a {magic} file").format(magic=magic.decode("ascii"))
        )
    (file_version,) = struct.unpack_from("!H", data, 4)
    if file_version != KEY_FILE_VERSION:
        raise FormatError(
            _("unsupported key file version {version}").format(
                version=file_version
            )
        )
    return 6


def public_key_to_bytes(public_key: PaillierPublicKey) -> bytes:
    """``PKEY``, u16 version, then N as a length-prefixed integer."""
    return (
        PUBLIC_KEY_MAGIC
        + struct.pack("!H", KEY_FILE_VERSION)
        + pack_integers([public_key.n])
    )


def public_key_from_bytes(data: bytes) -> PaillierPublicKey:
    """Inverse of :func:`public_key_to_bytes`."""
    offset = _check_key_header(data, PUBLIC_KEY_MAGIC)
    (n,), offset = unpack_integers(data, 1, offset)
    if offset != len(data) or n < 2:
        raise FormatError(_("malformed public key"))
    return PaillierPublicKey(n=n, key_bits=n.bit_length())


def private_key_to_bytes(private_key: PaillierPrivateKey) -> bytes:
    """``SKEY``, u16 version, then p, q, lambda and mu as length-prefixed
    integers.
    """
    return (
        PRIVATE_KEY_MAGIC
        + struct.pack("!H", KEY_FILE_VERSION)
        + pack_integers(
            [
                private_key.p,
                private_key.q,
                private_key.lambda_,
                private_key.mu,
            ]
        )
    )


def private_key_from_bytes(data: bytes) -> PaillierPrivateKey:
    """Inverse of :func:`private_key_to_bytes`."""
    offset = _check_key_header(data, PRIVATE_KEY_MAGIC)
    (p, q, lambda_, mu), offset = unpack_integers(data, 4, offset)
    if offset != len(data):
        raise FormatError(_("malformed private key"))
    n = p * q
    public_key = PaillierPublicKey(n=n, key_bits=n.bit_length())
    try:
        return PaillierPrivateKey(
            public_key=public_key, p=p, q=q, lambda_=lambda_, mu=mu
        )
    except CryptoError as error:
        raise FormatError(str(error)) from error


def save_keypair(
    keypair: PaillierKeypair, public_path: StrPath, private_path: StrPath
) -> None:
    """Write both key files."""
    Path(public_path).write_bytes(public_key_to_bytes(keypair.public_key))
    Path(private_path).write_bytes(private_key_to_bytes(keypair.private_key))


def load_public_key(path: StrPath) -> PaillierPublicKey:
    """Read a ``PKEY`` file."""
    return public_key_from_bytes(Path(path).read_bytes())


def load_private_key(path: StrPath) -> PaillierPrivateKey:
    """Read an ``SKEY`` file."""
    return private_key_from_bytes(Path(path).read_bytes())
