# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Trusted-side protocol logic for the data owner, the data collectors and
the authorized user.

The owner creates the keys, the codec parameters and a random vector
``b0`` in ``Z_q^n``, and hands ``E(b0)`` to the collectors. Each collector
encrypts its rows for the cloud and also returns ``E(a . b0)`` for each row,
so that the owner learns ``A b0`` without the cloud.

The user keeps a perturbation pool: seed vectors ``s_l`` with their images
``A s_l``, and every earlier iterate ``b_j`` with its image ``A b_j``, all
modulo q. Before a vector ``b`` is sent to the cloud it is blinded::

    r = sum_l alpha_l s_l + sum_j beta_j b_j   (mod q)
    b_bar = b + r                              (mod q)

and the true product is recovered from the cloud's answer::

    A b = A b_bar - (sum_l alpha_l A s_l + sum_j beta_j A b_j)   (mod q)

The coefficients never leave the user.
"""

import logging
from dataclasses import dataclass, field
from gettext import gettext as _
from typing import (
    Callable,
    List,
    Mapping,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from . import (
    BreakdownError,
    CapacityError,
    IntegrityError,
    ProtocolError,
    WidthMismatchError,
)
from ._util import RandomSource, make_rng
from .codec import (
    DEFAULT_DIGITS,
    DEFAULT_Q_BITS,
    CodecParams,
    centered_lift,
    decode,
    default_q,
    encode,
    to_residue,
)
from .paillier import (
    Ciphertext,
    PaillierKeypair,
    PaillierPrivateKey,
    PaillierPublicKey,
    decrypt,
    decrypt_vector,
    encrypt_vector,
    hom_sum,
    keygen,
    scalar_mul_signed,
)
from .service import ServiceClient
from .store import parse_vector

_LOGGER = logging.getLogger(__name__)

#: Seed vectors in the pool unless configured otherwise.
DEFAULT_POOL_SIZE = 5


def _lifted_within(value: int, bound: int, modulus: int) -> int:
    """Lift a residue and make sure it respects the analytic *bound*."""
    if 2 * bound >= modulus:
        raise CapacityError(
            _(
                "values up to {bound} cannot be told apart modulo a"
                " {bits}-bit modulus"
            ).format(bound=bound, bits=modulus.bit_length())
        )
    lifted = centered_lift(value, modulus)
    if abs(lifted) > bound:
        raise CapacityError(
            _(
                "recovered value exceeds its bound of {bound}; the modulus"
                " wrapped around"
            ).format(bound=bound)
        )
    return lifted


# -- Data owner ---------------------------------------------------------------


@dataclass
class OwnerHandoff:
    """What the owner hands the authorized user out of band."""

    private_key: PaillierPrivateKey
    params: CodecParams
    encrypted_b0: List[Ciphertext]
    encrypted_ab0: List[Ciphertext]
    entry_bound: float


@dataclass
class OwnerState:
    """The data owner's secrets and public artifacts."""

    keypair: PaillierKeypair
    params: CodecParams
    b0: List[int]
    encrypted_b0: List[Ciphertext]
    entry_bound: float = 1.0
    ab0: Optional[List[int]] = None
    encrypted_ab0: Optional[List[Ciphertext]] = None

    @property
    def public_key(self) -> PaillierPublicKey:
        """The public key distributed to collectors."""
        return self.keypair.public_key

    @property
    def n(self) -> int:
        """Dimension of the matrix."""
        return len(self.b0)

    @property
    def matrix_bound(self) -> int:
        """Upper bound of the magnitude of an encoded matrix entry."""
        return abs(encode(self.entry_bound, self.params.d))

    def handoff(self) -> OwnerHandoff:
        """Package sk, E(b0) and E(A b0) for the authorized user.

        Raises:
            ProtocolError: :func:`owner_collect` has not run yet.
        """
        if self.encrypted_ab0 is None:
            raise ProtocolError(_("A b0 has not been collected yet"))
        return OwnerHandoff(
            private_key=self.keypair.private_key,
            params=self.params,
            encrypted_b0=list(self.encrypted_b0),
            encrypted_ab0=list(self.encrypted_ab0),
            entry_bound=self.entry_bound,
        )


def owner_setup(
    n: int,
    key_bits: int = 1024,
    d: int = DEFAULT_DIGITS,
    q_bits: int = DEFAULT_Q_BITS,
    rng: Optional[RandomSource] = None,
    entry_bound: float = 1.0,
    vector_bound: float = 1.0,
    keypair: Optional[PaillierKeypair] = None,
) -> OwnerState:
    """Generate keys, codec parameters and ``E(b0)``. An existing *keypair*
    skips key generation.

    Raises:
        CapacityError: q or N is too small for *n* and *d*.
    """
    if rng is None:
        rng = make_rng()
    q = default_q(q_bits)
    if keypair is None:
        keypair = keygen(key_bits, rng)
    params = CodecParams(d=d, q=q, n=keypair.public_key.n)
    params.check(n, entry_bound, vector_bound)
    b0 = [rng.randrange(q) for _ in range(n)]
    encrypted_b0 = encrypt_vector(keypair.public_key, b0, rng)
    _LOGGER.debug("owner set up for n=%s, d=%s, q_bits=%s", n, d, q_bits)
    return OwnerState(
        keypair=keypair,
        params=params,
        b0=b0,
        encrypted_b0=encrypted_b0,
        entry_bound=entry_bound,
    )


def owner_collect(
    state: OwnerState, pieces: Mapping[int, Ciphertext]
) -> List[int]:
    """Decrypt the collectors' ``E(A_i b0)``. Return ``A b0`` as signed
    integers; the owner keeps them, and their ciphertexts for the handoff.

    Raises:
        IntegrityError: pieces for some rows are missing.
        CapacityError: a decrypted value exceeds its bound.
    """
    missing = set(range(state.n)) - set(pieces)
    if missing:
        raise IntegrityError(
            _("no E(A_i b0) for rows {rows}").format(rows=sorted(missing)),
            indices=missing,
        )
    public_key = state.public_key
    bound = state.matrix_bound * sum(state.b0)
    encrypted = [pieces[row] for row in range(state.n)]
    ab0 = [
        _lifted_within(
            decrypt(state.keypair.private_key, piece, crt=True),
            bound,
            public_key.n,
        )
        for piece in encrypted
    ]
    state.ab0 = ab0
    state.encrypted_ab0 = encrypted
    return ab0


# -- Data collector -----------------------------------------------------------


def collector_submit(
    public_key: PaillierPublicKey,
    encrypted_b0: Sequence[Ciphertext],
    row: Sequence[float],
    params: CodecParams,
    rng: Optional[RandomSource] = None,
    entry_bound: Optional[float] = None,
) -> Tuple[List[Ciphertext], Ciphertext]:
    """Encrypt one row for the cloud and compute ``E(a . b0)``.

    Raises:
        WidthMismatchError: the row does not match ``E(b0)``.
        CapacityError: an entry exceeds *entry_bound* or the modulus.
    """
    if len(row) != len(encrypted_b0):
        raise WidthMismatchError(
            _("row has {actual} entries, expected {expected}").format(
                actual=len(row), expected=len(encrypted_b0)
            )
        )
    if entry_bound is not None and any(abs(x) > entry_bound for x in row):
        raise CapacityError(
            _("row entries exceed the bound {bound}").format(bound=entry_bound)
        )
    encoded = params.encode_integers(row)
    residues = [to_residue(value, public_key.n) for value in encoded]
    encrypted_row = encrypt_vector(public_key, residues, rng)
    dot = hom_sum(
        public_key,
        (
            scalar_mul_signed(public_key, piece, value)
            for piece, value in zip(encrypted_b0, encoded)
            if value != 0
        ),
    )
    return encrypted_row, dot


# -- Authorized user ----------------------------------------------------------


@dataclass(frozen=True)
class PoolEntry:
    """A vector modulo q and its image modulo q, with their decimal scales.
    Raw residues have scale 0; the image of a vector carries d more.
    """

    vector: Tuple[int, ...]
    image: Tuple[int, ...]
    vector_scale: int
    image_scale: int


@dataclass
class PerturbationPool:
    """Seeds and iteration history of one user session."""

    q: int
    d: int
    plaintext_n: int
    matrix_bound: int
    seeds: List[PoolEntry] = field(default_factory=list)
    history: List[PoolEntry] = field(default_factory=list)

    def _check(self, entry: PoolEntry) -> None:
        if entry.image_scale != entry.vector_scale + self.d:
            raise ProtocolError(
                _("image scale {image} does not match vector scale {vector}").format(
                    image=entry.image_scale, vector=entry.vector_scale
                )
            )
        if any(not 0 <= x < self.q for x in entry.vector + entry.image):
            raise ProtocolError(_("pool entries must be residues modulo q"))

    def add_seed(self, entry: PoolEntry) -> None:
        """Add a seed vector with its image."""
        if entry.vector_scale != 0:
            raise ProtocolError(_("seed vectors are raw residues"))
        self._check(entry)
        self.seeds.append(entry)

    def append_history(self, entry: PoolEntry) -> None:
        """Add an iterate with its image."""
        self._check(entry)
        self.history.append(entry)

    @property
    def m(self) -> int:
        """Number of seeds."""
        return len(self.seeds)

    def memory_bytes(self) -> int:
        """Bytes of residues held, at the byte width of q."""
        width = (self.q.bit_length() + 7) // 8
        return sum(
            (len(entry.vector) + len(entry.image)) * width
            for entry in self.seeds + self.history
        )


class Coefficients(NamedTuple):
    """Blinding coefficients of one iteration. Never sent anywhere."""

    alphas: Tuple[int, ...]
    betas: Tuple[int, ...]


@dataclass
class IterationState:
    """Where the user is in the iteration. At step i there are m alphas and
    i betas, b0 counting as the first history entry.
    """

    iteration: int = 0
    encoded: Tuple[int, ...] = ()
    coefficients: Optional[Coefficients] = None


def perturb(
    vector: Sequence[int], pool: PerturbationPool, rng: RandomSource
) -> Tuple[List[int], Coefficients]:
    """Blind *vector*, residues modulo q, with a random combination of the
    pool. Return the blinded vector and the coefficients.

    Raises:
        ProtocolError: the pool has no seeds.
    """
    if not pool.seeds:
        raise ProtocolError(_("the perturbation pool is empty"))
    q = pool.q
    alphas = tuple(rng.randrange(q) for _ in pool.seeds)
    betas = tuple(rng.randrange(q) for _ in pool.history)
    blinded = list(vector)
    for coefficient, entry in zip(
        alphas + betas, pool.seeds + pool.history
    ):
        if coefficient:
            blinded = [
                (x + coefficient * y) % q
                for x, y in zip(blinded, entry.vector)
            ]
    return [x % q for x in blinded], Coefficients(alphas, betas)


def recover(
    decrypted: Sequence[int],
    blinded: Sequence[int],
    encoded: Sequence[int],
    coefficients: Coefficients,
    pool: PerturbationPool,
) -> List[int]:
    """Strip the blinding from a decrypted product.

    *decrypted* are the plaintexts modulo N of ``E(A b_bar)``, *blinded* is
    ``b_bar`` and *encoded* the signed fixed-point vector ``b`` that was
    blinded. The result is ``A b`` as signed integers, at scale 2d; the pair
    is appended to the pool history.

    Raises:
        CapacityError: a value does not fit its modulus.
    """
    q = pool.q
    n_bound = pool.matrix_bound * sum(blinded)
    q_bound = pool.matrix_bound * sum(abs(x) for x in encoded)
    images = [
        _lifted_within(value, n_bound, pool.plaintext_n) % q
        for value in decrypted
    ]
    entries = pool.seeds + pool.history
    for coefficient, entry in zip(
        coefficients.alphas + coefficients.betas, entries
    ):
        if coefficient:
            images = [
                (x - coefficient * y) % q for x, y in zip(images, entry.image)
            ]
    result = [_lifted_within(value, q_bound, q) for value in images]
    pool.append_history(
        PoolEntry(
            vector=tuple(x % q for x in encoded),
            image=tuple(x % q for x in result),
            vector_scale=pool.d,
            image_scale=2 * pool.d,
        )
    )
    return result


def next_vector(
    product: Sequence[int], scale_power: int, d: int
) -> Tuple[np.ndarray, List[int]]:
    """Normalise a product to the next unit iterate. Return it as reals and
    as its fixed-point encoding at *d* digits.

    Raises:
        BreakdownError: the product is zero.
    """
    vector = np.array([decode(value, scale_power) for value in product])
    norm = np.linalg.norm(vector)
    if norm == 0.0:
        raise BreakdownError(_("the product is the zero vector"))
    vector = vector / norm
    return vector, [encode(x, d) for x in vector]


class UserSession:
    """The authorized user's side of one protocol session."""

    def __init__(
        self,
        client: ServiceClient,
        matrix_id: int,
        handoff: OwnerHandoff,
        rng: Optional[RandomSource] = None,
        decrypt_workers: int = 1,
        on_idle: Optional[Callable[[], bool]] = None,
    ):
        self.client = client
        self.matrix_id = matrix_id
        self.private_key = handoff.private_key
        self.params = handoff.params
        self.rng = rng if rng is not None else make_rng()
        self.decrypt_workers = decrypt_workers
        self.on_idle = on_idle
        #: Every exponent vector sent to the cloud, in order.
        self.transcript: List[Tuple[int, ...]] = []
        self.state = IterationState()
        self.pool = PerturbationPool(
            q=self.params.q,
            d=self.params.d,
            plaintext_n=self.private_key.public_key.n,
            matrix_bound=abs(encode(handoff.entry_bound, self.params.d)),
        )
        self._install_b0(handoff)

    @property
    def n(self) -> int:
        """Dimension of the matrix."""
        return len(self.b0)

    def _install_b0(self, handoff: OwnerHandoff) -> None:
        q = self.params.q
        self.b0 = decrypt_vector(
            self.private_key, handoff.encrypted_b0, self.decrypt_workers
        )
        if any(value >= q for value in self.b0):
            raise ProtocolError(_("b0 is not a vector of residues modulo q"))
        decrypted = decrypt_vector(
            self.private_key, handoff.encrypted_ab0, self.decrypt_workers
        )
        bound = self.pool.matrix_bound * sum(self.b0)
        self.ab0 = [
            _lifted_within(value, bound, self.pool.plaintext_n)
            for value in decrypted
        ]
        self.pool.append_history(
            PoolEntry(
                vector=tuple(self.b0),
                image=tuple(value % q for value in self.ab0),
                vector_scale=0,
                image_scale=self.params.d,
            )
        )

    def cloud_matvec(self, exponents: Sequence[int]) -> List[int]:
        """Send *exponents* to the cloud and return the decrypted product,
        residues modulo N.

        Raises:
            ProtocolError: the service failed or answered garbage.
        """
        self.transcript.append(tuple(exponents))
        job_id = self.client.submit_matvec(
            self.matrix_id, exponents, self.params.q
        )
        data = self.client.wait_result(job_id, on_idle=self.on_idle)
        public_key = self.private_key.public_key
        ciphertexts = parse_vector(public_key, data)
        if len(ciphertexts) != self.n:
            raise ProtocolError(
                _("expected {expected} results, got {actual}").format(
                    expected=self.n, actual=len(ciphertexts)
                )
            )
        return decrypt_vector(
            self.private_key, ciphertexts, self.decrypt_workers
        )

    def prepare_pool(self, m: int = DEFAULT_POOL_SIZE) -> PerturbationPool:
        """See :func:`user_prepare_pool`."""
        return user_prepare_pool(self, m)

    def secure_matvec(self, encoded: Sequence[int]) -> List[int]:
        """``A b`` for a signed fixed-point vector *b*, through one blinded
        cloud round trip. The result carries scale 2d.
        """
        if len(encoded) != self.n:
            raise WidthMismatchError(
                _("vector has {actual} entries, expected {expected}").format(
                    actual=len(encoded), expected=self.n
                )
            )
        q = self.params.q
        blinded, coefficients = perturb(
            [value % q for value in encoded], self.pool, self.rng
        )
        decrypted = self.cloud_matvec(blinded)
        result = recover(decrypted, blinded, encoded, coefficients, self.pool)
        self.state = IterationState(
            iteration=self.state.iteration + 1,
            encoded=tuple(encoded),
            coefficients=coefficients,
        )
        return result


def user_prepare_pool(
    session: UserSession, m: int = DEFAULT_POOL_SIZE
) -> PerturbationPool:
    """Draw *m* seeds uniformly from ``Z_q^n`` and learn their images through
    the cloud. ``b0`` and ``A b0`` from the owner are already the first
    history entry.

    Raises:
        ProtocolError: *m* is not positive or the service failed.
    """
    if m < 1:
        raise ProtocolError(_("the pool needs at least one seed"))
    pool = session.pool
    q = pool.q
    for index in range(m):
        seed = [session.rng.randrange(q) for _ in range(session.n)]
        decrypted = session.cloud_matvec(seed)
        bound = pool.matrix_bound * sum(seed)
        image = tuple(
            _lifted_within(value, bound, pool.plaintext_n) % q
            for value in decrypted
        )
        pool.add_seed(
            PoolEntry(
                vector=tuple(seed),
                image=image,
                vector_scale=0,
                image_scale=pool.d,
            )
        )
        _LOGGER.debug("seed %s of %s in the pool", index + 1, m)
    return pool

