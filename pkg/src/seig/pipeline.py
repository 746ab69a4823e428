# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Wiring of the four parties: run configuration, the owner's files, and an
in-process deployment that runs the whole protocol without sockets.
"""

import logging
import os
from argparse import Namespace
from dataclasses import dataclass, fields
from gettext import gettext as _
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import ConfigError
from ._util import RandomSource, StrPath, make_rng, resolve_data_dir
from .codec import (
    DEFAULT_DIGITS,
    DEFAULT_Q_BITS,
    CodecParams,
    check_capacity,
    default_q,
    load_params,
    save_params,
)
from .eigen import SECURE_TOL, EigenResult, secure_topk
from .paillier import (
    Ciphertext,
    PaillierKeypair,
    PaillierPrivateKey,
    PaillierPublicKey,
    load_private_key,
    load_public_key,
    save_keypair,
    serialize,
)
from .roles import (
    DEFAULT_POOL_SIZE,
    OwnerHandoff,
    OwnerState,
    UserSession,
    collector_submit,
    owner_collect,
    owner_setup,
)
from .service import CloudService, LoopbackTransport, ServiceClient
from .store import DEFAULT_BLOCK_BYTES, MatrixHeader, load_vector, save_vector

_LOGGER = logging.getLogger(__name__)

DEFAULT_MATRIX_ID = 1


@dataclass(frozen=True)
class RunConfig:
    """Settings of one CLI run. Fields missing from the parsed arguments keep
    their defaults.
    """

    subcommand: str = ""
    key_bits: int = 1024
    d: int = DEFAULT_DIGITS
    q_bits: int = DEFAULT_Q_BITS
    n: Optional[int] = None
    k: int = 3
    m: int = DEFAULT_POOL_SIZE
    iters: int = 40
    workers: int = os.cpu_count() or 1
    host: str = "127.0.0.1"
    port: int = 7207
    data_dir: Optional[Path] = None
    seed: Optional[int] = None
    entry_bound: float = 1.0
    vector_bound: float = 1.0
    block_bytes: int = DEFAULT_BLOCK_BYTES

    @classmethod
    def from_namespace(cls, args: Namespace) -> "RunConfig":
        """Pick the known fields out of *args*. ``None`` values keep the
        defaults, except for fields whose default is ``None``.
        """
        values = {}
        for item in fields(cls):
            value = getattr(args, item.name.replace("-", "_"), None)
            if value is not None:
                values[item.name] = value
        if "data_dir" in values:
            values["data_dir"] = Path(values["data_dir"])
        return cls(**values)

    @property
    def resolved_data_dir(self) -> Path:
        """Data directory after the environment override."""
        return resolve_data_dir(self.data_dir)

    def validate(self, n: Optional[int] = None) -> None:
        """Check the settings before any protocol step.

        Raises:
            ConfigError: a setting is out of range.
            CapacityError: q or the key is too small for the dimension.
        """
        n = n if n is not None else self.n
        if self.key_bits < 16:
            raise ConfigError(_("--key-bits must be at least 16"))
        if self.m < 1:
            raise ConfigError(_("--m must be at least 1"))
        if self.iters < 1:
            raise ConfigError(_("--iters must be at least 1"))
        if self.workers < 1:
            raise ConfigError(_("--workers must be at least 1"))
        if self.k < 1 or (n is not None and self.k > n):
            raise ConfigError(
                _("--k must lie between 1 and the dimension")
            )
        if n is None:
            return
        if self.q_bits >= self.key_bits:
            raise ConfigError(_("--q-bits must be smaller than --key-bits"))
        # The Paillier modulus has key_bits bits; its lower bound suffices.
        check_capacity(
            n,
            self.d,
            default_q(self.q_bits),
            1 << (self.key_bits - 1),
            self.entry_bound,
            self.vector_bound,
        )


@dataclass(frozen=True)
class ArtifactPaths:
    """Where the owner keeps keys, parameters and the b0 vectors."""

    public_key: Path
    private_key: Path
    params: Path
    encrypted_b0: Path
    encrypted_ab0: Path

    @classmethod
    def under(cls, directory: StrPath) -> "ArtifactPaths":
        """The default file names in *directory*."""
        directory = Path(directory)
        return cls(
            public_key=directory / "public.key",
            private_key=directory / "private.key",
            params=directory / "codec.params",
            encrypted_b0=directory / "b0.sevr",
            encrypted_ab0=directory / "ab0.sevr",
        )

    def save_owner(self, state: OwnerState) -> None:
        """Write the owner's keys, parameters and ``E(b0)``."""
        self.public_key.parent.mkdir(parents=True, exist_ok=True)
        save_keypair(state.keypair, self.public_key, self.private_key)
        save_params(state.params, self.params)
        save_vector(state.public_key, state.encrypted_b0, self.encrypted_b0)
        if state.encrypted_ab0 is not None:
            save_vector(
                state.public_key, state.encrypted_ab0, self.encrypted_ab0
            )

    def load_public(self) -> Tuple[PaillierPublicKey, CodecParams]:
        """What a collector needs."""
        public_key = load_public_key(self.public_key)
        return public_key, load_params(self.params, public_key.n)

    def load_encrypted_b0(
        self, public_key: PaillierPublicKey
    ) -> List[Ciphertext]:
        """``E(b0)`` as distributed to the collectors."""
        return load_vector(public_key, self.encrypted_b0)

    def load_handoff(self, entry_bound: float = 1.0) -> OwnerHandoff:
        """What the authorized user needs."""
        private_key: PaillierPrivateKey = load_private_key(self.private_key)
        public_key = private_key.public_key
        return OwnerHandoff(
            private_key=private_key,
            params=load_params(self.params, public_key.n),
            encrypted_b0=load_vector(public_key, self.encrypted_b0),
            encrypted_ab0=load_vector(public_key, self.encrypted_ab0),
            entry_bound=entry_bound,
        )


def submit_rows(
    client: ServiceClient,
    matrix_id: int,
    public_key: PaillierPublicKey,
    params: CodecParams,
    encrypted_b0: Sequence[Ciphertext],
    matrix: np.ndarray,
    rng: Optional[RandomSource] = None,
    entry_bound: Optional[float] = None,
) -> Dict[int, Ciphertext]:
    """Act as one collector per row: announce the matrix, upload every
    encrypted row, and return the ``E(A_i b0)`` pieces for the owner.
    """
    n_rows, n_cols = matrix.shape
    client.put_matrix_meta(
        matrix_id,
        MatrixHeader(
            key_bits=public_key.key_bits,
            n_rows=n_rows,
            n_cols=n_cols,
            d=params.d,
            q=params.q,
            n=public_key.n,
        ),
    )
    pieces = {}
    for index, row in enumerate(matrix):
        encrypted_row, piece = collector_submit(
            public_key, encrypted_b0, row.tolist(), params, rng, entry_bound
        )
        client.put_row(
            matrix_id,
            index,
            b"".join(serialize(public_key, item) for item in encrypted_row),
            n_cols,
        )
        pieces[index] = piece
        _LOGGER.debug("row %s submitted", index)
    return pieces


class LocalDeployment:
    """Owner, collectors, cloud and user in one process. The cloud answers
    through a :class:`LoopbackTransport` and runs its jobs whenever the user
    waits for a result.
    """

    def __init__(
        self,
        matrix: np.ndarray,
        data_dir: StrPath,
        config: Optional[RunConfig] = None,
        rng: Optional[RandomSource] = None,
        keypair: Optional[PaillierKeypair] = None,
        decrypt_workers: int = 1,
    ):
        self.matrix = np.asarray(matrix, dtype=float)
        self.config = config if config is not None else RunConfig()
        self.rng = rng if rng is not None else make_rng(self.config.seed)
        n = self.matrix.shape[0]
        self.config.validate(n)
        self.owner = owner_setup(
            n,
            key_bits=self.config.key_bits,
            d=self.config.d,
            q_bits=self.config.q_bits,
            rng=self.rng,
            entry_bound=self.config.entry_bound,
            vector_bound=self.config.vector_bound,
            keypair=keypair,
        )
        self.service = CloudService(
            Path(data_dir),
            workers=self.config.workers,
        )
        self.client = ServiceClient(LoopbackTransport(self.service))
        self.matrix_id = DEFAULT_MATRIX_ID
        self.decrypt_workers = decrypt_workers
        self.session: Optional[UserSession] = None

    def collect(self) -> UserSession:
        """Upload the matrix, let the owner decrypt ``A b0``, and hand off to
        the user.
        """
        pieces = submit_rows(
            self.client,
            self.matrix_id,
            self.owner.public_key,
            self.owner.params,
            self.owner.encrypted_b0,
            self.matrix,
            self.rng,
            self.config.entry_bound,
        )
        owner_collect(self.owner, pieces)
        self.session = UserSession(
            self.client,
            self.matrix_id,
            self.owner.handoff(),
            rng=self.rng,
            decrypt_workers=self.decrypt_workers,
            on_idle=self.service.run_next_job,
        )
        return self.session

    def run(
        self,
        k: Optional[int] = None,
        iters: Optional[int] = None,
        tol: float = SECURE_TOL,
        verify_residuals: bool = False,
    ) -> EigenResult:
        """Collect if needed, prepare the pool, and solve."""
        session = self.session if self.session is not None else self.collect()
        if session.pool.m == 0:
            session.prepare_pool(self.config.m)
        return secure_topk(
            session,
            k if k is not None else self.config.k,
            iters if iters is not None else self.config.iters,
            tol=tol,
            verify_residuals=verify_residuals,
        )
