# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Getting plaintext matrices in: the text interchange format, a seeded
generator of symmetric matrices with a known spectrum, and the
``encrypt-matrix`` and ``collect`` subcommands.

The text format is a line ``n_rows n_cols`` followed by the elements in
row-major order, separated by any whitespace.
"""

import logging
import sys
from argparse import ArgumentParser, Namespace
from gettext import gettext as _
from pathlib import Path
from typing import IO, Optional, Sequence

import numpy as np
from binaryornot.check import is_binary

from . import ConfigError, FormatError
from ._util import PathType, RandomSource, StrPath, make_rng
from .codec import CodecParams, to_residue
from .paillier import PaillierPublicKey, encrypt_vector
from .pipeline import DEFAULT_MATRIX_ID, ArtifactPaths, RunConfig, submit_rows
from .service import DEFAULT_PORT, ServiceClient, SocketTransport
from .store import EncryptedMatrix, save_vector

_LOGGER = logging.getLogger(__name__)

#: Eigenvalues planted at the top of a generated spectrum.
TOP_EIGENVALUES = (1.0, 0.8, 0.6)
#: The rest of a generated spectrum is drawn from this interval.
BULK_INTERVAL = (-0.4, 0.4)


def read_matrix_text(path: StrPath) -> np.ndarray:
    """Parse a matrix in the text format.

    Raises:
        FormatError: the file is binary or malformed.
    """
    path = Path(path)
    if is_binary(str(path)):
        raise FormatError(
            _("'{path}' is a binary file, expected text").format(path=path)
        )
    tokens = path.read_text(encoding="utf-8").split()
    try:
        n_rows, n_cols = int(tokens[0]), int(tokens[1])
        values = [float(token) for token in tokens[2:]]
    except (IndexError, ValueError) as error:
        raise FormatError(
            _("'{path}' is not a matrix file: {error}").format(
                path=path, error=error
            )
        ) from error
    if n_rows < 1 or n_cols < 1 or len(values) != n_rows * n_cols:
        raise FormatError(
            _("'{path}' declares {rows}x{cols} but holds {count} values").format(
                path=path, rows=n_rows, cols=n_cols, count=len(values)
            )
        )
    return np.array(values).reshape(n_rows, n_cols)


def write_matrix_text(matrix: np.ndarray, path: StrPath) -> None:
    """Write *matrix* in the text format, one row per line."""
    n_rows, n_cols = matrix.shape
    lines = [f"{n_rows} {n_cols}"]
    lines.extend(" ".join(repr(float(x)) for x in row) for row in matrix)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def random_symmetric(
    n: int,
    seed: Optional[int] = None,
    spectrum: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """A random symmetric matrix ``Q diag(spectrum) Q^T`` with a Haar-random
    orthogonal Q.

    The default spectrum plants 1.0, 0.8 and 0.6 at the top and draws the
    rest from [-0.4, 0.4], so every element lies in [-1, 1].
    """
    generator = np.random.default_rng(seed)
    if spectrum is None:
        top = list(TOP_EIGENVALUES[:n])
        bulk = generator.uniform(*BULK_INTERVAL, size=n - len(top))
        spectrum = top + bulk.tolist()
    if len(spectrum) != n:
        raise ConfigError(_("the spectrum must have n values"))
    gaussian = generator.standard_normal((n, n))
    q, r = np.linalg.qr(gaussian)
    q = q * np.sign(np.diag(r))
    matrix = q @ np.diag(spectrum) @ q.T
    return (matrix + matrix.T) / 2


def encrypt_matrix(
    matrix: np.ndarray,
    public_key: PaillierPublicKey,
    params: CodecParams,
    path: StrPath,
    rng: Optional[RandomSource] = None,
) -> EncryptedMatrix:
    """Encode and encrypt *matrix* row by row into a ``.seig`` file."""
    n_rows, n_cols = matrix.shape
    encrypted = EncryptedMatrix.create(path, public_key, n_rows, n_cols, params)
    for index, row in enumerate(matrix):
        residues = [
            to_residue(value, public_key.n)
            for value in params.encode_integers(row.tolist())
        ]
        encrypted.append_row(index, encrypt_vector(public_key, residues, rng))
    _LOGGER.debug("encrypted a %sx%s matrix to %s", n_rows, n_cols, path)
    return encrypted


def add_matrix_arguments(parser: ArgumentParser) -> None:
    """Arguments that select a plaintext matrix."""
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument(
        "--input",
        metavar="PATH",
        type=PathType("r", force_file=True),
        help=_("matrix in the text format"),
    )
    source.add_argument(
        "--n",
        type=int,
        help=_("generate a random symmetric n x n matrix from --seed"),
    )


def load_matrix(args: Namespace) -> np.ndarray:
    """The matrix selected by :func:`add_matrix_arguments`."""
    if args.input is not None:
        return read_matrix_text(args.input)
    if args.n < 1:
        raise ConfigError(_("--n must be positive"))
    return random_symmetric(args.n, seed=args.seed)


def _add_data_dir(parser: ArgumentParser) -> None:
    parser.add_argument(
        "--data-dir",
        metavar="PATH",
        help=_("directory with the owner's key and parameter files"),
    )


def add_encrypt_arguments(parser: ArgumentParser) -> None:
    """Add arguments to parser."""
    add_matrix_arguments(parser)
    _add_data_dir(parser)
    parser.add_argument(
        "--output",
        metavar="PATH",
        type=PathType("w"),
        required=True,
        help=_("the .seig file to write"),
    )


def run_encrypt(args: Namespace, out: IO[str] = sys.stdout) -> int:
    """Encrypt a plaintext matrix into a ``.seig`` file."""
    config = RunConfig.from_namespace(args)
    matrix = load_matrix(args)
    public_key, params = ArtifactPaths.under(
        config.resolved_data_dir
    ).load_public()
    params.check(matrix.shape[1], config.entry_bound, config.vector_bound)
    encrypted = encrypt_matrix(
        matrix, public_key, params, args.output, make_rng(args.seed)
    )
    out.write(
        _("Wrote {rows}x{cols} encrypted matrix to {path} ({size} bytes)").format(
            rows=encrypted.n_rows,
            cols=encrypted.n_cols,
            path=args.output,
            size=encrypted.file_size,
        )
        + "\n"
    )
    return 0


def add_collect_arguments(parser: ArgumentParser) -> None:
    """Add arguments to parser."""
    add_matrix_arguments(parser)
    _add_data_dir(parser)
    parser.add_argument(
        "--host", default="127.0.0.1", help=_("address of the service")
    )
    parser.add_argument(
        "--port", type=int, default=DEFAULT_PORT, help=_("port of the service")
    )
    parser.add_argument(
        "--matrix-id",
        type=int,
        default=DEFAULT_MATRIX_ID,
        help=_("identifier of the matrix on the service"),
    )


def run_collect(args: Namespace, out: IO[str] = sys.stdout) -> int:
    """Upload every row as its own collector and write ``E(A b0)`` for the
    owner.
    """
    config = RunConfig.from_namespace(args)
    matrix = load_matrix(args)
    paths = ArtifactPaths.under(config.resolved_data_dir)
    public_key, params = paths.load_public()
    params.check(matrix.shape[1], config.entry_bound, config.vector_bound)
    encrypted_b0 = paths.load_encrypted_b0(public_key)

    client = ServiceClient(SocketTransport(args.host, args.port))
    try:
        pieces = submit_rows(
            client,
            args.matrix_id,
            public_key,
            params,
            encrypted_b0,
            matrix,
            make_rng(args.seed),
            config.entry_bound,
        )
    finally:
        client.close()
    save_vector(
        public_key,
        [pieces[index] for index in range(len(pieces))],
        paths.encrypted_ab0,
    )
    out.write(
        _("Submitted {rows} rows as matrix {matrix}; wrote {path}").format(
            rows=len(pieces), matrix=args.matrix_id, path=paths.encrypted_ab0
        )
        + "\n"
    )
    return 0
