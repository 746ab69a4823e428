# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""The ``eigen`` subcommand: top-k eigenpairs through the secure protocol,
either against a running service or in-process with ``--local``.
"""

import logging
import sys
import tempfile
from argparse import ArgumentParser, Namespace
from gettext import gettext as _
from pathlib import Path
from typing import IO, Any, Dict, Tuple

import numpy as np

from . import ConfigError
from ._util import PathType, make_rng
from .codec import DEFAULT_DIGITS, DEFAULT_Q_BITS
from .eigen import (
    PLAINTEXT_TOL,
    SECURE_TOL,
    EigenResult,
    PlaintextBackend,
    secure_topk,
    topk,
)
from .ingest import load_matrix
from .pipeline import (
    DEFAULT_MATRIX_ID,
    ArtifactPaths,
    LocalDeployment,
    RunConfig,
)
from .report import render_eigen
from .roles import DEFAULT_POOL_SIZE, UserSession
from .service import DEFAULT_PORT, ServiceClient, SocketTransport

_LOGGER = logging.getLogger(__name__)


def add_arguments(parser: ArgumentParser) -> None:
    """Add arguments to parser."""
    parser.add_argument(
        "--local",
        action="store_true",
        help=_("run every party in this process, without sockets"),
    )
    source = parser.add_mutually_exclusive_group()
    source.add_argument(
        "--input",
        metavar="PATH",
        type=PathType("r", force_file=True),
        help=_("matrix in the text format; implies --local"),
    )
    source.add_argument(
        "--n",
        type=int,
        help=_("generate a random symmetric n x n matrix; implies --local"),
    )
    parser.add_argument("--k", type=int, default=3, help=_("eigenpairs"))
    parser.add_argument(
        "--m",
        type=int,
        default=DEFAULT_POOL_SIZE,
        help=_("seed vectors in the perturbation pool"),
    )
    parser.add_argument(
        "--iters", type=int, default=40, help=_("matrix-vector products")
    )
    parser.add_argument(
        "--tol", type=float, default=SECURE_TOL, help=_("tolerance")
    )
    parser.add_argument(
        "--key-bits", type=int, default=1024, help=_("bits of N (with --local)")
    )
    parser.add_argument(
        "--d",
        type=int,
        default=DEFAULT_DIGITS,
        help=_("decimal digits of the fixed-point encoding (with --local)"),
    )
    parser.add_argument(
        "--q-bits",
        type=int,
        default=DEFAULT_Q_BITS,
        help=_("bits of q (with --local)"),
    )
    parser.add_argument(
        "--workers",
        type=int,
        help=_("map worker processes of the in-process cloud"),
    )
    parser.add_argument(
        "--decrypt-workers",
        type=int,
        default=1,
        help=_("processes that decrypt results"),
    )
    parser.add_argument(
        "--verify-residuals",
        action="store_true",
        help=_("measure residuals with one extra product per vector"),
    )
    parser.add_argument(
        "--compare",
        action="store_true",
        help=_("also solve in the clear and report the difference"),
    )
    parser.add_argument(
        "--data-dir",
        metavar="PATH",
        help=_("directory with the owner's files"),
    )
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
    parser.add_argument(
        "--vectors-dir",
        metavar="PATH",
        help=_("write every Ritz vector as a .npy file into this directory"),
    )
    parser.add_argument(
        "--format",
        choices=["plain", "json"],
        default="plain",
        help=_("output format"),
    )


def _compare(
    matrix: np.ndarray, session: UserSession, result: EigenResult, iters: int
) -> Dict[str, Any]:
    start = np.array([float(value) for value in session.b0])
    plain = topk(
        PlaintextBackend(matrix, start=start),
        result.k,
        iters,
        tol=PLAINTEXT_TOL,
    )
    count = min(plain.k, result.k)
    difference = np.abs(
        result.eigenvalues[:count] - plain.eigenvalues[:count]
    ) / np.maximum(np.abs(plain.eigenvalues[:count]), np.finfo(float).tiny)
    return {
        _("plaintext eigenvalues"): ", ".join(
            f"{value:.12e}" for value in plain.eigenvalues
        ),
        _("largest relative difference"): f"{difference.max():.3e}",
    }


def _run_local(
    args: Namespace, config: RunConfig
) -> Tuple[EigenResult, Dict[str, Any]]:
    if args.input is None and args.n is None:
        raise ConfigError(_("--local needs --input or --n"))
    matrix = load_matrix(args)
    context: Dict[str, Any] = {
        _("dimension"): matrix.shape[0],
        _("key size"): config.key_bits,
        _("pool size"): config.m,
    }
    with tempfile.TemporaryDirectory(prefix="seig-") as scratch:
        deployment = LocalDeployment(
            matrix,
            scratch if args.data_dir is None else config.resolved_data_dir,
            config=config,
            rng=make_rng(args.seed),
            decrypt_workers=args.decrypt_workers,
        )
        session = deployment.collect()
        result = deployment.run(
            tol=args.tol, verify_residuals=args.verify_residuals
        )
        context[_("cloud products")] = len(session.transcript)
        if args.compare:
            context.update(_compare(matrix, session, result, config.iters))
    return result, context


def _run_remote(
    args: Namespace, config: RunConfig
) -> Tuple[EigenResult, Dict[str, Any]]:
    handoff = ArtifactPaths.under(config.resolved_data_dir).load_handoff(
        config.entry_bound
    )
    client = ServiceClient(SocketTransport(args.host, args.port))
    try:
        session = UserSession(
            client,
            args.matrix_id,
            handoff,
            rng=make_rng(args.seed),
            decrypt_workers=args.decrypt_workers,
        )
        config.validate(session.n)
        session.prepare_pool(config.m)
        result = secure_topk(
            session,
            config.k,
            config.iters,
            tol=args.tol,
            verify_residuals=args.verify_residuals,
        )
    finally:
        client.close()
    context: Dict[str, Any] = {
        _("dimension"): session.n,
        _("pool size"): config.m,
        _("cloud products"): len(session.transcript),
    }
    return result, context


def write_vectors(result: EigenResult, directory: Path) -> None:
    """One ``ritz_<i>.npy`` per eigenpair, in the order of the report."""
    directory.mkdir(parents=True, exist_ok=True)
    for index in range(result.k):
        np.save(directory / f"ritz_{index + 1}.npy", result.vectors[:, index])


def run(args: Namespace, out: IO[str] = sys.stdout) -> int:
    """Solve and print the report."""
    config = RunConfig.from_namespace(args)
    # A matrix in hand means every party runs here.
    if args.local or args.input is not None or args.n is not None:
        result, context = _run_local(args, config)
    else:
        if args.compare:
            raise ConfigError(_("--compare needs --local"))
        result, context = _run_remote(args, config)
    if args.vectors_dir is not None:
        write_vectors(result, Path(args.vectors_dir))
    out.write(render_eigen(result, args.format, context))
    return 0
