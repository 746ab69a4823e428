# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""The data owner's setup: keys, codec parameters and, for a known
dimension, the encrypted random vector ``E(b0)`` for the collectors.
"""

import logging
import sys
from argparse import ArgumentParser, Namespace
from gettext import gettext as _
from typing import IO

from ._util import make_rng
from .codec import (
    DEFAULT_DIGITS,
    DEFAULT_Q_BITS,
    CodecParams,
    default_q,
    save_params,
)
from .paillier import keygen, keypair_from_primes, save_keypair
from .pipeline import ArtifactPaths, RunConfig
from .roles import owner_setup

_LOGGER = logging.getLogger(__name__)


def add_arguments(parser: ArgumentParser) -> None:
    """Add arguments to parser."""
    parser.add_argument(
        "--key-bits", type=int, default=1024, help=_("bits of N")
    )
    parser.add_argument(
        "--d",
        type=int,
        default=DEFAULT_DIGITS,
        help=_("decimal digits of the fixed-point encoding"),
    )
    parser.add_argument(
        "--q-bits", type=int, default=DEFAULT_Q_BITS, help=_("bits of q")
    )
    parser.add_argument(
        "--n",
        type=int,
        help=_("dimension of the matrix; also writes E(b0) for collectors"),
    )
    parser.add_argument(
        "--primes",
        type=int,
        nargs=2,
        metavar=("P", "Q"),
        help=_("use these primes instead of generating them"),
    )
    parser.add_argument(
        "--data-dir",
        metavar="PATH",
        help=_("where the key files are written"),
    )


def run(args: Namespace, out: IO[str] = sys.stdout) -> int:
    """Generate and write the owner's files."""
    config = RunConfig.from_namespace(args)
    config.validate(args.n)
    rng = make_rng(args.seed)
    paths = ArtifactPaths.under(config.resolved_data_dir)

    if args.primes:
        keypair = keypair_from_primes(*args.primes)
    else:
        keypair = keygen(config.key_bits, rng)

    if args.n is None:
        paths.public_key.parent.mkdir(parents=True, exist_ok=True)
        save_keypair(keypair, paths.public_key, paths.private_key)
        save_params(
            CodecParams(
                d=config.d,
                q=default_q(config.q_bits),
                n=keypair.public_key.n,
            ),
            paths.params,
        )
    else:
        state = owner_setup(
            args.n,
            key_bits=keypair.public_key.key_bits,
            d=config.d,
            q_bits=config.q_bits,
            rng=rng,
            entry_bound=config.entry_bound,
            vector_bound=config.vector_bound,
            keypair=keypair,
        )
        paths.save_owner(state)
        out.write(
            _("Wrote E(b0) for n = {n} to {path}").format(
                n=args.n, path=paths.encrypted_b0
            )
            + "\n"
        )
    out.write(
        _("Wrote a {bits}-bit keypair to {public} and {private}").format(
            bits=keypair.public_key.key_bits,
            public=paths.public_key,
            private=paths.private_key,
        )
        + "\n"
    )
    if keypair.insecure:
        _LOGGER.warning(_("keys under 1024 bits are not secure"))
    return 0
