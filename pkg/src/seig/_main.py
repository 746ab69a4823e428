# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Entry functions for seig."""

import argparse
import logging
import sys
import warnings
from gettext import gettext as _
from typing import IO, Any, Callable, List, Optional, Type, cast

from . import (
    ConfigError,
    NumericalError,
    ProtocolError,
    SeigException,
    __version__,
    bench,
    harness,
    ingest,
    keygen,
    service,
    solve,
)
from ._format import fill_all
from ._util import DATA_DIR_ENV, setup_logging

_LOGGER = logging.getLogger(__name__)

#: Exit codes.
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROTOCOL = 3
EXIT_NUMERICAL = 4

_DESCRIPTION_LINES = [
    _(
        "seig computes the top-k eigenvectors of a matrix that is stored"
        " Paillier-encrypted on an untrusted server. The server only ever"
        " multiplies the encrypted matrix with randomly perturbed vectors."
    ),
    _(
        "The data owner creates the keys with 'keygen', the data collectors"
        " upload encrypted rows with 'collect', the cloud runs 'serve', and"
        " the authorized user runs 'eigen'. 'eigen --local' plays every part"
        " in one process."
    ),
    _(
        "The data directory defaults to ./seig-data and can be set with"
        " --data-dir or the environment variable {env}."
    ).format(env=DATA_DIR_ENV),
]

_DESCRIPTION_TEXT = fill_all("\n\n".join(_DESCRIPTION_LINES))

_EPILOG_TEXT = _(
    "exit codes: 0 success, 2 configuration error, 3 protocol or other"
    " error, 4 numerical error"
)


def parser() -> argparse.ArgumentParser:
    """Create the parser and return it."""
    # pylint: disable=redefined-outer-name
    parser = argparse.ArgumentParser(
        formatter_class=argparse.RawTextHelpFormatter,
        description=_DESCRIPTION_TEXT,
        epilog=_EPILOG_TEXT,
    )
    parser.add_argument(
        "--debug", action="store_true", help=_("enable debug statements")
    )
    parser.add_argument(
        "--suppress-warnings",
        action="store_true",
        help=_("hide warnings such as the one about insecure key sizes"),
    )
    _add_seed(parser, default=None)
    parser.add_argument(
        "--version",
        action="store_true",
        help=_("show program's version number and exit"),
    )
    parser.set_defaults(func=lambda *args: parser.print_help())

    subparsers = parser.add_subparsers(title=_("subcommands"))

    add_command(
        subparsers,
        "keygen",
        keygen.add_arguments,
        keygen.run,
        help=_("generate keys, codec parameters and E(b0)"),
        description=fill_all(
            _(
                "Generate a Paillier keypair and the codec parameters of the"
                " data owner.\n"
                "\n"
                "With --n, also draw the random vector b0 and write E(b0),"
                " which the data collectors need to compute E(A_i b0) for"
                " their rows."
            )
        ),
    )

    add_command(
        subparsers,
        "encrypt-matrix",
        ingest.add_encrypt_arguments,
        ingest.run_encrypt,
        help=_("encrypt a plaintext matrix into a .seig file"),
    )

    add_command(
        subparsers,
        "serve",
        service.add_arguments,
        service.run,
        help=_("run the cloud service"),
    )

    add_command(
        subparsers,
        "collect",
        ingest.add_collect_arguments,
        ingest.run_collect,
        help=_("upload encrypted rows to the service as data collectors"),
        description=fill_all(
            _(
                "Act as one data collector per row: encrypt the row, upload it"
                " to the service, and compute E(A_i b0). The pieces are"
                " written as E(A b0) into the data directory for the"
                " authorized user."
            )
        ),
    )

    add_command(
        subparsers,
        "eigen",
        solve.add_arguments,
        solve.run,
        help=_("compute the top-k eigenpairs through the secure protocol"),
    )

    add_command(
        subparsers,
        "bench",
        bench.add_arguments,
        bench.run,
        help=_("report sizes and costs at a given dimension"),
    )

    add_command(
        subparsers,
        "attack-sim",
        harness.add_arguments,
        harness.run,
        help=_("simulate the statistical inference attack"),
    )

    return parser


def _add_seed(
    parser: argparse.ArgumentParser, default: Any
) -> None:
    parser.add_argument(
        "--seed",
        type=int,
        default=default,
        help=_("seed all randomness, for reproducible runs"),
    )


def _common_parser() -> argparse.ArgumentParser:
    """Options that are accepted before and after the subcommand. Values
    given after it win; otherwise the top-level value is kept.
    """
    common = argparse.ArgumentParser(add_help=False)
    _add_seed(common, default=argparse.SUPPRESS)
    return common


def add_command(  # pylint: disable=too-many-arguments,redefined-builtin
    subparsers: argparse._SubParsersAction,
    name: str,
    add_arguments_func: Callable[[argparse.ArgumentParser], None],
    run_func: Callable[[argparse.Namespace, IO[str]], int],
    formatter_class: Optional[Type[argparse.HelpFormatter]] = None,
    description: Optional[str] = None,
    help: Optional[str] = None,
) -> None:
    """Add a subparser for a command."""
    if formatter_class is None:
        formatter_class = argparse.RawTextHelpFormatter
    subparser = subparsers.add_parser(
        name,
        parents=[_common_parser()],
        formatter_class=formatter_class,
        description=description,
        help=help,
    )
    add_arguments_func(subparser)
    subparser.set_defaults(func=run_func, subcommand=name)
    subparser.set_defaults(parser=subparser)


def exit_code(error: SeigException) -> int:
    """Exit code for an error that ended a run."""
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_PROTOCOL


def main(args: Optional[List[str]] = None, out: IO[str] = sys.stdout) -> int:
    """Main entry function."""
    if args is None:
        args = cast(List[str], sys.argv[1:])

    main_parser = parser()
    parsed_args = main_parser.parse_args(args)

    setup_logging(level=logging.DEBUG if parsed_args.debug else logging.WARNING)
    # Show all warnings raised by ourselves.
    if parsed_args.suppress_warnings:
        warnings.filterwarnings("ignore", module="seig")
    else:
        warnings.filterwarnings("default", module="seig")

    if parsed_args.version:
        out.write(f"seig {__version__}\n")
        return EXIT_OK

    try:
        result = parsed_args.func(parsed_args, out)
    except SeigException as error:
        if isinstance(error, ProtocolError) and error.iteration is not None:
            _LOGGER.error(
                _("iteration {iteration}: {error}").format(
                    iteration=error.iteration, error=error
                )
            )
        else:
            _LOGGER.error(str(error))
        return exit_code(error)
    except OSError as error:
        _LOGGER.error(str(error))
        return EXIT_PROTOCOL
    return result if isinstance(result, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
