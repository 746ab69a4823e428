# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""seig computes the top-k eigenvectors of a matrix whose elements are stored
Paillier-encrypted on an untrusted server.

The matrix never leaves the trusted side in the clear. The server multiplies
the encrypted matrix with vectors that the authorized user has blinded with a
random combination of pool vectors, and the user strips the blinding from the
decrypted result. Any iterative eigensolver that only touches the matrix
through matrix-vector products can run on top of this.

Although the API is documented, it is **NOT** guaranteed stable between minor
releases. If you want to use seig as a Python library, pin an exact version.
"""

import gettext
import logging
import os
from importlib.metadata import PackageNotFoundError, version
from typing import Iterable, Optional

try:
    __version__ = version("seig")
except PackageNotFoundError:
    # package is not installed
    __version__ = "0.4.0"

__license__ = "Apache-2.0 AND CC0-1.0"

_LOGGER = logging.getLogger(__name__)

_PACKAGE_PATH = os.path.dirname(__file__)
_LOCALE_DIR = os.path.join(_PACKAGE_PATH, "locale")

if gettext.find("seig", localedir=_LOCALE_DIR):
    gettext.bindtextdomain("seig", _LOCALE_DIR)
    gettext.textdomain("seig")
    _LOGGER.debug("translations found at %s", _LOCALE_DIR)
else:
    _LOGGER.debug("no translations found at %s", _LOCALE_DIR)


class InsecureKeyWarning(UserWarning):
    """A key was generated with fewer than 1024 bits. Fine for tests, not for
    real data.
    """


class SeigException(Exception):
    """Base exception."""


class ConfigError(SeigException):
    """The run configuration is invalid."""


class CapacityError(ConfigError):
    """Encoded values do not fit the moduli. *required_q_bits* is the smallest
    bit length of q that would have been safe, if it can be computed.
    """

    def __init__(self, message: str, required_q_bits: Optional[int] = None):
        super().__init__(message)
        self.required_q_bits = required_q_bits


class CryptoError(SeigException):
    """Something went wrong in the cryptosystem."""


class KeyGenerationError(CryptoError):
    """No suitable primes were found within the retry budget."""


class DecryptionError(CryptoError):
    """A ciphertext cannot be decrypted under this key."""


class DomainError(SeigException, ValueError):
    """A plaintext or scalar lies outside of the allowed domain."""


class FormatError(SeigException):
    """Bytes do not have the expected layout."""


class WidthMismatchError(FormatError):
    """A ciphertext or a row has the wrong number of bytes or elements."""


class IntegrityError(SeigException):
    """Rows or vector elements are missing or duplicated."""

    def __init__(self, message: str, indices: Iterable[int] = ()):
        super().__init__(message)
        self.indices = sorted(indices)


class ProtocolError(SeigException):
    """The protocol between the parties was violated or aborted."""

    def __init__(self, message: str, iteration: Optional[int] = None):
        super().__init__(message)
        self.iteration = iteration


class ServiceError(ProtocolError):
    """The service answered with an ERROR frame."""

    def __init__(self, message: str, code: int = 0):
        super().__init__(message)
        self.code = code


class NotReadyError(ProtocolError):
    """A result was requested before its job finished."""


class JobFailedError(ProtocolError):
    """A cloud job failed. *first_row* and *last_row* delimit the rows
    (inclusive) of the block that failed, if known.
    """

    def __init__(
        self,
        message: str,
        first_row: Optional[int] = None,
        last_row: Optional[int] = None,
    ):
        super().__init__(message)
        self.first_row = first_row
        self.last_row = last_row


class NumericalError(SeigException):
    """A numerical routine failed."""


class BreakdownError(NumericalError):
    """An iteration produced a zero vector."""


class ConvergenceError(NumericalError):
    """An iteration did not converge within its cap."""
