# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""On-disk formats for encrypted data.

An encrypted matrix (``.seig``) is a header followed by the ciphertexts in
row-major order, each exactly ``ciphertext_width`` bytes. The header layout,
all integers big-endian::

    magic "SEIG"        4 bytes
    version             u16
    key_bits            u32
    n_rows              u64
    n_cols              u64
    d                   u8
    q length, q         u16 + bytes
    pk length, N        u32 + bytes

The file is sized for the whole matrix on creation. Slots that were never
written read as zero, which no valid ciphertext can be, so missing rows are
detected without a separate index.

An encrypted vector (``.sevr``) is ``"SEVR"``, version u16, n_rows u64,
ciphertext width u32, then the ciphertexts in row order.
"""

import logging
import struct
from dataclasses import dataclass
from gettext import gettext as _
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Set, Tuple

from . import FormatError, IntegrityError, WidthMismatchError
from ._util import StrPath, byte_length, int_from_bytes, int_to_bytes
from .codec import CodecParams
from .paillier import Ciphertext, PaillierPublicKey, deserialize, serialize

_LOGGER = logging.getLogger(__name__)

MATRIX_MAGIC = b"SEIG"
MATRIX_VERSION = 1
VECTOR_MAGIC = b"SEVR"
VECTOR_VERSION = 1

#: Default block size of the cloud engine, in bytes of ciphertext payload.
DEFAULT_BLOCK_BYTES = 64 * 1024 * 1024

_FIXED_HEADER = struct.Struct("!4sHIQQB")
_VECTOR_HEADER = struct.Struct("!4sHQI")


def ciphertext_width(key_bits: int) -> int:
    """Bytes per ciphertext for a key of *key_bits* bits.

    >>> ciphertext_width(1024)
    256
    """
    return (2 * key_bits + 7) // 8


def matrix_payload_size(key_bits: int, n_rows: int, n_cols: int) -> int:
    """Bytes of ciphertext payload of an encrypted matrix.

    >>> matrix_payload_size(1024, 100, 100)
    2560000
    """
    return n_rows * n_cols * ciphertext_width(key_bits)


def rows_per_block(
    row_width: int, block_bytes: int = DEFAULT_BLOCK_BYTES
) -> int:
    """How many rows of *row_width* bytes fit in one block, at least one."""
    return max(1, block_bytes // max(1, row_width))


@dataclass(frozen=True)
class MatrixHeader:
    """Everything before the first ciphertext of a ``.seig`` file."""

    key_bits: int
    n_rows: int
    n_cols: int
    d: int
    q: int
    n: int

    @property
    def width(self) -> int:
        """Bytes per ciphertext."""
        return ciphertext_width(self.key_bits)

    @property
    def row_width(self) -> int:
        """Bytes per row."""
        return self.n_cols * self.width

    @property
    def public_key(self) -> PaillierPublicKey:
        """The public key embedded in the header."""
        return PaillierPublicKey(n=self.n, key_bits=self.key_bits)

    @property
    def params(self) -> CodecParams:
        """The codec parameters embedded in the header."""
        return CodecParams(d=self.d, q=self.q, n=self.n)

    def to_bytes(self) -> bytes:
        """Serialize the header."""
        q_len = byte_length(self.q)
        pk_len = (self.key_bits + 7) // 8
        return b"".join(
            [
                _FIXED_HEADER.pack(
                    MATRIX_MAGIC,
                    MATRIX_VERSION,
                    self.key_bits,
                    self.n_rows,
                    self.n_cols,
                    self.d,
                ),
                struct.pack("!H", q_len),
                int_to_bytes(self.q, q_len),
                struct.pack("!I", pk_len),
                int_to_bytes(self.n, pk_len),
            ]
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> Tuple["MatrixHeader", int]:
        """Parse a header from the start of *data*. Return it and its size."""
        if len(data) < _FIXED_HEADER.size + 2:
            raise FormatError(_("truncated matrix header"))
        magic, version, key_bits, n_rows, n_cols, d = _FIXED_HEADER.unpack_from(
            data
        )
        if magic != MATRIX_MAGIC:
            raise FormatError(_("not an encrypted matrix file"))
        if version != MATRIX_VERSION:
            raise FormatError(
                _("unsupported matrix file version {version}").format(
                    version=version
                )
            )
        offset = _FIXED_HEADER.size
        (q_len,) = struct.unpack_from("!H", data, offset)
        offset += 2
        if len(data) < offset + q_len:
            raise FormatError(_("truncated matrix header"))
        q = int_from_bytes(data[offset : offset + q_len])
        offset += q_len
        if len(data) < offset + 4:
            raise FormatError(_("truncated matrix header"))
        (pk_len,) = struct.unpack_from("!I", data, offset)
        offset += 4
        if len(data) < offset + pk_len:
            raise FormatError(_("truncated matrix header"))
        n = int_from_bytes(data[offset : offset + pk_len])
        offset += pk_len
        header = cls(
            key_bits=key_bits, n_rows=n_rows, n_cols=n_cols, d=d, q=q, n=n
        )
        header.validate()
        return header, offset

    def validate(self) -> None:
        """Reject empty matrices and inconsistent keys."""
        if self.n_rows < 1 or self.n_cols < 1:
            raise FormatError(_("matrix dimensions must be positive"))
        if self.n.bit_length() != self.key_bits:
            raise FormatError(_("modulus does not match key_bits"))


class EncryptedMatrix:
    """A ``.seig`` file. One writer may append rows; once every row is
    present, any number of readers may stream it.
    """

    def __init__(self, path: StrPath, header: MatrixHeader, header_size: int):
        self.path = Path(path)
        self.header = header
        self.header_size = header_size
        self._written: Optional[Set[int]] = None
        self._zero = bytes(header.width)

    @classmethod
    def create(
        cls,
        path: StrPath,
        public_key: PaillierPublicKey,
        n_rows: int,
        n_cols: int,
        params: CodecParams,
    ) -> "EncryptedMatrix":
        """Write the header of a new matrix and reserve room for its rows.

        Raises:
            FormatError: a dimension is not positive.
        """
        header = MatrixHeader(
            key_bits=public_key.key_bits,
            n_rows=n_rows,
            n_cols=n_cols,
            d=params.d,
            q=params.q,
            n=public_key.n,
        )
        header.validate()
        raw = header.to_bytes()
        path = Path(path)
        with path.open("wb") as fp:
            fp.write(raw)
            fp.truncate(len(raw) + n_rows * header.row_width)
        _LOGGER.debug(
            "created %sx%s matrix at %s", n_rows, n_cols, path
        )
        matrix = cls(path, header, len(raw))
        matrix._written = set()
        return matrix

    @classmethod
    def open(cls, path: StrPath) -> "EncryptedMatrix":
        """Open an existing matrix file.

        Raises:
            FormatError: the header is invalid or the file has the wrong size.
        """
        path = Path(path)
        with path.open("rb") as fp:
            head = fp.read(_FIXED_HEADER.size + 2)
            if len(head) == _FIXED_HEADER.size + 2:
                (q_len,) = struct.unpack_from("!H", head, _FIXED_HEADER.size)
                head += fp.read(q_len + 4)
                if len(head) >= _FIXED_HEADER.size + 6 + q_len:
                    (pk_len,) = struct.unpack_from("!I", head, len(head) - 4)
                    head += fp.read(pk_len)
        header, header_size = MatrixHeader.from_bytes(head)
        matrix = cls(path, header, header_size)
        if path.stat().st_size != matrix.file_size:
            raise FormatError(
                _("{path} has {actual} bytes, expected {expected}").format(
                    path=path,
                    actual=path.stat().st_size,
                    expected=matrix.file_size,
                )
            )
        return matrix

    @property
    def n_rows(self) -> int:
        """Number of rows."""
        return self.header.n_rows

    @property
    def n_cols(self) -> int:
        """Number of columns."""
        return self.header.n_cols

    @property
    def public_key(self) -> PaillierPublicKey:
        """The public key the rows are encrypted under."""
        return self.header.public_key

    @property
    def payload_size(self) -> int:
        """Bytes of ciphertext payload."""
        return self.n_rows * self.header.row_width

    @property
    def file_size(self) -> int:
        """Exact size of the file."""
        return self.header_size + self.payload_size

    def _offset(self, row_index: int) -> int:
        return self.header_size + row_index * self.header.row_width

    def _check_index(self, row_index: int) -> None:
        if not 0 <= row_index < self.n_rows:
            raise IntegrityError(
                _("row {row} lies outside of [0, {n_rows})").format(
                    row=row_index, n_rows=self.n_rows
                ),
                indices=[row_index],
            )

    def _scan_written(self) -> Set[int]:
        written = set()
        with self.path.open("rb") as fp:
            for row_index in range(self.n_rows):
                fp.seek(self._offset(row_index))
                if fp.read(self.header.width) != self._zero:
                    written.add(row_index)
        return written

    @property
    def written_rows(self) -> Set[int]:
        """Indices of rows that have been appended."""
        if self._written is None:
            self._written = self._scan_written()
        return self._written

    def missing_rows(self) -> List[int]:
        """Indices of rows that have not been appended yet."""
        written = self.written_rows
        return [i for i in range(self.n_rows) if i not in written]

    def is_complete(self) -> bool:
        """Every row is present."""
        return len(self.written_rows) == self.n_rows

    def append_row_bytes(self, row_index: int, data: bytes) -> None:
        """Persist an already serialized row.

        Raises:
            IntegrityError: the row was already written or is out of range.
            WidthMismatchError: *data* does not hold exactly one row.
            FormatError: a slot is all zeroes.
        """
        self._check_index(row_index)
        if len(data) != self.header.row_width:
            raise WidthMismatchError(
                _("row {row} has {actual} bytes, expected {expected}").format(
                    row=row_index,
                    actual=len(data),
                    expected=self.header.row_width,
                )
            )
        width = self.header.width
        for start in range(0, len(data), width):
            if data[start : start + width] == self._zero:
                raise FormatError(
                    _("row {row} contains an all-zero ciphertext").format(
                        row=row_index
                    )
                )
        if row_index in self.written_rows:
            raise IntegrityError(
                _("row {row} was already written").format(row=row_index),
                indices=[row_index],
            )
        with self.path.open("r+b") as fp:
            fp.seek(self._offset(row_index))
            fp.write(data)
        self.written_rows.add(row_index)

    def append_row(self, row_index: int, row: Sequence[Ciphertext]) -> None:
        """Persist row *row_index*. See :meth:`append_row_bytes`."""
        if len(row) != self.n_cols:
            raise WidthMismatchError(
                _("row {row} has {actual} elements, expected {expected}").format(
                    row=row_index, actual=len(row), expected=self.n_cols
                )
            )
        public_key = self.public_key
        self.append_row_bytes(
            row_index,
            b"".join(serialize(public_key, ciphertext) for ciphertext in row),
        )

    def read_rows_bytes(self, first_row: int, count: int) -> bytes:
        """Raw bytes of *count* rows starting at *first_row*.

        Raises:
            IntegrityError: one of the rows is missing.
        """
        if count < 1:
            return b""
        self._check_index(first_row)
        self._check_index(first_row + count - 1)
        with self.path.open("rb") as fp:
            fp.seek(self._offset(first_row))
            data = fp.read(count * self.header.row_width)
        width = self.header.width
        missing = {
            first_row + start // self.header.row_width
            for start in range(0, len(data), width)
            if data[start : start + width] == self._zero
        }
        if missing:
            raise IntegrityError(
                _("rows {rows} are missing").format(rows=sorted(missing)),
                indices=missing,
            )
        return data

    def read_rows_values(
        self, first_row: int, count: int
    ) -> List[List[int]]:
        """Ciphertext values of *count* rows starting at *first_row*."""
        data = self.read_rows_bytes(first_row, count)
        width = self.header.width
        row_width = self.header.row_width
        return [
            [
                int_from_bytes(data[start : start + width])
                for start in range(offset, offset + row_width, width)
            ]
            for offset in range(0, len(data), row_width)
        ]

    def read_row(self, row_index: int) -> List[Ciphertext]:
        """Ciphertexts of one row."""
        data = self.read_rows_bytes(row_index, 1)
        public_key = self.public_key
        width = self.header.width
        return [
            deserialize(public_key, data[start : start + width])
            for start in range(0, len(data), width)
        ]

    def stream_blocks(
        self, block_rows: Optional[int] = None
    ) -> Iterator[Tuple[int, List[List[int]]]]:
        """Yield ``(first_row, rows)`` blocks in row order. The last block may
        be short. By default a block holds 64 MB of ciphertexts.

        Raises:
            IntegrityError: a row is missing.
        """
        if block_rows is None:
            block_rows = rows_per_block(self.header.row_width)
        if block_rows < 1:
            raise ValueError("block_rows must be positive")
        for first_row in range(0, self.n_rows, block_rows):
            count = min(block_rows, self.n_rows - first_row)
            yield first_row, self.read_rows_values(first_row, count)


def vector_to_bytes(values: Sequence[int], width: int) -> bytes:
    """Serialize ciphertext values as a ``.sevr`` file."""
    return _VECTOR_HEADER.pack(
        VECTOR_MAGIC, VECTOR_VERSION, len(values), width
    ) + b"".join(int_to_bytes(value, width) for value in values)


def vector_from_bytes(data: bytes) -> Tuple[int, List[int]]:
    """Parse a ``.sevr`` file. Return the ciphertext width and the values."""
    if len(data) < _VECTOR_HEADER.size:
        raise FormatError(_("truncated vector header"))
    magic, version, n_rows, width = _VECTOR_HEADER.unpack_from(data)
    if magic != VECTOR_MAGIC:
        raise FormatError(_("not an encrypted vector file"))
    if version != VECTOR_VERSION:
        raise FormatError(
            _("unsupported vector file version {version}").format(
                version=version
            )
        )
    if width < 1 or len(data) != _VECTOR_HEADER.size + n_rows * width:
        raise FormatError(_("vector file has the wrong size"))
    offset = _VECTOR_HEADER.size
    return width, [
        int_from_bytes(data[start : start + width])
        for start in range(offset, len(data), width)
    ]


def save_vector(
    public_key: PaillierPublicKey,
    ciphertexts: Sequence[Ciphertext],
    path: StrPath,
) -> None:
    """Write ciphertexts as a ``.sevr`` file."""
    header = _VECTOR_HEADER.pack(
        VECTOR_MAGIC,
        VECTOR_VERSION,
        len(ciphertexts),
        public_key.ciphertext_width,
    )
    Path(path).write_bytes(
        header
        + b"".join(serialize(public_key, item) for item in ciphertexts)
    )


def load_vector(
    public_key: PaillierPublicKey, path: StrPath
) -> List[Ciphertext]:
    """Read a ``.sevr`` file written under *public_key*."""
    return parse_vector(public_key, Path(path).read_bytes())


def parse_vector(
    public_key: PaillierPublicKey, data: bytes
) -> List[Ciphertext]:
    """Parse ``.sevr`` bytes and check them against *public_key*."""
    width, values = vector_from_bytes(data)
    if width != public_key.ciphertext_width:
        raise WidthMismatchError(
            _("vector has {actual}-byte ciphertexts, expected {expected}").format(
                actual=width, expected=public_key.ciphertext_width
            )
        )
    for value in values:
        if value >= public_key.nsquare:
            raise FormatError(_("ciphertext lies outside of [0, N^2)"))
    return [Ciphertext(value) for value in values]
