# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""The untrusted side of the computation: homomorphic matrix-vector products
over an encrypted matrix, structured as map, partition and reduce.

Each map task owns a block of rows and emits, for every row *j*, the
ciphertext ``prod_k E(A_jk) ** b_k mod N**2``, which decrypts to
``sum_k A_jk * b_k mod N``. The engine treats the exponents as opaque
naturals and never sees a key or the meaning of the residues.
"""

import logging
import math
import multiprocessing as mp
from dataclasses import dataclass, field
from gettext import gettext as _
from pathlib import Path
from typing import (
    Callable,
    Dict,
    Iterable,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
)

from . import DomainError, IntegrityError, JobFailedError, WidthMismatchError
from ._modexp import DEFAULT_STRATEGY, ExpCounter, get_strategy
from ._util import StrPath
from .paillier import Ciphertext, PaillierPublicKey
from .store import EncryptedMatrix, rows_per_block, vector_to_bytes

_LOGGER = logging.getLogger(__name__)

#: Blocks per worker when the default block size would leave workers idle.
_BLOCKS_PER_WORKER = 4

Pair = Tuple[int, int]
Partitioner = Callable[[int, int], int]


def floor_partition(row_index: int, num_reduces: int) -> int:
    """Reduce index ``row_index // num_reduces``.

    >>> floor_partition(5, 2), floor_partition(0, 7), floor_partition(9, 1)
    (2, 0, 9)
    """
    return row_index // num_reduces


def modulo_partition(row_index: int, num_reduces: int) -> int:
    """Reduce index ``row_index % num_reduces``, which spreads rows evenly.

    >>> modulo_partition(5, 2)
    1
    """
    return row_index % num_reduces


PARTITIONERS: Dict[str, Partitioner] = {
    "floor": floor_partition,
    "modulo": modulo_partition,
}


@dataclass(frozen=True)
class MatVecJob:
    """One matrix-vector product to run over an encrypted matrix."""

    matrix_path: Path
    exponents: Tuple[int, ...]
    num_reduces: int = 1
    job_id: int = 0
    strategy: str = DEFAULT_STRATEGY
    partitioner: str = "floor"

    def __post_init__(self) -> None:
        if self.num_reduces < 1:
            raise DomainError(_("the number of reduces must be positive"))
        if self.partitioner not in PARTITIONERS:
            raise DomainError(
                _("unknown partitioner '{name}'").format(name=self.partitioner)
            )
        get_strategy(self.strategy)
        if any(exponent < 0 for exponent in self.exponents):
            raise DomainError(_("exponents must be natural numbers"))


@dataclass
class EncryptedResultVector:
    """Ciphertext values of the product, in row order, plus the number of
    modular operations spent on each row.
    """

    values: List[int]
    width: int
    row_counts: List[ExpCounter] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        """Number of rows."""
        return len(self.values)

    @property
    def total_counts(self) -> ExpCounter:
        """Operation counts summed over all rows."""
        total = ExpCounter()
        for counter in self.row_counts:
            total.merge(counter)
        return total

    def ciphertexts(self) -> List[Ciphertext]:
        """The values as :class:`Ciphertext` objects."""
        return [Ciphertext(value) for value in self.values]

    def to_bytes(self) -> bytes:
        """``.sevr`` serialization."""
        return vector_to_bytes(self.values, self.width)

    def save(self, path: StrPath) -> None:
        """Write the ``.sevr`` file."""
        Path(path).write_bytes(self.to_bytes())


def _fold_row(
    row: Sequence[int],
    exponents: Sequence[int],
    nsquare: int,
    strategy: str,
    counter: Optional[ExpCounter] = None,
) -> int:
    exp = get_strategy(strategy)
    accumulator = 1
    for value, exponent in zip(row, exponents):
        # E(a)^0 is the trivial encryption of zero.
        if exponent == 0:
            continue
        accumulator = accumulator * exp(value, exponent, nsquare, counter)
        accumulator %= nsquare
    return accumulator


def map_row(
    public_key: PaillierPublicKey,
    row_index: int,
    row: Sequence[Ciphertext],
    exponents: Sequence[int],
    strategy: str = DEFAULT_STRATEGY,
    counter: Optional[ExpCounter] = None,
) -> Tuple[int, Ciphertext]:
    """Emit ``(row_index, E(sum_k a_k * b_k))`` for one encrypted row."""
    if len(row) != len(exponents):
        raise WidthMismatchError(
            _("row has {row} elements but the vector has {vector}").format(
                row=len(row), vector=len(exponents)
            )
        )
    value = _fold_row(
        [ciphertext.value for ciphertext in row],
        exponents,
        public_key.nsquare,
        strategy,
        counter,
    )
    return row_index, Ciphertext(value)


def reduce_partition(pairs: Iterable[Pair]) -> List[Pair]:
    """Identity reducer: pass the pairs through in row order.

    Raises:
        IntegrityError: a row index occurs twice.
    """
    segment = sorted(pairs, key=lambda pair: pair[0])
    duplicates = {
        segment[i][0]
        for i in range(1, len(segment))
        if segment[i][0] == segment[i - 1][0]
    }
    if duplicates:
        raise IntegrityError(
            _("rows {rows} were emitted twice").format(rows=sorted(duplicates)),
            indices=duplicates,
        )
    return segment


def shuffle(
    pairs: Iterable[Pair], num_reduces: int, partitioner: Partitioner
) -> Dict[int, List[Pair]]:
    """Group map output by reduce index."""
    partitions: Dict[int, List[Pair]] = {}
    for pair in pairs:
        partitions.setdefault(partitioner(pair[0], num_reduces), []).append(
            pair
        )
    return partitions


def assemble(segments: Iterable[List[Pair]], n_rows: int) -> List[int]:
    """Merge reduce output into a vector of *n_rows* values.

    Raises:
        IntegrityError: rows are missing or duplicated.
    """
    merged = reduce_partition(
        pair for segment in segments for pair in segment
    )
    missing = set(range(n_rows)) - {row for row, _value in merged}
    if missing or len(merged) != n_rows:
        raise IntegrityError(
            _("result is missing rows {rows}").format(rows=sorted(missing)),
            indices=missing,
        )
    return [value for _row, value in merged]


class _MapResult(NamedTuple):
    """Result of :class:`_MapContainer`."""

    first_row: int
    count: int
    pairs: List[Pair]
    counts: List[ExpCounter]
    error: Optional[Exception]


class _MapContainer:
    """Picklable map task. Every worker opens the matrix itself and reads only
    its own block.
    """

    def __init__(
        self, matrix_path: StrPath, exponents: Sequence[int], strategy: str
    ):
        self.matrix_path = str(matrix_path)
        self.exponents = list(exponents)
        self.strategy = strategy

    def __call__(self, block: Tuple[int, int]) -> _MapResult:
        first_row, count = block
        # pylint: disable=broad-except
        try:
            matrix = EncryptedMatrix.open(self.matrix_path)
            nsquare = matrix.public_key.nsquare
            pairs = []
            counts = []
            for offset, row in enumerate(
                matrix.read_rows_values(first_row, count)
            ):
                counter = ExpCounter()
                pairs.append(
                    (
                        first_row + offset,
                        _fold_row(
                            row, self.exponents, nsquare, self.strategy, counter
                        ),
                    )
                )
                counts.append(counter)
            return _MapResult(first_row, count, pairs, counts, None)
        except Exception as exc:
            return _MapResult(first_row, count, [], [], exc)


def plan_blocks(
    n_rows: int,
    row_width: int,
    worker_count: int,
    block_rows: Optional[int] = None,
) -> List[Tuple[int, int]]:
    """Split the rows into ``(first_row, count)`` blocks. By default a block
    is 64 MB of ciphertexts, but never so large that a worker would idle.
    """
    if block_rows is None:
        block_rows = min(
            rows_per_block(row_width),
            math.ceil(n_rows / (_BLOCKS_PER_WORKER * max(1, worker_count))),
        )
    block_rows = max(1, block_rows)
    return [
        (first, min(block_rows, n_rows - first))
        for first in range(0, n_rows, block_rows)
    ]


def run_job(
    job: MatVecJob,
    worker_count: int = 1,
    block_rows: Optional[int] = None,
) -> EncryptedResultVector:
    """Run *job* on a pool of *worker_count* processes. The result does not
    depend on the worker count or the block size.

    Raises:
        WidthMismatchError: the vector does not match the matrix.
        DomainError: an exponent is not below q.
        JobFailedError: a map task failed; carries the rows of its block.
    """
    matrix = EncryptedMatrix.open(job.matrix_path)
    if len(job.exponents) != matrix.n_cols:
        raise WidthMismatchError(
            _("vector has {actual} elements, the matrix {expected} columns").format(
                actual=len(job.exponents), expected=matrix.n_cols
            )
        )
    if any(exponent >= matrix.header.q for exponent in job.exponents):
        raise DomainError(_("exponents must lie below q"))

    blocks = plan_blocks(
        matrix.n_rows, matrix.header.row_width, worker_count, block_rows
    )
    container = _MapContainer(job.matrix_path, job.exponents, job.strategy)
    _LOGGER.debug(
        "job %s: %s blocks on %s workers", job.job_id, len(blocks), worker_count
    )

    if worker_count > 1 and len(blocks) > 1:
        with mp.Pool(worker_count) as pool:
            results: Iterable[_MapResult] = pool.map(container, blocks)
        pool.join()
    else:
        results = map(container, blocks)

    pairs: List[Pair] = []
    row_counts: Dict[int, ExpCounter] = {}
    for result in results:
        if result.error:
            last_row = result.first_row + result.count - 1
            _LOGGER.error(
                _("map task for rows {first}-{last} failed").format(
                    first=result.first_row, last=last_row
                ),
                exc_info=result.error,
            )
            raise JobFailedError(
                _("job {job} failed on rows {first}-{last}: {error}").format(
                    job=job.job_id,
                    first=result.first_row,
                    last=last_row,
                    error=result.error,
                ),
                first_row=result.first_row,
                last_row=last_row,
            ) from result.error
        pairs.extend(result.pairs)
        row_counts.update(
            (result.first_row + offset, counter)
            for offset, counter in enumerate(result.counts)
        )

    partitions = shuffle(
        pairs, job.num_reduces, PARTITIONERS[job.partitioner]
    )
    segments = [reduce_partition(partitions[key]) for key in sorted(partitions)]
    values = assemble(segments, matrix.n_rows)
    return EncryptedResultVector(
        values=values,
        width=matrix.header.width,
        row_counts=[row_counts[row] for row in range(matrix.n_rows)],
    )
