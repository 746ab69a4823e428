# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Network front end of the untrusted side.

Every message is a frame: payload length (u32), message type (u8) and the
payload. All integers are big-endian. Requests and their payloads:

- ``PUT_MATRIX_META``: matrix id (u64) + a complete ``.seig`` header.
- ``PUT_ROW``: matrix id (u64), row index (u64), count (u64), ciphertexts.
- ``SUBMIT_MATVEC``: matrix id (u64), count (u64), exponents at the byte
  width of q. Answered with ``ACK`` and the job id (u64).
- ``JOB_STATUS``: job id (u64). Answered with ``ACK`` and the state (u8).
- ``FETCH_RESULT``: job id (u64). Answered with ``ACK`` and the ``.sevr``
  bytes, or ``NOT_READY`` and the state.

Failures are answered with ``ERROR``: a code (u16) and a UTF-8 message. The
service only ever sees the public key, encrypted rows and exponent vectors.
"""

import itertools
import logging
import queue
import socket
import socketserver
import struct
import sys
import threading
import time
from argparse import ArgumentParser, Namespace
from dataclasses import dataclass, field
from enum import IntEnum
from gettext import gettext as _
from pathlib import Path
from typing import IO, Callable, Dict, List, NamedTuple, Optional, Sequence

from . import (
    ConfigError,
    DomainError,
    FormatError,
    IntegrityError,
    JobFailedError,
    NotReadyError,
    ProtocolError,
    SeigException,
    ServiceError,
    WidthMismatchError,
)
from ._util import byte_length, int_from_bytes, int_to_bytes, resolve_data_dir
from .engine import MatVecJob, run_job
from .store import EncryptedMatrix, MatrixHeader

_LOGGER = logging.getLogger(__name__)

#: Frames larger than this are refused before their payload is read.
MAX_FRAME_SIZE = 256 * 1024 * 1024
DEFAULT_PORT = 7207
#: Finished jobs whose result was never fetched are kept up to this count.
DEFAULT_KEEP_FINISHED = 64

_FRAME_HEADER = struct.Struct("!IB")
_U64 = struct.Struct("!Q")


class MessageType(IntEnum):
    """Frame types."""

    PUT_MATRIX_META = 1
    PUT_ROW = 2
    SUBMIT_MATVEC = 3
    JOB_STATUS = 4
    FETCH_RESULT = 5
    ACK = 6
    ERROR = 7
    NOT_READY = 8


class JobState(IntEnum):
    """Life cycle of a job: PENDING, RUNNING, then DONE or FAILED."""

    PENDING = 0
    RUNNING = 1
    DONE = 2
    FAILED = 3


class ErrorCode(IntEnum):
    """Codes carried by ``ERROR`` frames."""

    PROTOCOL = 1
    UNKNOWN_MATRIX = 2
    UNKNOWN_JOB = 3
    WIDTH_MISMATCH = 4
    INTEGRITY = 5
    FORMAT = 6
    DOMAIN = 7
    JOB_FAILED = 8
    INTERNAL = 9


class Frame(NamedTuple):
    """One message."""

    msg_type: MessageType
    payload: bytes = b""

    def to_bytes(self) -> bytes:
        """Length, type, payload."""
        if len(self.payload) > MAX_FRAME_SIZE:
            raise ProtocolError(_("frame exceeds the maximum size"))
        return (
            _FRAME_HEADER.pack(len(self.payload), int(self.msg_type))
            + self.payload
        )


def _parse_type(value: int) -> MessageType:
    try:
        return MessageType(value)
    except ValueError:
        raise ProtocolError(
            _("unknown message type {value}").format(value=value)
        ) from None


def decode_frame(data: bytes) -> Frame:
    """Parse exactly one frame from *data*."""
    if len(data) < _FRAME_HEADER.size:
        raise ProtocolError(_("truncated frame"))
    length, msg_type = _FRAME_HEADER.unpack_from(data)
    if length > MAX_FRAME_SIZE:
        raise ProtocolError(_("frame exceeds the maximum size"))
    if len(data) != _FRAME_HEADER.size + length:
        raise ProtocolError(_("frame length does not match its payload"))
    return Frame(_parse_type(msg_type), data[_FRAME_HEADER.size :])


def _recv_exact(sock: socket.socket, length: int) -> Optional[bytes]:
    got = 0
    chunks = []
    while got < length:
        chunk = sock.recv(min(length - got, 1 << 20))
        if not chunk:
            return None
        got += len(chunk)
        chunks.append(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> Optional[Frame]:
    """Read one frame from *sock*. Return None on a clean end of stream.

    Raises:
        ProtocolError: the frame is oversized, truncated or of unknown type.
    """
    head = _recv_exact(sock, _FRAME_HEADER.size)
    if head is None:
        return None
    length, msg_type = _FRAME_HEADER.unpack(head)
    if length > MAX_FRAME_SIZE:
        raise ProtocolError(_("frame exceeds the maximum size"))
    payload = _recv_exact(sock, length) if length else b""
    if payload is None:
        raise ProtocolError(_("peer disappeared in the middle of a frame"))
    return Frame(_parse_type(msg_type), payload)


def error_frame(code: ErrorCode, message: str) -> Frame:
    """An ``ERROR`` frame."""
    return Frame(
        MessageType.ERROR,
        struct.pack("!H", int(code)) + message.encode("utf-8"),
    )


def _u64(value: int) -> bytes:
    return _U64.pack(value)


def _read_u64(payload: bytes, offset: int) -> int:
    if len(payload) < offset + 8:
        raise ProtocolError(_("truncated payload"))
    return _U64.unpack_from(payload, offset)[0]


def _error_code(error: SeigException) -> ErrorCode:
    if isinstance(error, WidthMismatchError):
        return ErrorCode.WIDTH_MISMATCH
    if isinstance(error, FormatError):
        return ErrorCode.FORMAT
    if isinstance(error, IntegrityError):
        return ErrorCode.INTEGRITY
    if isinstance(error, DomainError):
        return ErrorCode.DOMAIN
    if isinstance(error, JobFailedError):
        return ErrorCode.JOB_FAILED
    return ErrorCode.PROTOCOL


class _UnknownMatrix(ProtocolError):
    pass


class _UnknownJob(ProtocolError):
    pass


@dataclass
class JobRecord:
    """Server-side bookkeeping of a submitted job."""

    job_id: int
    job: MatVecJob
    result_path: Path
    state: JobState = JobState.PENDING
    error: str = ""
    history: List[JobState] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.history.append(self.state)

    def advance(self, state: JobState) -> None:
        """Move to *state*. Only forward transitions are allowed."""
        allowed = {
            JobState.PENDING: {JobState.RUNNING},
            JobState.RUNNING: {JobState.DONE, JobState.FAILED},
        }
        if state not in allowed.get(self.state, set()):
            raise ProtocolError(
                _("job {job} cannot go from {old} to {new}").format(
                    job=self.job_id, old=self.state.name, new=state.name
                )
            )
        self.state = state
        self.history.append(state)


class CloudService:
    """Request handling and job queue, independent of any transport.

    Matrices live in ``<data_dir>/matrices/<id>.seig`` and results in
    ``<data_dir>/results/<job_id>.sevr``. A single runner thread takes jobs
    from the queue, so one engine job runs at a time.
    A job record and its result file are dropped once the result has been
    fetched, and the oldest unfetched ones beyond *keep_finished*.
    """

    def __init__(
        self,
        data_dir: Path,
        workers: int = 1,
        block_rows: Optional[int] = None,
        strategy: str = "window",
        num_reduces: int = 1,
        partitioner: str = "floor",
        keep_finished: int = DEFAULT_KEEP_FINISHED,
    ):
        self.data_dir = Path(data_dir)
        self.matrix_dir = self.data_dir / "matrices"
        self.result_dir = self.data_dir / "results"
        self.matrix_dir.mkdir(parents=True, exist_ok=True)
        self.result_dir.mkdir(parents=True, exist_ok=True)
        self.workers = workers
        self.block_rows = block_rows
        self.strategy = strategy
        self.num_reduces = num_reduces
        self.partitioner = partitioner
        if keep_finished < 0:
            raise ConfigError(_("keep_finished cannot be negative"))
        self.keep_finished = keep_finished

        self._lock = threading.Lock()
        self._matrices: Dict[int, EncryptedMatrix] = {}
        self._jobs: Dict[int, JobRecord] = {}
        self._finished: Dict[int, None] = {}
        self._job_ids = itertools.count(1)
        self._queue: "queue.Queue[Optional[int]]" = queue.Queue()
        self._runner: Optional[threading.Thread] = None
        self._handlers: Dict[MessageType, Callable[[bytes], Frame]] = {
            MessageType.PUT_MATRIX_META: self._put_matrix_meta,
            MessageType.PUT_ROW: self._put_row,
            MessageType.SUBMIT_MATVEC: self._submit_matvec,
            MessageType.JOB_STATUS: self._job_status,
            MessageType.FETCH_RESULT: self._fetch_result,
        }

    def start(self) -> None:
        """Start the job runner thread."""
        if self._runner is None:
            self._runner = threading.Thread(
                target=self._run_forever, name="seig-job-runner", daemon=True
            )
            self._runner.start()

    def stop(self) -> None:
        """Let the runner finish the queued jobs, then stop it."""
        if self._runner is not None:
            self._queue.put(None)
            self._runner.join()
            self._runner = None

    def _run_forever(self) -> None:
        while True:
            job_id = self._queue.get()
            if job_id is None:
                break
            self._execute(job_id)

    def run_next_job(self) -> bool:
        """Run one queued job in the calling thread. Return False if the queue
        was empty. Only meaningful when the runner thread is not started.
        """
        try:
            job_id = self._queue.get_nowait()
        except queue.Empty:
            return False
        if job_id is not None:
            self._execute(job_id)
        return True

    def _execute(self, job_id: int) -> None:
        with self._lock:
            record = self._jobs[job_id]
            record.advance(JobState.RUNNING)
        _LOGGER.debug("job %s running", job_id)
        try:
            result = run_job(record.job, self.workers, self.block_rows)
            result.save(record.result_path)
        except Exception as error:  # pylint: disable=broad-except
            _LOGGER.error(
                _("job {job} failed").format(job=job_id), exc_info=error
            )
            with self._lock:
                record.error = str(error)
                record.advance(JobState.FAILED)
                self._finish(job_id)
            return
        with self._lock:
            record.advance(JobState.DONE)
            self._finish(job_id)
        _LOGGER.debug("job %s done", job_id)

    def _finish(self, job_id: int) -> None:
        self._finished[job_id] = None
        while len(self._finished) > self.keep_finished:
            self._forget(next(iter(self._finished)))

    def _forget(self, job_id: int) -> None:
        self._finished.pop(job_id, None)
        record = self._jobs.pop(job_id, None)
        if record is not None:
            record.result_path.unlink(missing_ok=True)
            _LOGGER.debug("job %s dropped", job_id)

    def matrix_path(self, matrix_id: int) -> Path:
        """Where matrix *matrix_id* is stored."""
        return self.matrix_dir / f"{matrix_id}.seig"

    def _matrix(self, matrix_id: int) -> EncryptedMatrix:
        matrix = self._matrices.get(matrix_id)
        if matrix is None:
            path = self.matrix_path(matrix_id)
            if not path.exists():
                raise _UnknownMatrix(
                    _("unknown matrix {matrix}").format(matrix=matrix_id)
                )
            matrix = EncryptedMatrix.open(path)
            self._matrices[matrix_id] = matrix
        return matrix

    def _job(self, payload: bytes) -> JobRecord:
        job_id = _read_u64(payload, 0)
        record = self._jobs.get(job_id)
        if record is None:
            raise _UnknownJob(_("unknown job {job}").format(job=job_id))
        return record

    def handle(self, frame: Frame) -> Frame:
        """Answer one request frame."""
        handler = self._handlers.get(frame.msg_type)
        if handler is None:
            return error_frame(
                ErrorCode.PROTOCOL,
                _("{kind} is not a request").format(kind=frame.msg_type.name),
            )
        try:
            return handler(frame.payload)
        except _UnknownMatrix as error:
            return error_frame(ErrorCode.UNKNOWN_MATRIX, str(error))
        except _UnknownJob as error:
            return error_frame(ErrorCode.UNKNOWN_JOB, str(error))
        except SeigException as error:
            _LOGGER.debug("request %s refused: %s", frame.msg_type.name, error)
            return error_frame(_error_code(error), str(error))
        except Exception as error:  # pylint: disable=broad-except
            _LOGGER.error(_("internal error"), exc_info=error)
            return error_frame(ErrorCode.INTERNAL, _("internal error"))

    def handle_bytes(self, data: bytes) -> bytes:
        """Like :meth:`handle`, on serialized frames."""
        try:
            frame = decode_frame(data)
        except ProtocolError as error:
            return error_frame(ErrorCode.PROTOCOL, str(error)).to_bytes()
        return self.handle(frame).to_bytes()

    def _put_matrix_meta(self, payload: bytes) -> Frame:
        matrix_id = _read_u64(payload, 0)
        header, size = MatrixHeader.from_bytes(payload[8:])
        if size != len(payload) - 8:
            raise FormatError(_("trailing bytes after the matrix header"))
        with self._lock:
            if (
                matrix_id in self._matrices
                or self.matrix_path(matrix_id).exists()
            ):
                raise ProtocolError(
                    _("matrix {matrix} already exists").format(
                        matrix=matrix_id
                    )
                )
            self._matrices[matrix_id] = EncryptedMatrix.create(
                self.matrix_path(matrix_id),
                header.public_key,
                header.n_rows,
                header.n_cols,
                header.params,
            )
        _LOGGER.debug(
            "matrix %s announced: %sx%s",
            matrix_id,
            header.n_rows,
            header.n_cols,
        )
        return Frame(MessageType.ACK, _u64(matrix_id))

    def _put_row(self, payload: bytes) -> Frame:
        matrix_id = _read_u64(payload, 0)
        row_index = _read_u64(payload, 8)
        count = _read_u64(payload, 16)
        with self._lock:
            matrix = self._matrix(matrix_id)
            if count != matrix.n_cols:
                raise WidthMismatchError(
                    _("row has {actual} elements, expected {expected}").format(
                        actual=count, expected=matrix.n_cols
                    )
                )
            matrix.append_row_bytes(row_index, payload[24:])
        return Frame(MessageType.ACK, _u64(row_index))

    def _submit_matvec(self, payload: bytes) -> Frame:
        matrix_id = _read_u64(payload, 0)
        count = _read_u64(payload, 8)
        with self._lock:
            matrix = self._matrix(matrix_id)
            if count != matrix.n_cols:
                raise WidthMismatchError(
                    _("vector has {actual} elements, expected {expected}").format(
                        actual=count, expected=matrix.n_cols
                    )
                )
            width = byte_length(matrix.header.q)
            body = payload[16:]
            if len(body) != count * width:
                raise WidthMismatchError(
                    _("vector payload has the wrong size")
                )
            missing = matrix.missing_rows()
            if missing:
                raise IntegrityError(
                    _("matrix {matrix} is missing rows {rows}").format(
                        matrix=matrix_id, rows=missing[:10]
                    ),
                    indices=missing,
                )
            exponents = tuple(
                int_from_bytes(body[start : start + width])
                for start in range(0, len(body), width)
            )
            if any(value >= matrix.header.q for value in exponents):
                raise DomainError(_("exponents must lie below q"))
            job_id = next(self._job_ids)
            record = JobRecord(
                job_id=job_id,
                job=MatVecJob(
                    matrix_path=matrix.path,
                    exponents=exponents,
                    num_reduces=self.num_reduces,
                    job_id=job_id,
                    strategy=self.strategy,
                    partitioner=self.partitioner,
                ),
                result_path=self.result_dir / f"{job_id}.sevr",
            )
            self._jobs[job_id] = record
        self._queue.put(job_id)
        _LOGGER.debug("job %s queued for matrix %s", job_id, matrix_id)
        return Frame(MessageType.ACK, _u64(job_id))

    def _job_status(self, payload: bytes) -> Frame:
        with self._lock:
            state = self._job(payload).state
        return Frame(MessageType.ACK, bytes([state]))

    def _fetch_result(self, payload: bytes) -> Frame:
        with self._lock:
            record = self._job(payload)
            if record.state == JobState.FAILED:
                self._forget(record.job_id)
                return error_frame(ErrorCode.JOB_FAILED, record.error)
            if record.state != JobState.DONE:
                return Frame(MessageType.NOT_READY, bytes([record.state]))
            data = record.result_path.read_bytes()
            self._forget(record.job_id)
        return Frame(MessageType.ACK, data)


class Transport:
    """Sends one request frame and returns the response frame."""

    def request(self, frame: Frame) -> Frame:
        """Round trip."""
        raise NotImplementedError

    def close(self) -> None:
        """Release resources."""


class LoopbackTransport(Transport):
    """In-process transport. Frames still go through their byte encoding, and
    every request is recorded in :attr:`sent` for audits.
    """

    def __init__(self, service: CloudService):
        self.service = service
        self.sent: List[bytes] = []

    def request(self, frame: Frame) -> Frame:
        data = frame.to_bytes()
        self.sent.append(data)
        return decode_frame(self.service.handle_bytes(data))


class SocketTransport(Transport):
    """Stream socket transport."""

    def __init__(self, host: str, port: int, timeout: Optional[float] = None):
        self._sock = socket.create_connection((host, port), timeout=timeout)

    def request(self, frame: Frame) -> Frame:
        self._sock.sendall(frame.to_bytes())
        response = read_frame(self._sock)
        if response is None:
            raise ProtocolError(_("service closed the connection"))
        return response

    def close(self) -> None:
        self._sock.close()


class ServiceClient:
    """Typed requests against a :class:`CloudService`."""

    def __init__(self, transport: Transport):
        self.transport = transport
        #: Number of SUBMIT_MATVEC requests sent through this client.
        self.matvec_calls = 0

    def _call(self, msg_type: MessageType, payload: bytes) -> Frame:
        response = self.transport.request(Frame(msg_type, payload))
        if response.msg_type == MessageType.ERROR:
            if len(response.payload) < 2:
                raise ProtocolError(_("malformed error frame"))
            (code,) = struct.unpack_from("!H", response.payload)
            message = response.payload[2:].decode("utf-8", errors="replace")
            if code == ErrorCode.JOB_FAILED:
                raise JobFailedError(message)
            raise ServiceError(message, code=code)
        return response

    def put_matrix_meta(self, matrix_id: int, header: MatrixHeader) -> None:
        """Announce a matrix."""
        self._call(
            MessageType.PUT_MATRIX_META, _u64(matrix_id) + header.to_bytes()
        )

    def put_row(
        self, matrix_id: int, row_index: int, row: bytes, count: int
    ) -> None:
        """Upload one serialized row of *count* ciphertexts."""
        self._call(
            MessageType.PUT_ROW,
            _u64(matrix_id) + _u64(row_index) + _u64(count) + row,
        )

    def submit_matvec(
        self, matrix_id: int, exponents: Sequence[int], q: int
    ) -> int:
        """Queue a product with *exponents*, residues modulo *q*. Return the
        job id.
        """
        width = byte_length(q)
        response = self._call(
            MessageType.SUBMIT_MATVEC,
            _u64(matrix_id)
            + _u64(len(exponents))
            + b"".join(int_to_bytes(value, width) for value in exponents),
        )
        self.matvec_calls += 1
        return _read_u64(response.payload, 0)

    def job_status(self, job_id: int) -> JobState:
        """Current state of a job."""
        response = self._call(MessageType.JOB_STATUS, _u64(job_id))
        if len(response.payload) != 1:
            raise ProtocolError(_("malformed status frame"))
        return JobState(response.payload[0])

    def fetch_result(self, job_id: int) -> bytes:
        """The ``.sevr`` bytes of a finished job.

        Raises:
            NotReadyError: the job has not finished yet.
            JobFailedError: the job failed.
        """
        response = self._call(MessageType.FETCH_RESULT, _u64(job_id))
        if response.msg_type == MessageType.NOT_READY:
            raise NotReadyError(
                _("job {job} is not done yet").format(job=job_id)
            )
        if response.msg_type != MessageType.ACK:
            raise ProtocolError(
                _("unexpected {kind} frame").format(
                    kind=response.msg_type.name
                )
            )
        return response.payload

    def wait_result(
        self,
        job_id: int,
        timeout: Optional[float] = None,
        interval: float = 0.01,
        on_idle: Optional[Callable[[], bool]] = None,
    ) -> bytes:
        """Poll until the result is available. *on_idle* is called between
        polls; an in-process deployment uses it to run queued jobs.
        """
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            try:
                return self.fetch_result(job_id)
            except NotReadyError:
                if deadline is not None and time.monotonic() > deadline:
                    raise
            if on_idle is None or not on_idle():
                time.sleep(interval)
            interval = min(interval * 2, 1.0)

    def close(self) -> None:
        """Close the transport."""
        self.transport.close()


class _FrameHandler(socketserver.BaseRequestHandler):
    """Answer frames on one connection, in order, until it closes."""

    server: "ServiceServer"

    def handle(self) -> None:
        while True:
            try:
                frame = read_frame(self.request)
            except ProtocolError as error:
                self.request.sendall(
                    error_frame(ErrorCode.PROTOCOL, str(error)).to_bytes()
                )
                return
            except OSError:
                return
            if frame is None:
                return
            self.request.sendall(self.server.service.handle(frame).to_bytes())


class ServiceServer(socketserver.ThreadingTCPServer):
    """Threaded TCP server around a :class:`CloudService`."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple, service: CloudService):
        super().__init__(address, _FrameHandler)
        self.service = service


def add_arguments(parser: ArgumentParser) -> None:
    """Add arguments to parser."""
    parser.add_argument(
        "--host", default="127.0.0.1", help=_("address to listen on")
    )
    parser.add_argument(
        "--port",
        type=int,
        default=DEFAULT_PORT,
        help=_("port to listen on (default: {port})").format(port=DEFAULT_PORT),
    )
    parser.add_argument(
        "--data-dir",
        metavar="PATH",
        help=_("where matrices and results are stored"),
    )
    parser.add_argument(
        "--workers", type=int, default=1, help=_("map worker processes")
    )
    parser.add_argument(
        "--num-reduces", type=int, default=1, help=_("number of reduces")
    )
    parser.add_argument(
        "--partitioner",
        choices=["floor", "modulo"],
        default="floor",
        help=_("how rows are assigned to reduces"),
    )
    parser.add_argument(
        "--strategy",
        choices=["builtin", "binary", "window"],
        default="window",
        help=_("modular exponentiation strategy"),
    )
    parser.add_argument(
        "--keep-finished",
        type=int,
        default=DEFAULT_KEEP_FINISHED,
        help=_("unfetched results to keep before the oldest are dropped"),
    )


def run(args: Namespace, out: IO[str] = sys.stdout) -> int:
    """Serve until interrupted."""
    service = CloudService(
        resolve_data_dir(args.data_dir),
        workers=args.workers,
        strategy=args.strategy,
        num_reduces=args.num_reduces,
        partitioner=args.partitioner,
        keep_finished=args.keep_finished,
    )
    service.start()
    with ServiceServer((args.host, args.port), service) as server:
        host, port = server.server_address[:2]
        out.write(
            _("serving {data_dir} on {host}:{port}").format(
                data_dir=service.data_dir, host=host, port=port
            )
            + "\n"
        )
        out.flush()
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
    service.stop()
    return 0
