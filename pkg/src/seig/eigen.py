# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Iterative eigensolvers that touch the matrix only through matrix-vector
products.

Two drivers are provided: plain power iteration for the dominant eigenpair,
and symmetric Lanczos for the top-k. Both run against a
:class:`MatVecBackend`, which is either a plaintext matrix or the secure
protocol. The small tridiagonal problem that Lanczos leaves behind is solved
with implicit QL iterations.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from gettext import gettext as _
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import BreakdownError, ConvergenceError, DomainError, ProtocolError
from .codec import decode, encode
from .roles import UserSession

_LOGGER = logging.getLogger(__name__)

#: Default convergence tolerance against a plaintext matrix.
PLAINTEXT_TOL = 1e-8
#: Default tolerance of the secure path, above the fixed-point noise floor.
SECURE_TOL = 1e-6

#: QL sweeps allowed per eigenvalue.
QL_MAX_SWEEPS = 50
#: Off-diagonal elements below this, relative to their neighbours, are zero.
QL_TOL = 1e-12


class MatVecBackend(ABC):
    """A linear operator ``x -> A x`` of dimension :attr:`dimension`."""

    def __init__(self) -> None:
        #: Number of products computed so far.
        self.calls = 0

    @property
    @abstractmethod
    def dimension(self) -> int:
        """Dimension n of the operator."""

    @abstractmethod
    def start(self) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """The unit start vector, and its image if it is known already."""

    @abstractmethod
    def _apply(self, vector: np.ndarray) -> np.ndarray:
        """Compute the product."""

    def matvec(self, vector: Sequence[float]) -> np.ndarray:
        """``A x``."""
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.dimension,):
            raise DomainError(
                _("vector has shape {shape}, expected ({n},)").format(
                    shape=vector.shape, n=self.dimension
                )
            )
        self.calls += 1
        return self._apply(vector)


class PlaintextBackend(MatVecBackend):
    """Products with a matrix in the clear. The start vector is *start*, or
    a random one drawn from *seed*.
    """

    def __init__(
        self,
        matrix: np.ndarray,
        start: Optional[Sequence[float]] = None,
        seed: Optional[int] = None,
    ):
        super().__init__()
        self.matrix = np.asarray(matrix, dtype=float)
        shape = self.matrix.shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise DomainError(_("the matrix must be square"))
        if start is None:
            start = np.random.default_rng(seed).standard_normal(
                self.dimension
            )
        start = np.asarray(start, dtype=float)
        norm = np.linalg.norm(start)
        if norm == 0.0:
            raise BreakdownError(_("the start vector is zero"))
        self._start = start / norm

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def start(self) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        return self._start.copy(), None

    def _apply(self, vector: np.ndarray) -> np.ndarray:
        return self.matrix @ vector


class SecureBackend(MatVecBackend):
    """Products through the blinded cloud protocol of a :class:`UserSession`.

    The start vector is ``b0`` from the owner; its image is already known, so
    starting costs no round trip.
    """

    def __init__(self, session: UserSession):
        super().__init__()
        self.session = session

    @property
    def dimension(self) -> int:
        return self.session.n

    def start(self) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        b0 = np.array([float(value) for value in self.session.b0])
        norm = np.linalg.norm(b0)
        if norm == 0.0:
            raise BreakdownError(_("b0 is the zero vector"))
        d = self.session.params.d
        image = np.array([decode(value, d) for value in self.session.ab0])
        return b0 / norm, image / norm

    def _apply(self, vector: np.ndarray) -> np.ndarray:
        d = self.session.params.d
        encoded = [encode(x, d) for x in vector]
        try:
            product = self.session.secure_matvec(encoded)
        except ProtocolError as error:
            error.iteration = self.calls
            _LOGGER.error(
                _("secure product failed in iteration {iteration}").format(
                    iteration=self.calls
                )
            )
            raise
        return np.array([decode(value, 2 * d) for value in product])


@dataclass
class LanczosState:
    """Krylov basis and tridiagonal coefficients after :func:`lanczos_run`.

    *beta_last* couples the last basis vector to the rest of the space; it is
    zero, or nearly so, after a breakdown.
    """

    basis: np.ndarray
    alphas: List[float]
    betas: List[float]
    beta_last: float = 0.0
    breakdown: bool = False

    @property
    def size(self) -> int:
        """Dimension j of the Krylov space."""
        return len(self.alphas)

    def tridiagonal(self) -> np.ndarray:
        """T as a dense matrix."""
        return (
            np.diag(self.alphas)
            + np.diag(self.betas, 1)
            + np.diag(self.betas, -1)
        )


@dataclass
class EigenResult:
    """Eigenvalue estimates ordered by descending magnitude, their unit
    vectors as columns, and ``||A v - lambda v||`` for each.

    *residuals_verified* tells whether the residuals were measured with an
    extra product, or estimated from the Lanczos recurrence.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    iterations: int
    matvec_calls: int
    method: str
    breakdown: bool = False
    residuals_verified: bool = False
    history: List[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        """Number of eigenpairs."""
        return len(self.eigenvalues)


def _orthogonalize(vector: np.ndarray, basis: np.ndarray) -> np.ndarray:
    # Classical Gram-Schmidt, twice, is enough for working precision.
    for _pass in range(2):
        vector = vector - basis @ (basis.T @ vector)
    return vector


def lanczos_run(
    backend: MatVecBackend,
    max_iters: int,
    reorthogonalize: bool = True,
    breakdown_tol: float = PLAINTEXT_TOL,
) -> LanczosState:
    """Run the symmetric Lanczos recurrence for *max_iters* products.

    The Krylov space grows to ``min(max_iters + 1, n)`` vectors, the first
    product being the start vector's image. The run stops early when the
    next off-diagonal element drops below *breakdown_tol* relative to the
    norm of the product; the space is then invariant.

    The matrix is assumed symmetric; nothing checks it.
    """
    if max_iters < 1:
        raise DomainError(_("at least one iteration is needed"))
    n = backend.dimension
    steps = min(max_iters + 1, n)

    vector, image = backend.start()
    if image is None:
        image = backend.matvec(vector)
    basis = [vector]
    alphas: List[float] = []
    betas: List[float] = []
    previous = np.zeros(n)
    beta = 0.0
    beta_last = 0.0
    breakdown = False

    for j in range(steps):
        alpha = float(vector @ image)
        alphas.append(alpha)
        residual = image - alpha * vector - beta * previous
        if reorthogonalize:
            residual = _orthogonalize(residual, np.array(basis).T)
        beta_next = float(np.linalg.norm(residual))
        if beta_next <= breakdown_tol * max(np.linalg.norm(image), 1.0):
            beta_last = beta_next
            breakdown = j + 1 < n
            if breakdown:
                _LOGGER.info(
                    "Lanczos breakdown, invariant subspace of dimension %s",
                    j + 1,
                )
            break
        if j == steps - 1:
            beta_last = beta_next
            break
        betas.append(beta_next)
        previous, vector, beta = vector, residual / beta_next, beta_next
        basis.append(vector)
        image = backend.matvec(vector)

    return LanczosState(
        basis=np.array(basis).T,
        alphas=alphas,
        betas=betas,
        beta_last=beta_last,
        breakdown=breakdown,
    )


def tridiag_eigen(
    alphas: Sequence[float], betas: Sequence[float]
) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of the symmetric tridiagonal matrix with diagonal *alphas*
    and off-diagonal *betas*, by QL iterations with implicit Wilkinson
    shifts. Eigenvalues are sorted descending; eigenvectors are the
    matching columns.

    >>> values, vectors = tridiag_eigen([2.0, 2.0], [1.0])
    >>> [round(float(x), 12) for x in values]
    [3.0, 1.0]

    Raises:
        ConvergenceError: an eigenvalue needs more than 50 sweeps.
    """
    size = len(alphas)
    if size == 0:
        raise DomainError(_("the tridiagonal matrix is empty"))
    if len(betas) != size - 1:
        raise DomainError(
            _("expected {expected} off-diagonal elements, got {actual}").format(
                expected=size - 1, actual=len(betas)
            )
        )
    diag = np.array(alphas, dtype=float)
    off = np.zeros(size)
    off[: size - 1] = betas
    vectors = np.eye(size)

    for low in range(size):
        sweeps = 0
        while True:
            high = low
            while high < size - 1:
                scale = abs(diag[high]) + abs(diag[high + 1])
                if abs(off[high]) <= QL_TOL * scale or (
                    abs(off[high]) + scale == scale
                ):
                    break
                high += 1
            if high == low:
                break
            sweeps += 1
            if sweeps > QL_MAX_SWEEPS:
                raise ConvergenceError(
                    _("eigenvalue {index} did not converge").format(index=low)
                )
            shift = (diag[low + 1] - diag[low]) / (2.0 * off[low])
            radius = math.hypot(shift, 1.0)
            shift = diag[high] - diag[low] + off[low] / (
                shift + math.copysign(radius, shift)
            )
            sine = cosine = 1.0
            delta = 0.0
            underflow = False
            for i in range(high - 1, low - 1, -1):
                f = sine * off[i]
                b = cosine * off[i]
                radius = math.hypot(f, shift)
                off[i + 1] = radius
                if radius == 0.0:
                    diag[i + 1] -= delta
                    off[high] = 0.0
                    underflow = True
                    break
                sine = f / radius
                cosine = shift / radius
                shift = diag[i + 1] - delta
                radius = (diag[i] - shift) * sine + 2.0 * cosine * b
                delta = sine * radius
                diag[i + 1] = shift + delta
                shift = cosine * radius - b
                column = vectors[:, i + 1].copy()
                vectors[:, i + 1] = sine * vectors[:, i] + cosine * column
                vectors[:, i] = cosine * vectors[:, i] - sine * column
            if underflow:
                continue
            diag[low] -= delta
            off[low] = shift
            off[high] = 0.0

    order = np.argsort(-diag, kind="stable")
    return diag[order], vectors[:, order]


def ritz_vectors(
    state: LanczosState,
    eigenvalues: np.ndarray,
    eigenvectors: np.ndarray,
    backend: Optional[MatVecBackend] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Ritz vectors ``V y`` for the columns *y* of *eigenvectors*, and their
    residual norms.

    Without a *backend* the residual of a pair is ``|beta_last * y[-1]|``,
    which is exact in exact arithmetic. With one, it is measured with one
    product per vector.
    """
    if eigenvectors.shape[0] != state.size:
        raise DomainError(_("eigenvectors do not match the Krylov space"))
    vectors = state.basis @ eigenvectors
    vectors = vectors / np.linalg.norm(vectors, axis=0)
    if backend is None:
        residuals = np.abs(state.beta_last * eigenvectors[-1, :])
    else:
        residuals = np.array(
            [
                np.linalg.norm(
                    backend.matvec(vectors[:, i]) - value * vectors[:, i]
                )
                for i, value in enumerate(eigenvalues)
            ]
        )
    return vectors, residuals


def lanczos_topk(
    backend: MatVecBackend,
    k: int,
    max_iters: int,
    reorthogonalize: bool = True,
    breakdown_tol: float = PLAINTEXT_TOL,
    verify_residuals: bool = False,
) -> EigenResult:
    """The *k* eigenpairs of largest magnitude by Lanczos. After a breakdown
    fewer than *k* pairs may exist; all of them are returned.
    """
    if not 1 <= k <= backend.dimension:
        raise DomainError(
            _("k must lie in [1, {n}]").format(n=backend.dimension)
        )
    state = lanczos_run(backend, max_iters, reorthogonalize, breakdown_tol)
    values, vectors = tridiag_eigen(state.alphas, state.betas)
    order = np.argsort(-np.abs(values), kind="stable")[:k]
    if len(order) < k:
        _LOGGER.warning(
            _("only {found} of {k} eigenpairs exist in the Krylov space").format(
                found=len(order), k=k
            )
        )
    values = values[order]
    ritz, residuals = ritz_vectors(
        state,
        values,
        vectors[:, order],
        backend if verify_residuals else None,
    )
    return EigenResult(
        eigenvalues=values,
        vectors=ritz,
        residuals=residuals,
        iterations=state.size - 1,
        matvec_calls=backend.calls,
        method="lanczos",
        breakdown=state.breakdown,
        residuals_verified=verify_residuals,
    )


def power_iteration(
    backend: MatVecBackend,
    max_iters: int,
    tol: float = PLAINTEXT_TOL,
) -> EigenResult:
    """Dominant eigenpair by ``b <- A b / ||A b||``.

    The iteration stops when the step, or the step up to sign, is shorter
    than *tol*, or after *max_iters* products. The eigenvalue is the Rayleigh
    quotient of the last iterate.

    Raises:
        BreakdownError: a product is the zero vector.
    """
    if max_iters < 1:
        raise DomainError(_("at least one iteration is needed"))
    vector, image = backend.start()
    if image is None:
        image = backend.matvec(vector)
    history: List[float] = []
    iterations = 0
    for iterations in range(1, max_iters + 1):
        norm = np.linalg.norm(image)
        if norm == 0.0:
            raise BreakdownError(
                _("A b is zero in iteration {iteration}").format(
                    iteration=iterations
                )
            )
        following = image / norm
        step = min(
            np.linalg.norm(following - vector),
            np.linalg.norm(following + vector),
        )
        history.append(float(step))
        vector = following
        image = backend.matvec(vector)
        if step < tol:
            break
    value = float(vector @ image)
    residual = float(np.linalg.norm(image - value * vector))
    _LOGGER.debug("power iteration stopped after %s steps", iterations)
    return EigenResult(
        eigenvalues=np.array([value]),
        vectors=vector.reshape(-1, 1),
        residuals=np.array([residual]),
        iterations=iterations,
        matvec_calls=backend.calls,
        method="power",
        residuals_verified=True,
        history=history,
    )


def topk(
    backend: MatVecBackend,
    k: int,
    iters: int,
    tol: float = PLAINTEXT_TOL,
    reorthogonalize: bool = True,
    verify_residuals: bool = False,
) -> EigenResult:
    """Power iteration for k = 1, Lanczos otherwise."""
    if k == 1:
        return power_iteration(backend, iters, tol)
    return lanczos_topk(
        backend,
        k,
        iters,
        reorthogonalize=reorthogonalize,
        breakdown_tol=tol,
        verify_residuals=verify_residuals,
    )


def secure_topk(
    session: UserSession,
    k: int,
    iters: int,
    tol: float = SECURE_TOL,
    verify_residuals: bool = False,
) -> EigenResult:
    """:func:`topk` over the secure protocol. The session must have its pool
    prepared. Every product is a blinded cloud round trip and is recorded in
    ``session.transcript``.

    Raises:
        ProtocolError: a round trip failed; *iteration* is set.
    """
    if session.pool.m == 0:
        raise ProtocolError(_("prepare the perturbation pool first"))
    return topk(
        SecureBackend(session),
        k,
        iters,
        tol=tol,
        verify_residuals=verify_residuals,
    )
