"""Two-level additive Schwarz preconditioner for shifted residuals.

The preconditioner is the sum of a coarse spectral solve and independent
overlapping subdomain solves.  It consumes the residual of a Ritz pair in
dual form, rho = lambda * M u - K u, and returns a primal correction:

    t  =  P ( sum_{j > cut} (u_j' P' rho) / (mu_j - shift) u_j )
        + sum_l  E_l (K_l - shift M_l)^(-1) (rho restricted to subdomain l)

where (mu_j, u_j) is the full eigendecomposition of the coarse pencil, P is
coarse-to-fine interpolation, and K_l, M_l are principal submatrices on the
l-th subdomain.  Restricting the coarse sum to indices above ``cluster_cut``
deflates the targeted invariant subspace, which keeps the shifted coarse
operator positive there; applying it spectrally is exact even when the shift
collides with a deflated coarse eigenvalue.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fem, linalg
from .errors import InvalidArgumentError, ShiftOutOfRangeError
from .mesh import Decomposition, MeshHierarchy

__all__ = [
    "CoarsePiece",
    "LocalPiece",
    "SchwarzPreconditioner",
    "build_coarse_piece",
    "prepare",
    "apply",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CoarsePiece:
    """Coarse interpolation plus the full coarse eigendecomposition.

    ``values``/``vectors`` are the ascending eigenpairs of the coarse pencil,
    mass-orthonormal.  Indices 1..cluster_cut are deflated; the coarse solve
    acts only on the span of the remaining eigenvectors.
    """

    prolongation: sp.csr_matrix
    values: np.ndarray
    vectors: np.ndarray
    cluster_cut: int

    @property
    def dim(self) -> int:
        return len(self.values)

    @property
    def deflated_dim(self) -> int:
        """Dimension of the high-frequency coarse subspace the solve acts on."""
        return max(self.dim - self.cluster_cut, 0)


def build_coarse_piece(hier: MeshHierarchy, cluster_cut: int) -> CoarsePiece:
    """Assemble the coarse pencil of ``hier`` and eigendecompose it fully."""
    if cluster_cut < 0:
        raise InvalidArgumentError(f"cluster cut must be >= 0, got {cluster_cut}")
    pencil = fem.assemble(hier.coarse)
    eig = linalg.dense_generalized_eig(pencil.stiffness.toarray(), pencil.mass.toarray())
    return CoarsePiece(
        prolongation=hier.coarse_to_fine,
        values=eig.values,
        vectors=eig.vectors,
        cluster_cut=cluster_cut,
    )


@dataclass(eq=False)
class LocalPiece:
    """One subdomain's dof set and its factorization of K_l - shift * M_l."""

    dofs: np.ndarray
    factorization: linalg.Factorization
    shift: float


class _LocalBlocks:
    """Extracted subdomain submatrices, cached across preconditioner rebuilds."""

    def __init__(self, pencil, decomp: Decomposition):
        self.k_blocks = []
        self.m_blocks = []
        self.dof_sets = [np.asarray(d) for d in decomp.subdomains]
        K = pencil.stiffness.tocsr()
        M = pencil.mass.tocsr()
        for dofs in self.dof_sets:
            kb = K[dofs][:, dofs]
            mb = M[dofs][:, dofs]
            if len(dofs) <= linalg.DENSE_LIMIT:
                kb = kb.toarray()
                mb = mb.toarray()
            self.k_blocks.append(kb)
            self.m_blocks.append(mb)


class SchwarzPreconditioner:
    """Prepared two-level additive Schwarz operator for a list of shifts.

    Immutable after construction; ``apply`` may be called concurrently.
    """

    def __init__(self, coarse, shifts, local_pieces, blocks, n):
        self.coarse = coarse
        self.shifts = np.asarray(shifts, dtype=np.float64)
        self._local_pieces = local_pieces  # list per shift of LocalPiece lists
        self._blocks = blocks
        self.n = n

    @property
    def shift_count(self) -> int:
        return len(self.shifts)

    @property
    def n_local_factorizations(self) -> int:
        return sum(len(pieces) for pieces in self._local_pieces)

    def local_pieces(self, i: int) -> list:
        return self._local_pieces[i]

    def coarse_margin(self, i: int) -> float | None:
        """Smallest eigenvalue of the deflated shifted coarse operator.

        Equals the first retained coarse eigenvalue minus the shift; None when
        the deflation empties the coarse subspace entirely.
        """
        self._check_index(i)
        if self.coarse is None or self.coarse.deflated_dim == 0:
            return None
        return float(self.coarse.values[self.coarse.cluster_cut] - self.shifts[i])

    def _check_index(self, i: int) -> None:
        if not 0 <= i < len(self.shifts):
            raise InvalidArgumentError(
                f"shift index {i} outside the prepared range 0..{len(self.shifts) - 1}"
            )

    def apply_coarse(self, rho: np.ndarray, i: int) -> np.ndarray:
        """Coarse contribution: spectral solve on the deflated coarse subspace."""
        self._check_index(i)
        t = np.zeros(self.n)
        cp = self.coarse
        if cp is None or cp.deflated_dim == 0:
            return t
        cut = cp.cluster_cut
        c = cp.prolongation.T @ rho
        d = cp.vectors[:, cut:].T @ c
        d /= cp.values[cut:] - self.shifts[i]
        t += cp.prolongation @ (cp.vectors[:, cut:] @ d)
        return t

    def apply_local(self, rho: np.ndarray, i: int) -> np.ndarray:
        """Sum of the subdomain solves, ascending subdomain order."""
        self._check_index(i)
        t = np.zeros(self.n)
        for piece in self._local_pieces[i]:
            t[piece.dofs] += piece.factorization.solve(rho[piece.dofs])
        return t

    def apply(self, rho: np.ndarray, i: int) -> np.ndarray:
        """Apply the preconditioner for the i-th prepared shift to a dual vector."""
        rho = np.asarray(rho, dtype=np.float64)
        if rho.shape != (self.n,):
            raise InvalidArgumentError(f"dual vector of length {self.n} expected")
        return self.apply_coarse(rho, i) + self.apply_local(rho, i)


def prepare(
    pencil,
    decomp: Decomposition,
    coarse: CoarsePiece | None,
    shifts,
    *,
    reuse: SchwarzPreconditioner | None = None,
    refactor_tol: float = 0.0,
) -> SchwarzPreconditioner:
    """Build all local factorizations for ``shifts`` and share the coarse piece.

    Every shift must stay below the first retained coarse eigenvalue, else
    the deflated coarse operator would lose positivity (ShiftOutOfRangeError).
    Passing the previous preconditioner as ``reuse`` recycles the extracted
    subdomain blocks, and, with ``refactor_tol`` > 0, any factorization whose
    shift moved by at most that amount.
    """
    shifts = np.asarray(list(shifts), dtype=np.float64)
    if shifts.size == 0 or not np.all(np.isfinite(shifts)):
        raise InvalidArgumentError("a non-empty list of finite shifts is required")
    if coarse is not None and coarse.deflated_dim > 0:
        bound = float(coarse.values[coarse.cluster_cut])
        worst = float(np.max(shifts))
        if worst >= bound:
            raise ShiftOutOfRangeError(
                f"shift {worst:.9g} reaches the first retained coarse eigenvalue "
                f"{bound:.9g}; the deflated coarse operator would not stay positive"
            )

    blocks = None
    if reuse is not None and len(reuse._blocks.dof_sets) == len(decomp.subdomains):
        blocks = reuse._blocks
    if blocks is None:
        blocks = _LocalBlocks(pencil, decomp)
    reusable = (
        reuse is not None
        and refactor_tol > 0.0
        and blocks is reuse._blocks
        and reuse.shift_count == len(shifts)
    )

    local_pieces = []
    effective_shifts = []
    fallbacks = 0
    for i, shift in enumerate(shifts):
        if reusable and abs(shift - reuse.shifts[i]) <= refactor_tol:
            local_pieces.append(reuse._local_pieces[i])
            effective_shifts.append(reuse.shifts[i])
            continue
        pieces = []
        for dofs, kb, mb in zip(blocks.dof_sets, blocks.k_blocks, blocks.m_blocks):
            fact = linalg.factorize_shifted(kb, mb, shift)
            if fact.kind == "symmetric-indefinite":
                fallbacks += 1
            pieces.append(LocalPiece(dofs=dofs, factorization=fact, shift=float(shift)))
        local_pieces.append(pieces)
        effective_shifts.append(float(shift))

    if fallbacks:
        log.info(
            "%d of %d local factorizations were indefinite and used LDL^T",
            fallbacks,
            len(shifts) * len(blocks.dof_sets),
        )
    return SchwarzPreconditioner(
        coarse=coarse,
        shifts=effective_shifts,
        local_pieces=local_pieces,
        blocks=blocks,
        n=pencil.n,
    )


def apply(prec: SchwarzPreconditioner, rho: np.ndarray, i: int) -> np.ndarray:
    """Functional form of ``SchwarzPreconditioner.apply``."""
    return prec.apply(rho, i)
