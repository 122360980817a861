"""Repair of almost-commuting projective measurements.

Two PVMs (p_i) and (q_j) with small commutation defect
eps_c = sum_ij ||p_i q_j - q_j p_i||_phi^2 admit a repaired PVM (p'_i) that
commutes with every q_j exactly and stays within 10 * eps_c of p in squared
phi-norm.  The route: pinch p through q to get the POVM a_i = sum_j q_j p_i q_j,
which lives in the block-diagonal commutant of (q_j); the exact identity

    eps_c = sum_i ||p_i - a_i||_phi^2 + (1 - phi(sum_i a_i^2))

splits the defect into the pinching cost and the orthogonality defect of a,
and rounding a inside the commutant spends at most 9x the second piece.

The Fourier correspondence between PVMs with n outputs and unitaries of
order n transfers the statement to pairs of finite-order unitaries.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from .algebra import (
    AlgebraElement,
    BlockAlgebra,
    Povm,
    PreconditionError,
    Pvm,
    State,
    Tolerances,
    DEFAULT_TOL,
    ValidationError,
    commutator_phi_norm_sq,
    phi_norm_sq,
    validate_pvm,
)
from .orthogonalize import OrthReport, orthogonalize


@dataclass
class CommutantAlgebra:
    """The commutant of a reference PVM, as a block algebra with bases.

    Per ambient block, the ranges of the q_j are extracted as orthonormal
    column bases; each nonzero range becomes one central block of the
    commutant algebra.  ``to_blocks``/``from_blocks`` move elements between
    ambient and commutant coordinates.
    """

    ambient: BlockAlgebra
    algebra: BlockAlgebra
    ambient_block: tuple[int, ...]   # ambient block index of each commutant block
    output_index: tuple[int, ...]    # which q_j the block came from
    bases: list[np.ndarray]          # (d_ambient, rank) orthonormal columns

    def to_blocks(self, x: AlgebraElement) -> AlgebraElement:
        mats = [
            b.conj().T @ x.blocks[k] @ b
            for k, b in zip(self.ambient_block, self.bases)
        ]
        return AlgebraElement(self.algebra, mats)

    def from_blocks(self, y: AlgebraElement) -> AlgebraElement:
        mats = [np.zeros((d, d), dtype=complex) for d in self.ambient.dims]
        for k, b, block in zip(self.ambient_block, self.bases, y.blocks):
            mats[k] += b @ block @ b.conj().T
        return AlgebraElement(self.ambient, mats)

    def restrict_state(self, phi: State) -> State:
        return State(
            self.algebra,
            [
                b.conj().T @ phi.densities[k] @ b
                for k, b in zip(self.ambient_block, self.bases)
            ],
        )


def commutant_of_pvm(q: Pvm, tol: Tolerances = DEFAULT_TOL) -> CommutantAlgebra:
    """Block algebra of all elements commuting with every q_j."""
    alg = q.algebra
    diag = validate_pvm(alg, q, tol)
    if diag.idempotency_residual > max(tol.psd_tol, tol.cert_tol):
        raise PreconditionError(
            f"reference measurement is not projective (residual {diag.idempotency_residual:.3e})"
        )
    if not diag.is_valid:
        raise PreconditionError(f"reference measurement fails POVM validation: {diag}")
    dims = []
    ambient_block = []
    output_index = []
    bases = []
    for k, d in enumerate(alg.dims):
        total_rank = 0
        for j, e in enumerate(q.elements):
            w, v = np.linalg.eigh(e.blocks[k])
            keep = w > 0.5
            r = int(keep.sum())
            if r == 0:
                continue
            total_rank += r
            dims.append(r)
            ambient_block.append(k)
            output_index.append(j)
            bases.append(v[:, keep].copy())
        if total_rank != d:
            raise PreconditionError(
                f"ranks of the reference projections sum to {total_rank} in block {k}, expected {d}"
            )
    return CommutantAlgebra(alg, BlockAlgebra(tuple(dims)), tuple(ambient_block), tuple(output_index), bases)


def commutation_defect(phi: State, p: Pvm, q: Pvm) -> float:
    """sum_ij ||p_i q_j - q_j p_i||_phi^2."""
    if p.algebra.dims != q.algebra.dims:
        raise PreconditionError("measurements belong to different algebras")
    return sum(
        commutator_phi_norm_sq(phi, pi, qj) for pi in p.elements for qj in q.elements
    )


@dataclass
class CompressedPovm:
    commutant: CommutantAlgebra
    povm: Povm                 # a_i = sum_j q_j p_i q_j in commutant coordinates
    phi_restricted: State
    epsilon_c: float
    pinch_cost: float          # sum_i ||p_i - a_i||_phi^2 in the ambient algebra
    compressed_defect: float   # 1 - phi(sum_i a_i^2)
    identity_residual: float   # |eps_c - pinch_cost - compressed_defect|
    imag_residual: float       # |Im sum_i phi(a_i p_i)|


def compress_povm(p: Pvm, q: Pvm, phi: State, tol: Tolerances = DEFAULT_TOL) -> CompressedPovm:
    """Pinch p through q and certify the exact commutation-defect identity."""
    comm = commutant_of_pvm(q, tol)
    alg = p.algebra
    eps_c = commutation_defect(phi, p, q)

    ambient_a = []
    for pi in p.elements:
        acc = alg.zero()
        for qj in q.elements:
            acc = acc + (qj @ pi @ qj)
        ambient_a.append(acc)

    pinch_cost = sum(
        phi_norm_sq(phi, pi - ai) for pi, ai in zip(p.elements, ambient_a)
    )
    compressed_defect = 1.0 - sum(phi.expect(ai @ ai).real for ai in ambient_a)
    identity_residual = abs(eps_c - pinch_cost - compressed_defect)
    imag_residual = abs(
        sum(phi.expect(ai @ pi) for ai, pi in zip(ambient_a, p.elements)).imag
    )

    compressed = Povm(comm.algebra, [comm.to_blocks(ai) for ai in ambient_a])
    return CompressedPovm(
        comm,
        compressed,
        comm.restrict_state(phi),
        eps_c,
        pinch_cost,
        compressed_defect,
        identity_residual,
        imag_residual,
    )


@dataclass
class RepairReport:
    epsilon_c: float
    inner: OrthReport            # rounding of the pinched POVM in the commutant
    pvm_repaired: Pvm
    error: float                 # sum_i ||p_i - p'_i||_phi^2
    identity_residual: float
    max_commutator: float        # max_ij ||[p'_i, q_j]||_F


def repair(phi: State, p: Pvm, q: Pvm, tol: Tolerances = DEFAULT_TOL) -> RepairReport:
    """Produce a PVM commuting with q within 10 * eps_c of p."""
    compressed = compress_povm(p, q, phi, tol)
    inner = orthogonalize(
        compressed.commutant.algebra, compressed.phi_restricted, compressed.povm, tol
    )
    repaired = Pvm(
        p.algebra,
        [compressed.commutant.from_blocks(e) for e in inner.pvm.elements],
    )
    error = sum(
        phi_norm_sq(phi, pi - ri) for pi, ri in zip(p.elements, repaired.elements)
    )
    max_comm = max(
        ri.commutator(qj).norm_fro() for ri in repaired.elements for qj in q.elements
    )
    return RepairReport(
        compressed.epsilon_c, inner, repaired, error, compressed.identity_residual, max_comm
    )


def pvm_to_unitary(p: Pvm, tol: Tolerances = DEFAULT_TOL) -> AlgebraElement:
    """Unitary of order n attached to an n-output PVM: u = sum_k w^k p_k
    with w the primitive n-th root of unity."""
    diag = validate_pvm(p.algebra, p, tol)
    if not diag.is_valid:
        raise ValidationError(f"input is not a valid PVM: {diag}")
    n = p.n
    u = p.algebra.zero()
    for k, e in enumerate(p.elements, start=1):
        u = u + cmath.exp(2j * cmath.pi * k / n) * e
    return u


def unitary_to_pvm(u: AlgebraElement, n: int, tol: Tolerances = DEFAULT_TOL) -> Pvm:
    """Spectral PVM of a unitary of order n: p_j = (1/n) sum_k w^{-jk} u^k."""
    if n < 1:
        raise PreconditionError("order must be a positive integer")
    alg = u.algebra
    unitary_residual = (u.H @ u - alg.identity()).norm_fro()
    if unitary_residual > max(tol.cert_tol, 1e-12 * alg.total_dim):
        raise PreconditionError(f"input is not unitary (residual {unitary_residual:.3e})")
    powers = [alg.identity()]
    for _ in range(n):
        powers.append(powers[-1] @ u)
    order_residual = (powers[n] - alg.identity()).norm_fro()
    if order_residual > max(tol.cert_tol, 1e-12 * n * alg.total_dim):
        raise PreconditionError(
            f"unitary does not have order {n} (residual {order_residual:.3e})"
        )
    elements = []
    for j in range(1, n + 1):
        acc = alg.zero()
        for k in range(1, n + 1):
            acc = acc + cmath.exp(-2j * cmath.pi * j * k / n) * powers[k]
        elements.append((1.0 / n) * acc)
    return Pvm(alg, elements)


@dataclass
class UnitaryRepairReport:
    v_repaired: AlgebraElement
    lhs: float                   # (1/nm) sum_ij ||u^i v^j - v^j u^i||_phi^2
    rhs_error: float             # (1/m) sum_j ||v^j - v'^j||_phi^2
    commutator_norm: float       # ||[v', u]||_F
    pvm_report: RepairReport


def repair_unitary_pair(
    phi: State,
    u: AlgebraElement,
    n: int,
    v: AlgebraElement,
    m: int,
    tol: Tolerances = DEFAULT_TOL,
) -> UnitaryRepairReport:
    """Given unitaries u^n = 1 and v^m = 1, produce v' commuting with u with
    (1/m) sum_j ||v^j - v'^j||_phi^2 <= 10 * (1/nm) sum_ij ||[u^i, v^j]||_phi^2."""
    q = unitary_to_pvm(u, n, tol)
    p = unitary_to_pvm(v, m, tol)
    report = repair(phi, p, q, tol)
    v_repaired = pvm_to_unitary(report.pvm_repaired, tol)

    u_powers = [u.algebra.identity()]
    for _ in range(n):
        u_powers.append(u_powers[-1] @ u)
    v_powers = [v.algebra.identity()]
    vr_powers = [v.algebra.identity()]
    for _ in range(m):
        v_powers.append(v_powers[-1] @ v)
        vr_powers.append(vr_powers[-1] @ v_repaired)

    lhs = sum(
        phi_norm_sq(phi, u_powers[i].commutator(v_powers[j]))
        for i in range(1, n + 1)
        for j in range(1, m + 1)
    ) / (n * m)
    rhs_error = sum(
        phi_norm_sq(phi, v_powers[j] - vr_powers[j]) for j in range(1, m + 1)
    ) / m
    comm_norm = v_repaired.commutator(u).norm_fro()
    return UnitaryRepairReport(v_repaired, lhs, rhs_error, comm_norm, report)
