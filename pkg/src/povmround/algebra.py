"""Block matrix algebras, states, POVMs, and the numerical primitives on them.

The ambient object everywhere in this package is a finite direct sum of full
complex matrix algebras M_{d_1} + ... + M_{d_K}.  Elements are tuples of
square complex blocks, states are tuples of PSD density blocks with unit
total trace, and a POVM is a tuple of positive elements summing to the
identity.  This module holds the data model plus the small set of numerical
primitives the rounding/repair/majorant solvers are built from: validation,
the state seminorm, the orthogonality defect, the block-normalized
center-valued trace, and eigenvalue clustering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class PovmRoundError(Exception):
    """Base class for errors raised by this package."""


class ShapeMismatchError(PovmRoundError):
    """Structural mismatch between an element and its owning algebra."""


class ValidationError(PovmRoundError):
    """Input violates a mathematical invariant beyond tolerance."""


class PreconditionError(PovmRoundError):
    """An operation's precondition does not hold."""


class SolverError(PovmRoundError):
    """An iterative solver failed to converge."""


@dataclass(frozen=True)
class BarrierConfig:
    """Interior-point parameters for the minimal-majorant solver."""

    mu0_scale: float = 1.0
    mu_shrink: float = 0.25
    newton_tol: float = 1e-7
    gap_tol: float = 1e-6
    max_iters: int = 200

    def __post_init__(self):
        if not (0.0 < self.mu_shrink < 1.0):
            raise ValidationError("mu_shrink must lie in (0, 1)")
        for name in ("mu0_scale", "newton_tol", "gap_tol"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be positive")


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances used across the package.

    cluster_tol groups nearby eigenvalues (scaled by the spectral radius at
    the point of use), rank_tol is a relative singular-value cutoff, psd_tol
    is the allowed negativity slack for positivity checks, and cert_tol is
    the residual allowed in exact-identity certificates.
    """

    cluster_tol: float = 1e-8
    rank_tol: float = 1e-10
    psd_tol: float = 1e-9
    cert_tol: float = 1e-9
    barrier: BarrierConfig = field(default_factory=BarrierConfig)

    def __post_init__(self):
        for name in ("cluster_tol", "rank_tol", "psd_tol", "cert_tol"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")

    _OWN_KEYS = ("cluster_tol", "rank_tol", "psd_tol", "cert_tol")
    _BARRIER_KEYS = ("mu0_scale", "mu_shrink", "newton_tol", "gap_tol", "max_iters")

    def replace(self, **kwargs) -> "Tolerances":
        unknown = set(kwargs) - set(self._OWN_KEYS) - set(self._BARRIER_KEYS)
        if unknown:
            raise ValidationError(f"unknown tolerance keys: {sorted(unknown)}")
        barrier_keys = {k: v for k, v in kwargs.items() if k in self._BARRIER_KEYS}
        own_keys = {k: v for k, v in kwargs.items() if k in self._OWN_KEYS}
        barrier = self.barrier
        if barrier_keys:
            merged = {**barrier.__dict__, **barrier_keys}
            barrier = BarrierConfig(**merged)
        return Tolerances(
            cluster_tol=own_keys.get("cluster_tol", self.cluster_tol),
            rank_tol=own_keys.get("rank_tol", self.rank_tol),
            psd_tol=own_keys.get("psd_tol", self.psd_tol),
            cert_tol=own_keys.get("cert_tol", self.cert_tol),
            barrier=barrier,
        )

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self._OWN_KEYS}
        d.update({k: getattr(self.barrier, k) for k in self._BARRIER_KEYS})
        return d


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class BlockAlgebra:
    """A direct sum of full matrix algebras, given by its block dimensions."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 1 or any(d < 1 for d in dims):
            raise ValidationError("block dimensions must be a nonempty list of positive integers")
        object.__setattr__(self, "dims", dims)

    @property
    def num_blocks(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return sum(self.dims)

    def element(self, blocks) -> "AlgebraElement":
        return AlgebraElement(self, blocks)

    def identity(self) -> "AlgebraElement":
        return AlgebraElement(self, [np.eye(d, dtype=complex) for d in self.dims])

    def zero(self) -> "AlgebraElement":
        return AlgebraElement(self, [np.zeros((d, d), dtype=complex) for d in self.dims])

    def diagonal(self, entries: Sequence[Sequence[float]]) -> "AlgebraElement":
        """Element with the given per-block diagonal entries."""
        return AlgebraElement(self, [np.diag(np.asarray(e, dtype=complex)) for e in entries])


def _as_block(mat, dim: int) -> np.ndarray:
    b = np.asarray(mat, dtype=complex)
    if b.shape != (dim, dim):
        raise ShapeMismatchError(f"block has shape {b.shape}, expected ({dim}, {dim})")
    return np.ascontiguousarray(b)


class AlgebraElement:
    """An element of a block algebra: one complex square matrix per block."""

    __slots__ = ("algebra", "blocks")

    def __init__(self, algebra: BlockAlgebra, blocks):
        blocks = list(blocks)
        if len(blocks) != algebra.num_blocks:
            raise ShapeMismatchError(
                f"element has {len(blocks)} blocks, algebra has {algebra.num_blocks}"
            )
        self.algebra = algebra
        self.blocks = tuple(_as_block(b, d) for b, d in zip(blocks, algebra.dims))

    def _check_same(self, other: "AlgebraElement"):
        if self.algebra.dims != other.algebra.dims:
            raise ShapeMismatchError("elements belong to different algebras")

    def __add__(self, other):
        self._check_same(other)
        return AlgebraElement(self.algebra, [a + b for a, b in zip(self.blocks, other.blocks)])

    def __sub__(self, other):
        self._check_same(other)
        return AlgebraElement(self.algebra, [a - b for a, b in zip(self.blocks, other.blocks)])

    def __neg__(self):
        return AlgebraElement(self.algebra, [-a for a in self.blocks])

    def __mul__(self, scalar):
        return AlgebraElement(self.algebra, [scalar * a for a in self.blocks])

    __rmul__ = __mul__

    def __matmul__(self, other):
        self._check_same(other)
        return AlgebraElement(self.algebra, [a @ b for a, b in zip(self.blocks, other.blocks)])

    @property
    def H(self) -> "AlgebraElement":
        return AlgebraElement(self.algebra, [a.conj().T for a in self.blocks])

    def commutator(self, other: "AlgebraElement") -> "AlgebraElement":
        return self @ other - other @ self

    def trace(self) -> complex:
        return complex(sum(np.trace(a) for a in self.blocks))

    def norm_fro(self) -> float:
        return float(np.sqrt(sum(np.linalg.norm(a) ** 2 for a in self.blocks)))

    def skew_norm(self) -> float:
        """Frobenius norm of the anti-Hermitian part."""
        return float(
            np.sqrt(sum(np.linalg.norm((a - a.conj().T) / 2) ** 2 for a in self.blocks))
        )

    def hermitized(self) -> tuple["AlgebraElement", float]:
        """Symmetrized copy together with the removed residual, never silent."""
        residual = self.skew_norm()
        h = AlgebraElement(self.algebra, [(a + a.conj().T) / 2 for a in self.blocks])
        return h, residual

    def eigvals(self) -> list[np.ndarray]:
        """Per-block eigenvalues of the Hermitian part, ascending."""
        return [np.linalg.eigvalsh((a + a.conj().T) / 2) for a in self.blocks]

    def spectral_radius(self) -> float:
        return max(float(np.abs(w).max()) if w.size else 0.0 for w in self.eigvals())

    def __repr__(self):
        return f"AlgebraElement(dims={self.algebra.dims})"


def hermitian_sqrt(x: AlgebraElement, lo: float = 0.0, hi: float = np.inf) -> tuple[AlgebraElement, float]:
    """PSD square root with eigenvalues clipped to [lo, hi].

    Returns the root and the largest clip applied to any eigenvalue.
    """
    roots = []
    clip = 0.0
    for a in x.blocks:
        w, v = np.linalg.eigh((a + a.conj().T) / 2)
        wc = np.clip(w, lo, hi)
        if w.size:
            clip = max(clip, float(np.abs(w - wc).max()))
        roots.append((v * np.sqrt(wc)) @ v.conj().T)
    return AlgebraElement(x.algebra, roots), clip


class State:
    """Normal state phi(x) = sum_k Tr(rho_k x_k) given by density blocks.

    Densities are symmetrized on construction; the removed anti-Hermitian
    residual is kept in ``hermitization_residual``.
    """

    __slots__ = ("algebra", "densities", "hermitization_residual")

    def __init__(self, algebra: BlockAlgebra, densities):
        densities = list(densities)
        if len(densities) != algebra.num_blocks:
            raise ShapeMismatchError(
                f"state has {len(densities)} density blocks, algebra has {algebra.num_blocks}"
            )
        blocks = [_as_block(r, d) for r, d in zip(densities, algebra.dims)]
        residual = float(
            np.sqrt(sum(np.linalg.norm((r - r.conj().T) / 2) ** 2 for r in blocks))
        )
        self.algebra = algebra
        self.densities = tuple((r + r.conj().T) / 2 for r in blocks)
        self.hermitization_residual = residual

    @classmethod
    def normalized_trace(cls, algebra: BlockAlgebra) -> "State":
        n = algebra.total_dim
        return cls(algebra, [np.eye(d, dtype=complex) / n for d in algebra.dims])

    def expect(self, x: AlgebraElement) -> complex:
        if x.algebra.dims != self.algebra.dims:
            raise ShapeMismatchError("element and state belong to different algebras")
        return complex(sum(np.trace(r @ a) for r, a in zip(self.densities, x.blocks)))

    def total_trace(self) -> float:
        return float(sum(np.trace(r).real for r in self.densities))

    def min_eigenvalue(self) -> float:
        return min(float(np.linalg.eigvalsh(r).min()) for r in self.densities)

    def __repr__(self):
        return f"State(dims={self.algebra.dims}, trace={self.total_trace():.6f})"


@dataclass
class StateDiagnostics:
    is_valid: bool
    min_eigenvalue: float
    trace_residual: float
    hermiticity_residual: float


def validate_state(alg: BlockAlgebra, phi: State, tol: Tolerances = DEFAULT_TOL) -> StateDiagnostics:
    if phi.algebra.dims != alg.dims:
        raise ShapeMismatchError("state does not match the algebra")
    min_eig = phi.min_eigenvalue()
    trace_residual = abs(phi.total_trace() - 1.0)
    ok = (
        min_eig >= -tol.psd_tol
        and trace_residual <= tol.cert_tol
        and phi.hermitization_residual <= tol.cert_tol
    )
    return StateDiagnostics(ok, min_eig, trace_residual, phi.hermitization_residual)


class Povm:
    """Tuple of positive elements summing to the identity.

    Elements are symmetrized on construction, with the residual recorded.
    """

    __slots__ = ("algebra", "elements", "hermitization_residual")

    def __init__(self, algebra: BlockAlgebra, elements):
        elements = list(elements)
        if not elements:
            raise ValidationError("a POVM needs at least one output")
        residual = 0.0
        fixed = []
        for e in elements:
            if not isinstance(e, AlgebraElement):
                e = AlgebraElement(algebra, e)
            if e.algebra.dims != algebra.dims:
                raise ShapeMismatchError("POVM element does not match the algebra")
            h, r = e.hermitized()
            residual = max(residual, r)
            fixed.append(h)
        self.algebra = algebra
        self.elements = tuple(fixed)
        self.hermitization_residual = residual

    @property
    def n(self) -> int:
        return len(self.elements)

    def sum(self) -> AlgebraElement:
        total = self.elements[0]
        for e in self.elements[1:]:
            total = total + e
        return total

    def __iter__(self):
        return iter(self.elements)

    def __len__(self):
        return len(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n}, dims={self.algebra.dims})"


class Pvm(Povm):
    """A POVM whose elements are projections."""


@dataclass
class PovmDiagnostics:
    is_valid: bool
    max_negativity: float
    max_excess: float
    sum_residual: float
    hermiticity_residual: float


def validate_povm(alg: BlockAlgebra, a: Povm, tol: Tolerances = DEFAULT_TOL) -> PovmDiagnostics:
    """Check the POVM invariants; residuals are exact maxima over blocks."""
    if a.algebra.dims != alg.dims:
        raise ShapeMismatchError("POVM does not match the algebra")
    neg = 0.0
    excess = 0.0
    for e in a.elements:
        for w in e.eigvals():
            if w.size:
                neg = max(neg, float(max(0.0, -w.min())))
                excess = max(excess, float(max(0.0, w.max() - 1.0)))
    total = a.sum()
    sum_residual = max(
        float(np.abs(b - np.eye(d)).max()) for b, d in zip(total.blocks, alg.dims)
    )
    herm = a.hermitization_residual
    ok = (
        neg <= tol.psd_tol
        and excess <= tol.psd_tol
        and sum_residual <= tol.cert_tol
        and herm <= tol.cert_tol
    )
    return PovmDiagnostics(ok, neg, excess, sum_residual, herm)


@dataclass
class PvmDiagnostics(PovmDiagnostics):
    idempotency_residual: float = 0.0


def validate_pvm(alg: BlockAlgebra, p: Povm, tol: Tolerances = DEFAULT_TOL) -> PvmDiagnostics:
    base = validate_povm(alg, p, tol)
    idem = max(
        float((e @ e - e).norm_fro()) for e in p.elements
    )
    ok = base.is_valid and idem <= tol.cert_tol
    return PvmDiagnostics(
        ok, base.max_negativity, base.max_excess, base.sum_residual,
        base.hermiticity_residual, idem,
    )


def phi_norm_sq(phi: State, x: AlgebraElement) -> float:
    """Squared state seminorm phi(x* x)."""
    return phi.expect(x.H @ x).real


def defect(phi: State, a: Povm) -> float:
    """Orthogonality defect 1 - phi(sum_i a_i^2); zero exactly for PVMs a.e."""
    total = sum(phi.expect(e @ e).real for e in a.elements)
    return 1.0 - total


def commutator_phi_norm_sq(phi: State, x: AlgebraElement, y: AlgebraElement) -> float:
    """phi-seminorm squared of the commutator xy - yx."""
    return phi_norm_sq(phi, x.commutator(y))


@dataclass
class CenterValue:
    """A central element, one scalar per block."""

    values: tuple[complex, ...]

    def as_element(self, alg: BlockAlgebra) -> AlgebraElement:
        if len(self.values) != alg.num_blocks:
            raise ShapeMismatchError("center value length does not match the algebra")
        return AlgebraElement(
            alg, [c * np.eye(d, dtype=complex) for c, d in zip(self.values, alg.dims)]
        )


def center_valued_trace(alg: BlockAlgebra, x: AlgebraElement) -> CenterValue:
    """Conditional expectation onto the center: blockwise normalized trace."""
    if x.algebra.dims != alg.dims:
        raise ShapeMismatchError("element does not match the algebra")
    return CenterValue(tuple(complex(np.trace(b)) / d for b, d in zip(x.blocks, alg.dims)))


@dataclass
class Cluster:
    """One clustered eigenspace: representative eigenvalue and an orthonormal basis."""

    value: float
    basis: np.ndarray  # (d, multiplicity), orthonormal columns

    @property
    def multiplicity(self) -> int:
        return self.basis.shape[1]


@dataclass
class SpectralClusters:
    """Per-block eigenvalue clusters of a Hermitian element, values descending."""

    blocks: tuple[tuple[Cluster, ...], ...]

    def reconstruct(self, alg: BlockAlgebra) -> AlgebraElement:
        mats = []
        for d, clusters in zip(alg.dims, self.blocks):
            m = np.zeros((d, d), dtype=complex)
            for c in clusters:
                m += c.value * (c.basis @ c.basis.conj().T)
            mats.append(m)
        return AlgebraElement(alg, mats)


def spectral_clusters(h: AlgebraElement, cluster_tol: float, cert_tol: float = 1e-9) -> SpectralClusters:
    """Cluster the spectrum of a Hermitian element by gaps above cluster_tol.

    Eigenvalues are sorted descending per block; a new cluster starts whenever
    the gap to the previous eigenvalue exceeds cluster_tol.  The cluster
    representative is the mean of its eigenvalues.
    """
    skew = h.skew_norm()
    if skew > cert_tol * max(1.0, h.norm_fro()):
        raise ValidationError(f"element is not Hermitian (skew norm {skew:.3e})")
    out = []
    for a in h.blocks:
        w, v = np.linalg.eigh((a + a.conj().T) / 2)
        w = w[::-1]
        v = v[:, ::-1]
        clusters = []
        start = 0
        for j in range(1, len(w) + 1):
            if j == len(w) or (w[j - 1] - w[j]) > cluster_tol:
                vals = w[start:j]
                clusters.append(Cluster(float(vals.mean()), v[:, start:j].copy()))
                start = j
        out.append(tuple(clusters))
    return SpectralClusters(tuple(out))


def effective_cluster_tol(h: AlgebraElement, tol: Tolerances) -> float:
    """Scale-aware clustering threshold: cluster_tol times max(1, spectral radius)."""
    return tol.cluster_tol * max(1.0, h.spectral_radius())
