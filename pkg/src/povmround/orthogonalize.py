"""Rounding an almost-orthogonal POVM to an exact PVM with certified error.

Given a POVM (a_i) and a state phi with small orthogonality defect
eps0 = 1 - phi(sum_i a_i^2), the rounding proceeds in two stages:

1. ``select_projections``: pick projections q_i commuting with a_i whose
   blockwise ranks sum to the block dimension and which carry almost all of
   the state mass, phi(sum_i q_i a_i) >= 1 - eps0.  This is a decoupled
   linear program over eigenspace items, solved exactly by a greedy top-d
   selection per central block.

2. ``complete_polar``: take the tall block column x with rows q_i a_i^(1/2),
   write x = u |x|, and complete the polar part u to an exact isometry whose
   range is the direct sum of the q_i.  The rounded projections are
   p_i = u_i^H q_i u_i, which sum to the identity by construction.

The output PVM satisfies sum_i phi(|a_i - p_i|^2) <= 9 * eps0, and the
report carries the residuals that certify each step of that bound.

``orthogonalize_symmetry_preserving`` first decomposes the algebra generated
by the POVM, runs the rounding inside it, and embeds the result back, so the
output commutes with every operator that commutes with all inputs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .algebra import (
    AlgebraElement,
    BlockAlgebra,
    Povm,
    PreconditionError,
    Pvm,
    SolverError,
    State,
    Tolerances,
    DEFAULT_TOL,
    ValidationError,
    defect,
    effective_cluster_tol,
    hermitian_sqrt,
    phi_norm_sq,
    spectral_clusters,
    validate_povm,
)

_GENERIC_SEED = 0x5EED


@dataclass
class SelectionResult:
    """Commuting projections q_i with blockwise ranks summing to d_k."""

    projections: list[AlgebraElement]
    value: float                 # phi(sum_i q_i a_i), evaluated exactly
    lp_value: float              # optimum of the selection linear program
    ranks: list[list[int]]       # ranks[k][i] = rank of q_i in block k
    commutation_residual: float  # max_i ||[q_i, a_i]||_F
    idempotency_residual: float  # max_i ||q_i^2 - q_i||_F


@dataclass
class OrthCertificates:
    pvm_idempotency: float
    pvm_sum_residual: float
    midpoint_residual: float      # max_i || |x| p_i |x| - q_i a_i ||_F
    polar_residual: float         # max block || x - u |x| ||_F
    sqrt_clip: float              # largest eigenvalue clip applied before sqrt
    term_unselected: float        # sum_i phi((1 - q_i) a_i^2)
    term_modulus: float           # phi((1 - |x|)^2)
    term_selected_nonproj: float  # sum_i phi(q_i (a_i - a_i^2))


@dataclass
class OrthReport:
    defect: float
    pvm: Pvm
    error: float                  # sum_i phi(|a_i - p_i|^2)
    ratio: float                  # error / defect, inf-safe
    selection: SelectionResult
    certificates: OrthCertificates


def _safe_ratio(error: float, eps0: float) -> float:
    if eps0 > 0.0:
        return error / eps0
    return 0.0 if error <= 0.0 else math.inf


def select_projections(
    alg: BlockAlgebra, phi: State, a: Povm, tol: Tolerances = DEFAULT_TOL
) -> SelectionResult:
    """Maximize phi(sum_i x_i a_i) over 0 <= x_i <= 1 commuting with a_i,
    subject to the blockwise trace constraint sum_i Tr(x_i) = d_k.

    The feasible set decouples per central block into eigenspace items with
    scores lambda * (w^H rho w), capped at mass 1 each, with total mass d_k.
    The greedy top-d_k selection is therefore the exact optimum, and since
    the tuple (a_1, ..., a_n) itself is feasible, the optimum is at least
    phi(sum_i a_i^2) = 1 - defect.
    """
    diag = validate_povm(alg, a, tol)
    if not diag.is_valid:
        raise ValidationError(f"input is not a valid POVM: {diag}")

    # Pool of candidate rank-one items per block.  An item is one eigenvector
    # of the compressed score matrix lambda * B^H rho B of one spectral
    # cluster (lambda, B) of one output.
    clusters_per_output = [
        spectral_clusters(e, effective_cluster_tol(e, tol), tol.cert_tol) for e in a.elements
    ]

    q_blocks = [[np.zeros((d, d), dtype=complex) for d in alg.dims] for _ in range(a.n)]
    ranks = [[0] * a.n for _ in alg.dims]
    lp_value = 0.0

    for k, d in enumerate(alg.dims):
        rho = phi.densities[k]
        items = []  # (score, output, -eigenvalue, vec_index, vector)
        for i in range(a.n):
            for cluster in clusters_per_output[i].blocks[k]:
                lam = cluster.value
                basis = cluster.basis
                score_mat = lam * (basis.conj().T @ rho @ basis)
                score_mat = (score_mat + score_mat.conj().T) / 2
                w, v = np.linalg.eigh(score_mat)
                w = w[::-1]
                v = v[:, ::-1]
                for j in range(len(w)):
                    s = float(w[j])
                    if s < -tol.cert_tol:
                        warnings.warn(
                            f"selection score {s:.3e} below -cert_tol clipped to 0 "
                            f"(block {k}, output {i})",
                            RuntimeWarning,
                        )
                        s = 0.0
                    items.append((s, i, -lam, j, basis @ v[:, j]))
        items.sort(key=lambda it: (-it[0], it[1], it[2], it[3]))
        for s, i, _, _, vec in items[:d]:
            q_blocks[i][k] += np.outer(vec, vec.conj())
            ranks[k][i] += 1
            lp_value += s

    projections = [AlgebraElement(alg, blocks) for blocks in q_blocks]
    value = sum(
        phi.expect(q @ e).real for q, e in zip(projections, a.elements)
    )
    comm = max((q.commutator(e)).norm_fro() for q, e in zip(projections, a.elements))
    idem = max((q @ q - q).norm_fro() for q in projections)
    return SelectionResult(projections, value, lp_value, ranks, comm, idem)


def _phase_fix_columns(b: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    out = b.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        idx = int(np.argmax(np.abs(col)))
        mag = abs(col[idx])
        if mag > 0:
            out[:, j] = col * (col[idx].conjugate() / mag)
    return out


def _pivoted_orthonormal(m: np.ndarray, count: int, floor: float = 1e-12) -> np.ndarray:
    """Greedy-pivoted Gram-Schmidt basis of the column span, `count` columns."""
    work = m.astype(complex).copy()
    rows = work.shape[0]
    basis = np.zeros((rows, count), dtype=complex)
    for j in range(count):
        norms = np.linalg.norm(work, axis=0)
        pick = int(np.argmax(norms))
        if norms[pick] <= floor:
            raise SolverError(
                f"orthonormal completion found only {j} of {count} directions"
            )
        col = work[:, pick] / norms[pick]
        basis[:, j] = col
        work -= np.outer(col, col.conj() @ work)
    return basis


def complete_polar(
    alg: BlockAlgebra,
    columns: Sequence[np.ndarray],
    targets: Sequence[AlgebraElement],
    tol: Tolerances = DEFAULT_TOL,
) -> list[np.ndarray]:
    """Polar part of a tall block column map, completed to an exact isometry.

    ``columns[k]`` is the (n*d_k, d_k) matrix of block rows landing in the
    ranges of the target projections; per block the returned u satisfies
    u^H u = 1 and u u^H = diag(q_1, ..., q_n), with x = u |x| up to the
    singular values below the rank cutoff.

    The completion pairs a pivoted orthonormal basis of the domain kernel
    with one of range(diag q) minus range(x); bases are phase-normalized so
    the pairing is deterministic.
    """
    n = len(targets)
    isometries = []
    for k, d in enumerate(alg.dims):
        x = np.asarray(columns[k], dtype=complex)
        if x.shape != (n * d, d):
            raise PreconditionError(
                f"block {k}: column map has shape {x.shape}, expected {(n * d, d)}"
            )
        # Orthonormal basis of range(diag(q_i)), stacked at the block offsets.
        range_cols = []
        rank_sum = 0
        for i, q in enumerate(targets):
            w, v = np.linalg.eigh(q.blocks[k])
            keep = w > 0.5
            r = int(keep.sum())
            rank_sum += r
            if r:
                emb = np.zeros((n * d, r), dtype=complex)
                emb[i * d : (i + 1) * d, :] = v[:, keep]
                range_cols.append(emb)
        if rank_sum != d:
            raise PreconditionError(
                f"block {k}: target ranks sum to {rank_sum}, expected {d}"
            )
        q_basis = np.hstack(range_cols) if range_cols else np.zeros((n * d, 0), dtype=complex)

        out_of_range = x - q_basis @ (q_basis.conj().T @ x)
        scale = max(1.0, float(np.linalg.norm(x)))
        if np.linalg.norm(out_of_range) > 1e-7 * scale:
            raise PreconditionError(
                f"block {k}: columns leave the target range by "
                f"{np.linalg.norm(out_of_range):.3e}"
            )

        u_left, s, vh = np.linalg.svd(x, full_matrices=False)
        cutoff = tol.rank_tol * (float(s[0]) if s.size and s[0] > 0 else 1.0)
        r = int(np.sum(s > cutoff))
        u0 = u_left[:, :r] @ vh[:r, :]

        v_kernel = _phase_fix_columns(vh[r:, :].conj().T)          # (d, d-r)
        residue = q_basis - u_left[:, :r] @ (u_left[:, :r].conj().T @ q_basis)
        w_kernel = (
            _phase_fix_columns(_pivoted_orthonormal(residue, d - r))
            if d - r
            else np.zeros((n * d, 0), dtype=complex)
        )
        isometries.append(u0 + w_kernel @ v_kernel.conj().T)
    return isometries


def orthogonalize(
    alg: BlockAlgebra, phi: State, a: Povm, tol: Tolerances = DEFAULT_TOL
) -> OrthReport:
    """Round a POVM to the certified nearby PVM.

    Builds the column map x with rows q_i a_i^(1/2) from the selected
    projections, completes its polar part to an isometry u with range
    diag(q_i), and returns p_i = u_i^H q_i u_i.  The error satisfies
    sum_i phi(|a_i - p_i|^2) <= 9 * defect up to certificate tolerance.
    """
    eps0 = defect(phi, a)
    sel = select_projections(alg, phi, a, tol)

    roots = []
    clip = 0.0
    for e in a.elements:
        root, c = hermitian_sqrt(e, 0.0, 1.0)
        roots.append(root)
        clip = max(clip, c)

    columns = []
    for k, d in enumerate(alg.dims):
        col = np.vstack([
            sel.projections[i].blocks[k] @ roots[i].blocks[k] for i in range(a.n)
        ])
        columns.append(col)
    u = complete_polar(alg, columns, sel.projections, tol)

    p_elements = []
    for i in range(a.n):
        blocks = []
        for k, d in enumerate(alg.dims):
            rows = u[k][i * d : (i + 1) * d, :]
            p = rows.conj().T @ sel.projections[i].blocks[k] @ rows
            blocks.append((p + p.conj().T) / 2)
        p_elements.append(AlgebraElement(alg, blocks))
    pvm = Pvm(alg, p_elements)

    error = sum(phi_norm_sq(phi, e - p) for e, p in zip(a.elements, pvm.elements))

    # Certificates of the construction identities and of the three bound terms.
    modulus_blocks = []
    polar_residual = 0.0
    for k in range(alg.num_blocks):
        x = columns[k]
        gram = x.conj().T @ x
        w, v = np.linalg.eigh((gram + gram.conj().T) / 2)
        mod = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
        modulus_blocks.append(mod)
        polar_residual = max(polar_residual, float(np.linalg.norm(x - u[k] @ mod)))
    modulus = AlgebraElement(alg, modulus_blocks)

    midpoint = 0.0
    for i in range(a.n):
        for k in range(alg.num_blocks):
            lhs = modulus.blocks[k] @ pvm.elements[i].blocks[k] @ modulus.blocks[k]
            rhs = sel.projections[i].blocks[k] @ a.elements[i].blocks[k]
            midpoint = max(midpoint, float(np.linalg.norm(lhs - rhs)))

    ident = alg.identity()
    one_minus_mod = ident - modulus
    term_unselected = sum(
        phi.expect((ident - q) @ e @ e).real
        for q, e in zip(sel.projections, a.elements)
    )
    term_modulus = phi.expect(one_minus_mod @ one_minus_mod).real
    term_selected = sum(
        phi.expect(q @ (e - e @ e)).real for q, e in zip(sel.projections, a.elements)
    )

    total = pvm.sum()
    sum_residual = max(
        float(np.abs(b - np.eye(d)).max()) for b, d in zip(total.blocks, alg.dims)
    )
    idem = max((p @ p - p).norm_fro() for p in pvm.elements)

    certs = OrthCertificates(
        pvm_idempotency=idem,
        pvm_sum_residual=sum_residual,
        midpoint_residual=midpoint,
        polar_residual=polar_residual,
        sqrt_clip=clip,
        term_unselected=term_unselected,
        term_modulus=term_modulus,
        term_selected_nonproj=term_selected,
    )
    return OrthReport(eps0, pvm, error, _safe_ratio(error, eps0), sel, certs)


@dataclass
class GeneratedAlgebra:
    """Unitary identification of the algebra generated by a Hermitian family.

    Per ambient block, ``basis[k]`` conjugates every generator into
    direct-sum form: basis^H a basis = sum over sub-blocks of
    (compressed block) tensor 1_multiplicity.  ``ambient_block`` and
    ``offsets`` record where each sub-block sits inside its ambient basis.
    """

    ambient: BlockAlgebra
    sub: BlockAlgebra
    multiplicities: tuple[int, ...]
    ambient_block: tuple[int, ...]
    offsets: tuple[int, ...]            # column offset of each sub-block inside its ambient basis
    basis: list[np.ndarray]             # per ambient block, a unitary change of basis
    commutant: list[AlgebraElement]     # orthonormal basis of the commutant of the family
    residual: float                     # max_i block-diagonalization residual

    def compress(self, x: AlgebraElement) -> AlgebraElement:
        """Conditional expectation onto the generated algebra, in sub coordinates."""
        blocks = []
        for s, (k, off, d, m) in enumerate(self._layout()):
            w = self.basis[k][:, off : off + d * m]
            conj = w.conj().T @ x.blocks[k] @ w
            acc = np.zeros((d, d), dtype=complex)
            for u in range(m):
                acc += conj[u::m, u::m]
            blocks.append(acc / m)
        return AlgebraElement(self.sub, blocks)

    def embed(self, y: AlgebraElement) -> AlgebraElement:
        """Map sub-algebra elements back into the ambient algebra."""
        mats = [np.zeros((d, d), dtype=complex) for d in self.ambient.dims]
        for s, (k, off, d, m) in enumerate(self._layout()):
            w = self.basis[k][:, off : off + d * m]
            mats[k] += w @ np.kron(y.blocks[s], np.eye(m)) @ w.conj().T
        return AlgebraElement(self.ambient, mats)

    def compress_state(self, phi: State) -> State:
        """Restrict the state: partial trace over the multiplicity index."""
        densities = []
        for s, (k, off, d, m) in enumerate(self._layout()):
            w = self.basis[k][:, off : off + d * m]
            conj = w.conj().T @ phi.densities[k] @ w
            acc = np.zeros((d, d), dtype=complex)
            for u in range(m):
                acc += conj[u::m, u::m]
            densities.append(acc)
        return State(self.sub, densities)

    def _layout(self):
        return [
            (self.ambient_block[s], self.offsets[s], self.sub.dims[s], self.multiplicities[s])
            for s in range(self.sub.num_blocks)
        ]


def _commutant_basis(dim: int, family: list[np.ndarray], rank_tol: float) -> list[np.ndarray]:
    """Basis of {y : [y, a] = 0 for all a in family} inside M_dim."""
    if not family:
        raise PreconditionError("empty generating family")
    ops = []
    eye = np.eye(dim)
    for a in family:
        ops.append(np.kron(a, eye) - np.kron(eye, a.T))  # row-major vec of a@y - y@a
    stacked = np.vstack(ops)
    _, s, vh = np.linalg.svd(stacked)
    smax = float(s[0]) if s.size and s[0] > 0 else 1.0
    # Null vectors of A = U S V^H are the conjugated rows of V^H at zero s.
    rows = [vh[j].conj() for j in range(len(s)) if s[j] <= rank_tol * smax]
    return [r.reshape(dim, dim) for r in rows]


def _intertwiner(fam_a: list[np.ndarray], fam_b: list[np.ndarray], rank_tol: float):
    """Unique-up-to-phase unitary T with A_i T = T B_i, or None."""
    d = fam_a[0].shape[0]
    if fam_b[0].shape[0] != d:
        return None
    eye = np.eye(d)
    ops = [np.kron(a, eye) - np.kron(eye, b.T) for a, b in zip(fam_a, fam_b)]
    _, s, vh = np.linalg.svd(np.vstack(ops))
    smax = float(s[0]) if s.size and s[0] > 0 else 1.0
    null = [vh[j].conj() for j in range(len(s)) if s[j] <= max(rank_tol * smax, 1e-11)]
    if len(null) != 1:
        return None if not null else "degenerate"
    t = null[0].reshape(d, d)
    gram = t.conj().T @ t
    scale = float(np.trace(gram).real) / d
    if scale <= 0 or np.linalg.norm(gram - scale * eye) > 1e-7 * max(scale, 1.0):
        return "degenerate"
    t = t / math.sqrt(scale)
    flat = t.reshape(-1)
    idx = int(np.argmax(np.abs(flat)))
    t = t * (flat[idx].conjugate() / abs(flat[idx]))
    return t


def decompose_generated_algebra(
    elements: Sequence[AlgebraElement], tol: Tolerances = DEFAULT_TOL
) -> GeneratedAlgebra:
    """Identify the algebra generated by a Hermitian family with a direct sum
    of full matrix blocks carrying multiplicities.

    The commutant is computed as the null space of the stacked commutator
    operators; the eigenspaces of a seeded generic Hermitian commutant
    element split the space, equivalent pieces are detected and aligned by
    their (unique) intertwiners, and the result is verified against the
    conjugated family.  Degenerate draws are retried with fresh seeds.
    """
    if not elements:
        raise PreconditionError("need at least one generating element")
    alg = elements[0].algebra
    herm = []
    for e in elements:
        if e.algebra.dims != alg.dims:
            raise PreconditionError("generators belong to different algebras")
        h, res = e.hermitized()
        if res > 1e-8 * max(1.0, e.norm_fro()):
            raise PreconditionError(f"generator is not Hermitian (residual {res:.3e})")
        herm.append(h)

    scale = max(1.0, max(h.spectral_radius() for h in herm))
    last_residual = math.inf
    for attempt in range(tol.barrier.max_iters):
        rng = np.random.default_rng(_GENERIC_SEED + attempt)
        try:
            result = _decompose_once(alg, herm, rng, tol, scale)
        except SolverError:
            continue
        if result.residual <= 10.0 * tol.cert_tol * scale:
            return result
        last_residual = min(last_residual, result.residual)
    raise SolverError(
        f"block decomposition did not converge; best residual {last_residual:.3e}"
    )


def _decompose_once(alg, herm, rng, tol, scale) -> GeneratedAlgebra:
    sub_dims = []
    mults = []
    ambient_of = []
    offsets = []
    bases = []
    commutant_elements: list[AlgebraElement] = []

    for k, d in enumerate(alg.dims):
        family = [h.blocks[k] for h in herm]
        comm = _commutant_basis(d, family, tol.rank_tol)
        for y in comm:
            blocks = [np.zeros((dd, dd), dtype=complex) for dd in alg.dims]
            nrm = np.linalg.norm(y)
            blocks[k] = y / (nrm if nrm > 0 else 1.0)
            commutant_elements.append(AlgebraElement(alg, blocks))

        coeffs = rng.standard_normal(len(comm)) + 1j * rng.standard_normal(len(comm))
        g = sum(c * y for c, y in zip(coeffs, comm))
        g = (g + g.conj().T) / 2
        gn = np.linalg.norm(g)
        if gn > 0:
            g = g / gn
        w, v = np.linalg.eigh(g)
        order = np.argsort(-w)
        w = w[order]
        v = v[:, order]

        # Cluster the eigenvalues of the generic element.
        spaces = []
        start = 0
        ctol = tol.cluster_tol * max(1.0, float(np.abs(w).max()) if w.size else 1.0)
        for j in range(1, d + 1):
            if j == d or (w[j - 1] - w[j]) > max(ctol, 1e-7):
                spaces.append(v[:, start:j].copy())
                start = j

        compressed = [
            [basis.conj().T @ a @ basis for a in family] for basis in spaces
        ]

        # Group equivalent eigenspaces, aligning each to its group representative.
        groups: list[list[int]] = []
        aligned: dict[int, np.ndarray] = {}
        for r in range(len(spaces)):
            placed = False
            for grp in groups:
                t = _intertwiner(compressed[grp[0]], compressed[r], tol.rank_tol)
                if t is None:
                    continue
                if isinstance(t, str):
                    raise SolverError("degenerate generic element")
                grp.append(r)
                aligned[r] = spaces[r] @ t.conj().T
                placed = True
                break
            if not placed:
                groups.append([r])
                aligned[r] = spaces[r]

        # Deterministic group order: dominant ambient coordinate, then size.
        def support_key(grp):
            proj = sum(aligned[r] @ aligned[r].conj().T for r in grp)
            diagv = np.real(np.diagonal(proj))
            return (int(np.argmax(diagv)), -len(grp))

        groups.sort(key=support_key)

        w_cols = []
        offset = 0
        for grp in groups:
            dk = spaces[grp[0]].shape[1]
            m = len(grp)
            cols = np.zeros((d, dk * m), dtype=complex)
            for u, r in enumerate(grp):
                f = aligned[r]
                for alpha in range(dk):
                    cols[:, alpha * m + u] = f[:, alpha]
            w_cols.append(cols)
            sub_dims.append(dk)
            mults.append(m)
            ambient_of.append(k)
            offsets.append(offset)
            offset += dk * m
        bases.append(np.hstack(w_cols))

    sub = BlockAlgebra(tuple(sub_dims))
    result = GeneratedAlgebra(
        ambient=alg,
        sub=sub,
        multiplicities=tuple(mults),
        ambient_block=tuple(ambient_of),
        offsets=tuple(offsets),
        basis=bases,
        commutant=commutant_elements,
        residual=0.0,
    )
    residual = 0.0
    for h in herm:
        diff = result.embed(result.compress(h)) - h
        residual = max(residual, diff.norm_fro())
    result.residual = residual
    return result


@dataclass
class SymmetricOrthReport:
    """Rounding report that also certifies commutant preservation."""

    defect: float
    pvm: Pvm                       # ambient output
    error: float                   # ambient sum_i phi(|a_i - p_i|^2)
    ratio: float
    inner: OrthReport              # rounding inside the generated algebra
    decomposition: GeneratedAlgebra
    symmetry_residual: float       # max over commutant basis b of ||[b, p_i]||_F


def orthogonalize_symmetry_preserving(
    alg: BlockAlgebra, phi: State, a: Povm, tol: Tolerances = DEFAULT_TOL
) -> SymmetricOrthReport:
    """Round inside the algebra generated by the POVM, so that the output
    commutes with everything commuting with all inputs."""
    diag = validate_povm(alg, a, tol)
    if not diag.is_valid:
        raise ValidationError(f"input is not a valid POVM: {diag}")

    decomp = decompose_generated_algebra(list(a.elements), tol)
    sub_povm = Povm(decomp.sub, [decomp.compress(e) for e in a.elements])
    sub_phi = decomp.compress_state(phi)
    inner = orthogonalize(decomp.sub, sub_phi, sub_povm, tol)

    ambient_p = [decomp.embed(p) for p in inner.pvm.elements]
    pvm = Pvm(alg, ambient_p)

    eps0 = defect(phi, a)
    error = sum(phi_norm_sq(phi, e - p) for e, p in zip(a.elements, pvm.elements))

    symmetry = 0.0
    for b in decomp.commutant:
        for p in pvm.elements:
            symmetry = max(symmetry, b.commutator(p).norm_fro())

    return SymmetricOrthReport(
        eps0, pvm, error, _safe_ratio(error, eps0), inner, decomp, symmetry
    )
