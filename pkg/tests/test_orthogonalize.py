"""Projection selection, polar completion, POVM rounding, symmetry mode."""

import itertools
import math

import numpy as np
import pytest

from povmround import (
    BlockAlgebra,
    Povm,
    PreconditionError,
    Pvm,
    State,
    complete_polar,
    decompose_generated_algebra,
    defect,
    orthogonalize,
    orthogonalize_symmetry_preserving,
    phi_norm_sq,
    select_projections,
    validate_pvm,
)
from povmround.generators import (
    counterexample_triple,
    gen_instance,
    linfty2_family,
    random_povm_near_pvm,
    random_state,
)

from conftest import random_density, rng_for


def enumerate_abelian_pvms(alg, n):
    """All PVMs with n outputs on a fully diagonal algebra: every coordinate is
    assigned to exactly one output."""
    total = alg.total_dim
    for assignment in itertools.product(range(n), repeat=total):
        entries = [[[] for _ in alg.dims] for _ in range(n)]
        pos = 0
        for k, d in enumerate(alg.dims):
            for _ in range(d):
                for i in range(n):
                    entries[i][k].append(1.0 if assignment[pos] == i else 0.0)
                pos += 1
        yield Pvm(alg, [alg.diagonal(rows) for rows in entries])


def min_abelian_error(alg, phi, a):
    """Brute-force minimum of sum_i phi(|a_i - p_i|^2) over all abelian PVMs."""
    return min(
        sum(phi_norm_sq(phi, e - p) for e, p in zip(a.elements, pvm.elements))
        for pvm in enumerate_abelian_pvms(alg, a.n)
    )


class TestSelectProjections:
    def test_exact_pvm_selects_itself(self, m2, trace_state_m2):
        a = Povm(m2, [m2.diagonal([[1, 0]]), m2.diagonal([[0, 1]])])
        sel = select_projections(m2, trace_state_m2, a)
        assert sel.value == pytest.approx(1.0)
        assert np.allclose(sel.projections[0].blocks[0], np.diag([1, 0]))
        assert np.allclose(sel.projections[1].blocks[0], np.diag([0, 1]))

    def test_linfty2_scores_and_tiebreak(self):
        # Item scores: (output 1, coord 1) 0.9; (1, 2) 0.05; (2, 1) 0; (2, 2) 0.05.
        # The coord-2 slot ties at 0.05 and goes to the lower output index.
        alg, phi, a = linfty2_family(0.1)
        sel = select_projections(alg, phi, a)
        assert sel.value == pytest.approx(0.95, abs=1e-12)
        assert sel.lp_value == pytest.approx(0.95, abs=1e-12)
        assert np.allclose(sel.projections[0].blocks[0], [[1.0]])
        assert np.allclose(sel.projections[0].blocks[1], [[1.0]])
        assert sel.projections[1].norm_fro() == 0.0
        assert sel.ranks == [[1, 0], [1, 0]]

    def test_linfty2_value_is_enumeration_optimum(self):
        # Exhaustive check over all rank-constrained selections in the
        # two-coordinate abelian algebra: one item per coordinate.
        alg, phi, a = linfty2_family(0.1)
        scores = {
            (i, k): a.elements[i].blocks[k][0, 0].real * phi.densities[k][0, 0].real
            for i in range(2)
            for k in range(2)
        }
        best = max(
            scores[(i1, 0)] + scores[(i2, 1)] for i1 in range(2) for i2 in range(2)
        )
        sel = select_projections(alg, phi, a)
        assert sel.value == pytest.approx(best, abs=1e-12)
        assert best == pytest.approx(1.0 - defect(phi, a), abs=1e-12)

    def test_counterexample_needs_two_projections(self):
        alg, phi, a = counterexample_triple(0.01)
        sel = select_projections(alg, phi, a)
        eps0 = defect(phi, a)
        assert sel.value >= 1.0 - eps0 - 1e-9
        nonzero = [q for q in sel.projections if q.norm_fro() > 1e-8]
        assert len(nonzero) >= 2
        assert max(phi.expect(e).real for e in a.elements) <= 0.5 + 1e-12

    def test_rank_sums_and_feasibility_random(self):
        for seed in range(25):
            rng = rng_for(seed)
            alg = BlockAlgebra(tuple(int(d) for d in rng.integers(1, 5, size=2)))
            n = int(rng.integers(1, 5))
            a = random_povm_near_pvm(alg, n, float(rng.uniform(0, 0.4)), rng)
            phi = random_state(alg, rng)
            sel = select_projections(alg, phi, a)
            for k, d in enumerate(alg.dims):
                assert sum(sel.ranks[k]) == d
            feas = sum(phi.expect(e @ e).real for e in a.elements)
            assert sel.lp_value >= feas - 1e-9
            assert sel.value >= 1.0 - defect(phi, a) - 1e-9
            assert sel.commutation_residual <= 1e-6
            assert sel.idempotency_residual <= 1e-9


class TestCompletePolar:
    def test_unitary_input_returned(self, m2):
        rng = rng_for(7)
        g = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        q, _ = np.linalg.qr(g)
        u = complete_polar(m2, [q], [m2.identity()])
        assert np.allclose(u[0], q, atol=1e-12)

    def test_zero_on_one_dim_block(self):
        alg = BlockAlgebra((1,))
        u = complete_polar(alg, [np.zeros((1, 1))], [alg.identity()])
        assert np.allclose(u[0], [[1.0]])

    def test_rank_deficient_diagonal(self, m2):
        # Hand SVD of diag(0.6, 0): polar part e11, kernel pairing sends e2 to e2.
        u = complete_polar(m2, [np.diag([0.6, 0.0]).astype(complex)], [m2.identity()])
        assert np.allclose(u[0], np.eye(2), atol=1e-12)

    def test_isometry_and_range_properties(self):
        rng = rng_for(11)
        alg = BlockAlgebra((3,))
        phi = random_density(alg, rng)
        a = random_povm_near_pvm(alg, 3, 0.2, rng)
        sel = select_projections(alg, phi, a)
        from povmround.algebra import hermitian_sqrt

        cols = [
            np.vstack([
                sel.projections[i].blocks[0] @ hermitian_sqrt(a.elements[i], 0, 1)[0].blocks[0]
                for i in range(3)
            ])
        ]
        u = complete_polar(alg, cols, sel.projections)
        assert np.allclose(u[0].conj().T @ u[0], np.eye(3), atol=1e-10)
        target = np.zeros((9, 9), dtype=complex)
        for i in range(3):
            target[3 * i : 3 * i + 3, 3 * i : 3 * i + 3] = sel.projections[i].blocks[0]
        assert np.allclose(u[0] @ u[0].conj().T, target, atol=1e-10)

    def test_rank_sum_violation_raises(self, m2):
        with pytest.raises(PreconditionError):
            complete_polar(
                m2,
                [np.zeros((2, 2))],
                [m2.diagonal([[1, 0]])],  # rank 1 != block dim 2
            )


class TestOrthogonalize:
    def test_pvm_fixed_point(self):
        rng = rng_for(3)
        alg = BlockAlgebra((4,))
        phi = random_density(alg, rng)
        from povmround.generators import random_pvm

        p = random_pvm(alg, 3, rng)
        rep = orthogonalize(alg, phi, p)
        assert rep.error <= 1e-12
        assert max(
            (x - y).norm_fro() for x, y in zip(rep.pvm.elements, p.elements)
        ) <= 1e-7

    def test_linfty2_saturates_lower_bound(self):
        alg, phi, a = linfty2_family(0.1)
        rep = orthogonalize(alg, phi, a)
        assert rep.defect == pytest.approx(0.05, abs=1e-12)
        assert rep.error == pytest.approx(0.05, abs=1e-10)
        assert rep.ratio == pytest.approx(1.0, abs=1e-8)
        # The rounding is exactly the exhaustive optimum over abelian PVMs.
        assert min_abelian_error(alg, phi, a) == pytest.approx(rep.error, abs=1e-10)

    @pytest.mark.parametrize("c", [0.02, 0.1, 0.5])
    def test_linfty2_family_sweep(self, c):
        alg, phi, a = linfty2_family(c)
        rep = orthogonalize(alg, phi, a)
        assert rep.defect == pytest.approx(c / 2, abs=1e-12)
        assert rep.error == pytest.approx(c / 2, abs=1e-10)
        assert min_abelian_error(alg, phi, a) >= c / 2 - 1e-12

    def test_counterexample_bound(self):
        alg, phi, a = counterexample_triple(0.01)
        rep = orthogonalize(alg, phi, a)
        assert rep.defect <= 0.06
        assert rep.error <= 9 * rep.defect + 1e-7
        assert validate_pvm(alg, rep.pvm).is_valid

    def test_random_suite_certificates(self):
        for seed in range(40):
            rng = rng_for(1000 + seed)
            alg = BlockAlgebra(tuple(int(d) for d in rng.integers(1, 5, size=2)))
            n = int(rng.integers(2, 6))
            a = random_povm_near_pvm(alg, n, float(rng.uniform(0, 0.45)), rng)
            phi = random_state(alg, rng)
            rep = orthogonalize(alg, phi, a)
            certs = rep.certificates
            assert rep.error <= 9 * rep.defect + 1e-7
            assert certs.midpoint_residual <= 1e-7
            assert certs.pvm_idempotency <= 1e-8
            assert certs.pvm_sum_residual <= 1e-8
            assert max(certs.term_unselected, certs.term_modulus,
                       certs.term_selected_nonproj) <= rep.defect + 1e-7
            # Converse estimate from the triangle inequality.
            assert 1.0 - rep.defect >= (1.0 - math.sqrt(rep.error)) ** 2 - 1e-7
            diag = validate_pvm(alg, rep.pvm)
            assert diag.is_valid or diag.idempotency_residual <= 1e-8

    def test_rounding_beats_brute_force_within_9eps(self):
        # On small abelian instances the rounding error is within 9x defect of
        # the exhaustive optimum (and in practice matches it).
        rng = rng_for(77)
        alg = BlockAlgebra((1, 1, 1))
        for _ in range(5):
            raw = rng.uniform(0, 1, size=(2, 3))
            total = raw.sum(axis=0)
            a = Povm(alg, [alg.diagonal([[v] for v in raw[i] / total]) for i in range(2)])
            weights = rng.uniform(0.05, 1, size=3)
            weights /= weights.sum()
            phi = State(alg, [np.array([[w]]) for w in weights])
            rep = orthogonalize(alg, phi, a)
            best = min_abelian_error(alg, phi, a)
            assert best - 1e-12 <= rep.error <= 9 * rep.defect + 1e-7

    def test_ratio_inf_safe(self, m2, trace_state_m2):
        p = Povm(m2, [m2.diagonal([[1, 0]]), m2.diagonal([[0, 1]])])
        rep = orthogonalize(m2, trace_state_m2, p)
        assert rep.ratio in (0.0,) or rep.ratio >= 0.0
        assert math.isfinite(rep.ratio) or rep.error > 0


class TestDecomposeGeneratedAlgebra:
    def test_distinct_diagonal(self, m2):
        d = decompose_generated_algebra([m2.diagonal([[1.0, 2.0]])])
        assert d.sub.dims == (1, 1)
        assert d.multiplicities == (1, 1)
        # W is the identity up to column phases
        assert np.allclose(np.abs(d.basis[0]), np.eye(2), atol=1e-12)

    def test_identity_generates_scalars(self, m2):
        d = decompose_generated_algebra([m2.identity()])
        assert d.sub.dims == (1,)
        assert d.multiplicities == (2,)

    def test_projection_tensor_identity(self):
        alg = BlockAlgebra((4,))
        gen = alg.element([np.kron(np.diag([1.0, 0.0]), np.eye(2))])
        d = decompose_generated_algebra([gen])
        assert d.sub.dims == (1, 1)
        assert d.multiplicities == (2, 2)

    def test_full_matrix_algebra(self):
        rng = rng_for(4)
        alg = BlockAlgebra((3,))
        gens = [random_density(alg, rng).densities[0] for _ in range(2)]
        d = decompose_generated_algebra([alg.element([g]) for g in gens])
        assert d.sub.dims == (3,)
        assert d.multiplicities == (1,)
        assert d.residual <= 1e-10

    def test_embed_compress_roundtrip(self):
        # One Hermitian generator spans an abelian algebra: its two eigenspaces,
        # each doubled by the tensor factor.
        rng = rng_for(13)
        alg = BlockAlgebra((4,))
        a2 = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        a2 = (a2 + a2.conj().T) / 2
        gen = alg.element([np.kron(a2, np.eye(2))])
        d = decompose_generated_algebra([gen])
        assert d.sub.dims == (1, 1)
        assert d.multiplicities == (2, 2)
        assert (d.embed(d.compress(gen)) - gen).norm_fro() <= 1e-10
        # compressed state keeps unit trace
        phi = random_density(alg, rng)
        sub_phi = d.compress_state(phi)
        assert sub_phi.total_trace() == pytest.approx(1.0, abs=1e-12)


class TestSymmetryPreserving:
    def test_diagonal_family_stays_diagonal(self):
        alg = BlockAlgebra((2,))
        a = Povm(alg, [alg.diagonal([[0.9, 0.2]]), alg.diagonal([[0.1, 0.8]])])
        phi = State(alg, [np.diag([0.3, 0.7]).astype(complex)])
        sym = orthogonalize_symmetry_preserving(alg, phi, a)
        assert sym.symmetry_residual <= 1e-10
        for p in sym.pvm.elements:
            off = p.blocks[0] - np.diag(np.diagonal(p.blocks[0]))
            assert np.abs(off).max() <= 1e-10

    def test_single_output_identity(self):
        alg = BlockAlgebra((3,))
        a = Povm(alg, [alg.identity()])
        phi = State.normalized_trace(alg)
        sym = orthogonalize_symmetry_preserving(alg, phi, a)
        assert (sym.pvm.elements[0] - alg.identity()).norm_fro() <= 1e-10
        assert sym.symmetry_residual <= 1e-10

    @pytest.mark.parametrize("seed", [3, 5, 9])
    def test_tensor_block_structure(self, seed):
        # a_i = A_i tensor 1_2: output must be P_i tensor 1_2 where P_i solves
        # the compressed problem with the partial-traced state.
        inst = gen_instance("random_povm_near_pvm", seed, {"dims": [2], "n": 2, "delta": 0.2})
        small = inst.povm
        alg4 = BlockAlgebra((4,))
        big = Povm(alg4, [alg4.element([np.kron(e.blocks[0], np.eye(2))]) for e in small.elements])
        rng = rng_for(100 + seed)
        g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        rho = g @ g.conj().T
        rho /= np.trace(rho).real
        phi4 = State(alg4, [rho])
        sym = orthogonalize_symmetry_preserving(alg4, phi4, big)
        assert sym.symmetry_residual <= 1e-8
        assert sym.error <= 9 * sym.defect + 1e-7

        rho2 = rho[0::2, 0::2] + rho[1::2, 1::2]
        alg2 = BlockAlgebra((2,))
        plain = orthogonalize(alg2, State(alg2, [rho2]), small)
        diff = max(
            (sym.pvm.elements[i]
             - alg4.element([np.kron(plain.pvm.elements[i].blocks[0], np.eye(2))])).norm_fro()
            for i in range(small.n)
        )
        assert diff <= 1e-8

    def test_matches_plain_on_compressed_data(self):
        inst = gen_instance("random_povm_near_pvm", 21, {"dims": [3], "n": 3, "delta": 0.15})
        alg = inst.algebra
        sym = orthogonalize_symmetry_preserving(alg, inst.state, inst.povm)
        d = sym.decomposition
        plain = orthogonalize(
            d.sub,
            d.compress_state(inst.state),
            Povm(d.sub, [d.compress(e) for e in inst.povm.elements]),
        )
        diff = max(
            (sym.pvm.elements[i] - d.embed(plain.pvm.elements[i])).norm_fro()
            for i in range(inst.povm.n)
        )
        assert diff <= 1e-8
