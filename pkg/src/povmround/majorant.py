"""Minimal trace majorant of a family of positive functionals, with duals.

The primal problem is min Tr(z) over Hermitian z with z >= a_i for every
functional matrix a_i; its dual is max sum_i Tr(a_i t_i) over POVMs (t_i).
Both optima coincide and every optimal pair satisfies the slackness
relations t_i (z - a_i) = 0 and z = sum_i t_i a_i.

The solver follows the log-det barrier central path: minimize
Tr(z) - mu * sum_i log det(z - a_i) by damped Newton steps per central
block, with the dual iterate t_i = mu * (z - a_i)^{-1}.  At a Newton
stationary point sum_i t_i = 1 and z - sum_i t_i a_i = n * mu * 1 hold
identically, so n * mu * dim certifies the duality gap, and mu is shrunk
until that certificate meets gap_tol.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import (
    AlgebraElement,
    BlockAlgebra,
    PreconditionError,
    SolverError,
    Tolerances,
    DEFAULT_TOL,
)


@dataclass
class FunctionalFamily:
    """Positive functionals phi_i(x) = sum_k Tr((a_i)_k x_k), one PSD matrix each."""

    elements: list[AlgebraElement]

    def __post_init__(self):
        if not self.elements:
            raise PreconditionError("functional family must be nonempty")
        dims = self.elements[0].algebra.dims
        for e in self.elements:
            if e.algebra.dims != dims:
                raise PreconditionError("functionals belong to different algebras")

    @property
    def n(self) -> int:
        return len(self.elements)

    @property
    def algebra(self) -> BlockAlgebra:
        return self.elements[0].algebra

    def scale(self) -> float:
        return max(1.0, sum(e.trace().real for e in self.elements))

    def validate(self, tol: Tolerances = DEFAULT_TOL):
        for i, e in enumerate(self.elements):
            if e.skew_norm() > tol.cert_tol * max(1.0, e.norm_fro()):
                raise PreconditionError(f"functional {i} is not Hermitian")
            low = min(float(w.min()) for w in e.eigvals())
            if low < -tol.psd_tol * max(1.0, e.spectral_radius()):
                raise PreconditionError(
                    f"functional {i} is not positive (min eigenvalue {low:.3e})"
                )


@dataclass
class MajorantResiduals:
    feasibility: float      # min_i lambda_min(z - a_i)
    povm_sum: float         # ||sum_i t_i - 1||_F
    slackness: float        # max_i ||t_i (z - a_i)||_F
    reconstruction: float   # ||z - sum_i t_i a_i||_F


@dataclass
class MajorantSolution:
    majorant: AlgebraElement
    dual_povm: list[AlgebraElement]
    primal: float
    dual: float
    gap: float
    mu_final: float
    newton_iterations: int
    residuals: MajorantResiduals


def _herm(m):
    return (m + m.conj().T) / 2


def _chol_logdet(m):
    """Cholesky log-determinant; raises LinAlgError when not PD."""
    c = np.linalg.cholesky(_herm(m))
    return 2.0 * float(np.sum(np.log(np.real(np.diagonal(c)))))


def _barrier_value(z_blocks, fam_blocks, mu):
    val = 0.0
    for k, z in enumerate(z_blocks):
        val += float(np.trace(z).real)
        for a in fam_blocks[k]:
            val -= mu * _chol_logdet(z - a)
    return val


def _newton_center(z_blocks, fam_blocks, mu, tol: Tolerances):
    """Damped Newton minimization of the barrier at fixed mu, per block."""
    iters = 0
    for k, z in enumerate(z_blocks):
        d = z.shape[0]
        eye = np.eye(d)
        for _ in range(tol.barrier.max_iters):
            inverses = [np.linalg.inv(_herm(z - a)) for a in fam_blocks[k]]
            grad = eye - mu * sum(inverses)
            if np.linalg.norm(grad) <= tol.barrier.newton_tol:
                break
            hess = mu * sum(np.kron(w, w.T) for w in inverses)
            step = np.linalg.solve(hess, -grad.reshape(-1)).reshape(d, d)
            step = _herm(step)

            current = float(np.trace(z).real) - mu * sum(
                _chol_logdet(z - a) for a in fam_blocks[k]
            )
            t = 1.0
            for _ in range(60):
                cand = z + t * step
                try:
                    value = float(np.trace(cand).real) - mu * sum(
                        _chol_logdet(cand - a) for a in fam_blocks[k]
                    )
                except np.linalg.LinAlgError:
                    t *= 0.5
                    continue
                if value <= current + 1e-12 * max(1.0, abs(current)):
                    z = cand
                    break
                t *= 0.5
            else:
                raise SolverError(
                    f"line search stalled in block {k} at mu={mu:.3e}, "
                    f"gradient norm {np.linalg.norm(grad):.3e}"
                )
            iters += 1
        else:
            raise SolverError(
                f"Newton did not reach tolerance in block {k} at mu={mu:.3e}, "
                f"gradient norm {np.linalg.norm(grad):.3e}"
            )
        z_blocks[k] = z
    return z_blocks, iters


def minimal_majorant(
    alg: BlockAlgebra, f: FunctionalFamily, tol: Tolerances = DEFAULT_TOL
) -> MajorantSolution:
    """Solve min Tr(z), z >= a_i for all i, with dual POVM and certificates."""
    if f.algebra.dims != alg.dims:
        raise PreconditionError("functional family does not match the algebra")
    f.validate(tol)
    n = f.n
    dim = alg.total_dim
    scale = f.scale()
    gap_target = tol.barrier.gap_tol * scale

    fam_blocks = [[e.blocks[k] for e in f.elements] for k in range(alg.num_blocks)]
    top = max(max(float(w.max()) for w in e.eigvals()) for e in f.elements)
    z_blocks = [(top + 1.0) * np.eye(d, dtype=complex) for d in alg.dims]

    # Land just inside the certified-gap target: shrinking mu further only
    # makes the nearly-active blocks of z - a_i more singular for no benefit.
    mu_target = 0.5 * gap_target / (n * dim)
    mu = max(tol.barrier.mu0_scale * (top + 1.0), mu_target)
    total_iters = 0
    for _ in range(tol.barrier.max_iters):
        z_blocks, it = _newton_center(z_blocks, fam_blocks, mu, tol)
        total_iters += it
        if mu <= mu_target:
            break
        mu = max(mu * tol.barrier.mu_shrink, mu_target)
    else:
        raise SolverError("barrier loop exhausted max_iters before reaching gap_tol")

    z = AlgebraElement(alg, z_blocks)
    raw_duals = []
    for i in range(n):
        blocks = [
            mu * np.linalg.inv(_herm(z_blocks[k] - fam_blocks[k][i]))
            for k in range(alg.num_blocks)
        ]
        raw_duals.append(AlgebraElement(alg, [_herm(b) for b in blocks]))

    # Restore exact dual feasibility: spread the stationarity residual evenly.
    ident = alg.identity()
    residual = ident - sum(raw_duals[1:], raw_duals[0])
    duals = [t + (1.0 / n) * residual for t in raw_duals]

    primal = z.trace().real
    dual_value = sum(
        (f.elements[i] @ duals[i]).trace().real for i in range(n)
    )
    gap = primal - dual_value

    feas = min(
        float(np.linalg.eigvalsh(_herm(z.blocks[k] - fam_blocks[k][i])).min())
        for i in range(n)
        for k in range(alg.num_blocks)
    )
    povm_sum = (sum(duals[1:], duals[0]) - ident).norm_fro()
    slack = max(
        (duals[i] @ (z - f.elements[i])).norm_fro() for i in range(n)
    )
    recon = (z - sum((duals[i] @ f.elements[i] for i in range(1, n)), duals[0] @ f.elements[0])).norm_fro()

    return MajorantSolution(
        majorant=z,
        dual_povm=duals,
        primal=primal,
        dual=dual_value,
        gap=gap,
        mu_final=mu,
        newton_iterations=total_iters,
        residuals=MajorantResiduals(feas, povm_sum, slack, recon),
    )


@dataclass
class CertificateCheck:
    name: str
    value: float
    threshold: float
    passed: bool


@dataclass
class CertificateDiagnostics:
    checks: list[CertificateCheck]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed_names(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]


def verify_majorant_certificate(
    alg: BlockAlgebra,
    f: FunctionalFamily,
    sol: MajorantSolution,
    tol: Tolerances = DEFAULT_TOL,
) -> CertificateDiagnostics:
    """Recompute every optimality certificate of a solution from scratch."""
    if sol.majorant.algebra.dims != alg.dims:
        raise PreconditionError("solution does not match the algebra")
    n = f.n
    scale = f.scale()
    z = sol.majorant
    duals = sol.dual_povm

    feas = min(
        float(np.linalg.eigvalsh(_herm((z - e).blocks[k])).min())
        for e in f.elements
        for k in range(alg.num_blocks)
    )
    dual_min = min(
        float(np.linalg.eigvalsh(_herm(t.blocks[k])).min())
        for t in duals
        for k in range(alg.num_blocks)
    )
    ident = alg.identity()
    povm_sum = (sum(duals[1:], duals[0]) - ident).norm_fro()
    primal = z.trace().real
    dual_value = sum((f.elements[i] @ duals[i]).trace().real for i in range(n))
    gap = primal - dual_value
    slack = max((duals[i] @ (z - f.elements[i])).norm_fro() for i in range(n))
    recon = (
        z - sum((duals[i] @ f.elements[i] for i in range(1, n)), duals[0] @ f.elements[0])
    ).norm_fro()

    checks = [
        CertificateCheck("feasibility", feas, -tol.psd_tol * scale, feas >= -tol.psd_tol * scale),
        CertificateCheck("dual_positivity", dual_min, -tol.psd_tol * scale, dual_min >= -tol.psd_tol * scale),
        CertificateCheck("povm_sum", povm_sum, 1e-8 * scale, povm_sum <= 1e-8 * scale),
        CertificateCheck(
            "gap",
            gap,
            tol.barrier.gap_tol * scale,
            -tol.cert_tol * scale <= gap <= tol.barrier.gap_tol * scale,
        ),
        CertificateCheck("slackness", slack, 1e-4 * scale, slack <= 1e-4 * scale),
        CertificateCheck("reconstruction", recon, 1e-4 * scale, recon <= 1e-4 * scale),
    ]
    return CertificateDiagnostics(checks)


def commuting_majorant_oracle(alg: BlockAlgebra, f: FunctionalFamily) -> MajorantSolution:
    """Exact solution for entrywise-diagonal families: z is the coordinatewise
    maximum and t_i indicates where functional i attains it (ties to the
    lowest index).  Independent of the barrier solver; used as a test oracle."""
    if f.algebra.dims != alg.dims:
        raise PreconditionError("functional family does not match the algebra")
    n = f.n
    for i, e in enumerate(f.elements):
        for b in e.blocks:
            if np.abs(b - np.diag(np.diagonal(b))).max() > 1e-12 * max(1.0, np.abs(b).max()):
                raise PreconditionError(f"functional {i} is not diagonal")

    z_blocks = []
    t_blocks = [[] for _ in range(n)]
    for k, d in enumerate(alg.dims):
        table = np.array(
            [np.real(np.diagonal(f.elements[i].blocks[k])) for i in range(n)]
        )
        zmax = table.max(axis=0)
        winner = table.argmax(axis=0)  # argmax returns the lowest winning index
        z_blocks.append(np.diag(zmax.astype(complex)))
        for i in range(n):
            t_blocks[i].append(np.diag((winner == i).astype(complex)))

    z = AlgebraElement(alg, z_blocks)
    duals = [AlgebraElement(alg, blocks) for blocks in t_blocks]
    primal = z.trace().real
    dual_value = sum((f.elements[i] @ duals[i]).trace().real for i in range(n))
    ident = alg.identity()
    return MajorantSolution(
        majorant=z,
        dual_povm=duals,
        primal=primal,
        dual=dual_value,
        gap=primal - dual_value,
        mu_final=0.0,
        newton_iterations=0,
        residuals=MajorantResiduals(
            feasibility=min(
                float(np.linalg.eigvalsh(_herm((z - e).blocks[k])).min())
                for e in f.elements
                for k in range(alg.num_blocks)
            ),
            povm_sum=(sum(duals[1:], duals[0]) - ident).norm_fro(),
            slackness=max((duals[i] @ (z - f.elements[i])).norm_fro() for i in range(n)),
            reconstruction=(
                z - sum((duals[i] @ f.elements[i] for i in range(1, n)), duals[0] @ f.elements[0])
            ).norm_fro(),
        ),
    )
