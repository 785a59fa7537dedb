"""Corrector problems for a heterogeneous coefficient embedded in a constant one.

The whole-space problem: given a coefficient field A(x) inside the unit ball B
and a constant admissible matrix A_ext outside, find the potential correction
w with -div( A_composite (p + grad w) ) = 0 for a unit slope p. Here it is
discretized on [-L, L]^d with zero Dirichlet data (the correction decays like
a dipole, so truncation costs O(L^-d) in energies) and P1 elements.

Two equivalent evaluations of the energy per unit ball measure are kept:

    energy     = ( int_B p.A(x)(p + grad w) - int_B A_ext p . grad w ) / |B|
    energy_alt = ( int_B p.A(x)p - int_B grad w.A(x) grad w
                   - int_ext grad w.A_ext grad w ) / |B|

They agree exactly at the discrete minimizer; their drift, normalized as
|J2 - J3| / (1 + |J2|), is a free residual check on every solve. |B| is the
quadrature measure of the ball indicator, not pi^(d/2)/gamma(...), so
constant-field identities hold exactly at the discrete level.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidCoefficientError
from .fem import (LinearSolver, assemble_stiffness, build_mesh,
                  reduce_coefficient)
from .matrices import check_admissible

log = logging.getLogger(__name__)

REL1_DEFAULT_THRESHOLD = 1e-6


@dataclass
class CorrectorSolution:
    """One corrector solve: slope p, exterior matrix, and diagnostics.

    The solve itself imposes no mean constraint (the Dirichlet outer
    boundary already pins the additive constant); w stores the mean-zero
    representative, shifted after the fact by ball_mean. All energies are
    invariant under that shift. energy is the primary evaluation, energy_alt
    the independent one; residual_rel1 their normalized drift.
    """

    p: np.ndarray
    exterior: np.ndarray
    w: np.ndarray               # vertex values, zero mean over the ball
    energy: float
    energy_alt: float
    residual_rel1: float
    stats: object
    ball_mean: float = 0.0      # ball average of the raw Dirichlet solution
    flags: tuple = ()


def corrector_energy(solution):
    """(energy, energy_alt, residual_rel1) of a solved corrector."""
    return solution.energy, solution.energy_alt, solution.residual_rel1


class EmbeddedProblem:
    """Precomputed discretization of the embedded corrector problem.

    Holding the field-dependent quadrature reductions fixed, the stiffness
    matrix and load are cheap functions of the exterior matrix, which is what
    estimator loops vary. The last assembled system is cached so the handful
    of solves at one exterior matrix share a factorization.
    """

    def __init__(self, field, disc, rel1_threshold=REL1_DEFAULT_THRESHOLD,
                 mesh=None):
        if field.dim != disc.dim:
            raise InvalidCoefficientError(
                f"field dim {field.dim} != discretization dim {disc.dim}"
            )
        self.field = field
        self.disc = disc
        self.bounds = field.bounds
        self.rel1_threshold = rel1_threshold
        self.mesh = build_mesh(disc) if mesh is None else mesh
        mesh = self.mesh

        # field-dependent reductions, computed once
        self.coeff_ball = reduce_coefficient(mesh, field.evaluate,
                                             mask=mesh.in_ball)
        self.vol_ball = np.einsum("eq->e", mesh.quad_w * mesh.in_ball)
        self.vol_ext = np.einsum("eq->e", mesh.quad_w * ~mesh.in_ball)
        self.ball_measure = float(self.vol_ball.sum())
        self.coeff_ball_total = self.coeff_ball.sum(axis=0)   # int_B A(x) dx

        # load ingredients: int_B A(x) grad(phi_i) and int_B grad(phi_i)
        self.flux_basis = self._assemble_vector_block(
            np.einsum("eab,elb->ela", self.coeff_ball, mesh.grads))
        self.geom_basis = self._assemble_vector_block(
            self.vol_ball[:, None, None] * mesh.grads)
        # int_B phi_i dx, on all vertices, for the mean-zero shift
        mass = np.einsum("eq,ql->el", mesh.quad_w * mesh.in_ball, mesh.phi_q)
        self.ball_mass = np.zeros(mesh.n_vertices)
        np.add.at(self.ball_mass, mesh.elements.ravel(), mass.ravel())

        self._system_cache = (None, None)
        self._warm = {}
        self.max_rel1_seen = 0.0
        self.solve_count = 0

    def _assemble_vector_block(self, cell_values):
        """Scatter (ne, nloc, d) element data to (n_dofs, d)."""
        mesh = self.mesh
        d = cell_values.shape[2]
        out = np.zeros((mesh.n_dofs, d))
        dofs = mesh.interior_pos[mesh.elements].ravel()
        keep = dofs >= 0
        vals = cell_values.reshape(-1, d)
        np.add.at(out, dofs[keep], vals[keep])
        return out

    # -- system pieces -----------------------------------------------------

    def system(self, exterior):
        """LinearSolver for the composite coefficient with this exterior matrix."""
        exterior = check_admissible(np.asarray(exterior, dtype=float),
                                    self.bounds, what="exterior matrix")
        key = exterior.tobytes()
        if self._system_cache[0] == key:
            return self._system_cache[1]
        reduced = self.coeff_ball + self.vol_ext[:, None, None] * exterior
        K = assemble_stiffness(self.mesh, reduced)
        solver = LinearSolver(K, self.disc)
        self._system_cache = (key, solver)
        return solver

    def load(self, exterior, p):
        """Interior load from the coefficient contrast inside the ball."""
        return -self.flux_basis @ p + self.geom_basis @ (exterior @ p)

    # -- solving and energies ----------------------------------------------

    def solve(self, exterior, p, solver=None):
        """Solve one corrector problem; returns a CorrectorSolution."""
        p = np.asarray(p, dtype=float)
        exterior = np.asarray(exterior, dtype=float)
        if solver is None:
            solver = self.system(exterior)
        F = self.load(exterior, p)
        x0 = self._warm.get(p.tobytes()) if solver.method == "cg" else None
        x, stats = solver.solve(F, x0=x0)
        if solver.method == "cg":
            self._warm[p.tobytes()] = x
        w = self.mesh.expand(x)
        sol = self._finish(p, exterior, w, stats)
        self.solve_count += 1
        self.max_rel1_seen = max(self.max_rel1_seen, sol.residual_rel1)
        return sol

    def energies(self, exterior, p, w):
        """(energy, energy_alt, rel1) of any vertex vector w.

        energy is the contrast form (1/|B|)[int_B p.A(p + grad w) -
        int_B A_ext p . grad w]; energy_alt subtracts the full gradient
        quadratic forms instead. Both see w only through its gradient, so
        they are invariant under adding a constant to w.
        """
        p = np.asarray(p, dtype=float)
        exterior = np.asarray(exterior, dtype=float)
        grad_w = self.mesh.element_gradients(w)
        flux_ball = np.einsum("eab,eb->a", self.coeff_ball, grad_w)
        mean_grad = self.vol_ball @ grad_w
        pAp = p @ self.coeff_ball_total @ p
        j2 = (pAp + p @ flux_ball - (exterior @ p) @ mean_grad) / self.ball_measure
        ball_q = np.einsum("ea,eab,eb->", grad_w, self.coeff_ball, grad_w)
        ext_q = np.einsum("e,ea,ab,eb->", self.vol_ext, grad_w, exterior, grad_w)
        j3 = (pAp - ball_q - ext_q) / self.ball_measure
        rel1 = abs(j2 - j3) / (1.0 + abs(j2))
        return float(j2), float(j3), float(rel1)

    def _finish(self, p, exterior, w, stats):
        j2, j3, rel1 = self.energies(exterior, p, w)
        flags = ()
        if rel1 > self.rel1_threshold:
            flags = ("energy_identity",)
            log.warning("energy identity drift %.3e above threshold %.1e",
                        rel1, self.rel1_threshold)
        ball_mean = float(self.ball_mass @ w) / self.ball_measure
        return CorrectorSolution(p=p, exterior=exterior, w=w - ball_mean,
                                 energy=j2, energy_alt=j3, residual_rel1=rel1,
                                 stats=stats, ball_mean=ball_mean, flags=flags)

    @property
    def dim(self):
        return self.disc.dim

    def directions(self):
        return np.eye(self.disc.dim)

    def energy_matrix(self, exterior):
        """Symmetric matrix G with p.G(A)p = corrector energy at slope p.

        Diagonal entries come from unit slopes, off-diagonals from slope sums
        by polarization; d(d+1)/2 solves on one system.
        """
        d = self.disc.dim
        solver = self.system(exterior)
        G = np.zeros((d, d))
        sols = []
        for i in range(d):
            sol = self.solve(exterior, np.eye(d)[i], solver=solver)
            G[i, i] = sol.energy
            sols.append(sol)
        for i in range(d):
            for j in range(i + 1, d):
                pij = np.eye(d)[i] + np.eye(d)[j]
                sol = self.solve(exterior, pij, solver=solver)
                G[i, j] = G[j, i] = 0.5 * (sol.energy - G[i, i] - G[j, j])
                sols.append(sol)
        return G, sols

    def trace_objective(self, exterior):
        """Sum of unit-slope energies and its exact ascent direction.

        The derivative in a symmetric direction E, by the envelope theorem
        (the minimizer w is stationary), is
        ( int_ext grad w_i . E grad w_i - 2 int_B E e_i . grad w_i ) / |B|
        summed over unit slopes; the returned symmetric matrix represents
        that linear form under the Frobenius pairing.
        """
        d = self.disc.dim
        solver = self.system(exterior)
        value = 0.0
        grad = np.zeros((d, d))
        for i in range(d):
            sol = self.solve(exterior, np.eye(d)[i], solver=solver)
            value += sol.energy
            grad_w = self.mesh.element_gradients(sol.w)
            grad += np.einsum("e,ea,eb->ab", self.vol_ext, grad_w, grad_w)
            mean_grad = self.vol_ball @ grad_w
            outer = np.outer(np.eye(d)[i], mean_grad)
            grad -= outer + outer.T
        return value, grad / self.ball_measure

    def flux_average(self, exterior):
        """Ball average of the corrected flux A(x)(e_i + grad w_i), by columns.

        Not symmetric in general; that asymmetry is the point of keeping it.
        """
        d = self.disc.dim
        solver = self.system(exterior)
        out = np.empty((d, d))
        for i in range(d):
            sol = self.solve(exterior, np.eye(d)[i], solver=solver)
            grad_w = self.mesh.element_gradients(sol.w)
            flux = self.coeff_ball_total[:, i] + np.einsum(
                "eab,eb->a", self.coeff_ball, grad_w)
            out[:, i] = flux / self.ball_measure
        return out

    def mean_coefficient(self):
        """Arithmetic mean of the field over the ball (quadrature measure)."""
        return self.coeff_ball_total / self.ball_measure


# ---------------------------------------------------------------------------
# one-shot conveniences
# ---------------------------------------------------------------------------


def solve_embedded(field, exterior, p, disc, **kwargs):
    """Build the discrete problem and solve a single corrector."""
    return EmbeddedProblem(field, disc, **kwargs).solve(exterior, p)


def energy_matrix(field, exterior, disc):
    problem = EmbeddedProblem(field, disc)
    G, _ = problem.energy_matrix(exterior)
    return G


def flux_average_matrix(field, exterior, disc):
    return EmbeddedProblem(field, disc).flux_average(exterior)
