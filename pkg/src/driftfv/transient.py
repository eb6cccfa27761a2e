"""Backward-Euler time stepping with a penalized decoupled fixed point.

Each implicit step is solved by Picard iteration of the map
(N, P) -> (N^, P^): first the potential is obtained from the linear Poisson
system with the current iterate, then two decoupled linear density systems
are solved whose coefficients (edge diffusion means, Bernoulli weights, and
the recombination factor in the isothermal case) are frozen at the iterate.
A penalty mu m(K)/(lambda^2 dt) on the diagonal keeps the systems strictly
diagonally dominant M-matrices, so the iterates stay nonnegative and, with
zero doping, inside the data bounds [m, M].
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import constitutive as cst
from . import sparse as la
from .flux import flux_coefficients
from .mesh import DiscreteFunction, Mesh
from .problem import (HypothesisError, Problem, State, evaluate_recombination,
                      make_state)


class InvariantError(RuntimeError):
    """A guaranteed discrete bound was violated beyond tolerance."""


@dataclass
class StepperConfig:
    dt: float = 1e-2
    t_end: float = 10.0
    fp_tol: float = 1e-10
    fp_max_iter: int = 200
    damping: float = 1.0          # Picard damping, auto-halved down to 0.125
    mu: Optional[float] = None    # penalty override; default dt*max(M^{n+1}, max density)
    dt_max: float = 1e-2          # bookkeeping bound for the decay constant
    check_m_matrices: bool = False
    entropy_floor: float = 0.0    # early stop threshold on E^n (0 = never)
    solver_method: str = "direct"

    def validate(self, problem: Problem) -> None:
        if self.dt <= 0.0:
            raise HypothesisError("time step must be positive")
        cinf = problem.doping_inf_norm
        if cinf > 0.0 and self.dt > problem.lambda2 / cinf:
            raise HypothesisError(
                f"time step {self.dt:g} exceeds lambda^2/||C||_inf = "
                f"{problem.lambda2 / cinf:g} required with nonzero doping")
        if not (0.0 < self.damping <= 1.0):
            raise HypothesisError("damping must lie in (0, 1]")


class BoundsTracker:
    """Density bound sequences m^n, M^n.

    m^n = m (1 + dt ||C||/lambda^2)^{-n}, M^n = M (1 - dt ||C||/lambda^2)^{-n};
    both reduce to the constants m, M when the doping vanishes.
    """

    def __init__(self, problem: Problem, dt: float):
        self.m = problem.m
        self.M = problem.M
        self.rho = dt * problem.doping_inf_norm / problem.lambda2

    def lower(self, n: int) -> float:
        return self.m * (1.0 + self.rho) ** (-n)

    def upper(self, n: int) -> float:
        return self.M * (1.0 - self.rho) ** (-n)


@dataclass
class StepReport:
    iterations: int
    increment: float
    residual: float
    damping: float
    m_matrix_ok: bool = True
    m_matrix_violations: list = field(default_factory=list)
    bound_excess: float = 0.0


class Stepper:
    """Owns the assembled operators for one problem/config pair."""

    def __init__(self, problem: Problem, config: StepperConfig):
        config.validate(problem)
        self.problem = problem
        self.config = config
        mesh = problem.mesh
        self.mesh = mesh
        self.law = problem.law
        self.lam2 = problem.lambda2
        self.mk = mesh.cell_measures

        self.L, self.D = la.tpfa_laplacian(mesh)
        self._poisson_lu = spla.splu(sp.csc_matrix(self.lam2 * self.L))
        self._poisson_b_dir = self.lam2 * (self.D @ problem.psi_dirichlet)

        # Per-edge index plumbing shared by every assembly.
        self.e_k = mesh.edge_cells[:, 0]
        self.e_l = mesh.edge_cells[:, 1]
        self.tau = mesh.edge_tau
        self.int_e = mesh.interior_edges
        self.dir_e = mesh.dirichlet_edges
        self.dir_idx = mesh.dirichlet_index[self.dir_e]

    # -- linear building blocks -------------------------------------------

    def solve_poisson(self, n_cells, p_cells) -> np.ndarray:
        """Potential from the linear Poisson system with given densities."""
        b = self._poisson_b_dir + self.mk * (p_cells - n_cells + self.problem.doping)
        psi = self._poisson_lu.solve(b)
        res = np.max(np.abs(self.lam2 * (self.L @ psi) - b), initial=0.0)
        if res > 1e-12 * max(1.0, np.max(np.abs(b), initial=0.0)):
            raise la.SolverError(f"Poisson residual {res:.3e} too large")
        return psi

    def _edge_other(self, cell_vals, dirichlet_vals):
        out = cell_vals[self.e_k].copy()
        out[self.int_e] = cell_vals[self.e_l[self.int_e]]
        out[self.dir_e] = dirichlet_vals[self.dir_idx]
        return out

    def _density_system(self, dens, dens_dir, dpsi, prev, mu, r0_diag, r0_rhs):
        """Assemble A, b for one linearized density system.

        ``dpsi`` must already carry the species sign (potential flipped for
        holes).  ``r0_diag``/``r0_rhs`` add the frozen recombination coupling.
        """
        other = self._edge_other(dens, dens_dir)
        dr = cst.dr_mean(self.law, dens[self.e_k], other)
        a_fwd, a_bwd = flux_coefficients(dpsi, dr)

        n = self.mesh.n_cells
        pen = self.mk / self.config.dt * (1.0 + mu / self.lam2)
        diag = pen + r0_diag
        it = self.int_e
        np.add.at(diag, self.e_k[it], self.tau[it] * a_fwd[it])
        np.add.at(diag, self.e_l[it], self.tau[it] * a_bwd[it])
        de = self.dir_e
        np.add.at(diag, self.e_k[de], self.tau[de] * a_fwd[de])

        rows = np.concatenate([np.arange(n), self.e_k[it], self.e_l[it]])
        cols = np.concatenate([np.arange(n), self.e_l[it], self.e_k[it]])
        vals = np.concatenate([diag, -self.tau[it] * a_bwd[it],
                               -self.tau[it] * a_fwd[it]])
        A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

        b = self.mk / self.config.dt * (mu / self.lam2 * dens + prev) + r0_rhs
        np.add.at(b, self.e_k[de], self.tau[de] * a_bwd[de] * dens_dir[self.dir_idx])
        return A, b

    def linearized_density_step(self, n_it, p_it, psi_cells, n_prev, p_prev, mu,
                                collect_reports=None):
        """One application of the decoupled linear density solves."""
        pr = self.problem
        dpsi = self._edge_other(psi_cells, pr.psi_dirichlet) - psi_cells[self.e_k]
        if pr.recombination.is_none:
            r0 = np.zeros(self.mesh.n_cells)
        else:
            r0 = pr.recombination.r0(n_it, p_it)
        A_n, b_n = self._density_system(n_it, pr.n_dirichlet, dpsi, n_prev, mu,
                                        self.mk * r0 * p_it, self.mk * r0)
        A_p, b_p = self._density_system(p_it, pr.p_dirichlet, -dpsi, p_prev, mu,
                                        self.mk * r0 * n_it, self.mk * r0)
        if self.config.check_m_matrices or collect_reports is not None:
            for name, A in (("A_N", A_n), ("A_P", A_p)):
                rep = la.check_m_matrix(A)
                if collect_reports is not None:
                    collect_reports.append((name, rep))
                if not rep.is_m_matrix:
                    raise InvariantError(
                        f"{name} is not an M-matrix: {rep.violations[:3]}")
        n_hat = la.solve(A_n, b_n, self.config.solver_method)
        p_hat = la.solve(A_p, b_p, self.config.solver_method)
        return n_hat, p_hat

    # -- nonlinear step ----------------------------------------------------

    def scheme_residuals(self, n_new, p_new, psi_cells, n_prev, p_prev):
        """Residuals of the implicit balance equations at given values."""
        pr = self.problem
        dpsi = self._edge_other(psi_cells, pr.psi_dirichlet) - psi_cells[self.e_k]
        r_term, _ = evaluate_recombination(pr.recombination, n_new, p_new)
        res = []
        for dens, dens_dir, prev, sgn in ((n_new, pr.n_dirichlet, n_prev, 1.0),
                                          (p_new, pr.p_dirichlet, p_prev, -1.0)):
            other = self._edge_other(dens, dens_dir)
            dr = cst.dr_mean(self.law, dens[self.e_k], other)
            a_fwd, a_bwd = flux_coefficients(sgn * dpsi, dr)
            f_edge = self.tau * (a_fwd * dens[self.e_k] - a_bwd * other)
            div = np.zeros(self.mesh.n_cells)
            np.add.at(div, self.e_k, f_edge)
            np.add.at(div, self.e_l[self.int_e], -f_edge[self.int_e])
            res.append(self.mk * (dens - prev) / self.config.dt + div + self.mk * r_term)
        return res[0], res[1]

    def advance(self, state: State, tracker: BoundsTracker) -> "tuple[State, StepReport]":
        cfg = self.config
        pr = self.problem
        n_prev = state.n.cell_values
        p_prev = state.p.cell_values
        n_it = n_prev.copy()
        p_it = p_prev.copy()
        step_index = state.step + 1

        upper_next = tracker.upper(step_index)
        mu = cfg.mu if cfg.mu is not None else cfg.dt * max(
            upper_next, float(np.max(n_it, initial=0.0)), float(np.max(p_it, initial=0.0)))

        omega = cfg.damping
        best_inc = np.inf
        inc = np.inf
        calm_streak = 0
        mm_reports = [] if cfg.check_m_matrices else None
        psi = self.solve_poisson(n_it, p_it)
        iterations = 0
        residual = np.inf
        for iterations in range(1, cfg.fp_max_iter + 1):
            n_hat, p_hat = self.linearized_density_step(
                n_it, p_it, psi, n_prev, p_prev, mu, mm_reports)
            n_new = omega * n_hat + (1.0 - omega) * n_it
            p_new = omega * p_hat + (1.0 - omega) * p_it
            inc = max(np.max(np.abs(n_new - n_it), initial=0.0),
                      np.max(np.abs(p_new - p_it), initial=0.0))
            # Damp only on significant growth (10x over the best increment so
            # far): the increment of a convergent iteration need not be
            # monotone, e.g. when the largest component moves between cells,
            # and halving on every raw bump stalls the contraction for good.
            if inc > 10.0 * best_inc:
                omega = max(omega / 2.0, 0.125)
                calm_streak = 0
            else:
                calm_streak += 1
                if calm_streak >= 5 and omega < cfg.damping:
                    omega = min(cfg.damping, 2.0 * omega)
                    calm_streak = 0
            best_inc = min(best_inc, inc)
            n_it, p_it = n_new, p_new
            psi = self.solve_poisson(n_it, p_it)
            if inc <= cfg.fp_tol:
                rn, rp = self.scheme_residuals(n_it, p_it, psi, n_prev, p_prev)
                residual = max(np.max(np.abs(rn), initial=0.0),
                               np.max(np.abs(rp), initial=0.0))
                if residual <= 10.0 * cfg.fp_tol:
                    break
        else:
            raise la.SolverError(
                f"fixed point did not converge in {cfg.fp_max_iter} iterations "
                f"(last increment {inc:.3e}, residual {residual:.3e})")

        lo = tracker.lower(step_index) - cfg.fp_tol
        hi = tracker.upper(step_index) + cfg.fp_tol
        excess = max(float(lo - min(n_it.min(), p_it.min())),
                     float(max(n_it.max(), p_it.max()) - hi), 0.0)
        if excess > 0.0:
            msg = (f"density bounds [{lo:.6g}, {hi:.6g}] violated by {excess:.3e} "
                   f"at step {step_index}")
            if pr.doping_inf_norm == 0.0 and pr.m > 0.0:
                raise InvariantError(msg)
            warnings.warn(msg, RuntimeWarning)

        report = StepReport(
            iterations=iterations, increment=float(inc),
            residual=float(residual), damping=omega,
            m_matrix_ok=mm_reports is None or all(r.is_m_matrix for _, r in mm_reports),
            m_matrix_violations=[] if mm_reports is None else
            [v for _, r in mm_reports for v in r.violations],
            bound_excess=excess)
        new_state = make_state(pr, n_it, p_it, psi,
                               step=step_index, time=state.time + cfg.dt)
        return new_state, report


# -- spec-level convenience wrappers --------------------------------------

def solve_poisson(problem: Problem, n_cells, p_cells) -> DiscreteFunction:
    stepper = Stepper(problem, StepperConfig())
    psi = stepper.solve_poisson(np.asarray(n_cells, float), np.asarray(p_cells, float))
    return DiscreteFunction(psi, problem.psi_dirichlet.copy())


def linearized_density_step(problem: Problem, n_it, p_it, psi_cells,
                            n_prev, p_prev, mu, config: StepperConfig = None):
    stepper = Stepper(problem, config or StepperConfig())
    return stepper.linearized_density_step(
        np.asarray(n_it, float), np.asarray(p_it, float),
        np.asarray(psi_cells, float), np.asarray(n_prev, float),
        np.asarray(p_prev, float), mu)


def advance_step(problem: Problem, state: State, config: StepperConfig,
                 tracker: BoundsTracker = None):
    stepper = Stepper(problem, config)
    return stepper.advance(state, tracker or BoundsTracker(problem, config.dt))


def initial_state(problem: Problem, config: StepperConfig = None) -> State:
    """State at time zero: initial densities and the matching potential."""
    stepper = Stepper(problem, config or StepperConfig())
    n0, p0 = problem.initial_state()
    psi0 = stepper.solve_poisson(n0, p0)
    return make_state(problem, n0, p0, psi0, step=0, time=0.0)


def run(problem: Problem, config: StepperConfig, equilibrium_state,
        sink=None, state_sink=None):
    """Execute floor(t_end/dt) steps, emitting one diagnostics record per level.

    ``equilibrium_state`` provides the reference for the entropy functionals;
    ``sink``, when given, is called with each DiagnosticsRecord, and
    ``state_sink`` with each State (including the initial one).  Returns the
    final state and the list of records.
    """
    from . import diagnostics as diag

    eq = (equilibrium_state.as_state()
          if hasattr(equilibrium_state, "as_state") else equilibrium_state)
    stepper = Stepper(problem, config)
    tracker = BoundsTracker(problem, config.dt)
    n0, p0 = problem.initial_state()
    state = make_state(problem, n0, p0, stepper.solve_poisson(n0, p0))

    records = []

    def emit(rec):
        records.append(rec)
        if sink is not None:
            sink(rec)

    emit(diag.make_record(state, eq, problem, fp_iters=0, prev_record=None))
    if state_sink is not None:
        state_sink(state)
    n_steps = int(np.floor(config.t_end / config.dt + 1e-9))
    for _ in range(n_steps):
        try:
            state, report = stepper.advance(state, tracker)
        except (la.SolverError, InvariantError) as exc:
            raise type(exc)(f"step {state.step + 1}: {exc}") from exc
        emit(diag.make_record(state, eq, problem,
                              fp_iters=report.iterations, prev_record=records[-1],
                              dt=config.dt, step_report=report))
        if state_sink is not None:
            state_sink(state)
        if config.entropy_floor > 0.0 and records[-1].entropy < config.entropy_floor:
            break
    return state, records
