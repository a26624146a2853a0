"""Incremental staggered solver: alternating convex minimizations in the
displacement and damage fields, with algorithmic irreversibility and energy
bookkeeping over a quasi-static load program."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly, material
from .assembly import SparseSystem
from .material import MaterialParams
from .mesh import Mesh


class SolverError(RuntimeError):
    """Linear-solver breakdown; carries the residual history when iterative."""

    def __init__(self, message: str, residuals: list[float] | None = None):
        super().__init__(message)
        self.residuals = residuals or []


class NumericalFailureError(RuntimeError):
    """A field picked up NaN/Inf values."""


@dataclass(frozen=True)
class StaggeredConfig:
    """Alternation control.

    tol_u / tol_d are absolute norms on iterate differences (L2 for the
    displacement, Linf for damage); tol_u defaults to 1e-6 times the mesh
    diameter. `relative_norms` switches both to norms relative to the
    current iterate. `project_each_iteration` applies the irreversibility
    projection after every inner damage solve rather than only at step end.
    """

    tol_u: float | None = None
    tol_d: float = 1e-4
    max_iterations: int = 500
    linear_solver: str = "cg"  # "cg" or "direct"
    linear_tol: float = 1e-10
    relative_norms: bool = False
    project_each_iteration: bool = True
    # "active_set" solves the damage subproblem as an exact bound-constrained
    # minimization (irreversibility floor and upper bound 1); "project"
    # clamps the unconstrained solution instead, which can raise the energy
    # during brutal crack growth.
    damage_solve: str = "active_set"
    # Re-assemble the elasticity system until the tension/compression branch
    # at every quadrature point is consistent with the solved strain.
    sign_stabilization: int = 5

    def __post_init__(self):
        if self.tol_u is not None and self.tol_u <= 0.0:
            raise ValueError("tol_u must be positive")
        if self.tol_d <= 0.0:
            raise ValueError("tol_d must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.linear_solver not in ("cg", "direct"):
            raise ValueError("linear_solver must be 'cg' or 'direct'")
        if self.damage_solve not in ("active_set", "project"):
            raise ValueError("damage_solve must be 'active_set' or 'project'")
        if self.sign_stabilization < 1:
            raise ValueError("sign_stabilization must be at least 1")

    def displacement_tol(self, mesh: Mesh) -> float:
        return self.tol_u if self.tol_u is not None else 1e-6 * mesh.diameter()


@dataclass(frozen=True)
class BoundaryCondition:
    """One prescribed displacement component on a named boundary set (mm)."""

    set_name: str
    component: int
    value: float


@dataclass(frozen=True)
class LoadProgram:
    """Ordered Dirichlet load steps and output cadence.

    `reaction_set` / `reaction_component` name the boundary whose reaction
    is recorded each step; `snapshot_every` > 0 stores field snapshots every
    that many steps (the final step is always stored).
    """

    steps: tuple[tuple[BoundaryCondition, ...], ...]
    reaction_set: str = "top"
    reaction_component: int = 1
    snapshot_every: int = 0

    @staticmethod
    def monotonic(
        final: float,
        increment: float,
        driven: BoundaryCondition,
        fixed: tuple[BoundaryCondition, ...] = (),
        snapshot_every: int = 0,
    ) -> "LoadProgram":
        """Ramp the driven component from `increment` to `final` in uniform steps."""
        if increment <= 0.0 or final <= 0.0:
            raise ValueError("final displacement and increment must be positive")
        n_steps = round(final / increment)
        values = np.linspace(increment, final, n_steps)
        steps = tuple(
            (replace(driven, value=float(v)),) + tuple(fixed) for v in values
        )
        return LoadProgram(
            steps=steps,
            reaction_set=driven.set_name,
            reaction_component=driven.component,
            snapshot_every=snapshot_every,
        )


@dataclass(frozen=True)
class EnergyReport:
    """Stored and dissipated energies of a converged state (MPa mm^3)."""

    elastic: float
    dissipated: float

    @property
    def total(self) -> float:
        return self.elastic + self.dissipated


@dataclass
class FieldState:
    """Nodal displacement and damage at one load step."""

    u: np.ndarray
    alpha: np.ndarray

    @staticmethod
    def zeros(mesh: Mesh) -> "FieldState":
        return FieldState(
            u=np.zeros(mesh.n_nodes * mesh.dim), alpha=np.zeros(mesh.n_nodes)
        )


@dataclass(frozen=True)
class StepRecord:
    step: int
    applied_displacement: float
    reaction: float
    energy: EnergyReport
    iterations: int
    converged: bool
    clamped_nodes: int  # nodes held at the upper damage bound (summed over iterations)
    max_energy_increase: float  # worst half-step increase of the total energy


@dataclass
class RunHistory:
    records: list[StepRecord] = field(default_factory=list)
    snapshots: list[tuple[int, np.ndarray, np.ndarray]] = field(default_factory=list)
    error: str | None = None

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.records)


def solve_linear(system: SparseSystem, config: StaggeredConfig | None = None):
    """Solve a Dirichlet-imposed symmetric system.

    Diagonally preconditioned CG by default; sparse LU when the config says
    "direct". Raises SolverError on breakdown, non-convergence, or a
    (numerically) singular matrix.
    """
    config = config or StaggeredConfig()
    K, b = system.matrix, system.rhs
    diag = K.diagonal()
    if np.any(diag <= 0.0) or diag.min() <= 1e-12 * diag.max():
        raise SolverError("matrix diagonal indicates a (numerically) singular system")
    if config.linear_solver == "direct":
        try:
            x = spla.splu(K.tocsc()).solve(b)
        except RuntimeError as exc:
            raise SolverError(f"direct factorization failed: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise SolverError("direct solve produced non-finite values")
        _check_residual(K, x, b)
        return x
    residuals: list[float] = []
    M = spla.LinearOperator(K.shape, matvec=lambda v: v / diag)
    x, info = spla.cg(
        K,
        b,
        rtol=config.linear_tol,
        atol=0.0,
        maxiter=20 * K.shape[0],
        M=M,
        callback=lambda xk: residuals.append(float(np.linalg.norm(b - K @ xk))),
    )
    if info != 0 or not np.all(np.isfinite(x)):
        raise SolverError(
            f"conjugate gradients failed to converge (info={info})", residuals
        )
    _check_residual(K, x, b, residuals)
    return x


def _check_residual(K, x, b, residuals=None):
    """Reject solutions whose residual betrays a numerically singular solve."""
    Kx = K @ x
    scale = np.linalg.norm(b) + np.linalg.norm(Kx)
    if np.linalg.norm(b - Kx) > 1e-6 * max(scale, 1e-30):
        raise SolverError(
            "linear solve produced a large residual (singular system?)", residuals
        )


def solve_bound_constrained(
    system: SparseSystem, lower, upper, config: StaggeredConfig | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Minimize 1/2 x^T K x - b^T x subject to nodewise lower <= x <= upper.

    Primal active-set iteration: dofs that violate a bound are pinned at it,
    the reduced system is re-solved, and pinned dofs whose gradient has the
    wrong sign are released, until the optimality conditions hold. Returns
    the minimizer and the mask of dofs held at the upper bound.
    """
    config = config or StaggeredConfig()
    K, b = system.matrix, system.rhs
    n = system.n_dofs
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (n,))
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (n,))
    if np.any(lower > upper):
        raise ValueError("lower bound exceeds upper bound")
    grad_tol = 1e-9 * max(float(np.abs(b).max()), 1.0)

    try:
        x = solve_linear(system, config)
        at_lower = x < lower
        at_upper = x > upper
        if not (at_lower.any() or at_upper.any()):
            return np.clip(x, lower, upper), at_upper
    except SolverError:
        # Unconstrained system is singular (e.g. no drive and a pure-gradient
        # operator): start from everything pinned at the lower bound and let
        # the release test free only the dofs the gradient actually pushes.
        at_lower = np.ones(n, dtype=bool)
        at_upper = np.zeros(n, dtype=bool)
    for _ in range(100):
        active = at_lower | at_upper
        if active.any():
            pinned = np.where(at_upper, upper, np.where(at_lower, lower, 0.0))
            keep = sp.diags((~active).astype(float))
            reduced_matrix = (keep @ K @ keep + sp.diags(active.astype(float))).tocsr()
            reduced_rhs = b - K @ pinned
            reduced_rhs[active] = pinned[active]
            reduced = replace(
                system,
                matrix=reduced_matrix,
                rhs=reduced_rhs,
                constrained=system.constrained | active,
            )
            x = solve_linear(reduced, config)
        else:
            x = solve_linear(system, config)
        grad = K @ x - b
        grow_upper = ~at_upper & (x > upper + 1e-12)
        grow_lower = ~at_lower & (x < lower - 1e-12)
        drop_upper = at_upper & (grad > grad_tol)
        drop_lower = at_lower & (grad < -grad_tol)
        if not (
            grow_upper.any() or grow_lower.any() or drop_upper.any() or drop_lower.any()
        ):
            break
        at_upper = (at_upper | grow_upper) & ~drop_upper
        at_lower = (at_lower | grow_lower) & ~drop_lower
    else:
        raise SolverError("bound-constrained solve: active set failed to settle")
    return np.clip(x, lower, upper), at_upper


def enforce_irreversibility(alpha_candidate, alpha_previous) -> np.ndarray:
    """Nodewise max against the previous damage, clamped to [0, 1]."""
    cand = np.asarray(alpha_candidate, dtype=float)
    prev = np.asarray(alpha_previous, dtype=float)
    if cand.shape != prev.shape:
        raise ValueError("damage vectors must have the same length")
    return np.clip(np.maximum(cand, prev), 0.0, 1.0)


def compute_energies(
    mesh: Mesh, params: MaterialParams, u_nodal, alpha_nodal
) -> EnergyReport:
    """Quadrature evaluation of the stored and dissipated energy."""
    data = assembly.element_data(mesh)
    strains = assembly.quadrature_strains(mesh, np.asarray(u_nodal, dtype=float))
    state = material.split(strains, params)
    alpha = np.asarray(alpha_nodal, dtype=float)
    alpha_q = np.einsum("qk,nk->nq", data.N, alpha[data.scalar_dofs])
    f = material.degradation(alpha_q)
    elastic = float(np.sum((f * state.psi_pos + state.psi_neg) * data.wdet))

    w, _ = material.local_dissipation(alpha_q, params)
    grad = np.einsum("nqdk,nk->nqd", data.B_s, alpha[data.scalar_dofs])
    grad_sq = np.sum(grad**2, axis=-1)
    dissipated = float(np.sum((w + 0.5 * params.eta**2 * grad_sq) * data.wdet))
    return EnergyReport(elastic=elastic, dissipated=dissipated)


def _apply_bcs(system: SparseSystem, bcs) -> SparseSystem:
    for bc in bcs:
        system = assembly.apply_dirichlet(system, bc.set_name, bc.component, bc.value)
    return system


def _constrained_guess(mesh: Mesh, u: np.ndarray, bcs) -> np.ndarray:
    """Previous displacement with the new prescribed values substituted."""
    u = u.copy()
    for bc in bcs:
        dofs = mesh.boundary_set(bc.set_name) * mesh.dim + bc.component
        u[dofs] = bc.value
    return u


def _tension_mask(mesh: Mesh, u_nodal: np.ndarray) -> np.ndarray:
    """Quadrature-point mask of positive volumetric strain."""
    strains = assembly.quadrature_strains(mesh, u_nodal)
    return strains[..., : mesh.dim].sum(axis=-1) > 0.0


def staggered_step(
    mesh: Mesh,
    params: MaterialParams,
    state: FieldState,
    step_bcs,
    config: StaggeredConfig,
) -> tuple[FieldState, StepRecord]:
    """One load step of the alternate-minimization loop.

    Repeats [elasticity solve with frozen damage -> damage solve with frozen
    displacement, under the irreversibility bound] until the
    iterate-difference norms fall below both tolerances, or flags
    non-convergence at the iteration cap. The returned record's step index
    and applied displacement are filled by `run_load_program`.
    """
    tol_u = config.displacement_tol(mesh)
    alpha_floor = state.alpha.copy()
    u = _constrained_guess(mesh, state.u, step_bcs)
    alpha = state.alpha.copy()

    energy = compute_energies(mesh, params, u, alpha).total
    max_increase = 0.0
    clamped = 0
    converged = False
    k = 0
    while k < config.max_iterations:
        k += 1
        u_prev, alpha_prev = u, alpha

        # The tension/compression branch is frozen from the previous strain;
        # re-solve until the branch chosen matches the strain it produced.
        for _ in range(config.sign_stabilization):
            mask_used = _tension_mask(mesh, u)
            sys_u = assembly.assemble_elasticity(mesh, params, alpha, u_nodal=u)
            sys_u = _apply_bcs(sys_u, step_bcs)
            u = solve_linear(sys_u, config)
            if not np.all(np.isfinite(u)):
                raise NumericalFailureError("displacement field contains NaN/Inf")
            if np.array_equal(_tension_mask(mesh, u), mask_used):
                break
        new_energy = compute_energies(mesh, params, u, alpha).total
        max_increase = max(max_increase, new_energy - energy)
        energy = new_energy

        sys_a = assembly.assemble_damage(mesh, params, u)
        floor = alpha_floor if config.project_each_iteration else np.zeros_like(alpha)
        if config.damage_solve == "active_set":
            alpha, at_upper = solve_bound_constrained(sys_a, floor, 1.0, config)
            clamped += int(np.count_nonzero(at_upper))
        else:
            raw = solve_linear(sys_a, config)
            clamped += int(np.count_nonzero(raw > 1.0))
            alpha = enforce_irreversibility(raw, floor)
        if not np.all(np.isfinite(alpha)):
            raise NumericalFailureError("damage field contains NaN/Inf")
        new_energy = compute_energies(mesh, params, u, alpha).total
        max_increase = max(max_increase, new_energy - energy)
        energy = new_energy

        du = np.linalg.norm(u - u_prev)
        da = np.abs(alpha - alpha_prev).max() if len(alpha) else 0.0
        if config.relative_norms:
            du /= max(np.linalg.norm(u), 1e-30)
            da /= max(np.abs(alpha).max(), 1e-30)
        if du <= tol_u and da <= config.tol_d:
            converged = True
            break

    if not config.project_each_iteration:
        alpha = enforce_irreversibility(alpha, alpha_floor)

    new_state = FieldState(u=u, alpha=alpha)
    record = StepRecord(
        step=-1,
        applied_displacement=0.0,
        reaction=0.0,
        energy=compute_energies(mesh, params, u, alpha),
        iterations=k,
        converged=converged,
        clamped_nodes=clamped,
        max_energy_increase=max_increase,
    )
    return new_state, record


def run_load_program(
    mesh: Mesh,
    params: MaterialParams,
    program: LoadProgram,
    config: StaggeredConfig | None = None,
    initial_state: FieldState | None = None,
) -> RunHistory:
    """Execute every load step in order, recording reactions and energies.

    A failed step aborts the run; the partial history is returned with the
    error message attached. Snapshots follow the program's cadence.
    """
    config = config or StaggeredConfig()
    state = initial_state or FieldState.zeros(mesh)
    history = RunHistory()
    for i, bcs in enumerate(program.steps, start=1):
        applied = next(
            (
                bc.value
                for bc in bcs
                if bc.set_name == program.reaction_set
                and bc.component == program.reaction_component
            ),
            max((abs(bc.value) for bc in bcs), default=0.0),
        )
        try:
            state, record = staggered_step(mesh, params, state, bcs, config)
            reaction = assembly.reaction_force(
                mesh,
                params,
                state.alpha,
                state.u,
                program.reaction_set,
                program.reaction_component,
            )
        except (SolverError, NumericalFailureError) as exc:
            history.error = f"step {i}: {exc}"
            break
        history.records.append(
            replace(record, step=i, applied_displacement=applied, reaction=reaction)
        )
        last = i == len(program.steps)
        if program.snapshot_every > 0 and (i % program.snapshot_every == 0 or last):
            history.snapshots.append((i, state.u.copy(), state.alpha.copy()))
    return history
