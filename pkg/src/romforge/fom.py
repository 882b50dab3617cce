"""Finite-difference forward model for advection-diffusion on holed domains.

Solves

    -mu * lap(u) + kappa * c . grad(u) = f      in (0,1)^2 minus holes

on a uniform vertex grid, node (i, j) at (j/(n-1), i/(n-1)) with spacing
h = 1/(n-1). The Laplacian uses the 5-point stencil and the advection term
central differences; the benchmark transport coefficient kappa * |c| = 0.1
keeps the cell Peclet number far below one, so central differencing is
stable and the discrete operator stays an M-matrix.

Boundary conditions for the benchmark families:

* u = 0 on the horizontal sides y = 0 and y = 1,
* u = hole_value on hole boundaries (holes are Dirichlet islands; every
  node inside or on a hole is eliminated at the hole value),
* prescribed flux du/dnu = beta at x = 0 and du/dnu = -beta at x = 1,
  imposed to second order by ghost-node elimination.

Vertical-side nodes stay in the unknown set; top/bottom rows and hole
nodes are eliminated into the right-hand side. The sparse system is stored
in CSR form and solved with the BiCGSTAB iteration below (Jacobi
preconditioned); scipy supplies only the matrix container.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import geometry
from .geometry import DomainSpec, EquationParams
from .storage import SnapshotDataset


class DegenerateDomain(RuntimeError):
    """Domain has no interior unknowns at this resolution."""


class SolverDiverged(RuntimeError):
    """Linear solver failed to reach the residual tolerance."""


@dataclass(frozen=True)
class FomConfig:
    """Forward-model settings.

    ``grid_n`` is the number of nodes per side. ``tol`` is the relative
    residual tolerance of the linear solver; ``max_iter`` defaults to
    max(1000, 5 * unknown count).
    """

    grid_n: int = 64
    tol: float = 1e-8
    max_iter: int | None = None

    def __post_init__(self):
        if self.grid_n < 8:
            raise ValueError(f"grid_n must be at least 8, got {self.grid_n}")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class Field:
    """Solution values on the full n x n vertex grid.

    Known nodes (Dirichlet rows, hole nodes) carry their boundary values;
    node (i, j) sits at (j/(n-1), i/(n-1)).
    """

    values: np.ndarray = field(repr=False)

    @property
    def grid_n(self) -> int:
        return self.values.shape[0]


@dataclass
class LinearSystem:
    """Assembled sparse system over the unknown nodes.

    ``unknown_map`` is an n x n int array, -1 at known nodes and the
    row-major unknown index elsewhere; ``known_values`` holds the
    eliminated Dirichlet data on the full grid.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    unknown_map: np.ndarray
    known_values: np.ndarray
    grid_n: int
    tol: float
    max_iter: int | None

    @property
    def unknown_count(self) -> int:
        return self.rhs.size


def node_coords(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Meshgrid of node coordinates: X[i, j] = j/(n-1), Y[i, j] = i/(n-1)."""
    t = np.linspace(0.0, 1.0, n)
    return np.meshgrid(t, t)


def assemble_custom(
    n: int,
    mu: float = 1.0,
    advection: tuple[float, float] = (0.0, 0.0),
    advection_scale: float = 1.0,
    rhs=0.0,
    dirichlet_mask: np.ndarray | None = None,
    dirichlet_values: np.ndarray | None = None,
    neumann_x: tuple[float, float] | None = None,
    tol: float = 1e-8,
    max_iter: int | None = None,
) -> LinearSystem:
    """Assemble with arbitrary Dirichlet data and optional vertical-side flux.

    ``dirichlet_mask`` marks eliminated nodes (top and bottom rows must be
    covered); ``dirichlet_values`` supplies their values. ``neumann_x``
    gives prescribed du/dx as (left, right); when omitted, the vertical
    sides must be Dirichlet as well. ``rhs`` is a scalar or an n x n grid.
    """
    if dirichlet_mask is None:
        raise ValueError("dirichlet_mask is required")
    dmask = np.asarray(dirichlet_mask, dtype=bool)
    if dmask.shape != (n, n):
        raise ValueError(f"dirichlet_mask shape {dmask.shape} != ({n}, {n})")
    if dirichlet_values is None:
        dvals = np.zeros((n, n))
    else:
        dvals = np.asarray(dirichlet_values, dtype=np.float64)
    if not (dmask[0, :].all() and dmask[-1, :].all()):
        raise ValueError("top and bottom rows must be Dirichlet")
    if neumann_x is None and not (dmask[:, 0].all() and dmask[:, -1].all()):
        raise ValueError("vertical sides need either Dirichlet data or neumann_x")

    h = 1.0 / (n - 1)
    ax = advection_scale * advection[0]
    ay = advection_scale * advection[1]
    cc = 4.0 * mu / h**2
    ce = -mu / h**2 + ax / (2.0 * h)
    cw = -mu / h**2 - ax / (2.0 * h)
    cn = -mu / h**2 + ay / (2.0 * h)
    cs = -mu / h**2 - ay / (2.0 * h)

    unknown_map = np.full((n, n), -1, dtype=np.int64)
    ii, jj = np.nonzero(~dmask)
    k = ii.size
    if k == 0:
        raise DegenerateDomain(f"no unknown nodes on the {n}x{n} grid")
    unknown_map[ii, jj] = np.arange(k)

    f_grid = np.broadcast_to(np.asarray(rhs, dtype=np.float64), (n, n))
    b = f_grid[ii, jj].astype(np.float64).copy()

    rows = [np.arange(k)]
    cols = [np.arange(k)]
    vals = [np.full(k, cc)]
    g_left, g_right = neumann_x if neumann_x is not None else (0.0, 0.0)

    for di, dj, coef in ((0, 1, ce), (0, -1, cw), (1, 0, cn), (-1, 0, cs)):
        ti = ii + di
        tj = jj + dj
        if dj == 1:
            ghost = tj == n
            # du/dx = g_right at x = 1: ghost east = west + 2 h g_right
            tj = np.where(ghost, jj - 1, tj)
            b[ghost] -= coef * 2.0 * h * g_right
        elif dj == -1:
            ghost = tj < 0
            # du/dx = g_left at x = 0: ghost west = east - 2 h g_left
            tj = np.where(ghost, jj + 1, tj)
            b[ghost] += coef * 2.0 * h * g_left
        known = dmask[ti, tj]
        b[known] -= coef * dvals[ti[known], tj[known]]
        free = ~known
        rows.append(np.arange(k)[free])
        cols.append(unknown_map[ti[free], tj[free]])
        vals.append(np.full(free.sum(), coef))

    coo = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(k, k),
    )
    known_values = np.where(dmask, dvals, 0.0)
    return LinearSystem(
        matrix=coo.tocsr(),
        rhs=b,
        unknown_map=unknown_map,
        known_values=known_values,
        grid_n=n,
        tol=tol,
        max_iter=max_iter,
    )


def assemble(
    spec: DomainSpec, params: EquationParams, config: FomConfig
) -> LinearSystem:
    """Assemble the benchmark problem on the given domain.

    Transport direction c = (cos phi, sin phi) scaled by 0.1, source f = 1,
    u = 0 on the horizontal sides, u = hole_value on hole nodes, and
    du/dnu = +-beta on the vertical sides (outward normal), which in terms
    of du/dx is -beta on both.
    """
    n = config.grid_n
    xg, yg = node_coords(n)
    dmask = np.zeros((n, n), dtype=bool)
    dvals = np.zeros((n, n))
    for hole in spec.holes:
        inside = geometry.in_hole(hole, xg, yg)
        dmask |= inside
        dvals[inside] = params.hole_value
    dmask[0, :] = True
    dmask[-1, :] = True
    dvals[0, :] = 0.0
    dvals[-1, :] = 0.0
    return assemble_custom(
        n,
        mu=params.mu,
        advection=(float(np.cos(params.phi)), float(np.sin(params.phi))),
        advection_scale=0.1,
        rhs=1.0,
        dirichlet_mask=dmask,
        dirichlet_values=dvals,
        neumann_x=(-params.beta, -params.beta),
        tol=config.tol,
        max_iter=config.max_iter,
    )


def bicgstab(
    matrix: sp.csr_matrix,
    b: np.ndarray,
    tol: float,
    max_iter: int,
    precond_diag: np.ndarray,
) -> tuple[np.ndarray, int]:
    """Jacobi-preconditioned BiCGSTAB.

    Iterates until the recurrence residual drops below tol * ||b||, then
    verifies the true residual. Raises SolverDiverged on breakdown, on
    hitting ``max_iter``, or when the verified residual disagrees.
    """
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    target = tol * bnorm
    inv_diag = 1.0 / precond_diag
    x = np.zeros_like(b)
    r = b.copy()
    r0 = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    done = 0
    for it in range(1, max_iter + 1):
        rho_new = float(r0 @ r)
        if abs(rho_new) < 1e-300 or abs(omega) < 1e-300:
            raise SolverDiverged(f"BiCGSTAB breakdown at iteration {it}")
        beta = (rho_new / rho) * (alpha / omega)
        p = r + beta * (p - omega * v)
        phat = inv_diag * p
        v = matrix @ phat
        r0v = float(r0 @ v)
        if abs(r0v) < 1e-300:
            raise SolverDiverged(f"BiCGSTAB breakdown at iteration {it}")
        alpha = rho_new / r0v
        s = r - alpha * v
        if np.linalg.norm(s) <= target:
            x = x + alpha * phat
            done = it
            break
        shat = inv_diag * s
        t = matrix @ shat
        tt = float(t @ t)
        if tt == 0.0:
            raise SolverDiverged(f"BiCGSTAB breakdown at iteration {it}")
        omega = float(t @ s) / tt
        x = x + alpha * phat + omega * shat
        r = s - omega * t
        rho = rho_new
        if np.linalg.norm(r) <= target:
            done = it
            break
    if done == 0:
        rel = float(np.linalg.norm(b - matrix @ x)) / bnorm
        raise SolverDiverged(
            f"no convergence in {max_iter} iterations (relative residual {rel:.3e})"
        )
    true_rel = float(np.linalg.norm(b - matrix @ x)) / bnorm
    if true_rel > 10.0 * tol:
        raise SolverDiverged(
            f"recurrence residual converged but true residual is {true_rel:.3e}"
        )
    return x, done


def solve(system: LinearSystem) -> Field:
    """Solve the assembled system and scatter into the full grid."""
    max_iter = system.max_iter
    if max_iter is None:
        max_iter = max(1000, 5 * system.unknown_count)
    diag = system.matrix.diagonal()
    if (diag == 0.0).any():
        raise SolverDiverged("zero diagonal entry; Jacobi preconditioner undefined")
    x, _ = bicgstab(system.matrix, system.rhs, system.tol, max_iter, diag)
    values = system.known_values.copy()
    values[system.unknown_map >= 0] = x[system.unknown_map[system.unknown_map >= 0]]
    return Field(values=values)


def solve_benchmark(
    spec: DomainSpec, params: EquationParams, config: FomConfig
) -> Field:
    return solve(assemble(spec, params, config))


# ---------------------------------------------------------------------------
# benchmark families and dataset generation

ELLIPSE_SCHEMA = ("phi", "x0", "y0", "alpha", "a", "b", "beta")
HOLES_SCHEMA = ("phi", "beta")
EQUATION_PARAM_NAMES = ("phi", "beta")

_SAMPLERS = {
    "ellipse": geometry.sample_ellipse_domain,
    "holes": geometry.sample_holes_domain,
}
_SCHEMAS = {"ellipse": ELLIPSE_SCHEMA, "holes": HOLES_SCHEMA}


def problem_schema(problem: str) -> tuple[str, ...]:
    if problem not in _SCHEMAS:
        raise ValueError(f"unknown problem {problem!r}; choose from {sorted(_SCHEMAS)}")
    return _SCHEMAS[problem]


def sample_problem(problem: str, seed: int) -> tuple[DomainSpec, EquationParams]:
    problem_schema(problem)
    return _SAMPLERS[problem](seed)


def params_row(problem: str, spec: DomainSpec, params: EquationParams) -> np.ndarray:
    """Flatten a sample into its dataset parameter row."""
    if problem == "ellipse":
        hole = spec.holes[0]
        return np.array(
            [
                params.phi,
                hole.center[0],
                hole.center[1],
                hole.angle,
                hole.half_axes[0],
                hole.half_axes[1],
                params.beta,
            ],
            dtype=np.float32,
        )
    if problem == "holes":
        return np.array([params.phi, params.beta], dtype=np.float32)
    raise ValueError(f"unknown problem {problem!r}")


def equation_params_from_row(problem: str, row: np.ndarray) -> EquationParams:
    """Rebuild the scalar equation parameters from a dataset row."""
    schema = problem_schema(problem)
    named = dict(zip(schema, (float(v) for v in row)))
    hole_value = 1.0 if problem == "ellipse" else 2.0
    return EquationParams(phi=named["phi"], beta=named["beta"], hole_value=hole_value)


def generate_dataset(
    problem: str,
    count: int,
    grid_n: int,
    seed: int,
    config: FomConfig | None = None,
) -> SnapshotDataset:
    """Sample ``count`` problem instances and solve each one.

    Sample i uses sampler seed ``seed + i``; rows are written in index
    order, so the result depends only on (problem, count, grid_n, seed).
    Masks are the rasterized domain bitmaps at grid_n x grid_n.
    """
    if config is None:
        config = FomConfig(grid_n=grid_n)
    elif config.grid_n != grid_n:
        raise ValueError("config.grid_n disagrees with grid_n")
    schema = problem_schema(problem)
    params = np.zeros((count, len(schema)), dtype=np.float32)
    solutions = np.zeros((count, grid_n, grid_n), dtype=np.float32)
    masks = np.zeros((count, grid_n, grid_n), dtype=np.uint8)
    hole_counts = []
    for i in range(count):
        spec, eqp = sample_problem(problem, seed + i)
        try:
            field_i = solve_benchmark(spec, eqp, config)
        except SolverDiverged as exc:
            raise SolverDiverged(f"sample {i} (seed {seed + i}): {exc}") from exc
        params[i] = params_row(problem, spec, eqp)
        solutions[i] = field_i.values.astype(np.float32)
        masks[i] = geometry.rasterize(spec, grid_n, grid_n).pixels
        hole_counts.append(len(spec.holes))
    return SnapshotDataset(
        problem=problem,
        seed=seed,
        grid_hw=(grid_n, grid_n),
        param_schema=schema,
        params=params,
        masks=masks,
        solutions=solutions,
        hole_counts=tuple(hole_counts),
    )


def generate_bitmap_dataset(
    problem: str, count: int, grid_n: int, seed: int
) -> SnapshotDataset:
    """Sample domains and rasterize them without solving.

    Cheap generator for training shape autoencoders on large synthetic
    domain sets; per-sample seeding matches generate_dataset.
    """
    schema = problem_schema(problem)
    params = np.zeros((count, len(schema)), dtype=np.float32)
    masks = np.zeros((count, grid_n, grid_n), dtype=np.uint8)
    hole_counts = []
    for i in range(count):
        spec, eqp = sample_problem(problem, seed + i)
        params[i] = params_row(problem, spec, eqp)
        masks[i] = geometry.rasterize(spec, grid_n, grid_n).pixels
        hole_counts.append(len(spec.holes))
    return SnapshotDataset(
        problem=problem,
        seed=seed,
        grid_hw=(grid_n, grid_n),
        param_schema=schema,
        params=params,
        masks=masks,
        solutions=None,
        hole_counts=tuple(hole_counts),
    )


def mirror_extend(dataset: SnapshotDataset) -> SnapshotDataset:
    """Append the vertical mirror image of every sample.

    Reflecting y -> 1 - y maps a snapshot onto an equally valid one: the
    hole samplers are mirror symmetric, both walls carry u = 0, the side
    fluxes are even under the reflection, and the parameters remap in
    closed form (phi -> 2 pi - phi; an ellipse center y0 -> 1 - y0 with
    tilt alpha -> -alpha). Doubling a training set this way costs no
    extra solves, which matters most for the regressor on small runs.
    """
    cols = {name: i for i, name in enumerate(dataset.param_schema)}
    flipped = dataset.params.copy()
    flipped[:, cols["phi"]] = (
        geometry.TWO_PI - flipped[:, cols["phi"]]
    ) % geometry.TWO_PI
    if "y0" in cols:
        flipped[:, cols["y0"]] = 1.0 - flipped[:, cols["y0"]]
    if "alpha" in cols:
        flipped[:, cols["alpha"]] = (-flipped[:, cols["alpha"]]) % np.pi
    solutions = None
    if dataset.solutions is not None:
        solutions = np.concatenate(
            [dataset.solutions, dataset.solutions[:, ::-1, :]]
        )
    counts = None
    if dataset.hole_counts is not None:
        counts = dataset.hole_counts + dataset.hole_counts
    return SnapshotDataset(
        problem=dataset.problem,
        seed=dataset.seed,
        grid_hw=dataset.grid_hw,
        param_schema=dataset.param_schema,
        params=np.concatenate([dataset.params, flipped]),
        masks=np.concatenate([dataset.masks, dataset.masks[:, ::-1, :]]),
        solutions=solutions,
        hole_counts=counts,
    )
