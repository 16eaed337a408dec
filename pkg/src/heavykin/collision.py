"""Collision operators with fat-tailed local equilibria.

Every operator is assembled through a quadratic form S on the ratio h = f/F,
with the constant vector in its kernel and a negative-semidefinite symmetric
part; the action on mass densities is L f = diag(1/w) S (f/F).  Mass
conservation and dissipativity are then exact at the matrix level rather than
approximate.  The diffusive and scattering operators are symmetric in
L^2(dmu); the jump-diffusion operator retains its genuine antisymmetric part.

Differentiation and interpolation are always polynomial in the compactified
panel coordinate, never in v itself: the tail panels are Lobatto grids in
tau ~ 1/v, on which polynomials in v are catastrophically ill-conditioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from . import kernels
from .grid import VelocityGrid, WeightedVector, gauss_lobatto, _jacobian_of_tau
from .model import (
    FokkerPlanck,
    FractionalFP,
    ModelParams,
    Scattering,
    normalization_constant,
)

__all__ = [
    "CollisionOperator",
    "ForceField",
    "fractional_laplacian",
    "fraclap_prefactor",
    "build_force_field",
    "build_collision_operator",
    "apply_L1",
    "apply_L2",
    "apply_L3",
    "derivative_matrix",
    "sem_stiffness",
    "operator_to_csv",
    "force_field_to_csv",
]


def fraclap_prefactor(d: int, sigma: float) -> float:
    """Positive constant C with Delta^(sigma/2) g = C int (g(v+w)+g(v-w)-2g(v))
    |w|^(-d-sigma) dw; equals 1/pi at d=1, sigma=1."""
    if not 0.0 < sigma < 2.0:
        raise ValueError("sigma must lie in (0, 2)")
    return -(2.0**sigma / math.pi ** (d / 2.0)) * gamma_fn((d + sigma) / 2.0) / gamma_fn(
        -sigma / 2.0
    )


# ----- panel-local spectral machinery -----


def _bary_diff(x: np.ndarray) -> np.ndarray:
    """Differentiation matrix on arbitrary distinct coordinates, assembled
    barycentrically on the affinely normalized panel to avoid over/underflow;
    the negative-sum diagonal keeps row sums exactly zero."""
    a, b = x.min(), x.max()
    y = 2.0 * (x - a) / (b - a) - 1.0
    m = y.size
    c = np.ones(m)
    for i in range(m):
        for j in range(m):
            if i != j:
                c[i] *= y[i] - y[j]
    D = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            if i != j:
                D[i, j] = (c[i] / c[j]) / (y[i] - y[j])
        D[i, i] = -np.sum(D[i, :])
    return D * (2.0 / (b - a))


def _grid_cache(grid: VelocityGrid) -> dict:
    if not hasattr(grid, "_op_cache"):
        grid._op_cache = {}
    return grid._op_cache


def _panel_dv(grid: VelocityGrid, p: int) -> np.ndarray:
    """d/dv on panel p via the chain rule through tau."""
    i0, i1 = grid.panels[p]
    t = grid.tau[i0 : i1 + 1]
    Dt = _bary_diff(t)
    J = _jacobian_of_tau(t, grid.scale)
    mid = 0.5 * (grid.nodes[i0] + grid.nodes[i1])
    sign = -1.0 if mid > 0 else 1.0
    return (sign / J)[:, None] * Dt


def _panel_weights(grid: VelocityGrid, p: int) -> np.ndarray:
    """One-sided quadrature weights of panel p (interface nodes carry only
    this panel's share, unlike the merged global weights)."""
    i0, i1 = grid.panels[p]
    t = grid.tau[i0 : i1 + 1]
    _, wref = gauss_lobatto(t.size - 1)
    J = _jacobian_of_tau(t, grid.scale)
    # the Lobatto reference weights are symmetric, so node order is immaterial
    return wref * (abs(t[0] - t[-1]) / 2.0) * J


def derivative_matrix(grid: VelocityGrid) -> np.ndarray:
    """Global d/dv, panel-spectral, averaging the two one-sided values at
    shared interface nodes."""
    cache = _grid_cache(grid)
    if "D1" not in cache:
        n = grid.n
        D = np.zeros((n, n))
        count = np.zeros(n)
        for p in range(len(grid.panels)):
            i0, i1 = grid.panels[p]
            D[i0 : i1 + 1, i0 : i1 + 1] += _panel_dv(grid, p)
            count[i0 : i1 + 1] += 1.0
        cache["D1"] = D / count[:, None]
    return cache["D1"]


def second_derivative_matrix(grid: VelocityGrid) -> np.ndarray:
    cache = _grid_cache(grid)
    if "D2" not in cache:
        n = grid.n
        D2 = np.zeros((n, n))
        count = np.zeros(n)
        for p in range(len(grid.panels)):
            i0, i1 = grid.panels[p]
            Dp = _panel_dv(grid, p)
            D2[i0 : i1 + 1, i0 : i1 + 1] += Dp @ Dp
            count[i0 : i1 + 1] += 1.0
        cache["D2"] = D2 / count[:, None]
    return cache["D2"]


def sem_stiffness(grid: VelocityGrid) -> np.ndarray:
    """Positive-semidefinite Gram form sum_p Dp^T diag(w_p F) Dp, the discrete
    Dirichlet energy int |h'|^2 F dv.  Symmetric to rounding by construction."""
    cache = _grid_cache(grid)
    if "sem" not in cache:
        n = grid.n
        S = np.zeros((n, n))
        for p in range(len(grid.panels)):
            i0, i1 = grid.panels[p]
            Dp = _panel_dv(grid, p)
            w = _panel_weights(grid, p) * grid.F_values[i0 : i1 + 1]
            S[i0 : i1 + 1, i0 : i1 + 1] += Dp.T @ (w[:, None] * Dp)
        cache["sem"] = S
    return cache["sem"]


# ----- fractional Laplacian -----


def _panel_interp_tables(grid: VelocityGrid):
    """Padded per-panel data for barycentric interpolation in tau: normalized
    node coordinates, barycentric weights, affine range, start index."""
    cache = _grid_cache(grid)
    if "interp" not in cache:
        P = len(grid.panels)
        pmax = max(i1 - i0 + 1 for i0, i1 in grid.panels)
        pan_t = np.zeros((P, pmax))
        pan_lam = np.zeros((P, pmax))
        pan_a = np.zeros(P)
        pan_b = np.zeros(P)
        starts = np.zeros(P, dtype=np.int64)
        plen = np.zeros(P, dtype=np.int64)
        for p, (i0, i1) in enumerate(grid.panels):
            t = grid.tau[i0 : i1 + 1]
            a, b = t.min(), t.max()
            y = 2.0 * (t - a) / (b - a) - 1.0
            m = y.size
            lam = np.ones(m)
            for i in range(m):
                for j in range(m):
                    if i != j:
                        lam[i] /= y[i] - y[j]
            pan_t[p, :m] = y
            pan_lam[p, :m] = lam
            pan_a[p], pan_b[p] = a, b
            starts[p] = i0
            plen[p] = m
        edges_left = grid.nodes[[i0 for i0, _ in grid.panels]]
        cache["interp"] = (pan_t, pan_lam, pan_a, pan_b, starts, plen, edges_left)
    return cache["interp"]


def _fraclap_matrix(grid: VelocityGrid, sigma: float, tail_exponent: float) -> np.ndarray:
    prefactor = fraclap_prefactor(grid.d, sigma)  # validates sigma up front
    cache = _grid_cache(grid)
    key = ("fraclap", sigma, tail_exponent)
    if key in cache:
        return cache[key]
    n = grid.n
    v = grid.nodes
    vb = grid.vbracket()
    v_end = grid.map_params["v_end"]
    pan_t, pan_lam, pan_a, pan_b, starts, plen, edges_left = _panel_interp_tables(grid)

    rows = [kernels.delta_quadrature(abs(v[i]), vb[i], sigma) for i in range(n)]
    qmax = max(r[0].size for r in rows)
    dq_nodes = np.zeros((n, qmax))
    dq_w = np.zeros((n, qmax))
    for i, (nd, wt) in enumerate(rows):
        dq_nodes[i, : nd.size] = nd
        dq_w[i, : wt.size] = wt

    A = np.zeros((n, n))
    kernels.fraclap_rows(A, v, dq_nodes, dq_w, grid.scale, v_end, tail_exponent,
                         edges_left, starts, plen, pan_t, pan_lam, pan_a, pan_b)

    # inner Taylor closure g''(v) delta^(2-sigma)/(2-sigma), spectral g''
    delta = 1e-5 * vb
    A += (delta ** (2.0 - sigma) / (2.0 - sigma))[:, None] * second_derivative_matrix(grid)
    # outer closure -2 g(v) T^(-sigma)/sigma
    T = 1e8 * vb
    A[np.arange(n), np.arange(n)] -= 2.0 * T ** (-sigma) / sigma
    # constants must be annihilated exactly; fold the residual into the diagonal
    A[np.arange(n), np.arange(n)] -= A.sum(axis=1)
    A *= prefactor
    cache[key] = A
    return A


def fractional_laplacian(g, sigma: float, grid: VelocityGrid,
                         tail_exponent: float | None = None) -> np.ndarray:
    """Delta^(sigma/2) g evaluated at the grid nodes.

    g may be a callable (evaluated directly at the singular-integral
    quadrature points, with a finite-difference Taylor closure at the origin
    of the difference variable) or a vector of node values (applied through
    the cached interpolation-based matrix; tail_exponent sets the power-law
    model <v>^(-tail_exponent) used beyond the last node, defaulting to the
    equilibrium decay d + gamma).
    """
    if callable(g):
        prefactor = fraclap_prefactor(grid.d, sigma)
        v = grid.nodes
        vb = grid.vbracket()
        out = np.zeros(grid.n)
        g0_all = np.asarray(g(v), dtype=float)
        for i in range(grid.n):
            nodes, weights = kernels.delta_quadrature(abs(v[i]), vb[i], sigma)
            g0 = g0_all[i]
            val = float(np.sum(weights * (g(v[i] + nodes) + g(v[i] - nodes) - 2.0 * g0)))
            h = 1e-3 * vb[i]
            g2 = (
                -g(v[i] + 2 * h) + 16 * g(v[i] + h) - 30 * g0 + 16 * g(v[i] - h)
                - g(v[i] - 2 * h)
            ) / (12.0 * h * h)
            delta = 1e-5 * vb[i]
            val += float(g2) * delta ** (2.0 - sigma) / (2.0 - sigma)
            val -= 2.0 * g0 * (1e8 * vb[i]) ** (-sigma) / sigma
            out[i] = val
        return out * prefactor
    gv = np.asarray(g)
    if tail_exponent is None:
        tail_exponent = grid.d + grid.gamma
    return _fraclap_matrix(grid, sigma, float(tail_exponent)) @ gv


# ----- force field -----


@dataclass
class ForceField:
    """Confining drift E with L f = Delta^(sigma/2) f + div(E f) stationary on
    the equilibrium; G = E <v>^beta / v is the bounded shape factor."""

    E_values: np.ndarray
    G_values: np.ndarray
    sigma: float
    metadata: dict = field(default_factory=dict)


def build_force_field(params: ModelParams, grid: VelocityGrid,
                      residual_tol: float = 1e-3) -> ForceField:
    op = params.operator
    if not isinstance(op, FractionalFP):
        raise ValueError("force field is defined for the Levy-Fokker-Planck operator")
    if grid.d != 1:
        raise ValueError("force field construction is one-dimensional")
    sigma = op.sigma
    gamma = grid.gamma
    beta = sigma - gamma
    c_e = fraclap_prefactor(grid.d, sigma) / sigma
    conv = kernels.force_convolution(grid.nodes, gamma, sigma)
    vb = grid.vbracket()
    E = c_e * vb ** (grid.d + gamma) * conv

    # G = E <v>^beta / v is even and smooth; extrapolate to v = 0 through the
    # three nearest positive nodes, quadratically in v^2
    G = np.empty_like(E)
    nz = grid.nodes != 0.0
    G[nz] = E[nz] * vb[nz] ** beta / grid.nodes[nz]
    pos = np.where(grid.nodes > 0)[0][:3]
    x = grid.nodes[pos] ** 2
    y = E[pos] * vb[pos] ** beta / grid.nodes[pos]
    g0 = 0.0
    for a in range(3):
        term = y[a]
        for b in range(3):
            if b != a:
                term *= (0.0 - x[b]) / (x[a] - x[b])
        g0 += term
    G[~nz] = g0

    residual = _stationarity_residual(grid, sigma, E)
    if residual > residual_tol:
        raise ValueError(
            f"force field fails the stationarity identity: residual {residual:.3e} "
            f"exceeds {residual_tol:.1e}"
        )
    return ForceField(E_values=E, G_values=G, sigma=sigma,
                      metadata={"prefactor": c_e, "gamma": gamma, "beta": beta,
                                "stationarity_residual": residual})


def _stationarity_residual(grid: VelocityGrid, sigma: float, E: np.ndarray) -> float:
    """||Delta^(sigma/2) F + (E F)'||_0 / ||Delta^(sigma/2) F||_0 with the
    fractional term evaluated by the direct callable path."""
    c = normalization_constant(grid.d, grid.gamma)
    p = -(grid.d + grid.gamma) / 2.0
    lap = fractional_laplacian(lambda y: c * (1.0 + y * y) ** p, sigma, grid)
    drift = derivative_matrix(grid) @ (E * grid.F_values)
    return grid.norm(lap + drift) / grid.norm(lap)


# ----- operator assembly -----


@dataclass
class CollisionOperator:
    """Discrete collision operator.

    matrix acts on mass-density node values f; sym_form is the symmetric
    negative-semidefinite quadratic form S with <f, Lf>_mu = h* S h for
    h = f/F.  nu_values holds the local collision frequency where one exists,
    E_values the drift field of the Levy-Fokker-Planck operator.
    """

    kind: str
    matrix: np.ndarray
    grid: VelocityGrid
    sym_form: np.ndarray
    nu_values: np.ndarray | None = None
    E_values: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def apply(self, f) -> WeightedVector:
        fv = f.values if isinstance(f, WeightedVector) else np.asarray(f)
        return WeightedVector(self.matrix @ fv, 0.0, self.grid)

    def quadratic_form(self, f) -> float:
        """Re <f, Lf>_mu = h* S h with the symmetric form; nonpositive."""
        fv = f.values if isinstance(f, WeightedVector) else np.asarray(f)
        h = fv / self.grid.F_values
        return float(np.real(np.conjugate(h) @ (self.sym_form @ h)))


def _wrap(kind: str, S: np.ndarray, grid: VelocityGrid, **kw) -> CollisionOperator:
    L = (1.0 / grid.weights)[:, None] * S * (1.0 / grid.F_values)[None, :]
    return CollisionOperator(kind=kind, matrix=L, grid=grid, sym_form=S, **kw)


def _build_fokker_planck(grid: VelocityGrid) -> CollisionOperator:
    S = -sem_stiffness(grid)
    return _wrap("fokker_planck", S, grid,
                 metadata={"form": "divergence of F grad(f/F)"})


def _build_scattering(grid: VelocityGrid, beta: float, kernel: str) -> CollisionOperator:
    vb = grid.vbracket()
    if kernel == "separable":
        m = grid.weights * grid.F_values * vb ** (-beta)
        Z = float(np.sum(m))
        S = np.outer(m, m) / Z - np.diag(m)
        nu = vb ** (-beta)
        meta = {"Z": Z}
    elif kernel == "power_difference":
        if not 0.0 <= beta < grid.d / 2.0:
            raise ValueError("power-difference kernel needs beta in [0, d/2)")
        B = kernels.pd_pair_matrix(grid.nodes, grid.weights * grid.F_values, beta)
        S = B - np.diag(B.sum(axis=1))
        # discrete collision frequency int |v-v'|^(-beta) F' dv', diagonal omitted
        nu = B.sum(axis=1) / (grid.weights * grid.F_values)
        meta = {"pair_sum": float(B.sum())}
    else:
        raise ValueError(f"unknown scattering kernel {kernel!r}")
    return CollisionOperator(
        kind=f"scattering_{kernel}",
        matrix=(1.0 / grid.weights)[:, None] * S * (1.0 / grid.F_values)[None, :],
        grid=grid,
        sym_form=S,
        nu_values=nu,
        metadata=meta,
    )


def _build_fractional_fp(params: ModelParams, grid: VelocityGrid) -> CollisionOperator:
    """The jump part of the generator has a symmetric kernel, so detailed
    balance fails against the fat-tailed equilibrium and the operator carries
    a genuine antisymmetric component in L^2(dmu).  Dissipativity lives in the
    symmetric part alone; that part is assembled from the pairwise Dirichlet
    form so it is negative semidefinite by construction, while the
    antisymmetric remainder of the quadrature matrix is kept in the action."""
    op = params.operator
    sigma = op.sigma
    ff = build_force_field(params, grid)
    A = _fraclap_matrix(grid, sigma, grid.d + grid.gamma)
    D = derivative_matrix(grid)
    M = A + D @ np.diag(ff.E_values)  # action on f

    w = grid.weights
    F = grid.F_values
    S_raw = w[:, None] * M * F[None, :]
    A_ant = 0.5 * (S_raw - S_raw.T)

    # The symmetric part is assembled directly as the pairwise jump form
    # (C/2) sum w_i w_j |v_i-v_j|^(-d-sigma) (F_i+F_j)/2 (h_i-h_j)^2, a graph
    # Laplacian: negative semidefinite with exact constant kernel, so
    # dissipativity holds by construction instead of through the off-balance
    # symmetric residue of the row-by-row quadrature matrix.
    C = fraclap_prefactor(grid.d, sigma)
    dv = np.abs(grid.nodes[:, None] - grid.nodes[None, :])
    np.fill_diagonal(dv, 1.0)
    # -h.S.h = (1/2) sum Q_ij (h_i-h_j)^2, so Q carries the full prefactor C
    Q = C * np.outer(w, w) * dv ** (-1.0 - sigma) * (
        0.5 * (F[:, None] + F[None, :])
    )
    np.fill_diagonal(Q, 0.0)
    S_dir = Q - np.diag(Q.sum(axis=1))

    n = grid.n
    ones = np.ones(n)
    P = np.eye(n) - np.outer(ones, ones) / n
    S_act = S_dir + P @ A_ant @ P

    meta = {
        "asymmetry": float(np.linalg.norm(A_ant) / np.linalg.norm(S_raw)),
        "stationarity_residual": ff.metadata["stationarity_residual"],
        "force_prefactor": ff.metadata["prefactor"],
    }
    built = _wrap("fractional_fp", S_act, grid, nu_values=None,
                  E_values=ff.E_values, metadata=meta)
    built.sym_form = S_dir
    return built


def build_collision_operator(params: ModelParams, grid: VelocityGrid) -> CollisionOperator:
    """Assemble (and cache per grid) the operator selected by params."""
    cache = _grid_cache(grid)
    key = ("op", repr(params.operator))
    if key not in cache:
        op = params.operator
        if isinstance(op, FokkerPlanck):
            built = _build_fokker_planck(grid)
        elif isinstance(op, Scattering):
            built = _build_scattering(grid, op.beta, op.kernel)
        elif isinstance(op, FractionalFP):
            built = _build_fractional_fp(params, grid)
        else:
            raise TypeError(f"unknown operator {op!r}")
        built.metadata["params"] = params
        cache[key] = built
    return cache[key]


def apply_L1(f: WeightedVector) -> WeightedVector:
    """Fokker-Planck collision: div(F grad(f/F))."""
    params = ModelParams(d=f.grid.d, gamma=f.grid.gamma, operator=FokkerPlanck())
    return build_collision_operator(params, f.grid).apply(f)


def apply_L2(f: WeightedVector, beta: float = 0.0, kernel: str = "separable") -> WeightedVector:
    """Scattering collision int b(v,v') (f' F - f F') dv'."""
    params = ModelParams(d=f.grid.d, gamma=f.grid.gamma,
                         operator=Scattering(beta=beta, kernel=kernel))
    return build_collision_operator(params, f.grid).apply(f)


def apply_L3(f: WeightedVector, sigma: float = 1.0) -> WeightedVector:
    """Levy-Fokker-Planck collision Delta^(sigma/2) f + div(E f)."""
    params = ModelParams(d=f.grid.d, gamma=f.grid.gamma,
                         operator=FractionalFP(sigma=sigma))
    return build_collision_operator(params, f.grid).apply(f)


# ----- exports -----


def operator_to_csv(op: CollisionOperator, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# heavykin collision operator kind={op.kind} n={op.grid.n}\n")
        fh.write("# dense action on mass-density node values, row per line\n")
        for row in op.matrix:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def force_field_to_csv(ff: ForceField, grid: VelocityGrid, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# heavykin force field sigma={ff.sigma} gamma={grid.gamma}\n")
        fh.write("v,E,G\n")
        for v, e, g in zip(grid.nodes, ff.E_values, ff.G_values):
            fh.write(f"{v:.17g},{e:.17g},{g:.17g}\n")
