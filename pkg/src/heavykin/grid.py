"""Velocity-space discretization adapted to algebraic tails.

The d=1 grid is a composite Gauss-Lobatto rule in the variable u of the
algebraic map v = scale * u / (1 - u^2), with panel edges placed geometrically
in v out to a tail edge V_end chosen from gamma so the truncated equilibrium
mass is a few 1e-12. Panels share endpoint nodes (the rule includes v = 0 and
the outer edges), which lets the collision operators assemble exactly
conservative flux forms on the same nodes the quadrature uses.

Numerically everything near u = 1 is carried in tau = 1 - u, which stays
accurate down to tail edges of 1e12 and beyond where u itself would round to 1.

Moments against the equilibrium get an analytic incomplete-beta closure for the
mass beyond V_end; raw node sums alone lose a visible fraction of any moment
with exponent near gamma. Panel edges depend only on (gamma, scale), never on
n, so refining n compares pure quadrature-order improvement.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special as sp

from .model import ModelParams, bracket, equilibrium, normalization_constant

# One-sided equilibrium mass allowed beyond the outermost panel edge.
TAIL_MASS_TARGET = 3e-12
NORMALIZATION_TOL = 1e-10
# Panels per side: 3 core panels plus this many geometric tail panels.
N_GEO_PANELS = 13


@lru_cache(maxsize=128)
def gauss_lobatto(p: int):
    """Reference Gauss-Lobatto-Legendre rule of order p (p+1 nodes on [-1, 1])."""
    if p < 1:
        raise ValueError("Lobatto order must be >= 1")
    if p == 1:
        return np.array([-1.0, 1.0]), np.array([1.0, 1.0])
    interior, _ = sp.roots_jacobi(p - 1, 1.0, 1.0)
    x = np.concatenate([[-1.0], np.sort(interior), [1.0]])
    leg = np.zeros(p + 1)
    leg[p] = 1.0
    pn = np.polynomial.legendre.legval(x, leg)
    w = 2.0 / (p * (p + 1) * pn**2)
    return x, w


def _tau_of_v(v: float, s: float) -> float:
    """tau = 1 - u at velocity v > 0, computed without cancellation."""
    q = s / v
    return 2.0 * q / (2.0 + q + math.hypot(q, 2.0))


def _v_of_tau(tau, s):
    """Map back: v = s (1-tau) / (tau (2-tau))."""
    t = tau * (2.0 - tau)
    return s * (1.0 - tau) / t


def _jacobian_of_tau(tau, s):
    """dv/du = s (1+u^2)/(1-u^2)^2 expressed through t = 1-u^2 = tau(2-tau)."""
    t = tau * (2.0 - tau)
    return s * (2.0 - t) / t**2


def tail_edge(gamma: float, target: float = TAIL_MASS_TARGET) -> float:
    """Outer panel edge V_end with two-sided equilibrium tail mass <= target."""
    c = normalization_constant(1, gamma)
    v = (2.0 * c / (gamma * target)) ** (1.0 / gamma)
    return min(v, 1e100)


def _panel_layout(gamma: float, s: float, n: int):
    """Deterministic panel edges (in v, positive side) and per-panel orders."""
    v_end = tail_edge(gamma)
    core = [0.0, s / 4.0, s, 3.0 * s]
    ratio = (v_end / core[-1]) ** (1.0 / N_GEO_PANELS)
    edges = core + [core[-1] * ratio ** (i + 1) for i in range(N_GEO_PANELS)]
    edges[-1] = v_end

    budget = max((n - 1) // 2, 2 * (len(edges) - 1))
    p_base = max(budget // (len(edges) - 1), 2)
    # core panels sit nearest the integrand's complex singularities at |v|=1
    # and carry most of the mass, so they get the largest share; the two
    # innermost geometric panels borrow order from the outermost two, whose
    # mass contribution is negligible
    p_core = max(2, int(0.85 * p_base))
    left = budget - 3 * p_core
    p_geo = max(left // N_GEO_PANELS, 2)
    rem = left - p_geo * N_GEO_PANELS
    orders_geo = [p_geo + (1 if j < rem else 0) for j in range(N_GEO_PANELS)]
    for j in (0, 1):
        k = N_GEO_PANELS - 1 - j
        if orders_geo[k] > 2:
            orders_geo[k] -= 1
            orders_geo[j] += 1
    return edges, [p_core] * 3 + orders_geo


@dataclass
class WeightedVector:
    """Complex node values regarded as an element of L^2(<v>^k dmu)."""

    values: np.ndarray
    weight_exponent: float
    grid: "VelocityGrid"

    def norm(self) -> float:
        return self.grid.weighted_norm(self.values, self.weight_exponent)


@dataclass
class VelocityGrid:
    """Quadrature nodes/weights with the tabulated equilibrium.

    weights integrate against dv; mu_weights against dmu = dv/F. panels holds
    inclusive (first, last) node-index ranges of the Lobatto panels, adjacent
    panels sharing their interface node.
    """

    nodes: np.ndarray
    weights: np.ndarray
    F_values: np.ndarray
    mu_weights: np.ndarray
    d: int
    gamma: float
    scale: float
    map_params: dict
    panels: list = field(default_factory=list)
    tau: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.nodes.size

    def vbracket(self) -> np.ndarray:
        return bracket(self.nodes)

    def equilibrium_mass(self) -> float:
        return float(self.weights @ self.F_values)

    # ----- inner products and norms -----

    def _values(self, f):
        return f.values if isinstance(f, WeightedVector) else np.asarray(f)

    def inner(self, f, g) -> complex:
        """Discrete <f,g> = int conj(f) g dmu."""
        for h in (f, g):
            if isinstance(h, WeightedVector) and h.grid is not self:
                raise ValueError("inner product requires vectors on the same grid")
        fv, gv = self._values(f), self._values(g)
        return complex(np.sum(self.mu_weights * np.conjugate(fv) * gv))

    def weighted_norm(self, f, k: float = 0.0) -> float:
        """||f||_k = (int |f|^2 <v>^k dmu)^(1/2)."""
        fv = self._values(f)
        val = np.sum(self.mu_weights * self.vbracket() ** k * np.abs(fv) ** 2)
        return float(np.sqrt(val))

    def norm(self, f) -> float:
        return self.weighted_norm(f, 0.0)

    # ----- projections -----

    def project_pi(self, f):
        """Pi f = rho_f F with the discrete normalizer, so Pi is exactly
        orthogonal and idempotent in the discrete scalar product."""
        fv = self._values(f)
        rho = np.sum(self.weights * fv) / self.equilibrium_mass()
        out = rho * self.F_values.astype(np.result_type(fv, float))
        if isinstance(f, WeightedVector):
            return WeightedVector(out, f.weight_exponent, self)
        return out

    def project_pi_k(self, f, k: float):
        """Weighted projection Pi_k f = (int <v>^k f dv / int <v>^k F dv) F."""
        if k >= self.gamma:
            raise ValueError(f"projection weight k={k} must be < gamma={self.gamma}")
        fv = self._values(f)
        wk = self.weights * self.vbracket() ** k
        rho = np.sum(wk * fv) / np.sum(wk * self.F_values)
        out = rho * self.F_values.astype(np.result_type(fv, float))
        if isinstance(f, WeightedVector):
            return WeightedVector(out, f.weight_exponent, self)
        return out

    # ----- equilibrium moments -----

    def moment(self, k: float) -> float:
        """int <v>^k F dv with the analytic tail beyond the outer panel edge.

        Fails fast for k >= gamma (the integral diverges)."""
        if k >= self.gamma:
            raise ValueError(f"moment exponent k={k} must be < gamma={self.gamma}")
        raw = float(np.sum(self.weights * self.vbracket() ** k * self.F_values))
        return raw + self._moment_tail(k)

    def _moment_tail(self, k: float) -> float:
        v_end = self.map_params["v_end"]
        a = (self.gamma - k) / 2.0
        y = 1.0 / (1.0 + v_end**2)
        c = normalization_constant(1, self.gamma)
        incomplete = sp.betainc(a, 0.5, y) * sp.beta(a, 0.5)
        return 2.0 * c * 0.5 * incomplete

    # ----- serialization -----

    def dump_csv(self, path) -> None:
        header = (
            f"# heavykin velocity grid d={self.d} gamma={self.gamma} "
            f"scale={self.scale} n={self.n} v_end={self.map_params['v_end']}\n"
            "node,weight,F\n"
        )
        body = "\n".join(
            f"{v:.17e},{w:.17e},{F:.17e}"
            for v, w, F in zip(self.nodes, self.weights, self.F_values)
        )
        with open(path, "w") as fh:
            fh.write(header + body + "\n")

    @staticmethod
    def from_csv(path) -> "VelocityGrid":
        """Rebuild a quadrature-only grid (no panel structure) from dump_csv output."""
        with open(path) as fh:
            meta = fh.readline()
            text = fh.read()
        fields = dict(
            kv.split("=") for kv in meta.strip("#\n ").split() if "=" in kv
        )
        data = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1)
        nodes, weights, F = data[:, 0], data[:, 1], data[:, 2]
        return VelocityGrid(
            nodes=nodes,
            weights=weights,
            F_values=F,
            mu_weights=weights / F,
            d=int(fields.get("d", 1)),
            gamma=float(fields["gamma"]),
            scale=float(fields["scale"]),
            map_params={"v_end": float(fields.get("v_end", nodes[-1]))},
        )


def build_grid(params: ModelParams, n: int, scale: float | None = None) -> VelocityGrid:
    """Composite Lobatto rule under the algebraic tail map (d=1).

    n is the node budget; the composite rule uses the largest odd count that
    fits. Raises if the assembled rule misses the equilibrium-normalization
    tolerance, which signals that n is too small for the given gamma.
    """
    if params.d != 1:
        raise ValueError("build_grid is one-dimensional; use build_radial_grid for d >= 2")
    if n < 16:
        raise ValueError("need at least 16 nodes")
    gamma = params.gamma
    s = float(scale) if scale is not None else max(1.0, gamma)

    edges, orders = _panel_layout(gamma, s, n)
    tau_edges = [1.0] + [_tau_of_v(v, s) for v in edges[1:]]

    # Positive side, v ascending. Shared interface nodes are merged as we go.
    v_side: list[float] = []
    w_side: list[float] = []
    tau_side: list[float] = []
    panel_ranges = []
    for j, p in enumerate(orders):
        x, wref = gauss_lobatto(p)
        t_hi, t_lo = tau_edges[j], tau_edges[j + 1]
        # affine in u means affine in tau; descending tau is ascending v
        tau_q = t_hi + (t_lo - t_hi) * (x + 1.0) / 2.0
        half = abs(t_hi - t_lo) / 2.0
        v_q = _v_of_tau(tau_q, s)
        v_q[0] = edges[j]
        v_q[-1] = edges[j + 1]
        w_q = wref * half * _jacobian_of_tau(tau_q, s)
        if j == 0:
            start = 0
            v_side.extend(v_q)
            w_side.extend(w_q)
            tau_side.extend(tau_q)
        else:
            start = len(v_side) - 1
            w_side[-1] += w_q[0]
            v_side.extend(v_q[1:])
            w_side.extend(w_q[1:])
            tau_side.extend(tau_q[1:])
        panel_ranges.append((start, len(v_side) - 1))

    v_side_a = np.asarray(v_side)
    w_side_a = np.asarray(w_side)
    tau_side_a = np.asarray(tau_side)
    n_side = v_side_a.size

    nodes = np.concatenate([-v_side_a[:0:-1], v_side_a])
    weights = np.concatenate([w_side_a[:0:-1], w_side_a])
    weights[n_side - 1] = 2.0 * w_side_a[0]
    tau_full = np.concatenate([tau_side_a[:0:-1], tau_side_a])

    # mirror the panel index ranges onto the full grid, left to right
    off = n_side - 1
    panels = [(off - i1, off - i0) for (i0, i1) in reversed(panel_ranges)]
    panels += [(off + i0, off + i1) for (i0, i1) in panel_ranges]

    F = equilibrium(nodes, 1, gamma)
    grid = VelocityGrid(
        nodes=nodes,
        weights=weights,
        F_values=F,
        mu_weights=weights / F,
        d=1,
        gamma=gamma,
        scale=s,
        map_params={
            "rule": "composite-gauss-lobatto-u",
            "v_end": edges[-1],
            "edges_v": list(edges),
            "orders": list(orders),
        },
        panels=panels,
        tau=tau_full,
    )
    mass = grid.equilibrium_mass()
    if abs(mass - 1.0) > NORMALIZATION_TOL:
        raise ValueError(
            f"equilibrium normalization off by {mass - 1.0:.3e}: "
            f"n={n} is too small for gamma={gamma}"
        )
    return grid


# ----- radial reduction for d >= 2 coefficient integrals -----


@dataclass
class RadialGrid:
    """Product rule for integrals of g(<v>, v.xi) over R^d, d >= 2.

    integrate(fun) expects fun(brackets, vdotxi_over_xinorm * |xi|) style
    callables written on the two rotational invariants.
    """

    r_nodes: np.ndarray
    r_weights: np.ndarray  # includes r^(d-1) and the angular surface constant
    cos_nodes: np.ndarray
    cos_weights: np.ndarray  # Gauss-Jacobi for (1-c^2)^((d-3)/2)
    d: int
    gamma: float

    def integrate(self, fun) -> float:
        """int fun(<v>, r cos(theta)) dv by radial x angular quadrature."""
        rb = bracket(self.r_nodes)
        total = 0.0
        for c, wc in zip(self.cos_nodes, self.cos_weights):
            vals = fun(rb, self.r_nodes * c)
            total += wc * float(np.sum(self.r_weights * vals))
        return total


def build_radial_grid(
    params: ModelParams, n: int, scale: float | None = None, n_angular: int = 64
) -> RadialGrid:
    if params.d < 2:
        raise ValueError("build_radial_grid is for d >= 2")
    d, gamma = params.d, params.gamma
    # the radial measure r^(d-1) F_d(r) decays like the d=1 equilibrium, so the
    # 1-d line grid (built with a beta-compatible proxy operator) is reused
    proxy = ModelParams(d=1, gamma=gamma, operator=_radial_proxy_operator(params), k=0.0)
    line = build_grid(proxy, n, scale)
    half = line.nodes >= 0
    r = line.nodes[half]
    wr = line.weights[half].copy()
    wr[r == 0.0] /= 2.0
    alpha = (d - 3) / 2.0
    c_nodes, c_weights = sp.roots_jacobi(n_angular, alpha, alpha)
    # surface area of S^(d-2); together with the cos quadrature this integrates
    # over S^(d-1)
    omega = 2.0 * math.pi ** ((d - 1) / 2.0) / math.gamma((d - 1) / 2.0)
    return RadialGrid(
        r_nodes=r,
        r_weights=omega * wr * r ** (d - 1),
        cos_nodes=c_nodes,
        cos_weights=c_weights,
        d=d,
        gamma=gamma,
    )


def _radial_proxy_operator(params: ModelParams):
    """Operator whose derived beta keeps the 1-d proxy params valid."""
    from .model import Scattering

    return Scattering(kernel="separable", beta=max(params.beta, 0.0))
