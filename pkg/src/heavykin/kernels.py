"""Hot numerical kernels, numba-compiled when available.

Set HEAVYKIN_DISABLE_NUMBA=1 to force the pure-numpy fallbacks; the two paths
produce identical results to rounding and are benchmarked against each other
in benchmarks/bench_kernels.py.
"""

from __future__ import annotations

import math
import os

import numpy as np

USE_NUMBA = os.environ.get("HEAVYKIN_DISABLE_NUMBA", "0") != "1"
if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

if not USE_NUMBA:

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap


GL_POINTS = 16


def gauss_legendre_ref():
    x, w = np.polynomial.legendre.leggauss(GL_POINTS)
    return x, w


def delta_panel_edges(absv: float, vb: float, lo_frac: float, hi_frac: float,
                      per_decade: int = 2) -> np.ndarray:
    """Geometric panel edges for the singular Delta-integral at one velocity,
    with extra edges resolving the unit-width feature of g(v - Delta) near
    Delta = |v|."""
    lo = lo_frac * vb
    hi = hi_frac * vb
    n_geo = max(int(math.ceil(math.log10(hi / lo) * per_decade)), 4)
    edges = lo * (hi / lo) ** (np.arange(n_geo + 1) / n_geo)
    if absv > 4.0:
        # graded refinement around Delta = |v|, where the shifted equilibrium
        # has a unit-width peak with slow power-law shoulders
        offs = [0.5]
        while offs[-1] < absv / 2.0:
            offs.append(4.0 * offs[-1])
        offs = np.asarray(offs)
        extra = np.concatenate([absv - offs, absv + offs])
        extra = extra[(extra > lo) & (extra < hi)]
        edges = np.unique(np.concatenate([edges, extra]))
    return edges


def delta_quadrature(absv: float, vb: float, sigma: float, lo_frac: float = 1e-5,
                     hi_frac: float = 1e8) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for int_delta^T phi(Delta) Delta^(-1-sigma) dDelta."""
    xg, wg = gauss_legendre_ref()
    edges = delta_panel_edges(absv, vb, lo_frac, hi_frac)
    a, b = edges[:-1], edges[1:]
    mid = 0.5 * (a + b)[:, None]
    half = 0.5 * (b - a)[:, None]
    nodes = (mid + half * xg[None, :]).ravel()
    weights = (half * wg[None, :]).ravel() * nodes ** (-1.0 - sigma)
    return nodes, weights


# ----- force-field convolution (analytic integrand) -----


@njit(cache=True)
def _force_conv_core(v, nodes, weights, gamma, sigma, delta_in, t_out):
    """conv(v) = int_0^inf Delta^-sigma (g(v-D) - g(v+D)) dDelta for the
    equilibrium shape g = (1+x^2)^(-(1+gamma)/2), with Taylor closure below
    delta_in and the analytic odd tail beyond t_out."""
    p = -(1.0 + gamma) / 2.0
    acc = 0.0
    for q in range(nodes.size):
        dlt = nodes[q]
        gm = (1.0 + (v - dlt) ** 2) ** p
        gp = (1.0 + (v + dlt) ** 2) ** p
        # weights carry Delta^(-1-sigma); the conv kernel is Delta^(-sigma)
        acc += weights[q] * dlt * (gm - gp)
    # inner: g(v-D)-g(v+D) ~ -2 g'(v) D
    gprime = 2.0 * p * v * (1.0 + v * v) ** (p - 1.0)
    acc += -2.0 * gprime * delta_in ** (2.0 - sigma) / (2.0 - sigma)
    # outer: difference ~ 2(1+gamma) v Delta^(-(2+gamma))
    acc += 2.0 * (1.0 + gamma) * v * t_out ** (-(1.0 + gamma + sigma)) / (
        1.0 + gamma + sigma
    )
    return acc


def _force_conv_core_numpy(v, nodes, weights, gamma, sigma, delta_in, t_out):
    p = -(1.0 + gamma) / 2.0
    gm = (1.0 + (v - nodes) ** 2) ** p
    gp = (1.0 + (v + nodes) ** 2) ** p
    acc = float(np.sum(weights * nodes * (gm - gp)))
    gprime = 2.0 * p * v * (1.0 + v * v) ** (p - 1.0)
    acc += -2.0 * gprime * delta_in ** (2.0 - sigma) / (2.0 - sigma)
    acc += 2.0 * (1.0 + gamma) * v * t_out ** (-(1.0 + gamma + sigma)) / (
        1.0 + gamma + sigma
    )
    return acc


def force_convolution(v_targets: np.ndarray, gamma: float, sigma: float) -> np.ndarray:
    """Odd convolution u(v) at the requested velocities (vectorized driver)."""
    core = _force_conv_core if USE_NUMBA else _force_conv_core_numpy
    out = np.zeros_like(v_targets, dtype=float)
    for i, v in enumerate(np.abs(v_targets)):
        if v == 0.0:
            continue
        vb = math.sqrt(1.0 + v * v)
        nodes, weights = delta_quadrature(v, vb, sigma, lo_frac=1e-5, hi_frac=1e6)
        out[i] = core(v, nodes, weights, gamma, sigma, 1e-5 * vb, 1e6 * vb)
    return out * np.sign(v_targets)


# ----- fractional Laplacian matrix assembly -----


@njit(cache=True)
def _tau_of_abs(y, s):
    if y < 1e-280:
        return 1.0
    q = s / y
    return 2.0 * q / (2.0 + q + math.sqrt(q * q + 4.0))


@njit(cache=True)
def _accumulate_point(row, wq, y, s, v_end, p_tail, edges_left, starts, plen,
                      pan_t, pan_lam, pan_a, pan_b, n_nodes):
    """Add wq x (interpolation row at point y) into row."""
    ay = abs(y)
    if ay >= v_end:
        col = n_nodes - 1 if y > 0.0 else 0
        vb_end = math.sqrt(1.0 + v_end * v_end)
        vb_y = math.sqrt(1.0 + y * y)
        row[col] += wq * (vb_y / vb_end) ** (-p_tail)
        return
    j = np.searchsorted(edges_left, y, side="right") - 1
    if j < 0:
        j = 0
    t = _tau_of_abs(ay, s)
    # normalized panel coordinate
    tn = 2.0 * (t - pan_a[j]) / (pan_b[j] - pan_a[j]) - 1.0
    m = plen[j]
    base = starts[j]
    # exact node hit guard
    for k in range(m):
        if tn == pan_t[j, k]:
            row[base + k] += wq
            return
    denom = 0.0
    for k in range(m):
        denom += pan_lam[j, k] / (tn - pan_t[j, k])
    for k in range(m):
        row[base + k] += wq * (pan_lam[j, k] / (tn - pan_t[j, k])) / denom


@njit(cache=True)
def _fraclap_rows(A, v, dq_nodes, dq_w, s, v_end, p_tail, edges_left, starts,
                  plen, pan_t, pan_lam, pan_a, pan_b):
    n = v.size
    for i in range(n):
        wsum = 0.0
        for q in range(dq_nodes.shape[1]):
            wq = dq_w[i, q]
            if wq == 0.0:
                continue
            wsum += wq
            _accumulate_point(A[i], wq, v[i] + dq_nodes[i, q], s, v_end, p_tail,
                              edges_left, starts, plen, pan_t, pan_lam, pan_a,
                              pan_b, n)
            _accumulate_point(A[i], wq, v[i] - dq_nodes[i, q], s, v_end, p_tail,
                              edges_left, starts, plen, pan_t, pan_lam, pan_a,
                              pan_b, n)
        A[i, i] -= 2.0 * wsum


def _fraclap_rows_numpy(A, v, dq_nodes, dq_w, s, v_end, p_tail, edges_left,
                        starts, plen, pan_t, pan_lam, pan_a, pan_b):
    n = v.size
    for i in range(n):
        mask = dq_w[i] != 0.0
        wq = dq_w[i][mask]
        for sign in (1.0, -1.0):
            y = v[i] + sign * dq_nodes[i][mask]
            ay = np.abs(y)
            far = ay >= v_end
            if np.any(far):
                vb_end = math.sqrt(1.0 + v_end * v_end)
                fac = (np.sqrt(1.0 + y[far] ** 2) / vb_end) ** (-p_tail)
                cols = np.where(y[far] > 0, n - 1, 0)
                np.add.at(A[i], cols, wq[far] * fac)
            yin = y[~far]
            win = wq[~far]
            if yin.size == 0:
                continue
            jj = np.searchsorted(edges_left, yin, side="right") - 1
            jj[jj < 0] = 0
            q = s / np.maximum(np.abs(yin), 1e-280)
            t = 2.0 * q / (2.0 + q + np.sqrt(q * q + 4.0))
            t[np.abs(yin) < 1e-280] = 1.0
            tn = 2.0 * (t - pan_a[jj]) / (pan_b[jj] - pan_a[jj]) - 1.0
            for j in np.unique(jj):
                sel = jj == j
                m = plen[j]
                diff = tn[sel][:, None] - pan_t[j, :m][None, :]
                hit = diff == 0.0
                with np.errstate(divide="ignore", invalid="ignore"):
                    wk = pan_lam[j, :m][None, :] / diff
                wk[hit.any(axis=1)] = hit[hit.any(axis=1)].astype(float)
                wk = wk / wk.sum(axis=1)[:, None]
                A[i, starts[j] : starts[j] + m] += (win[sel][:, None] * wk).sum(axis=0)
        A[i, i] -= 2.0 * np.sum(wq)


def fraclap_rows(A, v, dq_nodes, dq_w, s, v_end, p_tail, edges_left, starts,
                 plen, pan_t, pan_lam, pan_a, pan_b):
    fn = _fraclap_rows if USE_NUMBA else _fraclap_rows_numpy
    fn(A, v, dq_nodes, dq_w, s, v_end, p_tail, edges_left, starts, plen, pan_t,
       pan_lam, pan_a, pan_b)


# ----- pairwise kernel assembly (PowerDifference scattering) -----


@njit(cache=True)
def _pd_pair_core(v, m, beta, B):
    n = v.size
    for i in range(n):
        for j in range(i + 1, n):
            val = m[i] * m[j] * abs(v[i] - v[j]) ** (-beta)
            B[i, j] = val
            B[j, i] = val


def _pd_pair_numpy(v, m, beta, B):
    diff = np.abs(v[:, None] - v[None, :])
    np.fill_diagonal(diff, 1.0)
    B[...] = m[:, None] * m[None, :] * diff ** (-beta)
    np.fill_diagonal(B, 0.0)


def pd_pair_matrix(v: np.ndarray, m: np.ndarray, beta: float) -> np.ndarray:
    """B_ij = m_i m_j |v_i - v_j|^(-beta), zero diagonal (removable
    singularity of the Dirichlet form)."""
    B = np.zeros((v.size, v.size))
    if USE_NUMBA:
        _pd_pair_core(v, m, beta, B)
    else:
        _pd_pair_numpy(v, m, beta, B)
    return B
