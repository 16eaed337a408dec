"""Closed-form layer: equilibrium profile, exponents, rate predictions, Nash profiles.

Everything here is a pure function of the model parameters. The equilibrium is
the fat-tailed profile F(v) = c_gamma <v>^-(d+gamma) with <v> = sqrt(1+|v|^2),
normalized so that F integrates to one over R^d. The collision operator fixes a
derived exponent beta (2 for the Fokker-Planck form, the kernel exponent for
scattering, sigma-gamma for the fractional Fokker-Planck form), and the pair
(gamma, beta) determines the anomalous-diffusion exponent alpha and the
algebraic decay rate tau of the space-inhomogeneous dynamics.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

# Tolerance for detecting the measure-zero critical case gamma = 2 + beta.
CRITICAL_TOL = 1e-12


@dataclass(frozen=True)
class FokkerPlanck:
    """Diffusion collision operator div_v(F grad_v(f/F)); derived beta = 2."""


@dataclass(frozen=True)
class Scattering:
    """Integral scattering operator with kernel b(v, v').

    kernel: "separable" for b = Z^-1 <v>^-beta <v'>^-beta, or
    "power_difference" for b = |v - v'|^-beta (which requires beta in [0, d/2)).
    """

    kernel: str = "separable"
    beta: float = 0.0


@dataclass(frozen=True)
class FractionalFP:
    """Fractional Fokker-Planck operator Delta^(sigma/2) f + div(E f); beta = sigma - gamma."""

    sigma: float = 1.0


Operator = FokkerPlanck | Scattering | FractionalFP


class Regime(enum.Enum):
    STANDARD = "Standard"
    CRITICAL_LOG = "CriticalLog"
    D1_INTERMEDIATE = "D1Intermediate"


@dataclass(frozen=True)
class ModelParams:
    """Single source of truth for (d, gamma, operator, k).

    k is the moment exponent of the initial data, used as a weighted-norm
    exponent and therefore required to sit in [0, gamma).
    """

    d: int
    gamma: float
    operator: Operator
    k: float = 0.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d}")
        if self.gamma <= 0:
            raise ValueError(f"tail exponent gamma must be positive, got {self.gamma}")
        b = self.beta
        if self.gamma <= max(0.0, -b):
            raise ValueError(f"gamma must exceed max(0, -beta); gamma={self.gamma}, beta={b}")
        if isinstance(self.operator, Scattering):
            if self.operator.kernel not in ("separable", "power_difference"):
                raise ValueError(f"unknown scattering kernel {self.operator.kernel!r}")
            if self.operator.kernel == "power_difference" and not (
                0.0 <= self.operator.beta < self.d / 2
            ):
                raise ValueError(
                    f"power-difference kernel needs beta in [0, d/2), got {self.operator.beta}"
                )
        if isinstance(self.operator, FractionalFP) and not (0.0 < self.operator.sigma < 2.0):
            raise ValueError(f"sigma must lie in (0, 2), got {self.operator.sigma}")
        if not (0.0 <= self.k < self.gamma):
            raise ValueError(f"moment exponent k must lie in [0, gamma), got k={self.k}")

    @property
    def beta(self) -> float:
        op = self.operator
        if isinstance(op, FokkerPlanck):
            return 2.0
        if isinstance(op, Scattering):
            return float(op.beta)
        if isinstance(op, FractionalFP):
            return float(op.sigma) - float(self.gamma)
        raise TypeError(f"unknown operator {op!r}")

    @property
    def sigma(self) -> float | None:
        return self.operator.sigma if isinstance(self.operator, FractionalFP) else None


@dataclass(frozen=True)
class RatePrediction:
    """Predicted algebraic decay exponent for ||f(t)||^2.

    tau is the exponent of the (1+t)^-tau envelope (math.inf means faster than
    any algebraic rate tracked here, which does not occur for valid inputs;
    +inf appears only transiently in the min). log_corrected means the bound
    carries the (t log t)^-d/2 critical correction. attained=False flags an
    open supremum bound (the D1Intermediate window), where tau itself is not
    reached.
    """

    alpha: float
    tau: float
    log_corrected: bool
    regime: Regime
    attained: bool = True


def normalization_constant(d: int, gamma: float) -> float:
    """Constant c_gamma making c_gamma <v>^-(d+gamma) a probability density on R^d."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if int(d) != d or d < 1:
        raise ValueError(f"d must be a positive integer, got {d}")
    return math.pi ** (-d / 2) * math.gamma((d + gamma) / 2) / math.gamma(gamma / 2)


def bracket(v):
    """<v> = sqrt(1 + |v|^2), elementwise; for d >= 2 pass |v| (radial symmetry)."""
    v = np.asarray(v, dtype=float)
    return np.sqrt(1.0 + v * v)


def equilibrium(v, d: int, gamma: float):
    """Equilibrium profile F(v) = c_gamma <v>^-(d+gamma) at scalar velocities v."""
    return normalization_constant(d, gamma) * bracket(v) ** (-(d + gamma))


def alpha_exponent(gamma: float, beta: float) -> float:
    """Anomalous-diffusion exponent: (gamma+beta)/(1+beta) below the diffusive
    threshold gamma = 2+beta, and exactly 2 at or above it."""
    if gamma <= max(0.0, -beta):
        raise ValueError(f"gamma must exceed max(0, -beta); gamma={gamma}, beta={beta}")
    if gamma >= 2.0 + beta:
        return 2.0
    if 1.0 + beta <= 0.0:
        raise ValueError(
            f"fractional regime needs 1+beta > 0 when gamma < 2+beta; beta={beta}"
        )
    return (gamma + beta) / (1.0 + beta)


def gamma_star(d: int, beta: float) -> float:
    """Threshold curve in gamma separating the moment-limited decay region
    (tau = k/beta) from the diffusion-limited one (tau = d/alpha).

    The d=1 expression comes from the one-dimensional analysis and is evaluated
    for every beta >= 0 even though the regime discussion behind it is stated
    for beta <= 1.
    """
    if beta < 0:
        raise ValueError(f"gamma_star is defined for beta >= 0, got {beta}")
    if int(d) != d or d < 1:
        raise ValueError(f"d must be a positive integer, got {d}")
    if d == 1:
        return 0.5 * (math.sqrt((5.0 * beta + 4.0) * beta) - beta)
    if d == 2:
        return 0.5 * (math.sqrt(beta * (9.0 * beta + 8.0)) - beta)
    first = 0.5 * (math.sqrt((4.0 * d + 1.0) * beta**2 + 4.0 * d * beta) - beta)
    return max(first, 0.5 * d * beta)


def tau_star(eta: float, k: float, gamma: float, beta: float) -> float:
    """Auxiliary d=1 rate expression (k - eta)/(alpha(k + beta) + eta + beta)."""
    a = alpha_exponent(gamma, beta)
    denom = a * (k + beta) + eta + beta
    if denom <= 0:
        raise ValueError(f"tau_star denominator nonpositive for eta={eta}, k={k}")
    return (k - eta) / denom


def d1_rate_limit(gamma: float, beta: float) -> float:
    """Long-time limiting exponent 2 gamma / (alpha (gamma+beta) + |gamma-beta|)
    quoted for the d=1 intermediate window.

    This and the supremum bound returned by predicted_rate in the
    D1Intermediate regime are two different printed values for the same
    window; both are exposed and neither is adjusted to match the other.
    """
    a = alpha_exponent(gamma, beta)
    return 2.0 * gamma / (a * (gamma + beta) + abs(gamma - beta))


def predicted_rate(params: ModelParams) -> RatePrediction:
    """Predicted decay exponent tau for ||f(t)||^2 from (d, gamma, beta, k).

    Branch order: the critical case gamma = 2+beta (detected at absolute
    tolerance 1e-12) returns tau = d/2 with the log correction flag; the
    d=1 window beta > 1, gamma in (1, beta), k in (gamma/alpha, gamma) returns
    the open supremum bound; otherwise tau = min(d/alpha, k/beta_+) with the
    convention k/0_+ = +inf.
    """
    d, gamma, k = params.d, params.gamma, params.k
    beta = params.beta

    if abs(gamma - (2.0 + beta)) <= CRITICAL_TOL:
        return RatePrediction(
            alpha=2.0, tau=d / 2.0, log_corrected=True, regime=Regime.CRITICAL_LOG
        )

    a = alpha_exponent(gamma, beta)

    if d == 1 and beta > 1.0 and 1.0 < gamma < beta and gamma / a < k < gamma:
        tau_sup = (k + gamma) / (k * a - gamma + beta * (a + 1.0))
        return RatePrediction(
            alpha=a,
            tau=tau_sup,
            log_corrected=False,
            regime=Regime.D1_INTERMEDIATE,
            attained=False,
        )

    if beta > 0 and k <= 0:
        raise ValueError(
            "no algebraic rate is predicted for k = 0 with beta > 0 "
            "(the moment-limited exponent k/beta vanishes)"
        )
    moment_rate = math.inf if beta <= 0 else k / beta
    tau = min(d / a, moment_rate)
    return RatePrediction(alpha=a, tau=tau, log_corrected=False, regime=Regime.STANDARD)


def _surface_area(d: int) -> float:
    """Area of the unit sphere S^(d-1)."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def _nash_root(x, d: int, a: float):
    """Root R of R^(d+a) (1+R^2)^(1-a/2) = x, vectorized bisection.

    The left side is strictly increasing in R, so bracketing on
    [0, max(1, 2 x^(1/(d+a)))] is safe; iterate to 1e-12 relative width.
    """
    x = np.asarray(x, dtype=float)
    lo = np.zeros_like(x)
    hi = np.maximum(1.0, 2.0 * x ** (1.0 / (d + a)))

    def fval(r):
        return r ** (d + a) * (1.0 + r * r) ** (1.0 - a / 2.0) - x

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        high = fval(mid) > 0.0
        hi = np.where(high, mid, hi)
        lo = np.where(high, lo, mid)
        if np.all(hi - lo <= 1e-12 * np.maximum(hi, 1e-300)):
            break
    return 0.5 * (lo + hi)


def nash_profile(d: int, a: float, s):
    """Nash-type profile Phi_a(s) = omega_d phi(a s / omega_d).

    phi(x) is evaluated through the root R(x) of R^(d+a)(1+R^2)^(1-a/2) = x
    using the identity phi(x) = R^d (1/d + (1+R^2)/a) at the root, which is
    regular as R -> 0. Phi_a is monotone increasing, behaves like
    s^(d/(d+a)) near zero and linearly at infinity.
    """
    if not (0.0 < a <= 2.0):
        raise ValueError(f"a must lie in (0, 2], got {a}")
    scalar_in = np.ndim(s) == 0
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s_arr < 0):
        raise ValueError("s must be nonnegative")
    omega = _surface_area(d)
    x = a * s_arr / omega
    out = np.zeros_like(x)
    pos = x > 0
    if np.any(pos):
        r = _nash_root(x[pos], d, a)
        out[pos] = r**d * (1.0 / d + (1.0 + r * r) / a)
    result = omega * out
    return float(result[0]) if scalar_in else result


def log_nash_profile(d: int, x):
    """Logarithmic profile (1/d) x^(1+2/d) |log x| used in the critical case; domain (0,1)."""
    x_arr = np.asarray(x, dtype=float)
    if np.any((x_arr <= 0.0) | (x_arr >= 1.0)):
        raise ValueError("log_nash_profile requires x in (0, 1)")
    result = (1.0 / d) * x_arr ** (1.0 + 2.0 / d) * np.abs(np.log(x_arr))
    return float(result) if np.isscalar(x) or result.ndim == 0 else result
