"""Model parameters and the closed-form threshold calculus.

The underlying model couples a diffusing infected-bird density I_b (PDE)
to a sessile infected-mosquito density I_m (pointwise ODE) on an interval
(g(t), h(t)) whose endpoints move by a Stefan law.  Everything in this
module is a closed-form function of the epidemiological constants:

  basic reproduction number   R0   = am*ab*bb^2*Am / (dm*gb*Nb)
  Dirichlet index on length L R0D  = am*ab*bb^2*Am / (Nb*dm*(gb + D1*(pi/L)^2))
  risk index at fronts (g,h)  R0F  = R0D evaluated at L = h - g
  principal eigenvalue        lam0 = (gb + D1*(pi/L)^2) * (1 - R0F)
  spreading barrier           l*   = pi*sqrt(D1/(gb*(R0 - 1)))      (R0 > 1)
  endemic equilibrium         unique positive root of the cross-infection
                              balance, present exactly when R0 > 1

Shorthand: ab/am transmission probabilities, bb biting rate, gb bird
recovery rate, dm mosquito death rate, Nb/Am total populations, D1 bird
diffusivity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields


class NoBarrierError(ValueError):
    """Raised when the spreading barrier is requested but R0 <= 1."""


@dataclass(frozen=True)
class ModelParams:
    """All constants of the free-boundary model.

    Units: d1 length^2/time; beta_b, gamma_b, d_m 1/time; n_b, a_m
    populations; mu length^2/(time*population); h0 length; alpha_b and
    alpha_m are dimensionless probabilities in (0, 1].
    """

    d1: float
    alpha_b: float
    alpha_m: float
    beta_b: float
    gamma_b: float
    d_m: float
    n_b: float
    a_m: float
    mu: float
    h0: float

    def __post_init__(self):
        bad = []
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                bad.append(f"{f.name}: not a number ({v!r})")
                continue
            object.__setattr__(self, f.name, float(v))
            v = getattr(self, f.name)
            if not math.isfinite(v) or v <= 0.0:
                bad.append(f"{f.name}: must be finite and > 0, got {v!r}")
        for name in ("alpha_b", "alpha_m"):
            v = getattr(self, name)
            if isinstance(v, float) and math.isfinite(v) and v > 1.0:
                bad.append(f"{name}: transmission probability must be <= 1, got {v!r}")
        if bad:
            raise ValueError("invalid model parameters: " + "; ".join(bad))


@dataclass(frozen=True)
class ThresholdReport:
    """Every closed-form threshold quantity for one parameter set.

    l_star and equilibrium are present if and only if r0 > 1; for r0 <= 1
    vanishing is unconditional and no barrier or positive steady state
    exists.
    """

    r0: float
    r0f_initial: float
    lambda0_initial: float
    l_star: float | None
    equilibrium: tuple[float, float] | None


def basic_reproduction_number(p: ModelParams) -> float:
    """R0 of the non-spatial cross-infection system."""
    return p.alpha_m * p.alpha_b * p.beta_b ** 2 * p.a_m / (p.d_m * p.gamma_b * p.n_b)


def dirichlet_index(p: ModelParams, interval_length: float) -> float:
    """Reproduction index on a fixed interval with absorbing ends.

    Uses the interval principal eigenvalue lam1 = (pi/L)^2, the only
    domain shape the one-dimensional model needs.
    """
    if not (interval_length > 0.0):
        raise ValueError(f"interval_length must be > 0, got {interval_length!r}")
    lam1 = (math.pi / interval_length) ** 2
    return (p.alpha_m * p.alpha_b * p.beta_b ** 2 * p.a_m
            / (p.n_b * p.d_m * (p.gamma_b + p.d1 * lam1)))


def risk_index(p: ModelParams, g: float, h: float) -> float:
    """Time-dependent reproduction index of the current infected interval."""
    if not (h > g):
        raise ValueError(f"need h > g, got g={g!r}, h={h!r}")
    return dirichlet_index(p, h - g)


def principal_eigenvalue(p: ModelParams, g: float, h: float) -> float:
    """Principal eigenvalue of the linearized Dirichlet problem on (g, h).

    Computed in the factorized form (gb + D1*(pi/L)^2)*(1 - R0F) so that
    sgn(lambda0) == sgn(1 - R0F) holds exactly in floating point, not just
    up to rounding of a difference.
    """
    if not (h > g):
        raise ValueError(f"need h > g, got g={g!r}, h={h!r}")
    length = h - g
    return (p.gamma_b + p.d1 * (math.pi / length) ** 2) * (1.0 - dirichlet_index(p, length))


def spreading_barrier(p: ModelParams) -> float:
    """Critical interval length l* at which the Dirichlet index equals 1.

    Spans >= l* force spreading; only defined for R0 > 1 (for R0 <= 1 the
    virus vanishes regardless of span).
    """
    r0 = basic_reproduction_number(p)
    if not (r0 > 1.0):
        raise NoBarrierError(
            f"no spreading barrier exists: r0 = {r0:.6g} <= 1, vanishing is unconditional")
    return math.pi * math.sqrt(p.d1 / (p.gamma_b * (r0 - 1.0)))


def endemic_equilibrium(p: ModelParams) -> tuple[float, float] | None:
    """Unique positive steady state (I_b*, I_m*), or None when r0 <= 1.

    I_b* solves the linear balance obtained after eliminating I_m*:
        gb*Nb*(Nb*dm + am*bb*I_b*) = am*ab*bb^2*Am*(Nb - I_b*)
    and I_m* follows from the mosquito equation.
    """
    r0 = basic_reproduction_number(p)
    if r0 <= 1.0:
        return None
    num = p.alpha_m * p.alpha_b * p.beta_b ** 2 * p.a_m - p.gamma_b * p.n_b * p.d_m
    den = p.gamma_b * p.n_b * p.alpha_m * p.beta_b + p.alpha_m * p.alpha_b * p.beta_b ** 2 * p.a_m
    i_b = p.n_b * num / den
    i_m = p.alpha_m * p.beta_b * p.a_m * i_b / (p.n_b * p.d_m + p.alpha_m * p.beta_b * i_b)
    return i_b, i_m


def threshold_report(p: ModelParams) -> ThresholdReport:
    """Assemble every threshold quantity for the initial interval (-h0, h0)."""
    r0 = basic_reproduction_number(p)
    return ThresholdReport(
        r0=r0,
        r0f_initial=risk_index(p, -p.h0, p.h0),
        lambda0_initial=principal_eigenvalue(p, -p.h0, p.h0),
        l_star=spreading_barrier(p) if r0 > 1.0 else None,
        equilibrium=endemic_equilibrium(p),
    )


def nonspatial_rhs(p: ModelParams, i_b: float, i_m: float) -> tuple[float, float]:
    """Right-hand sides of the non-spatial system; zero exactly at equilibria."""
    di_b = -p.gamma_b * i_b + p.alpha_b * p.beta_b * (p.n_b - i_b) / p.n_b * i_m
    di_m = -p.d_m * i_m + p.alpha_m * p.beta_b * (p.a_m - i_m) / p.n_b * i_b
    return di_b, di_m
