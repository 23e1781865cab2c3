"""Independent reference computations used to cross-check the solver.

Deliberately built on different numerics than the front tracker (classical
RK4 instead of IMEX splitting) so that agreement between the two is
evidence rather than tautology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, nonspatial_rhs
from .solver import Grid, SolutionState


@dataclass
class OdeTrajectory:
    """Spatially uniform (I_b(t), I_m(t)) samples of the well-mixed system."""

    t: np.ndarray
    i_b: np.ndarray
    i_m: np.ndarray


def _rk4_step(p: ModelParams, ib: float, im: float, dt: float) -> tuple[float, float]:
    k1 = nonspatial_rhs(p, ib, im)
    k2 = nonspatial_rhs(p, ib + 0.5 * dt * k1[0], im + 0.5 * dt * k1[1])
    k3 = nonspatial_rhs(p, ib + 0.5 * dt * k2[0], im + 0.5 * dt * k2[1])
    k4 = nonspatial_rhs(p, ib + dt * k3[0], im + dt * k3[1])
    ib += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    im += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    return ib, im


def solve_nonspatial(p: ModelParams, ib0: float, im0: float, t_max: float,
                     dt: float, t_eval=None) -> OdeTrajectory:
    """Integrate the well-mixed system with classical fourth-order RK.

    With t_eval given, lands exactly on those times (each segment is
    subdivided into uniform substeps no longer than dt); otherwise returns
    uniform samples every dt up to t_max.
    """
    if not (0.0 <= ib0 <= p.n_b):
        raise ValueError(f"ib0 must lie in [0, n_b], got {ib0!r}")
    if not (0.0 <= im0 <= p.a_m):
        raise ValueError(f"im0 must lie in [0, a_m], got {im0!r}")
    if not (dt > 0.0):
        raise ValueError(f"dt must be > 0, got {dt!r}")

    if t_eval is None:
        n = max(1, int(math.ceil(t_max / dt - 1e-12))) if t_max > 0.0 else 0
        times = np.linspace(0.0, t_max, n + 1) if n else np.array([0.0])
    else:
        times = np.asarray(t_eval, dtype=float)
        if times.size == 0 or times[0] != 0.0 or np.any(np.diff(times) < 0.0):
            raise ValueError("t_eval must start at 0 and be nondecreasing")

    ibs = np.empty(times.size)
    ims = np.empty(times.size)
    ib, im = float(ib0), float(im0)
    ibs[0], ims[0] = ib, im
    for k in range(1, times.size):
        seg = times[k] - times[k - 1]
        if seg > 0.0:
            nsub = max(1, int(math.ceil(seg / dt - 1e-12)))
            h = seg / nsub
            for _ in range(nsub):
                ib, im = _rk4_step(p, ib, im, h)
        if not (math.isfinite(ib) and math.isfinite(im)):
            raise ArithmeticError(f"non-finite oracle trajectory at t={times[k]:.6g}")
        ibs[k], ims[k] = ib, im
    return OdeTrajectory(t=times, i_b=ibs, i_m=ims)


def energy_functional(state: SolutionState, p: ModelParams, grid: Grid) -> float:
    """E = int over (g,h) of (I_b + (ab*bb/dm) I_m) dx + (D1/mu)(h - g).

    Trapezoidal quadrature on the transformed grid mapped back to physical
    coordinates (Jacobian (h-g)/(2*h0)).  Nonincreasing along runs with
    R0 <= 1, up to discretization tolerance.
    """
    density = state.u + (p.alpha_b * p.beta_b / p.d_m) * state.v
    jacobian = state.span / (2.0 * grid.h0)
    integral = jacobian * float(np.trapezoid(density, dx=grid.dy))
    return integral + p.d1 / p.mu * state.span
