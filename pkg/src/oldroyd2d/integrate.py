"""Time advancement in conservative variables (rho, rho*u, eta, T).

Default scheme is SSP-RK2 (Heun).  The IMEX variant runs the same
explicit update with the linear diffusion removed, then applies one
implicit Euler diffusion solve; the mirror-ghost Neumann laplacian is
exactly diagonalized by the type-II cosine transform, so the solve is
direct.  No positivity projection is ever applied to the stress: loss
of positive definiteness is a reportable failure, not a repairable one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.fft

from oldroyd2d import grid as g2
from oldroyd2d.grid import ScalarField2D, SymTensorField2D, VectorField2D
from oldroyd2d.model import (
    PhysParams,
    RegParams,
    SimState,
    rhs_continuity,
    rhs_eta,
    rhs_momentum,
    rhs_stress,
)
from oldroyd2d.symcalc import NotSPDError

BLOWUP_LIMIT = 1e12
RHO_FLOOR = 1e-10


class BlowupError(RuntimeError):
    """A field left the representable range during time stepping."""


class DegenerateStateError(RuntimeError):
    """Density collapsed to the floor; the stability bound is meaningless."""


@dataclass(frozen=True)
class StepConfig:
    dt: Optional[float] = None  # None means auto (stability bound each step)
    t_end: float = 1.0
    cfl: float = 0.4
    scheme: str = "rk2"
    diag_every: int = 1

    def __post_init__(self):
        if self.dt is not None and self.dt <= 0.0:
            raise ValueError("dt must be positive (or None for auto)")
        if self.t_end < 0.0:
            raise ValueError("t_end must be nonnegative")
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError("cfl must lie in (0, 1]")
        if self.scheme not in ("rk2", "imex"):
            raise ValueError("scheme must be 'rk2' or 'imex'")
        if self.diag_every < 1:
            raise ValueError("diag_every must be at least 1")


@dataclass
class RunResult:
    final: SimState
    series: dict
    steps: int
    floor_hits: int


def auto_dt(state: SimState, phys: PhysParams, reg: RegParams, cfg: StepConfig) -> float:
    """Stability bound cfl * min(diffusive, advective) time step."""
    rho_min = float(state.rho.data.min())
    if rho_min <= RHO_FLOOR:
        raise DegenerateStateError(
            f"density minimum {rho_min:.3e} at or below floor {RHO_FLOOR:.1e}"
        )
    g = state.rho.grid
    h = min(g.hx, g.hy)

    nu_eff = (phys.muS + phys.muB) / rho_min
    if cfg.scheme == "imex":
        diffusive = nu_eff  # eps and sigma2 handled implicitly
    else:
        diffusive = max(phys.eps, reg.sigma2, nu_eff)
    dt_diff = cfg.cfl * h * h / (4.0 * diffusive) if diffusive > 0.0 else math.inf

    rho = np.maximum(state.rho.data, 0.0)
    dp = phys.a * phys.gamma * rho ** (phys.gamma - 1.0)
    if reg.sigma1 != 0.0:
        dp = dp + reg.sigma1 * reg.Gamma * rho ** (reg.Gamma - 1.0)
    c_max = math.sqrt(float(dp.max()))
    u_max = float(np.sqrt(state.u.x**2 + state.u.y**2).max())
    speed = u_max + c_max
    dt_adv = cfg.cfl * h / speed if speed > 0.0 else math.inf

    dt = min(dt_diff, dt_adv)
    if not math.isfinite(dt):
        raise DegenerateStateError("no finite stability bound (all wave speeds zero)")
    return dt


def _pack(state: SimState):
    rho = state.rho.data
    return [
        rho.copy(),
        rho * state.u.x,
        rho * state.u.y,
        state.eta.data.copy(),
        state.T.xx.copy(),
        state.T.xy.copy(),
        state.T.yy.copy(),
    ]


def _unpack(y, template: SimState, t: float, floor_counter) -> SimState:
    rho, mx, my, eta, txx, txy, tyy = y
    safe = np.maximum(rho, RHO_FLOOR)
    if floor_counter is not None and np.any(rho < RHO_FLOOR):
        floor_counter[0] += int(np.count_nonzero(rho < RHO_FLOOR))
    grid = template.rho.grid
    return SimState(
        t=t,
        rho=ScalarField2D(grid, rho, bc=template.rho.bc, name=template.rho.name),
        u=VectorField2D(grid, mx / safe, my / safe, bc=template.u.bc, name=template.u.name),
        eta=ScalarField2D(grid, eta, bc=template.eta.bc, name=template.eta.name),
        T=SymTensorField2D(grid, txx, txy, tyy, bc=template.T.bc, name=template.T.name),
    )


def _rhs(state: SimState, phys: PhysParams, reg: RegParams):
    drho = rhs_continuity(state, phys, reg)
    dm = rhs_momentum(state, phys, reg)
    deta = rhs_eta(state, phys)
    dT = rhs_stress(state, phys, reg)
    return [drho.data, dm.x, dm.y, deta.data, dT.xx, dT.xy, dT.yy]


def _diffusion_only(state: SimState, phys: PhysParams, reg: RegParams):
    """The linear diffusion the IMEX scheme treats implicitly."""
    g = state.rho.grid
    zero = np.zeros_like(state.rho.data)
    drho = (
        reg.sigma2 * g2.lap(state.rho.data, state.rho.bc, g.hx, g.hy)
        if reg.sigma2 != 0.0
        else zero
    )
    deta = phys.eps * g2.lap(state.eta.data, state.eta.bc, g.hx, g.hy)
    dts = [
        phys.eps * g2.lap(comp, state.T.bc, g.hx, g.hy)
        for comp in (state.T.xx, state.T.xy, state.T.yy)
    ]
    return [drho, zero, zero, deta, dts[0], dts[1], dts[2]]


def _neumann_heat_solve(arr: np.ndarray, kappa_dt: float, hx: float, hy: float) -> np.ndarray:
    """Solve (I - kappa_dt * lap_neumann) x = arr via DCT-II diagonalization."""
    nx, ny = arr.shape
    lam_x = (2.0 * np.cos(np.pi * np.arange(nx) / nx) - 2.0) / (hx * hx)
    lam_y = (2.0 * np.cos(np.pi * np.arange(ny) / ny) - 2.0) / (hy * hy)
    denom = 1.0 - kappa_dt * (lam_x[:, None] + lam_y[None, :])
    spec = scipy.fft.dctn(arr, type=2, norm="ortho")
    return scipy.fft.idctn(spec / denom, type=2, norm="ortho")


def _check_finite(y, t: float) -> None:
    for comp in y:
        m = np.abs(comp).max()
        if not np.isfinite(m) or m > BLOWUP_LIMIT:
            raise BlowupError(
                f"field magnitude {m:.3e} exceeds {BLOWUP_LIMIT:.1e} at t={t:.6g}"
            )


def step(state: SimState, phys: PhysParams, reg: RegParams, cfg: StepConfig,
         dt: Optional[float] = None, floor_counter=None) -> SimState:
    """One SSP-RK2 (or IMEX) step; returns a fresh state at t + dt."""
    if dt is None:
        dt = cfg.dt if cfg.dt is not None else auto_dt(state, phys, reg, cfg)

    y0 = _pack(state)
    if cfg.scheme == "rk2":
        f0 = _rhs(state, phys, reg)
        y1 = [a + dt * b for a, b in zip(y0, f0)]
        s1 = _unpack(y1, state, state.t + dt, floor_counter)
        f1 = _rhs(s1, phys, reg)
        y2 = [0.5 * (a + b + dt * c) for a, b, c in zip(y0, y1, f1)]
    else:
        # explicit SSP-RK2 on everything but the stiff diffusion ...
        def f_expl(s):
            full = _rhs(s, phys, reg)
            diff = _diffusion_only(s, phys, reg)
            return [a - b for a, b in zip(full, diff)]

        f0 = f_expl(state)
        y1 = [a + dt * b for a, b in zip(y0, f0)]
        s1 = _unpack(y1, state, state.t + dt, floor_counter)
        f1 = f_expl(s1)
        y2 = [0.5 * (a + b + dt * c) for a, b, c in zip(y0, y1, f1)]
        # ... then one implicit Euler solve per diffused component
        g = state.rho.grid
        if reg.sigma2 != 0.0:
            y2[0] = _neumann_heat_solve(y2[0], reg.sigma2 * dt, g.hx, g.hy)
        y2[3] = _neumann_heat_solve(y2[3], phys.eps * dt, g.hx, g.hy)
        for i in (4, 5, 6):
            y2[i] = _neumann_heat_solve(y2[i], phys.eps * dt, g.hx, g.hy)

    _check_finite(y2, state.t + dt)
    return _unpack(y2, state, state.t + dt, floor_counter)


def run(
    initial: SimState,
    phys: PhysParams,
    reg: RegParams,
    cfg: StepConfig,
    diag_hooks: Sequence[Callable[[SimState], dict]] = (),
) -> RunResult:
    """Advance to t_end, sampling diagnostics every diag_every steps."""
    series: dict = {"t": []}
    floor_counter = [0]

    def record(s: SimState) -> None:
        series["t"].append(s.t)
        for hook in diag_hooks:
            for key, val in hook(s).items():
                series.setdefault(key, []).append(val)

    state = initial.copy()
    steps = 0
    t_final = initial.t + cfg.t_end
    if state.t >= t_final - 1e-14 * max(1.0, abs(t_final)):
        return RunResult(final=state, series=series, steps=0, floor_hits=0)
    try:
        record(state)
    except NotSPDError as err:
        # diagnostics hooks evaluate tr log T on the initial data
        raise NotSPDError(f"{err} (run failed at t={state.t:.6g})") from err
    while state.t < t_final - 1e-14 * max(1.0, abs(t_final)):
        dt = cfg.dt if cfg.dt is not None else auto_dt(state, phys, reg, cfg)
        dt = min(dt, t_final - state.t)
        try:
            state = step(state, phys, reg, cfg, dt=dt, floor_counter=floor_counter)
        except (BlowupError, DegenerateStateError, NotSPDError) as err:
            raise type(err)(f"{err} (run failed at t={state.t:.6g})") from err
        steps += 1
        if steps % cfg.diag_every == 0:
            record(state)
    if steps % cfg.diag_every != 0:
        record(state)
    return RunResult(final=state, series=series, steps=steps, floor_hits=floor_counter[0])
