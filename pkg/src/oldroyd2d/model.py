"""Right-hand-side assembly for the regularized compressible Oldroyd-B system.

Unknowns: density rho, velocity u (no-slip), polymer number density eta,
extra stress T (symmetric, diffusive).  The regularization knobs are

  alpha   - logarithmic stress term in the momentum equation,
  sigma1  - artificial pressure sigma1 * rho^Gamma,
  sigma2  - density diffusion plus the compensating velocity-gradient
            coupling in the momentum equation,
  sigma3  - eigenvalue cutoff chi applied to T in the transport,
            stretching, and relaxation slots (diffusion acts on T itself),
  theta   - mollification radius for initial data.

With every knob at zero the assembled right-hand sides coincide with
the base model bit for bit: knob terms are skipped, not multiplied by 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from oldroyd2d import grid as g2
from oldroyd2d import symcalc
from oldroyd2d.grid import (
    Grid2D,
    ScalarField2D,
    SymTensorField2D,
    VectorField2D,
    SCALAR_NEUMANN,
    TENSOR_NEUMANN,
    VELOCITY_DIRICHLET,
)
from oldroyd2d.symcalc import NotSPDError


@dataclass(frozen=True)
class PhysParams:
    """Physical constants; lambda is spelled lam (reserved word)."""

    a: float = 1.0          # pressure coefficient, > 0
    gamma: float = 2.0      # adiabatic exponent, > 1 (and > d/2 = 1)
    muS: float = 1.0        # shear viscosity, > 0
    muB: float = 0.0        # bulk viscosity, >= 0
    eps: float = 1.0        # center-of-mass / stress diffusion, > 0
    k: float = 1.0          # Boltzmann-temperature product, > 0
    L: float = 1.0          # bead-number parameter, >= 0
    delta: float = 0.0      # interaction coefficient, >= 0, delta + L != 0
    lam: float = 1.0        # relaxation (Deborah) parameter, > 0
    A0: float = 1.0         # Rouse eigenvalue, > 0
    f: Optional[VectorField2D] = None  # static body force; None means zero

    def __post_init__(self):
        if self.a <= 0.0:
            raise ValueError("pressure coefficient a must satisfy a > 0")
        if self.gamma <= 1.0:
            raise ValueError("adiabatic exponent must satisfy gamma > 1")
        if self.muS <= 0.0:
            raise ValueError("shear viscosity must satisfy muS > 0")
        if self.muB < 0.0:
            raise ValueError("bulk viscosity must satisfy muB >= 0")
        if self.eps <= 0.0:
            raise ValueError("diffusion coefficient must satisfy eps > 0")
        if self.k <= 0.0:
            raise ValueError("k must satisfy k > 0")
        if self.L < 0.0 or self.delta < 0.0:
            raise ValueError("L and delta must be nonnegative")
        if self.L + self.delta == 0.0:
            raise ValueError("delta + L must be nonzero")
        if self.lam <= 0.0:
            raise ValueError("lambda must satisfy lambda > 0")
        if self.A0 <= 0.0:
            raise ValueError("A0 must satisfy A0 > 0")


@dataclass(frozen=True)
class RegParams:
    alpha: float = 0.0
    sigma1: float = 0.0
    Gamma: float = 4.0
    sigma2: float = 0.0
    sigma3: float = 0.0
    theta: float = 0.1

    def __post_init__(self):
        if self.alpha < 0.0 or self.sigma1 < 0.0 or self.sigma2 < 0.0 or self.sigma3 < 0.0:
            raise ValueError("regularization knobs must be nonnegative")
        if self.theta <= 0.0:
            raise ValueError("mollification radius theta must satisfy theta > 0")
        if self.sigma1 > 0.0 and self.Gamma < 4.0:
            raise ValueError("artificial pressure needs Gamma >= 4 when sigma1 > 0")
        if self.sigma3 > 0.0 and not self.sigma3 < min(self.alpha, self.theta):
            raise ValueError("stress cutoff needs sigma3 < min(alpha, theta)")


@dataclass
class SimState:
    t: float
    rho: ScalarField2D
    u: VectorField2D
    eta: ScalarField2D
    T: SymTensorField2D

    def copy(self) -> "SimState":
        return SimState(self.t, self.rho.copy(), self.u.copy(), self.eta.copy(), self.T.copy())


def pressure(rho: ScalarField2D, phys: PhysParams, reg: RegParams) -> ScalarField2D:
    """a rho^gamma plus the artificial sigma1 rho^Gamma term."""
    base = np.maximum(rho.data, 0.0)  # 0^gamma := 0, tolerate advection undershoot
    p = phys.a * base**phys.gamma
    if reg.sigma1 != 0.0:
        p = p + reg.sigma1 * base**reg.Gamma
    return ScalarField2D(rho.grid, p, bc=rho.bc, name="pressure")


def velocity_jacobian(u: VectorField2D):
    """Jacobian arrays (J_ij = d_j u_i) with the field's own ghost rule."""
    g = u.grid
    jxx = g2.grad_x(u.x, u.bc, g.hx)
    jxy = g2.grad_y(u.x, u.bc, g.hy)
    jyx = g2.grad_x(u.y, u.bc, g.hx)
    jyy = g2.grad_y(u.y, u.bc, g.hy)
    return jxx, jxy, jyx, jyy


def newtonian_stress(u: VectorField2D, phys: PhysParams) -> SymTensorField2D:
    """muS (sym grad u - (div u / 2) I) + muB (div u) I, d = 2."""
    jxx, jxy, jyx, jyy = velocity_jacobian(u)
    return newtonian_stress_from_jacobian(u.grid, jxx, jxy, jyx, jyy, phys)


def newtonian_stress_from_jacobian(
    grid: Grid2D, jxx, jxy, jyx, jyy, phys: PhysParams
) -> SymTensorField2D:
    div_u = jxx + jyy
    sym_xy = 0.5 * (jxy + jyx)
    half_div = 0.5 * div_u
    sxx = phys.muS * (jxx - half_div)
    syy = phys.muS * (jyy - half_div)
    sxy = phys.muS * sym_xy
    if phys.muB != 0.0:
        sxx = sxx + phys.muB * div_u
        syy = syy + phys.muB * div_u
    return SymTensorField2D(grid, sxx, sxy, syy, bc=TENSOR_NEUMANN, name="newtonian")


def rhs_continuity(state: SimState, phys: PhysParams, reg: RegParams) -> ScalarField2D:
    """-div(rho u) with conservative upwind flux, plus sigma2 diffusion."""
    g = state.rho.grid
    out = -g2.upwind_div(
        state.u.x, state.u.y, state.u.bc, state.rho.data, state.rho.bc, g.hx, g.hy
    )
    if reg.sigma2 != 0.0:
        out = out + reg.sigma2 * g2.lap(state.rho.data, SCALAR_NEUMANN, g.hx, g.hy)
    return ScalarField2D(g, out, bc=state.rho.bc, name="rhs_rho")


def rhs_eta(state: SimState, phys: PhysParams) -> ScalarField2D:
    g = state.eta.grid
    out = -g2.upwind_div(
        state.u.x, state.u.y, state.u.bc, state.eta.data, state.eta.bc, g.hx, g.hy
    )
    out = out + phys.eps * g2.lap(state.eta.data, state.eta.bc, g.hx, g.hy)
    return ScalarField2D(g, out, bc=state.eta.bc, name="rhs_eta")


def tr_log_field(T: SymTensorField2D, context: str = "") -> np.ndarray:
    """Pointwise tr log T; aborts naming the worst cell if T is not SPD."""
    lam1, lam2, _, _ = symcalc.eig_fields(T.xx, T.xy, T.yy)
    if np.any(lam2 <= 0.0) or not np.all(np.isfinite(lam2)):
        idx = np.unravel_index(np.nanargmin(lam2), lam2.shape)
        raise NotSPDError(
            f"stress lost positive definiteness at cell {tuple(int(v) for v in idx)}"
            f" (min eigenvalue {lam2[idx]:.3e}){' in ' + context if context else ''}"
        )
    return np.log(lam1) + np.log(lam2)


def rhs_momentum(state: SimState, phys: PhysParams, reg: RegParams) -> VectorField2D:
    """Right-hand side for the conservative momentum density rho u."""
    g = state.rho.grid
    rho, u, eta, T = state.rho, state.u, state.eta, state.T

    # transport of momentum components by the same upwind flux as mass
    mx = rho.data * u.x
    my = rho.data * u.y
    out_x = -g2.upwind_div(u.x, u.y, u.bc, mx, u.bc, g.hx, g.hy)
    out_y = -g2.upwind_div(u.x, u.y, u.bc, my, u.bc, g.hx, g.hy)

    p = pressure(rho, phys, reg)
    out_x -= g2.grad_x(p.data, p.bc, g.hx)
    out_y -= g2.grad_y(p.data, p.bc, g.hy)

    solvent = phys.k * phys.L * eta.data
    if phys.delta != 0.0:
        solvent = solvent + phys.delta * eta.data**2
    out_x -= g2.grad_x(solvent, eta.bc, g.hx)
    out_y -= g2.grad_y(solvent, eta.bc, g.hy)

    s = newtonian_stress(u, phys)
    div_s = g2.tensor_divergence(s)
    out_x += div_s.x
    out_y += div_s.y

    div_t = g2.tensor_divergence(T)
    out_x += div_t.x
    out_y += div_t.y

    if reg.alpha != 0.0:
        trlog = tr_log_field(T, context="momentum assembly")
        out_x -= 0.5 * reg.alpha * g2.grad_x(trlog, T.bc, g.hx)
        out_y -= 0.5 * reg.alpha * g2.grad_y(trlog, T.bc, g.hy)

    if reg.sigma2 != 0.0:
        jxx, jxy, jyx, jyy = velocity_jacobian(u)
        drho_x = g2.grad_x(rho.data, SCALAR_NEUMANN, g.hx)
        drho_y = g2.grad_y(rho.data, SCALAR_NEUMANN, g.hy)
        out_x -= reg.sigma2 * (jxx * drho_x + jxy * drho_y)
        out_y -= reg.sigma2 * (jyx * drho_x + jyy * drho_y)

    if phys.f is not None:
        out_x += rho.data * phys.f.x
        out_y += rho.data * phys.f.y

    return VectorField2D(g, out_x, out_y, bc=u.bc, name="rhs_momentum")


def rhs_stress(state: SimState, phys: PhysParams, reg: RegParams) -> SymTensorField2D:
    """Stress transport, stretching, diffusion, and Maxwell relaxation.

    With sigma3 active the cutoff tensor enters transport, stretching,
    and relaxation; the diffusion keeps acting on T itself.
    """
    g = state.T.grid
    u, eta, T = state.u, state.eta, state.T

    if reg.sigma3 != 0.0:
        txx, txy, tyy = symcalc.apply_scalar_fields(
            lambda s: np.maximum(reg.sigma3, s), T.xx, T.xy, T.yy
        )
    else:
        txx, txy, tyy = T.xx, T.xy, T.yy

    out = [
        -g2.upwind_div(u.x, u.y, u.bc, comp, T.bc, g.hx, g.hy)
        for comp in (txx, txy, tyy)
    ]

    jxx, jxy, jyx, jyy = velocity_jacobian(u)
    out[0] += 2.0 * (jxx * txx + jxy * txy)
    out[1] += jxx * txy + jxy * tyy + txx * jyx + txy * jyy
    out[2] += 2.0 * (jyx * txy + jyy * tyy)

    for i, comp in enumerate((T.xx, T.xy, T.yy)):
        out[i] += phys.eps * g2.lap(comp, T.bc, g.hx, g.hy)

    relax = phys.A0 / (2.0 * phys.lam)
    source = phys.k * relax * (eta.data + reg.alpha)
    out[0] += source - relax * txx
    out[1] += -relax * txy
    out[2] += source - relax * tyy

    return SymTensorField2D(g, out[0], out[1], out[2], bc=T.bc, name="rhs_T")


def kramers_tensor(state: SimState, phys: PhysParams) -> SymTensorField2D:
    """Elastic extra stress K = T - (k L eta + delta eta^2) I."""
    solvent = phys.k * phys.L * state.eta.data
    if phys.delta != 0.0:
        solvent = solvent + phys.delta * state.eta.data**2
    return SymTensorField2D(
        state.T.grid,
        state.T.xx - solvent,
        state.T.xy,
        state.T.yy - solvent,
        bc=state.T.bc,
        name="kramers",
    )


def equilibrium_state(
    grid: Grid2D,
    phys: PhysParams,
    reg: RegParams,
    rho_bar: float = 1.0,
    eta_bar: float = 1.0,
) -> SimState:
    """Spatially uniform rest state; every right-hand side vanishes on it."""
    if rho_bar <= 0.0 or eta_bar <= 0.0:
        raise ValueError("equilibrium density and polymer density must be positive")
    shape = (grid.nx, grid.ny)
    t_eq = phys.k * (eta_bar + reg.alpha)
    return SimState(
        t=0.0,
        rho=ScalarField2D(grid, np.full(shape, rho_bar), bc=SCALAR_NEUMANN, name="rho"),
        u=VectorField2D(grid, np.zeros(shape), np.zeros(shape), bc=VELOCITY_DIRICHLET, name="u"),
        eta=ScalarField2D(grid, np.full(shape, eta_bar), bc=SCALAR_NEUMANN, name="eta"),
        T=SymTensorField2D(
            grid, np.full(shape, t_eq), np.zeros(shape), np.full(shape, t_eq),
            bc=TENSOR_NEUMANN, name="T",
        ),
    )
