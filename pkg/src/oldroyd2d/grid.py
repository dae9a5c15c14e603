"""Structured cell-centered grid, field containers, and stencil operators.

The domain is the rectangle (0, lx) x (0, ly) split into nx x ny cells
with samples at cell centers.  Boundary handling goes through one layer
of ghost cells: mirror ghosts realize homogeneous Neumann conditions,
odd reflection realizes the no-slip (homogeneous Dirichlet) condition.
All operators are linear stencils acting on whole component arrays;
nothing here mutates its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

VELOCITY_DIRICHLET = "velocity-Dirichlet"
SCALAR_NEUMANN = "scalar-Neumann"
TENSOR_NEUMANN = "tensor-Neumann"

_KNOWN_TAGS = (VELOCITY_DIRICHLET, SCALAR_NEUMANN, TENSOR_NEUMANN)


class BoundaryTagError(ValueError):
    """Field carries a boundary tag the operator cannot honor."""


@dataclass(frozen=True)
class Grid2D:
    """Uniform rectangle (0,lx) x (0,ly) with nx x ny cell centers."""

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError("need at least 4 cells per direction")
        if self.lx <= 0.0 or self.ly <= 0.0:
            raise ValueError("domain side lengths must be positive")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def area(self) -> float:
        return self.lx * self.ly

    def cell_centers(self):
        """Meshgrid arrays (x, y) of shape (nx, ny)."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")


def _check_tag(bc: str) -> None:
    if bc not in _KNOWN_TAGS:
        raise BoundaryTagError(f"unknown boundary tag {bc!r}")


@dataclass
class ScalarField2D:
    grid: Grid2D
    data: np.ndarray
    bc: str = SCALAR_NEUMANN
    name: str = "scalar"

    def __post_init__(self):
        _check_tag(self.bc)
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (self.grid.nx, self.grid.ny):
            raise ValueError("scalar data must have shape (nx, ny)")

    def copy(self) -> "ScalarField2D":
        return ScalarField2D(self.grid, self.data.copy(), self.bc, self.name)

    def components(self):
        return (self.data,)


@dataclass
class VectorField2D:
    grid: Grid2D
    x: np.ndarray
    y: np.ndarray
    bc: str = VELOCITY_DIRICHLET
    name: str = "vector"

    def __post_init__(self):
        _check_tag(self.bc)
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        shape = (self.grid.nx, self.grid.ny)
        if self.x.shape != shape or self.y.shape != shape:
            raise ValueError("vector components must have shape (nx, ny)")

    def copy(self) -> "VectorField2D":
        return VectorField2D(self.grid, self.x.copy(), self.y.copy(), self.bc, self.name)

    def components(self):
        return (self.x, self.y)


@dataclass
class SymTensorField2D:
    """Symmetric tensor field storing (xx, xy, yy) per cell."""

    grid: Grid2D
    xx: np.ndarray
    xy: np.ndarray
    yy: np.ndarray
    bc: str = TENSOR_NEUMANN
    name: str = "symtensor"

    def __post_init__(self):
        _check_tag(self.bc)
        self.xx = np.asarray(self.xx, dtype=np.float64)
        self.xy = np.asarray(self.xy, dtype=np.float64)
        self.yy = np.asarray(self.yy, dtype=np.float64)
        shape = (self.grid.nx, self.grid.ny)
        for comp in (self.xx, self.xy, self.yy):
            if comp.shape != shape:
                raise ValueError("tensor components must have shape (nx, ny)")

    def copy(self) -> "SymTensorField2D":
        return SymTensorField2D(
            self.grid, self.xx.copy(), self.xy.copy(), self.yy.copy(), self.bc, self.name
        )

    def components(self):
        return (self.xx, self.xy, self.yy)

    def at(self, i: int, j: int):
        from oldroyd2d.symcalc import SymMat2

        return SymMat2(float(self.xx[i, j]), float(self.xy[i, j]), float(self.yy[i, j]))


# ---------------------------------------------------------------------------
# Ghost-cell padding and array-level stencils.  Axis 0 is x, axis 1 is y.


def _pad(arr: np.ndarray, bc: str, axis: int) -> np.ndarray:
    """One ghost layer on both ends of the given axis.

    Mirror ghost (Neumann): ghost equals the adjacent interior value.
    Odd reflection (Dirichlet): ghost equals minus the interior value,
    putting the zero of the linear interpolant on the wall face.
    """
    _check_tag(bc)
    padded = np.pad(arr, [(1, 1) if ax == axis else (0, 0) for ax in range(arr.ndim)],
                    mode="edge")
    if bc == VELOCITY_DIRICHLET:
        first = [slice(None)] * arr.ndim
        last = [slice(None)] * arr.ndim
        first[axis] = 0
        last[axis] = -1
        padded[tuple(first)] *= -1.0
        padded[tuple(last)] *= -1.0
    return padded


def grad_x(arr: np.ndarray, bc: str, hx: float) -> np.ndarray:
    p = _pad(arr, bc, 0)
    return (p[2:, :] - p[:-2, :]) / (2.0 * hx)


def grad_y(arr: np.ndarray, bc: str, hy: float) -> np.ndarray:
    p = _pad(arr, bc, 1)
    return (p[:, 2:] - p[:, :-2]) / (2.0 * hy)


def lap(arr: np.ndarray, bc: str, hx: float, hy: float) -> np.ndarray:
    px = _pad(arr, bc, 0)
    py = _pad(arr, bc, 1)
    ddx = (px[2:, :] - 2.0 * arr + px[:-2, :]) / (hx * hx)
    ddy = (py[:, 2:] - 2.0 * arr + py[:, :-2]) / (hy * hy)
    return ddx + ddy


def upwind_div(ux: np.ndarray, uy: np.ndarray, u_bc: str,
               arr: np.ndarray, arr_bc: str, hx: float, hy: float) -> np.ndarray:
    """Conservative first-order upwind discretization of div(u * arr).

    Face velocities average the two adjacent cells; with the no-slip tag
    the odd reflection makes every wall-face velocity exactly zero, so
    the total flux telescopes to zero and cell sums are conserved.
    """
    pux = _pad(ux, u_bc, 0)
    fx_vel = 0.5 * (pux[:-1, :] + pux[1:, :])  # x-faces, shape (nx+1, ny)
    pa = _pad(arr, arr_bc, 0)
    up = np.where(fx_vel > 0.0, pa[:-1, :], pa[1:, :])
    flux_x = fx_vel * up

    puy = _pad(uy, u_bc, 1)
    fy_vel = 0.5 * (puy[:, :-1] + puy[:, 1:])  # y-faces, shape (nx, ny+1)
    pa = _pad(arr, arr_bc, 1)
    up = np.where(fy_vel > 0.0, pa[:, :-1], pa[:, 1:])
    flux_y = fy_vel * up

    return (flux_x[1:, :] - flux_x[:-1, :]) / hx + (flux_y[:, 1:] - flux_y[:, :-1]) / hy


# ---------------------------------------------------------------------------
# Field-level operators.


def gradient(f: ScalarField2D) -> VectorField2D:
    g = f.grid
    return VectorField2D(
        g,
        grad_x(f.data, f.bc, g.hx),
        grad_y(f.data, f.bc, g.hy),
        bc=VELOCITY_DIRICHLET,
        name=f"grad_{f.name}",
    )


def divergence(v: VectorField2D) -> ScalarField2D:
    g = v.grid
    out = grad_x(v.x, v.bc, g.hx) + grad_y(v.y, v.bc, g.hy)
    return ScalarField2D(g, out, bc=SCALAR_NEUMANN, name=f"div_{v.name}")


def tensor_divergence(t: SymTensorField2D) -> VectorField2D:
    """Row-wise divergence (Div T)_k = sum_l d_l T_kl."""
    g = t.grid
    vx = grad_x(t.xx, t.bc, g.hx) + grad_y(t.xy, t.bc, g.hy)
    vy = grad_x(t.xy, t.bc, g.hx) + grad_y(t.yy, t.bc, g.hy)
    return VectorField2D(g, vx, vy, bc=VELOCITY_DIRICHLET, name=f"div_{t.name}")


def advect_scalar(u: VectorField2D, f: ScalarField2D) -> ScalarField2D:
    g = f.grid
    out = upwind_div(u.x, u.y, u.bc, f.data, f.bc, g.hx, g.hy)
    return ScalarField2D(g, out, bc=f.bc, name=f"adv_{f.name}")


def advect_tensor(u: VectorField2D, t: SymTensorField2D) -> SymTensorField2D:
    """Div(uT) componentwise: each entry is transported like a scalar."""
    g = t.grid
    comps = [
        upwind_div(u.x, u.y, u.bc, comp, t.bc, g.hx, g.hy)
        for comp in (t.xx, t.xy, t.yy)
    ]
    return SymTensorField2D(g, *comps, bc=t.bc, name=f"adv_{t.name}")


def laplacian(f):
    """5-point laplacian honoring the field's own boundary tag."""
    g = f.grid
    if isinstance(f, ScalarField2D):
        return ScalarField2D(g, lap(f.data, f.bc, g.hx, g.hy), bc=f.bc, name=f"lap_{f.name}")
    if isinstance(f, VectorField2D):
        return VectorField2D(
            g,
            lap(f.x, f.bc, g.hx, g.hy),
            lap(f.y, f.bc, g.hx, g.hy),
            bc=f.bc,
            name=f"lap_{f.name}",
        )
    if isinstance(f, SymTensorField2D):
        return SymTensorField2D(
            g,
            lap(f.xx, f.bc, g.hx, g.hy),
            lap(f.xy, f.bc, g.hx, g.hy),
            lap(f.yy, f.bc, g.hx, g.hy),
            bc=f.bc,
            name=f"lap_{f.name}",
        )
    raise TypeError(f"unsupported field type {type(f).__name__}")


def integrate_cells(f) -> float:
    """Midpoint-rule cell sum; accepts a scalar field or a raw array."""
    if isinstance(f, ScalarField2D):
        return float(np.sum(f.data) * f.grid.hx * f.grid.hy)
    raise TypeError("integrate_cells expects a ScalarField2D")


def cell_sum(grid: Grid2D, arr: np.ndarray) -> float:
    """Array-level midpoint quadrature used by the diagnostics."""
    return float(np.sum(arr) * grid.hx * grid.hy)


# ---------------------------------------------------------------------------
# Friedrichs-style mollifier for initial data.


def _bump_kernel(grid: Grid2D, theta: float) -> np.ndarray:
    """Quartic bump c(1 - r^2/theta^2)^2 on r < theta, unit discrete mass."""
    rx = int(math.ceil(theta / grid.hx))
    ry = int(math.ceil(theta / grid.hy))
    dx = np.arange(-rx, rx + 1) * grid.hx
    dy = np.arange(-ry, ry + 1) * grid.hy
    r2 = dx[:, None] ** 2 + dy[None, :] ** 2
    w = np.where(r2 < theta * theta, (1.0 - r2 / (theta * theta)) ** 2, 0.0)
    total = w.sum()
    if total == 0.0:  # support smaller than one cell: identity kernel
        w = np.zeros((1, 1))
        w[0, 0] = 1.0
        return w
    return w / total


def _convolve_component(arr: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Kernel sweep with edge-replicated padding (constants preserved)."""
    rx = kernel.shape[0] // 2
    ry = kernel.shape[1] // 2
    padded = np.pad(arr, ((rx, rx), (ry, ry)), mode="edge")
    out = np.zeros_like(arr)
    nx, ny = arr.shape
    for a in range(kernel.shape[0]):
        for b in range(kernel.shape[1]):
            w = kernel[a, b]
            if w != 0.0:
                out += w * padded[a : a + nx, b : b + ny]
    return out


def mollify_initial(data, theta: float):
    """Smooth raw initial data and lift it off the degenerate set.

    Convolves each component with the unit-mass bump of radius theta,
    then applies the positivity shift: + theta for scalars, + theta on
    the diagonal for tensors (min eigenvalue >= theta afterwards).
    Vectors are smoothed without a shift.
    """
    if theta <= 0.0:
        raise ValueError("mollifier radius must be positive")
    kernel = _bump_kernel(data.grid, theta)
    if isinstance(data, ScalarField2D):
        out = _convolve_component(data.data, kernel) + theta
        return ScalarField2D(data.grid, out, data.bc, data.name)
    if isinstance(data, VectorField2D):
        return VectorField2D(
            data.grid,
            _convolve_component(data.x, kernel),
            _convolve_component(data.y, kernel),
            data.bc,
            data.name,
        )
    if isinstance(data, SymTensorField2D):
        return SymTensorField2D(
            data.grid,
            _convolve_component(data.xx, kernel) + theta,
            _convolve_component(data.xy, kernel),
            _convolve_component(data.yy, kernel) + theta,
            data.bc,
            data.name,
        )
    raise TypeError(f"unsupported field type {type(data).__name__}")


# ---------------------------------------------------------------------------
# Snapshot files: text header + row-major float64 payload, bit-exact.


_KIND_BY_COUNT = {1: ScalarField2D, 2: VectorField2D, 3: SymTensorField2D}
_DEFAULT_BC_BY_COUNT = {1: SCALAR_NEUMANN, 2: VELOCITY_DIRICHLET, 3: TENSOR_NEUMANN}


def save_snapshot(f, path) -> None:
    comps = f.components()
    header = f"{f.grid.nx} {f.grid.ny} {f.grid.hx!r} {f.grid.hy!r} {f.name} {len(comps)}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for comp in comps:
            fh.write(np.ascontiguousarray(comp, dtype=np.float64).tobytes())


def load_snapshot(path, bc: str | None = None):
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        nx, ny = int(header[0]), int(header[1])
        hx, hy = float(header[2]), float(header[3])
        name, count = header[4], int(header[5])
        grid = Grid2D(nx, ny, lx=hx * nx, ly=hy * ny)
        comps = []
        for _ in range(count):
            raw = fh.read(8 * nx * ny)
            comps.append(np.frombuffer(raw, dtype=np.float64).reshape(nx, ny).copy())
    tag = bc if bc is not None else _DEFAULT_BC_BY_COUNT[count]
    cls = _KIND_BY_COUNT[count]
    return cls(grid, *comps, bc=tag, name=name)
