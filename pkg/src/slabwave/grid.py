"""
Slab discretization and the horizontal Fourier transform layer.

The domain is {-b < x1 < 0} x T^2 where the torus has periods (L2, L3).
Horizontal directions are represented by Fourier modes, the vertical
direction by a uniform node line running from the bottom (j = 0, x1 = -b)
to the free surface (j = nv - 1, x1 = 0).

Array conventions used by every module:

* scalar fields have shape ``(N2, N3, nv)``; vector fields ``(3, N2, N3, nv)``
  with component 0 the vertical one;
* surface fields drop the last axis;
* spectral coefficients use the forward-normalized FFT, so a constant field
  maps to a zero mode equal to that constant.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Union

import numpy as np

Multiplier = Union[np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class Config:
    """Physical, discretization and solver parameters.

    Only ``nu``, ``g``, ``depth_b``, ``s``, ``modes``, ``nv``, ``dt`` and
    ``t_final`` carry physics or resolution; everything else is a solver knob
    with a default.  ``data_amplitude`` scales the built-in smooth initial
    displacement of the ``evolve`` command.
    """

    nu: float = 1.0
    g: float = 1.0
    depth_b: float = 1.0
    s: float = 2.5
    period: tuple[float, float] = (2.0 * math.pi, 2.0 * math.pi)
    modes: tuple[int, int] = (16, 16)
    nv: int = 17
    dt: float = 1.0 / 32.0
    t_final: float = 0.5
    tol_outer: float = 1e-9
    max_iters: int = 12
    inner_iters: int = 0
    small_data_eps: float = 0.5
    j_min: float = 0.1
    kappa: float = 0.05
    t_restrict_c: float = 4.0
    data_amplitude: float = 1e-2

    def __post_init__(self) -> None:
        object.__setattr__(self, "period", tuple(float(p) for p in self.period))
        object.__setattr__(self, "modes", tuple(int(m) for m in self.modes))
        validate_config(self)

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


def validate_config(cfg: Config) -> None:
    """Raise ``ValueError`` naming the first violated invariant."""
    if not cfg.s > 2:
        raise ValueError("s must exceed 2")
    for name in ("nu", "depth_b", "dt", "t_final", "tol_outer", "j_min", "kappa", "t_restrict_c", "small_data_eps"):
        if not getattr(cfg, name) > 0:
            raise ValueError(f"{name} must be positive")
    if cfg.g < 0:
        raise ValueError("g must be nonnegative")
    if cfg.data_amplitude < 0:
        raise ValueError("data_amplitude must be nonnegative")
    if len(cfg.period) != 2 or min(cfg.period) <= 0:
        raise ValueError("period must be two positive lengths")
    if len(cfg.modes) != 2:
        raise ValueError("modes must be a pair (N2, N3)")
    for n in cfg.modes:
        if n < 4:
            raise ValueError("mode counts must be at least 4")
        if n % 2:
            raise ValueError("mode counts must be even")
    if cfg.nv < 3:
        raise ValueError("insufficient vertical resolution: nv must be at least 3")
    if cfg.dt > cfg.t_final * (1 + 1e-12):
        raise ValueError("dt must not exceed t_final")
    if abs(cfg.t_final / cfg.dt - round(cfg.t_final / cfg.dt)) > 1e-8:
        raise ValueError("t_final must be an integer multiple of dt")
    if cfg.max_iters < 1 or cfg.inner_iters < 0:
        raise ValueError("iteration counts must be positive")
    if not 0 < cfg.j_min < 1:
        raise ValueError("j_min must lie in (0, 1)")


def first_derivative_matrix(nv: int, h: float) -> np.ndarray:
    """Centered interior rows, one-sided second-order rows at both ends."""
    d = np.zeros((nv, nv))
    for j in range(1, nv - 1):
        d[j, j - 1] = -1.0
        d[j, j + 1] = 1.0
    d[0, :3] = (-3.0, 4.0, -1.0)
    d[-1, -3:] = (1.0, -4.0, 3.0)
    return d / (2.0 * h)


def second_derivative_matrix(nv: int, h: float) -> np.ndarray:
    d = np.zeros((nv, nv))
    for j in range(1, nv - 1):
        d[j, j - 1 : j + 2] = (1.0, -2.0, 1.0)
    if nv >= 4:
        d[0, :4] = (2.0, -5.0, 4.0, -1.0)
        d[-1, -4:] = (-1.0, 4.0, -5.0, 2.0)
    else:
        d[0, :3] = (1.0, -2.0, 1.0)
        d[-1, -3:] = (1.0, -2.0, 1.0)
    return d / (h * h)


def pressure_stabilization_matrix(nv: int, h: float) -> np.ndarray:
    """(h^2 / 4) (D2 - D1 D1) on interior rows, zero boundary rows.

    Centered first differences cannot see the node-to-node oscillation
    (-1)^j, which otherwise pollutes a collocated pressure.  The wide
    second difference D1 D1 is blind to it while D2 is not, so this matrix
    maps the oscillation to an O(1) multiple of itself and smooth profiles
    to O(h^4).
    """
    d1m, d2m = first_derivative_matrix(nv, h), second_derivative_matrix(nv, h)
    s = 0.25 * h * h * (d2m - d1m @ d1m)
    s[0] = 0.0
    s[-1] = 0.0
    return s


def trapezoid_weights(nv: int, h: float) -> np.ndarray:
    w = np.full(nv, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True, eq=False)
class Grid:
    """Wavenumber lattice, vertical nodes and the vertical difference matrices.

    ``k2``/``k3`` are the exact lattice wavenumbers (used by norms and
    multipliers); ``dk2``/``dk3`` are the derivative symbols, identical except
    that the Nyquist entry is zeroed so odd derivatives of real fields stay
    real.  ``ksq`` is built from the derivative symbols so that the discrete
    identities div(grad) = Laplacian hold mode by mode.
    """

    config: Config
    k2: np.ndarray
    k3: np.ndarray
    dk2: np.ndarray
    dk3: np.ndarray
    ksq: np.ndarray
    x1: np.ndarray
    h: float
    d1: np.ndarray
    d2: np.ndarray
    weights: np.ndarray
    dealias: np.ndarray
    zero_mode: tuple[int, int] = (0, 0)
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def shape(self) -> tuple[int, int, int]:
        n2, n3 = self.config.modes
        return (n2, n3, self.config.nv)

    @property
    def nv(self) -> int:
        return self.config.nv

    @property
    def area(self) -> float:
        return self.config.period[0] * self.config.period[1]

    @property
    def depth(self) -> float:
        return self.config.depth_b

    @property
    def kabs(self) -> np.ndarray:
        return np.sqrt(self.ksq)

    def horizontal_coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        (l2, l3), (n2, n3) = self.config.period, self.config.modes
        x2 = np.arange(n2) * (l2 / n2)
        x3 = np.arange(n3) * (l3 / n3)
        return np.meshgrid(x2, x3, indexing="ij")

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Physical coordinates (x1, x2, x3) broadcast to the field shape."""
        x2, x3 = self.horizontal_coordinates()
        return (
            np.broadcast_to(self.x1, self.shape),
            np.broadcast_to(x2[:, :, None], self.shape),
            np.broadcast_to(x3[:, :, None], self.shape),
        )


def _lattice(length: float, n: int) -> np.ndarray:
    return 2.0 * np.pi * np.fft.fftfreq(n, d=1.0 / n) / length


def make_grid(config: Config) -> Grid:
    """Build the lattice, vertical nodes and difference operators."""
    validate_config(config)
    (l2, l3), (n2, n3), nv, b = config.period, config.modes, config.nv, config.depth_b
    k2, k3 = _lattice(l2, n2), _lattice(l3, n3)
    dk2, dk3 = k2.copy(), k3.copy()
    dk2[n2 // 2] = 0.0
    dk3[n3 // 2] = 0.0
    x1 = np.linspace(-b, 0.0, nv)
    x1[0], x1[-1] = -b, 0.0
    h = b / (nv - 1)
    int2 = np.abs(np.fft.fftfreq(n2, d=1.0 / n2))
    int3 = np.abs(np.fft.fftfreq(n3, d=1.0 / n3))
    keep2 = (int2 <= n2 // 3) & (int2 < n2 // 2)
    keep3 = (int3 <= n3 // 3) & (int3 < n3 // 2)
    return Grid(
        config=config,
        k2=k2,
        k3=k3,
        dk2=dk2,
        dk3=dk3,
        ksq=dk2[:, None] ** 2 + dk3[None, :] ** 2,
        x1=x1,
        h=h,
        d1=first_derivative_matrix(nv, h),
        d2=second_derivative_matrix(nv, h),
        weights=trapezoid_weights(nv, h),
        dealias=keep2[:, None] & keep3[None, :],
    )


# ---------------------------------------------------------------------------
# Field containers


@dataclass(frozen=True, eq=False)
class Field:
    """A scalar or 3-vector field in one of the two representations."""

    data: np.ndarray
    spectral: bool

    @property
    def rank(self) -> int:
        return 3 if self.data.ndim == 4 else 1

    def __post_init__(self) -> None:
        if self.data.ndim not in (3, 4):
            raise ValueError("field data must have shape (N2, N3, nv) or (3, N2, N3, nv)")
        if self.data.ndim == 4 and self.data.shape[0] != 3:
            raise ValueError("vector fields carry exactly three components")
        if not self.spectral and np.iscomplexobj(self.data):
            raise ValueError("physical representation must be real")


@dataclass(frozen=True, eq=False)
class SurfaceField:
    """Field restricted to the top surface: shapes (N2, N3) or (k, N2, N3)."""

    data: np.ndarray
    spectral: bool

    @property
    def rank(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[0]


def to_spectral(values: np.ndarray, horizontal_axes: tuple[int, int] = (-3, -2)) -> np.ndarray:
    return np.fft.fft2(values, axes=horizontal_axes, norm="forward")


def to_physical(coeffs: np.ndarray, horizontal_axes: tuple[int, int] = (-3, -2)) -> np.ndarray:
    return np.fft.ifft2(coeffs, axes=horizontal_axes, norm="forward").real


def transform(f: Field | SurfaceField, direction: Literal["to_spectral", "to_physical"]):
    """Horizontal FFT between physical values and mode coefficients."""
    axes = (-3, -2) if isinstance(f, Field) else (-2, -1)
    if direction == "to_spectral":
        if f.spectral:
            raise ValueError("representation mismatch: field is already spectral")
        return type(f)(to_spectral(f.data, axes), True)
    if direction == "to_physical":
        if not f.spectral:
            raise ValueError("representation mismatch: field is already physical")
        return type(f)(to_physical(f.data, axes), False)
    raise ValueError(f"unknown transform direction {direction!r}")


def truncate(coeffs: np.ndarray, grid: Grid, horizontal_axes: tuple[int, int] = (-3, -2)) -> np.ndarray:
    """Apply the 2/3-rule mask (which also removes Nyquist content)."""
    mask = grid.dealias
    if horizontal_axes == (-3, -2):
        mask = mask[:, :, None]
    return np.where(mask, coeffs, 0.0)


def apply_horizontal_multiplier(
    f: Field | SurfaceField | np.ndarray,
    multiplier: Multiplier,
    grid: Grid,
    zero_mode_rule: complex | None = None,
):
    """Multiply every mode by m(k2, k3).

    ``multiplier`` is either a callable of the lattice wavenumbers or an
    ``(N2, N3)`` array.  If it is not finite at the zero mode a
    ``zero_mode_rule`` must be supplied; the zero-mode coefficient of the
    result is then that value times the input coefficient.
    """
    if isinstance(f, (Field, SurfaceField)):
        if not f.spectral:
            raise ValueError("multipliers act on spectral fields")
        data = f.data
    else:
        data = f
    if callable(multiplier):
        with np.errstate(divide="ignore", invalid="ignore"):
            m = np.asarray(multiplier(grid.k2[:, None], grid.k3[None, :]), dtype=complex)
        m = np.broadcast_to(m, grid.ksq.shape).copy()
    else:
        m = np.asarray(multiplier, dtype=complex).copy()
    if not np.isfinite(m[grid.zero_mode]):
        if zero_mode_rule is None:
            raise ValueError("multiplier is singular at the zero mode and no zero_mode_rule was given")
        m[grid.zero_mode] = zero_mode_rule
    elif zero_mode_rule is not None:
        m[grid.zero_mode] = zero_mode_rule
    surface = isinstance(f, SurfaceField) or (not isinstance(f, Field) and data.shape[-3:] != grid.shape)
    out = data * (m if surface else m[:, :, None])
    if isinstance(f, (Field, SurfaceField)):
        return type(f)(out, True)
    return out


def bracket(grid: Grid, power: float) -> np.ndarray:
    """<k>^power = (1 + |k|^2)^(power/2) on the exact lattice."""
    ksq = grid.k2[:, None] ** 2 + grid.k3[None, :] ** 2
    return (1.0 + ksq) ** (0.5 * power)


def vertical_derivative(f: Field | np.ndarray, grid: Grid, order: int = 1):
    """Second-order finite differences along x1 (last axis)."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    mat = grid.d1 if order == 1 else grid.d2
    if isinstance(f, Field):
        return Field(f.data @ mat.T, f.spectral)
    return f @ mat.T


# ---------------------------------------------------------------------------
# Spectral calculus helpers shared by the other modules


def d1(f: np.ndarray, grid: Grid) -> np.ndarray:
    return f @ grid.d1.T


def dd1(f: np.ndarray, grid: Grid) -> np.ndarray:
    return f @ grid.d2.T


def dh(f: np.ndarray, grid: Grid, alpha: int, surface: bool = False) -> np.ndarray:
    """Horizontal derivative of spectral data along x2 (alpha=2) or x3 (alpha=3).

    Volume data carry the vertical axis last; pass ``surface=True`` for
    data without it.
    """
    if alpha == 2:
        sym = 1j * grid.dk2[:, None]
    elif alpha == 3:
        sym = 1j * grid.dk3[None, :]
    else:
        raise ValueError("alpha must be 2 or 3")
    return f * (sym if surface else sym[:, :, None])


def pressure_stabilization(p: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral stabilization term added to the discrete continuity equation.

    Acts on nonzero horizontal modes only; the zero mode of the pressure is
    fixed by vertical momentum and needs no stabilization.
    """
    key = ("pressure_stabilization",)
    if key not in grid.cache:
        grid.cache[key] = pressure_stabilization_matrix(grid.nv, grid.h)
    return np.where(grid.ksq[:, :, None] > 0, p @ grid.cache[key].T, 0.0)


def discrete_continuity(v: np.ndarray, p: np.ndarray, grid: Grid) -> np.ndarray:
    """div v - S p, the left side of the discrete continuity equation."""
    return div(v, grid) - pressure_stabilization(p, grid)


def grad(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral gradient; result[k] = d_k f for k = 1, 2, 3."""
    return np.stack([d1(f, grid), dh(f, grid, 2), dh(f, grid, 3)])


def div(v: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral divergence; components sit on axis -4 so leading axes are allowed."""
    return d1(v[..., 0, :, :, :], grid) + dh(v[..., 1, :, :, :], grid, 2) + dh(v[..., 2, :, :, :], grid, 3)


def grad_vector(v: np.ndarray, grid: Grid) -> np.ndarray:
    """G[k, j] = d_k v^j for spectral vector data."""
    return np.stack([grad(v[j], grid) for j in range(3)], axis=1)


def div_sym_grad(v: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral div D(v) with D(v)_ij = d_i v^j + d_j v^i.

    The pure vertical second derivative uses the compact second-difference
    matrix, mixed derivatives use the first-difference matrix.
    """
    lap_h = -grid.ksq[:, :, None]
    divh = dh(v[1], grid, 2) + dh(v[2], grid, 3)
    out = np.empty_like(v)
    out[0] = 2.0 * dd1(v[0], grid) + lap_h * v[0] + d1(divh, grid)
    for beta, comp in ((2, 1), (3, 2)):
        out[comp] = (
            dd1(v[comp], grid)
            + dh(d1(v[0], grid), grid, beta)
            + lap_h * v[comp]
            + dh(divh, grid, beta)
        )
    return out


def stress_top(v: np.ndarray, p: np.ndarray | None, grid: Grid, nu: float) -> np.ndarray:
    """p n0 - nu D(v) n0 on the top surface (spectral, shape (3, N2, N3))."""
    dv = d1(v, grid)[..., -1]
    top = v[..., -1]
    out = np.empty((3,) + grid.ksq.shape, dtype=complex)
    out[0] = -2.0 * nu * dv[0]
    out[1] = -nu * (dv[1] + dh(top[0], grid, 2, surface=True))
    out[2] = -nu * (dv[2] + dh(top[0], grid, 3, surface=True))
    if p is not None:
        out[0] += p[..., -1]
    return out


# ---------------------------------------------------------------------------
# Binary dump


def dump_field(path, values: np.ndarray, grid: Grid) -> None:
    """Write physical data as ``SLAB <N2> <N3> <NV> <rank>`` + little-endian doubles.

    Vector data are written component by component, each block in
    (k2-major, k3, j) order.  Surface data use NV = 1.
    """
    values = np.asarray(values, dtype=float)
    n2, n3 = grid.config.modes
    if values.shape[-2:] == (n2, n3):
        values = values[..., None]
    rank = 3 if values.ndim == 4 else 1
    nv = values.shape[-1]
    with open(path, "wb") as fh:
        fh.write(f"SLAB {n2} {n3} {nv} {rank}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def load_field(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 5 or header[0] != "SLAB":
            raise ValueError(f"{path}: not a slab field dump")
        n2, n3, nv, rank = (int(x) for x in header[1:])
        data = np.frombuffer(fh.read(), dtype="<f8")
    shape = (n2, n3, nv) if rank == 1 else (rank, n2, n3, nv)
    if data.size != math.prod(shape):
        raise ValueError(f"{path}: payload size does not match header")
    return data.reshape(shape).copy()
