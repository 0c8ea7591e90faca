"""
Manufactured solutions of the linear free-boundary problem.

A manufactured solution is a finite sum of separable terms

    u(t, x) = sum_r theta_r(t) A_r(x),   p = sum_r theta_r(t) P_r(x),
    eta(t)  = eta0 + sum_r Theta_r(t) A_r^1(top),   Theta_r' = theta_r,

where every component of A_r and P_r is a horizontal Fourier mode (plus its
complex conjugate) times a vertical profile poly(x1) exp(a x1).  The data
(F1, F2, F3) are computed from exact derivatives, so the discrete solution
can be compared with the exact one without any discrete operator in the
loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .grid import Config, Grid


@dataclass(frozen=True)
class Profile:
    """Vertical profile poly(x1) * exp(rate * x1)."""

    coeffs: tuple[float, ...]
    rate: float = 0.0

    def derivative(self, x: np.ndarray, order: int = 0) -> np.ndarray:
        p = Polynomial(self.coeffs)
        # (d/dx)(P e^{ax}) = (P' + a P) e^{ax}
        for _ in range(order):
            p = p.deriv() + self.rate * p
        return p(x) * np.exp(self.rate * x)


ZERO = Profile((0.0,))


@dataclass(frozen=True)
class ModeTerm:
    """One horizontal wavevector (integer lattice index) with velocity and pressure profiles."""

    lattice: tuple[int, int]
    coefficient: complex
    velocity: tuple[Profile, Profile, Profile]
    pressure: Profile = ZERO


@dataclass(frozen=True)
class TimeFactor:
    """theta(t), theta'(t) and the antiderivative Theta(t) with Theta(0) = 0."""

    value: Callable[[float], float]
    rate: Callable[[float], float]
    integral: Callable[[float], float]


CONSTANT = TimeFactor(lambda t: 1.0, lambda t: 0.0, lambda t: t)
LINEAR = TimeFactor(lambda t: t, lambda t: 1.0, lambda t: 0.5 * t * t)


def cosine_factor(omega: float) -> TimeFactor:
    return TimeFactor(
        lambda t: np.cos(omega * t),
        lambda t: -omega * np.sin(omega * t),
        lambda t: np.sin(omega * t) / omega,
    )


@dataclass
class ManufacturedSolution:
    """Sum over r of time factor r times the spatial terms of group r."""

    groups: Sequence[tuple[TimeFactor, Sequence[ModeTerm]]]
    eta0: dict = field(default_factory=dict)

    # -- spectral placement -------------------------------------------------

    @staticmethod
    def _place(grid: Grid, lattice: tuple[int, int], coeff: complex, profile: np.ndarray, out: np.ndarray) -> None:
        n2, n3 = grid.config.modes
        i2, i3 = lattice[0] % n2, lattice[1] % n3
        j2, j3 = (-lattice[0]) % n2, (-lattice[1]) % n3
        out[..., i2, i3, :] += coeff * profile
        out[..., j2, j3, :] += np.conj(coeff) * np.conj(profile)

    @staticmethod
    def _wavevector(grid: Grid, lattice: tuple[int, int]) -> tuple[float, float]:
        n2, n3 = grid.config.modes
        return float(grid.k2[lattice[0] % n2]), float(grid.k3[lattice[1] % n3])

    def _check(self, grid: Grid) -> None:
        n2, n3 = grid.config.modes
        for _, terms in self.groups:
            for term in terms:
                m2, m3 = term.lattice
                if (m2, m3) == (0, 0) or 2 * abs(m2) >= n2 or 2 * abs(m3) >= n3:
                    raise ValueError(f"lattice index {term.lattice} must be nonzero and below the Nyquist index")

    # -- exact fields ------------------------------------------------------

    def _spatial(self, grid: Grid, group: Sequence[ModeTerm]) -> dict:
        """Spectral A, P, F1 pieces (time-independent) for one group."""
        x = grid.x1
        A = np.zeros((3,) + grid.shape, dtype=complex)
        P = np.zeros(grid.shape, dtype=complex)
        visc = np.zeros((3,) + grid.shape, dtype=complex)
        gradp = np.zeros((3,) + grid.shape, dtype=complex)
        divA = np.zeros(grid.shape, dtype=complex)
        stress = np.zeros((3,) + grid.shape, dtype=complex)
        for term in group:
            k2, k3 = self._wavevector(grid, term.lattice)
            ik = (None, 1j * k2, 1j * k3)
            ksq = k2 * k2 + k3 * k3
            c = [[prof.derivative(x, d) for d in range(3)] for prof in term.velocity]
            pr = [term.pressure.derivative(x, d) for d in range(2)]
            div_u = [c[0][1 + d] + ik[1] * c[1][d] + ik[2] * c[2][d] for d in range(2)]
            lap = [c[i][2] - ksq * c[i][0] for i in range(3)]
            grad_div = [div_u[1], ik[1] * div_u[0], ik[2] * div_u[0]]
            grad_p = [pr[1], ik[1] * pr[0], ik[2] * pr[0]]
            # rows of D(u) n0: d1 u^i + d_i u^1
            d_n = [2.0 * c[0][1], c[1][1] + ik[1] * c[0][0], c[2][1] + ik[2] * c[0][0]]
            for i in range(3):
                self._place(grid, term.lattice, term.coefficient, c[i][0], A[i])
                self._place(grid, term.lattice, term.coefficient, lap[i] + grad_div[i], visc[i])
                self._place(grid, term.lattice, term.coefficient, grad_p[i], gradp[i])
                self._place(grid, term.lattice, term.coefficient, d_n[i], stress[i])
            self._place(grid, term.lattice, term.coefficient, pr[0], P)
            self._place(grid, term.lattice, term.coefficient, div_u[0], divA)
        return {"A": A, "P": P, "visc": visc, "gradp": gradp, "div": divA, "dn": stress[..., -1]}

    def eta_initial(self, grid: Grid) -> np.ndarray:
        out = np.zeros(grid.ksq.shape + (1,), dtype=complex)
        for lattice, coeff in self.eta0.items():
            self._place(grid, lattice, coeff, np.ones(1), out)
        return out[..., 0]

    def evaluate(self, grid: Grid, times: np.ndarray, nu: float, g: float) -> dict:
        """Exact (eta1, u, p) and data (F1, F2, F3) on the given times (spectral)."""
        self._check(grid)
        times = np.asarray(times, dtype=float)
        n = times.size
        out = {
            "eta1": np.broadcast_to(self.eta_initial(grid), (n,) + grid.ksq.shape).astype(complex),
            "u": np.zeros((n, 3) + grid.shape, dtype=complex),
            "p": np.zeros((n,) + grid.shape, dtype=complex),
            "F1": np.zeros((n, 3) + grid.shape, dtype=complex),
            "F2": np.zeros((n,) + grid.shape, dtype=complex),
            "F3": np.zeros((n, 3) + grid.ksq.shape, dtype=complex),
        }
        for factor, terms in self.groups:
            sp = self._spatial(grid, terms)
            for k, t in enumerate(times):
                th, dth, Th = factor.value(t), factor.rate(t), factor.integral(t)
                out["u"][k] += th * sp["A"]
                out["p"][k] += th * sp["P"]
                out["eta1"][k] += Th * sp["A"][0, ..., -1]
                out["F1"][k] += dth * sp["A"] - nu * th * sp["visc"] + th * sp["gradp"]
                out["F2"][k] += th * sp["div"]
                out["F3"][k] += -nu * th * sp["dn"]
                out["F3"][k, 0] += th * sp["P"][..., -1]
        out["F3"][:, 0] -= g * out["eta1"]
        return out


def mode_profiles(a: Sequence[Profile], p: Profile = ZERO, lattice=(1, 0), coefficient: complex = 1.0) -> ModeTerm:
    return ModeTerm(lattice=tuple(lattice), coefficient=complex(coefficient), velocity=tuple(a), pressure=p)


def _bottom_vanishing(b: float, coeffs: Sequence[float]) -> tuple[float, ...]:
    """Coefficients of (x1 + b) * poly(coeffs)."""
    return tuple((Polynomial([b, 1.0]) * Polynomial(list(coeffs))).coef)


def smooth_solution(b: float) -> ManufacturedSolution:
    """Linear-in-time solution with non-polynomial profiles (spatial-error study).

    The top value of the vertical velocity does not change in time, so the
    surface elevation is linear in time and backward Euler reproduces the
    time dependence exactly; the remaining error is spatial.
    """
    fb = _bottom_vanishing
    steady = [
        mode_profiles([Profile(fb(b, [0.5, 0.2]), 0.7), Profile(fb(b, [1.0]), -0.5), Profile(fb(b, [0.3, -0.4]), 1.1)],
                      Profile((0.2, 0.5), 0.9), (1, 0), 0.8 + 0.3j),
        mode_profiles([Profile(fb(b, [-0.6]), 1.3), Profile(fb(b, [0.4, 0.1]), 0.4), Profile(fb(b, [0.9]), -0.8)],
                      Profile((-0.3, 0.2, 0.4), 0.5), (1, 1), 0.5 - 0.4j),
    ]
    # x1 (x1 + b) vanishes at the top and the bottom
    both = tuple((Polynomial([0.0, 1.0]) * Polynomial([b, 1.0])).coef)
    growing = [
        mode_profiles([Profile(both, 0.6), Profile(fb(b, [0.7, -0.2]), 0.9), Profile(fb(b, [-0.5]), 0.3)],
                      Profile((0.4, -0.3), 1.2), (0, 1), 0.6 + 0.2j),
    ]
    return ManufacturedSolution(groups=[(CONSTANT, steady), (LINEAR, growing)], eta0={(1, 0): 0.3 - 0.1j, (0, 1): 0.2j})


def quadratic_solution(b: float, omega: float = 2.0) -> ManufacturedSolution:
    """Oscillating solution with quadratic vertical profiles (time-error study).

    Second-order differences are exact on quadratics and horizontal modes
    are resolved exactly, so the remaining error is temporal.
    """
    fb = _bottom_vanishing
    terms = [
        mode_profiles([Profile(fb(b, [0.6, 0.3])), Profile(fb(b, [1.0, -0.5])), Profile(fb(b, [-0.4, 0.2]))],
                      Profile((0.3, 0.6, -0.2)), (1, 0), 0.7 + 0.2j),
        mode_profiles([Profile(fb(b, [-0.5, 0.4])), Profile(fb(b, [0.2, 0.3])), Profile(fb(b, [0.8, 0.1]))],
                      Profile((-0.2, 0.1, 0.5)), (1, 1), 0.4 - 0.6j),
    ]
    return ManufacturedSolution(groups=[(cosine_factor(omega), terms)], eta0={(1, 0): 0.25 + 0.1j})


@dataclass
class RecoveryResult:
    errors: dict
    residuals: dict


def recovery_error(solution: ManufacturedSolution, cfg: Config, grid: Grid | None = None) -> RecoveryResult:
    """Run the linear solver on manufactured data and measure the error.

    Errors are maxima over all time levels of the physical max-norm,
    relative to the maximum of the exact field.
    """
    from .grid import make_grid, to_physical
    from .picard import LinearData, linear_solve

    grid = grid if grid is not None else make_grid(cfg)
    times = np.arange(cfg.n_steps + 1) * cfg.dt
    ex = solution.evaluate(grid, times, cfg.nu, cfg.g)
    data = LinearData(F1=ex["F1"], F2=ex["F2"], F3=ex["F3"])
    sol = linear_solve(data, ex["eta1"][0], ex["u"][0], grid, cfg)

    def rel(num, exact, axes=(-3, -2)):
        e = np.max(np.abs(to_physical(num - exact, axes)))
        return float(e / np.max(np.abs(to_physical(exact, axes))))

    errors = {
        "u": rel(sol.u, ex["u"]),
        "eta1": rel(sol.eta1, ex["eta1"], (-2, -1)),
        "p": rel(sol.p[1:, ..., 1:-1], ex["p"][1:, ..., 1:-1]),
    }
    return RecoveryResult(errors=errors, residuals=sol.residuals)


def observed_orders(sizes: Sequence[float], errors: Sequence[float]) -> np.ndarray:
    """Successive log-ratios log(e_i / e_{i+1}) / log(h_i / h_{i+1})."""
    s, e = np.asarray(sizes, dtype=float), np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / np.log(s[:-1] / s[1:])
