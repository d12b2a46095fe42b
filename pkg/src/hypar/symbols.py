"""Frequency-domain symbol assembly.

Fourier-Laplace transforming the interior equations in the tangential
variables and time turns the boundary value problem into a first-order ODE
system in the normal variable, ``dU/dx = G(p, zeta) U`` with the companion
block layout ``G = [[0, I], [Z, F]]``.  This module builds ``G``, the
first-order (inviscid) limit matrix ``H0``, and handles polar frequency
coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateFrequencyError,
    HypothesisViolationError,
    InvalidInputError,
    SingularViscosityError,
)
from .systems import SystemDefinition

__all__ = [
    "Frequency",
    "PolarFrequency",
    "FullSymbol",
    "assemble_full_symbol",
    "assemble_h0",
    "to_polar",
    "from_polar",
]

#: condition-number ceiling for the direct inversions below
COND_LIMIT = 1e12


@dataclass(frozen=True)
class Frequency:
    """Laplace-Fourier frequency (tau, eta, gamma), all real, gamma >= 0 for
    stability-side uses (the container itself allows any real gamma)."""

    tau: float
    eta: tuple = ()
    gamma: float = 0.0

    def __post_init__(self):
        vals = (self.tau, *self.eta, self.gamma)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInputError("frequency components must be finite")

    @property
    def norm(self) -> float:
        return math.sqrt(self.tau**2 + sum(e * e for e in self.eta) + self.gamma**2)

    def as_tuple(self) -> tuple:
        return (self.tau, *self.eta, self.gamma)

    def scaled(self, s: float) -> "Frequency":
        return Frequency(s * self.tau, tuple(s * e for e in self.eta), s * self.gamma)

    @staticmethod
    def zero(n_space: int) -> "Frequency":
        return Frequency(0.0, (0.0,) * (n_space - 1), 0.0)

    @staticmethod
    def from_components(values, n_space: int) -> "Frequency":
        values = tuple(float(v) for v in values)
        if len(values) != n_space + 1:
            raise InvalidInputError(
                f"need {n_space + 1} components (tau, {n_space - 1} eta, gamma), got {len(values)}"
            )
        return Frequency(values[0], values[1:-1], values[-1])


@dataclass(frozen=True)
class PolarFrequency:
    """A unit direction and a radius: zeta = radius * direction."""

    direction: Frequency
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise InvalidInputError("radius must be nonnegative")
        if abs(self.direction.norm - 1.0) > 1e-12:
            raise InvalidInputError(
                f"direction must be unit length, |zcheck| = {self.direction.norm!r}"
            )


@dataclass(frozen=True)
class FullSymbol:
    """Companion-form symbol [[0, I], [zero_order, first_order]]."""

    matrix: np.ndarray
    zero_order: np.ndarray
    first_order: np.ndarray

    @property
    def n_state(self) -> int:
        return self.zero_order.shape[0]


def _guarded_solve(mat, rhs, what, params):
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        if what == "B_dd":
            raise SingularViscosityError(
                f"B_dd is numerically singular (cond = {cond:.3e})", params=params
            )
        raise HypothesisViolationError(f"{what} is numerically singular (cond = {cond:.3e})")
    return np.linalg.solve(mat, rhs)


def assemble_full_symbol(system: SystemDefinition, p, zeta: Frequency) -> FullSymbol:
    """Build the 2N-by-2N companion symbol at a frequency point.

    The normal second-order coefficient is inverted with a condition guard;
    the two lower blocks collect the tangential frequency terms (zero order)
    and the convection/cross-viscosity terms (first order).
    """
    n = system.n_state
    d = system.n_space
    if len(zeta.eta) != d - 1:
        raise InvalidInputError(f"zeta has {len(zeta.eta)} tangential components, expected {d - 1}")
    b_dd = system.viscosity(p, d, d)
    a_d = system.convection(p, d)

    first = a_d.astype(complex)
    for j in range(1, d):
        first = first - 1j * zeta.eta[j - 1] * (
            system.viscosity(p, j, d) + system.viscosity(p, d, j)
        )
    zero = (1j * zeta.tau + zeta.gamma) * np.eye(n, dtype=complex)
    for j in range(1, d):
        zero = zero + 1j * zeta.eta[j - 1] * system.convection(p, j)
    for j in range(1, d):
        for k in range(1, d):
            zero = zero + zeta.eta[j - 1] * zeta.eta[k - 1] * system.viscosity(p, j, k)

    first = _guarded_solve(b_dd, first, "B_dd", p)
    zero = _guarded_solve(b_dd, zero, "B_dd", p)

    g = np.zeros((2 * n, 2 * n), dtype=complex)
    g[:n, n:] = np.eye(n)
    g[n:, :n] = zero
    g[n:, n:] = first
    return FullSymbol(matrix=g, zero_order=zero, first_order=first)


def assemble_h0(system: SystemDefinition, p, zcheck: Frequency) -> np.ndarray:
    """First-order limit matrix: -A_d^{-1}((i tau + gamma) I + sum_j i eta_j A_j).

    Linear (degree one homogeneous) in the frequency; the argument need not
    be normalized.
    """
    n = system.n_state
    d = system.n_space
    if len(zcheck.eta) != d - 1:
        raise InvalidInputError(
            f"zcheck has {len(zcheck.eta)} tangential components, expected {d - 1}"
        )
    a_d = system.convection(p, d)
    rhs = (1j * zcheck.tau + zcheck.gamma) * np.eye(n, dtype=complex)
    for j in range(1, d):
        rhs = rhs + 1j * zcheck.eta[j - 1] * system.convection(p, j)
    return -_guarded_solve(a_d, rhs, "A_d", p)


def to_polar(zeta: Frequency) -> PolarFrequency:
    rho = zeta.norm
    if rho == 0.0:
        raise DegenerateFrequencyError("zero frequency has no direction")
    return PolarFrequency(direction=zeta.scaled(1.0 / rho), radius=rho)


def from_polar(pf: PolarFrequency) -> Frequency:
    return pf.direction.scaled(pf.radius)


def unit_direction(values, n_space: int) -> Frequency:
    """Normalize raw (tau, eta..., gamma) components to a unit direction."""
    freq = Frequency.from_components(values, n_space)
    if freq.norm == 0.0:
        raise DegenerateFrequencyError("zero direction")
    return freq.scaled(1.0 / freq.norm)
