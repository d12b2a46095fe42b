"""Conjugation of exponentially-asymptotically-constant coefficient ODE
systems to their constant-coefficient limit, and a numerical audit of the
weighted energy estimate.

The conjugator solves a Sylvester-type linear ODE backward from a far-field
identity condition; its quality is measured by a fitted decay rate of
``W - Id`` and a finite-difference residual of the defining equation.  The
energy audit takes candidate constants, verifies the three quadratic-form
hypotheses behind the estimate, and evaluates both sides of the estimate by
trapezoid quadrature on manufactured or supplied trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Union

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    ConjugationFailureError,
    HypothesisViolationError,
    InvalidInputError,
    InvalidTrajectoryError,
    InvertibilityError,
)
from .symbols import Frequency

__all__ = [
    "VariableSymbol",
    "Conjugator",
    "EnergyConstants",
    "EnergyAudit",
    "build_conjugator",
    "transform_boundary",
    "honest_constants",
    "energy_audit",
]

MatrixSource = Union[np.ndarray, Callable[[float], np.ndarray]]


@dataclass(frozen=True)
class VariableSymbol:
    """A variable-coefficient symbol with an exponentially reached limit.

    ``g_of_x(x, zeta)`` is the coefficient at depth ``x >= 0``; ``g_inf(zeta)``
    its limit; the pair ``(theta, c_decay)`` asserts
    ``norm(g_of_x - g_inf) <= c_decay * exp(-theta x)``.
    """

    g_of_x: Callable[[float, Frequency], np.ndarray]
    g_inf: Callable[[Frequency], np.ndarray]
    theta: float
    c_decay: float

    def __post_init__(self):
        if not (self.theta > 0):
            raise InvalidInputError("decay rate theta must be positive")
        if self.c_decay < 0:
            raise InvalidInputError("decay constant must be nonnegative")

    def decay_excess(self, zeta: Frequency, xs: np.ndarray) -> float:
        """Largest violation of the asserted decay envelope on sampled x
        (nonpositive when the envelope holds)."""
        ginf = np.asarray(self.g_inf(zeta), dtype=complex)
        worst = -math.inf
        for x in np.asarray(xs, dtype=float):
            dev = np.linalg.norm(
                np.asarray(self.g_of_x(float(x), zeta), dtype=complex) - ginf, 2
            )
            worst = max(worst, dev - self.c_decay * math.exp(-self.theta * float(x)))
        return worst


@dataclass(frozen=True)
class Conjugator:
    """Values of the conjugating map on a depth grid, with its diagnostics.

    ``theta1`` is the fitted decay rate of ``norm(W - Id)`` over the tail of
    the grid (``inf`` when W is the identity to working precision);
    ``residual`` is the largest finite-difference defect of the defining
    Sylvester ODE on interior nodes.
    """

    xs: np.ndarray
    w: np.ndarray
    theta1: float
    cond_bound: float
    residual: float

    def at_zero(self) -> np.ndarray:
        return self.w[0]


def build_conjugator(
    vs: VariableSymbol,
    zeta: Frequency,
    x_max: float,
    grid_step: Optional[float] = None,
    residual_tol: float = 1e-6,
) -> Conjugator:
    """Solve ``W' = G(x) W - W G_inf`` backward from ``W(x_max) = Id``.

    The far-field identity condition approximates ``W -> Id`` at infinity, so
    ``x_max * theta >= 20`` is required to push the truncation error below
    working precision.  The default grid step resolves the decay envelope
    (about one percent change per step).
    """
    if x_max <= 0:
        raise InvalidInputError("x_max must be positive")
    if x_max * vs.theta < 20:
        raise InvalidInputError(
            f"x_max*theta = {x_max * vs.theta:.3g} < 20; the far-field "
            "truncation would pollute the conjugator"
        )
    if grid_step is None:
        grid_step = 0.01 / vs.theta
    if grid_step <= 0 or grid_step > x_max:
        raise InvalidInputError("grid_step must lie in (0, x_max]")
    m = int(math.ceil(x_max / grid_step))
    xs = np.linspace(0.0, x_max, m + 1)

    excess = vs.decay_excess(zeta, xs)
    scale = 1.0 + np.linalg.norm(np.asarray(vs.g_inf(zeta), dtype=complex), 2)
    if excess > 1e-8 * scale:
        raise HypothesisViolationError(
            f"decay envelope violated by {excess:.3e} on the grid"
        )

    ginf = np.asarray(vs.g_inf(zeta), dtype=complex)
    n = ginf.shape[0]

    def rhs(x: float, y: np.ndarray) -> np.ndarray:
        wmat = (y[: n * n] + 1j * y[n * n :]).reshape(n, n)
        deriv = np.asarray(vs.g_of_x(x, zeta), dtype=complex) @ wmat - wmat @ ginf
        return np.concatenate([deriv.real.ravel(), deriv.imag.ravel()])

    y0 = np.concatenate([np.eye(n).ravel(), np.zeros(n * n)])
    sol = solve_ivp(
        rhs,
        (x_max, 0.0),
        y0,
        t_eval=xs[::-1],
        method="DOP853",
        rtol=1e-12,
        atol=1e-12,
    )
    if not sol.success:
        raise ConjugationFailureError(f"backward integration failed: {sol.message}")
    w = (sol.y[: n * n] + 1j * sol.y[n * n :]).T.reshape(-1, n, n)[::-1].copy()

    conds = np.array([np.linalg.cond(w[i]) for i in range(len(xs))])
    if not np.all(np.isfinite(conds)) or conds.max() > 1e12:
        raise InvertibilityError(
            f"conjugator is numerically singular on the grid (cond {conds.max():.3e})"
        )

    dev = np.linalg.norm(w - np.eye(n), axis=(1, 2))
    if dev.max() <= 1e-12:
        theta1 = math.inf
    else:
        usable = np.flatnonzero(dev > 1e-15)
        tail = usable[usable >= np.searchsorted(xs, 0.5 * x_max)]
        if tail.size < 2:
            tail = usable[len(usable) // 2 :]
        if tail.size < 2:
            theta1 = math.inf
        else:
            slope = np.polyfit(xs[tail], np.log(dev[tail]), 1)[0]
            theta1 = -float(slope)
            if theta1 <= 0:
                raise ConjugationFailureError(
                    f"deviation from the identity grows along the grid "
                    f"(fitted rate {theta1:.3e})"
                )

    # defect of the defining ODE, fourth-order differences on interior nodes
    h = xs[1] - xs[0]
    residual = 0.0
    for i in range(2, len(xs) - 2):
        dw = (-w[i + 2] + 8 * w[i + 1] - 8 * w[i - 1] + w[i - 2]) / (12 * h)
        target = np.asarray(vs.g_of_x(float(xs[i]), zeta), dtype=complex) @ w[i] - w[i] @ ginf
        residual = max(residual, float(np.linalg.norm(dw - target, 2)))
    if residual > residual_tol:
        raise ConjugationFailureError(
            f"defining-equation residual {residual:.3e} exceeds {residual_tol:.1e}"
        )

    return Conjugator(xs=xs, w=w, theta1=theta1, cond_bound=float(conds.max()), residual=residual)


def transform_boundary(gamma: np.ndarray, conj: Conjugator) -> np.ndarray:
    """Push a boundary matrix through the conjugation: ``gamma @ W(0)^{-1}``.

    The rank is preserved because the right factor is invertible.
    """
    gamma = np.atleast_2d(np.asarray(gamma, dtype=complex))
    w0 = conj.at_zero()
    if gamma.shape[1] != w0.shape[0]:
        raise InvalidInputError(
            f"boundary matrix has {gamma.shape[1]} columns, conjugator is {w0.shape[0]}x{w0.shape[0]}"
        )
    cond = np.linalg.cond(w0)
    if not np.isfinite(cond) or cond > 1e12:
        raise InvertibilityError(f"conjugator at the boundary is singular (cond {cond:.3e})")
    return gamma @ np.linalg.inv(w0)


class EnergyConstants(NamedTuple):
    c0: float
    lam: float
    delta: float
    c1: float


@dataclass(frozen=True)
class EnergyAudit:
    """Outcome of one energy-estimate audit.

    ``hypotheses`` maps "symmetry" / "interior" / "boundary" to their measured
    margins; ``hypotheses_pass`` is True when all three are nonnegative up to
    1e-10.  ``slack`` is right side minus left side of the estimate (NaN when
    the interior rate is nonpositive, since the right side divides by it) and
    ``identity_residual`` is the integrated-by-parts identity defect.
    """

    constants: EnergyConstants
    hypotheses: dict
    hypotheses_pass: bool
    lhs: float
    rhs: float
    slack: float
    identity_residual: float


def _sampled(source: MatrixSource, xs: np.ndarray, n: int) -> np.ndarray:
    if callable(source):
        vals = np.stack([np.asarray(source(float(x)), dtype=complex) for x in xs])
    else:
        mat = np.asarray(source, dtype=complex)
        vals = np.broadcast_to(mat, (len(xs), n, n)).copy()
    if vals.shape != (len(xs), n, n):
        raise InvalidInputError(f"matrix samples have shape {vals.shape}, expected {(len(xs), n, n)}")
    return vals


def _ds_dx(svals: np.ndarray, xs: np.ndarray, constant: bool) -> np.ndarray:
    if constant:
        return np.zeros_like(svals)
    return np.gradient(svals, xs, axis=0)


def honest_constants(
    s_of_x: MatrixSource,
    g_of_x: MatrixSource,
    gamma: Optional[np.ndarray],
    xs: np.ndarray,
) -> EnergyConstants:
    """Constants extracted from the data itself, so the hypothesis margins are
    zero or positive by construction: norm bound, half the worst interior
    dissipation eigenvalue, the exact boundary-form minimum, and a boundary
    weight one above the norm bound."""
    xs = np.asarray(xs, dtype=float)
    n = _infer_dim(s_of_x, g_of_x, xs)
    if not (callable(s_of_x) or callable(g_of_x)):
        # Constant coefficients: every node sees the same matrices.
        s0 = np.asarray(s_of_x, dtype=complex)
        g0 = np.asarray(g_of_x, dtype=complex)
        c0 = float(np.linalg.norm(s0, 2))
        lam = 0.5 * float(np.linalg.eigvalsh(2 * _herm(s0 @ g0)).min())
    else:
        svals = _sampled(s_of_x, xs, n)
        gvals = _sampled(g_of_x, xs, n)
        sprime = _ds_dx(svals, xs, constant=not callable(s_of_x))
        s0 = svals[0]
        c0 = float(np.linalg.norm(svals, ord=2, axis=(1, 2)).max())
        stack = 2 * _herm_stack(svals @ gvals) + _herm_stack(sprime)
        lam = 0.5 * float(np.linalg.eigvalsh(stack)[:, 0].min())
    c1 = c0 + 1.0
    gmat = _boundary_matrix(gamma, n)
    delta = float(
        np.linalg.eigvalsh(_herm(s0) + c1 * gmat.conj().T @ gmat).min()
    )
    return EnergyConstants(c0=c0, lam=lam, delta=delta, c1=c1)


def _herm(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def _boundary_matrix(gamma: Optional[np.ndarray], n: int) -> np.ndarray:
    if gamma is None:
        return np.zeros((0, n), dtype=complex)
    gamma = np.atleast_2d(np.asarray(gamma, dtype=complex))
    if gamma.shape[1] != n:
        raise InvalidInputError(f"boundary matrix has {gamma.shape[1]} columns, state is {n}")
    return gamma


def _infer_dim(s_of_x: MatrixSource, g_of_x: MatrixSource, xs) -> int:
    for source in (s_of_x, g_of_x):
        if not callable(source):
            return np.asarray(source).shape[0]
    return np.asarray(s_of_x(float(xs[0]))).shape[0]


def energy_audit(
    s_of_x: MatrixSource,
    g_of_x: MatrixSource,
    gamma: Optional[np.ndarray],
    xs: np.ndarray,
    u: np.ndarray,
    f: np.ndarray,
    constants: EnergyConstants,
) -> EnergyAudit:
    """Verify the energy-estimate hypotheses for the given constants and
    evaluate both sides of the estimate on one trajectory.

    The three hypotheses: the weight is Hermitian; twice its symmetrized
    product with the coefficient plus its depth derivative dominates twice the
    interior rate; and the boundary value of the weight plus the weighted
    boundary form dominates the boundary coefficient.  The trajectory must
    decay by the end of the grid or the quadrature is meaningless.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 1 or len(xs) < 5:
        raise InvalidInputError("audit needs a 1-d grid with at least five nodes")
    u = np.asarray(u, dtype=complex)
    f = np.asarray(f, dtype=complex)
    if u.shape != f.shape or u.shape[0] != len(xs):
        raise InvalidInputError("trajectory and forcing must share the grid")
    n = u.shape[1]
    unorm = np.linalg.norm(u, axis=1)
    if unorm.max() > 0 and unorm[-1] > 1e-8 * unorm.max():
        raise InvalidTrajectoryError(
            f"trajectory does not decay: |u(x_max)| = {unorm[-1]:.3e} vs max {unorm.max():.3e}"
        )

    gmat = _boundary_matrix(gamma, n)
    c0, lam, delta, c1 = constants

    constant = not (callable(s_of_x) or callable(g_of_x))
    if constant:
        # Constant coefficients: node-wise quantities collapse to one matrix.
        s0 = np.asarray(s_of_x, dtype=complex)
        g0 = np.asarray(g_of_x, dtype=complex)
        if s0.shape != (n, n) or g0.shape != (n, n):
            raise InvalidInputError(
                f"coefficient matrices must be {n}x{n} for this trajectory"
            )
        sym_defect = float(np.linalg.norm(s0 - s0.conj().T, 2))
        diss_min = float(np.linalg.eigvalsh(2 * _herm(s0 @ g0)).min())
    else:
        svals = _sampled(s_of_x, xs, n)
        gvals = _sampled(g_of_x, xs, n)
        sprime = _ds_dx(svals, xs, constant=not callable(s_of_x))
        s0 = svals[0]
        sym_defect = float(
            np.linalg.norm(svals - np.conj(np.swapaxes(svals, 1, 2)), ord=2, axis=(1, 2)).max()
        )
        interior_stack = 2 * _herm_stack(svals @ gvals) + _herm_stack(sprime)
        diss_min = float(np.linalg.eigvalsh(interior_stack)[:, 0].min())
    sym_margin = 1e-10 * (1.0 + c0) - sym_defect
    interior_margin = diss_min - 2 * lam
    boundary_margin = float(
        np.linalg.eigvalsh(
            _herm(s0) + c1 * gmat.conj().T @ gmat - delta * np.eye(n)
        ).min()
    )
    hypotheses = {
        "symmetry": sym_margin,
        "interior": interior_margin,
        "boundary": boundary_margin,
    }
    hypotheses_pass = all(v >= -1e-10 for v in hypotheses.values())

    u0 = u[0]
    usq = np.einsum("ij,ij->i", u.conj(), u).real
    fsq = np.einsum("ij,ij->i", f.conj(), f).real
    lhs = lam * float(np.trapezoid(usq, xs)) + delta * float(np.vdot(u0, u0).real)
    bterm = gmat @ u0
    if lam > 0:
        rhs = (c0**2 / lam) * float(np.trapezoid(fsq, xs)) + c1 * float(
            np.vdot(bterm, bterm).real
        )
        slack = rhs - lhs
    else:
        rhs = math.nan
        slack = math.nan

    # integrated-by-parts identity: boundary term plus the interior integrals
    if constant:
        m_int = 2 * _herm(s0 @ g0)
        quad_diss = np.einsum("ij,jk,ik->i", u.conj(), m_int, u).real
        sf = f @ s0.T
    else:
        quad_diss = np.einsum(
            "ij,ij->i", u.conj(), np.einsum("ijk,ik->ij", interior_stack, u)
        ).real
        sf = np.einsum("ijk,ik->ij", svals, f)
    cross = 2 * np.einsum("ij,ij->i", u.conj(), sf).real
    identity_residual = abs(
        float(np.vdot(u0, s0 @ u0).real)
        + float(np.trapezoid(quad_diss + cross, xs))
    )

    return EnergyAudit(
        constants=EnergyConstants(c0, lam, delta, c1),
        hypotheses=hypotheses,
        hypotheses_pass=hypotheses_pass,
        lhs=lhs,
        rhs=rhs,
        slack=slack,
        identity_residual=identity_residual,
    )


def _herm_stack(ms: np.ndarray) -> np.ndarray:
    return 0.5 * (ms + np.conj(np.swapaxes(ms, 1, 2)))
