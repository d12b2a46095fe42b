"""Invariant subspaces, block splittings, and continuity sweeps.

The production path for invariant subspaces is the ordered Schur
factorization (backward stable); the contour-integral projector is kept as
an independent oracle so the two can cross-check each other.  On top of
those sit the small-frequency block diagonalization, the limiting stable
bundle at frequency zero, and the gap-metric sweeps that verify the bundle
extends continuously down to the zero-frequency sphere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import (
    ClusterSplitError,
    ContourCollisionError,
    ExtensionFailureError,
    HypothesisViolationError,
    InternalConsistencyError,
    InvalidInputError,
    InvertibilityError,
    NearAxisError,
)
from .symbols import Frequency, PolarFrequency, assemble_full_symbol, assemble_h0, from_polar
from .systems import SystemDefinition

__all__ = [
    "Subspace",
    "SpectralSplit",
    "BlockStructure",
    "SweepRow",
    "spectral_split",
    "riesz_projector",
    "subspace_gap",
    "low_freq_block_diag",
    "rescaled_slow_block",
    "hyperbolic_stable_limit",
    "limit_bundle",
    "decomposed_stable_space",
    "continuity_sweep",
]


@dataclass(frozen=True)
class Subspace:
    """A subspace stored as a matrix with orthonormal columns."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=complex)
        if b.ndim != 2:
            raise InvalidInputError("basis must be a 2-d array")
        if b.shape[1] > 0:
            defect = np.linalg.norm(b.conj().T @ b - np.eye(b.shape[1]))
            if defect > 1e-10:
                raise InvalidInputError(f"basis not orthonormal (defect {defect:.2e})")
        object.__setattr__(self, "basis", b)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @classmethod
    def from_span(cls, columns) -> "Subspace":
        """Orthonormalize a (full column rank) spanning set."""
        cols = np.asarray(columns, dtype=complex)
        if cols.ndim != 2:
            raise InvalidInputError("spanning set must be a 2-d array")
        if cols.shape[1] == 0:
            return cls(basis=cols.reshape(cols.shape[0], 0))
        q, r = np.linalg.qr(cols)
        if np.min(np.abs(np.diag(r))) < 1e-12 * max(1.0, np.linalg.norm(cols)):
            raise InvalidInputError("spanning set is rank deficient")
        return cls(basis=q)

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T


@dataclass(frozen=True)
class SpectralSplit:
    stable: Subspace
    unstable: Subspace
    stable_eigs: tuple
    unstable_eigs: tuple
    axis_margin: float


def _procrustes_align(basis: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Right-multiply an orthonormal basis by the unitary factor closest to
    the reference.  Keeps the span, makes the representative continuous along
    sweeps."""
    if basis.shape[1] == 0 or reference.shape[1] != basis.shape[1]:
        return basis
    w = basis.conj().T @ reference
    u, _s, vh = np.linalg.svd(w)
    return basis @ (u @ vh)


def spectral_split(mat, axis_tol: Optional[float] = None) -> SpectralSplit:
    """Split C^n into the stable/unstable invariant subspaces of ``mat``.

    Uses a unitary (complex Schur) triangularization with eigenvalue
    reordering; refuses to split when an eigenvalue is within ``axis_tol``
    of the imaginary axis.
    """
    mat = np.asarray(mat, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvalidInputError("matrix must be square")
    scale = np.linalg.norm(mat)
    tol = axis_tol if axis_tol is not None else 1e-10 * (1.0 + scale)
    eigs = np.linalg.eigvals(mat)
    margin = float(np.min(np.abs(eigs.real))) if eigs.size else np.inf
    if margin <= tol:
        offending = tuple(e for e in eigs if abs(e.real) <= tol)
        raise NearAxisError(
            f"eigenvalue(s) within {tol:.2e} of the imaginary axis: {offending}",
            eigenvalues=offending,
        )

    t_s, q_s, sdim = sla.schur(mat, output="complex", sort=lambda z: z.real < 0.0)
    stable = Subspace(basis=q_s[:, :sdim])
    t_u, q_u, udim = sla.schur(mat, output="complex", sort=lambda z: z.real > 0.0)
    unstable = Subspace(basis=q_u[:, :udim])
    if sdim + udim != mat.shape[0]:
        raise InternalConsistencyError("stable/unstable dimensions do not fill the space")
    diag = np.diag(t_s)
    return SpectralSplit(
        stable=stable,
        unstable=unstable,
        stable_eigs=tuple(sorted((e for e in diag if e.real < 0), key=lambda z: (z.real, z.imag))),
        unstable_eigs=tuple(sorted((e for e in diag if e.real > 0), key=lambda z: (z.real, z.imag))),
        axis_margin=margin,
    )


def riesz_projector(mat, region="left", quadrature_points: int = 256, min_distance: float = 1e-8):
    """Contour-integral spectral projector (independent oracle).

    ``region`` is either ``"left"`` (the open left half plane) or a tuple
    ``("disk", center, radius)``.  The contour is a circle; the integral is
    evaluated by the trapezoid rule, which converges geometrically for
    analytic integrands, so a few hundred points reach well below 1e-8 for
    comfortably separated spectra.
    """
    mat = np.asarray(mat, dtype=complex)
    n = mat.shape[0]
    eigs = np.linalg.eigvals(mat)

    if region == "left":
        inside = eigs[eigs.real < 0]
        if inside.size == 0:
            return np.zeros((n, n), dtype=complex)
        center = complex(
            0.5 * (inside.real.min() + inside.real.max()),
            0.5 * (inside.imag.min() + inside.imag.max()),
        )
        r_in = float(np.max(np.abs(inside - center)))
        outside = eigs[eigs.real >= 0]
        if outside.size:
            r_out = float(np.min(np.abs(outside - center)))
            radius = 0.5 * (r_in + r_out) if r_out > r_in else r_in + min_distance
        else:
            radius = r_in + 0.5 * (1.0 + r_in)
    elif isinstance(region, tuple) and len(region) == 3 and region[0] == "disk":
        center = complex(region[1])
        radius = float(region[2])
    else:
        raise InvalidInputError(f"unknown region spec {region!r}")

    dist = np.abs(np.abs(eigs - center) - radius)
    if np.min(dist) < min_distance * (1.0 + radius):
        raise ContourCollisionError(
            f"eigenvalue within {np.min(dist):.3e} of the contour |z - {center}| = {radius}"
        )

    theta = 2.0 * np.pi * np.arange(quadrature_points) / quadrature_points
    nodes = center + radius * np.exp(1j * theta)
    acc = np.zeros((n, n), dtype=complex)
    ident = np.eye(n, dtype=complex)
    for z in nodes:
        acc += (z - center) * np.linalg.solve(z * ident - mat, ident)
    return acc / quadrature_points


def subspace_gap(e1: Subspace, e2: Subspace) -> float:
    """Sine of the largest principal angle; 1.0 when dimensions differ."""
    if e1.ambient_dim != e2.ambient_dim:
        raise InvalidInputError(
            f"ambient dimensions differ: {e1.ambient_dim} vs {e2.ambient_dim}"
        )
    if e1.dim != e2.dim:
        return 1.0
    if e1.dim == 0:
        return 0.0
    # sine of the largest principal angle, computed without the 1 - cos^2
    # cancellation so tiny gaps are resolved down to machine precision
    resid = e2.basis - e1.basis @ (e1.basis.conj().T @ e2.basis)
    return min(1.0, float(np.linalg.norm(resid, 2)))


@dataclass(frozen=True)
class BlockStructure:
    """Conjugation splitting the full symbol into slow (near-zero) and fast
    (off-axis) invariant blocks: conjugator^{-1} G conjugator = diag(slow, fast)."""

    conjugator: np.ndarray
    slow_block: np.ndarray
    fast_block: np.ndarray
    cond: float
    split_radius: float


def _fast_reference(system, p):
    """Orthonormal reference frames for the slow/fast splitting at zeta = 0."""
    n = system.n_state
    b_dd = system.viscosity(p, system.n_space, system.n_space)
    a_d = system.convection(p, system.n_space)
    p0 = np.linalg.solve(b_dd, a_d)
    slow_ref = np.vstack([np.eye(n), np.zeros((n, n))]).astype(complex)
    fast_ref = np.linalg.qr(np.vstack([np.eye(n), p0]).astype(complex))[0]
    return p0, slow_ref, fast_ref


def low_freq_block_diag(
    system: SystemDefinition,
    p,
    zeta: Frequency,
    separation: Optional[float] = None,
) -> BlockStructure:
    """Block-diagonalize the full symbol near frequency zero.

    The first N columns of the conjugator span the invariant subspace of the
    eigenvalue group near 0, the last N the group with real parts bounded
    away from the axis.  Column representatives are aligned against fixed
    zeta = 0 references so the conjugator varies continuously along sweeps.
    """
    n = system.n_state
    p0, slow_ref, fast_ref = _fast_reference(system, p)
    p0_margin = float(np.min(np.abs(np.linalg.eigvals(p0).real)))
    if p0_margin <= 0:
        raise HypothesisViolationError("B_dd^{-1} A_d has spectrum touching the imaginary axis")
    r_split = 0.5 * p0_margin
    sep = separation if separation is not None else r_split

    g = assemble_full_symbol(system, p, zeta).matrix
    eigs = np.linalg.eigvals(g)
    near = np.abs(eigs) <= r_split
    if int(near.sum()) != n:
        raise ClusterSplitError(
            f"near-zero group has {int(near.sum())} eigenvalues, expected {n}",
            eigenvalues=tuple(eigs),
        )
    far = eigs[~near]
    if far.size and float(np.min(np.abs(far.real))) < sep:
        raise ClusterSplitError(
            "off-axis group dips below the separation constant", eigenvalues=tuple(eigs)
        )

    _t, q_near, sdim = sla.schur(g, output="complex", sort=lambda z: abs(z) <= r_split)
    _t2, q_far, fdim = sla.schur(g, output="complex", sort=lambda z: abs(z) > r_split)
    if sdim != n or fdim != n:
        raise ClusterSplitError(
            f"ordered factorization selected ({sdim}, {fdim}) eigenvalues, expected ({n}, {n})",
            eigenvalues=tuple(eigs),
        )
    v1 = _procrustes_align(q_near[:, :n], slow_ref)
    v2 = _procrustes_align(q_far[:, :n], fast_ref)
    v = np.hstack([v1, v2])
    cond = float(np.linalg.cond(v))
    if not np.isfinite(cond) or cond > 1e12:
        raise InvertibilityError(f"conjugator is numerically singular (cond = {cond:.3e})")

    g1 = np.linalg.solve(v, g @ v)
    slow = g1[:n, :n]
    fast = g1[n:, n:]
    off = max(np.linalg.norm(g1[:n, n:]), np.linalg.norm(g1[n:, :n]))
    if off > 1e-8 * max(1.0, np.linalg.norm(g)):
        raise InternalConsistencyError(f"block off-diagonal defect {off:.3e} too large")
    return BlockStructure(
        conjugator=v, slow_block=slow, fast_block=fast, cond=cond, split_radius=r_split
    )


def rescaled_slow_block(
    system: SystemDefinition, p, direction: Frequency, rho: float, probe: float = 1e-6
) -> np.ndarray:
    """Slow block divided by the radius; at radius 0 the limit is taken by
    Richardson extrapolation along the direction."""
    if rho > 0:
        bs = low_freq_block_diag(system, p, from_polar(PolarFrequency(direction, rho)))
        return bs.slow_block / rho
    h1 = low_freq_block_diag(system, p, direction.scaled(probe)).slow_block / probe
    h2 = low_freq_block_diag(system, p, direction.scaled(2 * probe)).slow_block / (2 * probe)
    return 2.0 * h1 - h2


def _neville_matrices(ts: Sequence[float], tables: Sequence[np.ndarray]) -> np.ndarray:
    tab = [t.copy() for t in tables]
    n = len(tab)
    for k in range(1, n):
        for i in range(n - k):
            t0, t1 = ts[i], ts[i + k]
            tab[i] = (t0 * tab[i + 1] - t1 * tab[i]) / (t0 - t1)
    return tab[0]


def hyperbolic_stable_limit(
    system: SystemDefinition,
    p,
    direction: Frequency,
    tol: float = 1e-9,
    max_steps: int = 40,
    start_gamma: float = 0.1,
) -> Subspace:
    """Stable subspace of the first-order limit matrix, extended to gamma = 0.

    For positive gamma the ordered-Schur split applies directly.  On the
    gamma = 0 boundary the subspace is obtained as the limit along the
    regularized sequence gamma_m = start * 2^{-m}, accepted once consecutive
    gap-metric increments fall below ``tol``.  At directions where a root of
    the normal dispersion relation is multiple, the increments decay like a
    fractional power and stall above ``tol``; the limit is then recovered by
    polynomial extrapolation of the spectral projectors in t = gamma^{1/nu}
    (nu estimated from the measured decay ratio) and accepted only if the
    extrapolated matrix is numerically a projector of the expected rank.
    """
    if direction.norm == 0:
        raise InvalidInputError("direction must be nonzero")
    if direction.gamma < 0:
        raise InvalidInputError("gamma must be nonnegative")
    if direction.gamma > 0:
        return spectral_split(assemble_h0(system, p, direction)).stable

    def stable_at(gam: float) -> Subspace:
        freq = Frequency(direction.tau, direction.eta, gam)
        freq = freq.scaled(1.0 / freq.norm)
        return spectral_split(assemble_h0(system, p, freq)).stable

    gaps = []
    prev = stable_at(start_gamma)
    current = prev
    for m in range(1, max_steps + 1):
        current = stable_at(start_gamma * 2.0**-m)
        if current.dim != prev.dim:
            raise ExtensionFailureError(
                "stable dimension changed along the regularizing sequence", gap_trace=gaps
            )
        g = subspace_gap(current, prev)
        gaps.append(g)
        if g < tol:
            return current
        prev = current

    # Plateau: estimate the decay order from the tail ratios, then
    # extrapolate projectors to gamma = 0.
    tail = [g for g in gaps[-8:] if g > 0]
    nu_est = 1
    if len(tail) >= 2:
        ratios = [b / a for a, b in zip(tail[:-1], tail[1:]) if a > 0 and 0 < b / a < 1]
        if ratios:
            r = float(np.exp(np.mean(np.log(ratios))))
            nu_est = int(np.clip(round(np.log(2.0) / max(-np.log(r), 1e-12)), 1, 6))
    want_dim = current.dim

    for nu in dict.fromkeys([nu_est, max(1, nu_est - 1), nu_est + 1]):
        nodes = [start_gamma * 4.0**-j for j in range(7)]
        ts = [g ** (1.0 / nu) for g in nodes]
        projs = [stable_at(g).projector() for g in nodes]
        p_lim = _neville_matrices(ts, projs)
        p_lim = 0.5 * (p_lim + p_lim.conj().T)
        if np.linalg.norm(p_lim @ p_lim - p_lim) > 1e-8:
            continue
        w, vecs = np.linalg.eigh(p_lim)
        keep = vecs[:, w > 0.5]
        if keep.shape[1] != want_dim:
            continue
        return Subspace.from_span(keep)

    raise ExtensionFailureError(
        f"gap plateau above tolerance {tol:.1e} after {max_steps} steps and the "
        "projector extrapolation did not produce a clean projector",
        gap_trace=gaps,
    )


def limit_bundle(system: SystemDefinition, p, direction: Frequency) -> Subspace:
    """Limiting stable bundle at radius 0: the first-order stable space plus
    the stable space of the viscous fast block, embedded through the
    zeta = 0 conjugator."""
    n = system.n_state
    hyp = hyperbolic_stable_limit(system, p, direction)
    b_dd = system.viscosity(p, system.n_space, system.n_space)
    a_d = system.convection(p, system.n_space)
    p0 = np.linalg.solve(b_dd, a_d)
    par = spectral_split(p0).stable
    bs0 = low_freq_block_diag(system, p, Frequency.zero(system.n_space))
    cols = np.hstack(
        [bs0.conjugator[:, :n] @ hyp.basis, bs0.conjugator[:, n:] @ par.basis]
    )
    if cols.shape[1] != n:
        raise InternalConsistencyError(
            f"stable dimensions sum to {cols.shape[1]}, expected {n} "
            f"(first-order {hyp.dim} + viscous {par.dim})"
        )
    return Subspace.from_span(cols)


def decomposed_stable_space(system: SystemDefinition, p, pf: PolarFrequency) -> Subspace:
    """Stable subspace assembled from the block structure at zeta = rho * zcheck
    (the decomposition route, for consistency checks against the direct split)."""
    if pf.radius <= 0:
        raise InvalidInputError("decomposition route needs a positive radius")
    n = system.n_state
    bs = low_freq_block_diag(system, p, from_polar(pf))
    hcheck = bs.slow_block / pf.radius
    e_h = spectral_split(hcheck).stable
    e_p = spectral_split(bs.fast_block).stable
    cols = np.hstack([bs.conjugator[:, :n] @ e_h.basis, bs.conjugator[:, n:] @ e_p.basis])
    if cols.shape[1] != n:
        raise InternalConsistencyError("decomposed stable dimensions do not sum to N")
    return Subspace.from_span(cols)


@dataclass(frozen=True)
class SweepRow:
    rho: float
    gap: float
    error: Optional[str] = None


def continuity_sweep(system: SystemDefinition, p, direction: Frequency, rho_list) -> list:
    """Gap between the stable subspace at radius rho and the limiting bundle,
    tabulated along ``rho_list``.  Row-level failures are recorded, not raised."""
    rhos = [float(r) for r in rho_list]
    if any(r <= 0 for r in rhos):
        raise InvalidInputError("all sweep radii must be positive")
    if direction.gamma < 0:
        raise InvalidInputError("gamma must be nonnegative")
    reference = limit_bundle(system, p, direction)
    rows = []
    for rho in rhos:
        try:
            g = assemble_full_symbol(system, p, from_polar(PolarFrequency(direction, rho)))
            stable = spectral_split(g.matrix).stable
            rows.append(SweepRow(rho=rho, gap=subspace_gap(stable, reference)))
        except Exception as exc:  # per-row capture, sweep continues
            rows.append(SweepRow(rho=rho, gap=float("nan"), error=f"{type(exc).__name__}: {exc}"))
    return rows
