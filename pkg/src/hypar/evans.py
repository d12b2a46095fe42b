"""Boundary determinants: transversality of the decaying subspace against the
boundary kernel, its zero-frequency limit, the low-frequency factorization
diagnostic, and grid scans for a uniform lower bound.

All comparisons use the modulus of the determinant.  With orthonormal bases on
both factors the value itself is only defined up to a unit-modulus factor, so
the modulus is the quantity with meaning.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from .errors import InsufficientDataError, InvalidInputError
from .subspaces import Subspace, limit_bundle, spectral_split
from .symbols import Frequency, PolarFrequency, assemble_full_symbol, from_polar
from .systems import BoundaryData, SystemDefinition

__all__ = [
    "EvansResult",
    "FactorizationDiagnostic",
    "ScanRow",
    "StabilityScan",
    "det_pair",
    "evans_at",
    "factorization_sweep",
    "kernel_subspace",
    "lopatinski_limit",
    "uniform_stability_scan",
]


@dataclass(frozen=True)
class EvansResult:
    """Determinant of a pair of subspaces against the ambient space.

    ``value`` is the determinant of the matrix whose columns are orthonormal
    bases of the two factors; ``dim_defect`` is how far the two dimensions
    miss spanning (by count); nonzero defect forces ``value == 0`` by
    convention.
    """

    value: complex
    modulus: float
    dim_defect: int


def det_pair(e: Subspace, f: Subspace) -> EvansResult:
    """Pair two subspaces by the determinant of their stacked orthonormal bases.

    Returns value 0 with the recorded defect when the dimensions do not add up
    to the ambient dimension.  The modulus is invariant under unitary re-basis
    of either factor and sits in [0, 1] by Hadamard's bound.
    """
    if e.ambient_dim != f.ambient_dim:
        raise InvalidInputError(
            f"ambient dimensions differ: {e.ambient_dim} vs {f.ambient_dim}"
        )
    n = e.ambient_dim
    defect = e.dim + f.dim - n
    if defect != 0:
        return EvansResult(value=0j, modulus=0.0, dim_defect=defect)
    mat = np.hstack([e.basis, f.basis])
    value = complex(np.linalg.det(mat))
    return EvansResult(value=value, modulus=abs(value), dim_defect=0)


def kernel_subspace(mat: np.ndarray) -> Subspace:
    """Orthonormal basis of the kernel of a boundary matrix."""
    mat = np.asarray(mat, dtype=complex)
    ker = sla.null_space(mat)
    if ker.size == 0:
        ker = np.zeros((mat.shape[1], 0), dtype=complex)
    return Subspace(basis=ker)


def evans_at(
    system: SystemDefinition,
    boundary: BoundaryData,
    p,
    zeta: Frequency,
) -> EvansResult:
    """Determinant of the decaying subspace against the boundary kernel at a
    nonzero frequency.

    Near-axis failures of the spectral split propagate; the caller decides
    whether to record or re-raise them.
    """
    if zeta.norm == 0.0:
        raise InvalidInputError("evans_at needs a nonzero frequency")
    if zeta.gamma < 0:
        raise InvalidInputError("gamma must be nonnegative")
    g = assemble_full_symbol(system, p, zeta).matrix
    split = spectral_split(g)
    gam = boundary.matrix(p, zeta)
    return det_pair(split.stable, kernel_subspace(gam))


def lopatinski_limit(
    system: SystemDefinition,
    boundary: BoundaryData,
    p,
    zcheck: Frequency,
) -> EvansResult:
    """Zero-radius substitute for the determinant: pair the limiting bundle
    with the boundary kernel at frequency zero."""
    lb = limit_bundle(system, p, zcheck)
    gam = boundary.matrix(p, None)
    return det_pair(lb, kernel_subspace(gam))


@dataclass(frozen=True)
class FactorizationDiagnostic:
    """Table of determinant moduli along a ray, with the fitted leading factor.

    ``beta_estimate`` is the fitted zero-radius limit of modulus / delta_lim;
    when ``delta_lim`` vanishes the ratio is meaningless and
    ``beta_indeterminate`` is set (with ``beta_estimate`` parked at 0).
    ``residual`` is the largest deviation |modulus - beta*delta_lim| over the
    rows used for the fit.
    """

    rho_table: Tuple[Tuple[float, float], ...]
    delta_lim: float
    beta_estimate: float
    residual: float
    beta_indeterminate: bool = False
    row_errors: Tuple[Tuple[float, str], ...] = field(default=())


def factorization_sweep(
    system: SystemDefinition,
    boundary: BoundaryData,
    p,
    zcheck: Frequency,
    rho_list: Sequence[float],
) -> FactorizationDiagnostic:
    """Tabulate the determinant modulus along ``rho * zcheck`` and fit its
    zero-radius limit against the limiting determinant.

    ``rho_list`` must be strictly decreasing and positive.  Rows where the
    spectral split fails are recorded with the error text; the fit uses the
    three smallest radii that evaluated successfully and needs at least three
    of them.
    """
    rho_list = [float(r) for r in rho_list]
    if not rho_list or any(r <= 0 for r in rho_list):
        raise InvalidInputError("rho_list must contain positive radii")
    if any(b >= a for a, b in zip(rho_list, rho_list[1:])):
        raise InvalidInputError("rho_list must be strictly decreasing")
    if zcheck.gamma < 0:
        raise InvalidInputError("gamma of the direction must be nonnegative")

    direction = zcheck.scaled(1.0 / zcheck.norm)
    delta_lim = lopatinski_limit(system, boundary, p, zcheck).modulus

    rows = []
    errors = []
    for rho in rho_list:
        zeta = from_polar(PolarFrequency(direction, rho))
        try:
            res = evans_at(system, boundary, p, zeta)
        except Exception as exc:  # noqa: BLE001 - per-row capture is the contract
            errors.append((rho, f"{type(exc).__name__}: {exc}"))
            continue
        rows.append((rho, res.modulus))
    if len(rows) < 3:
        raise InsufficientDataError(
            f"factorization fit needs >= 3 valid rows, got {len(rows)}"
        )

    tail = sorted(rows, key=lambda t: t[0])[:3]
    xs = np.array([t[0] for t in tail])
    ys = np.array([t[1] for t in tail])
    if delta_lim <= 1e-12:
        beta = 0.0
        indeterminate = True
        residual = float(np.max(ys))
    else:
        slope_intercept = np.polyfit(xs, ys / delta_lim, 1)
        beta = float(slope_intercept[1])
        indeterminate = False
        residual = float(np.max(np.abs(ys - beta * delta_lim)))
    return FactorizationDiagnostic(
        rho_table=tuple(rows),
        delta_lim=delta_lim,
        beta_estimate=beta,
        residual=residual,
        beta_indeterminate=indeterminate,
        row_errors=tuple(errors),
    )


@dataclass(frozen=True)
class ScanRow:
    p: Tuple[float, ...]
    direction: Tuple[float, ...]
    rho: float
    modulus: Optional[float]
    error: Optional[str] = None


@dataclass(frozen=True)
class StabilityScan:
    rows: Tuple[ScanRow, ...]
    min_modulus: float
    argmin: Tuple[Tuple[float, ...], Tuple[float, ...], float]
    threshold: float
    passed: bool


def uniform_stability_scan(
    system: SystemDefinition,
    boundary: BoundaryData,
    p_grid: Sequence,
    zcheck_grid: Sequence[Frequency],
    rho_grid: Sequence[float],
    threshold: float = 0.0,
) -> StabilityScan:
    """Minimum determinant modulus over a (parameter, direction, radius) grid.

    Radius-zero rows are evaluated through the limiting determinant; rows that
    fail are kept with their error text and skipped by the minimum.  Ties for
    the arg-min resolve to the first row in lexicographic grid order.  The scan
    never aborts on a single bad row, but it refuses to report a minimum when
    nothing evaluated.
    """
    rho_grid = [float(r) for r in rho_grid]
    if any(r < 0 for r in rho_grid):
        raise InvalidInputError("rho grid entries must be nonnegative")
    rows = []
    best = None
    for p in p_grid:
        for zcheck in zcheck_grid:
            if zcheck.gamma < 0:
                raise InvalidInputError("direction gamma must be nonnegative")
            direction = zcheck.scaled(1.0 / zcheck.norm)
            for rho in rho_grid:
                coords = (
                    tuple(np.atleast_1d(np.asarray(p, dtype=float)).tolist()),
                    direction.as_tuple(),
                    rho,
                )
                try:
                    if rho == 0.0:
                        res = lopatinski_limit(system, boundary, p, direction)
                    else:
                        zeta = from_polar(PolarFrequency(direction, rho))
                        res = evans_at(system, boundary, p, zeta)
                except Exception as exc:  # noqa: BLE001 - per-row capture
                    rows.append(
                        ScanRow(
                            p=coords[0],
                            direction=coords[1],
                            rho=rho,
                            modulus=None,
                            error=f"{type(exc).__name__}: {exc}",
                        )
                    )
                    continue
                rows.append(
                    ScanRow(
                        p=coords[0],
                        direction=coords[1],
                        rho=rho,
                        modulus=res.modulus,
                    )
                )
                if best is None or res.modulus < best[0]:
                    best = (res.modulus, coords)
    if best is None:
        raise InsufficientDataError("no grid row evaluated successfully")
    min_modulus, argmin = best
    return StabilityScan(
        rows=tuple(rows),
        min_modulus=min_modulus,
        argmin=argmin,
        threshold=threshold,
        passed=min_modulus >= threshold,
    )
