"""System definitions and structural hypothesis checks.

A first-order hyperbolic system with second-order (viscous) terms is
described by its coefficient matrices: convection matrices ``A_j(p)`` for
each space direction ``j = 1..d`` and viscosity matrices ``B_jk(p)``.  The
last space direction ``d`` is the one normal to the boundary.  Everything
downstream (symbol assembly, subspaces, symmetrizers, Evans determinants)
consumes a :class:`SystemDefinition` plus a :class:`BoundaryData`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import EvaluationError, InvalidInputError, NotFoundError

__all__ = [
    "ParamBox",
    "SystemDefinition",
    "BoundaryData",
    "HypothesisTolerances",
    "HypothesisReport",
    "CatalogEntry",
    "validate_hypotheses",
    "builtin_examples",
    "get_example",
]


@dataclass(frozen=True)
class ParamBox:
    """Axis-aligned box of admissible parameter vectors.

    The box is the *stated* domain on which the structural hypotheses are
    claimed; the coefficient maps themselves are total functions and may be
    evaluated outside of it (sweeps do).
    """

    lower: tuple
    upper: tuple
    names: tuple = ()

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise InvalidInputError("parameter box bounds differ in length")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise InvalidInputError("parameter box has empty sides")

    @property
    def dim(self):
        return len(self.lower)

    def contains(self, p) -> bool:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        if p.size != self.dim:
            return False
        return all(lo <= v <= hi for lo, v, hi in zip(self.lower, p, self.upper))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Uniform interior samples, shape (count, dim)."""
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        return lo + (hi - lo) * rng.random((count, self.dim))


def _check_coeff(mat, n, what):
    mat = np.asarray(mat)
    if mat.shape != (n, n):
        raise EvaluationError(f"{what} has shape {mat.shape}, expected {(n, n)}")
    if not np.all(np.isfinite(mat)):
        raise EvaluationError(f"{what} contains non-finite entries")
    if np.iscomplexobj(mat) and np.max(np.abs(mat.imag)) > 0:
        raise EvaluationError(f"{what} must be real-valued")
    return np.asarray(mat, dtype=float)


@dataclass(frozen=True)
class SystemDefinition:
    """Coefficients and dimensions of a hyperbolic-parabolic system.

    Parameters
    ----------
    n_state : int
        State dimension N.
    n_space : int
        Space dimension d (direction d is normal to the boundary).
    n_params : int
        Number of scalar parameters.
    conv : callable
        ``conv(p, j) -> (N, N) real array`` for j = 1..d.
    visc : callable
        ``visc(p, j, k) -> (N, N) real array`` for j, k = 1..d.
    param_domain : ParamBox
        Stated domain of validity of the hypotheses.
    """

    n_state: int
    n_space: int
    n_params: int
    conv: Callable[[np.ndarray, int], np.ndarray]
    visc: Callable[[np.ndarray, int, int], np.ndarray]
    param_domain: ParamBox
    name: str = ""

    def convection(self, p, j: int) -> np.ndarray:
        """A_j(p), validated real N-by-N."""
        if not 1 <= j <= self.n_space:
            raise InvalidInputError(f"direction index {j} outside 1..{self.n_space}")
        return _check_coeff(self.conv(p, j), self.n_state, f"A_{j}(p)")

    def viscosity(self, p, j: int, k: int) -> np.ndarray:
        """B_jk(p), validated real N-by-N."""
        if not (1 <= j <= self.n_space and 1 <= k <= self.n_space):
            raise InvalidInputError(f"direction pair ({j},{k}) outside 1..{self.n_space}")
        return _check_coeff(self.visc(p, j, k), self.n_state, f"B_{j}{k}(p)")

    def convection_symbol(self, p, xi) -> np.ndarray:
        """sum_j xi_j A_j(p) for a real direction xi of length d."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        if xi.size != self.n_space:
            raise InvalidInputError("xi has wrong length")
        out = np.zeros((self.n_state, self.n_state))
        for j in range(1, self.n_space + 1):
            out += xi[j - 1] * self.convection(p, j)
        return out

    def viscosity_symbol(self, p, xi) -> np.ndarray:
        """sum_jk xi_j xi_k B_jk(p)."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        if xi.size != self.n_space:
            raise InvalidInputError("xi has wrong length")
        out = np.zeros((self.n_state, self.n_state))
        for j in range(1, self.n_space + 1):
            for k in range(1, self.n_space + 1):
                out += xi[j - 1] * xi[k - 1] * self.viscosity(p, j, k)
        return out


@dataclass(frozen=True)
class BoundaryData:
    """Boundary matrix map ``(p, zeta) -> (N, 2N)`` with full row rank N."""

    matrix_of: Callable
    n_state: int

    def matrix(self, p, zeta=None) -> np.ndarray:
        g = np.asarray(self.matrix_of(p, zeta), dtype=complex)
        n = self.n_state
        if g.shape != (n, 2 * n):
            raise InvalidInputError(f"boundary matrix has shape {g.shape}, expected {(n, 2 * n)}")
        if np.linalg.matrix_rank(g, tol=1e-10 * max(1.0, np.linalg.norm(g))) != n:
            raise InvalidInputError("boundary matrix is rank deficient")
        return g


@dataclass(frozen=True)
class HypothesisTolerances:
    imag_tol: float = 1e-8
    eigvec_cond_max: float = 1e8
    cluster_rel_gap: float = 1e-6
    det_min: float = 1e-12


def _multiplicity_pattern(eigs: np.ndarray, rel_gap: float) -> tuple:
    """Sorted multiplicities of a real spectrum, clustered by relative gap."""
    vals = np.sort(eigs.real)
    scale = max(np.max(np.abs(vals)), 1e-300)
    groups = [1]
    for a, b in zip(vals[:-1], vals[1:]):
        if b - a <= rel_gap * scale:
            groups[-1] += 1
        else:
            groups.append(1)
    return tuple(sorted(groups))


@dataclass
class HypothesisReport:
    """Verdicts for (H1)-(H3) with concrete witnesses.

    A failed verdict always carries the witnessing sample.
    """

    h1_pass: bool
    h1_witness: dict
    h2_pass: bool
    h2_constant: float
    h2_witness: dict
    h3_pass: bool
    h3_min_det: float
    h3_witness: dict
    sample_count: int

    @property
    def all_pass(self) -> bool:
        return self.h1_pass and self.h2_pass and self.h3_pass


def validate_hypotheses(system: SystemDefinition, samples, tolerances=None) -> HypothesisReport:
    """Check the structural hypotheses on a sample set.

    (H1): eigenvalues of the convection symbol are real (imaginary parts
    below tolerance), semi-simple (eigenvector condition number below a
    threshold), with a multiplicity pattern that is identical across all
    samples.  (H2): the full second-order symbol ``i*conv + visc`` has
    eigenvalue real parts bounded below by ``c |xi|^2`` with c > 0; the
    empirical c and its minimizer are reported.  (H3): ``det A_d(p)`` is
    bounded away from zero over the sampled parameters.

    Parameters
    ----------
    samples : sequence of (p, xi)
        Parameter vectors and nonzero real directions.
    """
    samples = list(samples)
    if not samples:
        raise InvalidInputError("empty sample set")
    tol = tolerances or HypothesisTolerances()

    h1_pass = True
    h1_witness = {"max_imag": 0.0, "max_eigvec_cond": 1.0, "pattern": None, "sample": None}
    h2_constant = np.inf
    h2_witness = {"sample": None}
    h3_min_det = np.inf
    h3_witness = {"sample": None}

    pattern0 = None
    for p, xi in samples:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        if not np.any(xi):
            raise InvalidInputError("xi samples must be nonzero")
        sym = system.convection_symbol(p, xi)
        if not np.all(np.isfinite(sym)):
            raise EvaluationError("non-finite convection symbol")
        eigs, vecs = np.linalg.eig(sym)
        max_imag = float(np.max(np.abs(eigs.imag)))
        cond = float(np.linalg.cond(vecs))
        pattern = _multiplicity_pattern(eigs, tol.cluster_rel_gap)
        if pattern0 is None:
            pattern0 = pattern
            h1_witness["pattern"] = pattern
        bad = (
            max_imag > tol.imag_tol * max(1.0, float(np.linalg.norm(sym)))
            or not np.isfinite(cond)
            or cond > tol.eigvec_cond_max
            or pattern != pattern0
        )
        if max_imag > h1_witness["max_imag"]:
            h1_witness["max_imag"] = max_imag
        if cond > h1_witness["max_eigvec_cond"]:
            h1_witness["max_eigvec_cond"] = cond
        if bad and h1_pass:
            h1_pass = False
            h1_witness["sample"] = (np.asarray(p, dtype=float), xi.copy())
            h1_witness["pattern_here"] = pattern

        full = 1j * sym + system.viscosity_symbol(p, xi)
        ratio = float(np.min(np.linalg.eigvals(full).real) / np.dot(xi, xi))
        if ratio < h2_constant:
            h2_constant = ratio
            h2_witness["sample"] = (np.asarray(p, dtype=float), xi.copy())

        det = abs(float(np.linalg.det(system.convection(p, system.n_space))))
        if det < h3_min_det:
            h3_min_det = det
            h3_witness["sample"] = np.asarray(p, dtype=float)

    return HypothesisReport(
        h1_pass=h1_pass,
        h1_witness=h1_witness,
        h2_pass=bool(h2_constant > 0.0),
        h2_constant=float(h2_constant),
        h2_witness=h2_witness,
        h3_pass=bool(h3_min_det > tol.det_min),
        h3_min_det=float(h3_min_det),
        h3_witness=h3_witness,
        sample_count=len(samples),
    )


@dataclass(frozen=True)
class CatalogEntry:
    """A named fixture: system, boundary, defaults, and hypothesis notes."""

    system: SystemDefinition
    boundary: BoundaryData
    default_params: tuple
    directions: Mapping[str, tuple] = field(default_factory=dict)
    hypotheses_note: str = ""


def _dirichlet_boundary(n: int) -> BoundaryData:
    g = np.hstack([np.eye(n), np.zeros((n, n))])
    return BoundaryData(matrix_of=lambda p, zeta=None, _g=g: _g, n_state=n)


def _advdiff1d() -> CatalogEntry:
    def conv(p, j):
        a, _nu = p
        return np.array([[float(a)]])

    def visc(p, j, k):
        _a, nu = p
        return np.array([[float(nu)]])

    sys_ = SystemDefinition(
        n_state=1,
        n_space=1,
        n_params=2,
        conv=conv,
        visc=visc,
        param_domain=ParamBox((0.25, 0.25), (4.0, 4.0), ("a", "nu")),
        name="advdiff1d",
    )
    return CatalogEntry(
        system=sys_,
        boundary=_dirichlet_boundary(1),
        default_params=(1.0, 1.0),
        directions={"base": (1.0, 0.0)},  # (tau, gamma); d=1 has no eta
        hypotheses_note=(
            "H1-H3 hold on the stated box (a, nu in [0.25, 4]); the model "
            "needs a != 0 and nu > 0, which the box enforces.  Coefficients "
            "remain evaluable for any (a, nu), e.g. a = -1 in sweeps."
        ),
    )


def _advdiff2d() -> CatalogEntry:
    def conv(p, j):
        a1, a2, _nu = p
        return np.array([[float(a1 if j == 1 else a2)]])

    def visc(p, j, k):
        _a1, _a2, nu = p
        return np.array([[float(nu) if j == k else 0.0]])

    sys_ = SystemDefinition(
        n_state=1,
        n_space=2,
        n_params=3,
        conv=conv,
        visc=visc,
        param_domain=ParamBox((-4.0, 0.25, 0.25), (4.0, 4.0, 4.0), ("a1", "a2", "nu")),
        name="advdiff2d",
    )
    return CatalogEntry(
        system=sys_,
        boundary=_dirichlet_boundary(1),
        default_params=(1.0, 1.0, 1.0),
        directions={"base": (1.0, 0.0, 0.0)},  # (tau, eta1, gamma)
        hypotheses_note=(
            "H1-H3 hold on the stated box: the scalar symbol is real, the "
            "viscosity constant nu >= 0.25, and A_d = a2 >= 0.25."
        ),
    )


_WAVE_A1 = np.array([[0.0, 1.0], [1.0, 0.0]])
_WAVE_A2 = np.array([[1.0, 0.0], [0.0, -1.0]])


def _wave2x2() -> CatalogEntry:
    def conv(p, j):
        return _WAVE_A1.copy() if j == 1 else _WAVE_A2.copy()

    def visc(p, j, k):
        return np.eye(2) if j == k else np.zeros((2, 2))

    sys_ = SystemDefinition(
        n_state=2,
        n_space=2,
        n_params=0,
        conv=conv,
        visc=visc,
        param_domain=ParamBox((), ()),
        name="wave2x2",
    )
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    return CatalogEntry(
        system=sys_,
        boundary=_dirichlet_boundary(2),
        default_params=(),
        directions={
            "base": (1.0, 0.0, 0.0),
            # tau = |eta| makes the normal dispersion relation have a double
            # root: the hard configuration for block reduction and sweeps.
            "glancing": (inv_sqrt2, inv_sqrt2, 0.0),
        },
        hypotheses_note=(
            "H1-H3 hold everywhere (no parameters): the symmetric symbol has "
            "eigenvalues +/-|xi|, identity viscosity gives c = 1, and "
            "det A_2 = -1."
        ),
    )


def builtin_examples() -> dict:
    """Catalog of named fixtures exercising the constructions."""
    return {
        "advdiff1d": _advdiff1d(),
        "advdiff2d": _advdiff2d(),
        "wave2x2": _wave2x2(),
    }


def get_example(name: str) -> CatalogEntry:
    catalog = builtin_examples()
    try:
        return catalog[name]
    except KeyError:
        raise NotFoundError(f"unknown example {name!r}; have {sorted(catalog)}") from None
