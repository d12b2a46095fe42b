import numpy as np
import pytest

from hypar.errors import EvaluationError, InvalidInputError, NotFoundError
from hypar.systems import (
    BoundaryData,
    ParamBox,
    SystemDefinition,
    builtin_examples,
    get_example,
    validate_hypotheses,
)


def _samples(system, count=25, seed=0):
    rng = np.random.default_rng(seed)
    box = system.param_domain
    ps = box.sample(rng, count) if box.dim else np.zeros((count, 0))
    out = []
    for p in ps:
        xi = rng.standard_normal(system.n_space)
        out.append((tuple(p.tolist()), xi / np.linalg.norm(xi)))
    return out


def test_catalog_names():
    cat = builtin_examples()
    assert set(cat) == {"advdiff1d", "advdiff2d", "wave2x2"}
    with pytest.raises(NotFoundError):
        get_example("nonexistent")


@pytest.mark.parametrize("name", ["advdiff1d", "advdiff2d", "wave2x2"])
def test_catalog_passes_hypotheses(name):
    entry = get_example(name)
    report = validate_hypotheses(entry.system, _samples(entry.system))
    assert report.all_pass, (name, report)


@pytest.mark.parametrize("name", ["advdiff1d", "advdiff2d", "wave2x2"])
def test_catalog_boundary_shape(name):
    entry = get_example(name)
    n = entry.system.n_state
    g = entry.boundary.matrix(entry.default_params, None)
    assert g.shape == (n, 2 * n)
    assert np.linalg.matrix_rank(g) == n


def test_coefficient_validation():
    entry = get_example("advdiff1d")
    a1 = entry.system.convection(entry.default_params, 1)
    assert a1.shape == (1, 1)
    with pytest.raises(InvalidInputError):
        entry.system.convection(entry.default_params, 2)
    with pytest.raises(InvalidInputError):
        entry.system.viscosity(entry.default_params, 0, 1)


def test_convection_symbol_sums_directions():
    entry = get_example("advdiff2d")
    p = entry.default_params
    xi = np.array([0.3, -0.7])
    expected = xi[0] * entry.system.convection(p, 1) + xi[1] * entry.system.convection(p, 2)
    assert np.allclose(entry.system.convection_symbol(p, xi), expected)


def _toy_system(conv_mat, visc_mat):
    return SystemDefinition(
        n_state=conv_mat.shape[0],
        n_space=1,
        n_params=0,
        conv=lambda p, j: conv_mat,
        visc=lambda p, j, k: visc_mat,
        param_domain=ParamBox((), ()),
        name="toy",
    )


def test_h1_rejects_complex_spectrum():
    # rotation generator: eigenvalues +-i, so the convection symbol is not real
    sys_ = _toy_system(np.array([[0.0, -1.0], [1.0, 0.0]]), np.eye(2))
    report = validate_hypotheses(sys_, [((), np.array([1.0]))])
    assert not report.h1_pass
    assert report.h1_witness["max_imag"] == pytest.approx(1.0)


def test_h2_rejects_vanishing_viscosity():
    sys_ = _toy_system(np.array([[1.0]]), np.array([[0.0]]))
    report = validate_hypotheses(sys_, [((), np.array([1.0]))])
    assert not report.h2_pass


def test_h3_rejects_singular_normal_convection():
    sys_ = _toy_system(np.array([[0.0]]), np.array([[1.0]]))
    report = validate_hypotheses(sys_, [((), np.array([1.0]))])
    assert not report.h3_pass
    assert report.h3_min_det == 0.0


def test_evaluation_error_on_bad_coefficient():
    sys_ = _toy_system(np.array([[np.nan]]), np.array([[1.0]]))
    with pytest.raises(EvaluationError):
        sys_.convection((), 1)


def test_param_box():
    box = ParamBox((0.0, 1.0), (1.0, 2.0))
    assert box.contains((0.5, 1.5))
    assert not box.contains((2.0, 1.5))
    assert not box.contains((0.5,))
    pts = box.sample(np.random.default_rng(1), 64)
    assert pts.shape == (64, 2)
    assert all(box.contains(p) for p in pts)
    with pytest.raises(InvalidInputError):
        ParamBox((1.0,), (0.0,))


def test_boundary_rank_check():
    bad = BoundaryData(matrix_of=lambda p, z=None: np.zeros((1, 2)), n_state=1)
    with pytest.raises(InvalidInputError):
        bad.matrix((), None)
    wrong_shape = BoundaryData(matrix_of=lambda p, z=None: np.eye(2), n_state=1)
    with pytest.raises(InvalidInputError):
        wrong_shape.matrix((), None)
