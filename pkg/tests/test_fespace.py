import numpy as np
import pytest
from hypothesis import given, strategies as st

from spls.fespace import build_broken_space, build_test_space, evaluate_broken
from spls.mesh import square2_mesh, unit_cube_mesh, unit_square_mesh
from spls.problems import CoefficientField


@pytest.mark.parametrize("make,nfree", [
    (lambda: unit_square_mesh(2, "none"), 1),
    (lambda: unit_square_mesh(4, "cross-at-half"), 9),
    (lambda: unit_cube_mesh(2), 1),
    (lambda: square2_mesh(4), 9),
])
def test_free_dofs(make, nfree):
    m = make()
    V = build_test_space(m)
    assert V.ndofs == nfree
    assert len(V.dirichlet_dofs) + V.ndofs == m.n_vertices
    assert np.all(V.dof_map[V.free_dofs] == np.arange(V.ndofs))
    assert np.all(V.dof_map[V.dirichlet_dofs] == -1)


def test_center_is_free_dof():
    m = unit_square_mesh(2, "none")
    V = build_test_space(m)
    np.testing.assert_allclose(m.vertices[V.free_dofs[0]], [0.5, 0.5])
    full = V.extend(np.array([2.0]))
    assert full.sum() == 2.0 and full[V.free_dofs[0]] == 2.0


def test_broken_dofs_vertical_interface():
    W = build_broken_space(unit_square_mesh(2, "vertical-at-half"))
    assert [len(v) for v in W.vertex_lists] == [6, 6]
    assert W.ndofs == 24


def test_broken_single_subdomain():
    m = unit_square_mesh(4, "none")
    W = build_broken_space(m)
    assert W.ndofs == m.dim * m.n_vertices


def test_broken_cube_counts(cube2):
    # halves x < 1/2 and x > 1/2 each hold 2x3x3 vertices
    assert build_broken_space(cube2).ndofs == 2 * 3 * 18


def test_broken_cross_counts():
    # each quadrant of the n=4 grid is a 3x3 vertex patch
    W = build_broken_space(unit_square_mesh(4, "cross-at-half"))
    assert W.ndofs == 4 * 2 * 9


def test_cell_dofs_consistent():
    m = unit_square_mesh(4, "cross-at-half")
    W = build_broken_space(m)
    # every cell's dofs point at its own vertices, in its own subdomain, right component
    np.testing.assert_array_equal(W.dof_vertex[W.cell_dofs], np.repeat(m.cells[..., None], 2, axis=2))
    np.testing.assert_array_equal(W.dof_subdomain[W.cell_dofs[:, 0, 0]], m.tags)
    np.testing.assert_array_equal(W.dof_component[W.cell_dofs], np.broadcast_to([0, 1], W.cell_dofs.shape))


def test_evaluate_zero_and_constant():
    m = unit_square_mesh(2, "none")
    W = build_broken_space(m)
    one = CoefficientField.constant(1.0)
    np.testing.assert_array_equal(evaluate_broken(W, np.zeros(W.ndofs), 3, [1 / 3] * 3, one), [0, 0])
    c = W.interpolate(lambda x, t: np.tile([1.0, 0.0], (len(x), 1)))
    np.testing.assert_allclose(evaluate_broken(W, c, 5, [0.2, 0.3, 0.5], one), [1, 0], atol=1e-15)
    three = CoefficientField.constant(3.0)
    np.testing.assert_allclose(evaluate_broken(W, c, 5, [0.2, 0.3, 0.5], three), [3, 0], atol=1e-15)


def test_evaluate_size_errors():
    W = build_broken_space(unit_square_mesh(2, "none"))
    one = CoefficientField.constant(1.0)
    with pytest.raises(ValueError):
        evaluate_broken(W, np.zeros(3), 0, [1 / 3] * 3, one)
    with pytest.raises(ValueError):
        evaluate_broken(W, np.zeros(W.ndofs), 0, [0.5, 0.5], one)


@given(st.integers(0, 2**32 - 1))
def test_linear_fields_reproduced(seed):
    # P1 per subdomain reproduces piecewise linear fields exactly, with jumps across interfaces
    rng = np.random.default_rng(seed)
    m = unit_square_mesh(4, "cross-at-half")
    W = build_broken_space(m)
    B = rng.normal(size=(5, 2, 2))
    b = rng.normal(size=(5, 2))
    field = lambda x, t: np.einsum("nij,nj->ni", B[t], x) + b[t]
    c = W.interpolate(field)
    cells = np.arange(m.n_cells)
    bary = rng.dirichlet(np.ones(3), size=4)
    got = evaluate_broken(W, c, cells, bary, CoefficientField.constant(1.0, tags=(1, 2, 3, 4)))
    pts = np.einsum("qk,ckd->cqd", bary, m.vertices[m.cells])
    want = field(pts.reshape(-1, 2), np.repeat(m.tags, 4)).reshape(got.shape)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_partition_of_unity_cube(cube2):
    W = build_broken_space(cube2)
    c = W.interpolate(lambda x, t: np.ones((len(x), 3)))
    got = evaluate_broken(W, c, np.arange(cube2.n_cells), [[0.1, 0.2, 0.3, 0.4]],
                          CoefficientField.constant(1.0, tags=(1, 2)))
    np.testing.assert_allclose(got, 1.0, atol=1e-14)
