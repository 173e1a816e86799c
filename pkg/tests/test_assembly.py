import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import naive_matrices, p1_mass_full
from spls.analysis import mass_scaling_bound
from spls.assembly import (assemble_block_mass, assemble_coupling, assemble_load,
                           assemble_stiffness, assemble_system,
                           write_coo)
from spls.fespace import build_broken_space, build_test_space, evaluate_broken
from spls.mesh import Mesh, unit_cube_mesh, unit_square_mesh, uniform_refine
from spls.problems import CoefficientField, make_problem
from spls.quadrature import simplex_quadrature


def one_triangle():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return Mesh(v, np.array([[0, 1, 2]]), np.array([1]), None)


def test_local_stiffness_unit_triangle():
    from spls.assembly import _full_stiffness
    m = one_triangle()
    K = _full_stiffness(m, np.ones(1)).toarray()
    want = np.array([[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])
    np.testing.assert_allclose(K, want, atol=1e-14)
    np.testing.assert_allclose(K.sum(axis=1), 0, atol=1e-14)


def test_local_mass_unit_triangle():
    m = one_triangle()
    W = build_broken_space(m)
    M = assemble_block_mass(W, CoefficientField.constant(1.0)).toarray()
    ref = (0.5 / 12) * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]])
    np.testing.assert_allclose(M[:3, :3], ref, atol=1e-14)
    np.testing.assert_allclose(M[3:, 3:], ref, atol=1e-14)
    assert np.all(M[:3, 3:] == 0)


def test_stiffness_center_diagonal():
    V = build_test_space(unit_square_mesh(2, "none"))
    S = assemble_stiffness(V).toarray()
    assert S.shape == (1, 1)
    assert S[0, 0] == pytest.approx(4.0, abs=1e-14)


def test_load_examples():
    V = build_test_space(unit_square_mesh(2, "none"))
    assert assemble_load(V, lambda x, t: np.ones(len(x)))[0] == pytest.approx(0.25, abs=1e-15)
    np.testing.assert_array_equal(assemble_load(V, lambda x, t: np.zeros(len(x))), [0.0])


def test_load_support_over_three(cross4):
    V = build_test_space(cross4)
    F = assemble_load(V, lambda x, t: np.ones(len(x)))
    area = np.bincount(cross4.cells.ravel(), weights=np.repeat(cross4.volumes, 3))
    np.testing.assert_allclose(F, area[V.free_dofs] / 3, atol=1e-15)


@pytest.mark.parametrize("make", [lambda: unit_square_mesh(4, "cross-at-half"), lambda: unit_cube_mesh(2)])
def test_stiffness_spd(make):
    S = assemble_stiffness(build_test_space(make())).toarray()
    np.testing.assert_allclose(S, S.T, atol=1e-15)
    assert np.linalg.eigvalsh(S).min() > 0


def test_coupling_rows_annihilate_constants(cross4):
    V = build_test_space(cross4)
    W = build_broken_space(cross4)
    coef = CoefficientField.piecewise({1: 1, 2: 3, 3: 0.5, 4: 7})
    Gall = assemble_coupling(V, W, coef, columns=np.arange(cross4.n_vertices))
    np.testing.assert_allclose(Gall @ np.ones(cross4.n_vertices), 0, atol=1e-14)


def test_coupling_scales_with_c(cross4):
    V = build_test_space(cross4)
    W = build_broken_space(cross4)
    tags = (1, 2, 3, 4)
    G1 = assemble_coupling(V, W, CoefficientField.constant(1.0, tags)).toarray()
    G5 = assemble_coupling(V, W, CoefficientField.constant(5.0, tags)).toarray()
    np.testing.assert_allclose(G5, 5 * G1, atol=1e-14)


def test_block_mass_structure(cross4):
    W = build_broken_space(cross4)
    coef = CoefficientField.piecewise({1: 1, 2: 3, 3: 0.5, 4: 7})
    M = assemble_block_mass(W, coef).toarray()
    np.testing.assert_allclose(M, M.T, atol=1e-15)
    assert np.linalg.eigvalsh(M).min() > 0
    sub = W.dof_subdomain
    comp = W.dof_component
    off = (sub[:, None] != sub[None, :]) | (comp[:, None] != comp[None, :])
    assert np.all(M[off] == 0)
    # each component block is a times the submesh P1 mass
    full = p1_mass_full(cross4)
    for i, tag in enumerate(W.subdomains):
        verts = W.vertex_lists[i]
        sel = cross4.tags == tag
        subm = Mesh(cross4.vertices, cross4.cells[sel], cross4.tags[sel], None)
        ref = p1_mass_full(subm)[np.ix_(verts, verts)]
        blk = M[W.block(i), W.block(i)]
        n = len(verts)
        np.testing.assert_allclose(blk[:n, :n], coef.values[tag] * ref, atol=1e-14)
        np.testing.assert_allclose(blk[n:, n:], coef.values[tag] * ref, atol=1e-14)
    assert full.sum() == pytest.approx(1.0)


def test_block_mass_spectrum_scales_with_a():
    m = unit_square_mesh(4, "none")
    W = build_broken_space(m)
    e1 = np.linalg.eigvalsh(assemble_block_mass(W, CoefficientField.constant(1.0)).toarray())
    e4 = np.linalg.eigvalsh(assemble_block_mass(W, CoefficientField.constant(4.0)).toarray())
    np.testing.assert_allclose(e4 / e1, 4.0, rtol=1e-12)


@pytest.mark.parametrize("name,params,n", [
    ("intersecting", {"c": 1 / 3}, 4),
    ("singular", {"k": 5}, 2),
    ("cube", {"k": 5}, 2),
    ("oscillatory", {"eps": 0.4}, 4),
])
def test_matrices_match_naive_oracle(name, params, n):
    pb = make_problem(name, **params)
    m = pb.make_mesh(n)
    quad = 2 if pb.coefficient.piecewise_constant else 6
    sys_ = assemble_system(m, pb, quad_degree=quad)
    a_of_x = lambda x, t: float(pb.coefficient(x[None, :], np.array([t]))[0])
    S, SA, G, M = naive_matrices(m, sys_.W, a_of_x, degree=6)
    free = sys_.V.free_dofs
    tol = 1e-14 if pb.coefficient.piecewise_constant else 1e-10
    scale = max(1.0, np.abs(SA).max())
    np.testing.assert_allclose(sys_.S.toarray(), S[np.ix_(free, free)], atol=1e-13)
    np.testing.assert_allclose(sys_.S_A.toarray(), SA[np.ix_(free, free)], atol=tol * scale * 10)
    np.testing.assert_allclose(sys_.G.toarray(), G[:, free], atol=tol * scale * 10)
    np.testing.assert_allclose(sys_.M_A.toarray(), M, atol=tol * scale)


@given(st.integers(0, 2**32 - 1))
def test_adjoint_consistency(seed):
    rng = np.random.default_rng(seed)
    m = unit_square_mesh(4, "cross-at-half")
    pb = make_problem("intersecting", c=rng.uniform(0.05, 20))
    sys_ = assemble_system(m, pb)
    v = rng.normal(size=sys_.V.ndofs)
    gamma = rng.normal(size=sys_.W.ndofs)
    # direct quadrature of int <a q, grad v_h> with an independent evaluation of q
    rule = simplex_quadrature(2, 4)
    vals = evaluate_broken(sys_.W, gamma, np.arange(m.n_cells), rule.points, pb.coefficient)
    grad = np.einsum("ck,ckd->cd", sys_.V.extend(v)[m.cells], m.hat_gradients)
    direct = np.sum(m.volumes * np.einsum("cqd,cd,q->c", vals, grad, rule.weights))
    assert gamma @ (sys_.G @ v) == pytest.approx(direct, abs=1e-12 * max(1, abs(direct)))


def test_mass_scaling_bound_stays_bounded():
    pb = make_problem("intersecting", c=1 / 3)
    m = pb.make_mesh(4)
    bounds = []
    for _ in range(3):
        bounds.append(mass_scaling_bound(assemble_system(m, pb)))
        m = uniform_refine(m)
    assert max(bounds) < 2.5
    assert bounds[-1] / bounds[-2] < 1.2


def test_boundary_columns_only_for_lifted_problems():
    s = make_problem("singular", k=5)
    sys_ = assemble_system(s.make_mesh(4), s)
    assert sys_.has_boundary_data
    assert sys_.G_D.shape == (sys_.W.ndofs, len(sys_.V.dirichlet_dofs))
    i = make_problem("intersecting", c=1.0)
    assert not assemble_system(i.make_mesh(4), i).has_boundary_data


def test_assembly_is_deterministic(cross4):
    pb = make_problem("intersecting", c=0.01)
    a = assemble_system(cross4, pb)
    b = assemble_system(cross4, pb)
    for name in ("S", "G", "M_A", "S_A"):
        x, y = getattr(a, name), getattr(b, name)
        assert np.array_equal(x.indptr, y.indptr) and np.array_equal(x.data, y.data)


def test_write_coo(tmp_path):
    V = build_test_space(unit_square_mesh(4, "none"))
    S = assemble_stiffness(V)
    path = tmp_path / "S.txt"
    write_coo(S, path)
    rows = np.loadtxt(path)
    assert len(rows) == S.nnz
    back = np.zeros(S.shape)
    back[rows[:, 0].astype(int), rows[:, 1].astype(int)] = rows[:, 2]
    np.testing.assert_array_equal(back, S.toarray())
