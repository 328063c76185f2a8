import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlfem.mesh import (Mesh1D, MeshSpec, generate_mesh, geometric_mesh,
                        graded_boundary_mesh, graded_center_mesh, mesh_stats,
                        shishkin_mesh, uniform_mesh)


def test_uniform_nodes():
    mesh = uniform_mesh(0.0, 1.0, 3)
    assert np.allclose(mesh.nodes, [0.0, 0.25, 0.5, 0.75, 1.0], atol=0, rtol=0)
    assert mesh.n_interior == 3
    assert mesh.is_uniform()


def test_graded_boundary_gamma_one_is_uniform():
    graded = graded_boundary_mesh(0.0, 1.0, 8, 1.0)
    uniform = np.linspace(0.0, 1.0, 9)
    assert np.allclose(graded.nodes, uniform, atol=1e-15)


def test_graded_boundary_known_nodes():
    # n = 4 elements, gamma = 2: x_1 = (1/2)(1/2)^2 = 0.125, midpoint, mirror.
    mesh = graded_boundary_mesh(0.0, 1.0, 4, 2.0)
    assert np.allclose(mesh.nodes, [0.0, 0.125, 0.5, 0.875, 1.0], atol=1e-16)


def test_graded_center_endpoints_and_clustering():
    mesh = graded_center_mesh(0.0, 1.0, 8, 2.0)
    h = mesh.elements
    # Elements shrink toward the midpoint from both sides.
    assert h[0] > h[3] and h[-1] > h[4]
    mid = mesh.nodes[mesh.nodes.size // 2]
    assert mid == 0.5


def test_shishkin_element_sizes():
    mesh = shishkin_mesh(0.0, 1.0, 2, 4, 0.2)
    h = mesh.elements
    assert np.allclose(h[:2], 0.1) and np.allclose(h[-2:], 0.1)
    assert np.allclose(h[2:-2], 0.15)
    assert h.size == 2 * 2 + 4


def test_geometric_layout():
    mesh = geometric_mesh(0.0, 1.0, 3, 0.5)
    # endpoints prepended/appended around q^{n-j}/2 and its mirror
    assert np.allclose(mesh.nodes, [0.0, 0.125, 0.25, 0.5, 0.75, 0.875, 1.0])
    assert mesh.nodes.size == 2 * 3 + 1
    # consecutive elements stretch by 1/q inside each half (away from the
    # boundary element)
    h = mesh.elements
    assert h[2] / h[1] == pytest.approx(2.0, rel=1e-14)


def test_stats_uniform():
    stats = mesh_stats(uniform_mesh(0.0, 1.0, 3))
    assert stats.h_min == stats.h_max == pytest.approx(0.25)
    assert stats.ratio == pytest.approx(1.0)
    assert stats.count == 4


def test_stats_graded():
    stats = mesh_stats(graded_boundary_mesh(0.0, 1.0, 4, 2.0))
    assert stats.h_min == pytest.approx(0.125)
    assert stats.h_max == pytest.approx(0.375)
    assert stats.ratio == pytest.approx(3.0)


def test_stats_geometric_left_half_ratio():
    # For q = 0.5, n = 3 the left half holds elements (0.125, 0.125, 0.25):
    # the constructed ratio within the half is 2.
    mesh = geometric_mesh(0.0, 1.0, 3, 0.5)
    left = mesh.elements[:3]
    assert left.max() / left.min() == pytest.approx(2.0)


@pytest.mark.parametrize("bad", [3, 5, 0])
def test_graded_rejects_odd_or_tiny_counts(bad):
    with pytest.raises(ValueError):
        graded_boundary_mesh(0.0, 1.0, bad, 2.0)


def test_geometric_rejects_bad_ratio():
    for q in (0.0, 1.0, 1.5, -0.1):
        with pytest.raises(ValueError):
            geometric_mesh(0.0, 1.0, 4, q)


def test_shishkin_rejects_bad_eta():
    for eta in (0.0, 0.5, 0.7, -0.2):
        with pytest.raises(ValueError):
            shishkin_mesh(0.0, 1.0, 2, 4, eta)


def test_rejects_unsorted_nodes():
    with pytest.raises(ValueError):
        Mesh1D(0.0, 1.0, np.array([0.0, 0.5, 0.4, 1.0]))


_spec_strategy = st.one_of(
    st.builds(MeshSpec, scheme=st.just("uniform"), a=st.just(-1.0), b=st.just(2.0),
              n=st.integers(1, 40)),
    st.builds(MeshSpec, scheme=st.just("graded_boundary"), a=st.just(0.0),
              b=st.just(1.0), n=st.integers(1, 20).map(lambda k: 2 * k),
              gamma=st.floats(1.0, 4.0)),
    st.builds(MeshSpec, scheme=st.just("graded_center"), a=st.just(-2.0),
              b=st.just(0.5), n=st.integers(1, 20).map(lambda k: 2 * k),
              gamma=st.floats(1.0, 4.0)),
    st.builds(MeshSpec, scheme=st.just("geometric"), a=st.just(0.0), b=st.just(1.0),
              n=st.integers(1, 25), q=st.floats(0.05, 0.95)),
    st.builds(MeshSpec, scheme=st.just("shishkin"), a=st.just(0.0), b=st.just(3.0),
              n=st.integers(1, 15), m=st.integers(1, 10),
              eta=st.floats(0.01, 0.49)),
)


@settings(max_examples=120, deadline=None)
@given(spec=_spec_strategy)
def test_invariants_hold_for_every_scheme(spec):
    mesh = generate_mesh(spec)
    nodes = mesh.nodes
    assert nodes[0] == spec.a and nodes[-1] == spec.b
    h = mesh.elements
    assert np.all(h > 0)
    assert abs(h.sum() - (spec.b - spec.a)) <= 1e-14 * (spec.b - spec.a)
    stats = mesh_stats(mesh)
    assert stats.ratio >= 1.0


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 15).map(lambda k: 2 * k), gamma=st.floats(1.0, 4.0),
       center=st.booleans())
def test_graded_meshes_are_symmetric(n, gamma, center):
    build = graded_center_mesh if center else graded_boundary_mesh
    mesh = build(-1.0, 3.0, n, gamma)
    assert np.all(np.abs(mesh.nodes + mesh.nodes[::-1] - 2.0) <= 1e-14 * 4.0)


def test_graded_hmin_decreases_under_refinement():
    gammas = (1.5, 2.0, 3.0)
    for gamma in gammas:
        h_min = [mesh_stats(graded_boundary_mesh(0.0, 1.0, n, gamma)).h_min
                 for n in (8, 16, 32, 64)]
        assert all(a > b for a, b in zip(h_min, h_min[1:]))


def test_csv_dump(tmp_path):
    mesh = uniform_mesh(0.0, 1.0, 3)
    path = tmp_path / "mesh.csv"
    mesh.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "index,x"
    parsed = np.array([float(line.split(",")[1]) for line in lines[1:]])
    assert np.array_equal(parsed, mesh.nodes)


def test_generate_mesh_unknown_scheme():
    with pytest.raises(ValueError):
        generate_mesh(MeshSpec(scheme="triangular", a=0.0, b=1.0, n=4))
