import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stomsfem.harness.config import MediumConfig, build_medium
from stomsfem.mesh import (Box, Domain2D, GridSpec, MeshError, StructuredGrid, build_meshes,
                           locate_active_params, with_active_params)
from stomsfem.random_field import FieldModel, constant_mode, indicator_mode, Uniform


def test_counts_without_oversampling():
    m = build_meshes(Domain2D(), GridSpec(2, 2, 4, 1.0))
    assert m.coarse.n_nodes == 9 and m.fine.n_nodes == 81
    assert len(m.patches) == 4
    for p in m.patches:
        assert p.sample_box == p.element_box
        assert p.sample_shape == (4, 4) and p.element_offset == (0, 0)


def test_interior_oversampled_box_is_twice_the_element():
    m = build_meshes(Domain2D(), GridSpec(16, 16, 4, 2.0))
    H = 1 / 16
    p = m.patch(5, 7)
    assert p.sample_box.width == pytest.approx(2 * H, abs=1e-15)
    assert p.sample_box.height == pytest.approx(2 * H, abs=1e-15)
    assert p.sample_shape == (8, 8) and p.element_offset == (2, 2)
    cx = 0.5 * (p.sample_box.x0 + p.sample_box.x1)
    assert cx == pytest.approx(0.5 * (p.element_box.x0 + p.element_box.x1), abs=1e-15)


def test_corner_patch_is_clipped_at_the_boundary():
    m = build_meshes(Domain2D(), GridSpec(16, 16, 4, 2.0))
    p = m.patch(0, 0)
    assert p.sample_box.x0 == 0.0 and p.sample_box.y0 == 0.0
    assert p.sample_shape == (6, 6) and p.element_offset == (0, 0)
    q = m.patch(15, 15)
    assert q.sample_box.x1 == pytest.approx(1.0) and q.sample_shape == (6, 6) and q.element_offset == (2, 2)


def test_coarse_nodes_coincide_with_fine_nodes():
    m = build_meshes(Domain2D((0.0, 2.0), (-1.0, 0.5)), GridSpec(5, 3, 7, 1.0))
    eps = np.finfo(float).eps
    np.testing.assert_allclose(m.fine.nodes[m.coarse_node_to_fine], m.coarse.nodes, rtol=0, atol=4 * eps * 2.0)


def test_restriction_picks_coarse_node_values():
    m = build_meshes(Domain2D(), GridSpec(3, 3, 4, 1.0))
    f = m.fine.nodes[:, 0] + 10 * m.fine.nodes[:, 1]
    np.testing.assert_allclose(m.restrict_to_coarse(f), m.coarse.nodes[:, 0] + 10 * m.coarse.nodes[:, 1])


def test_element_local_indices_point_at_the_element():
    m = build_meshes(Domain2D(), GridSpec(4, 4, 4, 2.0))
    p = m.patch(1, 2)
    cells = p.fine_cells[p.element_cells_local]
    c = m.fine.cell_centers[cells]
    eb = p.element_box
    assert np.all((c[:, 0] > eb.x0) & (c[:, 0] < eb.x1) & (c[:, 1] > eb.y0) & (c[:, 1] < eb.y1))
    assert cells.size == 16
    nodes = m.fine.nodes[p.fine_nodes[p.element_nodes_local]]
    assert nodes[:, 0].min() == pytest.approx(eb.x0) and nodes[:, 1].max() == pytest.approx(eb.y1)


@pytest.mark.parametrize("spec", [GridSpec(4, 4, 3, 1.0), GridSpec(2, 2, 4, 2.0), GridSpec(1, 3, 4, 3.0)])
def test_halo_must_be_whole_cells_or_valid(spec):
    build_meshes(Domain2D(), spec)


@pytest.mark.parametrize("kw", [dict(coarse_nx=0), dict(refine=0), dict(oversample_ratio=0.5),
                                dict(refine=3, oversample_ratio=2.0)])
def test_invalid_grid_specs_raise(kw):
    args = dict(coarse_nx=4, coarse_ny=4, refine=4, oversample_ratio=1.0)
    args.update(kw)
    with pytest.raises(MeshError):
        GridSpec(**args)


def test_degenerate_domain_raises():
    with pytest.raises(MeshError):
        Domain2D((1.0, 1.0), (0.0, 1.0))


def test_box_overlap_excludes_touching_edges():
    a = Box(0, 1, 0, 1)
    assert not a.overlaps(Box(1, 2, 0, 1))
    assert a.overlaps(Box(0.999, 2, 0.5, 0.6))


def test_active_parameters_follow_mode_supports():
    modes = [constant_mode(1.0), indicator_mode(Box(0.0, 0.2, 0.0, 0.2)), indicator_mode(Box(0.8, 1.0, 0.8, 1.0))]
    model = FieldModel(lambda x, y: np.ones_like(x), modes, [Uniform(0, 1)] * 3)
    m = build_meshes(Domain2D(), GridSpec(4, 4, 4, 1.0))
    assert locate_active_params(m.patch(0, 0), model) == (0, 1)
    assert locate_active_params(m.patch(3, 3), model) == (0, 2)
    assert locate_active_params(m.patch(1, 2), model) == (0,)


def test_channel_medium_has_few_active_parameters_per_patch():
    med = build_medium(MediumConfig(geometry="patch_study_modes"))
    m = with_active_params(build_meshes(Domain2D(), GridSpec(16, 16, 4, 2.0)), med)
    counts = np.bincount([len(p.active_params) for p in m.patches])
    assert med.n_params == 20
    assert counts.argmax() == 2 and len(counts) <= 4
    assert counts[0] == 0


@given(nx=st.integers(1, 6), ny=st.integers(1, 6), half=st.integers(1, 4), extra=st.integers(0, 3))
def test_property_patches_tile_and_cover(nx, ny, half, extra):
    r = 2 * half
    eta = 1.0 + 2 * extra / r
    m = build_meshes(Domain2D((0.0, 1.5), (0.0, 1.0)), GridSpec(nx, ny, r, eta))
    # element boxes tile the domain: areas add up and no two overlap
    area = sum(p.element_box.width * p.element_box.height for p in m.patches)
    assert area == pytest.approx(1.5, rel=1e-12)
    for a in m.patches:
        for b in m.patches:
            if a is not b:
                assert not a.element_box.overlaps(b.element_box)
        assert a.sample_box.contains(a.element_box)
    covered = np.zeros(m.fine.n_nodes, bool)
    for p in m.patches:
        covered[p.fine_nodes] = True
    assert covered.all()
    np.testing.assert_allclose(m.fine.nodes[m.coarse_node_to_fine], m.coarse.nodes, rtol=0,
                               atol=4 * np.finfo(float).eps * 1.5)


@given(nx=st.integers(1, 5), ny=st.integers(1, 5))
def test_property_cell_nodes_counter_clockwise(nx, ny):
    g = StructuredGrid(nx, ny, 0.0, 1.0, 0.0, 2.0)
    p = g.nodes[g.cell_nodes]
    np.testing.assert_allclose(p[:, 1, 0] - p[:, 0, 0], g.hx)
    np.testing.assert_allclose(p[:, 3, 1] - p[:, 0, 1], g.hy)
    assert g.node_weights().sum() == pytest.approx(2.0)
