import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lcfshape.errors import ConfigError, ConstraintError, MeshingError
from lcfshape.geometry import (
    ALL_TAGS, FACE_DIRS, BasicDesign, DesignConstraints, DesignField, Tag, analytic_volume,
    box_mesh, build_mesh, check_admissible, ck_distance, fd_derivatives, order_norms,
    project_volume, surface_quadrature,
)


def basic_box(**kw):
    base = dict(xlim=(0.0, 3.0), ylim=(0.0, 3.0), z_bottom=0.0, alpha_min=2.0, alpha_max=3.0,
                center=(1.5, 1.5, 1.0), radius=0.5)
    base.update(kw)
    return BasicDesign(**base)


def diff_matrix(n, h):
    """Second-order first-derivative matrix: central inside, 3-point one-sided at the ends."""
    D = np.zeros((n, n))
    for i in range(1, n - 1):
        D[i, i - 1], D[i, i + 1] = -0.5, 0.5
    D[0, :3] = [-1.5, 2.0, -0.5]
    D[-1, -3:] = [0.5, -2.0, 1.5]
    return D / h


def oracle_norms(v, dx, dy, k):
    Dx = diff_matrix(v.shape[0], dx)
    Dy = diff_matrix(v.shape[1], dy)
    norms = np.zeros(k + 1)
    for i in range(k + 1):
        for j in range(k + 1 - i):
            d = np.linalg.matrix_power(Dx, i) @ v @ np.linalg.matrix_power(Dy, j).T
            norms[i + j] = max(norms[i + j], np.abs(d).max())
    return norms


def sine_bump(basic, n, amplitude, power):
    g = basic.grid(n, n)
    s = (g.x - basic.xlim[0]) / (basic.xlim[1] - basic.xlim[0])
    t = (g.y - basic.ylim[0]) / (basic.ylim[1] - basic.ylim[0])
    prof = np.outer(np.sin(np.pi * s) ** power, np.sin(np.pi * t) ** power)
    return g.with_values(basic.alpha_min + amplitude * prof)


class TestBasicDesign:
    def test_valid(self):
        b = basic_box()
        assert b.cross_section_area == 9.0
        corners = [(x, y, z) for x in (0, 3) for y in (0, 3) for z in (0, 3)]
        assert all(np.linalg.norm(np.subtract(c, b.center)) <= b.r_ext for c in corners)

    @pytest.mark.parametrize("kw", [
        dict(alpha_max=2.0), dict(radius=1.2), dict(center=(1.5, 1.5, 1.6)),
        dict(center=(0.3, 1.5, 1.0)), dict(radius=-0.1), dict(r_ext=1.0), dict(xlim=(1.0, 1.0)),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            basic_box(**kw)

    def test_constraints_validation(self):
        with pytest.raises(ValueError):
            DesignConstraints(L1=0.0, L2=1.0, L3=1.0)
        with pytest.raises(ValueError):
            DesignConstraints(L1=1.0, L2=1.0, L3=1.0, k=0)
        c = DesignConstraints(L1=40.0, L2=1.0, L3=1.0)
        with pytest.raises(ValueError):
            c.check_volume_range(basic_box())
        DesignConstraints(L1=20.0, L2=1.0, L3=1.0).check_volume_range(basic_box())


class TestDesignField:
    def test_readonly(self):
        g = basic_box().grid(5, 5)
        with pytest.raises(ValueError):
            g.values[0, 0] = 1.0

    def test_volume_constant(self):
        g = basic_box().grid(7, 9)
        assert g.volume() == pytest.approx(18.0, rel=1e-14)

    def test_csv_round_trip(self, tmp_path):
        b = basic_box()
        f = sine_bump(b, 11, 0.3, 8)
        path = tmp_path / "a.csv"
        f.to_csv(path)
        assert path.read_text().splitlines()[0] == "n1,n2,dx,dy"
        back = DesignField.from_csv(path)
        np.testing.assert_array_equal(back.values, f.values)
        assert back.dx == f.dx and back.dy == f.dy

    def test_csv_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            DesignField.from_csv(path)


class TestAdmissibility:
    def test_constant_field_passes(self):
        b = basic_box()
        # order 0 enters the C^k norm, so L2 must cover alpha_min itself
        c = DesignConstraints(L1=18.0, L2=2.0, L3=1.0)
        rep = check_admissible(b.grid(11, 11), c, b)
        assert rep.passed
        assert rep.order_norms[0] == 2.0
        assert np.all(rep.order_norms[1:] < 1e-12)
        assert rep.volume_violation < 1e-15

    def test_volume_margin(self):
        b = basic_box()
        c = DesignConstraints(L1=19.0, L2=2.0, L3=1.0)
        rep = check_admissible(b.grid(11, 11), c, b)
        assert not rep.passed and rep.failures() == ["volume"]
        assert rep.checks["volume"].margin == pytest.approx(1.0, rel=1e-14)

    def test_fd_norms_match_matrix_oracle(self):
        b = basic_box()
        f = sine_bump(b, 31, 0.4, 10)
        derivs = fd_derivatives(f.values, f.dx, f.dy, 4)
        ours = order_norms(derivs, 4)
        ref = oracle_norms(f.values, f.dx, f.dy, 4)
        np.testing.assert_allclose(ours, ref, rtol=1e-10)

    def test_smooth_bump_passes(self):
        b = basic_box()
        f = sine_bump(b, 31, 0.4, 10)
        ref = oracle_norms(f.values, f.dx, f.dy, 4)
        c = DesignConstraints(L1=f.volume(), L2=1.5 * ref.max(), L3=1e6)
        rep = check_admissible(f, c, b)
        assert rep.passed, rep.summary()
        assert rep.checks["ck_norm"].margin == pytest.approx(0.5 * ref.max(), rel=1e-10)

    def test_norm_bound_fails(self):
        b = basic_box()
        f = sine_bump(b, 31, 0.4, 10)
        c = DesignConstraints(L1=f.volume(), L2=1.0, L3=1e6)
        rep = check_admissible(f, c, b)
        assert "ck_norm" in rep.failures()

    def test_box_and_boundary(self):
        b = basic_box()
        v = np.full((11, 11), 2.0)
        v[5, 5] = 3.5
        v[0, 3] = 2.1
        rep = check_admissible(b.grid(11, 11).with_values(v), DesignConstraints(18.0, 1e9, 1e12), b)
        assert {"upper_bound", "boundary_value"} <= set(rep.failures())
        v[5, 5] = 1.5
        rep = check_admissible(b.grid(11, 11).with_values(v), DesignConstraints(18.0, 1e9, 1e12), b)
        assert "lower_bound" in rep.failures()

    def test_grid_too_coarse(self):
        b = basic_box()
        with pytest.raises(ConfigError):
            check_admissible(b.grid(4, 4), DesignConstraints(18.0, 1.0, 1.0, k=4), b)

    def test_prescribed_boundary_derivative(self):
        # a plane sloped in x has d/dx = 0.1 everywhere; prescribing that passes the check
        b = basic_box(alpha_max=4.0)
        g = b.grid(11, 11)
        f = g.with_values(2.0 + 0.1 * g.x[:, None] + 0 * g.y[None, :])
        c0 = DesignConstraints(f.volume(), 10.0, 10.0, k=2, derivative_tol=0.0)
        assert "boundary_derivatives" in check_admissible(f, c0, b).failures()
        c1 = DesignConstraints(f.volume(), 10.0, 10.0, k=2, derivative_tol=0.0,
                               boundary_derivatives={(1, 0): 0.1})
        assert "boundary_derivatives" not in check_admissible(f, c1, b).failures()

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.0, 0.6), st.floats(1e-9, 1e-3), st.floats(1.0, 100.0))
    def test_tolerance_monotone(self, amp, tol, factor):
        b = basic_box()
        f = sine_bump(b, 15, amp, 10)
        c = DesignConstraints(L1=18.5, L2=50.0, L3=2000.0)
        if check_admissible(f, c, b, tol).passed:
            assert check_admissible(f, c, b, tol * factor).passed


class TestProjectVolume:
    def test_feasible_unchanged(self):
        b = basic_box()
        f = sine_bump(b, 21, 0.3, 8)
        c = DesignConstraints(L1=f.volume(), L2=1.0, L3=1.0)
        np.testing.assert_array_equal(project_volume(f, c, b).values, f.values)

    def test_uniform_shift(self):
        b = basic_box()
        f = b.grid(11, 11).with_values(np.where(np.pad(np.ones((9, 9)), 1) > 0, 2.5, 2.0))
        target = f.volume() - 0.9
        out = project_volume(f, DesignConstraints(target, 1.0, 1.0), b)
        # trapezoid weight of the interior block is (9 * 0.3)**2
        shift = -0.9 / (9 * 0.3) ** 2
        interior = out.values[1:-1, 1:-1]
        np.testing.assert_allclose(interior, 2.5 + shift, rtol=1e-12)
        np.testing.assert_array_equal(out.values[0], 2.0)

    def test_clipping(self):
        b = basic_box()
        f = sine_bump(b, 21, 0.9, 2)
        target = 24.0
        out = project_volume(f, DesignConstraints(target, 1.0, 1.0), b)
        v = out.values
        assert v.max() == 3.0
        # independent re-integration
        w1 = np.full(21, out.dx)
        w1[[0, -1]] /= 2
        vol = w1 @ v @ w1
        assert abs(vol - target) <= 1e-10 * target
        np.testing.assert_array_equal(v[0], f.values[0])

    def test_infeasible(self):
        b = basic_box()
        with pytest.raises(ConstraintError):
            project_volume(b.grid(11, 11), DesignConstraints(26.9, 1.0, 1.0), b)

    def test_profile(self):
        b = basic_box()
        f = b.grid(21, 21)
        prof = sine_bump(b, 21, 1.0, 8).values - 2.0
        out = project_volume(f, DesignConstraints(18.3, 1.0, 1.0), b, profile=prof)
        ratio = (out.values - 2.0)[prof > 0.5] / prof[prof > 0.5]
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)


class TestCkDistance:
    def test_zero_and_constant(self):
        b = basic_box()
        f = sine_bump(b, 15, 0.3, 8)
        assert ck_distance(f, f, 4) == 0
        assert ck_distance(f, f.with_values(f.values + 0.25), 4) == pytest.approx(0.25, rel=1e-12)

    def test_grid_mismatch(self):
        b = basic_box()
        with pytest.raises(ValueError):
            ck_distance(b.grid(11, 11), b.grid(13, 13), 2)

    def test_metric(self):
        rng = np.random.default_rng(0)
        g = basic_box().grid(9, 9)
        for _ in range(20):
            a, bb, c = (g.with_values(rng.normal(size=(9, 9))) for _ in range(3))
            assert ck_distance(a, bb, 3) == pytest.approx(ck_distance(bb, a, 3), rel=1e-14)
            assert ck_distance(a, c, 3) <= ck_distance(a, bb, 3) + ck_distance(bb, c, 3) + 1e-9


class TestMesh:
    def test_single_voxel(self):
        m = box_mesh((1, 1, 1), 0.5)
        q = surface_quadrature(m)
        assert len(q) == 6 and q.weights.sum() == pytest.approx(6 * 0.25)
        # outward normals: center + h/2 * normal is on the cube surface
        np.testing.assert_allclose(q.points - 0.25, 0.25 * q.normals)

    def test_box_counts(self):
        m = box_mesh((4, 3, 2), 1.0)
        assert m.n_elements == 24 and m.n_nodes == 5 * 4 * 3
        assert len(m.face_tag) == 2 * (4 * 3 + 4 * 2 + 3 * 2)
        assert m.faces_with([Tag.DESIGNED]).sum() == 12

    def test_element_orientation(self):
        m = box_mesh((2, 2, 2), 0.5)
        x = m.nodes[m.elements]
        np.testing.assert_allclose(x - x[:, :1], 0.5 * np.array(
            [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]]
        )[None].repeat(8, 0))

    def test_flat_design(self):
        b = basic_box()
        m = build_mesh(b, b.grid(11, 11), 0.2)
        zc = m.element_centers[:, 2]
        assert zc.max() < 2.0
        top = m.faces_with([Tag.DESIGNED])
        assert top.sum() == 15 * 15
        assert np.allclose(m.face_centers[top][:, 2], 2.0)
        q = surface_quadrature(m, [Tag.DESIGNED])
        assert q.weights.sum() == pytest.approx(9.0, rel=1e-14)

    def test_dirichlet_faces_on_sphere(self):
        b = basic_box()
        h = 0.2
        m = build_mesh(b, sine_bump(b, 21, 0.5, 8), h)
        dir_faces = m.faces_with([Tag.DIRICHLET])
        assert dir_faces.any()
        d = np.linalg.norm(m.face_centers[dir_faces] - np.array(b.center), axis=1)
        assert np.all(np.abs(d - b.radius) <= h * math.sqrt(3))
        # normals point into the cavity
        into = np.einsum("ij,ij->i", m.face_normals[dir_faces], np.array(b.center) - m.face_centers[dir_faces])
        assert np.all(into > 0)

    def test_dirichlet_neumann_separated(self):
        b = basic_box()
        m = build_mesh(b, sine_bump(b, 21, 0.5, 8), 0.2)
        dn = set(m.tagged_nodes([Tag.DIRICHLET]))
        nn = set(m.tagged_nodes([Tag.NEUMANN, Tag.DESIGNED]))
        assert not dn & nn

    def test_faces_unique_and_outward(self):
        b = basic_box()
        m = build_mesh(b, sine_bump(b, 21, 0.5, 8), 0.2)
        key = set(zip(m.face_element.tolist(), m.face_dir.tolist()))
        assert len(key) == len(m.face_element)
        occupied = {tuple(v) for v in m.voxels.tolist()}
        outside = m.voxels[m.face_element] + FACE_DIRS[m.face_dir]
        assert not any(tuple(v) in occupied for v in outside.tolist())

    def test_monotone_in_alpha(self):
        b = basic_box()
        lo = sine_bump(b, 21, 0.3, 8)
        hi = sine_bump(b, 21, 0.6, 6)
        assert np.all(hi.values >= lo.values)
        vlo = {tuple(v) for v in build_mesh(b, lo, 0.2).voxels.tolist()}
        vhi = {tuple(v) for v in build_mesh(b, hi, 0.2).voxels.tolist()}
        assert vlo <= vhi

    def test_volume_convergence(self):
        b = basic_box()
        f = sine_bump(b, 61, 0.6, 6)
        exact = analytic_volume(b, f)
        errs = [abs(build_mesh(b, f, h).volume() - exact) for h in (0.2, 0.1, 0.05)]
        assert errs[2] < errs[0]
        assert errs[2] < 0.01 * exact

    def test_coarse_h_rejected(self):
        b = basic_box()
        with pytest.raises(MeshingError):
            build_mesh(b, b.grid(11, 11), 0.3)

    def test_grid_must_span(self):
        b = basic_box()
        g = DesignField(np.full((11, 11), 2.0), 0.2, 0.2)
        with pytest.raises(MeshingError):
            build_mesh(b, g, 0.2)

    def test_empty_selection(self):
        m = box_mesh((2, 2, 2), 1.0)
        assert len(surface_quadrature(m, [Tag.DIRICHLET])) == 0

    def test_all_tags_cover_boundary(self):
        b = basic_box()
        m = build_mesh(b, sine_bump(b, 21, 0.5, 8), 0.2)
        assert len(surface_quadrature(m, ALL_TAGS)) == len(m.face_tag)
