"""Legendre-Fenchel transforms, subdifferentials, slope domains, sum rule."""

import numpy as np
import pytest

from slag_lab import (
    ConvexityError,
    GridSpec,
    check_slope_increase,
    check_sum_rule,
    conjugate_brute,
    conjugate_fast,
    sample_potential,
    slope_domain,
    subdifferential,
)
from slag_lab.conjugate import auto_slope_grid
from slag_lab.fields import connected_components, erode_mask
from slag_lab.formulas import (
    iso_quad,
    norm,
    quad_form,
    quartic,
    random_max_affine,
    random_spd_matrix,
)
from slag_lab.hessians import directional_convexity_deficit


def attained_interior(f, star_grid):
    """Slope nodes whose sup lands strictly inside the mask (test helper)."""
    from slag_lab.conjugate import sup_with_argmax

    vals, _, vals_in = sup_with_argmax(f, star_grid)
    return (vals_in >= vals - 1e-12 * (1 + np.abs(vals))).reshape(star_grid.shape)


class TestConjugateBrute:
    def test_self_conjugate_quadratic(self, grid65):
        u = sample_potential(iso_quad(1.0), grid65)
        star = conjugate_brute(u)
        ys = star.grid.coords()
        inside = attained_interior(u, star.grid)
        expected = 0.5 * np.sum(ys * ys, axis=-1)
        assert np.abs(star.values[inside] - expected[inside]).max() < 1e-12

    def test_kappa_four_section(self, grid65):
        # f = 2|x|^2 has conjugate |y|^2 / 8 on attained slopes
        u = sample_potential(iso_quad(4.0), grid65)
        star = conjugate_brute(u)
        ys = star.grid.coords()
        inside = attained_interior(u, star.grid)
        expected = np.sum(ys * ys, axis=-1) / 8.0
        assert np.abs(star.values[inside] - expected[inside]).max() < 1e-12

    def test_norm_conjugate_vanishes_on_unit_ball(self, grid65):
        u = sample_potential(norm, grid65)
        star = conjugate_brute(u)
        ys = star.grid.coords()
        r = np.sqrt(np.sum(ys * ys, axis=-1))
        # dot-product round-off admits one ulp above zero
        assert np.abs(star.values[r <= 1.0]).max() <= 1e-15

    def test_rejects_nonconvex_with_worst_node(self, grid65):
        u = sample_potential(quad_form([[1.0, 0.0], [0.0, -0.5]]), grid65)
        with pytest.raises(ConvexityError) as err:
            conjugate_brute(u)
        assert err.value.node is not None
        assert err.value.modulus == pytest.approx(-0.5, abs=1e-9)

    def test_accepts_kinked_convex_input(self, grid65):
        # creases make the assembled FD Hessian indefinite; the directional
        # convexity check must still accept the field
        rng = np.random.default_rng(3)
        u = sample_potential(random_max_affine(rng, 2, 5), grid65)
        conjugate_brute(u)


class TestConjugateFast:
    def test_matches_brute_on_named_examples(self, grid65):
        for formula in (iso_quad(1.0), iso_quad(4.0), norm):
            u = sample_potential(formula, grid65)
            slopes = auto_slope_grid(u)
            a = conjugate_brute(u, slopes)
            b = conjugate_fast(u, slopes)
            tol = 1e-12 * (1.0 + np.abs(a.values))
            assert np.all(np.abs(a.values - b.values) <= tol)

    def test_matches_brute_on_random_quadratics(self, rng):
        grid = GridSpec.ball_box(2, 65)
        for _ in range(3):
            u = sample_potential(quad_form(random_spd_matrix(rng, 2)), grid)
            slopes = auto_slope_grid(u)
            a = conjugate_brute(u, slopes)
            b = conjugate_fast(u, slopes)
            tol = 1e-12 * (1.0 + np.abs(a.values))
            assert np.all(np.abs(a.values - b.values) <= tol)

    def test_matches_brute_on_max_affine(self, rng):
        grid = GridSpec.ball_box(2, 65)
        u = sample_potential(random_max_affine(rng, 2, 5), grid)
        slopes = auto_slope_grid(u)
        a = conjugate_brute(u, slopes)
        b = conjugate_fast(u, slopes)
        tol = 1e-12 * (1.0 + np.abs(a.values))
        assert np.all(np.abs(a.values - b.values) <= tol)

    def test_matches_brute_in_3d(self, rng):
        grid = GridSpec.ball_box(3, 17)
        u = sample_potential(quad_form(random_spd_matrix(rng, 3)), grid)
        slopes = auto_slope_grid(u)
        a = conjugate_brute(u, slopes)
        b = conjugate_fast(u, slopes)
        tol = 1e-12 * (1.0 + np.abs(a.values))
        assert np.all(np.abs(a.values - b.values) <= tol)


class TestTransformLaws:
    def test_constant_shift_exact(self, grid65):
        u = sample_potential(iso_quad(2.0), grid65)
        slopes = auto_slope_grid(u)
        star = conjugate_brute(u, slopes)
        shifted = conjugate_brute(u.shifted(0.73), slopes)
        assert np.array_equal(shifted.values, star.values - 0.73)

    def test_order_reversal_exact(self, grid65, rng):
        f = sample_potential(iso_quad(1.0), grid65)
        bump = sample_potential(quartic(1.0), grid65)  # >= f node-wise
        slopes = auto_slope_grid(bump)
        fs = conjugate_brute(f, slopes)
        gs = conjugate_brute(bump, slopes)
        assert np.all(fs.values >= gs.values)

    @pytest.mark.parametrize("case", ["iso", "aniso", "max-affine", "snapped"])
    def test_involution_error_rates(self, case, rng):
        # quadratics: O(h^2) hull error; unsnapped max-affine: the auto slope
        # lattice misses the piece slopes, first order in the slope spacing;
        # lattice-representable max-affine: exact
        grid = GridSpec.ball_box(2, 65)
        h = grid.spacing
        slopes = None
        if case == "iso":
            u = sample_potential(iso_quad(2.0), grid)
        elif case == "aniso":
            u = sample_potential(quad_form([[2.2, 0.5], [0.5, 1.1]]), grid)
        elif case == "max-affine":
            u = sample_potential(random_max_affine(rng, 2, 4), grid)
        else:
            from slag_lab.formulas import max_affine

            s0 = 0.05
            p = np.round(rng.uniform(-1, 1, size=(4, 2)) / s0) * s0
            b = rng.uniform(-0.3, 0.3, size=4)
            u = sample_potential(max_affine(p, b), grid)
            slopes = GridSpec(2, (61, 61), s0, (-1.5, -1.5), None)
        star = conjugate_fast(u, slopes)
        xgrid = GridSpec(2, grid.shape, grid.spacing, grid.origin, None)
        back = conjugate_fast(star, slopes=xgrid)
        inner = erode_mask(u.mask, 2)
        err = np.abs(back.values[inner] - u.values[inner]).max()
        # node suprema never overestimate: f** <= f exactly
        assert np.all(back.values[inner] <= u.values[inner] + 1e-12)
        if case in ("iso", "aniso"):
            assert err <= 4.0 * 2.5 * max(h, star.grid.spacing) ** 2
        elif case == "max-affine":
            assert err <= 1.5 * star.grid.spacing
        else:
            assert err <= 1e-12

    def test_conjugate_convex_on_domain_interior(self, grid65):
        from slag_lab.eigen import eigvals_sym
        from slag_lab.hessians import hessian_field

        for formula in (iso_quad(2.0), quartic(1.0)):
            u = sample_potential(formula, grid65)
            star = conjugate_brute(u)
            dom = slope_domain(u)
            hf = hessian_field(star)
            inner = hf.interior_mask & erode_mask(dom.inside, 2)
            lam = eigvals_sym(hf.matrices[inner])
            assert lam[..., -1].min() >= -1e-9

    def test_conjugate_directionally_convex_everywhere(self, grid65):
        # exact statement: node suprema of affine families are midpoint convex
        u = sample_potential(quartic(1.0), grid65)
        star = conjugate_brute(u)
        worst, _ = directional_convexity_deficit(star)
        assert worst >= -1e-9


class TestAutoSlopeGrid:
    def test_covers_attained_range_with_two_cell_margin(self, grid65, rng):
        from slag_lab.hessians import gradient_field

        for formula in (iso_quad(2.5), quartic(1.0)):
            u = sample_potential(formula, grid65)
            slopes = auto_slope_grid(u)
            grads, valid = gradient_field(u)
            g = grads[valid]
            for k in range(2):
                lo = slopes.origin[k]
                hi = slopes.origin[k] + (slopes.shape[k] - 1) * slopes.spacing
                assert lo <= g[:, k].min() - 2 * slopes.spacing + 1e-12
                assert hi >= g[:, k].max() + 2 * slopes.spacing - 1e-12

    def test_degenerate_range_rejected(self, grid65):
        from slag_lab.errors import SlopeGridError

        flat = sample_potential(lambda x: np.full(x.shape[:-1], 2.0), grid65)
        with pytest.raises(SlopeGridError):
            auto_slope_grid(flat)


class TestSubdifferential:
    def test_smooth_point_tight_tolerance(self, grid65):
        u = sample_potential(iso_quad(1.0), grid65)
        h = grid65.spacing
        sd = subdifferential(u, (0.0, 0.0), tol=h * h)
        spacing = auto_slope_grid(u).spacing
        # within one cell of {0} in the Chebyshev sense
        dist = np.abs(sd.members).max(axis=1)
        assert dist.max() <= spacing + 1e-12

    def test_norm_kink_covers_unit_ball(self, grid65):
        u = sample_potential(norm, grid65)
        sd = subdifferential(u, (0.0, 0.0))
        slopes = auto_slope_grid(u)
        ys = slopes.coords().reshape(-1, 2)
        r = np.linalg.norm(ys, axis=1)
        member_set = {tuple(m) for m in np.round(sd.members, 12)}
        for y in ys[r <= 1.0]:
            assert tuple(np.round(y, 12)) in member_set

    def test_max_plus_quadratic_against_plane_enumeration(self, grid65):
        # f = max(x1, x2) + 0.5|x|^2 at a diagonal node: the subdifferential
        # is the segment hull{e1, e2} + a (supporting-plane enumeration)
        def f(x):
            return np.maximum(x[..., 0], x[..., 1]) + 0.5 * np.sum(x * x, -1)

        u = sample_potential(f, grid65)
        a = np.array([0.25, 0.25])
        sd = subdifferential(u, a)
        seg = np.array([s * np.array([1.0, 0.0]) + (1 - s) * np.array([0.0, 1.0])
                        for s in np.linspace(0, 1, 201)]) + a
        spacing = auto_slope_grid(u).spacing
        slack = sd.tolerance / spacing * spacing  # tolerance in slope units
        for m in sd.members:
            gap = np.linalg.norm(seg - m, axis=1).min()
            assert gap <= np.sqrt(2.0 * sd.tolerance) + 2 * spacing
        for s in seg[:: 20]:
            gap = np.linalg.norm(sd.members - s, axis=1).min()
            assert gap <= 2 * spacing

    def test_empty_result_reports_internal_error(self, grid65):
        u = sample_potential(iso_quad(1.0), grid65)
        with pytest.raises(ConvexityError):
            subdifferential(u, (0.0, 0.0), tol=-1.0)


class TestSlopeDomain:
    @pytest.mark.parametrize("k", [1.0, 3.0])
    def test_quadratic_maps_to_scaled_ball(self, grid65, k):
        u = sample_potential(iso_quad(k), grid65)
        dom = slope_domain(u)
        ys = dom.slope_grid.coords()
        r = np.sqrt(np.sum(ys * ys, axis=-1))
        cell = dom.slope_grid.spacing
        assert np.all(r[dom.inside] <= k + 2 * cell + k * grid65.spacing)
        covered = r <= k - 2 * cell - k * grid65.spacing
        assert np.all(dom.inside[covered])

    def test_gradient_image_oracle(self, grid65):
        # f = 0.5|x|^2 + 0.25|x|^4 has gradient x(1 + |x|^2)
        u = sample_potential(quartic(1.0), grid65)
        dom = slope_domain(u)
        cell = dom.slope_grid.spacing
        coords = grid65.coords()
        inner = erode_mask(u.mask, 1)
        r2 = np.sum(coords * coords, axis=-1)
        image = coords * (1.0 + r2)[..., None]
        cloud = image[inner].reshape(-1, 2)
        ys = dom.slope_grid.coords()[dom.inside]
        for y in ys:
            assert np.linalg.norm(cloud - y, axis=1).min() <= 1.6 * cell
        # image of well-interior nodes must be covered
        deep = erode_mask(u.mask, 3)
        for x_img in image[deep].reshape(-1, 2)[::7]:
            idx = dom.slope_grid.nearest_node(x_img)
            assert dom.inside[idx]

    def test_domain_connected_for_uniformly_convex(self, grid65):
        u = sample_potential(quartic(0.7), grid65)
        dom = slope_domain(u)
        assert connected_components(dom.inside) == 1


class TestSumRule:
    def test_quadratic_translation(self, grid65):
        u = sample_potential(iso_quad(1.0), grid65)
        rep = check_sum_rule(u, 1.0, [(0.25, 0.0), (0.0, 0.0)])
        assert rep.passed
        assert rep.details["worst_distance"] <= rep.details["allowance"]

    def test_kink_plus_quadratic(self, grid65):
        u = sample_potential(lambda x: np.abs(x[..., 0]), grid65)
        rep = check_sum_rule(u, 1.0, [(0.0, 0.0)])
        assert rep.passed

    def test_random_max_affine_families(self, grid65, rng):
        # anchors within ~h of a crease cannot resolve the active piece at
        # grid resolution, so sampling sticks to unambiguous smooth regions
        # (the audits' own kink-skip convention)
        from conftest import smooth_max_affine_anchors

        slopes = rng.uniform(-1, 1, size=(4, 2))
        offsets = rng.uniform(-0.3, 0.3, size=4)
        from slag_lab.formulas import max_affine

        u = sample_potential(max_affine(slopes, offsets), grid65)
        samples = smooth_max_affine_anchors(grid65, slopes, offsets, rng, 10)
        rep = check_sum_rule(u, 0.7, samples)
        assert rep.passed, rep.violations[:3]


class TestSlopeIncrease:
    def test_unit_quadratic_at_origin(self, grid65):
        u = sample_potential(iso_quad(1.0), grid65)
        rep = check_slope_increase(u, 1.0, [(0.0, 0.0)])
        assert rep.passed
        assert rep.checked_nodes > 0

    def test_double_quadratic(self, grid65):
        u = sample_potential(iso_quad(2.0), grid65)
        rep = check_slope_increase(u, 2.0, [(0.0, 0.0)])
        assert rep.passed

    def test_quartic_two_points(self, grid65):
        u = sample_potential(quartic(1.0), grid65)
        rep = check_slope_increase(u, 1.0, [(0.0, 0.0), (0.5, 0.0)])
        assert rep.passed

    def test_insufficient_convexity_rejected(self, grid65):
        u = sample_potential(iso_quad(0.5), grid65)
        with pytest.raises(ConvexityError):
            check_slope_increase(u, 1.0, [(0.0, 0.0)])
