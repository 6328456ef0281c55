import numpy as np
import pytest

from fdpo import generators as G
from fdpo import oracle as O


class TestGridSpec:
    def test_size(self):
        assert O.GridSpec(0.1, 3).size == 66

    @pytest.mark.parametrize("res,n", [(0.1, 5), (0.3, 3), (1e-5, 2), (0.1, 1)])
    def test_rejects(self, res, n):
        with pytest.raises(ValueError):
            O.GridSpec(res, n)


class TestGridSearch:
    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_separable_matches_enumeration(self, n):
        rng = np.random.default_rng(n)
        for gid in ("kl", "jeffrey", "squaredpo", "chi2"):
            r, q = rng.normal(size=n), rng.dirichlet(np.ones(n))
            g = G.get(gid)
            spec = O.GridSpec(0.02, n)
            _, v_enum = O.grid_maximize(O.full_objective_rows(r, q, 0.7, g), spec)
            _, v_dp = O.grid_full_objective(r, q, 0.7, g, 0.02)
            assert v_dp == pytest.approx(v_enum, abs=1e-12)

    def test_linear_objective_hits_vertex(self):
        pt, val = O.grid_maximize(lambda P: P @ np.array([0.0, 2.0, 1.0]), O.GridSpec(0.1, 3))
        np.testing.assert_allclose(pt, [0, 1, 0])
        assert val == pytest.approx(2.0)

    def test_lattice_points_on_simplex(self):
        seen = []
        O.grid_maximize(lambda P: seen.append(P.copy()) or P[:, 0], O.GridSpec(0.25, 4))
        pts = np.vstack(seen)
        assert len(pts) == O.GridSpec(0.25, 4).size
        np.testing.assert_allclose(pts.sum(axis=1), 1.0)


class TestRounding:
    def test_sums_to_one_and_keeps_support(self):
        p = np.array([0.0004, 0.4, 0.5996])
        pr = O.round_to_lattice(p, 1e-3)
        assert pr.sum() == pytest.approx(1.0)
        assert np.all(pr[p > 0] > 0)

    def test_slack_nonnegative(self):
        r, q = np.array([1.0, 0.0, 0.3]), np.array([0.2, 0.5, 0.3])
        obj = O.full_objective_rows(r, q, 1.0, G.get("kl"))
        assert O.lattice_slack(obj, np.array([0.33333, 0.33333, 0.33334]), 0.1) >= 0.0


class TestFiniteDifferences:
    def test_quadratic(self):
        g = O.finite_diff_gradient(lambda x: float(x @ x), np.array([1.0, -2.0]))
        np.testing.assert_allclose(g, [2.0, -4.0], atol=1e-8)

    def test_nonfinite_raises(self):
        with pytest.raises(ValueError):
            O.finite_diff_gradient(lambda x: float(np.inf * x[0]), np.array([0.0]))

    def test_check_gradient_passes(self):
        res = O.check_gradient(lambda x: float(np.sum(np.sin(x))), np.cos, np.array([0.3, 1.1]))
        assert res.ok and not res.nonsmooth

    def test_check_gradient_catches_wrong_gradient(self):
        res = O.check_gradient(lambda x: float(np.sum(np.sin(x))), lambda x: np.cos(x) * 1.01, np.array([0.3, 1.1]))
        assert not res.ok

    def test_kink_flagged(self):
        res = O.check_gradient(lambda x: float(abs(x[0])), lambda x: np.array([0.0]), np.array([0.0]))
        assert res.nonsmooth and res.ok


class TestScalarArgmin:
    def test_kl(self):
        loc, _ = O.grid_argmin_scalar(G.get("kl").f, 1e-8, 50.0)
        assert loc == pytest.approx(np.exp(-1), rel=1e-4)

    def test_bad_interval(self):
        with pytest.raises(ValueError):
            O.grid_argmin_scalar(np.abs, 1.0, 1.0)
