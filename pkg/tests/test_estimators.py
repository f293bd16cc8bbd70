"""Kernels, the accepted-set estimator, and the double-kernel competitors."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from knnabc import (abc_knn, g_hat, g_rosenblatt, g_smoothed_nn, get_model,
                    generate_table, kernel_eval, make_kernel,
                    posterior_functional, unit_ball_volume)
from knnabc.core import AcceptedSet, ReferenceTable
from knnabc.errors import (DegenerateScaleError, EmptyAcceptedSetError,
                           InvalidArgumentError, UndefinedEstimateError)
from knnabc.estimators import (default_grid, density_csv_rows, estimate_density,
                               g_hat_many, kernel_second_moment,
                               kernel_square_integral)


def _accepted(thetas, radius_next=1.0):
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim == 1:
        thetas = thetas[:, None]
    k = thetas.shape[0]
    return AcceptedSet(ordered_thetas=thetas,
                       ordered_summaries=np.zeros((k, 1)),
                       distances=np.linspace(0.01, 0.5, k),
                       radius_next=radius_next,
                       source_indices=np.arange(k, dtype=np.int64))


class TestUnitBallVolume:
    def test_known_values(self):
        assert unit_ball_volume(1) == pytest.approx(2.0)
        assert unit_ball_volume(2) == pytest.approx(math.pi)
        assert unit_ball_volume(3) == pytest.approx(4.0 * math.pi / 3.0)

    def test_matches_gamma_formula_up_to_30(self):
        for p in range(1, 31):
            expected = math.pi ** (p / 2.0) / math.gamma(1.0 + p / 2.0)
            assert unit_ball_volume(p) == pytest.approx(expected, rel=1e-12)

    def test_bad_dimension(self):
        with pytest.raises(InvalidArgumentError):
            unit_ball_volume(0)


class TestKernels:
    def test_naive_values(self):
        naive1 = make_kernel("naive", 1)
        assert kernel_eval(naive1, [0.0]) == pytest.approx(0.5)
        assert kernel_eval(naive1, [1.0]) == pytest.approx(0.5)  # closed ball
        assert kernel_eval(naive1, [1.0001]) == 0.0

    def test_gaussian_normalizer(self):
        gauss2 = make_kernel("gaussian", 2)
        assert kernel_eval(gauss2, [0.0, 0.0]) == pytest.approx(1.0 / (2.0 * math.pi))

    def test_symmetry(self):
        gen = np.random.default_rng(0)
        for kind in ("naive", "gaussian"):
            kernel = make_kernel(kind, 3)
            for _ in range(50):
                u = gen.normal(0, 1, 3)
                assert kernel_eval(kernel, u) == kernel_eval(kernel, -u)
                assert kernel_eval(kernel, u) >= 0.0

    @pytest.mark.parametrize("kind,p", [("naive", 1), ("naive", 2), ("naive", 3),
                                        ("gaussian", 1), ("gaussian", 2), ("gaussian", 3)])
    def test_integrates_to_one_radially(self, kind, p):
        # radial reduction: int K = p * V_p * int_0^inf r^(p-1) K(r) dr
        kernel = make_kernel(kind, p)
        surface = p * unit_ball_volume(p)
        value, _ = quad(lambda r: r ** (p - 1) * kernel_eval(kernel, np.r_[r, np.zeros(p - 1)]),
                        0, 1.0 if kind == "naive" else 40.0, limit=200)
        assert surface * value == pytest.approx(1.0, abs=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            kernel_eval(make_kernel("naive", 2), [0.0])

    def test_second_moment_and_square_integral(self):
        # per-coordinate second moments and int K^2, against quadrature
        for p in (1, 2):
            naive = make_kernel("naive", p)
            assert kernel_second_moment(naive) == pytest.approx(1.0 / (p + 2))
            assert kernel_second_moment(make_kernel("gaussian", p)) == 1.0
            assert kernel_square_integral(naive) == pytest.approx(1.0 / unit_ball_volume(p))
            assert kernel_square_integral(make_kernel("gaussian", p)) == pytest.approx(
                (4.0 * math.pi) ** (-p / 2.0))
        # quadrature check of int K^2 in 1-d
        g1 = make_kernel("gaussian", 1)
        val, _ = quad(lambda x: kernel_eval(g1, [x]) ** 2, -40, 40)
        assert val == pytest.approx(kernel_square_integral(g1), rel=1e-9)


class TestGHat:
    def test_single_centered_point(self):
        acc = _accepted([0.7])
        value = g_hat(acc, 0.5, make_kernel("naive", 1), [0.7])
        assert value == pytest.approx(1.0)  # 1 / (0.5 * V_1)

    def test_two_point_gaussian(self):
        acc = _accepted([0.0, 1.0])
        value = g_hat(acc, 1.0, make_kernel("gaussian", 1), [0.0])
        expected = 0.5 * (math.exp(0.0) + math.exp(-0.5)) / math.sqrt(2 * math.pi)
        assert value == pytest.approx(expected)
        assert value == pytest.approx(0.32046, abs=5e-6)

    def test_naive_grid_integral_is_one(self):
        gen = np.random.default_rng(5)
        acc = _accepted(gen.normal(0, 1, 40))
        h = 0.3
        grid = np.linspace(acc.ordered_thetas.min() - h, acc.ordered_thetas.max() + h,
                           2000)
        vals = g_hat_many(acc, h, make_kernel("naive", 1), grid[:, None])
        assert np.trapezoid(vals, grid) == pytest.approx(1.0, abs=1e-3)

    def test_empty_accepted_set(self):
        empty = AcceptedSet(ordered_thetas=np.zeros((0, 1)),
                            ordered_summaries=np.zeros((0, 1)),
                            distances=np.zeros(0), radius_next=0.1,
                            source_indices=np.zeros(0, dtype=np.int64))
        with pytest.raises(EmptyAcceptedSetError):
            g_hat(empty, 0.5, make_kernel("naive", 1), [0.0])

    def test_translation_equivariance(self):
        gen = np.random.default_rng(8)
        thetas = gen.normal(0, 1, 25)
        kernel = make_kernel("gaussian", 1)
        for shift in (-3.0, 0.125, 11.0):
            base = g_hat(_accepted(thetas), 0.4, kernel, [0.3])
            moved = g_hat(_accepted(thetas + shift), 0.4, kernel, [0.3 + shift])
            assert moved == pytest.approx(base, rel=1e-12)

    def test_bandwidth_kernel_rescaling_identity(self):
        # sum of c^p K(c u) values at bandwidth c*h reproduces g_hat at h
        gen = np.random.default_rng(9)
        thetas = gen.normal(0, 1, 30)
        c, h, theta0 = 2.0, 0.37, 0.2
        for kind in ("naive", "gaussian"):
            kernel = make_kernel(kind, 1)
            direct = g_hat(_accepted(thetas), h, kernel, [theta0])
            hp = c * h
            scaled_vals = [c * kernel_eval(kernel, [c * (theta0 - t) / hp]) for t in thetas]
            manual = float(np.mean(scaled_vals)) / hp
            assert manual == pytest.approx(direct, rel=1e-12)


class TestRosenblatt:
    def _table(self, thetas, summaries):
        t = np.asarray(thetas, dtype=float)[:, None]
        s = np.asarray(summaries, dtype=float)[:, None]
        return ReferenceTable(thetas=t, summaries=s, seed=0, model_id="synthetic")

    def test_wide_window_reduces_to_plain_kde(self):
        gen = np.random.default_rng(12)
        thetas = gen.normal(0, 1, 50)
        summaries = gen.normal(0, 1, 50)
        table = self._table(thetas, summaries)
        naive = make_kernel("naive", 1)
        h, theta0 = 0.4, 0.1
        wide = abs(summaries).max() + 1.0
        value = g_rosenblatt(table, [0.0], [theta0], h, wide, naive, naive)
        kde = np.mean([kernel_eval(naive, [(theta0 - t) / h]) for t in thetas]) / h
        assert value == pytest.approx(kde, rel=1e-12)

    def test_empty_window_is_undefined_not_zero(self):
        table = self._table([0.1, 0.9], [5.0, -5.0])
        with pytest.raises(UndefinedEstimateError):
            g_rosenblatt(table, [0.0], [0.5], 0.2, 0.01,
                         make_kernel("naive", 1), make_kernel("naive", 1))

    def test_one_row_window(self):
        # one row inside the summary window, one far outside
        table = self._table([0.3, 40.0], [0.0, 100.0])
        value = g_rosenblatt(table, [0.0], [0.3], 0.2, 1.0,
                             make_kernel("naive", 1), make_kernel("naive", 1))
        assert value == pytest.approx(2.5)  # 1 / (0.2 * V_1)


class TestSmoothedNN:
    def test_naive_summary_kernel_matches_g_hat(self):
        model = get_model("gaussian_conjugate_1d")
        table = generate_table(model, 2000, 31)
        k, h, s0, theta0 = 80, 0.25, [1.0], [0.4]
        accepted = abc_knn(table, s0, k)
        naive = make_kernel("naive", 1)
        smoothed = g_smoothed_nn(table, s0, theta0, h, k, naive, naive)
        plain = g_hat(accepted, h, naive, theta0)
        assert smoothed == pytest.approx(plain, rel=1e-12)

    def test_k_equals_n_minus_one(self):
        model = get_model("uniform_box_1d")
        table = generate_table(model, 50, 32)
        value = g_smoothed_nn(table, [0.5], [0.5], 0.3, 49,
                              make_kernel("naive", 1), make_kernel("naive", 1))
        assert value > 0.0

    def test_gaussian_summary_kernel_downweights_far_rows(self):
        # rows at summary distances 0.0001 and 0.1 with k = 2 (the third
        # row sits far outside and carries negligible weight)
        table = ReferenceTable(thetas=np.array([[10.0], [-10.0], [0.0]]),
                               summaries=np.array([[0.0001], [0.1], [50.0]]),
                               seed=0, model_id="synthetic")
        gauss = make_kernel("gaussian", 1)
        h = 0.5
        near = g_smoothed_nn(table, [0.0], [10.0], h, 2, gauss, gauss)
        far = g_smoothed_nn(table, [0.0], [-10.0], h, 2, gauss, gauss)
        assert near > far

    def test_degenerate_scale(self):
        table = ReferenceTable(thetas=np.array([[1.0], [2.0]]),
                               summaries=np.array([[0.0], [3.0]]),
                               seed=0, model_id="synthetic")
        with pytest.raises(DegenerateScaleError):
            g_smoothed_nn(table, [0.0], [1.0], 0.2, 1,
                          make_kernel("naive", 1), make_kernel("naive", 1))


class TestPosteriorFunctional:
    def test_mean(self):
        assert posterior_functional(_accepted([1.0, 2.0, 3.0]),
                                    lambda t: t[:, 0]) == pytest.approx(2.0)

    def test_constant(self):
        assert posterior_functional(_accepted([5.0, -1.0]),
                                    lambda t: 3.25) == pytest.approx(3.25)

    def test_empty(self):
        empty = AcceptedSet(ordered_thetas=np.zeros((0, 1)),
                            ordered_summaries=np.zeros((0, 1)),
                            distances=np.zeros(0), radius_next=0.1,
                            source_indices=np.zeros(0, dtype=np.int64))
        with pytest.raises(EmptyAcceptedSetError):
            posterior_functional(empty, lambda t: t[:, 0])


class TestDensityEstimate:
    def test_values_nonnegative_and_normalized(self):
        gen = np.random.default_rng(21)
        for kind in ("naive", "gaussian"):
            for p in (1, 2):
                thetas = gen.normal(0, 1, size=(60, p))
                acc = AcceptedSet(ordered_thetas=thetas,
                                  ordered_summaries=np.zeros((60, 1)),
                                  distances=np.linspace(0.01, 0.4, 60),
                                  radius_next=0.5,
                                  source_indices=np.arange(60, dtype=np.int64))
                h = float(gen.uniform(0.7, 1.3))
                est = estimate_density(acc, h, make_kernel(kind, p))
                assert np.all(est.values >= 0)
                assert est.integral() == pytest.approx(1.0, abs=1e-3)

    def test_default_grid_cap_in_2d(self):
        gen = np.random.default_rng(22)
        acc = AcceptedSet(ordered_thetas=gen.normal(0, 1, (10, 2)),
                          ordered_summaries=np.zeros((10, 1)),
                          distances=np.linspace(0.01, 0.4, 10), radius_next=0.5,
                          source_indices=np.arange(10, dtype=np.int64))
        axes = default_grid(acc, 0.5)
        assert len(axes) == 2
        assert len(axes[0]) * len(axes[1]) <= 100_000

    def test_csv_export_header(self):
        acc = _accepted([0.0, 1.0])
        est = estimate_density(acc, 0.5, make_kernel("gaussian", 1))
        rows = list(density_csv_rows(est))
        assert rows[0] == ["theta_0", "g_hat"]
        assert len(rows) == 513
