"""Property tests for the structural invariants of the engine."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from knnabc import (abc_knn, abc_tolerance, distance_moment_bound,
                    make_kernel, percentile_to_k, unit_ball_volume)
from knnabc.core import ReferenceTable, squared_distances
from knnabc.estimators import kernel_eval


def _tables(min_rows=2, max_rows=60, max_m=3):
    @st.composite
    def build(draw):
        n = draw(st.integers(min_rows, max_rows))
        m = draw(st.integers(1, max_m))
        summaries = draw(hnp.arrays(np.float64, (n, m),
                                    elements=st.floats(-100, 100, allow_nan=False,
                                                       allow_infinity=False,
                                                       width=32)))
        if n >= 4 and draw(st.booleans()):
            summaries[0] = summaries[n - 1]  # force an exact tie
        thetas = np.arange(n, dtype=float)[:, None]
        s0 = draw(hnp.arrays(np.float64, (m,),
                             elements=st.floats(-100, 100, allow_nan=False,
                                                allow_infinity=False, width=32)))
        k = draw(st.integers(1, n - 1))
        return ReferenceTable(thetas=thetas, summaries=summaries,
                              seed=0, model_id="prop"), s0, k

    return build()


class TestSelectionProperties:
    @settings(max_examples=300, deadline=None)
    @given(_tables())
    def test_matches_stable_sort(self, case):
        table, s0, k = case
        d2 = squared_distances(table.summaries, s0)
        expected = np.lexsort((np.arange(table.n_rows), d2))[:k]
        accepted = abc_knn(table, s0, k)
        assert accepted.source_indices.tolist() == expected.tolist()
        assert np.all(np.diff(accepted.distances) >= 0)
        assert accepted.radius_next >= accepted.distances[-1]

    @settings(max_examples=300, deadline=None)
    @given(_tables())
    def test_duality_as_sets(self, case):
        table, s0, k = case
        knn = abc_knn(table, s0, k)
        tol = abc_tolerance(table, s0, knn.distances[-1])
        # with ties at the cut the tolerance rule may accept extra rows,
        # but never fewer, and always a superset
        assert set(knn.source_indices) <= set(tol.source_indices)
        d2 = squared_distances(table.summaries, s0)
        if len(np.unique(d2)) == table.n_rows:
            assert set(knn.source_indices) == set(tol.source_indices)

    @settings(max_examples=200, deadline=None)
    @given(_tables(min_rows=3))
    def test_radius_next_monotone_in_k(self, case):
        table, s0, _ = case
        radii = [abc_knn(table, s0, k).radius_next
                 for k in range(1, table.n_rows)]
        assert all(a <= b for a, b in zip(radii, radii[1:]))


class TestPercentileProperties:
    @settings(max_examples=300, deadline=None)
    @given(st.integers(2, 10**7),
           st.floats(1e-9, 1, exclude_max=True, allow_nan=False))
    def test_result_always_in_valid_range(self, n, alpha):
        k = percentile_to_k(n, alpha)
        assert 1 <= k <= n - 1

    @settings(max_examples=200, deadline=None)
    @given(st.integers(2, 10**6),
           st.floats(0.001, 0.5, allow_nan=False),
           st.floats(0.001, 0.49, allow_nan=False))
    def test_monotone_in_alpha(self, n, alpha, bump):
        assert percentile_to_k(n, alpha) <= percentile_to_k(n, min(alpha + bump, 0.999))


class TestKernelProperties:
    @settings(max_examples=200, deadline=None)
    @given(st.sampled_from(["naive", "gaussian"]), st.integers(1, 4),
           st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=4))
    def test_nonnegative_and_symmetric(self, kind, dim, coords):
        u = np.resize(np.asarray(coords, dtype=float), dim)
        kernel = make_kernel(kind, dim)
        value = kernel_eval(kernel, u)
        assert value >= 0.0
        assert value == kernel_eval(kernel, -u)
        assert value <= kernel.normalizer  # the mode sits at the origin

    def test_ball_volume_ratio_identity(self):
        # V_p / V_{p-2} = 2 pi / p, a sharp closed-form consistency check
        for p in range(3, 31):
            ratio = unit_ball_volume(p) / unit_ball_volume(p - 2)
            assert ratio == pytest.approx(2 * np.pi / p, rel=1e-12)


class TestBoundProperties:
    @settings(max_examples=300, deadline=None)
    @given(st.integers(1, 8),
           st.floats(0.1, 10, allow_nan=False),
           st.floats(0.5, 5, allow_nan=False),
           st.integers(100, 10**6),
           st.floats(1e-6, 1.0, allow_nan=False))
    def test_admissible_bounds_are_positive(self, m, xi0, L, n, frac):
        ratio_cap = min(1.0, xi0 * L**m)
        k = max(1, min(n - 1, int(frac * ratio_cap * (n + 1) - 1)))
        if (k + 1) / (n + 1) > xi0 * L**m:
            return
        for order in (2, 4):
            assert distance_moment_bound(m, k, n, xi0, L, order) > 0.0
