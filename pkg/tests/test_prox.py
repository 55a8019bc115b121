"""Proximal operators checked against direct minimization oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from tvgraphs.errors import ParameterError, ShapeError
from tvgraphs.glm import Mode, RegressionSetting
from tvgraphs.prox import (
    group_shrink,
    nuclear_norm,
    penalty_value,
    prox_group,
    prox_nuclear,
    prox_penalty,
    prox_symmetric_pairs,
)


def grid_prox_oracle(a, t, lo=-3.0, hi=3.0, refine=6):
    """Minimize 0.5||z - a||^2 + t||z|| over z = s * a/||a|| by scalar grid
    search with refinement.  The group prox solution is collinear with a."""
    na = np.linalg.norm(a)
    if na == 0:
        return np.zeros_like(a)
    direction = a / na
    span = (lo, max(hi, na * 1.5))
    best = 0.0
    for _ in range(refine):
        s_grid = np.linspace(span[0], span[1], 2001)
        vals = 0.5 * (s_grid - na) ** 2 + t * np.abs(s_grid)
        i = int(np.argmin(vals))
        best = s_grid[i]
        w = (span[1] - span[0]) / 2000
        span = (best - 2 * w, best + 2 * w)
    return best * direction


class TestGroupProx:
    def test_matches_grid_oracle_on_100_groups(self):
        rng = np.random.default_rng(42)
        setting = RegressionSetting(Mode.DIRECTED_AR, N=1, M=4)
        for _ in range(100):
            a = rng.normal(size=4) * rng.uniform(0.1, 3.0)
            t = rng.uniform(0.0, 2.0)
            got = prox_group(a.reshape(1, 4), t, setting).ravel()
            want = grid_prox_oracle(a, t)
            assert np.abs(got - want).max() <= 1e-4

    def test_closed_form(self):
        setting = RegressionSetting(Mode.DIRECTED_AR, N=2, M=2)
        A = np.array([[3.0, 0.0, 4.0, 0.0], [0.1, 0.0, 0.0, 0.0]])
        out = prox_group(A, 1.0, setting)
        # group (0,0) has norm 5 -> scaled by 4/5; group (1,0) has norm .1 -> zeroed
        assert out[0, 0] == pytest.approx(3.0 * 4 / 5)
        assert out[0, 2] == pytest.approx(4.0 * 4 / 5)
        assert out[1, 0] == 0.0

    def test_zero_threshold_identity(self):
        setting = RegressionSetting(Mode.DIRECTED_AR, N=3, M=2)
        A = np.random.default_rng(0).normal(size=(3, 6))
        assert np.array_equal(prox_group(A, 0.0, setting), A)

    def test_negative_threshold_rejected(self):
        setting = RegressionSetting(Mode.DIRECTED_AR, N=2, M=1)
        with pytest.raises(ParameterError):
            prox_group(np.ones((2, 2)), -0.5, setting)

    def test_group_shrink_boundary(self):
        # at ||a|| == t the group should be exactly zeroed
        assert group_shrink(np.array([2.0]), 2.0)[0] == 0.0
        assert group_shrink(np.array([0.0]), 1.0)[0] == 0.0

    @settings(max_examples=50, deadline=None)
    @given(
        a=hnp.arrays(
            np.float64,
            (2, 6),
            elements=st.floats(-10, 10, allow_nan=False),
        ),
        t=st.floats(0, 5, allow_nan=False),
    )
    def test_nonexpansive(self, a, t):
        """prox is firmly nonexpansive: |prox(x)-prox(y)| <= |x-y|."""
        setting = RegressionSetting(Mode.DIRECTED_AR, N=3, M=2)
        b = a + 0.37
        pa = prox_group(a, t, setting)
        pb = prox_group(b, t, setting)
        assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-12


class TestSymmetricPairs:
    def test_pair_norm_thresholding(self):
        A = np.array([[0.0, 3.0, 0.05], [4.0, 0.0, 0.0], [0.05, 0.0, 0.0]])
        out = prox_symmetric_pairs(A, 1.0)
        # pair (0,1)/(1,0) has norm 5 -> scale 4/5
        assert out[0, 1] == pytest.approx(3.0 * 4 / 5)
        assert out[1, 0] == pytest.approx(4.0 * 4 / 5)
        # pair (0,2)/(2,0) has norm sqrt(2)*0.05 < 1 -> zeroed
        assert out[0, 2] == 0.0 and out[2, 0] == 0.0

    def test_diagonal_untouched(self):
        A = np.diag([5.0, -2.0, 1.0]) + 0.01 - np.diag([0.01] * 3)
        out = prox_symmetric_pairs(A, 10.0)
        assert np.allclose(np.diag(out), [5.0, -2.0, 1.0])
        assert np.all(out - np.diag(np.diag(out)) == 0.0)

    def test_symmetry_preserved(self):
        rng = np.random.default_rng(3)
        A = rng.normal(size=(4, 4))
        A = A + A.T
        out = prox_symmetric_pairs(A, 0.7)
        assert np.allclose(out, out.T)

    def test_requires_square(self):
        with pytest.raises(ShapeError):
            prox_symmetric_pairs(np.ones((2, 3)), 1.0)

    def test_oracle_pairwise(self):
        """Each off-diagonal pair solves an independent 2-vector prox."""
        rng = np.random.default_rng(5)
        for _ in range(100):
            A = rng.normal(size=(3, 3))
            t = rng.uniform(0, 2)
            out = prox_symmetric_pairs(A, t)
            for i in range(3):
                for j in range(i + 1, 3):
                    pair = np.array([A[i, j], A[j, i]])
                    want = grid_prox_oracle(pair, t)
                    assert abs(out[i, j] - want[0]) <= 1e-4
                    assert abs(out[j, i] - want[1]) <= 1e-4


class TestPenaltyValue:
    def test_granger_value(self):
        setting = RegressionSetting(Mode.DIRECTED_AR, N=2, M=2)
        A = np.array([[3.0, 0.0, 4.0, 0.0], [1.0, 0.0, 0.0, 0.0]])
        assert penalty_value(A, setting, "granger_groups") == pytest.approx(6.0)

    def test_symmetric_value(self):
        setting = RegressionSetting(Mode.UNDIRECTED, N=2)
        A = np.array([[0.0, 3.0], [4.0, 0.0]])
        assert penalty_value(A, setting, "symmetric_pairs") == pytest.approx(5.0)

    def test_unknown_kind(self):
        setting = RegressionSetting(Mode.UNDIRECTED, N=2)
        with pytest.raises(ParameterError):
            penalty_value(np.zeros((2, 2)), setting, "elastic")
        with pytest.raises(ParameterError):
            prox_penalty(np.zeros((2, 2)), 1.0, setting, "elastic")

    def test_prox_decreases_moreau_envelope(self):
        """prox output must beat the input on 0.5||z-a||^2 + t*h(z)."""
        rng = np.random.default_rng(8)
        setting = RegressionSetting(Mode.DIRECTED_AR, N=3, M=2)
        for _ in range(20):
            A = rng.normal(size=(3, 6))
            t = rng.uniform(0.05, 1.5)
            Z = prox_group(A, t, setting)
            obj_z = 0.5 * np.sum((Z - A) ** 2) + t * penalty_value(
                Z, setting, "granger_groups"
            )
            obj_a = t * penalty_value(A, setting, "granger_groups")
            assert obj_z <= obj_a + 1e-10


class TestNuclear:
    def test_svt_matches_svd_reconstruction(self):
        rng = np.random.default_rng(9)
        L = rng.normal(size=(5, 7))
        t = 0.8
        U, s, Vt = np.linalg.svd(L, full_matrices=False)
        want = (U * np.maximum(s - t, 0.0)) @ Vt
        assert np.allclose(prox_nuclear(L, t), want)

    def test_rank_reduction(self):
        rng = np.random.default_rng(10)
        L = rng.normal(size=(6, 6))
        s = np.linalg.svd(L, compute_uv=False)
        out = prox_nuclear(L, s[2])  # kill all but the top two
        assert np.linalg.matrix_rank(out, tol=1e-10) <= 2

    def test_nuclear_norm_oracle(self):
        L = np.diag([3.0, 2.0, 1.0])
        assert nuclear_norm(L) == pytest.approx(6.0)

    def test_zero_threshold(self):
        L = np.random.default_rng(11).normal(size=(3, 4))
        assert np.allclose(prox_nuclear(L, 0.0), L)
