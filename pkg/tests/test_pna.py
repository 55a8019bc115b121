"""Factorization: gradients, Lipschitz bounds, exact recovery, alignment."""

import numpy as np
import pytest

from tvgraphs.errors import ParameterError, ShapeError
from tvgraphs.glm import Mode, RegressionSetting
from tvgraphs.pna import (
    Factorization,
    IpalmConfig,
    align_factors,
    apply_alignment,
    brute_force_alignment_score,
    ipalm_factorize,
    lipschitz_bounds,
    mf_gradients,
    mf_objective,
    prox_B,
    scree_profile,
)


def ar_setting(N=3, M=2):
    return RegressionSetting(Mode.DIRECTED_AR, N=N, M=M)


def random_lowrank(rng, K, setting, R, noise=0.0):
    mask = setting.mask.reshape(-1)
    C = rng.normal(size=(K, R))
    Bcal = rng.normal(size=(setting.m * setting.p, R)) * mask[:, None]
    Ahat = C @ Bcal.T
    if noise:
        Ahat = Ahat + noise * rng.normal(size=Ahat.shape) * mask[None, :]
    return Ahat, C, Bcal


class TestGradients:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        for trial in range(10):
            setting = ar_setting(N=int(rng.integers(2, 4)), M=1)
            K = int(rng.integers(4, 9))
            R = int(rng.integers(1, 3))
            Ahat, C, Bcal = random_lowrank(rng, K, setting, R, noise=0.3)
            lam_star = float(rng.uniform(0, 0.5))
            dB, dC = mf_gradients(C, Bcal, Ahat, lam_star)

            def smooth(Cm, Bm):
                return 0.5 * np.sum((Ahat - Cm @ Bm.T) ** 2) + 0.5 * lam_star * (
                    np.sum(Cm**2) + np.sum(Bm**2)
                )

            h = 1e-6
            for _ in range(5):
                i = rng.integers(0, C.shape[0])
                j = rng.integers(0, C.shape[1])
                Cu, Cd = C.copy(), C.copy()
                Cu[i, j] += h
                Cd[i, j] -= h
                fd = (smooth(Cu, Bcal) - smooth(Cd, Bcal)) / (2 * h)
                assert dC[i, j] == pytest.approx(fd, rel=1e-5, abs=1e-6)
                a = rng.integers(0, Bcal.shape[0])
                Bu, Bd = Bcal.copy(), Bcal.copy()
                Bu[a, j] += h
                Bd[a, j] -= h
                fd = (smooth(C, Bu) - smooth(C, Bd)) / (2 * h)
                assert dB[a, j] == pytest.approx(fd, rel=1e-5, abs=1e-6)

    def test_shape_checks(self):
        with pytest.raises(ShapeError):
            mf_gradients(np.zeros((4, 2)), np.zeros((6, 3)), np.zeros((4, 6)), 0.0)
        with pytest.raises(ShapeError):
            mf_gradients(np.zeros((4, 2)), np.zeros((6, 2)), np.zeros((5, 6)), 0.0)


class TestLipschitz:
    def test_bounds_never_exceeded(self):
        """Empirical gradient-difference ratios stay under the block bounds."""
        rng = np.random.default_rng(1)
        setting = ar_setting(N=3, M=1)
        for _ in range(100):
            K, R = 6, 2
            Ahat, C, Bcal = random_lowrank(rng, K, setting, R, noise=0.5)
            lam_star = float(rng.uniform(0, 1))
            Lb, Lc = lipschitz_bounds(C, Bcal, lam_star)
            B2 = Bcal + rng.normal(size=Bcal.shape)
            dB1, _ = mf_gradients(C, Bcal, Ahat, lam_star)
            dB2, _ = mf_gradients(C, B2, Ahat, lam_star)
            num = np.linalg.norm(dB2 - dB1)
            den = np.linalg.norm(B2 - Bcal)
            assert num <= Lb * den * (1 + 1e-10)
            C2 = C + rng.normal(size=C.shape)
            _, dC1 = mf_gradients(C, Bcal, Ahat, lam_star)
            _, dC2 = mf_gradients(C2, Bcal, Ahat, lam_star)
            num = np.linalg.norm(dC2 - dC1)
            den = np.linalg.norm(C2 - C)
            assert num <= Lc * den * (1 + 1e-10)


class TestProxB:
    def test_columns_thresholded_independently(self):
        setting = ar_setting(N=2, M=2)
        rng = np.random.default_rng(2)
        Bcal = rng.normal(size=(setting.m * setting.p, 2))
        out = prox_B(Bcal, 0.7, setting)
        from tvgraphs.prox import prox_penalty

        for r in range(2):
            col = Bcal[:, r].reshape(setting.m, setting.p)
            want = prox_penalty(col, 0.7, setting, "granger_groups")
            want = want * setting.mask
            assert np.allclose(out[:, r], want.reshape(-1))

    def test_negative_threshold_rejected(self):
        with pytest.raises(ParameterError):
            prox_B(np.zeros((4, 1)), -1.0, ar_setting(N=2, M=1))


class TestExactRecovery:
    @pytest.mark.parametrize("R", [1, 2, 3])
    def test_noiseless_rank_r(self, R):
        rng = np.random.default_rng(10 + R)
        setting = ar_setting(N=4, M=2)
        K = 50
        Ahat, _, _ = random_lowrank(rng, K, setting, R)
        fac = ipalm_factorize(Ahat, setting, R, lam_star=0.0, lam_1=0.0)
        rel = np.linalg.norm(Ahat - fac.reconstruction()) / np.linalg.norm(Ahat)
        assert rel <= 1e-6

    def test_objective_history_decreases_overall(self):
        rng = np.random.default_rng(3)
        setting = ar_setting(N=3, M=1)
        Ahat, _, _ = random_lowrank(rng, 20, setting, 2, noise=0.2)
        fac = ipalm_factorize(Ahat, setting, 2, lam_star=0.1, lam_1=0.05)
        assert fac.history[-1] < fac.history[0]

    def test_sparsity_penalty_prunes_groups(self):
        rng = np.random.default_rng(4)
        setting = ar_setting(N=4, M=1)
        Ahat, _, _ = random_lowrank(rng, 30, setting, 2, noise=0.1)
        dense = ipalm_factorize(Ahat, setting, 2, lam_1=0.0)
        sparse = ipalm_factorize(Ahat, setting, 2, lam_1=5.0)
        assert np.count_nonzero(sparse.Bcal) < np.count_nonzero(dense.Bcal)

    def test_invalid_inputs(self):
        setting = ar_setting(N=2, M=1)
        with pytest.raises(ParameterError):
            ipalm_factorize(np.zeros((4, 4)), setting, R=0)
        with pytest.raises(ParameterError):
            ipalm_factorize(np.full((4, 4), np.nan), setting, R=1)
        with pytest.raises(ParameterError):
            IpalmConfig(tol=-1.0)
        with pytest.raises(ParameterError):
            IpalmConfig(init="kmeans")

    def test_random_init_deterministic(self):
        rng = np.random.default_rng(5)
        setting = ar_setting(N=3, M=1)
        Ahat, _, _ = random_lowrank(rng, 15, setting, 2, noise=0.2)
        cfg = IpalmConfig(init="random", seed=7)
        a = ipalm_factorize(Ahat, setting, 2, config=cfg)
        b = ipalm_factorize(Ahat, setting, 2, config=cfg)
        assert a.Bcal.tobytes() == b.Bcal.tobytes()
        assert a.C.tobytes() == b.C.tobytes()


class TestAlignment:
    def make_fac(self, C, Bcal, setting):
        return Factorization(C=C, Bcal=Bcal, setting=setting)

    def test_recovers_permutation_sign_and_scale(self):
        rng = np.random.default_rng(6)
        setting = ar_setting(N=3, M=1)
        mp = setting.m * setting.p
        R = 3
        Bref = rng.normal(size=(mp, R))
        Cref = rng.normal(size=(20, R))
        ref = self.make_fac(Cref, Bref, setting)
        perm_true = [2, 0, 1]
        factors = np.array([-2.0, 0.5, 3.0])
        Best = Bref[:, perm_true] / factors
        Cest = Cref[:, perm_true] * factors
        est = self.make_fac(Cest, Best, setting)
        perm, signs, scales = align_factors(est, ref)
        aligned = apply_alignment(est, perm, signs, scales)
        assert np.allclose(aligned.Bcal, Bref, atol=1e-10)
        assert np.allclose(
            aligned.reconstruction(), est.reconstruction(), atol=1e-10
        )

    def test_greedy_matches_brute_force_on_wellseparated(self):
        rng = np.random.default_rng(7)
        setting = ar_setting(N=3, M=1)
        mp = setting.m * setting.p
        for _ in range(20):
            R = 3
            B = np.linalg.qr(rng.normal(size=(mp, R)))[0]  # orthogonal columns
            ref = self.make_fac(rng.normal(size=(10, R)), B, setting)
            est = self.make_fac(
                rng.normal(size=(10, R)),
                B[:, rng.permutation(R)] * rng.choice([-1, 1], R),
                setting,
            )
            perm, signs, scales = align_factors(est, ref)
            corr_sum = brute_force_alignment_score(est, ref)
            aligned = apply_alignment(est, perm, signs, scales)
            got = sum(
                abs(
                    aligned.Bcal[:, j]
                    @ ref.Bcal[:, j]
                    / (
                        np.linalg.norm(aligned.Bcal[:, j])
                        * np.linalg.norm(ref.Bcal[:, j])
                    )
                )
                for j in range(R)
            )
            assert got == pytest.approx(corr_sum, abs=1e-8)

    def test_rank_mismatch_rejected(self):
        setting = ar_setting(N=2, M=1)
        a = self.make_fac(np.zeros((4, 1)), np.zeros((4, 1)), setting)
        b = self.make_fac(np.zeros((4, 2)), np.zeros((4, 2)), setting)
        with pytest.raises(ParameterError):
            align_factors(a, b)


class TestScree:
    def test_rank_visible_in_profile(self):
        rng = np.random.default_rng(8)
        setting = ar_setting(N=4, M=1)
        Ahat, _, _ = random_lowrank(rng, 30, setting, 2)
        s = scree_profile(Ahat)
        assert s[1] > 1e3 * max(s[2], 1e-300)
