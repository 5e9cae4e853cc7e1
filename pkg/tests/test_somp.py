"""Greedy simultaneous OMP and the one-shot permutation baseline."""

import numpy as np
import pytest

from permsbl.errors import ConfigError
from permsbl.model import ProblemConfig, gen_problem
from permsbl.permutation import PermObjective, rearrangement_argmax
from permsbl.somp import one_shot_perm, somp_recover, somp_solve


def omp_reference(y, phi, k):
    """Textbook single-vector OMP with the same scoring and joint refit."""
    support = []
    residual = y.copy()
    norms = np.linalg.norm(phi, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    for _ in range(k):
        scores = np.abs(phi.T @ residual) / norms
        scores[support] = -np.inf
        atom = int(np.argmax(scores))
        if scores[atom] <= 0:
            break
        support.append(atom)
        sol, *_ = np.linalg.lstsq(phi[:, support], y, rcond=None)
        residual = y - phi[:, support] @ sol
    x = np.zeros(phi.shape[1])
    if support:
        x[support] = sol
    return support, x


class TestSompRecover:
    def test_noiseless_full_rows_exact_support(self):
        # exhaustive uniqueness oracle per trial, then exact greedy recovery on
        # all 50 seeded instances (greedy selection can miss in principle; this
        # geometry and seed stream are verified clean)
        import itertools

        rng = np.random.default_rng(0)
        for _ in range(50):
            phi = rng.standard_normal((12, 16))
            support_true = sorted(rng.choice(16, size=2, replace=False))
            x = np.zeros((16, 6))
            x[support_true, :] = rng.standard_normal((2, 6))
            y = phi @ x
            exact = [
                s
                for s in itertools.combinations(range(16), 2)
                if np.linalg.norm(
                    y - phi[:, s] @ np.linalg.lstsq(phi[:, s], y, rcond=None)[0]
                )
                < 1e-9
            ]
            assert exact == [tuple(support_true)]
            support, x_hat = somp_recover(y, phi, 2)
            assert sorted(support) == support_true
            assert np.allclose(x_hat[support_true], x[support_true], atol=1e-8)

    def test_zero_observations(self):
        support, x_hat = somp_recover(np.zeros((5, 3)), np.random.default_rng(1).standard_normal((5, 9)), 4)
        assert support.size == 0
        assert np.array_equal(x_hat, np.zeros((9, 3)))

    def test_single_column_matches_reference_omp(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            phi = rng.standard_normal((10, 16))
            x = np.zeros(16)
            x[rng.choice(16, size=3, replace=False)] = rng.standard_normal(3)
            y = phi @ x + 0.01 * rng.standard_normal(10)
            support, x_hat = somp_recover(y[:, None], phi, 3)
            ref_support, ref_x = omp_reference(y, phi, 3)
            assert list(support) == ref_support
            assert x_hat[:, 0] == pytest.approx(ref_x, rel=1e-10, abs=1e-12)

    def test_atoms_unique_and_residual_orthogonal(self):
        rng = np.random.default_rng(3)
        phi = rng.standard_normal((9, 20))
        y = rng.standard_normal((9, 4))
        support, x_hat = somp_recover(y, phi, 5)
        assert len(set(support.tolist())) == len(support)
        residual = y - phi @ x_hat
        assert np.max(np.abs(phi[:, support].T @ residual)) < 1e-8

    def test_rank_deficient_refit_warns_and_uses_min_norm(self):
        # two nearly parallel atoms force a rank-1 refit on a 2-atom support
        phi = np.array([[1.0, 1.0], [0.0, 1e-17]])
        y = np.array([[1.0], [5e-18]])
        with pytest.warns(RuntimeWarning, match="rank-deficient"):
            support, x_hat = somp_recover(y, phi, 2)
        assert len(support) == 2
        assert np.all(np.isfinite(x_hat))

    def test_support_size_bounded(self):
        rng = np.random.default_rng(4)
        phi = rng.standard_normal((3, 10))
        y = rng.standard_normal((3, 2))
        support, _ = somp_recover(y, phi, 8)
        assert len(support) <= 3  # at most B atoms fit B rows


class TestOneShotPerm:
    def test_true_signal_recovers_true_permutation(self):
        rng = np.random.default_rng(5)
        for seed in range(20):
            cfg = ProblemConfig(L=20, N=8, M=3, K=2, rho=0.0, snr_db=200, seed=seed)
            inst = gen_problem(cfg)
            perms = one_shot_perm(inst.y, inst.phi.entries, inst.x_true.entries)
            assert all(p == q for p, q in zip(perms, inst.perms_true))

    def test_zero_inputs_give_ascending_completion(self):
        rng = np.random.default_rng(6)
        phi = rng.standard_normal((5, 9))
        anchors = {0: 3, 2: 1}
        perms = one_shot_perm(np.zeros((5, 2)), phi, np.zeros((9, 2)), anchors)
        want = np.array([3, 0, 1, 2, 4])
        for p in perms:
            assert np.array_equal(p.map, want)

    def test_empty_anchors_equal_per_column_rearrangement(self):
        rng = np.random.default_rng(7)
        phi = rng.standard_normal((6, 10))
        x_hat = rng.standard_normal((10, 4))
        y = rng.standard_normal((6, 4))
        perms = one_shot_perm(y, phi, x_hat)
        v = phi @ x_hat
        for m, p in enumerate(perms):
            assert p == rearrangement_argmax(PermObjective(y[:, m], v[:, m]))


class TestSompSolve:
    def test_full_pipeline_on_shared_instance(self):
        # seed chosen where the greedy baseline succeeds end to end
        cfg = ProblemConfig(
            L=40, N=16, M=8, K=3, rho=0.0, snr_db=60, anchor_fraction=0.5, shared_perm=True, seed=2
        )
        inst = gen_problem(cfg)
        res = somp_solve(inst.y, inst.phi.entries, inst.anchor_maps(), k_max=3, shared_perm=True)
        assert sorted(res.support_est.tolist()) == list(inst.x_true.support)
        assert all(p == q for p, q in zip(res.perms_est, inst.perms_true))
        off = np.ones(40, dtype=bool)
        off[res.support_est] = False
        assert np.all(res.x_hat[off] == 0.0)

    def test_requires_anchors(self):
        rng = np.random.default_rng(10)
        with pytest.raises(ConfigError):
            somp_solve(rng.standard_normal((5, 2)), rng.standard_normal((5, 9)), None, k_max=2)

    def test_rejects_inconsistent_anchor_maps(self):
        rng = np.random.default_rng(11)
        maps = [{0: 1}, {0: 2}]
        with pytest.raises(ConfigError):
            somp_solve(rng.standard_normal((5, 2)), rng.standard_normal((5, 9)), maps, k_max=2)
