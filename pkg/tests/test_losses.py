import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import hat_matrix
from ovaib import autodiff as ad
from ovaib import info_oracle as io
from ovaib import losses
from ovaib.errors import DomainError, ShapeError
from ovaib.linalg import cosine_similarity, log_sum_exp


# definition-level oracles built from the scalar projection score


def oracle_score(z, rest, lam=1e-8):
    A = np.column_stack(rest)
    return cosine_similarity(z, hat_matrix(A, lam) @ z)


def oracle_sufficiency_m(zs, m, tau, include_positive=False, lam=1e-8):
    N, M = zs[0].shape[0], len(zs)
    rest_idx = [i for i in range(M) if i != m]
    terms = []
    for n in range(N):
        s = [oracle_score(zs[m][n], [zs[i][k] for i in rest_idx], lam) / tau for k in range(N)]
        denom = [s[k] for k in range(N) if include_positive or k != n]
        terms.append(-s[n] + log_sum_exp(denom))
    return float(np.mean(terms))


def oracle_minimality_m(zs, m):
    M, N = len(zs), zs[0].shape[0]
    total = 0.0
    for n in range(N):
        centre = sum(zs[i][n] for i in range(M) if i != m) / (M - 1)
        total += sum((zs[m][n, j] - centre[j]) ** 2 for j in range(zs[0].shape[1]))
    return total / N


def oracle_clip_direction(za, zb, tau):
    N = za.shape[0]
    out = 0.0
    for n in range(N):
        s = [cosine_similarity(za[n], zb[k]) / tau for k in range(N)]
        out += -s[n] + log_sum_exp([s[k] for k in range(N) if k != n])
    return out / N


def bundle(seed, N=5, d=4, M=3):
    rng = np.random.default_rng(seed)
    return [rng.normal(size=(N, d)) for _ in range(M)]


def value(node):
    return float(node.value)


class TestConfig:
    @pytest.mark.parametrize("kwargs", [{"tau": 0}, {"lam": -1}, {"beta": -0.5}, {"scorer": "dot"}])
    def test_rejects(self, kwargs):
        with pytest.raises(DomainError):
            losses.LossConfig(**kwargs)

    def test_defaults(self):
        cfg = losses.LossConfig()
        assert (cfg.tau, cfg.beta, cfg.lam) == (0.01, 1.0, 1e-8)
        assert not cfg.include_positive_in_denominator


class TestBundle:
    def test_single_modality(self):
        with pytest.raises(ShapeError):
            losses.sufficiency_loss([np.ones((3, 2))], losses.LossConfig())

    def test_mismatched_shapes(self):
        with pytest.raises(ShapeError):
            losses.total_loss([np.ones((3, 2)), np.ones((3, 3))], losses.LossConfig())

    def test_needs_negatives(self):
        with pytest.raises(ShapeError):
            losses.sufficiency_loss([np.ones((1, 2)), np.ones((1, 2))], losses.LossConfig())


class TestProjectionScore:
    def test_in_span(self):
        e = np.eye(3)
        assert losses.projection_score(e[0], [e[0], e[1]]) == pytest.approx(1.0, abs=1e-7)

    def test_orthogonal(self):
        e = np.eye(3)
        assert losses.projection_score(e[2], [e[0], e[1]]) == pytest.approx(0.0, abs=1e-12)

    def test_hat_matrix_oracle(self):
        rng = np.random.default_rng(0)
        z, rest = rng.normal(size=4), [rng.normal(size=4) for _ in range(2)]
        assert losses.projection_score(z, rest) == pytest.approx(oracle_score(z, rest), abs=1e-10)

    def test_m2_is_abs_cosine(self):
        rng = np.random.default_rng(1)
        z, r = rng.normal(size=6), rng.normal(size=6)
        assert losses.projection_score(z, [r]) == pytest.approx(abs(cosine_similarity(z, r)), abs=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.1, 1e3))
    def test_positive_rescaling(self, seed, c):
        # ridge shrinkage grows like lam / c^2, so very small scales are excluded
        rng = np.random.default_rng(seed)
        z, rest = rng.normal(size=5), [rng.normal(size=5) for _ in range(2)]
        assert losses.projection_score(c * z, [c * r for r in rest]) == pytest.approx(
            losses.projection_score(z, rest), abs=1e-6)

    def test_score_matrix_matches_scalar(self):
        zs = bundle(2)
        table = losses.projection_score_matrix(zs[0], zs[1:])
        for n, k in itertools.product(range(5), range(5)):
            assert table[n, k] == pytest.approx(oracle_score(zs[0][n], [zs[1][k], zs[2][k]]), abs=1e-10)


class TestMlpScorer:
    def test_block_average(self):
        d, M = 3, 3
        W = np.vstack([np.eye(d) / (M - 1)] * (M - 1))
        params = ad.MlpParams([W], [np.zeros(d)], ["identity"])
        rng = np.random.default_rng(3)
        z, rest = rng.normal(size=d), [rng.normal(size=d) for _ in range(M - 1)]
        assert losses.mlp_scorer(z, rest, params) == pytest.approx(cosine_similarity(z, np.mean(rest, 0)), abs=1e-12)

    def test_straight_line_oracle(self):
        rng = np.random.default_rng(4)
        params = ad.init_mlp([8, 5, 4], rng)
        z, rest = rng.normal(size=4), [rng.normal(size=4) for _ in range(2)]
        h = np.concatenate(rest) @ params.weights[0] + params.biases[0]
        h = np.where(h > 0, h, 0.01 * h) @ params.weights[1] + params.biases[1]
        assert losses.mlp_scorer(z, rest, params) == pytest.approx(cosine_similarity(z, h), abs=1e-12)

    def test_width_mismatch(self):
        params = ad.init_mlp([6, 3], np.random.default_rng(0))
        with pytest.raises(ShapeError):
            losses.mlp_scorer(np.ones(4), [np.ones(4), np.ones(4)], params)


class TestSufficiency:
    def test_hand_value(self):
        z = np.eye(2)
        cfg = losses.LossConfig(tau=1.0)
        assert value(losses.sufficiency_loss_m([z, z], 0, cfg)) == pytest.approx(-1.0, abs=1e-7)

    def test_identical_modalities(self):
        rng = np.random.default_rng(5)
        z = rng.normal(size=(4, 3))
        cfg = losses.LossConfig(tau=1.0)
        # rest = [z, z] makes the Gram matrix rank one plus lam; the explicit
        # inverse in the oracle loses about half the digits
        assert value(losses.sufficiency_loss_m([z, z, z], 0, cfg)) == pytest.approx(
            oracle_sufficiency_m([z, z, z], 0, 1.0), abs=1e-7)

    def test_positive_scores_one(self):
        rng = np.random.default_rng(6)
        z = rng.normal(size=(4, 3))
        scores = losses.score_matrix_m([z, z, z], 0, losses.LossConfig()).value
        np.testing.assert_allclose(np.diag(scores), 1.0, atol=1e-7)

    def test_symmetric_batch_equal_terms(self):
        # rotationally symmetric batch: every sample sees the same score profile
        angles = 2 * np.pi * np.arange(4) / 4
        z = np.column_stack([np.cos(angles), np.sin(angles), np.ones(4)])
        terms = losses.sufficiency_terms_m([z, z, z], 0, losses.LossConfig(tau=1.0)).value
        np.testing.assert_allclose(terms, terms[0], atol=1e-12)

    @pytest.mark.parametrize("include_positive", [False, True])
    def test_definition_oracle(self, include_positive):
        zs = bundle(7)
        cfg = losses.LossConfig(tau=0.3, include_positive_in_denominator=include_positive)
        for m in range(3):
            assert value(losses.sufficiency_loss_m(zs, m, cfg)) == pytest.approx(
                oracle_sufficiency_m(zs, m, 0.3, include_positive), abs=1e-10)

    def test_mean_over_modalities(self):
        zs = bundle(8)
        cfg = losses.LossConfig(tau=0.5)
        parts = [oracle_sufficiency_m(zs, m, 0.5) for m in range(3)]
        assert value(losses.sufficiency_loss(zs, cfg)) == pytest.approx(sum(parts) / 3, abs=1e-10)

    def test_m2_directional_average(self):
        zs = bundle(9, M=2)
        cfg = losses.LossConfig(tau=0.5)
        both = (value(losses.sufficiency_loss_m(zs, 0, cfg)) + value(losses.sufficiency_loss_m(zs, 1, cfg))) / 2
        assert value(losses.sufficiency_loss(zs, cfg)) == pytest.approx(both, abs=1e-12)

    def test_sample_permutation(self):
        zs = bundle(10)
        perm = np.random.default_rng(0).permutation(5)
        cfg = losses.LossConfig(tau=0.2)
        t = losses.sufficiency_terms_m(zs, 1, cfg).value
        tp = losses.sufficiency_terms_m([z[perm] for z in zs], 1, cfg).value
        np.testing.assert_allclose(tp, t[perm], atol=1e-12)
        assert tp.mean() == pytest.approx(t.mean(), abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.1, 100.0))
    def test_scale_invariance(self, seed, c):
        zs = bundle(seed)
        cfg = losses.LossConfig(tau=0.1)
        assert value(losses.sufficiency_loss([c * z for z in zs], cfg)) == pytest.approx(
            value(losses.sufficiency_loss(zs, cfg)), abs=1e-6)

    def test_mlp_scorer_needs_projectors(self):
        with pytest.raises(DomainError):
            losses.sufficiency_loss(bundle(0), losses.LossConfig(scorer="mlp"))

    def test_mlp_scorer_table(self):
        zs = bundle(11)
        rng = np.random.default_rng(11)
        projs = [ad.init_mlp([8, 6, 4], rng) for _ in range(3)]
        cfg = losses.LossConfig(scorer="mlp")
        table = losses.score_matrix_m(zs, 2, cfg, projs).value
        for n, k in itertools.product(range(5), range(5)):
            assert table[n, k] == pytest.approx(losses.mlp_scorer(zs[2][n], [zs[0][k], zs[1][k]], projs[2]), abs=1e-12)


class TestMinimality:
    def test_hand_value(self):
        zs = [np.array([[1.0, 0.0]]), np.zeros((1, 2)), np.zeros((1, 2))]
        assert value(losses.minimality_loss_m(zs, 0)) == 1.0

    def test_equal_means(self):
        z = np.random.default_rng(0).normal(size=(4, 3))
        assert value(losses.minimality_loss([z, z, z])) == 0.0

    def test_zero_iff_coincide(self):
        z = np.random.default_rng(1).normal(size=(4, 3))
        w = z.copy()
        w[2, 1] += 1e-3
        assert value(losses.minimality_loss([z, w])) > 0

    def test_double_loop(self):
        zs = bundle(12)
        for m in range(3):
            assert value(losses.minimality_loss_m(zs, m)) == pytest.approx(oracle_minimality_m(zs, m), abs=1e-12)

    def test_m2_symmetry(self):
        zs = bundle(13, M=2)
        expected = np.mean(np.sum((zs[0] - zs[1]) ** 2, axis=1))
        assert value(losses.minimality_loss_m(zs, 0)) == pytest.approx(expected, abs=1e-12)
        assert value(losses.minimality_loss(zs)) == pytest.approx(expected, abs=1e-12)

    def test_m4_enumeration(self):
        zs = bundle(14, M=4)
        expected = sum(oracle_minimality_m(zs, m) for m in range(4)) / 4
        assert value(losses.minimality_loss(zs)) == pytest.approx(expected, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.01, 100.0))
    def test_quadratic_scaling(self, seed, c):
        zs = bundle(seed)
        base = value(losses.minimality_loss(zs))
        assert value(losses.minimality_loss([c * z for z in zs])) == pytest.approx(c * c * base, rel=1e-9)

    def test_matches_gaussian_kl(self):
        # per-sample term is 2 sigma^2 / (M - 1) times the one-vs-rest KL minus its constant
        zs = bundle(15, N=1, d=3, M=4)
        var, M, d = 0.7, 4, 3
        mus = [z[0] for z in zs]
        q = io.gaussian_product([io.IsotropicGaussian(mu, var) for mu in mus[1:]])
        kl = io.gaussian_kl(io.IsotropicGaussian(mus[0], var), q) - io.minimality_constant(d, M)
        assert value(losses.minimality_loss_m(zs, 0)) == pytest.approx(2 * var / (M - 1) * kl, abs=1e-10)


class TestTotal:
    def test_beta_zero(self):
        zs = bundle(16)
        cfg = losses.LossConfig(tau=0.2, beta=0.0)
        assert value(losses.total_loss(zs, cfg)) == value(losses.sufficiency_loss(zs, cfg))

    def test_beta_one_sum(self):
        zs = bundle(17)
        cfg = losses.LossConfig(tau=0.2, beta=1.0)
        total, ls, lm = losses.loss_components(zs, cfg)
        assert value(total) == pytest.approx(value(ls) + value(lm), abs=1e-12)
        assert value(losses.total_loss(zs, cfg)) == pytest.approx(value(total), abs=1e-12)

    def test_beta_half(self):
        zs = bundle(18)
        cfg = losses.LossConfig(tau=0.3, beta=0.5)
        ls = sum(oracle_sufficiency_m(zs, m, 0.3) for m in range(3)) / 3
        lm = sum(oracle_minimality_m(zs, m) for m in range(3)) / 3
        assert value(losses.total_loss(zs, cfg)) == pytest.approx(ls + 0.5 * lm, abs=1e-10)

    def test_beta_monotone(self):
        zs = bundle(19)
        vals = [value(losses.total_loss(zs, losses.LossConfig(tau=0.2, beta=b))) for b in (0, 0.1, 1, 10)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_modality_permutation(self):
        zs = bundle(20, M=4)
        cfg = losses.LossConfig(tau=0.2)
        perm = [2, 0, 3, 1]
        zp = [zs[i] for i in perm]
        per = [value(losses.sufficiency_loss_m(zs, m, cfg)) for m in range(4)]
        per_p = [value(losses.sufficiency_loss_m(zp, m, cfg)) for m in range(4)]
        np.testing.assert_allclose(per_p, [per[i] for i in perm], atol=1e-12)
        for fn in (lambda b: losses.sufficiency_loss(b, cfg), losses.minimality_loss,
                   lambda b: losses.total_loss(b, cfg)):
            assert value(fn(zp)) == pytest.approx(value(fn(zs)), abs=1e-12)


class TestClip:
    def test_m2_single_pair(self):
        zs = bundle(21, M=2)
        expected = 0.5 * (oracle_clip_direction(zs[0], zs[1], 0.1) + oracle_clip_direction(zs[1], zs[0], 0.1))
        assert value(losses.pairwise_clip_loss(zs, 0.1)) == pytest.approx(expected, abs=1e-10)

    def test_m3_sum_of_pairs(self):
        zs = bundle(22)
        pairs = [value(losses.pairwise_clip_loss([zs[i], zs[j]], 0.1)) for i, j in itertools.combinations(range(3), 2)]
        assert value(losses.pairwise_clip_loss(zs, 0.1)) == pytest.approx(sum(pairs), abs=1e-12)

    def test_definition_oracle(self):
        zs = bundle(23, M=4)
        expected = sum(
            0.5 * (oracle_clip_direction(zs[i], zs[j], 0.2) + oracle_clip_direction(zs[j], zs[i], 0.2))
            for i, j in itertools.combinations(range(4), 2)
        )
        assert value(losses.pairwise_clip_loss(zs, 0.2)) == pytest.approx(expected, abs=1e-10)


class TestGradients:
    @pytest.mark.parametrize("scorer", ["projection", "mlp"])
    @pytest.mark.parametrize("include_positive", [False, True])
    def test_total_loss(self, scorer, include_positive):
        rng = np.random.default_rng(24)
        zs = [rng.normal(size=(4, 4)) for _ in range(3)]
        projs = [ad.init_mlp([8, 5, 4], rng) for _ in range(3)] if scorer == "mlp" else None
        arrays = zs + [a for p in projs or [] for a in p.arrays()]
        cfg = losses.LossConfig(tau=0.1, scorer=scorer, include_positive_in_denominator=include_positive)

        def fn(leaves):
            pl = None if projs is None else [leaves[3 + 4 * i:3 + 4 * i + 4] for i in range(3)]
            return losses.total_loss(leaves[:3], cfg, projs, pl)

        rep = ad.finite_diff_check(fn, arrays)
        assert rep.passed, rep


class TestPopulationBound:
    def test_lower_bound(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            M = 2 + seed % 3
            j = io.random_joint(rng.integers(2, 4, size=M), rng)
            books = [rng.normal(size=(s, 3)) for s in j.alphabet_sizes]
            for N in (2, 16, 256):
                loss, _ = losses.population_infonce_m(j, books, 0, losses.LossConfig(tau=0.1), N)
                mi = io.mutual_information(j, [0], list(range(1, M)))
                assert -loss - math.log(N) <= mi + 1e-6
                assert -loss + math.log(N - 1) <= mi + 1e-6

    def test_matches_sampled_batches(self):
        # the population loss is the large-batch limit of the empirical loss
        rng = np.random.default_rng(99)
        j = io.random_joint((3, 3), rng)
        books = [rng.normal(size=(3, 2)) for _ in range(2)]
        cfg = losses.LossConfig(tau=0.5)
        N = 400
        expected, _ = losses.population_infonce_m(j, books, 0, cfg, N)
        flat = j.probs.ravel()
        vals = []
        for _ in range(20):
            idx = rng.choice(9, size=N, p=flat)
            a, b = np.divmod(idx, 3)
            vals.append(value(losses.sufficiency_loss_m([books[0][a], books[1][b]], 0, cfg)))
        assert abs(np.mean(vals) - expected) < 0.02

    def test_rejects_tiny_batch(self):
        j = io.random_joint((2, 2), np.random.default_rng(0))
        with pytest.raises(DomainError):
            losses.population_infonce_m(j, [np.eye(2), np.eye(2)], 0, losses.LossConfig(), 1)
