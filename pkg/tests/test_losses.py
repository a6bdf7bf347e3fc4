import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcgan import losses as L
from rcgan import nn
from rcgan.losses import Batch, LossWeights

import fd
import oracles
from cases import K, small_batch, small_nets

LS = L.LABEL_SCALE
ORACLE_TOL = 1e-11


def constant_half_d(label_width: int = K + 1) -> nn.Mlp:
    """Sigmoid on zero weights: D = 0.5 everywhere."""
    return nn.Mlp([2 + label_width, 1], ["sigmoid"], [np.zeros((1, 2 + label_width))], [np.zeros(1)], [False])


def uniform_c(k: int = K) -> nn.Mlp:
    return nn.Mlp([2, k], ["softmax"], [np.zeros((k, 2))], [np.zeros(k)], [False])


def identity_g(in_dim: int = 2) -> nn.Mlp:
    w = np.zeros((2, in_dim))
    w[:, :2] = np.eye(2)
    return nn.Mlp([in_dim, 2], ["identity"], [w], [np.zeros(2)], [False])


def onehot_c(centers: np.ndarray) -> nn.Mlp:
    """Near one-hot classifier: logits = 60 * <x, center_j>, centers orthogonal."""
    return nn.Mlp([2, len(centers)], ["softmax"], [60.0 * centers], [np.zeros(len(centers))], [False])


class TestLossWeights:
    def test_negative_rejected(self):
        with pytest.raises(ValueError, match="lambda_marg"):
            LossWeights(lambda_marg=-1.0)

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            LossWeights(alpha=1.5)


class TestBatch:
    def test_label_range(self):
        with pytest.raises(ValueError):
            Batch(K, [[0.0, 0.0]], [K], np.zeros((0, 2)), [], np.zeros((0, 2)))

    def test_all_empty(self):
        with pytest.raises(ValueError, match="empty"):
            Batch(K, np.zeros((0, 2)), [], np.zeros((0, 2)), [], np.zeros((0, 2)))

    def test_from_lists(self):
        b = Batch.from_lists(K, [((1.0, 2.0), 3)], [], [(0.0, 0.0)])
        assert b.source_x.shape == (1, 2) and b.target_x.shape == (0, 2) and len(b.target_unlabeled) == 1


class TestGanRelaxed:
    def test_constant_discriminator(self):
        b = small_batch(0)
        nets = small_nets(0)
        v = L.gan_loss_relaxed(constant_half_d(), nets["g_st"], nets["c"], b, 0.5).item()
        assert v == pytest.approx(-1.386294, abs=1e-6)
        assert v == pytest.approx(2 * math.log(0.5), abs=1e-15)

    def test_alpha_one_ignores_classifier(self):
        b = small_batch(1)
        nets = small_nets(1)
        other = small_nets(99)["c"]
        v1 = L.gan_loss_relaxed(nets["d_t"], nets["g_st"], nets["c"], b, 1.0).item()
        v2 = L.gan_loss_relaxed(nets["d_t"], nets["g_st"], other, b, 1.0).item()
        assert abs(v1 - v2) <= 1e-15

    def test_needs_labeled_target(self):
        nets = small_nets(2)
        b = Batch(K, np.ones((2, 2)), [0, 1], np.zeros((0, 2)), [], np.ones((2, 2)))
        with pytest.raises(ValueError, match="labeled target"):
            L.gan_loss_relaxed(nets["d_t"], nets["g_st"], nets["c"], b, 0.5)

    def test_matches_oracle(self):
        for seed in range(10):
            nets, b = small_nets(seed), small_batch(seed)
            v = L.gan_loss_relaxed(nets["d_t"], nets["g_st"], nets["c"], b, 0.5).item()
            assert abs(v - oracles.gan_relaxed(nets["d_t"], nets["g_st"], nets["c"], b, 0.5, LS)) < 1e-12


class TestGanPreliminary:
    def test_constant_discriminator(self):
        nets = small_nets(0, "preliminary")
        v = L.gan_loss_preliminary(constant_half_d(), nets["g_st"], small_batch(0)).item()
        assert v == pytest.approx(2 * math.log(0.5), abs=1e-15)

    def test_matches_oracle(self):
        for seed in range(10):
            nets, b = small_nets(seed, "preliminary"), small_batch(seed)
            v = L.gan_loss_preliminary(nets["d_t"], nets["g_st"], b).item()
            assert abs(v - oracles.gan_preliminary(nets["d_t"], nets["g_st"], b, LS)) < 1e-12

    def test_shifted_labels_finite(self):
        nets, b = small_nets(3, "preliminary"), small_batch(3)
        b.source_y = (b.source_y + 1) % K
        assert math.isfinite(L.gan_loss_preliminary(nets["d_t"], nets["g_st"], b).item())

    def test_needs_source(self):
        nets = small_nets(4, "preliminary")
        b = Batch(K, np.zeros((0, 2)), [], np.ones((2, 2)), [0, 1], np.ones((2, 2)))
        with pytest.raises(ValueError, match="source"):
            L.gan_loss_preliminary(nets["d_t"], nets["g_st"], b)


class TestCycle:
    def test_identity_generators(self):
        assert L.cycle_loss(identity_g(), identity_g(), small_batch(0), "relaxed").item() == 0.0
        assert L.cycle_loss(identity_g(2 + K), identity_g(2 + K), small_batch(0), "preliminary").item() == 0.0

    def test_zero_reverse_generator(self):
        b = small_batch(5)
        zero = nn.Mlp([2, 2], ["identity"], [np.zeros((2, 2))], [np.zeros(2)], [False])
        # target side: G_st(0) = 0 with an identity G_st, so both terms are mean |x|_1
        expected = np.abs(b.source_x).sum(1).mean() + np.abs(b.target_x).sum(1).mean()
        assert L.cycle_loss(identity_g(), zero, b, "relaxed").item() == pytest.approx(expected, abs=1e-15)

    def test_arity_mismatch(self):
        with pytest.raises(ValueError):
            L.cycle_loss(identity_g(), identity_g(), small_batch(0), "preliminary")

    def test_matches_oracle(self):
        for seed in range(10):
            for variant in ("relaxed", "preliminary"):
                nets, b = small_nets(seed, variant), small_batch(seed)
                v = L.cycle_loss(nets["g_st"], nets["g_ts"], b, variant).item()
                assert abs(v - oracles.cycle(nets["g_st"], nets["g_ts"], b)) < 1e-12


class TestClassifier:
    def test_uniform(self):
        v = L.classifier_loss(uniform_c(), identity_g(), small_batch(0)).item()
        assert v == pytest.approx(2.772589, abs=1e-6)
        assert v == pytest.approx(2 * math.log(4), abs=1e-14)

    def test_perfect_classifier(self):
        centers = np.array([[1.0, 0.0], [0.0, 1.0]])
        c = onehot_c(centers)
        b = Batch(2, [[3.0, 0.0], [0.0, 2.0]], [0, 1], [[1.0, 0.0]], [0], np.zeros((0, 2)))
        assert 0.0 <= L.classifier_loss(c, identity_g(), b).item() <= 2 * 1e-7 * 2

    def test_empty(self):
        b = Batch(K, np.zeros((0, 2)), [], np.zeros((0, 2)), [], np.ones((1, 2)))
        with pytest.raises(ValueError):
            L.classifier_loss(uniform_c(), identity_g(), b)

    def test_matches_oracle(self):
        for seed in range(10):
            for variant in ("relaxed", "preliminary"):
                nets, b = small_nets(seed, variant), small_batch(seed)
                v = L.classifier_loss(nets["c"], nets["g_st"], b).item()
                assert abs(v - oracles.classifier(nets["c"], nets["g_st"], b)) < 1e-12


class TestMarginal:
    def test_constant_discriminator(self):
        v = L.marginal_loss(constant_half_d(), identity_g(), small_batch(0)).item()
        assert v == pytest.approx(-2.079442, abs=1e-6)
        assert v == pytest.approx(3 * math.log(0.5), abs=1e-15)

    def test_empty_unlabeled_skipped(self):
        b = small_batch(0, nu=0)
        v = L.marginal_loss(constant_half_d(), identity_g(), b).item()
        assert v == pytest.approx(2 * math.log(0.5), abs=1e-15)

    def test_label_width(self):
        with pytest.raises(ValueError, match="label width"):
            L.marginal_loss(constant_half_d(K), identity_g(), small_batch(0))

    def test_matches_oracle(self):
        for seed in range(10):
            nets, b = small_nets(seed), small_batch(seed)
            v = L.marginal_loss(nets["d_t"], nets["g_st"], b).item()
            assert abs(v - oracles.marginal(nets["d_t"], nets["g_st"], b, LS)) < 1e-12

    def test_permuting_labels_leaves_it_unchanged(self):
        nets, b = small_nets(6), small_batch(6)
        before = L.marginal_loss(nets["d_t"], nets["g_st"], b).item()
        b.source_y = (b.source_y + 2) % K
        b.target_y = (b.target_y + 1) % K
        assert L.marginal_loss(nets["d_t"], nets["g_st"], b).item() == before


class TestPseudo:
    def test_constant_discriminator(self):
        assert L.pseudo_loss(constant_half_d(), uniform_c(), small_batch(0)).item() == pytest.approx(math.log(0.5))

    def test_uniform_classifier_ties_to_class_zero(self):
        assert np.array_equal(L.pseudo_labels(uniform_c(), np.ones((3, 2))), [0, 0, 0])

    def test_needs_unlabeled(self):
        with pytest.raises(ValueError):
            L.pseudo_loss(constant_half_d(), uniform_c(), small_batch(0, nu=0))

    def test_matches_oracle(self):
        for seed in range(10):
            nets, b = small_nets(seed), small_batch(seed)
            v = L.pseudo_loss(nets["d_t"], nets["c"], b).item()
            assert abs(v - oracles.pseudo(nets["d_t"], nets["c"], b, LS)) < 1e-12

    def test_classifier_gets_no_gradient(self):
        nets, b = small_nets(7), small_batch(7)
        _, g = nn.grads({"c": nets["c"]}, lambda c: L.pseudo_loss(nets["d_t"], c, b))
        assert not np.any(g["c"].values)


class TestEntropy:
    def test_one_hot_classifier(self):
        c = onehot_c(np.array([[1.0, 0.0], [0.0, 1.0]]))
        b = Batch(2, np.zeros((0, 2)), [], np.zeros((0, 2)), [], [[3.0, 0.0], [0.0, 3.0]])
        assert L.entropy_loss(c, b).item() == pytest.approx(0.0, abs=1e-60)

    def test_uniform_ten_classes(self):
        b = Batch(10, np.zeros((0, 2)), [], np.zeros((0, 2)), [], np.ones((3, 2)))
        assert L.entropy_loss(uniform_c(10), b).item() == pytest.approx(2.302585, abs=1e-6)

    def test_matches_oracle(self):
        for seed in range(10):
            nets, b = small_nets(seed), small_batch(seed)
            assert abs(L.entropy_loss(nets["c"], b).item() - oracles.entropy(nets["c"], b)) < 1e-12

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_bounds(self, seed):
        nets, b = small_nets(seed), small_batch(seed)
        v = L.entropy_loss(nets["c"], b).item()
        assert 0.0 <= v <= math.log(K) + 1e-12


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_losses_finite_and_signed(seed):
    variant = "relaxed" if seed % 2 else "preliminary"
    nets, b = small_nets(seed, variant), small_batch(seed)
    assert L.classifier_loss(nets["c"], nets["g_st"], b).item() >= 0.0
    assert L.cycle_loss(nets["g_st"], nets["g_ts"], b, variant).item() >= 0.0
    out = L.total_loss(nets, b, LossWeights(), variant)
    assert all(math.isfinite(v.item()) for v in out.values())


def test_saturated_discriminator_stays_finite():
    nets, b = small_nets(0), small_batch(0)
    d = nets["d_t"]
    d.biases[-1][:] = 1e4
    assert math.isfinite(L.gan_loss_relaxed(d, nets["g_st"], nets["c"], b, 0.5).item())
    d.biases[-1][:] = -1e4
    assert math.isfinite(L.gan_loss_relaxed(d, nets["g_st"], nets["c"], b, 0.5).item())


# composition -------------------------------------------------------------------


class TestTotalLoss:
    def test_all_zero_weights(self):
        zero = LossWeights(**{f: 0.0 for f in LossWeights().to_dict()})
        out = L.total_loss(small_nets(0), small_batch(0), zero, "relaxed")
        assert all(v.item() == 0.0 for v in out.values())

    def test_gan_only(self):
        w = LossWeights(lambda_gan=1.0, lambda_cycle=0.0, lambda_c=0.0, lambda_marg=0.0, lambda_pseudo=0.0,
                        lambda_ent=0.0, lambda_gan_reverse=0.0)
        nets, b = small_nets(1), small_batch(1)
        out = L.total_loss(nets, b, w, "relaxed")
        assert out["for_d"].item() == L.gan_loss_relaxed(nets["d_t"], nets["g_st"], nets["c"], b, 0.5).item()

    def test_manual_composition(self):
        for seed in range(5):
            nets, b = small_nets(seed), small_batch(seed)
            pb = small_batch(seed + 50)
            w = LossWeights(lambda_gan=1.3, lambda_cycle=0.7, lambda_c=0.9, lambda_marg=0.4, lambda_pseudo=0.6,
                            lambda_ent=0.2, alpha=0.5, lambda_gan_reverse=0.8)
            out = L.total_loss(nets, b, w, "relaxed", pseudo_batch=pb)
            d, ds, g, gts, c = (nets[n] for n in ("d_t", "d_s", "g_st", "g_ts", "c"))
            log_ds = np.log(np.clip(oracles.dense_forward(ds, b.source_x)[:, 0], 1e-7, 1 - 1e-7)).mean()
            pool = np.concatenate([b.target_x, b.target_unlabeled])
            rev_fake = np.log(1 - np.clip(oracles.dense_forward(ds, oracles.dense_forward(gts, pool))[:, 0],
                                          1e-7, 1 - 1e-7)).mean()
            for_d = (1.3 * oracles.gan_relaxed(d, g, c, b, 0.5, LS) + 0.8 * (log_ds + rev_fake)
                     + 0.4 * oracles.marginal(d, g, b, LS) + 0.6 * oracles.pseudo(d, c, pb, LS))
            assert abs(out["for_d"].item() - for_d) < ORACLE_TOL

            gen_term = oracles.mean(math.log(1 - oracles.clamp(oracles.d_value(d, oracles.gen(g, x, y, K),
                                                                               oracles.onehot(y, K), LS)))
                                    for x, y in zip(b.source_x, b.source_y))
            code = [0.0] * K + [1.0]
            marg_fake = oracles.mean(math.log(1 - oracles.clamp(oracles.d_value(d, oracles.gen(g, x, 0, K), code, LS)))
                                     for x in b.source_x)
            for_g = 1.3 * 0.5 * gen_term + 0.8 * rev_fake + 0.4 * marg_fake + 0.7 * oracles.cycle(g, gts, b)
            assert abs(out["for_g"].item() - for_g) < ORACLE_TOL

            cls_term = oracles.mean(math.log(1 - oracles.clamp(oracles.d_value(d, x, oracles.dense_forward(c, [x])[0],
                                                                               LS))) for x in b.target_unlabeled)
            for_c = 1.3 * 0.5 * cls_term + 0.9 * oracles.classifier(c, g, b) + 0.2 * oracles.entropy(c, b)
            assert abs(out["for_c"].item() - for_c) < ORACLE_TOL

    def test_nonsaturating_swaps_fake_terms_only(self):
        nets, b = small_nets(2), small_batch(2)
        w = LossWeights()
        mm = L.total_loss(nets, b, w, "relaxed", generator_loss="minimax")
        ns = L.total_loss(nets, b, w, "relaxed", generator_loss="nonsaturating")
        assert mm["for_d"].item() == ns["for_d"].item()
        fake = L.transfer(nets["g_st"], b.source_x, b.source_y, K)
        p = L._d(nets["d_t"], fake, L.onehot(b.source_y, K)).data[:, 0]
        gen_mm = np.log(1 - np.clip(p, 1e-7, 1 - 1e-7)).mean()
        gen_ns = -np.log(np.clip(p, 1e-7, 1 - 1e-7)).mean()
        # only the generator fake terms differ; check one of them directly
        assert L.generator_term(nets["d_t"], nets["g_st"], b).item() == pytest.approx(gen_mm, abs=1e-14)
        assert L.generator_term(nets["d_t"], nets["g_st"], b, True).item() == pytest.approx(gen_ns, abs=1e-14)

    def test_player_subset(self):
        out = L.total_loss(small_nets(0), small_batch(0), LossWeights(), "relaxed", players=("for_c",))
        assert list(out) == ["for_c"]

    def test_preliminary_has_no_classifier_adversary(self):
        nets, b = small_nets(3, "preliminary"), small_batch(3)
        w = LossWeights(lambda_c=0.0, lambda_ent=0.0)
        assert L.total_loss(nets, b, w, "preliminary")["for_c"].item() == 0.0

    @pytest.mark.parametrize("generator_loss", ["minimax", "nonsaturating"])
    def test_minimax_direction(self, generator_loss):
        step = 1e-3
        for seed in range(5):
            nets, b = small_nets(seed), small_batch(seed)
            w = LossWeights()
            for player, names, sign in (("for_d", ("d_t", "d_s"), 1.0), ("for_g", ("g_st", "g_ts"), -1.0),
                                        ("for_c", ("c",), -1.0)):
                def value(all_nets):
                    return L.total_loss(all_nets, b, w, "relaxed", players=(player,),
                                        generator_loss=generator_loss)[player]

                v0, g = nn.grads({n: nets[n] for n in names}, lambda **t: value({**nets, **t}))
                moved = dict(nets)
                for n in names:
                    pv = nn.flatten(nets[n])
                    moved[n] = nn.unflatten(nn.ParamVector(pv.values + sign * step * g[n].values, pv.layout),
                                            like=nets[n])
                v1 = value(moved).item()
                assert sign * (v1 - v0) >= -1e-9


# gradient checks ---------------------------------------------------------------


def _fd_case(seed, variant="relaxed"):
    return small_nets(seed, variant), small_batch(seed)


@pytest.mark.parametrize("seed", [0, 1])
class TestFiniteDifferences:
    def test_gan_relaxed(self, seed):
        nets, b = _fd_case(seed)
        sub = {n: nets[n] for n in ("d_t", "g_st", "c")}
        err = fd.check(sub, lambda t: L.gan_loss_relaxed(t["d_t"], t["g_st"], t["c"], b, 0.5))
        assert err < fd.REL_TOL

    def test_gan_preliminary(self, seed):
        nets, b = _fd_case(seed, "preliminary")
        sub = {n: nets[n] for n in ("d_t", "g_st")}
        assert fd.check(sub, lambda t: L.gan_loss_preliminary(t["d_t"], t["g_st"], b)) < fd.REL_TOL

    @pytest.mark.parametrize("variant", ["relaxed", "preliminary"])
    def test_cycle(self, seed, variant):
        nets, b = _fd_case(seed, variant)
        sub = {n: nets[n] for n in ("g_st", "g_ts")}
        assert fd.check(sub, lambda t: L.cycle_loss(t["g_st"], t["g_ts"], b, variant)) < fd.REL_TOL

    def test_classifier(self, seed):
        nets, b = _fd_case(seed)
        sub = {n: nets[n] for n in ("c", "g_st")}
        assert fd.check(sub, lambda t: L.classifier_loss(t["c"], t["g_st"], b)) < fd.REL_TOL

    def test_marginal(self, seed):
        nets, b = _fd_case(seed)
        sub = {n: nets[n] for n in ("d_t", "g_st")}
        assert fd.check(sub, lambda t: L.marginal_loss(t["d_t"], t["g_st"], b)) < fd.REL_TOL

    def test_pseudo(self, seed):
        nets, b = _fd_case(seed)
        sub = {n: nets[n] for n in ("d_t", "c")}
        assert fd.check(sub, lambda t: L.pseudo_loss(t["d_t"], t["c"], b)) < fd.REL_TOL

    def test_entropy(self, seed):
        nets, b = _fd_case(seed)
        assert fd.check({"c": nets["c"]}, lambda t: L.entropy_loss(t["c"], b)) < fd.REL_TOL

    def test_reverse(self, seed):
        nets, b = _fd_case(seed)
        sub = {n: nets[n] for n in ("d_s", "g_ts")}
        assert fd.check(sub, lambda t: L.reverse_gan_loss(t["d_s"], t["g_ts"], b)) < fd.REL_TOL

    @pytest.mark.parametrize("player", ["for_d", "for_g", "for_c"])
    def test_total(self, seed, player):
        nets, b = _fd_case(seed)
        err = fd.check(nets, lambda t: L.total_loss(t, b, LossWeights(), "relaxed", players=(player,),
                                                    generator_loss="nonsaturating")[player])
        assert err < fd.REL_TOL
