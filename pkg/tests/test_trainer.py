import dataclasses
import math

import numpy as np
import pytest

from hazebayes import autodiff as ad
from hazebayes import nets, trainer
from hazebayes.datagen import HazeTriplet, synthetic_dataset
from hazebayes.variational import HyperParams, kl_lognormal

SMALL = trainer.TrainConfig(steps=6, batch_size=2, patch_size=16, seed=3)


@pytest.fixture(scope="module")
def small_data():
    return synthetic_dataset(4, size=24, seed=5)


def constant_tnet(value, widths=(3, 4, 1)):
    w = nets.init_weights(nets.NetSpec("tnet", widths), 0)
    w = w.with_flat(np.zeros(w.size))
    w.params[f"conv{len(widths) - 2}.bias"][:] = value
    return w


def affine_dnet(scale, offset):
    """D-Net computing ``y + scale * y + offset`` exactly (for y >= 0)."""
    spec = nets.NetSpec("dnet", (3, 3, 3, 3))
    w = nets.init_weights(spec, 0).with_flat(np.zeros(nets.init_weights(spec, 0).size))
    for i in range(3):
        eye = w.params[f"conv{i}.kernel"]
        for c in range(3):
            eye[c, c, 1, 1] = 1.0
    w.params["conv2.kernel"] *= scale
    w.params["conv2.bias"][:] = offset
    return w


class TestConfig:
    def test_defaults(self):
        cfg = trainer.TrainConfig()
        assert (cfg.lr, cfg.optimizer, cfg.batch_size, cfg.patch_size) == (1e-3, "adam", 4, 64)
        assert (cfg.beta1, cfg.beta2, cfg.adam_eps) == (0.9, 0.999, 1e-8)

    def test_dict_round_trip(self):
        cfg = trainer.TrainConfig(lr=0.01, hyper=HyperParams(sigma2=2e-5), dnet_widths=(3, 4, 3))
        assert trainer.TrainConfig.from_dict(cfg.as_dict()) == cfg

    @pytest.mark.parametrize(
        "kw", [{"steps": 0}, {"batch_size": 0}, {"optimizer": "lbfgs"}, {"a_mode": "oracle"}, {"lr": -1.0}]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            trainer.TrainConfig(**kw)


class TestTrain:
    def test_zero_lr(self, small_data):
        cfg = trainer.TrainConfig(lr=0.0, steps=3, batch_size=2, patch_size=16, seed=1)
        theta0 = nets.init_weights(cfg.dnet_spec(), 8)
        psi0 = nets.init_weights(cfg.tnet_spec(), 9)
        theta, psi, log = trainer.train(small_data, cfg, theta0, psi0)
        np.testing.assert_array_equal(theta.flatten(), theta0.flatten())
        np.testing.assert_array_equal(psi.flatten(), psi0.flatten())
        assert [r.step for r in log] == [0, 1, 2]

    def test_deterministic(self, small_data):
        a = trainer.train(small_data, SMALL)
        b = trainer.train(small_data, SMALL)
        assert a[0].flatten().tobytes() == b[0].flatten().tobytes()
        assert a[1].flatten().tobytes() == b[1].flatten().tobytes()
        assert [r.negative_elbo for r in a[2]] == [r.negative_elbo for r in b[2]]

    def test_seed_matters(self, small_data):
        a = trainer.train(small_data, SMALL)
        b = trainer.train(small_data, dataclasses.replace(SMALL, seed=4))
        assert not np.array_equal(a[0].flatten(), b[0].flatten())

    def test_log_records_consistent(self, small_data):
        seen = []
        _, _, log = trainer.train(small_data, SMALL, on_step=seen.append)
        assert seen == log
        for r in log:
            assert r.negative_elbo == -r.likelihood + r.kl_z + r.kl_tau
            assert r.kl_z >= 0 and r.kl_tau >= 0

    def test_sgd_and_dcp_mode(self, small_data):
        cfg = trainer.TrainConfig(
            optimizer="sgd", lr=1e-12, a_mode="dcp", steps=2, batch_size=1, patch_size=16
        )
        _, _, log = trainer.train(small_data, cfg)
        assert all(math.isfinite(r.negative_elbo) for r in log)

    def test_nonfinite_aborts(self, small_data):
        theta = nets.init_weights(SMALL.dnet_spec(), 0)
        theta.params["conv2.bias"][0] = np.nan
        with pytest.raises(trainer.TrainingDiverged) as exc:
            trainer.train(small_data, SMALL, theta=theta)
        assert exc.value.step == 0

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            trainer.train([], SMALL)

    def test_misaligned(self):
        trip = HazeTriplet(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)), np.ones((4, 8, 1)), 0.9)
        with pytest.raises(ValueError):
            trainer.train([trip], SMALL)

    def test_tnet_training_reduces_kl_tau(self):
        data = synthetic_dataset(8, size=32, seed=21)
        cfg = trainer.TrainConfig(steps=100, batch_size=2, patch_size=32, seed=0)
        psi0 = nets.init_weights(cfg.tnet_spec(), 77)
        _, psi, _ = trainer.train(data, cfg, psi=psi0)

        def total(psi_w):
            return sum(kl_lognormal(nets.tnet_forward(psi_w, d.hazy), d.trans, cfg.hyper.eps2_2) for d in data)

        assert total(psi) < total(psi0)

    @pytest.mark.slow
    def test_short_run_decreases(self):
        data = synthetic_dataset(32, size=64, seed=0)
        _, _, log = trainer.train(data, trainer.TrainConfig(steps=200, seed=0))
        first = np.mean([r.negative_elbo for r in log[:100]])
        last = np.mean([r.negative_elbo for r in log[-100:]])
        assert last < first


class TestEvaluate:
    def test_identity_on_hazeless(self):
        x = synthetic_dataset(2, size=16, seed=1)
        data = [HazeTriplet(d.clean, d.clean.copy(), np.ones((16, 16, 1)), 1.0) for d in x]
        rep = trainer.evaluate(nets.init_weights(nets.DNET_SPEC, 0), None, data)
        assert rep["mean"]["psnr"] == 99.0
        assert abs(rep["mean"]["ssim"] - 1.0) < 1e-12
        assert "trans_mse" not in rep["mean"]

    def test_constant_tnet_zero_mse(self):
        d = synthetic_dataset(1, size=16, seed=2)[0]
        t = np.full((16, 16, 1), 0.625)
        data = [HazeTriplet(d.clean, d.hazy, t, d.A)]
        rep = trainer.evaluate(nets.init_weights(nets.DNET_SPEC, 0), constant_tnet(0.625), data)
        assert rep["mean"]["trans_mse"] == 0.0
        assert abs(rep["per_image"][0]["trans_ssim"] - 1.0) < 1e-12

    def test_dnet_metrics_ignore_tnet(self, small_data):
        theta, psi, _ = trainer.train(small_data, SMALL)
        with_psi = trainer.evaluate(theta, psi, small_data)
        without = trainer.evaluate(theta, None, small_data)
        for a, b in zip(with_psi["per_image"], without["per_image"]):
            for k in ("psnr", "ssim", "mse"):
                assert a[k] == b[k]

    def test_hazy_baseline(self, small_data):
        rep = trainer.evaluate(nets.init_weights(nets.DNET_SPEC, 0), None, small_data)
        # identity D-Net scores exactly like the hazy input
        assert rep["mean"]["psnr"] == rep["mean"]["hazy_psnr"]


class TestGradients:
    def test_gradcheck_report(self):
        rep = trainer.end_to_end_gradcheck()
        assert len(rep["seeds"]) == 5
        assert rep["max_rel_err"] < 1e-4

    def test_zero_residual_stationary(self):
        # y dyadic in [0.5, 1], t = 0.5, A = 1: x = 2y - 1 is reproduced exactly
        r = np.random.default_rng(0)
        y = r.integers(32, 65, size=(8, 8, 3)) / 64.0
        x = 2 * y - 1
        t = np.full((8, 8, 1), 0.5)
        theta = affine_dnet(1.0, -1.0)
        psi = constant_tnet(0.5, (3, 3, 3, 1))
        hp = HyperParams(A=1.0)
        np.testing.assert_array_equal(nets.dnet_forward(theta, y), x)
        g_theta, g_psi, br = trainer._element_grads(theta, psi, y, x, t, hp)
        assert br.kl_z == 0.0 and br.kl_tau == 0.0
        assert np.max(np.abs(g_theta)) <= 1e-10
        assert np.max(np.abs(g_psi)) <= 1e-10

    def test_sigma2_touches_only_likelihood(self, rng):
        y = rng.uniform(size=(6, 6, 3))
        x = rng.uniform(size=(6, 6, 3))
        t = rng.uniform(0.2, 1.0, size=(6, 6, 1))
        phi0 = rng.uniform(size=(6, 6, 3))
        nu0 = rng.uniform(0.2, 1.0, size=(6, 6, 1))
        hp = HyperParams(A=0.9)

        def term_grads(hp_, which):
            phi, nu = ad.Tensor(phi0), ad.Tensor(nu0)
            ad.backward(trainer.objective_graph(phi, nu, y, x, t, hp_)[which])
            return phi.grad, nu.grad

        doubled = hp.replace(sigma2=2 * hp.sigma2)
        for which in (1, 2):
            for g1, g2 in zip(term_grads(hp, which), term_grads(doubled, which)):
                np.testing.assert_array_equal(g1, g2)
        for g1, g2 in zip(term_grads(hp, 0), term_grads(doubled, 0)):
            np.testing.assert_array_equal(g2, 0.5 * g1)

    def test_graph_matches_closed_form(self, rng):
        from hazebayes.variational import negative_elbo

        y, x = rng.uniform(size=(2, 5, 5, 3))
        t = rng.uniform(0.2, 1, size=(5, 5, 1))
        phi, nu = rng.uniform(size=(5, 5, 3)), rng.uniform(0.2, 1, size=(5, 5, 1))
        hp = HyperParams(A=0.8)
        lik, kz, kt = trainer.objective_graph(ad.Tensor(phi), ad.Tensor(nu), y, x, t, hp)
        br = negative_elbo(y, x, t, phi, nu, hp)
        assert float(lik.value) == pytest.approx(br.likelihood, rel=1e-12)
        assert float(kz.value) == pytest.approx(br.kl_z, rel=1e-12)
        assert float(kt.value) == pytest.approx(br.kl_tau, rel=1e-12)
