import numpy as np
import pytest
import torch

from jointseg.core import ClassTaxonomy, MultiModalSample, Volume
from jointseg.errors import ValidationError
from jointseg.losses import lesion_loss, tissue_loss
from jointseg.model import (
    FULL,
    SHARED_ONLY,
    NetworkConfig,
    build_discriminator,
    build_network,
    copy_shared_into_full_branch,
    disc_forward,
    forward,
    load_checkpoint,
    save_checkpoint,
)


@pytest.fixture(scope="module")
def tax():
    return ClassTaxonomy(tissue_classes=tuple(range(1, 7)), lesion_classes=(7,))


@pytest.fixture(scope="module")
def cfg():
    return NetworkConfig(n_modalities=2, n_classes=8, base_channels=4, depth=3)


def make_sample(seed=0, shape=(16, 16, 16), full=True):
    rng = np.random.default_rng(seed)
    t1 = Volume(rng.normal(size=shape).astype(np.float32))
    flair = Volume(rng.normal(size=shape).astype(np.float32)) if full else None
    return MultiModalSample(modalities=(t1, flair), domain_tag="lesion" if full else "control")


class TestNetworkContracts:
    def test_output_shape_and_simplex(self, cfg, tax):
        torch.manual_seed(0)
        net = build_network(cfg)
        s = make_sample(shape=(32, 32, 32))
        probs, feats = forward(net, s, FULL, tax)
        assert probs.data.shape == (8, 32, 32, 32)
        sums = probs.data.sum(axis=0)
        assert np.abs(sums - 1).max() < 1e-5

    def test_depth_levels_in_feature_stack(self, cfg, tax):
        torch.manual_seed(0)
        net = build_network(cfg)
        s = make_sample()
        _, feats = forward(net, s, SHARED_ONLY, tax)
        assert len(feats) == cfg.depth
        for l, f in enumerate(feats):
            assert f.shape[1:] == tuple(n // 2**l for n in s.shape)

    def test_parameter_count_deterministic(self, cfg):
        n1 = sum(p.numel() for p in build_network(cfg).parameters())
        n2 = sum(p.numel() for p in build_network(cfg).parameters())
        assert n1 == n2

    def test_missing_modality_rejected_in_full_mode(self, cfg, tax):
        torch.manual_seed(0)
        net = build_network(cfg)
        s = make_sample(full=False)
        with pytest.raises(ValidationError):
            forward(net, s, FULL, tax)

    def test_branch_averaging_identity(self, cfg, tax):
        torch.manual_seed(1)
        net = build_network(cfg)
        copy_shared_into_full_branch(net)
        s = make_sample(seed=2)
        # make the extra modality pure noise: only the T1 channel feeds branch B
        p_full, _ = forward(net, s, FULL, tax)
        p_shared, _ = forward(net, s, SHARED_ONLY, tax)
        np.testing.assert_allclose(p_full.data, p_shared.data, atol=1e-5)

    def test_batch_independence_instance_norm(self, cfg):
        torch.manual_seed(2)
        net = build_network(cfg).eval()
        a = torch.randn(1, 1, 16, 16, 16)
        b = torch.randn(1, 1, 16, 16, 16)
        with torch.no_grad():
            single, _ = net(a, None, SHARED_ONLY)
            batched, _ = net(torch.cat([a, b]), None, SHARED_ONLY)
        assert torch.allclose(single[0], batched[0], atol=1e-5)

    def test_absent_slots_never_read(self, cfg, tax):
        torch.manual_seed(3)
        net = build_network(cfg)
        rng = np.random.default_rng(5)
        t1 = Volume(rng.normal(size=(16, 16, 16)).astype(np.float32))
        # NaNs in the absent slot must not propagate in shared_only mode
        s = MultiModalSample(modalities=(t1, None), domain_tag="control")
        probs, feats = forward(net, s, SHARED_ONLY, tax)
        assert np.isfinite(probs.data).all()

    def test_determinism_in_eval(self, cfg, tax):
        torch.manual_seed(4)
        net = build_network(cfg)
        s = make_sample(seed=6)
        p1, _ = forward(net, s, FULL, tax)
        p2, _ = forward(net, s, FULL, tax)
        np.testing.assert_array_equal(p1.data, p2.data)

    def test_nondivisible_input_padded(self, cfg, tax):
        torch.manual_seed(5)
        net = build_network(cfg)
        s = make_sample(seed=7, shape=(18, 20, 17))
        probs, _ = forward(net, s, SHARED_ONLY, tax)
        assert probs.data.shape[1:] == (18, 20, 17)


class TestGradientFlow:
    def test_every_parameter_receives_gradient(self, cfg, tax):
        torch.manual_seed(6)
        net = build_network(cfg)
        x_t1_l = torch.randn(2, 1, 16, 16, 16)
        x_full_l = torch.randn(2, 2, 16, 16, 16)
        x_t1_c = torch.randn(2, 1, 16, 16, 16)
        y_l = torch.softmax(torch.randn(2, 8, 16, 16, 16), 1)
        y_c = torch.softmax(torch.randn(2, 8, 16, 16, 16), 1)

        p_full, _ = net(x_t1_l, x_full_l, FULL)
        p_t1_l, _ = net(x_t1_l, None, SHARED_ONLY)
        p_t1_c, _ = net(x_t1_c, None, SHARED_ONLY)
        loss = torch.zeros(())
        for b in range(2):
            loss = loss + lesion_loss(p_full[b], y_l[b], tax, eps=1e-7)
            loss = loss + tissue_loss(p_full[b], p_t1_l[b], tax, eps=1e-7)
            loss = loss + tissue_loss(p_t1_c[b], y_c[b], tax, eps=1e-7)
        loss.backward()
        dead = [
            name
            for name, p in net.named_parameters()
            if p.grad is None or float(p.grad.abs().max()) == 0.0
        ]
        assert not dead, f"dead parameters: {dead}"


class TestDiscriminator:
    def test_output_in_unit_interval(self, cfg):
        torch.manual_seed(7)
        net = build_network(cfg)
        d = build_discriminator(cfg)
        with torch.no_grad():
            _, feats = net(torch.randn(2, 1, 16, 16, 16), None, SHARED_ONLY)
            out = disc_forward(d, feats)
        assert out.shape == (2,)
        assert ((out > 0) & (out < 1)).all()

    def test_deterministic_in_eval(self, cfg):
        torch.manual_seed(8)
        net = build_network(cfg).eval()
        d = build_discriminator(cfg).eval()
        with torch.no_grad():
            _, feats = net(torch.randn(1, 1, 16, 16, 16), None, SHARED_ONLY)
            o1 = disc_forward(d, feats)
            o2 = disc_forward(d, feats)
        assert torch.equal(o1, o2)

    def test_learns_separable_synthetic_features(self, cfg):
        # two-Gaussian toy task on synthetic feature stacks
        torch.manual_seed(9)
        d = build_discriminator(cfg, width=16)
        opt = torch.optim.Adam(d.parameters(), lr=1e-3)
        ch = [cfg.base_channels * 2**l for l in range(cfg.depth)]

        def batch(label, n=8):
            mean = 1.0 if label else -1.0
            return [mean + 0.3 * torch.randn(n, c, 8 // 2**l, 8 // 2**l, 8 // 2**l)
                    for l, c in enumerate(ch)]

        for _ in range(120):
            opt.zero_grad()
            pl = disc_forward(d, batch(True))
            pc = disc_forward(d, batch(False))
            loss = -(torch.log(pl + 1e-8).mean() + torch.log(1 - pc + 1e-8).mean())
            loss.backward()
            opt.step()
        with torch.no_grad():
            acc = 0.5 * (
                (disc_forward(d, batch(True)) > 0.5).float().mean()
                + (disc_forward(d, batch(False)) < 0.5).float().mean()
            )
        assert float(acc) > 0.9


class TestCheckpoint:
    def test_round_trip_with_version(self, tmp_path, cfg, tax):
        torch.manual_seed(10)
        net = build_network(cfg)
        path = tmp_path / "ckpt.pt"
        save_checkpoint(path, net, tax, extra={"note": "test"})
        net2, tax2, payload = load_checkpoint(path)
        assert payload["version"] == 1
        assert tax2.channel_classes == tax.channel_classes
        for p1, p2 in zip(net.parameters(), net2.parameters()):
            assert torch.equal(p1, p2)

    def test_version_field_mandatory(self, tmp_path, cfg, tax):
        from jointseg.errors import FormatError

        torch.manual_seed(10)
        net = build_network(cfg)
        path = tmp_path / "ckpt.pt"
        save_checkpoint(path, net, tax)
        payload = torch.load(path, weights_only=False)
        del payload["version"]
        torch.save(payload, path)
        with pytest.raises(FormatError):
            load_checkpoint(path)
