import numpy as np
import pytest
import torch

from lrfuse.data import SyntheticDataset
from lrfuse.evaluation import (
    EvalReport,
    downscale_consistency,
    eval_protocol,
    fid,
    load_extractor,
    lpips,
    make_eval_pairs,
    perturb_lr,
    pixel_features,
)
from lrfuse.imaging import downscale


class TestFid:
    def test_identical_sets_zero(self):
        feats = np.random.default_rng(0).normal(size=(200, 6))
        assert fid(feats, feats.copy()) == pytest.approx(0.0, abs=1e-6)

    def test_closed_form_gaussian_shift(self):
        # mu shift of 1 along e1, identity covariances: analytic distance 1.0
        rng = np.random.default_rng(0)
        dim, n = 4, 10_000
        a = rng.normal(size=(n, dim))
        b = rng.normal(size=(n, dim))
        b[:, 0] += 1.0
        value = fid(a, b)
        assert abs(value - 1.0) <= 0.1

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(300, 5))
        b = rng.normal(size=(300, 5)) * 1.5 + 0.3
        assert abs(fid(a, b) - fid(b, a)) < 1e-9

    def test_nonnegative_after_clamping(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            a = rng.normal(size=(50, 3))
            b = rng.normal(size=(50, 3))
            assert fid(a, b) >= 0.0

    def test_small_sample_regularized_with_warning(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(4, 8))
        b = rng.normal(size=(4, 8))
        with pytest.warns(UserWarning, match="regularized"):
            value = fid(a, b)
        assert np.isfinite(value)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            fid(np.zeros((10, 3)), np.zeros((10, 4)))


class TestLpips:
    def test_identical_images_zero(self):
        a = torch.rand(1, 3, 16, 16) * 2 - 1
        assert lpips(a, a.clone()) == pytest.approx(0.0, abs=1e-9)

    def test_symmetry(self):
        a = torch.rand(1, 3, 16, 16) * 2 - 1
        b = torch.rand(1, 3, 16, 16) * 2 - 1
        assert lpips(a, b) == pytest.approx(lpips(b, a), abs=1e-9)

    def test_fallback_correlates_with_l1(self):
        # rank correlation between the pyramid metric and plain l1 distance
        torch.manual_seed(0)
        base = torch.rand(1, 3, 16, 16) * 2 - 1
        dists, l1s = [], []
        for _ in range(100):
            other = (base + torch.randn_like(base) * torch.rand(()) * 0.5).clamp(-1, 1)
            dists.append(lpips(base, other))
            l1s.append(float((base - other).abs().mean()))
        rank_a = np.argsort(np.argsort(dists)).astype(float)
        rank_b = np.argsort(np.argsort(l1s)).astype(float)
        spearman = np.corrcoef(rank_a, rank_b)[0, 1]
        assert spearman > 0.5

    def test_plugin_extractor_used(self):
        class TinyExtractor:
            name = "tiny"
            feature_dim = 48

            def embed(self, images):
                return pixel_features(images, size=4)

            def feature_maps(self, images):
                return [images, downscale(images, 2)]

        a = torch.rand(1, 3, 8, 8)
        b = torch.rand(1, 3, 8, 8)
        assert lpips(a, b, TinyExtractor()) > 0
        assert lpips(a, a.clone(), TinyExtractor()) == pytest.approx(0.0, abs=1e-9)


class TestConsistency:
    def test_oracle_model_returning_target(self):
        # a model that outputs the HR target itself is an exact member
        ds = SyntheticDataset(10, 16, seed=0, split="all")
        pairs = [
            (ds[i].unsqueeze(0), downscale(ds[i].unsqueeze(0), 4)) for i in range(5)
        ]
        identity = lambda x, lr: x
        assert downscale_consistency(identity, pairs, 4) == pytest.approx(0.0, abs=1e-7)

    def test_model_returning_source(self):
        ds = SyntheticDataset(10, 16, seed=0, split="all")
        pairs = make_eval_pairs(ds, 6, factor=4, seed=0)
        identity = lambda x, lr: x
        expected = np.mean(
            [float((downscale(x, 4) - lr).abs().mean()) for x, lr in pairs]
        )
        assert downscale_consistency(identity, pairs, 4) == pytest.approx(expected, rel=1e-6)

    def test_invariant_to_batching(self):
        ds = SyntheticDataset(10, 16, seed=0, split="all")
        pairs = make_eval_pairs(ds, 6, factor=4, seed=0)
        identity = lambda x, lr: x
        one = downscale_consistency(identity, pairs, 4)
        again = downscale_consistency(identity, list(pairs), 4)
        assert one == pytest.approx(again, abs=1e-12)


class TestPerturbLr:
    def test_grayscale_idempotent(self):
        lr = torch.rand(1, 3, 4, 4) * 2 - 1
        once = perturb_lr(lr, "grayscale")
        twice = perturb_lr(once, "grayscale")
        assert torch.allclose(once, twice, atol=1e-6)
        assert torch.allclose(once[:, 0], once[:, 1]) and torch.allclose(once[:, 1], once[:, 2])

    def test_gaussian_sigma_zero_identity(self):
        lr = torch.rand(1, 3, 4, 4) * 2 - 1
        assert torch.equal(perturb_lr(lr, "gaussian", sigma=0.0), lr)

    def test_gaussian_clamped_and_seeded(self):
        lr = torch.rand(1, 3, 4, 4) * 2 - 1
        g1 = torch.Generator().manual_seed(0)
        g2 = torch.Generator().manual_seed(0)
        a = perturb_lr(lr, "gaussian", sigma=0.5, generator=g1)
        b = perturb_lr(lr, "gaussian", sigma=0.5, generator=g2)
        assert torch.equal(a, b)
        assert float(a.min()) >= -1.0 and float(a.max()) <= 1.0

    def test_manual_edit_applies_and_clamps(self):
        lr = torch.zeros(1, 3, 4, 4)
        with pytest.warns(UserWarning, match="clamped"):
            out = perturb_lr(lr, "manual_edit", edits=[(1, 2, (2.0, -0.5, 0.25))])
        assert torch.allclose(out[0, :, 1, 2], torch.tensor([1.0, -0.5, 0.25]))
        assert float(out.abs().sum()) == pytest.approx(1.75)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            perturb_lr(torch.zeros(1, 3, 4, 4), "sepia")


class TestEvalProtocol:
    @pytest.fixture
    def identity_gen(self):
        class IdentityGen(torch.nn.Module):
            def forward(self, x, lr):
                return x

        return IdentityGen().eval()

    def test_sample_count(self, identity_gen):
        ds = SyntheticDataset(12, 16, seed=0, split="all")
        report = eval_protocol(identity_gen, ds, factor=4, samples_per_lr=10, max_targets=3)
        assert len(report.sample_manifest) == 10 * 3
        assert report.samples_per_lr == 10

    def test_sources_never_equal_target(self, identity_gen):
        ds = SyntheticDataset(12, 16, seed=0, split="all")
        report = eval_protocol(identity_gen, ds, factor=4, samples_per_lr=5, max_targets=4)
        for entry in report.sample_manifest:
            assert entry["source"] != entry["target"]

    def test_deterministic_under_seed(self, identity_gen):
        ds = SyntheticDataset(12, 16, seed=0, split="all")
        a = eval_protocol(identity_gen, ds, factor=4, samples_per_lr=3, max_targets=3, seed=4)
        b = eval_protocol(identity_gen, ds, factor=4, samples_per_lr=3, max_targets=3, seed=4)
        assert a.to_json() == b.to_json()

    def test_report_round_trip(self, identity_gen, tmp_path):
        ds = SyntheticDataset(12, 16, seed=0, split="all")
        report = eval_protocol(identity_gen, ds, factor=4, samples_per_lr=3, max_targets=2)
        path = tmp_path / "report.json"
        report.save(path)
        assert EvalReport.load(path) == report

    def test_reference_context_recorded(self, identity_gen):
        ds = SyntheticDataset(12, 16, seed=0, split="all")
        report = eval_protocol(identity_gen, ds, factor=4, samples_per_lr=3, max_targets=2)
        assert report.reference_context["fid_128"] == pytest.approx(15.52)
        assert report.reference_context["lpips_128"] == pytest.approx(0.34)
        assert report.reference_context["reproducible_at_desk_scale"] is False
        assert report.used_fallback_features is True


class TestExtractorPlugin:
    def test_load_valid_plugin(self, tmp_path):
        plugin = tmp_path / "extractor.py"
        plugin.write_text(
            "import numpy as np\n"
            "class E:\n"
            "    name = 'flat'\n"
            "    feature_dim = 12\n"
            "    def embed(self, images):\n"
            "        return images.reshape(images.shape[0], -1)[:, :12].numpy()\n"
            "def build_extractor():\n"
            "    return E()\n"
        )
        extractor = load_extractor(plugin)
        assert extractor.name == "flat"

    def test_missing_plugin_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_extractor(tmp_path / "none.py")

    def test_incomplete_plugin_rejected(self, tmp_path):
        plugin = tmp_path / "bad.py"
        plugin.write_text("def build_extractor():\n    return object()\n")
        with pytest.raises(ValueError, match="missing attribute"):
            load_extractor(plugin)


class TestMosaic:
    def test_eval_protocol_writes_mosaic(self, tmp_path):
        class IdentityGen(torch.nn.Module):
            def forward(self, x, lr):
                return x

        ds = SyntheticDataset(12, 16, seed=0, split="all")
        mosaic = tmp_path / "samples.png"
        eval_protocol(
            IdentityGen().eval(), ds, factor=4, samples_per_lr=3, max_targets=2,
            mosaic_path=mosaic,
        )
        from lrfuse.imaging import load_image

        grid = load_image(mosaic)
        assert grid.shape == (1, 3, 2 * 16, 3 * 16)  # one row per target
