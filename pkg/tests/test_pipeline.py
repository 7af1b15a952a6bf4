import numpy as np
import pytest

from fgfpca.binning import build_bins
from fgfpca.errors import ConfigError, StageError
from fgfpca.fpca import SmoothOptions, fpca_latent, project_to_full_grid
from fgfpca.local_glmm import fit_all_bins
from fgfpca.pipeline import PipelineConfig, fast_gfpca, validate_config
from fgfpca.refit import refit_global
from fgfpca.simulate import SimScenario, generate


@pytest.fixture(scope="module")
def binom_data():
    data, truth = generate(SimScenario(N=40, J=80, eigenvalues=(1.0, 0.5), seed=101))
    return data, truth


class TestWiring:
    def test_equals_manual_composition(self, binom_data):
        # the pipeline is exactly step1..4 composed; same numbers out
        data, _ = binom_data
        cfg = PipelineConfig(width=6, overlap=True, cyclic=True, npc=2)
        fit = fast_gfpca(data, cfg)

        bins = build_bins(data.J, 6, overlap=True, cyclic=True)
        latent = fit_all_bins(data, bins, cfg.local)
        basis = fpca_latent(latent, pve=cfg.pve, npc=2, cyclic=True, opts=cfg.smooth)
        basis = project_to_full_grid(basis, data.grid_normalized, True)
        manual = refit_global(data, basis, cfg.refit)

        np.testing.assert_array_equal(fit.beta0_full, manual.beta0_full)
        np.testing.assert_array_equal(fit.scores, manual.scores)
        np.testing.assert_array_equal(fit.score_vars, manual.score_vars)
        assert fit.lambda_beta == manual.lambda_beta

    def test_deterministic(self, binom_data):
        data, _ = binom_data
        cfg = PipelineConfig(width=6, cyclic=True, npc=2)
        f1 = fast_gfpca(data, cfg)
        f2 = fast_gfpca(data, cfg)
        np.testing.assert_array_equal(f1.eta_full, f2.eta_full)
        np.testing.assert_array_equal(f1.basis.eigenfunctions_full, f2.basis.eigenfunctions_full)

    def test_timings_cover_total(self, binom_data):
        data, _ = binom_data
        fit = fast_gfpca(data, PipelineConfig(width=6, cyclic=True, npc=2))
        t = fit.timings
        parts = sum(t[f"step{k}_minutes"] for k in range(1, 5))
        assert t["total_minutes"] > 0
        assert parts == pytest.approx(t["total_minutes"], rel=0.05)

    def test_diagnostics_fields(self, binom_data):
        data, _ = binom_data
        fit = fast_gfpca(data, PipelineConfig(width=6, cyclic=True, npc=2))
        d = fit.diagnostics
        assert d["n_bins"] == 80
        assert d["kernel_backend"] in ("python", "cython")
        assert "n_failed_bins" in d
        assert "n_degenerate_bins" in d
        assert isinstance(d["warnings"], list)

    def test_recovers_truth_reasonably(self, binom_data):
        # desk-scale accuracy sanity on the full four-step path
        from fgfpca.metrics import mise_eta

        data, truth = binom_data
        fit = fast_gfpca(data, PipelineConfig(width=6, cyclic=True, npc=2))
        assert mise_eta(fit.eta_full, truth.eta, data.grid) < 1.0

    def test_modified_variant_runs(self):
        data, _ = generate(SimScenario(N=40, J=60, eigenvalues=(1.0, 0.5), seed=103))
        cfg = PipelineConfig(
            width=6, cyclic=True, npc=2, modified=True, n_subsamples=2, subsample_size=20
        )
        fit = fast_gfpca(data, cfg)
        assert fit.scores.shape == (40, 2)
        assert fit.diagnostics["n_subsamples"] == 2

    def test_gaussian_noiseless_low_rank(self, rng, dataset_factory):
        # clean rank-2 gaussian curves: near-exact reconstruction
        from fgfpca.metrics import mise_eta
        from fgfpca.simulate import eigen_functions

        s = np.linspace(0, 1, 100)
        phi = eigen_functions("periodic", s)[:, :2]
        xi = rng.normal(size=(60, 2)) * np.sqrt([1.0, 0.25])
        eta = 0.3 + xi @ phi.T
        z = eta + rng.normal(scale=0.05, size=eta.shape)
        ds = dataset_factory(z, family="gaussian", cyclic=True, grid=s)
        fit = fast_gfpca(ds, PipelineConfig(width=4, cyclic=True, npc=2))
        assert mise_eta(fit.eta_full, eta, s) < 1e-2


class TestValidation:
    def test_odd_width_exact_message(self, binom_data):
        data, _ = binom_data
        with pytest.raises(ConfigError) as exc:
            fast_gfpca(data, PipelineConfig(width=7))
        assert str(exc.value) == "width must be even"

    def test_width_at_least_j(self, binom_data):
        data, _ = binom_data
        with pytest.raises(ConfigError, match="width: need 2 <= width < J=80"):
            validate_config(PipelineConfig(width=80), data)

    def test_pve_named(self, binom_data):
        data, _ = binom_data
        with pytest.raises(ConfigError, match="pve"):
            validate_config(PipelineConfig(pve=0.0), data)

    def test_npc_named(self, binom_data):
        data, _ = binom_data
        with pytest.raises(ConfigError, match="npc"):
            validate_config(PipelineConfig(npc=0), data)

    def test_subsample_budget_named(self, binom_data):
        data, _ = binom_data
        cfg = PipelineConfig(modified=True, n_subsamples=4, subsample_size=30)
        with pytest.raises(ConfigError, match="subsample_size"):
            validate_config(cfg, data)


class TestStageFailures:
    def test_failed_bins_above_threshold(self, binom_data, monkeypatch):
        data, _ = binom_data
        import fgfpca.pipeline as pl

        real = pl.fit_all_bins

        def sabotage(d, bins, opts):
            latent = real(d, bins, opts)
            conv = latent.converged.copy()
            conv[: int(0.2 * conv.size)] = False
            from dataclasses import replace

            return replace(latent, converged=conv)

        monkeypatch.setattr(pl, "fit_all_bins", sabotage)
        with pytest.raises(StageError, match="increase the bin width") as exc:
            fast_gfpca(data, PipelineConfig(width=6, cyclic=True, npc=2))
        assert "step2 (local mixed models)" in str(exc.value)

    def test_step3_failure_wrapped(self, monkeypatch, dataset_factory):
        # constant data: every bin degenerates to the same eta, so the
        # latent covariance is degenerate and step 3 reports it
        z = np.zeros((12, 40))
        ds = dataset_factory(z, family="binomial")
        with pytest.raises(StageError, match=r"step3 \(covariance smoothing\)"):
            fast_gfpca(ds, PipelineConfig(width=4, npc=1))

    def test_nknots_clamped_with_warning(self):
        # nonoverlap J=60 w=10 -> 6 bins; default 20 knots cannot fit
        data, _ = generate(
            SimScenario(N=50, J=60, eigenvalues=(1.0,), eigen_set="nonperiodic", seed=105)
        )
        cfg = PipelineConfig(width=10, overlap=False, npc=1)
        fit = fast_gfpca(data, cfg)
        warns = fit.diagnostics["warnings"]
        assert any("nknots reduced 20 -> 2" in w for w in warns)

    def test_failed_bins_within_threshold_warn_only(self, binom_data, monkeypatch):
        data, _ = binom_data
        import fgfpca.pipeline as pl

        real = pl.fit_all_bins

        def mild(d, bins, opts):
            latent = real(d, bins, opts)
            conv = latent.converged.copy()
            conv[:2] = False
            from dataclasses import replace

            return replace(latent, converged=conv)

        monkeypatch.setattr(pl, "fit_all_bins", mild)
        fit = fast_gfpca(data, PipelineConfig(width=6, cyclic=True, npc=2))
        assert fit.diagnostics["n_failed_bins"] == 2
        assert any("non-converged" in w for w in fit.diagnostics["warnings"])
