"""HAR-family baselines: feature construction, fitting, one-step forecasts."""

import numpy as np
import pytest

from volnet.har import (
    MIN_USABLE_ROWS,
    HARCoefficients,
    fit_ghar,
    fit_gnnhar,
    fit_har,
    fit_har_ks,
    fit_vhar,
    har_features,
    one_step,
    symmetric_normalized,
)


def rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def simulate_process(step, t_total, n, seed, noise=0.0, overlap=True):
    """Roll a self-consistent HAR-style recursion forward from random starts.

    step(d, w, m) maps the (N,) component vectors at day t to the new row;
    zero noise makes the fitted regression residual-free, so least squares
    must recover the generating coefficients exactly.
    """
    r = rng(seed)
    values = np.zeros((t_total, n))
    values[:22] = r.uniform(0.5, 1.5, size=(22, n))
    eps = r.normal(size=(t_total, n)) * noise
    for t in range(22, t_total):
        feats = np.array([har_features(values[:, k], t, overlap) for k in range(n)])
        values[t] = step(feats[:, 0], feats[:, 1], feats[:, 2]) + eps[t]
    return values


IDX3 = ("AA", "BB", "CC")


class TestFeatures:
    def test_frozen_overlap_components(self):
        series = np.arange(1.0, 24.0)
        d, w, m = har_features(series, 22)
        assert d == 22.0
        assert w == pytest.approx(20.0)
        assert m == pytest.approx(11.5)

    def test_frozen_nonoverlap_components(self):
        series = np.arange(1.0, 24.0)
        d, w, m = har_features(series, 22, overlap=False)
        assert d == 22.0
        assert w == pytest.approx(19.5)   # mean of days t-5..t-2
        assert m == pytest.approx(9.0)    # mean of days t-22..t-6

    def test_position_past_end_allowed_for_forecasting(self):
        series = np.arange(1.0, 23.0)
        d, _, _ = har_features(series, 22)
        assert d == 22.0

    def test_too_early_position(self):
        with pytest.raises(ValueError, match="at least 22 prior days"):
            har_features(np.ones(30), 21)

    def test_position_beyond_series(self):
        with pytest.raises(ValueError):
            har_features(np.ones(30), 31)

    @pytest.mark.parametrize("overlap", [True, False])
    def test_matrix_path_matches_scalar_path(self, overlap):
        # the cumulative-sum batch construction must agree with the direct
        # per-position definition everywhere
        from volnet.har import _component_matrices

        values = rng(0).uniform(0.1, 2.0, size=(40, 3))
        d, w, m, y = _component_matrices(values, overlap)
        for r in range(d.shape[0]):
            t = 22 + r
            for k in range(3):
                dd, ww, mm = har_features(values[:, k], t, overlap)
                assert d[r, k] == pytest.approx(dd, abs=1e-12)
                assert w[r, k] == pytest.approx(ww, abs=1e-12)
                assert m[r, k] == pytest.approx(mm, abs=1e-12)
            np.testing.assert_array_equal(y[r], values[t])


class TestUnivariateHAR:
    TRUE = dict(alpha=0.05, bd=0.45, bw=0.30, bm=0.20)

    def make(self, noise, t_total=180, seed=1):
        c = self.TRUE
        step = lambda d, w, m: c["alpha"] + c["bd"] * d + c["bw"] * w + c["bm"] * m
        return simulate_process(step, t_total, 3, seed, noise=noise)

    def test_zero_noise_exact_recovery(self):
        fit = fit_har(self.make(0.0), IDX3)
        c = self.TRUE
        np.testing.assert_allclose(fit.alpha, np.full(3, c["alpha"]), atol=1e-8)
        np.testing.assert_allclose(fit.beta_d, np.full(3, c["bd"]), atol=1e-8)
        np.testing.assert_allclose(fit.beta_w, np.full(3, c["bw"]), atol=1e-8)
        np.testing.assert_allclose(fit.beta_m, np.full(3, c["bm"]), atol=1e-8)

    def test_noisy_recovery_within_standard_errors(self):
        fit = fit_har(self.make(0.02, t_total=600), IDX3)
        c = self.TRUE
        for name, true in (("alpha", c["alpha"]), ("beta_d", c["bd"]),
                           ("beta_w", c["bw"]), ("beta_m", c["bm"])):
            est = getattr(fit, name)
            se = fit.stderr[name]
            assert (np.abs(est - true) <= 4.0 * se).all(), name

    def test_insufficient_rows(self):
        with pytest.raises(ValueError, match="insufficient data: 49 usable rows"):
            fit_har(np.ones((MIN_USABLE_ROWS + 21, 2)), ("A", "B"))

    def test_collinear_features(self):
        values = np.ones((120, 2))   # constant series: d == w == m == intercept
        values[:, 1] = rng(2).uniform(0.5, 1.5, size=120)
        with pytest.raises(ValueError, match="collinear features"):
            fit_har(values, ("A", "B"))

    def test_overlap_and_nonoverlap_differ(self):
        values = self.make(0.02, t_total=200, seed=3)
        a = fit_har(values, IDX3, mode="overlap")
        b = fit_har(values, IDX3, mode="nonoverlap")
        assert not np.allclose(a.beta_w, b.beta_w)
        assert a.mode == "overlap" and b.mode == "nonoverlap"


class TestVHAR:
    def setup_method(self):
        r = rng(4)
        self.ad_ = 0.40 * np.eye(3) + r.uniform(0.01, 0.05, (3, 3))
        self.aw = 0.22 * np.eye(3) + r.uniform(0.0, 0.03, (3, 3))
        self.am = 0.12 * np.eye(3)
        self.alpha = np.array([0.02, 0.05, 0.03])

    def make(self, noise, t_total=220, seed=5):
        step = lambda d, w, m: self.alpha + self.ad_ @ d + self.aw @ w + self.am @ m
        return simulate_process(step, t_total, 3, seed, noise=noise)

    def test_zero_noise_exact_recovery(self):
        fit = fit_vhar(self.make(0.0), IDX3)
        np.testing.assert_allclose(fit.alpha, self.alpha, atol=1e-8)
        np.testing.assert_allclose(fit.beta_d, self.ad_, atol=1e-8)
        np.testing.assert_allclose(fit.beta_w, self.aw, atol=1e-8)
        np.testing.assert_allclose(fit.beta_m, self.am, atol=1e-8)

    def test_noisy_recovery_within_standard_errors(self):
        fit = fit_vhar(self.make(0.02, t_total=900), IDX3)
        assert (np.abs(fit.beta_d - self.ad_) <= 4.0 * fit.stderr["beta_d"]).all()

    def test_single_index_reduces_to_har(self):
        values = TestUnivariateHAR().make(0.02)[:, :1]
        har = fit_har(values, ("A",))
        vhar = fit_vhar(values, ("A",))
        assert vhar.beta_d[0, 0] == pytest.approx(har.beta_d[0], abs=1e-12)
        assert vhar.beta_w[0, 0] == pytest.approx(har.beta_w[0], abs=1e-12)
        assert vhar.alpha[0] == pytest.approx(har.alpha[0], abs=1e-12)


class TestHARKS:
    def setup_method(self):
        self.alpha = np.array([0.02, 0.04, 0.01])
        self.bd = np.array([0.40, 0.35, 0.45])
        self.bw = np.array([0.25, 0.20, 0.15])
        self.bm = np.array([0.10, 0.15, 0.12])
        self.cross = np.array(
            [[0.0, 0.06, 0.03], [0.04, 0.0, 0.05], [0.02, 0.07, 0.0]]
        )

    def make(self, noise, t_total=240, seed=6):
        step = (
            lambda d, w, m: self.alpha + self.bd * d + self.bw * w
            + self.bm * m + self.cross @ d
        )
        return simulate_process(step, t_total, 3, seed, noise=noise)

    def test_zero_noise_exact_recovery(self):
        fit = fit_har_ks(self.make(0.0), IDX3)
        np.testing.assert_allclose(fit.alpha, self.alpha, atol=1e-8)
        np.testing.assert_allclose(fit.beta_d, self.bd, atol=1e-8)
        np.testing.assert_allclose(fit.beta_w, self.bw, atol=1e-8)
        np.testing.assert_allclose(fit.beta_m, self.bm, atol=1e-8)
        np.testing.assert_allclose(fit.cross, self.cross, atol=1e-8)

    def test_cross_diagonal_is_zero(self):
        fit = fit_har_ks(self.make(0.01), IDX3)
        np.testing.assert_array_equal(np.diag(fit.cross), np.zeros(3))

    def test_single_index_reduces_to_har(self):
        values = TestUnivariateHAR().make(0.02)[:, :1]
        ks = fit_har_ks(values, ("A",))
        har = fit_har(values, ("A",))
        assert ks.beta_d[0] == pytest.approx(har.beta_d[0], abs=1e-12)
        np.testing.assert_array_equal(ks.cross, np.zeros((1, 1)))


class TestGraphOperator:
    def test_two_node_exchange(self):
        s = symmetric_normalized(np.array([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(s, [[0.0, 1.0], [1.0, 0.0]])

    def test_hand_case_with_asymmetry(self):
        s = symmetric_normalized(np.array([[1.0, 3.0], [1.0, 1.0]]))
        np.testing.assert_allclose(s, [[1 / 3, 2 / 3], [2 / 3, 1 / 3]])

    def test_output_is_symmetric(self):
        a = rng(7).uniform(0.0, 1.0, size=(5, 5)) + 0.01
        s = symmetric_normalized(a)
        np.testing.assert_allclose(s, s.T, atol=1e-15)

    def test_zero_degree_node(self):
        with pytest.raises(ValueError, match="zero-degree"):
            symmetric_normalized(np.array([[0.0, 0.0], [0.0, 1.0]]))

    def test_accepts_spillover_graph(self):
        from volnet.spillover import SpilloverGraph

        theta = np.array([[0.7, 0.3], [0.4, 0.6]])
        graph = SpilloverGraph(theta=theta, horizon=10)
        np.testing.assert_allclose(
            symmetric_normalized(graph), symmetric_normalized(theta)
        )


class TestGHAR:
    ADJ = np.array([[0.0, 0.6, 0.4], [0.5, 0.0, 0.5], [0.3, 0.7, 0.0]])

    def setup_method(self):
        self.s = symmetric_normalized(self.ADJ)
        self.alpha = np.array([0.02, 0.05, 0.03])
        self.slopes = dict(bd=0.35, bw=0.25, bm=0.15, gd=0.08, gw=0.05, gm=0.03)

    def make(self, noise, t_total=260, seed=8):
        c = self.slopes
        step = (
            lambda d, w, m: self.alpha
            + c["bd"] * d + c["bw"] * w + c["bm"] * m
            + c["gd"] * (self.s @ d) + c["gw"] * (self.s @ w) + c["gm"] * (self.s @ m)
        )
        return simulate_process(step, t_total, 3, seed, noise=noise, overlap=False)

    def test_zero_noise_exact_recovery(self):
        fit = fit_ghar(self.make(0.0), IDX3, self.ADJ)
        c = self.slopes
        np.testing.assert_allclose(fit.alpha, self.alpha, atol=1e-8)
        assert fit.beta_d == pytest.approx(c["bd"], abs=1e-8)
        assert fit.beta_w == pytest.approx(c["bw"], abs=1e-8)
        assert fit.beta_m == pytest.approx(c["bm"], abs=1e-8)
        assert fit.gamma_d == pytest.approx(c["gd"], abs=1e-8)
        assert fit.gamma_w == pytest.approx(c["gw"], abs=1e-8)
        assert fit.gamma_m == pytest.approx(c["gm"], abs=1e-8)

    def test_defaults_to_nonoverlap(self):
        fit = fit_ghar(self.make(0.01), IDX3, self.ADJ)
        assert fit.mode == "nonoverlap"

    def test_stderr_keys(self):
        fit = fit_ghar(self.make(0.01), IDX3, self.ADJ)
        assert {"alpha", "beta_d", "gamma_m"} <= set(fit.stderr)


class TestGNNHAR:
    ADJ = TestGHAR.ADJ

    def make(self, seed=9):
        return TestUnivariateHAR().make(0.03, t_total=160, seed=seed)

    def test_loss_decreases(self):
        _, losses = fit_gnnhar(self.make(), IDX3, self.ADJ, epochs=60)
        assert losses[-1] < losses[0]
        assert all(np.isfinite(losses))

    def test_deterministic_given_seed(self):
        _, a = fit_gnnhar(self.make(), IDX3, self.ADJ, epochs=20, seed=3)
        _, b = fit_gnnhar(self.make(), IDX3, self.ADJ, epochs=20, seed=3)
        assert a == b

    def test_one_step_matches_manual_forward(self):
        values = self.make()
        coefs, _ = fit_gnnhar(values, IDX3, self.ADJ, epochs=30)
        pred = one_step(coefs, values)
        feats = np.array([har_features(values[:, k], values.shape[0], False) for k in range(3)])
        d, w, m = feats[:, 0], feats[:, 1], feats[:, 2]
        h = np.stack([d, w, m], axis=-1)
        for theta in coefs.thetas:
            h = np.maximum(coefs.s_matrix @ h @ theta, 0.0)
        manual = (
            coefs.alpha + coefs.beta_d * d + coefs.beta_w * w + coefs.beta_m * m
            + h @ coefs.gamma
        )
        np.testing.assert_allclose(pred, manual, atol=1e-12)

    def test_divergence_raises(self):
        with np.errstate(over="ignore"), pytest.raises(ValueError, match="diverged"):
            fit_gnnhar(self.make(), IDX3, self.ADJ, epochs=400, step_size=50.0)

    def test_layer_count_validated(self):
        with pytest.raises(ValueError, match="layers"):
            fit_gnnhar(self.make(), IDX3, self.ADJ, layers=0)

    def test_two_layer_fit_runs(self):
        coefs, losses = fit_gnnhar(self.make(), IDX3, self.ADJ, layers=2, epochs=25)
        assert len(coefs.thetas) == 2
        assert losses[-1] < losses[0]


class TestOneStep:
    def test_har_forecast_by_hand(self):
        coefs = HARCoefficients(
            variant="har", mode="overlap", indices=("A",),
            alpha=np.array([0.1]), beta_d=np.array([0.5]),
            beta_w=np.array([0.3]), beta_m=np.array([0.2]),
        )
        block = np.arange(1.0, 23.0)[:, None]
        pred = one_step(coefs, block)
        # d=22, w=20, m=11.5
        assert pred[0] == pytest.approx(0.1 + 0.5 * 22 + 0.3 * 20 + 0.2 * 11.5)

    def test_vhar_uses_cross_terms(self):
        coefs = HARCoefficients(
            variant="vhar", mode="overlap", indices=("A", "B"),
            alpha=np.zeros(2), beta_d=np.array([[0.0, 1.0], [0.0, 0.0]]),
            beta_w=np.zeros((2, 2)), beta_m=np.zeros((2, 2)),
        )
        block = np.column_stack([np.arange(1.0, 23.0), np.full(22, 3.0)])
        pred = one_step(coefs, block)
        np.testing.assert_allclose(pred, [3.0, 0.0])

    def test_har_ks_adds_cross_daily(self):
        coefs = HARCoefficients(
            variant="har-ks", mode="overlap", indices=("A", "B"),
            alpha=np.zeros(2), beta_d=np.zeros(2), beta_w=np.zeros(2),
            beta_m=np.zeros(2), cross=np.array([[0.0, 2.0], [0.5, 0.0]]),
        )
        block = np.column_stack([np.full(22, 1.0), np.full(22, 3.0)])
        np.testing.assert_allclose(one_step(coefs, block), [6.0, 0.5])

    def test_ghar_matches_direct_formula(self):
        ghar = TestGHAR()
        ghar.setup_method()
        values = ghar.make(0.01)
        fit = fit_ghar(values, IDX3, ghar.ADJ)
        pred = one_step(fit, values)
        t = values.shape[0]
        feats = np.array([har_features(values[:, k], t, False) for k in range(3)])
        d, w, m = feats[:, 0], feats[:, 1], feats[:, 2]
        manual = (
            fit.alpha + fit.beta_d * d + fit.beta_w * w + fit.beta_m * m
            + fit.gamma_d * (fit.s_matrix @ d)
            + fit.gamma_w * (fit.s_matrix @ w)
            + fit.gamma_m * (fit.s_matrix @ m)
        )
        np.testing.assert_allclose(pred, manual, atol=1e-12)

    def test_zero_noise_one_step_predicts_next_value(self):
        uni = TestUnivariateHAR()
        values = uni.make(0.0, t_total=181)
        fit = fit_har(values[:180], IDX3)
        np.testing.assert_allclose(one_step(fit, values[:180]), values[180], atol=1e-7)

    def test_width_mismatch(self):
        fit = fit_har(TestUnivariateHAR().make(0.01), IDX3)
        with pytest.raises(ValueError, match="width"):
            one_step(fit, np.ones((30, 2)))


class TestCoefficientValidation:
    def test_unknown_variant(self):
        with pytest.raises(ValueError, match="unknown variant"):
            HARCoefficients(variant="sar", mode="overlap", indices=("A",), alpha=np.zeros(1))

    def test_unknown_mode(self):
        with pytest.raises(ValueError, match="unknown mode"):
            HARCoefficients(variant="har", mode="rolling", indices=("A",), alpha=np.zeros(1))

    def test_alpha_shape(self):
        with pytest.raises(ValueError, match="alpha"):
            HARCoefficients(
                variant="har", mode="overlap", indices=("A", "B"), alpha=np.zeros(3),
                beta_d=np.zeros(2), beta_w=np.zeros(2), beta_m=np.zeros(2),
            )

    def test_vhar_needs_matrices(self):
        with pytest.raises(ValueError, match="vhar betas"):
            HARCoefficients(
                variant="vhar", mode="overlap", indices=("A", "B"), alpha=np.zeros(2),
                beta_d=np.zeros(2), beta_w=np.zeros(2), beta_m=np.zeros(2),
            )
