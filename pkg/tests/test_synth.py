"""Synthetic panel generation, holiday masking, planted-edge recovery."""

import datetime

import numpy as np
import pytest

from volnet.synth import SynthSpec, apply_holidays, gen_var_panel, planted_graph_recovery


def basic_spec(**kw):
    base = dict(
        n_indices=2,
        n_rows=100,
        coefficients=np.array([[0.4, 0.2], [0.1, 0.3]]),
        innovation_cov=np.eye(2),
        seed=0,
    )
    base.update(kw)
    return SynthSpec(**base)


def two_block_spec(seed=0, t=3000, coupling=0.3):
    phi = np.zeros((4, 4))
    np.fill_diagonal(phi, 0.4)
    phi[0, 1] = phi[1, 0] = coupling
    phi[2, 3] = phi[3, 2] = coupling
    return SynthSpec(
        n_indices=4, n_rows=t, coefficients=phi, innovation_cov=np.eye(4), seed=seed
    )


class TestSpecValidation:
    def test_coefficients_normalized_to_lag_stack(self):
        spec = basic_spec()
        assert spec.coefficients.shape == (1, 2, 2)
        assert spec.lag_order == 1

    def test_multi_lag_accepted(self):
        coeffs = np.stack([0.3 * np.eye(2), 0.2 * np.eye(2)])
        assert basic_spec(coefficients=coeffs).lag_order == 2

    def test_unstable_coefficients(self):
        with pytest.raises(ValueError, match="unstable VAR coefficients: spectral radius"):
            basic_spec(coefficients=1.05 * np.eye(2))

    def test_covariance_must_be_positive_definite(self):
        with pytest.raises(ValueError, match="positive definite"):
            basic_spec(innovation_cov=np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_covariance_must_be_symmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            basic_spec(innovation_cov=np.array([[1.0, 0.5], [0.2, 1.0]]))

    def test_transform_whitelist(self):
        with pytest.raises(ValueError, match="transform must be one of"):
            basic_spec(transform="log")

    def test_holiday_probability_bounds(self):
        with pytest.raises(ValueError, match="\\[0, 0.3\\]"):
            basic_spec(holiday_prob=(0.5, 0.1))
        with pytest.raises(ValueError, match="one probability per index"):
            basic_spec(holiday_prob=(0.1,))

    def test_minimum_panel_size(self):
        with pytest.raises(ValueError, match="n_indices >= 2"):
            SynthSpec(
                n_indices=1, n_rows=10, coefficients=np.array([[0.5]]),
                innovation_cov=np.eye(1),
            )

    def test_scale_positive(self):
        with pytest.raises(ValueError, match="scale"):
            basic_spec(scale=0.0)

    def test_dict_round_trip(self):
        spec = basic_spec(transform="exp", holiday_prob=(0.1, 0.2), seed=7)
        clone = SynthSpec.from_dict(spec.to_dict())
        assert clone.n_rows == spec.n_rows
        assert clone.transform == "exp"
        assert clone.holiday_prob == (0.1, 0.2)
        np.testing.assert_array_equal(clone.coefficients, spec.coefficients)

    def test_from_dict_aliases(self):
        spec = SynthSpec.from_dict(
            {"N": 2, "T": 50, "phi": [[0.4, 0.0], [0.0, 0.4]], "sigma": [[1, 0], [0, 1]]}
        )
        assert spec.n_indices == 2
        assert spec.n_rows == 50

    def test_alias_conflicts(self):
        with pytest.raises(ValueError, match="both"):
            SynthSpec.from_dict(
                {"N": 2, "n_indices": 2, "T": 50,
                 "coefficients": [[0.4, 0.0], [0.0, 0.4]],
                 "innovation_cov": [[1, 0], [0, 1]]}
            )

    def test_unknown_keys(self):
        with pytest.raises(ValueError, match="unknown spec keys: kurtosis"):
            SynthSpec.from_dict({"kurtosis": 3})


class TestGeneration:
    def test_deterministic_given_seed(self):
        a = gen_var_panel(basic_spec())
        b = gen_var_panel(basic_spec())
        np.testing.assert_array_equal(a.values, b.values)
        assert a.dates == b.dates

    def test_seed_changes_values(self):
        a = gen_var_panel(basic_spec(seed=0))
        b = gen_var_panel(basic_spec(seed=1))
        assert not np.allclose(a.values, b.values)

    def test_calendar_is_business_days(self):
        panel = gen_var_panel(basic_spec(n_rows=10))
        assert panel.dates[0] == "2000-01-03"
        for d in panel.dates:
            assert datetime.date.fromisoformat(d).weekday() < 5

    def test_index_names(self):
        spec = SynthSpec(
            n_indices=12, n_rows=5,
            coefficients=0.3 * np.eye(12), innovation_cov=np.eye(12),
        )
        panel = gen_var_panel(spec)
        assert panel.indices[0] == "IDX00"
        assert panel.indices[-1] == "IDX11"

    def test_all_cells_active_and_floored(self):
        panel = gen_var_panel(basic_spec(floor=1e-4))
        assert panel.observed.all()
        assert (panel.values >= 1e-4).all()

    def test_exp_transform_positive(self):
        panel = gen_var_panel(basic_spec(transform="exp"))
        assert (panel.values > 0).all()

    def test_scale_is_linear_for_abs_transform(self):
        a = gen_var_panel(basic_spec(scale=0.01, floor=0.0))
        b = gen_var_panel(basic_spec(scale=0.02, floor=0.0))
        np.testing.assert_allclose(b.values, 2.0 * a.values, rtol=1e-12)

    def test_no_dynamics_means_no_autocorrelation(self):
        spec = basic_spec(coefficients=np.zeros((2, 2)), n_rows=5000)
        panel = gen_var_panel(spec)
        for k in range(2):
            x = panel.values[:, k]
            lag1 = np.corrcoef(x[1:], x[:-1])[0, 1]
            assert abs(lag1) < 0.05

    def test_burn_in_removes_start_up_transient(self):
        # near-unit-root level dynamics: without burn-in the first rows would
        # sit far below the stationary spread
        spec = basic_spec(coefficients=0.95 * np.eye(2), n_rows=4000)
        values = gen_var_panel(spec).values
        head = values[:200].mean()
        tail = values[-200:].mean()
        assert head > 0.25 * tail


class TestHolidays:
    def test_zero_probabilities_change_nothing(self):
        panel = gen_var_panel(basic_spec())
        out = apply_holidays(panel, (0.0, 0.0), seed=1)
        np.testing.assert_array_equal(out.values, panel.values)
        assert out.dates == panel.dates
        assert out.observed.all()

    def test_rate_matches_probability(self):
        panel = gen_var_panel(basic_spec(n_rows=5000))
        out = apply_holidays(panel, (0.1, 0.1), seed=2)
        share = 1.0 - out.observed.mean(axis=0)
        assert (share > 0.08).all() and (share < 0.12).all()

    def test_masked_cells_are_zero(self):
        panel = gen_var_panel(basic_spec(n_rows=500))
        out = apply_holidays(panel, (0.2, 0.2), seed=3)
        assert (out.values[~out.observed] == 0.0).all()
        active = out.observed & (out.values > 0)
        assert active.sum() == out.observed.sum()

    def test_all_inactive_rows_dropped(self):
        panel = gen_var_panel(basic_spec(n_rows=2000))
        out = apply_holidays(panel, (0.3, 0.3), seed=4)
        assert out.observed.any(axis=1).all()
        assert len(out.dates) < 2000
        assert set(out.dates) <= set(panel.dates)

    def test_deterministic_given_seed(self):
        panel = gen_var_panel(basic_spec(n_rows=300))
        a = apply_holidays(panel, (0.1, 0.2), seed=5)
        b = apply_holidays(panel, (0.1, 0.2), seed=5)
        np.testing.assert_array_equal(a.observed, b.observed)
        c = apply_holidays(panel, (0.1, 0.2), seed=6)
        assert not np.array_equal(a.observed, c.observed)

    def test_validation(self):
        panel = gen_var_panel(basic_spec())
        with pytest.raises(ValueError, match="one value per index"):
            apply_holidays(panel, (0.1,), seed=0)
        with pytest.raises(ValueError, match="\\[0, 0.3\\]"):
            apply_holidays(panel, (0.4, 0.1), seed=0)


class TestPlantedRecovery:
    def test_single_block_is_perfect(self):
        score = planted_graph_recovery(basic_spec(n_rows=500), [[0, 1]], p=1)
        assert score == 1.0

    def test_two_blocks_recovered_from_long_sample(self):
        score = planted_graph_recovery(two_block_spec(seed=1), [[0, 1], [2, 3]], p=3)
        assert score >= 0.75

    def test_blocks_must_partition(self):
        with pytest.raises(ValueError, match="partition"):
            planted_graph_recovery(two_block_spec(), [[0, 1], [2]])
        with pytest.raises(ValueError, match="partition"):
            planted_graph_recovery(two_block_spec(), [[0, 1], [2, 3, 3]])

    def test_singleton_blocks_have_no_edges(self):
        spec = basic_spec(coefficients=np.diag([0.4, 0.3]))
        with pytest.raises(ValueError, match="no planted off-diagonal edges"):
            planted_graph_recovery(spec, [[0], [1]])

    def test_cross_block_coefficients_rejected(self):
        with pytest.raises(ValueError, match="not block-diagonal"):
            planted_graph_recovery(two_block_spec(), [[0], [1, 2, 3]])
