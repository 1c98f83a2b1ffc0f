import numpy as np
import pytest

from mmwave_backhaul import (
    ArrayGeometry,
    CapacityResult,
    CapacityRow,
    ConfigValidationError,
    EstimationConfig,
    PathDistribution,
    PathSet,
    PowerAllocation,
    ScenarioConfig,
    allocate_power,
    assemble_channel,
    derive_rng,
    full_digital_baseline,
    observation_noise_var,
    run_scenario,
    sample_paths,
    user_capacity,
)


class TestUserCapacity:
    def test_scalar_link(self):
        g = np.array([[0.7 - 0.4j]])
        powers = PowerAllocation(np.array([5.0]), "equal")
        noise = np.array([[2.0]])
        expected = np.log2(1 + 5.0 * abs(g[0, 0]) ** 2 / 2.0)
        assert user_capacity(g, 0, powers, noise, interference=False) == pytest.approx(expected)

    def test_diagonal_matches_parallel_channels(self):
        sigmas = np.array([3.0, 2.0, 1.5, 0.5])
        g = np.diag(sigmas).astype(complex)
        p = np.array([0.4, 0.3, 0.2, 0.1])
        powers = PowerAllocation(p, "waterfilling")
        noise = 0.5 * np.eye(2, dtype=complex)
        total = sum(
            user_capacity(g, k, powers, noise, interference=True) for k in range(2)
        )
        assert total == pytest.approx(np.sum(np.log2(1 + p * sigmas**2 / 0.5)))

    def test_zero_power_zero_capacity(self):
        g = np.eye(4, dtype=complex)
        powers = PowerAllocation(np.zeros(4), "equal")
        assert user_capacity(g, 1, powers, np.eye(2, dtype=complex)) == 0.0

    def test_interference_reduces_capacity(self):
        rng = np.random.default_rng(0)
        g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        powers = PowerAllocation(np.full(4, 2.0), "equal")
        noise = np.eye(2, dtype=complex)
        with_interference = user_capacity(g, 0, powers, noise, interference=True)
        without = user_capacity(g, 0, powers, noise, interference=False)
        assert with_interference <= without + 1e-12

    def test_rejects_indefinite_noise(self):
        g = np.eye(2, dtype=complex)
        powers = PowerAllocation(np.ones(2), "equal")
        with pytest.raises(ValueError):
            user_capacity(g, 0, powers, -np.eye(1, dtype=complex))


class TestScenarioValidation:
    def base(self, **overrides):
        kwargs = dict(n_ma=64, n_sm=8, k_users=2, n_bb_ma=4, n_bb_sm=2)
        kwargs.update(overrides)
        return kwargs

    def test_stream_budget_invariant_named(self):
        with pytest.raises(ConfigValidationError, match="k_users\\*n_bb_sm <= n_bb_ma"):
            ScenarioConfig(**self.base(k_users=3))

    def test_chain_bounds(self):
        with pytest.raises(ConfigValidationError, match="n_bb_sm <= n_sm"):
            ScenarioConfig(**self.base(n_bb_sm=9, n_bb_ma=18))
        with pytest.raises(ConfigValidationError, match="n_bb_ma <= n_ma"):
            ScenarioConfig(**self.base(n_ma=3))

    def test_full_digital_feasibility(self):
        with pytest.raises(ConfigValidationError, match="k_users\\*n_sm <= n_ma"):
            ScenarioConfig(**self.base(n_ma=15, schemes=("full_digital",)))

    def test_estimated_scheme_needs_estimation(self):
        with pytest.raises(ConfigValidationError, match="estimation"):
            ScenarioConfig(**self.base(schemes=("hybrid_estimated",)))

    def test_unknown_scheme_and_allocation(self):
        with pytest.raises(ConfigValidationError):
            ScenarioConfig(**self.base(schemes=("mrc",)))
        with pytest.raises(ConfigValidationError):
            ScenarioConfig(**self.base(allocation="proportional"))

    def test_noise_var_for_estimation_snr(self):
        cfg = ScenarioConfig(**self.base(estimation=EstimationConfig(snr_db=20.0)))
        assert observation_noise_var(cfg) == pytest.approx(0.01)


class TestCapacityResult:
    def test_rows_sorted_and_validated(self):
        rows = [
            CapacityRow("full_digital", "equal", 5.0, 0.0, 1, 2.0),
            CapacityRow("full_digital", "equal", 0.0, 0.0, 0, 1.0),
        ]
        result = CapacityResult(rows=rows)
        assert result.rows[0].snr_db == 0.0
        with pytest.raises(ValueError):
            CapacityResult(rows=[CapacityRow("x", "equal", 0.0, 0.0, 0, -1.0)])


class TestRunScenario:
    def small_config(self, **overrides):
        kwargs = dict(
            n_ma=64, n_sm=8, k_users=2, n_bb_ma=4, n_bb_sm=2,
            l_min=1, l_max=2, snr_grid_db=(0.0, 10.0, 20.0), trials=4,
            schemes=("hybrid_ideal", "full_digital"), master_seed=11,
        )
        kwargs.update(overrides)
        return ScenarioConfig(**kwargs)

    def test_row_inventory(self):
        cfg = self.small_config()
        result = run_scenario(cfg)
        assert len(result.rows) == 2 * 3 * 4
        keys = {(r.scheme, r.snr_db, r.trial) for r in result.rows}
        assert len(keys) == len(result.rows)

    def test_deterministic(self):
        cfg = self.small_config()
        a, b = run_scenario(cfg), run_scenario(cfg)
        assert a.rows == b.rows

    def test_capacity_monotone_in_snr_per_trial(self):
        cfg = self.small_config(snr_grid_db=tuple(range(-10, 35, 5)), trials=6)
        result = run_scenario(cfg)
        for scheme in cfg.schemes:
            for trial in range(cfg.trials):
                caps = [
                    r.capacity_bpcu
                    for r in result.rows
                    if r.scheme == scheme and r.trial == trial
                ]
                assert all(caps[i] <= caps[i + 1] + 1e-9 for i in range(len(caps) - 1))

    def test_waterfilling_beats_equal_per_trial(self):
        # Holds draw by draw when the kept rank covers the channel rank,
        # so inter-user leakage through the discarded tail is negligible.
        wf = run_scenario(self.small_config(allocation="waterfilling", trials=6))
        eq = run_scenario(self.small_config(allocation="equal", trials=6))
        eq_map = {(r.scheme, r.snr_db, r.trial): r.capacity_bpcu for r in eq.rows}
        for row in wf.rows:
            other = eq_map[(row.scheme, row.snr_db, row.trial)]
            assert row.capacity_bpcu >= other - 1e-9

    def test_single_mode_high_snr_closed_form(self):
        cfg = ScenarioConfig(
            n_ma=64, n_sm=16, k_users=1, n_bb_ma=1, n_bb_sm=1,
            l_min=1, l_max=1, snr_grid_db=(30.0,), trials=1,
            schemes=("hybrid_ideal",), master_seed=21,
        )
        result = run_scenario(cfg)
        paths = sample_paths(cfg.path_distribution(), derive_rng(21, 0, 0))
        sigma = np.sqrt(64 * 16) * abs(paths.gains[0])
        expected = np.log2(1 + 1e3 * sigma**2)
        assert result.rows[0].capacity_bpcu == pytest.approx(expected, rel=0.02)

    def test_estimated_scheme_runs_and_trails_ideal(self):
        est = EstimationConfig(l_ma=128, l_sm=16, keep=6, n_bb_ma=8, n_bb_sm=4, snr_db=20.0)
        base = dict(
            n_ma=128, n_sm=16, k_users=2, n_bb_ma=8, n_bb_sm=4,
            snr_grid_db=(20.0,), trials=6, master_seed=31, estimation=est,
        )
        ideal = run_scenario(ScenarioConfig(schemes=("hybrid_ideal",), **base))
        estimated = run_scenario(ScenarioConfig(schemes=("hybrid_estimated",), **base))
        gaps = []
        ideal_map = {r.trial: r.capacity_bpcu for r in ideal.rows}
        for row in estimated.rows:
            gaps.append(ideal_map[row.trial] - row.capacity_bpcu)
        gaps = np.asarray(gaps)
        stderr = gaps.std(ddof=1) / np.sqrt(gaps.size)
        assert gaps.mean() >= -stderr


class TestFullDigitalBaseline:
    def test_single_user_matches_classical_waterfilling(self):
        rng = np.random.default_rng(41)
        paths = sample_paths(PathDistribution(3, 3), rng)
        h = assemble_channel(ArrayGeometry(32), ArrayGeometry(8), paths)
        snr_db = 10.0
        capacity = full_digital_baseline([h], snr_db)
        sigmas = np.linalg.svd(h, compute_uv=False)
        gains = np.maximum(sigmas**2, 1e-300)
        powers = allocate_power(gains, 10.0 ** (snr_db / 10.0)).powers
        expected = np.sum(np.log2(1 + powers * gains))
        assert capacity == pytest.approx(expected, rel=1e-9)

    def test_orthogonal_single_antenna_users_closed_form(self):
        tx = ArrayGeometry(8, 0.5)
        rx = ArrayGeometry(1, 0.5)
        angles = [0.0, np.arcsin(0.25)]  # orthogonal transmit responses
        gains = [0.9 + 0.3j, -0.2 + 1.1j]
        channels = [
            assemble_channel(tx, rx, PathSet(gains=[g], aods=[a], aoas=[0.0]))
            for g, a in zip(gains, angles)
        ]
        snr_db = 12.0
        capacity = full_digital_baseline(channels, snr_db)
        mode_gains = np.array([8 * abs(g) ** 2 for g in gains])
        powers = allocate_power(mode_gains, 10.0 ** (snr_db / 10.0)).powers
        expected = np.sum(np.log2(1 + powers * mode_gains))
        assert capacity == pytest.approx(expected, rel=1e-9)

    def test_rank_condition_enforced(self):
        h = np.ones((8, 4), dtype=complex)
        with pytest.raises(ValueError):
            full_digital_baseline([h, h, h], 10.0)

    def test_dominance_record_at_high_snr(self):
        # Recorded for the reference configuration at 30 dB: the exact
        # full-rank design wins on 6 of these 8 draws and in the mean.
        # It is not a per-draw guarantee; zero-forcing across all
        # 128 stacked dimensions pays a beamforming-gain penalty that
        # the rank-4 hybrid avoids on low-rank draws.
        cfg = ScenarioConfig(
            n_ma=512, n_sm=32, k_users=4, n_bb_ma=16, n_bb_sm=4,
            snr_grid_db=(30.0,), trials=8, master_seed=1,
            schemes=("hybrid_ideal", "full_digital"),
        )
        result = run_scenario(cfg)
        hybrid = {r.trial: r.capacity_bpcu for r in result.rows if r.scheme == "hybrid_ideal"}
        full = {r.trial: r.capacity_bpcu for r in result.rows if r.scheme == "full_digital"}
        dominated = sum(full[t] >= hybrid[t] - 1e-9 for t in hybrid)
        assert np.mean(list(full.values())) >= np.mean(list(hybrid.values()))
        assert dominated == 6


class TestDeriveRng:
    def test_reproducible_and_independent(self):
        a = derive_rng(5, 1, 0).standard_normal(4)
        b = derive_rng(5, 1, 0).standard_normal(4)
        c = derive_rng(5, 2, 0).standard_normal(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
