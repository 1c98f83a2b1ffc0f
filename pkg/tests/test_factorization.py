import numpy as np
import pytest

from mmwave_backhaul import (
    ArrayGeometry,
    FactorizeOptions,
    PathDistribution,
    assemble_channel,
    factorize,
    factorize_combiner,
    phase_project,
    sample_paths,
    truncated_svd,
)


def precoder_target(n_tx, n_rx, n_paths, rank, seed):
    rng = np.random.default_rng(seed)
    paths = sample_paths(PathDistribution(n_paths, n_paths), rng)
    h = assemble_channel(ArrayGeometry(n_tx), ArrayGeometry(n_rx), paths)
    return truncated_svd(h, rank).left.conj().T


class TestPhaseProject:
    def test_basic_example(self):
        out = phase_project(np.array([2.0, -3.0j]), 1.0)
        np.testing.assert_allclose(out, [1.0, -1.0j], atol=1e-15)

    def test_already_constant_modulus_unchanged(self):
        rng = np.random.default_rng(0)
        m = 0.3 * np.exp(1j * rng.uniform(0, 2 * np.pi, (3, 5)))
        np.testing.assert_allclose(phase_project(m, 0.3), m, atol=1e-15)

    def test_zero_maps_to_phase_zero(self):
        out = phase_project(np.array([0.0 + 0.0j, 1.0j]), 0.25)
        assert out[0] == 0.25
        np.testing.assert_allclose(out[1], 0.25j, atol=1e-16)


class TestFactorize:
    def test_feasible_target_is_exact(self):
        rng = np.random.default_rng(1)
        n = 16
        c = 1.0 / np.sqrt(n)
        target = c * np.exp(1j * rng.uniform(0, 2 * np.pi, (1, n)))
        result = factorize(target)
        assert result.residual <= 1e-12
        assert abs(abs(result.digital[0, 0]) - 1.0) <= 1e-12

    def test_single_row_matches_one_step_oracle(self):
        rng = np.random.default_rng(2)
        row = (rng.standard_normal((1, 12)) + 1j * rng.standard_normal((1, 12)))
        result = factorize(row)
        analog = phase_project(row, result.modulus)
        digital = row @ np.linalg.pinv(analog)
        oracle = np.linalg.norm(row - digital @ analog) / np.linalg.norm(row)
        assert abs(result.residual - oracle) <= 1e-12
        # The analog factor is reproduced up to one global phase.
        ratio = result.analog / analog
        assert np.max(np.abs(np.abs(ratio) - 1.0)) <= 1e-12
        assert np.max(np.abs(ratio - ratio[0, 0])) <= 1e-9

    def test_reference_scale_residual_bound(self):
        target = precoder_target(512, 32, 4, 4, seed=3)
        result = factorize(target)
        assert result.residual <= 0.1
        assert result.iterations_used <= 100

    def test_analog_modulus_exact(self):
        target = precoder_target(64, 16, 4, 4, seed=4)
        result = factorize(target)
        deviation = np.abs(np.abs(result.analog) ** 2 - result.modulus**2)
        assert np.max(deviation) <= 1e-15

    def test_returned_iterate_no_worse_than_first(self):
        rng = np.random.default_rng(5)
        for seed in range(10):
            target = (np.random.default_rng(seed).standard_normal((3, 24))
                      + 1j * np.random.default_rng(seed + 100).standard_normal((3, 24)))
            result = factorize(target)
            modulus = result.modulus
            first_analog = phase_project(target, modulus)
            first_digital = target @ np.linalg.pinv(first_analog)
            first = np.linalg.norm(target - first_digital @ first_analog) / np.linalg.norm(target)
            assert result.residual <= first + 1e-12

    def test_digital_refit_is_global_optimum(self):
        rng = np.random.default_rng(6)
        target = rng.standard_normal((3, 20)) + 1j * rng.standard_normal((3, 20))
        analog = phase_project(target, 1.0 / np.sqrt(20))
        digital = target @ np.linalg.pinv(analog)
        best = np.linalg.norm(target - digital @ analog)
        for _ in range(100):
            other = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
            assert best <= np.linalg.norm(target - other @ analog) + 1e-12

    def test_deterministic(self):
        target = precoder_target(64, 16, 3, 3, seed=7)
        a = factorize(target)
        b = factorize(target)
        assert np.array_equal(a.analog, b.analog)
        assert np.array_equal(a.digital, b.digital)
        assert a.residual == b.residual

    def test_custom_modulus(self):
        target = precoder_target(32, 8, 2, 2, seed=8)
        result = factorize(target, FactorizeOptions(modulus=0.07))
        assert result.modulus == 0.07
        assert np.max(np.abs(np.abs(result.analog) - 0.07)) <= 1e-15

    def test_invalid_targets(self):
        with pytest.raises(ValueError):
            factorize(np.zeros((2, 8), dtype=complex))
        with pytest.raises(ValueError):
            factorize(np.ones((8, 2), dtype=complex))
        with pytest.raises(ValueError):
            FactorizeOptions(max_iterations=0)
        with pytest.raises(ValueError):
            FactorizeOptions(stall_tolerance=0.0)


class TestFactorizeCombiner:
    def test_reconstruction_matches_residual(self):
        rng = np.random.default_rng(9)
        paths = sample_paths(PathDistribution(4, 4), rng)
        h = assemble_channel(ArrayGeometry(128), ArrayGeometry(32), paths)
        combiner = truncated_svd(h, 4).right
        result = factorize_combiner(combiner)
        recon = result.analog @ result.digital
        rel = np.linalg.norm(combiner - recon) / np.linalg.norm(combiner)
        assert abs(rel - result.residual) <= 1e-12

    def test_shapes_and_modulus(self):
        rng = np.random.default_rng(10)
        combiner = rng.standard_normal((32, 4)) + 1j * rng.standard_normal((32, 4))
        result = factorize_combiner(combiner)
        assert result.analog.shape == (32, 4)
        assert result.digital.shape == (4, 4)
        assert np.max(np.abs(np.abs(result.analog) - result.modulus)) <= 1e-15
