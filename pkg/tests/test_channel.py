import math

import numpy as np
import pytest
from scipy import stats

from mobimeta.channel import (
    ENVIRONMENTS,
    GROUND,
    LOS,
    NLOS,
    LinkGeometry,
    SystemParams,
    alzer_beta,
    fading_sample,
    los_probability,
    mean_rx_power,
    nlos_probability,
    table1,
)


class TestSystemParams:
    def test_defaults_match_reference_table(self):
        p = table1()
        assert p.bs_density == 1.0
        assert p.altitude == 100.0
        assert (p.env_a, p.env_b) == ENVIRONMENTS["suburban"]
        assert p.tx_power == 1.0 and p.noise == 1e-12
        assert (p.nlos_alpha, p.los_alpha, p.ground_alpha) == (4.0, 2.1, 4.0)
        assert (p.nlos_m, p.los_m) == (1, 3)
        assert p.nlos_eta == pytest.approx(10 ** (-20 / 10))  # -20 dB
        assert p.los_eta == pytest.approx(1.0)  # 0 dB
        assert p.handover_delay == 0.35

    def test_fitted_density(self):
        assert table1().fitted_density == pytest.approx(1.28)

    def test_presets(self):
        assert table1("highrise").env_a == 27.0
        with pytest.raises(ValueError):
            table1("orbital")

    def test_invariants(self):
        with pytest.raises(ValueError):
            SystemParams(bs_density=0.0)
        with pytest.raises(ValueError):
            SystemParams(ground_alpha=2.0)  # interference integral diverges
        with pytest.raises(ValueError):
            SystemParams(los_m=0)
        with pytest.raises(ValueError):
            SystemParams(pdf_step=0.5)

    def test_units(self):
        p = table1()
        assert p.bs_density_m2 == pytest.approx(1e-6)
        assert p.mean_interarrival == pytest.approx(2.0)

    def test_alzer_beta(self):
        assert alzer_beta(1) == pytest.approx(1.0)
        assert alzer_beta(3) == pytest.approx(6.0 ** (-1.0 / 3.0))
        assert alzer_beta(3) == pytest.approx(0.55032, abs=1e-5)


class TestLosProbability:
    def test_suburban_45_degrees(self):
        # direct evaluation of the sigmoid at 45 degrees elevation
        p = table1()
        assert los_probability(p, 100.0) == pytest.approx(0.9999998, abs=1e-6)

    def test_far_limit(self):
        for env in ENVIRONMENTS:
            p = table1(env)
            limit = 1.0 / (1.0 + p.env_a * math.exp(p.env_a * p.env_b))
            assert los_probability(p, 1e9) == pytest.approx(limit, rel=1e-4)

    def test_complement(self):
        p = table1("urban")
        r = np.geomspace(1.0, 1e5, 64)
        assert np.allclose(los_probability(p, r) + nlos_probability(p, r), 1.0)

    def test_overhead(self):
        # r = 0 means a 90-degree elevation angle
        p = table1("highrise")
        assert los_probability(p, 0.0) == pytest.approx(
            1.0 / (1.0 + 27.0 * math.exp(-0.08 * (90.0 - 27.0)))
        )

    @pytest.mark.parametrize("env", sorted(ENVIRONMENTS))
    def test_monotone_non_increasing(self, env):
        p = table1(env)
        r = np.linspace(0.0, 5e4, 2000)
        pl = los_probability(p, r)
        assert np.all(np.diff(pl) <= 1e-15)


class TestMeanRxPower:
    def test_ground_power_law(self):
        g = LinkGeometry(10.0, 50.0, GROUND, GROUND)
        assert mean_rx_power(table1(), g) == pytest.approx(1e-4)

    def test_los_overhead(self):
        p = table1().with_(los_alpha=2.0)
        g = LinkGeometry(0.0, 50.0, LOS, LOS)
        assert mean_rx_power(p, g) == pytest.approx(p.tx_power * 1e-4)

    def test_nlos_vs_los_extra_loss(self):
        p = table1().with_(nlos_alpha=2.1)  # equalize exponents to isolate eta
        glos = LinkGeometry(300.0, 400.0, LOS, LOS)
        gnlos = LinkGeometry(300.0, 400.0, NLOS, NLOS)
        assert mean_rx_power(p, gnlos) / mean_rx_power(p, glos) == pytest.approx(0.01)

    def test_ground_zero_distance_sentinel(self):
        g = LinkGeometry(0.0, 1.0, GROUND, GROUND)
        assert mean_rx_power(table1(), g) == math.inf

    def test_strictly_decreasing(self):
        p = table1()
        r = np.linspace(1.0, 5000.0, 500)
        for kind in (GROUND, LOS, NLOS):
            pw = [mean_rx_power(p, LinkGeometry(x, 1.0, kind, kind)) for x in r]
            assert np.all(np.diff(pw) < 0)

    def test_geometry_validation(self):
        with pytest.raises(ValueError):
            LinkGeometry(-1.0, 1.0)
        with pytest.raises(ValueError):
            LinkGeometry(1.0, 1.0, GROUND, LOS)  # ground never mixes
        with pytest.raises(ValueError):
            LinkGeometry(1.0, 1.0, "underwater", LOS)


class TestFadingSample:
    def test_unit_mean_all_kinds(self):
        rng = np.random.default_rng(42)
        for kind, m in ((GROUND, 1), (LOS, 3), (NLOS, 1)):
            draws = fading_sample(kind, m, rng, size=1_000_000)
            assert draws.mean() == pytest.approx(1.0, abs=0.005)

    def test_m1_equals_exponential(self):
        # Gamma(1, 1) and Exp(1) agree in distribution (KS test)
        rng = np.random.default_rng(1)
        gamma_draws = fading_sample(LOS, 1, rng, size=20000)
        ks = stats.kstest(gamma_draws, "expon")
        assert ks.pvalue > 0.01

    def test_gamma_variance(self):
        rng = np.random.default_rng(2)
        draws = fading_sample(LOS, 3, rng, size=1_000_000)
        assert draws.var() == pytest.approx(1.0 / 3.0, abs=0.01)

    def test_caller_owned_stream(self):
        a = fading_sample(GROUND, 1, np.random.default_rng(7), size=5)
        b = fading_sample(GROUND, 1, np.random.default_rng(7), size=5)
        assert np.array_equal(a, b)
