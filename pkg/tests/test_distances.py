import math

import numpy as np
import pytest
from scipy import optimize

from mobimeta.channel import LOS, NLOS, LinkGeometry, mean_rx_power, table1
from mobimeta.distances import (
    DisplacementInput,
    crescent_area,
    displaced_cdf,
    displaced_distance,
    distance_laws,
    exclusion_ln,
    exclusion_nl,
    handover_probability,
    interferer_ccdf,
    interferer_pdf,
    nearest_los_cdf,
    nearest_los_pdf,
    nearest_nlos_cdf,
    serving_cdf,
    serving_pdf,
)
from mobimeta.quadrature import integrate_1d

P = table1()


class TestServingLaw:
    def test_cdf_at_zero(self):
        assert serving_cdf(P, 0.0) == 0.0

    def test_median_of_fitted_law(self):
        # solve 1 - exp(-1.28 pi r^2) = 0.5 in km: sqrt(ln 2 / (1.28 pi))
        med = math.sqrt(math.log(2.0) / (1.28 * math.pi)) * 1e3  # meters
        assert med == pytest.approx(415.2, abs=0.1)
        assert serving_cdf(P, med) == pytest.approx(0.5, abs=1e-12)

    def test_printed_pdf_is_unnormalized(self):
        # the printed prefactor/exponent mismatch integrates to lam/lam'
        total = integrate_1d(lambda r: serving_pdf(P, r), 0.0, math.inf)
        assert total == pytest.approx(1.0 / 1.28, abs=1e-9)
        assert total == pytest.approx(0.78125, abs=1e-9)

    def test_normalized_variant(self):
        total = integrate_1d(lambda r: serving_pdf(P, r, normalized=True), 0.0, math.inf)
        assert total == pytest.approx(1.0, abs=1e-9)


class TestInterfererLaw:
    def test_zero_at_origin(self):
        assert interferer_pdf(P, 0.0) == 0.0

    def test_normalization(self):
        total = integrate_1d(lambda r: interferer_pdf(P, r), 0.0, math.inf)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_ccdf_matches_pdf(self):
        # d/dr CCDF = -pdf, checked by quadrature over an interval
        lo, hi = 200.0, 900.0
        mass = integrate_1d(lambda r: interferer_pdf(P, r), lo, hi)
        assert mass == pytest.approx(
            interferer_ccdf(P, lo) - interferer_ccdf(P, hi), abs=1e-10
        )

    def test_thinning_saturates(self):
        # density ratio lambda_i / lambda -> 1 for large r: CCDF decays like
        # a plain Rayleigh tail there
        r = 5000.0
        lam = P.bs_density_m2
        ratio = interferer_pdf(P, r) / (
            2 * math.pi * lam * r * math.exp(-(math.pi * lam * r * r - 1.0))
        )
        assert ratio == pytest.approx(1.0, rel=1e-6)


class TestDisplacement:
    def test_zero_speed(self):
        d = DisplacementInput(500.0, 1.0, 0.0, 2.0)
        assert displaced_distance(d) == pytest.approx(500.0)

    def test_head_on(self):
        d = DisplacementInput(500.0, 0.0, 100.0, 2.0)
        assert displaced_distance(d) == pytest.approx(300.0)

    def test_right_triangle(self):
        d = DisplacementInput(3.0, math.pi / 2.0, 4.0, 1.0)
        assert displaced_distance(d) == pytest.approx(5.0)

    def test_support_bounds(self):
        d = DisplacementInput(3.0, 2.0, 4.0, 1.0)
        assert abs(3.0 - 4.0) <= displaced_distance(d) <= 7.0

    def test_validation(self):
        with pytest.raises(ValueError):
            DisplacementInput(-1.0, 0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            DisplacementInput(1.0, 4.0, 1.0, 1.0)  # angle beyond pi


class TestDisplacedCdf:
    def test_lower_endpoint(self):
        assert displaced_cdf(P, 500.0, 400.0, 100.0) == pytest.approx(0.0)

    def test_upper_endpoint(self):
        assert displaced_cdf(P, 500.0, 600.0, 100.0) == pytest.approx(1.0)

    def test_right_triangle_half(self):
        assert displaced_cdf(P, 3.0, 5.0, 4.0) == pytest.approx(0.5)

    def test_monotone_and_proper(self):
        r0, vt = 430.0, 170.0
        xs = np.linspace(abs(r0 - vt), r0 + vt, 300)
        vals = [displaced_cdf(P, r0, x, vt) for x in xs]
        assert vals[0] == pytest.approx(0.0)
        assert vals[-1] == pytest.approx(1.0)
        assert np.all(np.diff(vals) >= 0)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            displaced_cdf(P, 500.0, 10.0, 100.0)


class TestHandoverProbability:
    def test_zero_velocity(self):
        assert handover_probability(P, 1.0) == 0.0

    def test_huge_velocity(self):
        p = P.with_(velocity=1e7)
        assert handover_probability(p, 1.0) == pytest.approx(1.0, abs=1e-9)

    def test_monotone_in_displacement(self):
        vals = [
            handover_probability(P.with_(velocity=v), 1.0, n_radial=300, n_angle=64)
            for v in np.linspace(0.0, 2000.0, 20)
        ]
        assert np.all(np.diff(vals) >= -1e-12)

    def test_against_geometric_monte_carlo(self):
        # oracle: sample a BS point process, move the user, check whether
        # the nearest BS changed (origin mode pairs with the plain law)
        rng = np.random.default_rng(123)
        lam = P.bs_density_m2
        Rw, trials, d = 10000.0, 200_000, 500.0
        hand = 0
        B = 4000
        for start in range(0, trials, B):
            b = min(B, trials - start)
            n = rng.poisson(lam * math.pi * Rw * Rw, size=b)
            mx = n.max()
            rr = Rw * np.sqrt(rng.random((b, mx)))
            th = rng.random((b, mx)) * 2 * math.pi
            x, y = rr * np.cos(th), rr * np.sin(th)
            mask = np.arange(mx) < n[:, None]
            i0 = np.where(mask, x * x + y * y, np.inf).argmin(1)
            phi = rng.random(b) * 2 * math.pi
            ux, uy = d * np.cos(phi), d * np.sin(phi)
            d2 = np.where(mask, (x - ux[:, None]) ** 2 + (y - uy[:, None]) ** 2, np.inf)
            hand += (d2.argmin(1) != i0).sum()
        emp = hand / trials
        ana = handover_probability(P.with_(velocity=d), 1.0, serving_law="nearest")
        assert ana == pytest.approx(emp, abs=0.01)

    def test_crescent_degenerate_cases(self):
        # moving straight at the serving BS never uncovers new area
        assert crescent_area(500.0, 0.0, 100.0) == pytest.approx(0.0, abs=1e-6)
        # moving straight away uncovers the full annulus
        ann = crescent_area(500.0, math.pi, 100.0)
        assert ann == pytest.approx(math.pi * (600.0**2 - 500.0**2), rel=1e-10)


class TestNearestAerialLaws:
    def test_cdf_zero_at_origin(self):
        assert nearest_los_cdf(P, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_thinning_identity(self):
        # a -> 0 makes P_l ~ 1 everywhere; the LoS law collapses onto the
        # plain nearest-interferer law
        p = P.with_(env_a=1e-9, env_b=1e-9)
        r = np.geomspace(10.0, 4000.0, 40)
        assert np.allclose(nearest_los_pdf(p, r), interferer_pdf(p, r), rtol=1e-4)

    def test_total_mass_plus_absence(self):
        # integral of the pdf plus the no-LoS-point probability is 1
        laws = distance_laws(P)
        rmax = laws.r_grid[-1]
        total = integrate_1d(lambda r: float(laws.pdf(r, "los")), 0.0, rmax)
        absence = laws.ccdf(rmax, "los")
        assert total + absence == pytest.approx(1.0, abs=1e-6)

    def test_ccdf_matches_direct_quadrature(self):
        # P(R_l > r) = exp(-int_0^r 2 pi z lam_i(z) P_l(z) dz)
        from mobimeta.channel import los_probability

        lam = P.bs_density_m2
        for r in (300.0, 900.0, 2500.0):
            inner = integrate_1d(
                lambda z: 2.0
                * math.pi
                * z
                * lam
                * (1.0 - math.exp(-math.pi * lam * z * z))
                * los_probability(P, z),
                0.0,
                r,
            )
            assert nearest_los_cdf(P, r) == pytest.approx(1.0 - math.exp(-inner), abs=1e-6)

    def test_nlos_cdf_complement_structure(self):
        # LoS and NLoS integrated intensities sum to the unthinned one
        laws = distance_laws(P)
        r = np.geomspace(5.0, 4e4, 50)
        lam = P.bs_density_m2
        t = math.pi * lam * r * r
        unthinned = t - (1.0 - np.exp(-t))
        assert np.allclose(
            laws.Lambda(r, "los") + laws.Lambda(r, "nlos"), unthinned, rtol=1e-5
        )
        assert nearest_nlos_cdf(P, 1e9) == pytest.approx(1.0)


class TestExclusionRadii:
    def test_symmetric_channel(self):
        p = P.with_(nlos_eta=1.0, los_eta=1.0, nlos_alpha=3.0, los_alpha=3.0)
        d3 = 700.0
        horiz = math.sqrt(d3 * d3 - p.altitude**2)
        assert exclusion_ln(p, d3) == pytest.approx(horiz, rel=1e-12)
        assert exclusion_nl(p, d3) == pytest.approx(horiz, rel=1e-12)

    def test_reference_values_clamp_free(self):
        # with the -20 dB extra NLoS loss, the NLoS keep-out of a LoS
        # dominant at d3 = h collapses to zero (clamp active) while the
        # LoS keep-out of an NLoS dominant is enormous
        assert exclusion_ln(P, P.altitude) == 0.0
        d_nl = exclusion_nl(P, P.altitude)
        inner = (P.los_eta / P.nlos_eta) ** (1.0 / P.los_alpha) * P.altitude ** (
            P.nlos_alpha / P.los_alpha
        )
        assert inner > P.altitude  # clamp-free branch
        assert d_nl == pytest.approx(math.sqrt(inner * inner - P.altitude**2), rel=1e-12)

    def test_power_equality_oracle(self):
        # oracle: root-find the horizontal distance where the opposite-type
        # mean power equals the dominant's mean power
        h = P.altitude
        for d3 in (150.0, 400.0, 1200.0):
            target = mean_rx_power(P, LinkGeometry(math.sqrt(d3 * d3 - h * h), 1.0, LOS, LOS))
            d_ln = exclusion_ln(P, d3)
            if d_ln > 0.0:
                got = mean_rx_power(P, LinkGeometry(d_ln, 1.0, NLOS, NLOS))
                assert got == pytest.approx(target, rel=1e-9)
            target_n = mean_rx_power(P, LinkGeometry(math.sqrt(d3 * d3 - h * h), 1.0, NLOS, NLOS))
            d_nl = exclusion_nl(P, d3)
            if d_nl > 0.0:
                got = mean_rx_power(P, LinkGeometry(d_nl, 1.0, LOS, LOS))
                assert got == pytest.approx(target_n, rel=1e-9)
                # cross-check via an independent bisection on the power gap
                gap = lambda r: mean_rx_power(P, LinkGeometry(r, 1.0, LOS, LOS)) - target_n
                root = optimize.brentq(gap, 1.0, 1e9, xtol=1e-6)
                assert d_nl == pytest.approx(root, rel=1e-6)

    def test_domain(self):
        with pytest.raises(ValueError):
            exclusion_ln(P, 10.0)  # below altitude
