import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pshaping.air import (LLR_CAP, AirEstimate, AuxChannel, awgn_capacity_4d,
                          bmd_quadrature_terms, llr, llrs, mi_quadrature, rbmd_mc,
                          rbmd_quadrature, rsym_mc)
from pshaping.constellation import make_pam, make_qam, normalize, product_qam
from pshaping.pmf import Pmf, entropy, maxwell_boltzmann, preset, sample

mpmath.mp.dps = 50


def _llr_oracle(y, c, p, sigma2, i):
    """Brute-force LLR in 50-digit arithmetic; independent of the vectorized path."""
    y = mpmath.mpc(complex(y))
    num = mpmath.mpf(0)
    den = mpmath.mpf(0)
    for x, b, pr in zip(c.points, c.bits, np.asarray(p)):
        if pr == 0:
            continue
        d = y - mpmath.mpc(complex(x))
        if c.dimension == 1:
            d2 = d.real ** 2
        else:
            d2 = d.real ** 2 + d.imag ** 2
        t = mpmath.mpf(pr) * mpmath.exp(-d2 / mpmath.mpf(sigma2))
        if b[i]:
            num += t
        else:
            den += t
    return float(mpmath.log(num / den))


def _awgn(c, p, snr_db, n, seed):
    idx = sample(p, n, seed, (0,))
    x = c.points[idx]
    q = AuxChannel.from_snr(snr_db, c.dimension, c.energy(p))
    r = np.random.default_rng(seed + 1)
    if c.dimension == 1:
        y = x.real + r.normal(0, math.sqrt(q.sigma2 / 2), n)
    else:
        y = x + math.sqrt(q.sigma2 / 2) * (r.normal(size=n) + 1j * r.normal(size=n))
    return idx, y, q


class TestAuxChannel:
    def test_from_snr(self):
        assert AuxChannel.from_snr(10.0).sigma2 == pytest.approx(0.1)
        assert AuxChannel.from_snr(10.0, dimension=1).sigma2 == pytest.approx(0.2)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            AuxChannel(0.0)


class TestLlr:
    @pytest.fixture
    def shaped16(self):
        pam = make_pam(4)
        q, p = product_qam(pam, maxwell_boltzmann(pam, 0.08))
        return q, p

    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.02, 2.0))
    def test_matches_brute_force_2d(self, shaped16, re, im, sigma2):
        q, p = shaped16
        y = complex(re, im)
        got = llrs(np.array([y]), q, p, AuxChannel(sigma2))[0]
        for i in range(q.m):
            ref = max(-LLR_CAP, min(LLR_CAP, _llr_oracle(y, q, p, sigma2, i)))
            assert got[i] == pytest.approx(ref, abs=1e-9, rel=1e-9)

    @given(st.floats(-1.5, 1.5), st.floats(0.01, 1.0))
    def test_matches_brute_force_1d(self, y, sigma2):
        c = normalize(make_pam(8), Pmf.uniform(8))
        p = maxwell_boltzmann(c, 0.03)
        got = llrs(np.array([y]), c, p, AuxChannel(sigma2))[0]
        for i in range(c.m):
            ref = max(-LLR_CAP, min(LLR_CAP, _llr_oracle(y, c, p, sigma2, i)))
            assert got[i] == pytest.approx(ref, abs=1e-9, rel=1e-9)

    def test_saturates(self, qam16):
        q, p = qam16
        lam = llrs(np.array([50 + 50j, -50 - 50j]), q, p, AuxChannel(1e-3))
        assert np.all(np.abs(lam) == LLR_CAP)

    def test_zero_mass_bit_side(self, pam4):
        # all mass on label-0 points of the MSB: LLR of that bit is -cap
        c = normalize(pam4, Pmf.uniform(4))
        p = Pmf([0.5, 0.5, 0.0, 0.0])
        assert llr(0.3, 1, c, p, AuxChannel(0.1)) == -LLR_CAP

    def test_level_range(self, qam16):
        with pytest.raises(ValueError):
            llr(0j, 0, *qam16, AuxChannel(1.0))

    def test_product_llrs_agree_with_1d(self, pam8):
        # real-part bits of a product QAM depend only on the real component
        p1 = maxwell_boltzmann(pam8, 0.04)
        q, p2 = product_qam(pam8, p1)
        c1 = pam8.rescaled(q.rho)
        y = np.array([0.3 + 0.7j, -1.1 - 0.2j])
        l2 = llrs(y, q, p2, AuxChannel(0.05))
        l1 = llrs(y.real, c1, p1, AuxChannel(0.05))
        np.testing.assert_allclose(l2[:, :3], l1, atol=1e-10)


class TestMonteCarlo:
    def test_rbmd_close_to_quadrature(self, pam8):
        q, p = product_qam(pam8, preset("64qam-d").pmf())
        idx, y, aux = _awgn(q, p, 15.0, 200_000, 3)
        r = rbmd_mc(q.bits[idx], llrs(y, q, p, aux), q, p)
        assert 2 * r.value == pytest.approx(rbmd_quadrature(q, p, 15.0).value, abs=0.05)

    def test_rsym_close_to_mi(self, qam16):
        q, p = qam16
        idx, y, aux = _awgn(q, p, 8.0, 100_000, 5)
        r = rsym_mc(idx, y, q, p, aux)
        assert 2 * r.value == pytest.approx(mi_quadrature(q, p, 8.0).value, abs=0.05)

    def test_rsym_accepts_points(self, qam16):
        q, p = qam16
        idx, y, aux = _awgn(q, p, 8.0, 1000, 5)
        assert rsym_mc(idx, y, q, p, aux).raw == rsym_mc(q.points[idx], y, q, p, aux).raw

    def test_mismatched_noise_lowers_rate(self, qam16):
        q, p = qam16
        idx, y, aux = _awgn(q, p, 10.0, 50_000, 9)
        good = rbmd_mc(q.bits[idx], llrs(y, q, p, aux), q, p).raw
        bad = rbmd_mc(q.bits[idx], llrs(y, q, p, AuxChannel(aux.sigma2 * 8)), q, p).raw
        assert bad < good

    def test_shape_validation(self, qam16):
        q, p = qam16
        with pytest.raises(ValueError):
            rbmd_mc(np.zeros((3, 4)), np.zeros((3, 3)), q, p)
        with pytest.raises(ValueError):
            rsym_mc(np.array([0.5 + 0.1j]), np.array([0j]), q, p, AuxChannel(1.0))


class TestQuadrature:
    def test_capacity_at_zero_db(self):
        assert float(awgn_capacity_4d(0.0)) == 2.0

    @pytest.mark.parametrize("order", [16, 64, 256])
    def test_high_snr_reaches_entropy(self, order):
        q, p = make_qam(order)
        assert rbmd_quadrature(q, p, 45.0).value == pytest.approx(2 * math.log2(order), abs=1e-6)

    def test_below_capacity(self):
        for order in (16, 64):
            q, p = make_qam(order)
            for s in (0.0, 8.0, 16.0):
                assert rbmd_quadrature(q, p, s).value < float(awgn_capacity_4d(s))

    @given(st.floats(-5, 30))
    def test_rbmd_at_most_mi(self, snr):
        pam = make_pam(8)
        p = maxwell_boltzmann(pam, 0.03)
        assert rbmd_quadrature(pam, p, snr).raw <= mi_quadrature(pam, p, snr).raw + 1e-9

    @given(st.floats(-5, 25), st.floats(0, 0.2))
    def test_bounded_by_entropy(self, snr, nu):
        pam = make_pam(8)
        p = maxwell_boltzmann(pam, nu)
        r = rbmd_quadrature(pam, p, snr).value
        assert 0 <= r <= 4 * entropy(p) + 1e-9

    def test_snr_monotone(self, pam8):
        p = preset("64qam-d").pmf()
        r = [rbmd_quadrature(pam8, p, s).value for s in np.arange(0, 30, 2.0)]
        assert np.all(np.diff(r) > 0)

    def test_1d_and_2d_paths_agree(self, pam4):
        p1 = maxwell_boltzmann(pam4, 0.1)
        q, p2 = product_qam(pam4, p1)
        a = rbmd_quadrature(q, p2, 7.0).value
        b = rbmd_quadrature(q, p2, 7.0, force_2d=True).value
        assert a == pytest.approx(b, abs=1e-5)
        assert rbmd_quadrature(pam4, p1, 7.0).value == pytest.approx(a, abs=1e-12)

    @pytest.mark.parametrize("snr", [10.0, 20.0, 25.0])
    def test_order_converged(self, pam16, snr):
        p = Pmf.uniform(16)
        a = rbmd_quadrature(pam16, p, snr).value
        b = rbmd_quadrature(pam16, p, snr, order=320).value
        assert a == pytest.approx(b, abs=2e-6)

    def test_order_minimum(self, pam4):
        with pytest.raises(ValueError):
            rbmd_quadrature(pam4, Pmf.uniform(4), 5.0, order=4)

    def test_agrees_with_monte_carlo_and_mc_is_lower_bounded(self, qam16):
        q, p = qam16
        idx, y, aux = _awgn(q, p, 6.0, 100_000, 21)
        mc = rbmd_mc(q.bits[idx], llrs(y, q, p, aux), q, p).value
        assert 2 * mc == pytest.approx(rbmd_quadrature(q, p, 6.0).value, abs=0.05)

    def test_scale_invariant(self, pam8):
        p = maxwell_boltzmann(pam8, 0.05)
        a = rbmd_quadrature(pam8, p, 12.0).value
        b = rbmd_quadrature(pam8.rescaled(0.31), p, 12.0).value
        assert a == pytest.approx(b, abs=1e-12)


class TestGradient:
    @pytest.mark.parametrize("L,v", [(4, 0.3), (8, 0.05)])
    def test_finite_difference_1d(self, L, v):
        pam = make_pam(L)
        u = pam.base.real[:, None]
        p = np.asarray(maxwell_boltzmann(pam, 0.02))
        R, g, gv = bmd_quadrature_terms(u, pam.bits, p, v * L * L, grad=True)
        h = 1e-6
        for j in range(L):
            e = np.zeros(L)
            e[j] = h
            fd = (bmd_quadrature_terms(u, pam.bits, p + e, v * L * L)
                  - bmd_quadrature_terms(u, pam.bits, p - e, v * L * L)) / (2 * h)
            assert g[j] == pytest.approx(fd, rel=1e-5, abs=1e-6)
        hv = 1e-6 * v * L * L
        fdv = (bmd_quadrature_terms(u, pam.bits, p, v * L * L + hv)
               - bmd_quadrature_terms(u, pam.bits, p, v * L * L - hv)) / (2 * hv)
        assert gv == pytest.approx(fdv, rel=1e-5)
        assert R == pytest.approx(bmd_quadrature_terms(u, pam.bits, p, v * L * L), abs=1e-14)

    def test_finite_difference_2d(self, qam16):
        q, p0 = qam16
        u = q.coords()
        p = np.asarray(p0) * (1 + 0.3 * np.cos(np.arange(16)))
        p /= p.sum()
        R, g, gv = bmd_quadrature_terms(u, q.bits, p, 0.05, order=24, grad=True)
        h = 1e-6
        for j in (0, 5, 10, 15):
            e = np.zeros(16)
            e[j] = h
            fd = (bmd_quadrature_terms(u, q.bits, p + e, 0.05, order=24)
                  - bmd_quadrature_terms(u, q.bits, p - e, 0.05, order=24)) / (2 * h)
            assert g[j] == pytest.approx(fd, rel=1e-5, abs=1e-6)


class TestAirEstimate:
    def test_value_clips(self):
        e = AirEstimate(-0.2, "x")
        assert e.value == 0.0 and float(e) == 0.0

    def test_bits_4d(self):
        assert AirEstimate(1.5, "x").bits_4d == 3.0
        assert AirEstimate(1.5, "x", per4d=True).bits_4d == 1.5
