import csv
import math

import numpy as np
import pytest
from scipy import fft as sfft

from pshaping.errors import ConfigError
from pshaping.gnmodel import ase_variance
from pshaping.ssfm import (DESK_LINK, OpticalField, SimConfig, append_result, edfa, gn_prediction,
                           propagate_span, rrc_response, run_link, rx_dsp, seed_sweep, tx_generate)
from pshaping.ssfm.config import MIN_SYMBOLS
from pshaping.ssfm.fiber import MANAKOV, ase_sample_variance
from pshaping.ssfm.link import existing_hashes
from pshaping.ssfm.transmitter import channel_bins


def small(**kw):
    base = dict(n_symbols=1 << 12, oversampling=8, n_spans=1)
    base.update(kw)
    return SimConfig().replace(**base)


def _rel_rms(a, b):
    return float(np.sqrt(np.mean(np.abs(a - b) ** 2) / np.mean(np.abs(b) ** 2)))


class TestConfig:
    def test_defaults_are_desk_scale(self):
        cfg = SimConfig()
        assert cfg.link == DESK_LINK and cfg.link.wdm_channels == 3 and cfg.n_symbols == 1 << 14

    def test_oversampling_must_hold_wdm_band(self):
        with pytest.raises(ConfigError, match="oversampling"):
            SimConfig(oversampling=4)

    def test_spacing_vs_bandwidth(self):
        with pytest.raises(ConfigError, match="spacing"):
            small(wdm_spacing=28.0)

    def test_pmf_entries(self):
        with pytest.raises(ConfigError):
            small(pmf=("uniform", "uniform"))
        cfg = small(pmf=("uniform", "64qam-d", "mb:14"))
        assert len(cfg.channel_pmfs()) == 3

    def test_hash_ignores_threads(self):
        assert small().config_hash() == small(threads=4).config_hash()
        assert small().config_hash() != small(seed=2).config_hash()
        assert small().config_hash() != small(gamma=1.2).config_hash()

    def test_replace_routes_link_fields(self):
        cfg = small(n_spans=3, p_tx_dbm=1.0)
        assert cfg.link.n_spans == 3 and cfg.p_tx_dbm == 1.0

    def test_toml_roundtrip(self, tmp_path):
        (tmp_path / "c.toml").write_text(
            "[link]\nn_spans = 2\n[sim]\nn_symbols = 4096\noversampling = 8\npmf = [[0.3, 0.15, 0.04, 0.01]]\n")
        cfg = SimConfig.from_toml(tmp_path / "c.toml")
        assert cfg.link.n_spans == 2 and cfg.pmf == ((0.3, 0.15, 0.04, 0.01),)
        assert SimConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("text", ["[link]\nfoo = 1\n", "[sim]\nbar = 2\n", "[other]\n", "x = ["])
    def test_bad_toml(self, tmp_path, text):
        (tmp_path / "c.toml").write_text(text)
        with pytest.raises(ConfigError):
            SimConfig.from_toml(tmp_path / "c.toml")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            SimConfig.from_toml(tmp_path / "none.toml")


@pytest.fixture(scope="module")
def tx():
    return tx_generate(small(p_tx_dbm=2.0))


class TestTransmitter:
    def test_rrc_nyquist(self):
        rs, beta = 28e9, 0.01
        f = np.linspace(0, rs, 2001)
        h2 = rrc_response(f, rs, beta) ** 2 + rrc_response(rs - f, rs, beta) ** 2
        band = (f > rs * (1 - beta) / 2) & (f < rs * (1 + beta) / 2)
        np.testing.assert_allclose(h2[band], 1.0, atol=1e-12)
        assert rrc_response(0.0, rs, beta) == 1.0 and rrc_response(rs, rs, beta) == 0.0

    def test_channel_power(self, tx):
        cfg = small(p_tx_dbm=2.0)
        X = sfft.fft(tx.field.samples, axis=1)
        f = sfft.fftfreq(cfg.n_samples, 1 / cfg.sample_rate)
        for k in channel_bins(cfg):
            Xk = np.roll(X, -k, axis=1)
            mask = np.abs(f) <= cfg.link.symbol_rate * 1e9 * (1 + cfg.link.rrc_rolloff) / 2
            pw = np.sum(np.abs(Xk[:, mask]) ** 2, axis=1) / cfg.n_samples ** 2
            np.testing.assert_allclose(pw, 1e-3 * 10 ** 0.2 / 2, rtol=1e-10)

    def test_psd_contained(self, tx):
        cfg = small(p_tx_dbm=2.0)
        X = sfft.fft(tx.field.samples, axis=1)
        f = sfft.fftfreq(cfg.n_samples, 1 / cfg.sample_rate)
        half = cfg.link.symbol_rate * 1e9 * (1 + cfg.link.rrc_rolloff) / 2
        inside = np.zeros(f.size, bool)
        df = cfg.sample_rate / cfg.n_samples
        for k in channel_bins(cfg):
            inside |= np.abs(f - k * df) <= half
        out = np.sum(np.abs(X[:, ~inside]) ** 2)
        assert out <= 1e-24 * np.sum(np.abs(X) ** 2)

    def test_symbols_reproducible_and_independent(self, tx):
        again = tx_generate(small(p_tx_dbm=2.0))
        np.testing.assert_array_equal(again.indices, tx.indices)
        assert not np.array_equal(tx.indices[0], tx.indices[1])
        assert not np.array_equal(tx.indices[1, 0], tx.indices[1, 1])
        other = tx_generate(small(p_tx_dbm=2.0, seed=9))
        assert not np.array_equal(other.indices, tx.indices)

    def test_symbols_unaffected_by_link(self, tx):
        # symbol streams do not depend on fiber parameters or power
        np.testing.assert_array_equal(tx_generate(small(n_spans=5, gamma=0.0)).indices, tx.indices)

    def test_shaped_channel_statistics(self):
        cfg = small(pmf=("64qam-d",), n_symbols=1 << 14)
        tx = tx_generate(cfg)
        p2 = np.asarray(tx.pmfs[1])
        freq = np.bincount(tx.indices[1].ravel(), minlength=64) / tx.indices[1].size
        assert np.max(np.abs(freq - p2)) < 5 * np.sqrt(p2.max() / tx.indices[1].size)

    def test_field_shape(self):
        with pytest.raises(ValueError):
            OpticalField(np.zeros((3, 8)), 1.0)


class TestFiber:
    def test_lossless_energy_conservation(self):
        cfg = small(alpha=0.0, p_tx_dbm=5.0)
        f = tx_generate(cfg).field
        out = propagate_span(f, cfg)
        assert abs(out.energy() / f.energy() - 1) < 1e-6

    def test_loss(self):
        cfg = small(gamma=0.0, step_km=25.0)
        f = tx_generate(cfg).field
        out = propagate_span(f, cfg)
        assert out.energy() / f.energy() == pytest.approx(10 ** (-0.2 * 100 / 10), rel=1e-10)

    def test_pure_spm_phase(self):
        cfg = small(alpha=0.0, dispersion=0.0, p_tx_dbm=6.0, step_km=5.0)
        f = tx_generate(cfg).field
        out = propagate_span(f, cfg)
        pw = np.sum(np.abs(f.samples) ** 2, axis=0)
        expect = f.samples * np.exp(1j * MANAKOV * cfg.link.gamma * cfg.link.span_length * pw)
        assert _rel_rms(out.samples, expect) < 1e-6

    def test_lossy_spm_phase_uses_effective_length(self):
        cfg = small(dispersion=0.0, p_tx_dbm=6.0, step_km=0.1)
        f = tx_generate(cfg).field
        out = propagate_span(f, cfg)
        a = cfg.link.alpha_neper
        leff = (1 - math.exp(-a * 100)) / a
        pw = np.sum(np.abs(f.samples) ** 2, axis=0)
        expect = f.samples * math.exp(-a * 50) * np.exp(1j * MANAKOV * cfg.link.gamma * leff * pw)
        assert _rel_rms(out.samples, expect) < 1e-5

    def test_linear_dispersion_is_invertible(self):
        cfg = small(gamma=0.0, alpha=0.0, step_km=100.0)
        tx = tx_generate(cfg)
        r = rx_dsp(propagate_span(tx.field, cfg), cfg, tx)
        assert r.channel_snr_db > 200

    def test_step_halving(self):
        cfg = small(p_tx_dbm=3.0)
        f = tx_generate(cfg).field
        a = propagate_span(f, cfg)
        b = propagate_span(f, cfg, step_km=cfg.step_km / 2)
        assert _rel_rms(a.samples, b.samples) < 1e-4

    def test_threads_do_not_change_result(self):
        f = tx_generate(small()).field
        a = propagate_span(f, small())
        b = propagate_span(f, small(threads=2))
        np.testing.assert_allclose(a.samples, b.samples, rtol=0, atol=1e-15)


class TestEdfa:
    def test_zero_signal_variance(self):
        cfg = small(n_symbols=1 << 14)
        out = edfa(OpticalField(np.zeros((2, cfg.n_samples)), cfg.sample_rate), cfg, 0)
        var = np.mean(np.abs(out.samples) ** 2, axis=1)
        sd = ase_sample_variance(cfg) / math.sqrt(cfg.n_samples)
        np.testing.assert_allclose(var, ase_sample_variance(cfg), atol=5 * sd)

    def test_inband_variance_matches_gn(self):
        cfg = small(n_symbols=1 << 14)
        # one EDFA in a symbol-rate band, both polarizations
        per_span = ase_variance(cfg.link) / cfg.link.n_spans
        inband = ase_sample_variance(cfg) / cfg.oversampling * 2
        assert inband == pytest.approx(per_span, rel=1e-12)

    def test_gain_and_streams(self):
        cfg = small()
        f = tx_generate(cfg).field
        a, b = edfa(f, cfg, 0), edfa(f, cfg, 0)
        np.testing.assert_array_equal(a.samples, b.samples)
        c = edfa(f, cfg, 1)
        assert not np.allclose(a.samples, c.samples)
        quiet = edfa(f, small(edfa_nf=-math.inf), 0)
        np.testing.assert_allclose(quiet.samples, f.samples * 10.0, rtol=1e-14)

    def test_noise_polarizations_independent(self):
        cfg = small(n_symbols=1 << 14)
        out = edfa(OpticalField(np.zeros((2, cfg.n_samples)), cfg.sample_rate), cfg, 0)
        x, y = out.samples
        rho = abs(np.vdot(x, y)) / math.sqrt(np.vdot(x, x).real * np.vdot(y, y).real)
        assert rho < 5 / math.sqrt(cfg.n_samples)


@pytest.fixture(scope="module")
def pair():
    cfg = small(n_spans=2, n_symbols=1 << 13)
    return cfg, run_link(cfg)


class TestLink:
    def test_awgn_only_matches_analytic(self):
        cfg = small(gamma=0.0, n_spans=4, step_km=100.0, n_symbols=1 << 14)
        r = run_link(cfg)
        expect = 10 * math.log10(1e-3 / ase_variance(cfg.link))
        assert r.channel_snr_db == pytest.approx(expect, abs=0.1)

    def test_reproducible(self, pair):
        cfg, r = pair
        r2 = run_link(cfg)
        assert r2.channel_snr_db == r.channel_snr_db and r2.rbmd_4d == r.rbmd_4d

    def test_result_fields(self, pair):
        cfg, r = pair
        assert r.x.shape == r.y.shape == (2, cfg.n_symbols)
        assert r.warning == (cfg.n_symbols < MIN_SYMBOLS)
        assert r.entropy_4d == pytest.approx(12.0)
        assert 0 < r.rbmd_4d <= r.entropy_4d
        assert r.config_hash == cfg.config_hash()

    def test_close_to_gn(self, pair):
        cfg, r = pair
        assert abs(r.channel_snr_db - gn_prediction(cfg).snr_eff_db) < 1.0

    def test_append_idempotent(self, pair, tmp_path):
        cfg, r = pair
        out = tmp_path / "r.csv"
        assert append_result(out, cfg, r)
        assert not append_result(out, cfg, r)
        assert existing_hashes(out) == {cfg.config_hash()}
        rows = list(csv.DictReader(l for l in out.read_text().splitlines() if not l.startswith("#")))
        assert len(rows) == 1 and float(rows[0]["channel_snr_db"]) == r.channel_snr_db
        assert out.read_text().startswith("# units:")

    def test_seed_sweep(self):
        cfg = small(n_spans=1, n_symbols=1 << 11, step_km=5.0)
        res, mean, std = seed_sweep(cfg, [1, 2, 3])
        snr = [x.channel_snr_db for x in res]
        assert mean == pytest.approx(np.mean(snr)) and std == pytest.approx(np.std(snr, ddof=1))
        assert std > 0
