import numpy as np
import pytest

from spoofcm.audio_io import Waveform
from spoofcm.augment import (
    CodecSim,
    FreqMask,
    RawBoostLike,
    apply_augment,
    codec_sim,
    freq_mask,
    freq_mask_band,
    make_augment,
    rawboost_like,
)
from spoofcm.errors import ConfigError

from conftest import harmonic_speechlike

SR = 16000


def rms(x):
    return np.sqrt(np.mean(np.square(x)))


ALL_OPS = [RawBoostLike(seed=1), FreqMask(seed=2), CodecSim(seed=3)]


@pytest.mark.parametrize("op", ALL_OPS, ids=lambda o: type(o).__name__)
def test_length_and_rate_preserved(op):
    w = harmonic_speechlike(duration=0.7, seed=20)
    out = apply_augment(w, op)
    assert len(out) == len(w) and out.sample_rate == w.sample_rate


@pytest.mark.parametrize("op", ALL_OPS, ids=lambda o: type(o).__name__)
def test_seed_determinism(op):
    w = harmonic_speechlike(duration=0.6, seed=21)
    a = apply_augment(w, op).samples
    b = apply_augment(w, op).samples
    assert np.array_equal(a, b)


class TestRawBoost:
    def test_zero_input_zero_output(self):
        out = rawboost_like(Waveform(np.zeros(8000), SR), RawBoostLike(seed=4))
        assert np.all(out.samples == 0.0)

    @pytest.mark.parametrize("target_snr", [12.0, 25.0, 38.0])
    def test_noise_only_mode_hits_drawn_snr(self, target_snr):
        w = harmonic_speechlike(duration=1.0, seed=22)
        op = RawBoostLike(
            seed=5,
            snr_range=(target_snr, target_snr),
            convolutive=False,
            impulsive=False,
            normalize=False,
        )
        out = rawboost_like(w, op)
        noise = out.samples - w.samples
        measured = 20 * np.log10(rms(w.samples) / rms(noise))
        assert abs(measured - target_snr) <= 2.0

    def test_peak_normalized(self):
        w = harmonic_speechlike(duration=0.6, seed=23)
        out = rawboost_like(w, RawBoostLike(seed=6))
        assert np.isclose(np.max(np.abs(out.samples)), np.max(np.abs(w.samples)))

    def test_bad_range_rejected(self):
        with pytest.raises(ConfigError):
            RawBoostLike(seed=0, snr_range=(40.0, 10.0))


class TestFreqMask:
    def test_in_band_sine_attenuated(self):
        op = FreqMask(seed=7)
        lo, hi = freq_mask_band(op, SR)
        t = np.arange(SR) / SR
        x = np.sin(2 * np.pi * ((lo + hi) / 2) * t)
        y = freq_mask(Waveform(x, SR), op).samples
        assert 20 * np.log10(rms(y[200:-200]) / rms(x[200:-200])) <= -40.0

    def test_out_of_band_sine_untouched(self):
        op = FreqMask(seed=8)
        lo, hi = freq_mask_band(op, SR)
        f_test = lo / 2 if lo / 2 > 60 else min(hi * 2, 0.45 * SR)  # one octave outside
        t = np.arange(SR) / SR
        x = np.sin(2 * np.pi * f_test * t)
        y = freq_mask(Waveform(x, SR), op).samples
        assert abs(20 * np.log10(rms(y[200:-200]) / rms(x[200:-200]))) < 1.0

    def test_band_inside_nyquist(self):
        for seed in range(25):
            lo, hi = freq_mask_band(FreqMask(seed=seed), SR)
            assert 0.0 < lo < hi < SR / 2


class TestCodecSim:
    def test_high_bitrate_is_transparent(self):
        w = harmonic_speechlike(duration=0.8, seed=24)
        out = codec_sim(w, CodecSim(seed=9, bitrate_range=(320.0, 320.0)))
        snr = 20 * np.log10(rms(w.samples) / rms(out.samples - w.samples))
        assert snr >= 40.0

    def test_snr_monotone_in_bitrate(self):
        w = harmonic_speechlike(duration=0.8, seed=25)
        snrs = []
        for kbps in (16.0, 64.0, 128.0, 320.0):
            out = codec_sim(w, CodecSim(seed=10, bitrate_range=(kbps, kbps)))
            snrs.append(20 * np.log10(rms(w.samples) / rms(out.samples - w.samples)))
        assert all(b >= a for a, b in zip(snrs, snrs[1:]))

    def test_zero_input_passthrough(self):
        out = codec_sim(Waveform(np.zeros(8000), SR), CodecSim(seed=11))
        assert np.all(out.samples == 0.0)


def test_make_augment_names():
    assert isinstance(make_augment("rawboost", 1), RawBoostLike)
    assert isinstance(make_augment("freqmask", 1), FreqMask)
    assert isinstance(make_augment("codec", 1), CodecSim)
    with pytest.raises(ConfigError):
        make_augment("mp3", 1)
