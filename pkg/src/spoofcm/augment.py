"""Waveform-level augmentation: additive/convolutive noise, Butterworth
frequency masking, and simulated codec degradation.

Every op is a pure function of (waveform, op config); all randomness
comes from the config's seed, so a rerun is bit-identical. Length and
sample rate are always preserved, and augmentation never changes a
trial's class label.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import butter, iirnotch, lfilter

from .audio_io import Waveform
from .dsp import BiquadCascade, design_butterworth_bandstop, filtfilt
from .errors import ConfigError
from .util import derive_seed


@dataclass(frozen=True)
class RawBoostLike:
    """Convolutive notches + signal-dependent impulses + stationary colored noise."""

    seed: int
    snr_range: tuple[float, float] = (10.0, 40.0)
    n_notches: tuple[int, int] = (1, 5)
    convolutive: bool = True
    impulsive: bool = True
    stationary: bool = True
    normalize: bool = True

    def __post_init__(self):
        if self.snr_range[0] > self.snr_range[1] or self.n_notches[0] > self.n_notches[1]:
            raise ConfigError("augmentation ranges must be well ordered")


@dataclass(frozen=True)
class FreqMask:
    """Random band-stop: 10th-order Butterworth applied zero-phase."""

    seed: int
    band_lo_range: tuple[float, float] = (300.0, 6000.0)
    width_range: tuple[float, float] = (200.0, 2000.0)
    order: int = 10

    def __post_init__(self):
        if self.band_lo_range[0] > self.band_lo_range[1] or self.width_range[0] > self.width_range[1]:
            raise ConfigError("augmentation ranges must be well ordered")


@dataclass(frozen=True)
class CodecSim:
    """Lossy-codec stand-in: bitrate-dependent low-pass plus mu-law requantization."""

    seed: int
    bitrate_range: tuple[float, float] = (16.0, 320.0)

    def __post_init__(self):
        if self.bitrate_range[0] > self.bitrate_range[1]:
            raise ConfigError("augmentation ranges must be well ordered")


AugmentOp = RawBoostLike | FreqMask | CodecSim


def rawboost_like(w: Waveform, op: RawBoostLike) -> Waveform:
    """Three noise families in sequence; output peak-normalized to the input peak.

    The impulsive and stationary components scale with the input's own
    statistics, so a silent input passes through silent.
    """
    rng = np.random.default_rng(derive_seed(op.seed, "rawboost"))
    x = w.samples
    sig_rms = float(np.sqrt(np.mean(x**2)))
    in_peak = float(np.max(np.abs(x))) if len(x) else 0.0
    y = x.copy()

    # all draws happen unconditionally so disabling a component for
    # measurement does not shift the other components' randomness
    n_notch = int(rng.integers(op.n_notches[0], op.n_notches[1] + 1))
    notches = [
        (rng.uniform(250.0, 0.45 * w.sample_rate), rng.uniform(4.0, 30.0)) for _ in range(n_notch)
    ]
    if op.convolutive:
        for f0, q in notches:
            b, a = iirnotch(f0, q, fs=w.sample_rate)
            y = lfilter(b, a, y)

    rate = rng.uniform(20.0, 100.0)  # events per second
    hits = rng.random(len(y)) < rate / w.sample_rate
    signs = rng.choice([-1.0, 1.0], size=len(y))
    gains = rng.uniform(1.0, 3.0, size=len(y))
    if op.impulsive:
        y = y + hits * signs * gains * np.abs(y)

    snr_db = rng.uniform(*op.snr_range)
    tilt = rng.uniform(0.0, 0.9)
    white = rng.standard_normal(len(y))
    if op.stationary:
        colored = lfilter([1.0], [1.0, -tilt], white)
        colored_rms = float(np.sqrt(np.mean(colored**2))) or 1.0
        noise = colored / colored_rms * sig_rms * 10.0 ** (-snr_db / 20.0)
        y = y + noise

    if op.normalize and in_peak > 0.0:
        out_peak = float(np.max(np.abs(y)))
        if out_peak > 0.0:
            y = y * (in_peak / out_peak)
    return Waveform(y, w.sample_rate)


def freq_mask_band(op: FreqMask, sample_rate: int) -> tuple[float, float]:
    """The band a FreqMask op will stop, drawn deterministically from its seed."""
    rng = np.random.default_rng(derive_seed(op.seed, "freqmask"))
    nyquist = sample_rate / 2.0
    lo = rng.uniform(*op.band_lo_range)
    lo = min(lo, 0.9 * nyquist)
    width = rng.uniform(*op.width_range)
    hi = min(lo + width, 0.99 * nyquist)
    return lo, hi


def freq_mask(w: Waveform, op: FreqMask) -> Waveform:
    lo, hi = freq_mask_band(op, w.sample_rate)
    cascade = design_butterworth_bandstop(op.order, lo, hi, w.sample_rate)
    return filtfilt(cascade, w)


_CODEC_MIN_KBPS, _CODEC_MAX_KBPS = 16.0, 320.0
_CODEC_MIN_CUTOFF = 3000.0
_CODEC_MIN_BITS, _CODEC_MAX_BITS = 6, 12
_MU = 255.0


def codec_cutoff_hz(bitrate_kbps: float, sample_rate: int) -> float:
    """Linear map: 16 kbps -> 3 kHz, 320 kbps -> Nyquist."""
    nyquist = sample_rate / 2.0
    frac = (bitrate_kbps - _CODEC_MIN_KBPS) / (_CODEC_MAX_KBPS - _CODEC_MIN_KBPS)
    return _CODEC_MIN_CUTOFF + frac * (nyquist - _CODEC_MIN_CUTOFF)


def codec_bits(bitrate_kbps: float) -> int:
    """Linear map, rounded: 16 kbps -> 6 bits, 320 kbps -> 12 bits."""
    frac = (bitrate_kbps - _CODEC_MIN_KBPS) / (_CODEC_MAX_KBPS - _CODEC_MIN_KBPS)
    return int(round(_CODEC_MIN_BITS + frac * (_CODEC_MAX_BITS - _CODEC_MIN_BITS)))


def codec_sim(w: Waveform, op: CodecSim) -> Waveform:
    """Band-limit then mu-law requantize at a randomly drawn bitrate."""
    rng = np.random.default_rng(derive_seed(op.seed, "codec"))
    bitrate = rng.uniform(*op.bitrate_range)
    cutoff = codec_cutoff_hz(bitrate, w.sample_rate)
    bits = codec_bits(bitrate)
    nyquist = w.sample_rate / 2.0

    y = w.samples
    if cutoff < 0.99 * nyquist:
        sos = butter(8, cutoff, btype="lowpass", fs=w.sample_rate, output="sos")
        y = filtfilt(BiquadCascade(sos), Waveform(y, w.sample_rate)).samples

    peak = float(np.max(np.abs(y)))
    if peak > 0.0:
        norm = y / peak
        companded = np.sign(norm) * np.log1p(_MU * np.abs(norm)) / np.log1p(_MU)
        levels = 2**bits
        quantized = np.clip((np.floor(companded * levels / 2) + 0.5) * 2.0 / levels, -1.0, 1.0)
        expanded = np.sign(quantized) * ((1.0 + _MU) ** np.abs(quantized) - 1.0) / _MU
        y = expanded * peak
    return Waveform(y, w.sample_rate)


def apply_augment(w: Waveform, op: AugmentOp) -> Waveform:
    if isinstance(op, RawBoostLike):
        return rawboost_like(w, op)
    if isinstance(op, FreqMask):
        return freq_mask(w, op)
    if isinstance(op, CodecSim):
        return codec_sim(w, op)
    raise ConfigError(f"unknown augmentation op {op!r}")


AUGMENT_KINDS = {"rawboost": RawBoostLike, "freqmask": FreqMask, "codec": CodecSim}


def make_augment(kind: str, seed: int) -> AugmentOp:
    if kind not in AUGMENT_KINDS:
        raise ConfigError(f"unknown augmentation kind {kind!r}; available: {sorted(AUGMENT_KINDS)}")
    return AUGMENT_KINDS[kind](seed=seed)


def reseeded(op: AugmentOp, seed: int) -> AugmentOp:
    return replace(op, seed=seed)
