# License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
"""End-to-end smoke of the python bindings."""
import math

import numpy as np
import pytest

import ndns
from conftest import noiseish, speechish


def test_wav_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    clip = ndns.AudioClip(rng.uniform(-0.9, 0.9, 5000), 16000)
    ndns.write_wav(clip, tmp_path / "t.wav")
    back = ndns.read_wav(tmp_path / "t.wav")
    assert back.sample_rate_hz == 16000
    assert np.max(np.abs(np.asarray(back.samples) - np.asarray(clip.samples))) <= 2**-15


def test_wav_errors(tmp_path):
    (tmp_path / "junk.wav").write_bytes(b"not a wav file")
    with pytest.raises(ValueError):
        ndns.read_wav(tmp_path / "junk.wav")
    with pytest.raises(OSError):
        ndns.read_wav(tmp_path / "missing.wav")


def test_stft_round_trip():
    rng = np.random.default_rng(5)
    x = rng.normal(0, 0.1, 16000)
    clip = ndns.AudioClip(x, 16000)
    cfg = ndns.StftConfig()
    spec = ndns.stft(clip, cfg)
    assert spec.frames.shape == (122, 257)
    y = np.asarray(ndns.istft(spec).samples)
    err = y[256:-256] - x[256:-256]
    snr = 10 * math.log10(np.sum(x[256:-256] ** 2) / np.sum(err**2))
    assert snr >= 50.0

    mag, phase = ndns.magnitude_phase(spec)
    assert (mag >= 0).all()
    rebuilt = ndns.recombine(mag, phase, cfg, spec.source_samples)
    assert np.allclose(rebuilt.frames, spec.frames, rtol=1e-6, atol=1e-9)


def test_si_snr_properties():
    rng = np.random.default_rng(7)
    target = ndns.AudioClip(rng.normal(0, 0.1, 4000), 16000)
    est_arr = np.asarray(target.samples) + rng.normal(0, 0.01, 4000)
    est = ndns.AudioClip(est_arr, 16000)
    base = ndns.si_snr_db(est, target)
    scaled = ndns.AudioClip(3.0 * est_arr, 16000)
    assert abs(ndns.si_snr_db(scaled, target) - base) < 1e-9
    assert ndns.cap_db(float("inf")) == 300.0

    data_db, encdec_db = ndns.si_snr_improvements(est, est, est, target)
    assert data_db == 0.0 and encdec_db == 0.0


def test_mix_at_snr():
    clean = speechish(16000, 1)
    noise = noiseish(16000, 2)
    noisy, gain, norm = ndns.mix_at_snr(clean, noise, 10.0)
    c = np.asarray(clean.samples) * norm
    resid = np.asarray(noisy.samples) - c
    realized = 20 * math.log10(
        math.sqrt(np.mean(c**2)) / math.sqrt(np.mean(resid**2))
    )
    assert abs(realized - 10.0) < 0.1
    assert gain > 0


def test_synthesize_and_load(tmp_path, source_pools):
    clean_dir, noise_dir = source_pools
    out = tmp_path / "data"
    records = ndns.synthesize_dataset(
        count=2, seed=5, segment_s=0.5, clean_dir=clean_dir, noise_dir=noise_dir,
        out_dir=out,
    )
    assert len(records) == 2
    manifest = ndns.load_manifest(out / "manifest.jsonl")
    clean, noise, noisy, record = ndns.load_triple(manifest, out / "manifest.jsonl", 0)
    assert len(clean) == len(noisy) == 8000
    assert -5.0 <= record.snr_db <= 20.0
    resid = np.asarray(noisy.samples) - np.asarray(clean.samples) - np.asarray(noise.samples)
    assert np.max(np.abs(resid)) <= 2 * 2**-15 + 1e-12


def test_denoise_and_model_io(tmp_path):
    clip = speechish(16000, 9)
    cfg = ndns.StftConfig()

    net = ndns.make_network([257, 512, 512, 257], 8)
    assert ndns.weight_count(net) == 525312
    assert ndns.count_params(net) == 525312 + 1281 + 3
    assert net.topology == [257, 512, 512, 257]

    ndns.save_model(net, tmp_path / "m.ndns")
    loaded = ndns.load_model(tmp_path / "m.ndns")
    assert ndns.model_size_bytes(loaded) == ndns.model_size_bytes(net)

    # Bypass: pure encode+decode.
    out, ops = ndns.denoise(net, clip, cfg, 0, True)
    assert len(out) == len(clip)
    assert ndns.si_snr_db(out, clip) >= 50.0
    assert ops.synops == 0 and ops.steps == 122

    # Zero network silences; counters fill in.
    silent, ops2 = ndns.denoise(net, clip, cfg, 0, False)
    assert np.allclose(np.asarray(silent.samples), 0.0)
    assert ops2.neuronops == 122 * (512 + 512 + 257)
    assert ops2.audio_seconds() == pytest.approx(122 * 128 / 16000)


def test_metrics_pipeline():
    cfg = ndns.StftConfig()
    assert ndns.buffer_latency_s(cfg) == pytest.approx(0.032)
    clean = speechish(32000, 31)
    delayed = ndns.AudioClip(
        np.concatenate([np.zeros(256), np.asarray(clean.samples)[:-256]]), 16000
    )
    assert ndns.network_latency_s(clean, delayed) == pytest.approx(0.016)

    ops = ndns.OpsCounter()
    ops.synops = 100_000_000
    ops.neuronops = 10_000_000
    ops.steps = 1
    ops.timestep_s = 1.0
    assert ndns.power_proxy_mops_s(ops) == pytest.approx(200.0)
    assert ndns.pdp_proxy_mops(136.13, 0.020, 24e-6, 0.0) == pytest.approx(2.72, abs=0.01)
