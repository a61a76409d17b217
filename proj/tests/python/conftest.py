# License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
import numpy as np
import pytest

import ndns


def speechish(n, seed, rate=16000):
    """Aperiodic band-limited test signal with pauses."""
    rng = np.random.default_rng(seed)
    t = np.arange(n) / rate
    f0 = 120 + 40 * np.sin(2 * np.pi * 0.7 * t + rng.uniform(0, 6))
    phase = 2 * np.pi * np.cumsum(f0) / rate
    s = np.zeros(n)
    for k in range(1, 5):
        s += np.sin(k * phase) / k
    envelope = 0.25 * (0.5 + 0.5 * np.sin(2 * np.pi * 2.3 * t))
    gate = (np.floor(t * 2.5) % 3 != 2).astype(float)
    return ndns.AudioClip(s * envelope * gate + 0.01 * rng.standard_normal(n), rate)


def noiseish(n, seed, rate=16000):
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(n)
    lp = np.zeros(n)
    acc = 0.0
    for i in range(n):
        acc = 0.97 * acc + 0.03 * white[i]
        lp[i] = acc
    return ndns.AudioClip(2.0 * lp + 0.05 * rng.standard_normal(n), rate)


@pytest.fixture
def source_pools(tmp_path):
    clean_dir = tmp_path / "clean_src"
    noise_dir = tmp_path / "noise_src"
    clean_dir.mkdir()
    noise_dir.mkdir()
    for i in range(2):
        ndns.write_wav(speechish(16000, 10 + i), clean_dir / f"speech{i}.wav")
        ndns.write_wav(noiseish(16000, 20 + i), noise_dir / f"noise{i}.wav")
    return clean_dir, noise_dir
