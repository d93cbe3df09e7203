import numpy as np
import pytest
from bridge_stubs import write_wav

from sslbridge.export import AudioItem


@pytest.fixture
def audio_items(tmp_path):
    rng = np.random.default_rng(7)
    items = []
    for subject in ("S00", "S01"):
        for i in range(2):
            utt = f"{subject}_U{i:02d}"
            path = tmp_path / f"{utt}.wav"
            write_wav(path, rng.uniform(-0.5, 0.5, size=16000 + 1600 * i))
            items.append(AudioItem(utt, subject, path))
    return items
