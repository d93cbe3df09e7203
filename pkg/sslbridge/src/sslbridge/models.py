"""Pretrained model loading.

Supported self-supervised upstreams (default published weights) and a
VoxCeleb-trained x-vector extractor. Loading requires the optional
model backends (s3prl / speechbrain, both torch-based); without them,
or without network/cache access to the weights, loaders raise
ModelUnavailableError naming the supported set so callers can report a
precise failure.
"""

from __future__ import annotations

import importlib.util

import numpy as np

SUPPORTED_MODELS = ("wav2vec", "apc", "npc", "decoar", "tera", "mockingjay", "vq_wav2vec")
XVECTOR_SOURCE = "speechbrain/spkrec-xvect-voxceleb"
MODEL_SAMPLE_RATE = 16000


class ModelUnavailableError(RuntimeError):
    """The requested pretrained model cannot be loaded in this environment."""


def _unsupported_message(name: str) -> str:
    return (f"unsupported model {name!r}; supported models: "
            + ", ".join(SUPPORTED_MODELS))


class FrameExtractor:
    """Produces per-frame features for 16 kHz mono audio.

    Subclasses (and injected test doubles) provide name, version,
    frame_rate_hz, and extract().
    """

    name: str = ""
    version: str = ""
    frame_rate_hz: float = 0.0

    def extract(self, samples: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def source_tag(self) -> str:
        return f"{self.name}:{self.version}" if self.version else self.name


class SpeakerExtractor:
    """Produces one fixed-length embedding per 16 kHz mono utterance."""

    version: str = ""

    def embed(self, samples: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class _S3prlExtractor(FrameExtractor):
    """Final-layer features from an s3prl upstream."""

    def __init__(self, name: str, device: str = "cpu"):
        import torch
        import s3prl.hub as hub

        self.name = name
        self._torch = torch
        self._model = getattr(hub, name)().to(device).eval()
        self._device = device
        rates = self._model.get_downsample_rates("")
        downsample = int(rates) if np.isscalar(rates) else int(rates[-1])
        self.frame_rate_hz = MODEL_SAMPLE_RATE / downsample
        self.version = getattr(self._model, "version", "") or ""

    def extract(self, samples: np.ndarray) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            wav = torch.as_tensor(samples, dtype=torch.float32, device=self._device)
            hidden = self._model([wav])["hidden_states"][-1]
        return hidden.squeeze(0).cpu().numpy().astype(np.float64)


class _SpeechbrainXvector(SpeakerExtractor):
    def __init__(self, device: str = "cpu"):
        import torch
        from speechbrain.inference.classifiers import EncoderClassifier

        self._torch = torch
        self._model = EncoderClassifier.from_hparams(source=XVECTOR_SOURCE,
                                                     run_opts={"device": device})
        self.version = XVECTOR_SOURCE

    def embed(self, samples: np.ndarray) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            wav = torch.as_tensor(samples, dtype=torch.float32).unsqueeze(0)
            emb = self._model.encode_batch(wav)
        return emb.squeeze().cpu().numpy().astype(np.float64)


def load_frame_extractor(model_name: str, device: str = "cpu") -> FrameExtractor:
    """Instantiate a supported upstream with its default pretrained weights."""
    if model_name not in SUPPORTED_MODELS:
        raise ModelUnavailableError(_unsupported_message(model_name))
    if importlib.util.find_spec("s3prl") is None:
        raise ModelUnavailableError(
            f"model {model_name!r} needs the s3prl backend (pip install s3prl) "
            "and access to its published weights; supported models: "
            + ", ".join(SUPPORTED_MODELS))
    try:
        return _S3prlExtractor(model_name, device)
    except Exception as exc:
        raise ModelUnavailableError(
            f"could not load pretrained weights for {model_name!r}: {exc}; "
            "supported models: " + ", ".join(SUPPORTED_MODELS)) from exc


def load_speaker_extractor(device: str = "cpu") -> SpeakerExtractor:
    """Instantiate the pretrained x-vector extractor."""
    if importlib.util.find_spec("speechbrain") is None:
        raise ModelUnavailableError(
            "x-vector export needs the speechbrain backend "
            "(pip install speechbrain) and access to "
            f"{XVECTOR_SOURCE} weights")
    try:
        return _SpeechbrainXvector(device)
    except Exception as exc:
        raise ModelUnavailableError(f"could not load x-vector model: {exc}") from exc
