"""Tagging and encoding backends.

The "stub" backend is fully deterministic and needs no model weights:
it tags images by simple visual statistics (dominant channel,
brightness, aspect, saturation) and embeds both images and texts as
indicator vectors over that same tag vocabulary, so matching image/text
pairs score higher than mismatched ones. It exists so the file contract
can be exercised anywhere; real runs use the CLIP backend.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

# Shared stub vocabulary; image and text embeddings are indicators over it.
STUB_VOCABULARY = (
    "red",
    "green",
    "blue",
    "gray",
    "bright",
    "dark",
    "saturated",
    "muted",
    "wide",
    "tall",
    "square",
    "busy",
    "plain",
)

# Stub analog of a tagger confidence threshold; recorded in manifests.
STUB_THRESHOLD = 0.5


class StubTagger:
    """Deterministic tags from pixel statistics."""

    model_id = "stub"
    threshold = STUB_THRESHOLD

    def tag_image(self, image: Image.Image) -> list[str]:
        rgb = np.asarray(image.convert("RGB"), dtype=np.float64) / 255.0
        mean = rgb.mean(axis=(0, 1))
        tags = []
        spread = mean.max() - mean.min()
        if spread < 0.08:
            tags.append("gray")
        else:
            tags.append(("red", "green", "blue")[int(mean.argmax())])
        brightness = mean.mean()
        tags.append("bright" if brightness >= STUB_THRESHOLD else "dark")
        tags.append("saturated" if spread >= 0.25 else "muted")
        w, h = image.size
        if w > 1.2 * h:
            tags.append("wide")
        elif h > 1.2 * w:
            tags.append("tall")
        else:
            tags.append("square")
        tags.append("busy" if rgb.std() >= 0.18 else "plain")
        return tags


class StubEncoder:
    """Indicator embeddings over the stub vocabulary, unit-normalized."""

    model_id = "stub"

    def __init__(self):
        self._tagger = StubTagger()
        self._column = {tag: i for i, tag in enumerate(STUB_VOCABULARY)}

    @property
    def dimension(self) -> int:
        return len(STUB_VOCABULARY)

    def _indicator(self, tags) -> np.ndarray:
        vec = np.zeros(self.dimension)
        for tag in tags:
            if tag in self._column:
                vec[self._column[tag]] = 1.0
        if not vec.any():
            vec[-1] = 1.0  # stable non-zero fallback
        return vec / np.linalg.norm(vec)

    def embed_image(self, image: Image.Image) -> np.ndarray:
        return self._indicator(self._tagger.tag_image(image))

    def embed_text(self, text: str) -> np.ndarray:
        words = text.replace(":", " ").replace("+", " ").lower().split()
        return self._indicator(words)


class ClipEncoder:
    """Vision-language encoder backed by a transformers CLIP checkpoint."""

    def __init__(self, model_id: str, device: str = "cpu"):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise BackendUnavailable(
                f"encoder {model_id!r} needs the 'clip' extra (torch + transformers)"
            ) from exc
        try:
            self._model = CLIPModel.from_pretrained(model_id).to(device).eval()
            self._processor = CLIPProcessor.from_pretrained(model_id)
        except Exception as exc:
            raise BackendUnavailable(f"could not load {model_id!r}: {exc}") from exc
        self._torch = torch
        self.model_id = model_id
        self.device = device
        self.dimension = self._model.config.projection_dim

    def embed_image(self, image: Image.Image) -> np.ndarray:
        inputs = self._processor(images=image, return_tensors="pt").to(self.device)
        with self._torch.no_grad():
            features = self._model.get_image_features(**inputs)[0]
        vec = features.cpu().numpy().astype(np.float64)
        return vec / np.linalg.norm(vec)

    def embed_text(self, text: str) -> np.ndarray:
        inputs = self._processor(
            text=[text], return_tensors="pt", padding=True, truncation=True
        ).to(self.device)
        with self._torch.no_grad():
            features = self._model.get_text_features(**inputs)[0]
        vec = features.cpu().numpy().astype(np.float64)
        return vec / np.linalg.norm(vec)


class BackendUnavailable(RuntimeError):
    """The requested model cannot be loaded in this environment."""


def load_tagger(model_id: str):
    if model_id == "stub":
        return StubTagger()
    raise BackendUnavailable(
        f"tagging model {model_id!r} is not bundled; point the bridge at a "
        "deployed tagger or use 'stub'"
    )


def load_encoder(model_id: str, device: str = "cpu"):
    if model_id == "stub":
        return StubEncoder()
    return ClipEncoder(model_id, device=device)
