"""Text and image encoders, selected by id.

The default ids are pretrained multilingual-BERT (names, mean pooling of
final-layer token vectors) and CLIP (images); both load lazily through
``transformers`` and require the optional ``encoders`` extra plus local
model assets. The ``hash-text`` / ``hash-image`` encoders are
deterministic, dependency-free stand-ins used by the tests and useful
for plumbing checks.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

DEFAULT_TEXT_ENCODER = "bert-base-multilingual-cased"
DEFAULT_IMAGE_ENCODER = "openai/clip-vit-base-patch32"

HASH_DIM = 64


class EncoderUnavailableError(RuntimeError):
    """The requested encoder id needs assets or extras that are missing."""


def _hash_vector(payload: bytes) -> np.ndarray:
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    vec = rng.standard_normal(HASH_DIM)
    return vec / np.linalg.norm(vec)


class HashTextEncoder:
    dim = HASH_DIM

    def encode(self, texts: list[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim))
        return np.stack([_hash_vector(t.encode("utf-8")) for t in texts])


class HashImageEncoder:
    """Grayscale 8x8 thumbnail, mean-centered. Identical images map to
    identical vectors; solid-color images become zero vectors (callers
    must handle those explicitly)."""

    dim = HASH_DIM

    def encode(self, images: list[Image.Image]) -> np.ndarray:
        if not images:
            return np.zeros((0, self.dim))
        rows = []
        for img in images:
            small = np.asarray(img.convert("L").resize((8, 8)), dtype=float).ravel()
            small = small - small.mean()
            norm = np.linalg.norm(small)
            rows.append(small / norm if norm > 0 else small)
        return np.stack(rows)


class TransformerTextEncoder:
    """Mean pooling of final-layer token vectors, attention-masked."""

    def __init__(self, model_id: str):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise EncoderUnavailableError(
                f"text encoder {model_id!r} needs the 'encoders' extra (transformers, torch)"
            ) from exc
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_id)
            self.model = AutoModel.from_pretrained(model_id)
        except Exception as exc:
            raise EncoderUnavailableError(f"cannot load text encoder {model_id!r}: {exc}") from exc
        self.model.eval()
        self._torch = torch
        self.dim = int(self.model.config.hidden_size)

    def encode(self, texts: list[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim))
        torch = self._torch
        with torch.no_grad():
            batch = self.tokenizer(texts, padding=True, truncation=True, return_tensors="pt")
            hidden = self.model(**batch).last_hidden_state
            mask = batch["attention_mask"].unsqueeze(-1).float()
            pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)
        return pooled.cpu().numpy().astype(float)


class ClipImageEncoder:
    def __init__(self, model_id: str):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise EncoderUnavailableError(
                f"image encoder {model_id!r} needs the 'encoders' extra (transformers, torch)"
            ) from exc
        try:
            self.processor = CLIPProcessor.from_pretrained(model_id)
            self.model = CLIPModel.from_pretrained(model_id)
        except Exception as exc:
            raise EncoderUnavailableError(f"cannot load image encoder {model_id!r}: {exc}") from exc
        self.model.eval()
        self._torch = torch
        self.dim = int(self.model.config.projection_dim)

    def encode(self, images: list[Image.Image]) -> np.ndarray:
        if not images:
            return np.zeros((0, self.dim))
        torch = self._torch
        with torch.no_grad():
            batch = self.processor(images=images, return_tensors="pt")
            feats = self.model.get_image_features(**batch)
        return feats.cpu().numpy().astype(float)


def text_encoder(encoder_id: str):
    if encoder_id == "hash-text":
        return HashTextEncoder()
    return TransformerTextEncoder(encoder_id)


def image_encoder(encoder_id: str):
    if encoder_id == "hash-image":
        return HashImageEncoder()
    return ClipImageEncoder(encoder_id)
