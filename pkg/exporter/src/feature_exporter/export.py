"""Run encoders over entity names and image files and emit the feature
file format consumed by the alignment engine.

Output layout: header ``dim<TAB>D`` then ``uri<TAB>kind<TAB>f1 ... fD``
rows, names first per entity, image rows in input order. A sidecar JSON
report (``<out>.report.json``) records every skipped input; zero
vectors are never dropped silently.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .encoders import (
    DEFAULT_IMAGE_ENCODER,
    DEFAULT_TEXT_ENCODER,
    image_encoder,
    text_encoder,
)

logger = logging.getLogger(__name__)

BATCH_SIZE = 32


@dataclass
class ExportJob:
    """One export run: entities with names, optional image files per entity."""

    entities: list[tuple[str, str]]
    images: list[tuple[str, str]] = field(default_factory=list)
    out_path: str = "features.tsv"
    target_dim: int | None = None
    text_encoder_id: str = DEFAULT_TEXT_ENCODER
    image_encoder_id: str = DEFAULT_IMAGE_ENCODER

    def validate(self) -> None:
        if not self.entities:
            raise ValueError("export job has no entities")
        uris = {u for u, _ in self.entities}
        if len(uris) != len(self.entities):
            raise ValueError("duplicate entity URIs in job")
        for uri, _ in self.images:
            if uri not in uris:
                raise ValueError(f"image row references unknown entity {uri!r}")
        if self.target_dim is not None and self.target_dim < 1:
            raise ValueError(f"target dim must be >= 1, got {self.target_dim}")


@dataclass
class ExportReport:
    n_entities: int = 0
    n_name_vectors: int = 0
    n_image_vectors: int = 0
    dim: int = 0
    skipped_images: list[dict] = field(default_factory=list)
    skipped_names: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "entities": self.n_entities,
            "name_vectors": self.n_name_vectors,
            "image_vectors": self.n_image_vectors,
            "dim": self.dim,
            "skipped_images": self.skipped_images,
            "skipped_names": self.skipped_names,
        }


def _batched(encode, items, batch=BATCH_SIZE):
    if not items:
        return None
    chunks = [encode(items[i:i + batch]) for i in range(0, len(items), batch)]
    return np.concatenate(chunks, axis=0)


def _load_images(rows: list[tuple[str, str]], report: ExportReport):
    loaded: list[tuple[str, str, Image.Image]] = []
    for uri, path in rows:
        try:
            with Image.open(path) as img:
                loaded.append((uri, path, img.convert("RGB")))
        except (OSError, UnidentifiedImageError, ValueError) as exc:
            warnings.warn(f"skipping unreadable image {path!r} for {uri}: {exc}", stacklevel=2)
            report.skipped_images.append({"entity": uri, "path": path, "reason": str(exc)})
    return loaded


def _pca_project(vectors: np.ndarray, target_dim: int) -> np.ndarray:
    from sklearn.decomposition import PCA

    if target_dim > vectors.shape[1]:
        raise ValueError(
            f"cannot project {vectors.shape[1]}-dim vectors up to {target_dim}"
        )
    if vectors.shape[0] < target_dim:
        raise ValueError(
            f"PCA to {target_dim} dims needs at least {target_dim} vectors, "
            f"got {vectors.shape[0]}"
        )
    return PCA(n_components=target_dim, random_state=0).fit_transform(vectors)


def export(job: ExportJob) -> ExportReport:
    """Encode, optionally project, and write the feature file.

    Returns the report that is also written next to the output file.
    Output row order follows the job's input order regardless of the
    encoder batching.
    """
    job.validate()
    report = ExportReport(n_entities=len(job.entities))

    names = [name for _, name in job.entities]
    name_vecs = _batched(text_encoder(job.text_encoder_id).encode, names)

    loaded = _load_images(job.images, report)
    image_vecs = _batched(image_encoder(job.image_encoder_id).encode, [img for _, _, img in loaded])

    native_dim = name_vecs.shape[1]
    if image_vecs is not None and image_vecs.shape[1] != native_dim:
        raise ValueError(
            f"text and image encoders disagree on dimension: "
            f"{native_dim} vs {image_vecs.shape[1]}; project with --dim"
        )

    rows_per_kind = [name_vecs] if image_vecs is None else [name_vecs, image_vecs]
    stacked = np.concatenate(rows_per_kind, axis=0)
    if job.target_dim is not None and job.target_dim != stacked.shape[1]:
        stacked = _pca_project(stacked, job.target_dim)
    out_dim = stacked.shape[1]
    name_out = stacked[: len(names)]
    image_out = stacked[len(names):]

    report.dim = out_dim
    lines: list[str] = [f"dim\t{out_dim}"]

    def fmt(vec: np.ndarray) -> str:
        return " ".join(repr(float(x)) for x in vec)

    image_rows_by_uri: dict[str, list[np.ndarray]] = {}
    for (uri, path, _), vec in zip(loaded, image_out):
        if np.linalg.norm(vec) == 0.0:
            warnings.warn(f"skipping zero image vector from {path!r} for {uri}", stacklevel=2)
            report.skipped_images.append({"entity": uri, "path": path, "reason": "zero vector"})
            continue
        image_rows_by_uri.setdefault(uri, []).append(vec)

    for (uri, name), vec in zip(job.entities, name_out):
        if np.linalg.norm(vec) == 0.0:
            warnings.warn(f"skipping zero name vector for {uri}", stacklevel=2)
            report.skipped_names.append({"entity": uri, "name": name, "reason": "zero vector"})
        else:
            lines.append(f"{uri}\tname\t{fmt(vec)}")
            report.n_name_vectors += 1
        for vec_img in image_rows_by_uri.get(uri, []):
            lines.append(f"{uri}\timage\t{fmt(vec_img)}")
            report.n_image_vectors += 1

    with open(job.out_path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    with open(job.out_path + ".report.json", "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
    logger.info(
        "exported %d name and %d image vectors (dim %d) to %s",
        report.n_name_vectors, report.n_image_vectors, out_dim, job.out_path,
    )
    return report


def read_entities_tsv(path: str) -> list[tuple[str, str]]:
    """Rows of ``uri<TAB>display name``."""
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'uri<TAB>name'")
            out.append((parts[0], parts[1]))
    return out


def read_images_tsv(path: str) -> list[tuple[str, str]]:
    """Rows of ``uri<TAB>image path``; several rows per entity are fine."""
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'uri<TAB>image path'")
            out.append((parts[0], parts[1]))
    return out
