"""Deterministic generator of aligned knowledge-graph pair fixtures.

Builds a random graph, copies it isomorphically under fresh URIs, and
emits per-entity feature vectors drawn from shared ground vectors with
controllable gaussian noise, so alignment quality degrades smoothly with
the noise level. All outputs are written in the ingestion formats and
parsed back, which guarantees round-tripping.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from .kg import (
    FeatureStore,
    KgPair,
    parse_features,
    parse_gold_links,
    parse_kg,
)


@dataclass(frozen=True)
class SynthSpec:
    n_entities: int = 50
    n_relations: int = 3
    n_attributes: int = 2
    avg_degree: float = 4.0
    name_overlap_ratio: float = 0.5
    feature_noise_sigma: float = 0.1
    images_per_entity: int = 3
    seed: int = 0
    feat_dim: int = 32
    powerlaw: bool = False

    def validate(self) -> list[str]:
        errs = []
        if self.n_entities < 1 or self.n_relations < 1 or self.n_attributes < 1:
            errs.append("entity, relation and attribute counts must be >= 1")
        if not 0.0 <= self.name_overlap_ratio <= 1.0:
            errs.append(f"name_overlap_ratio must lie in [0, 1], got {self.name_overlap_ratio}")
        if self.feature_noise_sigma < 0.0:
            errs.append(f"feature_noise_sigma must be >= 0, got {self.feature_noise_sigma}")
        if self.images_per_entity < 1:
            errs.append(f"images_per_entity must be >= 1, got {self.images_per_entity}")
        if self.feat_dim < 1:
            errs.append(f"feat_dim must be >= 1, got {self.feat_dim}")
        return errs


class DegreeInfeasibleError(ValueError):
    """Requested average degree cannot be met with distinct edges."""


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def _sample_edges(spec: SynthSpec, rng: np.random.Generator) -> list[tuple[int, int]]:
    n = spec.n_entities
    n_edges = int(round(n * spec.avg_degree / 2.0))
    if n < 2 or n_edges < 1 or n_edges > n * (n - 1):
        raise DegreeInfeasibleError(
            f"cannot place {n_edges} distinct directed edges among {n} entities"
        )
    if spec.powerlaw:
        # Long-tailed target popularity: early entities act as hubs.
        weights = 1.0 / np.arange(1, n + 1)
        weights /= weights.sum()
        edges: set[tuple[int, int]] = set()
        while len(edges) < n_edges:
            h = int(rng.integers(0, n))
            t = int(rng.choice(n, p=weights))
            if h != t:
                edges.add((h, t))
        return sorted(edges)
    flat = rng.choice(n * (n - 1), size=n_edges, replace=False)
    out = []
    for idx in flat:
        h, rem = divmod(int(idx), n - 1)
        t = rem if rem < h else rem + 1
        out.append((h, t))
    return out


def _noisy(base: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma == 0.0:
        return base.copy()
    return _unit_rows(base + sigma * rng.standard_normal(base.shape))


def generate(spec: SynthSpec, out_dir: str) -> KgPair:
    """Write a fixture directory and return the parsed pair with gold links.

    Layout: ``kg1/rel_triples``, ``kg1/attr_triples``, the same under
    ``kg2/``, ``ent_links``, ``features1.tsv``, ``features2.tsv``.
    """
    errs = spec.validate()
    if errs:
        raise ValueError("; ".join(errs))
    rng = np.random.default_rng(spec.seed)
    n = spec.n_entities

    edges = _sample_edges(spec, rng)
    rels = [i % spec.n_relations if i < spec.n_relations else int(rng.integers(0, spec.n_relations))
            for i in range(len(edges))]

    n_overlap = int(round(spec.name_overlap_ratio * n))
    overlap = set(int(i) for i in rng.permutation(n)[:n_overlap])

    names1 = [f"Item_{i:05d}" for i in range(n)]
    names2 = [names1[i] if i in overlap else f"Node_{i:05d}_alt" for i in range(n)]
    uris1 = [f"http://one.example.org/resource/{s}" for s in names1]
    uris2 = [f"http://two.example.org/resource/{s}" for s in names2]
    rel_uris1 = [f"http://one.example.org/relation/rel_{j}" for j in range(spec.n_relations)]
    rel_uris2 = [f"http://two.example.org/relation/rel_{j}" for j in range(spec.n_relations)]
    attr_uris1 = [f"http://one.example.org/attribute/code_{j}" for j in range(spec.n_attributes)]
    attr_uris2 = [f"http://two.example.org/attribute/code_{j}" for j in range(spec.n_attributes)]

    rel_rows1 = [(uris1[h], rel_uris1[r], uris1[t]) for (h, t), r in zip(edges, rels)]
    rel_rows2 = [(uris2[h], rel_uris2[r], uris2[t]) for (h, t), r in zip(edges, rels)]
    attr_rows1 = [(uris1[i], attr_uris1[i % spec.n_attributes], f"value {i:05d}") for i in range(n)]
    attr_rows2 = [
        (uris2[i], attr_uris2[i % spec.n_attributes],
         f"value {i:05d}" if i in overlap else f"value {i:05d} alt")
        for i in range(n)
    ]
    order2 = rng.permutation(len(rel_rows2))
    rel_rows2 = [rel_rows2[int(i)] for i in order2]

    ground_names = _unit_rows(rng.standard_normal((n, spec.feat_dim)))
    ground_images = _unit_rows(rng.standard_normal((n, spec.images_per_entity, spec.feat_dim)))
    names_a = _noisy(ground_names, spec.feature_noise_sigma, rng)
    names_b = _noisy(ground_names, spec.feature_noise_sigma, rng)
    imgs_a = _noisy(ground_images, spec.feature_noise_sigma, rng)
    imgs_b = _noisy(ground_images, spec.feature_noise_sigma, rng)

    os.makedirs(os.path.join(out_dir, "kg1"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "kg2"), exist_ok=True)

    def write_rows(path, rows):
        with open(path, "w", encoding="utf-8") as f:
            for row in rows:
                f.write("\t".join(row) + "\n")

    write_rows(os.path.join(out_dir, "kg1", "rel_triples"), rel_rows1)
    write_rows(os.path.join(out_dir, "kg1", "attr_triples"), attr_rows1)
    write_rows(os.path.join(out_dir, "kg2", "rel_triples"), rel_rows2)
    write_rows(os.path.join(out_dir, "kg2", "attr_triples"), attr_rows2)
    write_rows(os.path.join(out_dir, "ent_links"), [(uris1[i], uris2[i]) for i in range(n)])

    def write_feature_file(path, uris, name_mat, image_tensor):
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"dim\t{spec.feat_dim}\n")
            for i, uri in enumerate(uris):
                f.write(f"{uri}\tname\t" + " ".join(repr(float(x)) for x in name_mat[i]) + "\n")
                for j in range(image_tensor.shape[1]):
                    f.write(f"{uri}\timage\t" + " ".join(repr(float(x)) for x in image_tensor[i, j]) + "\n")

    write_feature_file(os.path.join(out_dir, "features1.tsv"), uris1, names_a, imgs_a)
    write_feature_file(os.path.join(out_dir, "features2.tsv"), uris2, names_b, imgs_b)

    return load_pair_dir(out_dir)


def load_pair_dir(root: str) -> KgPair:
    """Load a fixture directory produced by :func:`generate`."""
    kg1 = parse_kg(os.path.join(root, "kg1", "rel_triples"), os.path.join(root, "kg1", "attr_triples"))
    kg2 = parse_kg(os.path.join(root, "kg2", "rel_triples"), os.path.join(root, "kg2", "attr_triples"))
    features1 = parse_features(os.path.join(root, "features1.tsv"), kg1)
    features2 = parse_features(os.path.join(root, "features2.tsv"), kg2)
    gold_path = os.path.join(root, "ent_links")
    gold = parse_gold_links(gold_path, kg1, kg2) if os.path.exists(gold_path) else None
    return KgPair(kg1=kg1, kg2=kg2, features1=features1, features2=features2, gold_links=gold)


def strip_images(store: FeatureStore, keep: int) -> FeatureStore:
    """Keep only the first ``keep`` image vectors per entity (ablation aid)."""
    return FeatureStore(
        dim=store.dim,
        name_vec=dict(store.name_vec),
        image_vecs={e: v[:keep] for e, v in store.image_vecs.items() if v[:keep]},
    )


def with_images_stripped(pair: KgPair, keep: int) -> KgPair:
    return replace(
        pair,
        features1=strip_images(pair.features1, keep),
        features2=strip_images(pair.features2, keep),
    )
