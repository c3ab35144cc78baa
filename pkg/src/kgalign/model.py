"""Multi-modal entity embeddings: structure, relation/attribute counts,
names, and attention-pooled images, fused by learned modality weights.

One model is shared by both graphs of a pair; relation and attribute
vocabularies are stacked so the count encoders see a union space (graph 1
occupies the leading columns, graph 2 the trailing ones).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .kg import FeatureStore, KgPair, KnowledgeGraph, build_adjacency

N_MODALITIES = 5

PARAM_ORDER = (
    "gcn_w0",
    "gcn_w1",
    "gcn_w2",
    "w_rel",
    "b_rel",
    "w_attr",
    "b_attr",
    "w_name",
    "b_name",
    "w_img",
    "b_img",
    "modality_logits",
)


def l2_normalize_rows(x: np.ndarray) -> np.ndarray:
    """Unit-normalize rows; all-zero rows are returned unchanged."""
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.where(norms > 0.0, norms, 1.0)


def softmax(v: np.ndarray) -> np.ndarray:
    e = np.exp(v - v.max())
    return e / e.sum()


@dataclass
class CountMatrices:
    """Per-entity relation and attribute occurrence counts, log(1+c) damped.

    Relation counts include both head and tail occurrences; attribute
    counts are subject occurrences.
    """

    rel: np.ndarray
    attr: np.ndarray


def count_matrices(kg: KnowledgeGraph) -> CountMatrices:
    rel = np.zeros((kg.n_entities, kg.n_relations))
    for h, r, t in kg.rel_triples:
        rel[h, r] += 1.0
        rel[t, r] += 1.0
    attr = np.zeros((kg.n_entities, kg.n_attributes))
    for e, a, _ in kg.attr_triples:
        attr[e, a] += 1.0
    return CountMatrices(rel=np.log1p(rel), attr=np.log1p(attr))


@dataclass
class EmbeddingModel:
    """All trainable parameters. ``dim`` is the shared per-modality width."""

    gcn_w0: np.ndarray
    gcn_w1: np.ndarray
    gcn_w2: np.ndarray
    w_rel: np.ndarray
    b_rel: np.ndarray
    w_attr: np.ndarray
    b_attr: np.ndarray
    w_name: np.ndarray
    b_name: np.ndarray
    w_img: np.ndarray
    b_img: np.ndarray
    modality_logits: np.ndarray
    dim: int
    feat_dim: int

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_ORDER}

    def with_params(self, params: dict[str, np.ndarray]) -> "EmbeddingModel":
        return replace(self, **{k: v for k, v in params.items()})

    def copy(self) -> "EmbeddingModel":
        return self.with_params({k: v.copy() for k, v in self.params().items()})


def _glorot(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    bound = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-bound, bound, size=shape)


def init_model(feat_dim: int, n_rel_total: int, n_attr_total: int, dim: int, seed: int) -> EmbeddingModel:
    """Glorot-uniform initialization for every parameter, zero modality logits.

    Biases are drawn from the same uniform scheme (fan-in 1): a bias that
    starts at exactly zero would park zero-count entities on the
    normalize(0)=0 guard, where the loss is discontinuous in the bias.
    """
    rng = np.random.default_rng(seed)

    def bias(d):
        return _glorot(rng, (1, d))[0]

    return EmbeddingModel(
        gcn_w0=_glorot(rng, (feat_dim, dim)),
        gcn_w1=_glorot(rng, (dim, dim)),
        gcn_w2=_glorot(rng, (dim, dim)),
        w_rel=_glorot(rng, (n_rel_total, dim)),
        b_rel=bias(dim),
        w_attr=_glorot(rng, (n_attr_total, dim)),
        b_attr=bias(dim),
        w_name=_glorot(rng, (feat_dim, dim)),
        b_name=bias(dim),
        w_img=_glorot(rng, (feat_dim, dim)),
        b_img=bias(dim),
        modality_logits=np.zeros(N_MODALITIES),
        dim=dim,
        feat_dim=feat_dim,
    )


# ---------------------------------------------------------------------------
# Stand-alone encoder operations (plain numpy).
# ---------------------------------------------------------------------------

def gcn_forward(adjacency: np.ndarray, input_features: np.ndarray, gcn_weights) -> np.ndarray:
    """Three-layer graph convolution; last layer linear, rows unit-normalized."""
    w0, w1, w2 = gcn_weights
    if adjacency.shape[0] != input_features.shape[0] or input_features.shape[1] != w0.shape[0]:
        raise ValueError(
            f"dimension mismatch: adjacency {adjacency.shape}, "
            f"features {input_features.shape}, w0 {w0.shape}"
        )
    h = np.maximum((adjacency @ input_features) @ w0, 0.0)
    h = np.maximum((adjacency @ h) @ w1, 0.0)
    h = (adjacency @ h) @ w2
    return l2_normalize_rows(h)


def encode_counts(counts: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise affine map of a count matrix, rows unit-normalized."""
    if counts.shape[1] != w.shape[0]:
        raise ValueError(f"dimension mismatch: counts {counts.shape} vs weights {w.shape}")
    return l2_normalize_rows(counts @ w + b)


def image_attention(
    f_struct_row: np.ndarray,
    image_vecs: list[np.ndarray],
    w_img: np.ndarray,
    b_img: np.ndarray,
) -> np.ndarray:
    """Softmax-pool an entity's projected images, steered by its structure row."""
    d = w_img.shape[1]
    if not image_vecs:
        return np.zeros(d)
    proj = np.stack(image_vecs) @ w_img + b_img
    logits = proj @ f_struct_row
    weights = softmax(logits)
    return l2_normalize_rows(weights @ proj)


def fuse(parts: list[np.ndarray], modality_logits: np.ndarray) -> np.ndarray:
    """Concatenate softmax-weighted modality blocks, rows unit-normalized."""
    w = softmax(modality_logits)
    fused = np.concatenate([w[k] * p for k, p in enumerate(parts)], axis=1)
    return l2_normalize_rows(fused)


# ---------------------------------------------------------------------------
# Full forward pass (differentiable graph).
# ---------------------------------------------------------------------------

@dataclass
class GraphInputs:
    """Frozen per-graph tensors consumed by the forward pass."""

    adjacency: np.ndarray
    gcn_x: np.ndarray
    rel_counts: np.ndarray
    attr_counts: np.ndarray
    name_mat: np.ndarray
    name_mask: np.ndarray
    images: np.ndarray
    image_mask: np.ndarray


def prepare_inputs(
    kg: KnowledgeGraph,
    features: FeatureStore,
    rel_offset: int = 0,
    rel_total: int | None = None,
    attr_offset: int = 0,
    attr_total: int | None = None,
) -> GraphInputs:
    rel_total = rel_total if rel_total is not None else kg.n_relations
    attr_total = attr_total if attr_total is not None else kg.n_attributes
    counts = count_matrices(kg)
    rel = np.zeros((kg.n_entities, rel_total))
    rel[:, rel_offset:rel_offset + kg.n_relations] = counts.rel
    attr = np.zeros((kg.n_entities, attr_total))
    attr[:, attr_offset:attr_offset + kg.n_attributes] = counts.attr
    name_mat, name_mask = features.name_matrix(kg.n_entities)
    images, image_mask = features.packed_images(kg.n_entities)
    return GraphInputs(
        adjacency=build_adjacency(kg),
        gcn_x=name_mat,
        rel_counts=rel,
        attr_counts=attr,
        name_mat=name_mat,
        name_mask=name_mask,
        images=images,
        image_mask=image_mask,
    )


def build_fused(inputs: GraphInputs, nodes: dict[str, ad.Node]) -> dict[str, ad.Node]:
    """Differentiable forward pass; returns per-modality and fused nodes."""
    adj = ad.leaf(inputs.adjacency, "adjacency")
    x = ad.leaf(inputs.gcn_x, "gcn_x")
    h = ad.relu(ad.matmul(ad.matmul(adj, x), nodes["gcn_w0"]))
    h = ad.relu(ad.matmul(ad.matmul(adj, h), nodes["gcn_w1"]))
    h = ad.matmul(ad.matmul(adj, h), nodes["gcn_w2"])
    f_struct = ad.row_normalize(h)

    f_rel = ad.row_normalize(
        ad.add_bias(ad.matmul(ad.leaf(inputs.rel_counts, "rel_counts"), nodes["w_rel"]), nodes["b_rel"])
    )
    f_attr = ad.row_normalize(
        ad.add_bias(ad.matmul(ad.leaf(inputs.attr_counts, "attr_counts"), nodes["w_attr"]), nodes["b_attr"])
    )
    f_name = ad.row_normalize(
        ad.mask_rows(
            ad.add_bias(ad.matmul(ad.leaf(inputs.name_mat, "names"), nodes["w_name"]), nodes["b_name"]),
            inputs.name_mask,
        )
    )
    proj = ad.add_bias(ad.project_images(ad.leaf(inputs.images, "images"), nodes["w_img"]), nodes["b_img"])
    f_img = ad.row_normalize(ad.attention_pool(f_struct, proj, inputs.image_mask))

    weights = ad.softmax_vec(nodes["modality_logits"])
    fused = ad.row_normalize(ad.weighted_concat([f_struct, f_rel, f_attr, f_name, f_img], weights))
    return {
        "f_struct": f_struct,
        "f_rel": f_rel,
        "f_attr": f_attr,
        "f_name": f_name,
        "f_img": f_img,
        "fused": fused,
    }


@dataclass
class ModalityBundle:
    """Per-entity modality embeddings plus their weighted fusion."""

    f_struct: np.ndarray
    f_rel: np.ndarray
    f_attr: np.ndarray
    f_name: np.ndarray
    f_img: np.ndarray
    fused: np.ndarray


def param_nodes(model: EmbeddingModel) -> dict[str, ad.Node]:
    return {name: ad.leaf(value, name) for name, value in model.params().items()}


def embed_all(
    kg: KnowledgeGraph,
    features: FeatureStore,
    model: EmbeddingModel,
    rel_offset: int = 0,
    rel_total: int | None = None,
    attr_offset: int = 0,
    attr_total: int | None = None,
) -> ModalityBundle:
    """Run the full forward pass for one graph and return plain arrays."""
    rel_total = rel_total if rel_total is not None else model.w_rel.shape[0]
    attr_total = attr_total if attr_total is not None else model.w_attr.shape[0]
    inputs = prepare_inputs(kg, features, rel_offset, rel_total, attr_offset, attr_total)
    out = build_fused(inputs, param_nodes(model))
    return ModalityBundle(
        f_struct=out["f_struct"].value,
        f_rel=out["f_rel"].value,
        f_attr=out["f_attr"].value,
        f_name=out["f_name"].value,
        f_img=out["f_img"].value,
        fused=out["fused"].value,
    )


def pair_inputs(pair: KgPair) -> tuple[GraphInputs, GraphInputs]:
    """Inputs for both graphs over the stacked relation/attribute spaces."""
    r1, r2 = pair.kg1.n_relations, pair.kg2.n_relations
    a1, a2 = pair.kg1.n_attributes, pair.kg2.n_attributes
    in1 = prepare_inputs(pair.kg1, pair.features1, 0, r1 + r2, 0, a1 + a2)
    in2 = prepare_inputs(pair.kg2, pair.features2, r1, r1 + r2, a1, a1 + a2)
    return in1, in2


def init_model_for_pair(pair: KgPair, dim: int, seed: int) -> EmbeddingModel:
    return init_model(
        feat_dim=pair.features1.dim,
        n_rel_total=pair.kg1.n_relations + pair.kg2.n_relations,
        n_attr_total=pair.kg1.n_attributes + pair.kg2.n_attributes,
        dim=dim,
        seed=seed,
    )


def embed_pair(pair: KgPair, model: EmbeddingModel) -> tuple[ModalityBundle, ModalityBundle]:
    r1 = pair.kg1.n_relations
    a1 = pair.kg1.n_attributes
    b1 = embed_all(pair.kg1, pair.features1, model)
    b2 = embed_all(pair.kg2, pair.features2, model, rel_offset=r1, attr_offset=a1)
    return b1, b2


# ---------------------------------------------------------------------------
# Serialization: magic, dims, then little-endian float32 tensors in
# PARAM_ORDER (see README for the exact layout).
# ---------------------------------------------------------------------------

MAGIC = b"KGALNMD1"


def save_model(model: EmbeddingModel, path: str) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack(
            "<IIII",
            model.feat_dim,
            model.dim,
            model.w_rel.shape[0],
            model.w_attr.shape[0],
        ))
        for name in PARAM_ORDER:
            f.write(np.ascontiguousarray(getattr(model, name), dtype="<f4").tobytes())


def load_model(path: str) -> EmbeddingModel:
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a model file (bad magic {magic!r})")
        feat_dim, dim, n_rel, n_attr = struct.unpack("<IIII", f.read(16))
        shapes = {
            "gcn_w0": (feat_dim, dim),
            "gcn_w1": (dim, dim),
            "gcn_w2": (dim, dim),
            "w_rel": (n_rel, dim),
            "b_rel": (dim,),
            "w_attr": (n_attr, dim),
            "b_attr": (dim,),
            "w_name": (feat_dim, dim),
            "b_name": (dim,),
            "w_img": (feat_dim, dim),
            "b_img": (dim,),
            "modality_logits": (N_MODALITIES,),
        }
        params = {}
        for name in PARAM_ORDER:
            shape = shapes[name]
            n = int(np.prod(shape))
            buf = f.read(4 * n)
            if len(buf) != 4 * n:
                raise ValueError(f"{path}: truncated tensor {name}")
            params[name] = np.frombuffer(buf, dtype="<f4").astype(float).reshape(shape)
    return EmbeddingModel(**params, dim=dim, feat_dim=feat_dim)
