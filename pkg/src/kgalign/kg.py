"""Knowledge-graph pair data model and tab-separated file ingestion.

A graph directory holds two files: ``rel_triples`` with lines
``head<TAB>relation<TAB>tail`` and ``attr_triples`` with lines
``entity<TAB>attribute<TAB>value``. Feature files carry one header line
``dim<TAB>D`` followed by ``entity<TAB>kind<TAB>f1 f2 ... fD`` records
where kind is ``name`` or ``image``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ParseError(ValueError):
    """Malformed input file; message carries file path and line number."""


class InvalidGraphError(ValueError):
    """Parsed data does not form an acceptable graph (m, r, a must all be >= 1)."""


def name_from_uri(uri: str) -> str:
    """Display name: final path segment of the URI, underscores to spaces."""
    tail = uri.rsplit("/", 1)[-1]
    tail = tail.rsplit("#", 1)[-1]
    return tail.replace("_", " ")


@dataclass
class KnowledgeGraph:
    """One side of an alignment task, with dense integer ids.

    Entity, relation and attribute ids are assigned in first-appearance
    order over the input files; the uri lists map ids back to source URIs.
    """

    ent_uris: list[str]
    rel_uris: list[str]
    attr_uris: list[str]
    rel_triples: list[tuple[int, int, int]]
    attr_triples: list[tuple[int, int, str]]
    names: list[str]
    ent_ids: dict[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self.ent_ids:
            self.ent_ids = {u: i for i, u in enumerate(self.ent_uris)}
        self.validate()

    @property
    def n_entities(self) -> int:
        return len(self.ent_uris)

    @property
    def n_relations(self) -> int:
        return len(self.rel_uris)

    @property
    def n_attributes(self) -> int:
        return len(self.attr_uris)

    def validate(self) -> None:
        m, r, a = self.n_entities, self.n_relations, self.n_attributes
        if m < 1 or r < 1 or a < 1:
            raise InvalidGraphError(
                f"graph must have at least one entity, relation and attribute "
                f"(got m={m}, r={r}, a={a})"
            )
        for h, rel, t in self.rel_triples:
            if not (0 <= h < m and 0 <= rel < r and 0 <= t < m):
                raise InvalidGraphError(f"relation triple ({h},{rel},{t}) out of range")
        for e, attr, _ in self.attr_triples:
            if not (0 <= e < m and 0 <= attr < a):
                raise InvalidGraphError(f"attribute triple ({e},{attr},...) out of range")
        if len(set(self.rel_triples)) != len(self.rel_triples):
            raise InvalidGraphError("duplicate relation triples after ingestion")
        if len(self.names) != m or len(self.ent_ids) != m:
            raise InvalidGraphError("entity id <-> uri mapping is not a bijection")


def _read_triple_lines(path: str) -> list[tuple[str, str, str]]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}"
                )
            rows.append((parts[0], parts[1], parts[2]))
    return rows


def parse_kg(rel_triples_path: str, attr_triples_path: str) -> KnowledgeGraph:
    """Ingest one knowledge graph from its relation and attribute triple files.

    Dense ids follow first-appearance order (relation file first, then the
    attribute file); duplicate triples collapse to one.
    """
    rel_rows = _read_triple_lines(rel_triples_path)
    attr_rows = _read_triple_lines(attr_triples_path)
    if not rel_rows:
        raise InvalidGraphError(f"{rel_triples_path}: no relation triples")
    if not attr_rows:
        raise InvalidGraphError(f"{attr_triples_path}: no attribute triples")

    ent_ids: dict[str, int] = {}
    rel_ids: dict[str, int] = {}
    attr_ids: dict[str, int] = {}

    def ent(uri: str) -> int:
        if uri not in ent_ids:
            ent_ids[uri] = len(ent_ids)
        return ent_ids[uri]

    rel_triples: list[tuple[int, int, int]] = []
    seen_rel = set()
    for h, r, t in rel_rows:
        if r not in rel_ids:
            rel_ids[r] = len(rel_ids)
        triple = (ent(h), rel_ids[r], ent(t))
        if triple not in seen_rel:
            seen_rel.add(triple)
            rel_triples.append(triple)

    attr_triples: list[tuple[int, int, str]] = []
    seen_attr = set()
    for e, a, v in attr_rows:
        if a not in attr_ids:
            attr_ids[a] = len(attr_ids)
        triple = (ent(e), attr_ids[a], v)
        if triple not in seen_attr:
            seen_attr.add(triple)
            attr_triples.append(triple)

    ent_uris = list(ent_ids)
    return KnowledgeGraph(
        ent_uris=ent_uris,
        rel_uris=list(rel_ids),
        attr_uris=list(attr_ids),
        rel_triples=rel_triples,
        attr_triples=attr_triples,
        names=[name_from_uri(u) for u in ent_uris],
        ent_ids=ent_ids,
    )


def write_kg(kg: KnowledgeGraph, rel_triples_path: str, attr_triples_path: str) -> None:
    """Serialize a graph back to the ingestion format (round-trips exactly)."""
    with open(rel_triples_path, "w", encoding="utf-8") as f:
        for h, r, t in kg.rel_triples:
            f.write(f"{kg.ent_uris[h]}\t{kg.rel_uris[r]}\t{kg.ent_uris[t]}\n")
    with open(attr_triples_path, "w", encoding="utf-8") as f:
        for e, a, v in kg.attr_triples:
            f.write(f"{kg.ent_uris[e]}\t{kg.attr_uris[a]}\t{v}\n")


@dataclass
class FeatureStore:
    """Precomputed per-entity feature vectors of one fixed dimension.

    ``name_vec`` maps entity id to its name vector; entities without an
    entry are name-absent (distinct from holding a zero vector).
    ``image_vecs`` holds zero or more image vectors per entity, file order.
    """

    dim: int
    name_vec: dict[int, np.ndarray]
    image_vecs: dict[int, list[np.ndarray]]

    def has_name(self, ent: int) -> bool:
        return ent in self.name_vec

    def images(self, ent: int) -> list[np.ndarray]:
        return self.image_vecs.get(ent, [])

    def name_matrix(self, n_entities: int) -> tuple[np.ndarray, np.ndarray]:
        """Dense (m, dim) name matrix with zero rows where absent, plus presence mask."""
        mat = np.zeros((n_entities, self.dim))
        mask = np.zeros(n_entities)
        for e, v in self.name_vec.items():
            mat[e] = v
            mask[e] = 1.0
        return mat, mask

    def packed_images(self, n_entities: int) -> tuple[np.ndarray, np.ndarray]:
        """Pad image vectors to (m, n_max, dim) with an (m, n_max) validity mask."""
        n_max = max((len(v) for v in self.image_vecs.values()), default=0)
        n_max = max(n_max, 1)
        packed = np.zeros((n_entities, n_max, self.dim))
        mask = np.zeros((n_entities, n_max))
        for e, vecs in self.image_vecs.items():
            for j, v in enumerate(vecs):
                packed[e, j] = v
                mask[e, j] = 1.0
        return packed, mask


def parse_features(path: str, expected_entities: KnowledgeGraph) -> FeatureStore:
    """Load a feature file for a graph; URIs must belong to the graph."""
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        parts = header.split("\t")
        if len(parts) != 2 or parts[0] != "dim":
            raise ParseError(f"{path}:1: expected header 'dim<TAB>D', got {header!r}")
        try:
            dim = int(parts[1])
        except ValueError:
            raise ParseError(f"{path}:1: dimension {parts[1]!r} is not an integer") from None
        if dim < 1:
            raise ParseError(f"{path}:1: dimension must be >= 1, got {dim}")

        name_vec: dict[int, np.ndarray] = {}
        image_vecs: dict[int, list[np.ndarray]] = {}
        for lineno, line in enumerate(f, start=2):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ParseError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}"
                )
            uri, kind, values = fields
            if uri not in expected_entities.ent_ids:
                raise ParseError(f"{path}:{lineno}: unknown entity {uri!r}")
            if kind not in ("name", "image"):
                raise ParseError(f"{path}:{lineno}: unknown kind {kind!r}")
            comps = values.split()
            if len(comps) != dim:
                raise ParseError(
                    f"{path}:{lineno}: expected {dim} components, got {len(comps)}"
                )
            try:
                vec = np.array([float(c) for c in comps])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric component") from None
            if not np.all(np.isfinite(vec)):
                raise ParseError(f"{path}:{lineno}: non-finite component")
            ent = expected_entities.ent_ids[uri]
            if kind == "name":
                name_vec[ent] = vec
            else:
                image_vecs.setdefault(ent, []).append(vec)
    return FeatureStore(dim=dim, name_vec=name_vec, image_vecs=image_vecs)


def write_features(store: FeatureStore, kg: KnowledgeGraph, path: str) -> None:
    """Serialize a feature store in entity-id order."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"dim\t{store.dim}\n")
        for e in range(kg.n_entities):
            uri = kg.ent_uris[e]
            if store.has_name(e):
                f.write(f"{uri}\tname\t{_fmt_vec(store.name_vec[e])}\n")
            for v in store.images(e):
                f.write(f"{uri}\timage\t{_fmt_vec(v)}\n")


def _fmt_vec(v: np.ndarray) -> str:
    return " ".join(repr(float(x)) for x in v)


@dataclass
class KgPair:
    """Two graphs plus their feature stores; gold links are evaluation-only."""

    kg1: KnowledgeGraph
    kg2: KnowledgeGraph
    features1: FeatureStore
    features2: FeatureStore
    gold_links: list[tuple[int, int]] | None = None

    def __post_init__(self):
        if self.features1.dim != self.features2.dim:
            raise InvalidGraphError(
                f"feature dimensions differ: {self.features1.dim} vs {self.features2.dim}"
            )
        for e1, e2 in self.gold_links or []:
            if not (0 <= e1 < self.kg1.n_entities and 0 <= e2 < self.kg2.n_entities):
                raise InvalidGraphError(f"gold link ({e1},{e2}) out of range")


def parse_gold_links(path: str, kg1: KnowledgeGraph, kg2: KnowledgeGraph) -> list[tuple[int, int]]:
    """Read an ent_links file of ``uri1<TAB>uri2`` rows into dense id pairs."""
    links = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 fields, got {len(parts)}")
            u1, u2 = parts
            if u1 not in kg1.ent_ids or u2 not in kg2.ent_ids:
                raise ParseError(f"{path}:{lineno}: link references unknown entity")
            links.append((kg1.ent_ids[u1], kg2.ent_ids[u2]))
    return links


def build_adjacency(kg: KnowledgeGraph) -> np.ndarray:
    """Symmetrically normalized adjacency with self-loops.

    Relation multiplicity collapses to 0/1 edges; the result is
    D^{-1/2} (A + I) D^{-1/2} as in the standard GCN propagation rule.
    """
    m = kg.n_entities
    a = np.zeros((m, m))
    for h, _, t in kg.rel_triples:
        a[h, t] = 1.0
        a[t, h] = 1.0
    a += np.eye(m)
    deg = a.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]
