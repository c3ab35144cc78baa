"""Probabilistic reasoning over a knowledge-graph pair.

Implements functionality-weighted equivalence propagation in the PARIS
style: relation functionalities are precomputed, lexical matching seeds
the entity-equivalence distribution, and entity-equivalence / relation-
subsumption estimates are updated alternately until a fixpoint. When an
embedding-similarity function is supplied, the equivalence estimate is
blended with clamped cosine similarity before storing.

Relations are treated as closed under inversion: every relation r also
acts through its inverse (object -> subject), whose functionality is the
inverse functionality of r. Subsumption estimates are kept for signed
relations in both cross-graph directions.
"""

from __future__ import annotations

import math
import string
from collections import defaultdict
from dataclasses import dataclass, field, replace

from .kg import KgPair, KnowledgeGraph


class NonFiniteSimilarityError(ValueError):
    """The similarity callback returned NaN or infinity for a pair."""


@dataclass(frozen=True)
class RelationStats:
    """Functionality F(r) and inverse functionality F^{-1}(r) per relation."""

    fun: dict[int, float]
    fun_inv: dict[int, float]


@dataclass(frozen=True)
class FusionConfig:
    """Blend weight for combining reasoning estimates with cosine similarity."""

    alpha: float = 0.5
    clamp_negative_cosine: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class ParisConfig:
    alpha: float = 0.5
    p_seed: float = 0.9
    epsilon: float = 0.01
    theta: float = 0.5
    tol: float = 1e-3
    max_iters: int = 10
    bootstrap_sub: float = 1.0
    decay: float = 0.95
    max_matches: int = 16

    def validate(self) -> list[str]:
        errs = []
        if not 0.0 <= self.alpha <= 1.0:
            errs.append(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 < self.p_seed <= 1.0:
            errs.append(f"p_seed must lie in (0, 1], got {self.p_seed}")
        if not 0.0 < self.epsilon < 1.0:
            errs.append(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.max_iters < 0:
            errs.append(f"max_iters must be >= 0, got {self.max_iters}")
        if not 0.0 <= self.decay < 1.0:
            errs.append(f"decay must lie in [0, 1), got {self.decay}")
        if self.max_matches < 1:
            errs.append(f"max_matches must be >= 1, got {self.max_matches}")
        return errs


@dataclass
class AlignmentState:
    """Sparse equivalence and subsumption estimates for one graph pair.

    ``ent_prob`` maps (entity1, entity2) to Pr(e1 = e2); pairs below the
    pruning floor are never stored. ``rel_sub_12`` maps signed relation
    pairs (s1, s2) to P(s1 subsumed-by s2) and ``rel_sub_21`` the reverse
    direction. Signed relation ids are ``2*r`` for the forward orientation
    and ``2*r + 1`` for the inverse.
    """

    ent_prob: dict[tuple[int, int], float] = field(default_factory=dict)
    rel_sub_12: dict[tuple[int, int], float] = field(default_factory=dict)
    rel_sub_21: dict[tuple[int, int], float] = field(default_factory=dict)
    seed_pairs: frozenset = frozenset()
    p_seed: float = 0.9
    iteration: int = 0

    def validate(self) -> None:
        for p in self.ent_prob.values():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"entity probability {p} outside [0, 1]")
        for sub in (self.rel_sub_12, self.rel_sub_21):
            for p in sub.values():
                if not 0.0 <= p <= 1.0:
                    raise ValueError(f"subsumption probability {p} outside [0, 1]")


FORWARD = 0
INVERSE = 1


def signed(rel: int, direction: int) -> int:
    return rel * 2 + direction


def compute_functionalities(kg: KnowledgeGraph) -> RelationStats:
    """F(r) = #distinct heads / #triples, F^{-1}(r) = #distinct tails / #triples."""
    heads: dict[int, set[int]] = defaultdict(set)
    tails: dict[int, set[int]] = defaultdict(set)
    counts: dict[int, int] = defaultdict(int)
    for h, r, t in kg.rel_triples:
        heads[r].add(h)
        tails[r].add(t)
        counts[r] += 1
    fun = {r: len(heads[r]) / counts[r] for r in counts}
    fun_inv = {r: len(tails[r]) / counts[r] for r in counts}
    return RelationStats(fun=fun, fun_inv=fun_inv)


_PUNCT = string.punctuation + string.whitespace


def normalize_text(s: str) -> str:
    """Case-fold, trim, collapse internal whitespace, strip edge punctuation."""
    s = " ".join(s.casefold().split())
    return s.strip(_PUNCT)


def lexical_seed(kg1: KnowledgeGraph, kg2: KnowledgeGraph, p_seed: float = 0.9) -> AlignmentState:
    """Seed equivalences from equal normalized names or shared attribute literals.

    A shared literal counts only when it occurs under attributes whose
    normalized display names match across the two graphs.
    """
    pairs: set[tuple[int, int]] = set()

    by_name: dict[str, list[int]] = defaultdict(list)
    for e, name in enumerate(kg1.names):
        key = normalize_text(name)
        if key:
            by_name[key].append(e)
    for e, name in enumerate(kg2.names):
        key = normalize_text(name)
        for e1 in by_name.get(key, ()):
            pairs.add((e1, e))

    def literal_index(kg: KnowledgeGraph) -> dict[tuple[str, str], set[int]]:
        idx: dict[tuple[str, str], set[int]] = defaultdict(set)
        attr_names = [normalize_text(kg.attr_uris[a].rsplit("/", 1)[-1].replace("_", " "))
                      for a in range(kg.n_attributes)]
        for e, a, v in kg.attr_triples:
            key = (attr_names[a], normalize_text(v))
            if key[1]:
                idx[key].add(e)
        return idx

    lit1 = literal_index(kg1)
    lit2 = literal_index(kg2)
    for key, ents1 in lit1.items():
        ents2 = lit2.get(key)
        if not ents2:
            continue
        for e1 in ents1:
            for e2 in ents2:
                pairs.add((e1, e2))

    ent_prob = {pair: p_seed for pair in sorted(pairs)}
    return AlignmentState(ent_prob=ent_prob, seed_pairs=frozenset(pairs), p_seed=p_seed)


class _SignedIndex:
    """Triple indexes over signed relations, cached per graph instance."""

    def __init__(self, kg: KnowledgeGraph):
        self.triples: dict[int, list[tuple[int, int]]] = defaultdict(list)
        self.by_object: dict[int, list[tuple[int, int]]] = defaultdict(list)
        self.pair_rels: dict[tuple[int, int], list[int]] = defaultdict(list)
        for h, r, t in kg.rel_triples:
            for s, x, y in ((signed(r, FORWARD), h, t), (signed(r, INVERSE), t, h)):
                self.triples[s].append((x, y))
                self.by_object[y].append((s, x))
                self.pair_rels[(x, y)].append(s)


def _index(kg: KnowledgeGraph) -> _SignedIndex:
    idx = kg.__dict__.get("_signed_index")
    if idx is None:
        idx = _SignedIndex(kg)
        kg.__dict__["_signed_index"] = idx
    return idx


def _signed_fun_inv(stats: RelationStats, srel: int) -> float:
    rel, direction = divmod(srel, 2)
    return stats.fun_inv[rel] if direction == FORWARD else stats.fun[rel]


def similarity_candidates(sim, n1: int, n2: int) -> set[tuple[int, int]]:
    """Best-counterpart pairs by raw similarity in both directions.

    These supplement the structural candidate set so that reasoning with
    embeddings can propose pairs even when no lexical seed exists.
    """
    best_for_row = [(-math.inf, -1)] * n1
    best_for_col = [(-math.inf, -1)] * n2
    for e1 in range(n1):
        for e2 in range(n2):
            c = float(sim(e1, e2))
            if c > best_for_row[e1][0]:
                best_for_row[e1] = (c, e2)
            if c > best_for_col[e2][0]:
                best_for_col[e2] = (c, e1)
    out = {(e1, best[1]) for e1, best in enumerate(best_for_row) if best[1] >= 0}
    out |= {(best[1], e2) for e2, best in enumerate(best_for_col) if best[1] >= 0}
    return out


def best_match_pairs(
    ent_prob: dict[tuple[int, int], float]
) -> dict[tuple[int, int], float]:
    """The evidence subset: each side's argmax pairs (ties to smaller id)."""
    best1: dict[int, tuple[float, int]] = {}
    best2: dict[int, tuple[float, int]] = {}
    for (e1, e2), p in ent_prob.items():
        cur = best1.get(e1)
        if cur is None or p > cur[0] or (p == cur[0] and e2 < cur[1]):
            best1[e1] = (p, e2)
        cur = best2.get(e2)
        if cur is None or p > cur[0] or (p == cur[0] and e1 < cur[1]):
            best2[e2] = (p, e1)
    out = {(e1, e2): p for e1, (p, e2) in best1.items()}
    for e2, (p, e1) in best2.items():
        out[(e1, e2)] = p
    return dict(sorted(out.items()))


def _signed_fun_inv_list(stats: RelationStats, n_relations: int) -> list[float]:
    out = [0.0] * (2 * n_relations)
    for r in range(n_relations):
        if r in stats.fun_inv:
            out[signed(r, FORWARD)] = stats.fun_inv[r]
            out[signed(r, INVERSE)] = stats.fun[r]
    return out


def _dense_sub(
    sub: dict[tuple[int, int], float], n_a: int, n_b: int, default: float
) -> list[list[float]]:
    rows = [[default] * n_b for _ in range(n_a)]
    for (sa, sb), p in sub.items():
        rows[sa][sb] = p
    return rows


def update_entity_probabilities(
    state: AlignmentState,
    kg1: KnowledgeGraph,
    kg2: KnowledgeGraph,
    stats1: RelationStats,
    stats2: RelationStats,
    sim=None,
    fusion: FusionConfig | None = None,
    epsilon: float = 0.01,
    bootstrap_sub: float = 1.0,
    decay: float = 0.95,
    max_matches: int = 16,
    extra_candidates: set[tuple[int, int]] | None = None,
) -> AlignmentState:
    """One batch update of all candidate entity-pair probabilities.

    For a candidate (x, x') the estimate aggregates, over every pair of
    signed triples r(x, y) and r'(x', y'), the factor
    ``(1 - P(r'<=r) F^{-1}(r) Pr(y=y')) * (1 - P(r<=r') F^{-1}(r') Pr(y=y'))``
    as a product complemented to 1. Lexically seeded pairs contribute a
    persistent extra factor (1 - p_seed). Candidates are the pairs reachable
    through a stored neighbor pair, all seeds, and (when ``sim`` is given)
    the mutual best-similarity pairs. Before any subsumption estimate
    exists, lookups fall back to ``bootstrap_sub``.

    Evidence flows through each entity's current best counterpart only
    (both sides' argmax pairs), which keeps the fixpoint from feeding on
    its own weak candidates. Stored values are revised downward at most by
    the damping factor ``decay`` per update, so unsupported estimates fade
    geometrically instead of oscillating. Values below ``epsilon`` are
    dropped, and each entity keeps at most ``max_matches`` counterparts
    per side (the strongest survive).
    """
    fusion = fusion or FusionConfig()
    idx1, idx2 = _index(kg1), _index(kg2)

    no_sub_yet = not state.rel_sub_12 and not state.rel_sub_21
    default = bootstrap_sub if no_sub_yet else 0.0
    n_s1, n_s2 = 2 * kg1.n_relations, 2 * kg2.n_relations
    sub_12 = _dense_sub(state.rel_sub_12, n_s1, n_s2, default)
    sub_21t = _dense_sub(
        {(sb, sa): p for (sa, sb), p in state.rel_sub_21.items()}, n_s1, n_s2, default
    )
    fi1 = _signed_fun_inv_list(stats1, kg1.n_relations)
    fi2 = _signed_fun_inv_list(stats2, kg2.n_relations)

    prod: dict[tuple[int, int], float] = {}
    for (y1, y2), p in best_match_pairs(state.ent_prob).items():
        in1 = idx1.by_object.get(y1)
        in2 = idx2.by_object.get(y2)
        if not in1 or not in2:
            continue
        for s1, x1 in in1:
            fi1p = fi1[s1] * p
            row12 = sub_12[s1]
            row21 = sub_21t[s1]
            for s2, x2 in in2:
                factor = (1.0 - row21[s2] * fi1p) * (1.0 - row12[s2] * fi2[s2] * p)
                key = (x1, x2)
                prod[key] = prod.get(key, 1.0) * factor

    if sim is not None and extra_candidates is None:
        extra_candidates = similarity_candidates(sim, kg1.n_entities, kg2.n_entities)

    candidates = set(prod) | state.seed_pairs | set(state.ent_prob)
    if extra_candidates:
        candidates |= extra_candidates

    new_prob: dict[tuple[int, int], float] = {}
    for pair in sorted(candidates):
        remaining = prod.get(pair, 1.0)
        if pair in state.seed_pairs:
            remaining *= 1.0 - state.p_seed
        value = 1.0 - remaining
        if sim is not None:
            c = float(sim(pair[0], pair[1]))
            if not math.isfinite(c):
                raise NonFiniteSimilarityError(f"similarity for pair {pair} is not finite")
            if fusion.clamp_negative_cosine:
                c = max(0.0, c)
            value = fusion.alpha * value + (1.0 - fusion.alpha) * c
        floor = decay * state.ent_prob.get(pair, 0.0)
        merged = value if value > floor else floor
        if merged >= epsilon:
            new_prob[pair] = merged

    if max_matches > 0:
        new_prob = _cap_matches(new_prob, max_matches)
    return replace_state(state, ent_prob=new_prob)


def _cap_matches(
    probs: dict[tuple[int, int], float], max_matches: int
) -> dict[tuple[int, int], float]:
    """Keep a pair if it ranks in the top ``max_matches`` on either side."""
    by1: dict[int, list[tuple[float, tuple[int, int]]]] = defaultdict(list)
    by2: dict[int, list[tuple[float, tuple[int, int]]]] = defaultdict(list)
    for pair, p in probs.items():
        by1[pair[0]].append((p, pair))
        by2[pair[1]].append((p, pair))
    keep: set[tuple[int, int]] = set()
    for ranked in (by1, by2):
        for entries in ranked.values():
            if len(entries) > max_matches:
                entries.sort(key=lambda t: (-t[0], t[1]))
                entries = entries[:max_matches]
            keep.update(pair for _, pair in entries)
    return {pair: probs[pair] for pair in sorted(keep)}


def update_relation_subsumption(
    state: AlignmentState, kg1: KnowledgeGraph, kg2: KnowledgeGraph
) -> AlignmentState:
    """Recompute P(r <= r') in both directions from current entity estimates.

    P(r <= r') sums, over triples (x, y) of r, one minus the product of
    ``(1 - Pr(x=x') Pr(y=y'))`` over triples (x', y') of r', normalized by
    the triple count of r. As in the entity update, only best-match pairs
    count as evidence. Pairs with no probable overlap get no entry.
    """
    idx1, idx2 = _index(kg1), _index(kg2)

    matches1: dict[int, list[tuple[int, float]]] = defaultdict(list)
    matches2: dict[int, list[tuple[int, float]]] = defaultdict(list)
    for (e1, e2), p in best_match_pairs(state.ent_prob).items():
        matches1[e1].append((e2, p))
        matches2[e2].append((e1, p))

    def direction(idx_a: _SignedIndex, idx_b: _SignedIndex, matches):
        num: dict[tuple[int, int], float] = defaultdict(float)
        for sa, triples in idx_a.triples.items():
            for x, y in triples:
                mx = matches.get(x)
                my = matches.get(y)
                if not mx or not my:
                    continue
                prods: dict[int, float] = {}
                for xb, px in mx:
                    for yb, py in my:
                        for sb in idx_b.pair_rels.get((xb, yb), ()):
                            prods[sb] = prods.get(sb, 1.0) * (1.0 - px * py)
                for sb, pr in prods.items():
                    num[(sa, sb)] += 1.0 - pr
        return {
            key: value / len(idx_a.triples[key[0]])
            for key, value in num.items()
            if value > 0.0
        }

    return replace_state(
        state,
        rel_sub_12=direction(idx1, idx2, matches1),
        rel_sub_21=direction(idx2, idx1, matches2),
    )


def replace_state(state: AlignmentState, **changes) -> AlignmentState:
    return replace(state, **changes)


def max_probability_change(
    old: dict[tuple[int, int], float], new: dict[tuple[int, int], float]
) -> float:
    delta = 0.0
    for key in old.keys() | new.keys():
        delta = max(delta, abs(new.get(key, 0.0) - old.get(key, 0.0)))
    return delta


def run_paris(pair: KgPair, config: ParisConfig, sim=None) -> AlignmentState:
    """Alternate entity and subsumption updates from lexical seeds to a fixpoint.

    Stops when the largest entity-probability change falls below
    ``config.tol`` or after ``config.max_iters`` iterations. With
    ``max_iters == 0`` the lexical seeds are returned unchanged.
    """
    errs = config.validate()
    if errs:
        raise ValueError("; ".join(errs))
    kg1, kg2 = pair.kg1, pair.kg2
    stats1 = compute_functionalities(kg1)
    stats2 = compute_functionalities(kg2)
    fusion = FusionConfig(alpha=config.alpha)
    state = lexical_seed(kg1, kg2, config.p_seed)

    extra = None
    if sim is not None:
        extra = similarity_candidates(sim, kg1.n_entities, kg2.n_entities)

    for it in range(config.max_iters):
        before = state.ent_prob
        state = update_entity_probabilities(
            state,
            kg1,
            kg2,
            stats1,
            stats2,
            sim=sim,
            fusion=fusion,
            epsilon=config.epsilon,
            bootstrap_sub=config.bootstrap_sub,
            decay=config.decay,
            max_matches=config.max_matches,
            extra_candidates=extra,
        )
        state = update_relation_subsumption(state, kg1, kg2)
        state.iteration = it + 1
        if max_probability_change(before, state.ent_prob) < config.tol:
            break
    return state


def emit_mappings(state: AlignmentState, theta: float = 0.5) -> list[tuple[int, int, float]]:
    """Greedy one-to-one selection of pairs with probability >= theta.

    Pairs are taken in descending probability, ties broken by the smaller
    (id1, id2); each entity appears at most once per side. The returned
    list is sorted by entity ids.
    """
    ranked = sorted(state.ent_prob.items(), key=lambda kv: (-kv[1], kv[0]))
    used1: set[int] = set()
    used2: set[int] = set()
    chosen = []
    for (e1, e2), p in ranked:
        if p < theta:
            break
        if e1 in used1 or e2 in used2:
            continue
        used1.add(e1)
        used2.add(e2)
        chosen.append((e1, e2, p))
    return sorted(chosen)


def write_mappings_tsv(
    mappings: list[tuple[int, int, float]],
    kg1: KnowledgeGraph,
    kg2: KnowledgeGraph,
    path: str,
) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e1, e2, p in mappings:
            f.write(f"{kg1.ent_uris[e1]}\t{kg2.ent_uris[e2]}\t{p:.6f}\n")
