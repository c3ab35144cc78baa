import numpy as np
import pytest

from kgalign.kg import FeatureStore, KgPair, parse_kg


def write_lines(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write("\t".join(row) + "\n")


def make_kg(tmp_path, rel_rows, attr_rows, tag="g"):
    rel = tmp_path / f"rel_{tag}"
    attr = tmp_path / f"attr_{tag}"
    write_lines(rel, rel_rows)
    write_lines(attr, attr_rows)
    return parse_kg(str(rel), str(attr))


def uri(host, name):
    return f"http://{host}/resource/{name}"


def chain_pair(tmp_path, n=5, matching_names=("Head",)):
    """Two isomorphic chains; entities listed in matching_names share names."""

    def rows(host, suffix):
        names = []
        for i in range(n):
            base = f"N{i}"
            names.append(base if base in matching_names or (i == 0 and "Head" in matching_names) else f"{base}{suffix}")
        names[0] = "Head" if "Head" in matching_names else f"Head{suffix}"
        uris = [uri(host, s) for s in names]
        rel = [(uris[i], f"http://{host}/relation/next", uris[i + 1]) for i in range(n - 1)]
        attr = [(uris[i], f"http://{host}/attribute/idx", f"val {host} {i}") for i in range(n)]
        return rel, attr

    rel1, attr1 = rows("one.org", "a")
    rel2, attr2 = rows("two.org", "b")
    kg1 = make_kg(tmp_path, rel1, attr1, tag="c1")
    kg2 = make_kg(tmp_path, rel2, attr2, tag="c2")
    empty = FeatureStore(dim=1, name_vec={}, image_vecs={})
    return KgPair(kg1=kg1, kg2=kg2, features1=empty, features2=empty)


def random_small_pair(tmp_path, rng, n1=None, n2=None, tag=""):
    """A random graph pair for oracle-equivalence checks (<= 8 entities/side)."""
    n1 = n1 or int(rng.integers(2, 9))
    n2 = n2 or int(rng.integers(2, 9))
    n_rel = int(rng.integers(1, 4))

    def build(host, n, tag2, share):
        names = [f"E{i}" if i in share else f"E{i}{tag2}" for i in range(n)]
        uris = [uri(host, s) for s in names]
        n_edges = int(rng.integers(1, max(2, n * 2)))
        rel_rows = []
        for _ in range(n_edges):
            h, t = int(rng.integers(0, n)), int(rng.integers(0, n))
            r = int(rng.integers(0, n_rel))
            rel_rows.append((uris[h], f"http://{host}/relation/r{r}", uris[t]))
        attr_rows = [(uris[i], f"http://{host}/attribute/a0", f"lit {i}{tag2}") for i in range(n)]
        return rel_rows, attr_rows

    n_shared = int(rng.integers(0, min(n1, n2) + 1))
    share = set(int(i) for i in rng.permutation(min(n1, n2))[:n_shared])
    rel1, attr1 = build("one.org", n1, "x", share)
    rel2, attr2 = build("two.org", n2, "y", share)
    kg1 = make_kg(tmp_path, rel1, attr1, tag=f"r1{tag}")
    kg2 = make_kg(tmp_path, rel2, attr2, tag=f"r2{tag}")
    empty = FeatureStore(dim=1, name_vec={}, image_vecs={})
    return KgPair(kg1=kg1, kg2=kg2, features1=empty, features2=empty)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
