"""Sum-product network model: representation, validation, JSON
serialization, plaintext log2-domain inference, and random RAT-style
structure generation.

The reference evaluator deliberately mirrors the circuit compiler's
operation ordering (per-child weight add, exp2, balanced addition tree,
log2) rather than using a max-shifted log-sum-exp, so that comparing
plain and secure results isolates circuit approximation error.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

WEIGHT_TOL = 1e-9


class SpnError(ValueError):
    """Domain-level problem with a graph, evidence, or config."""


class SpnFormatError(SpnError):
    """Unparseable or structurally invalid document."""


@dataclass(frozen=True)
class Gaussian:
    mu: float
    sigma2: float

    def __post_init__(self):
        if not (self.sigma2 > 0):
            raise SpnError("gaussian needs sigma2 > 0")


@dataclass(frozen=True)
class Poisson:
    lam: float

    def __post_init__(self):
        if not (self.lam > 0):
            raise SpnError("poisson needs lambda > 0")


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise SpnError("bernoulli needs p in [0, 1]")


LeafDist = Union[Gaussian, Poisson, Bernoulli]

FAMILY_OF = {Gaussian: "gauss", Poisson: "pois", Bernoulli: "bern"}


@dataclass(frozen=True)
class SumNode:
    children: tuple
    weights: tuple


@dataclass(frozen=True)
class ProductNode:
    children: tuple


@dataclass(frozen=True)
class LeafNode:
    rv: int
    dist: LeafDist


Node = Union[SumNode, ProductNode, LeafNode]


@dataclass(frozen=True)
class SpnGraph:
    nodes: tuple
    root: int
    num_rvs: int
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def family(self) -> str:
        for nd in self.nodes:
            if isinstance(nd, LeafNode):
                return FAMILY_OF[type(nd.dist)]
        raise SpnError("graph has no leaves")

    def counts(self) -> dict:
        c = {"sum": 0, "prod": 0, "leaf": 0}
        for nd in self.nodes:
            c[_node_kind(nd)] += 1
        return c


@dataclass(frozen=True)
class Evidence:
    values: tuple

    @staticmethod
    def of(values: Sequence) -> "Evidence":
        return Evidence(tuple(values))


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    violations: tuple

    def __str__(self):
        if self.valid:
            return "valid"
        return "\n".join(
            f"node {n}: {rule}: {msg}" for n, rule, msg in self.violations)


@dataclass(frozen=True)
class RatSpnConfig:
    num_rvs: int
    split_depth: int
    num_replicas: int
    sums_per_region: int
    leaves_per_rv: int
    seed: int

    def __post_init__(self):
        if self.split_depth < 1:
            raise SpnError("split_depth must be >= 1")
        if 2 ** self.split_depth > self.num_rvs:
            raise SpnError("2^split_depth must not exceed num_rvs")
        if min(self.num_replicas, self.sums_per_region, self.leaves_per_rv) < 1:
            raise SpnError("replicas, sums and leaves must be >= 1")


def _node_kind(nd: Node) -> str:
    if isinstance(nd, SumNode):
        return "sum"
    if isinstance(nd, ProductNode):
        return "prod"
    return "leaf"


# -- validation ---------------------------------------------------------


def topo_order(spn: SpnGraph) -> list:
    """Children-before-parents order over nodes reachable from the root.
    Raises on cycles; unreachable nodes simply do not appear."""
    order, state = [], {}
    stack = [(spn.root, False)]
    while stack:
        idx, done = stack.pop()
        if done:
            state[idx] = 2
            order.append(idx)
            continue
        if state.get(idx) == 1:
            raise SpnError("cycle through node %d" % idx)
        if state.get(idx) == 2:
            continue
        state[idx] = 1
        stack.append((idx, True))
        nd = spn.nodes[idx]
        if not isinstance(nd, LeafNode):
            for ch in reversed(nd.children):
                if state.get(ch) != 1:
                    stack.append((ch, False))
                else:
                    raise SpnError("cycle through node %d" % ch)
    return order


def validate(spn: SpnGraph) -> ValidationReport:
    v = []
    n = len(spn.nodes)
    if not (0 <= spn.root < n):
        return ValidationReport(False, ((spn.root, "root", "root index out of range"),))
    for i, nd in enumerate(spn.nodes):
        if isinstance(nd, LeafNode):
            if not (0 <= nd.rv < spn.num_rvs):
                v.append((i, "leaf", f"rv {nd.rv} out of range"))
            continue
        if not nd.children:
            v.append((i, "children", "inner node with no children"))
        for ch in nd.children:
            if not (0 <= ch < n):
                v.append((i, "children", f"child {ch} out of range"))
        if isinstance(nd, SumNode):
            if len(nd.weights) != len(nd.children):
                v.append((i, "weights", "weight/child count mismatch"))
            elif any(w < 0 or not math.isfinite(w) for w in nd.weights):
                v.append((i, "weights", "negative or non-finite weight"))
            elif abs(math.fsum(nd.weights) - 1.0) > WEIGHT_TOL:
                v.append((i, "weights",
                          f"weights sum to {math.fsum(nd.weights)!r}, not 1"))
    if v:
        return ValidationReport(False, tuple(v))

    try:
        order = topo_order(spn)
    except SpnError as e:
        return ValidationReport(False, ((spn.root, "acyclic", str(e)),))
    reached = set(order)
    for i in range(n):
        if i not in reached:
            v.append((i, "reachable", "node not reachable from root"))

    families = {FAMILY_OF[type(nd.dist)]
                for nd in spn.nodes if isinstance(nd, LeafNode)}
    if len(families) > 1:
        v.append((spn.root, "homogeneous",
                  f"mixed leaf families {sorted(families)}"))
    if not families:
        v.append((spn.root, "homogeneous", "graph has no leaves"))

    scope = {}
    for idx in order:
        nd = spn.nodes[idx]
        if isinstance(nd, LeafNode):
            scope[idx] = frozenset((nd.rv,))
        elif isinstance(nd, ProductNode):
            seen = set()
            for ch in nd.children:
                if scope[ch] & seen:
                    v.append((idx, "decomposable",
                              f"child scopes overlap on {sorted(scope[ch] & seen)}"))
                seen |= scope[ch]
            scope[idx] = frozenset(seen)
        else:
            scopes = [scope[ch] for ch in nd.children]
            if any(s != scopes[0] for s in scopes):
                v.append((idx, "complete", "children cover unequal scopes"))
            scope[idx] = frozenset().union(*scopes)
    return ValidationReport(not v, tuple(v))


# -- plaintext log2-domain inference ------------------------------------


def _log2(x: float) -> float:
    return math.log2(x) if x > 0 else -math.inf


def add_tree(vals):
    """Balanced pairwise addition, pairing left to right; the order is a
    contract shared with the compiler."""
    vals = list(vals)
    if not vals:
        raise ValueError("empty addition tree")
    while len(vals) > 1:
        nxt = [vals[i] + vals[i + 1] for i in range(0, len(vals) - 1, 2)]
        if len(vals) % 2:
            nxt.append(vals[-1])
        vals = nxt
    return vals[0]


def leaf_log2(dist: LeafDist, x) -> float:
    """log2 density/mass via the same precomputed-constant form the
    circuit uses, in float64."""
    if isinstance(dist, Gaussian):
        s1 = -0.5 * math.log2(2.0 * math.pi * dist.sigma2)
        s2 = math.log2(math.e) / (2.0 * dist.sigma2)
        d = float(x) - dist.mu
        return s1 - (d * d) * s2
    if isinstance(dist, Poisson):
        s1 = _log2(dist.lam)
        s2 = -dist.lam * math.log2(math.e)
        c1 = -math.lgamma(float(x) + 1.0) / math.log(2.0)
        return (float(x) * s1 + c1) + s2
    return _log2(dist.p) if x else _log2(1.0 - dist.p)


def check_evidence(spn: SpnGraph, ev: Evidence) -> None:
    if len(ev.values) != spn.num_rvs:
        raise SpnError(
            f"evidence length {len(ev.values)} != num_rvs {spn.num_rvs}")
    fam = spn.family
    for j, x in enumerate(ev.values):
        if x is None:
            continue
        if fam == "bern" and x not in (0, 1):
            raise SpnError(f"RV {j}: bernoulli evidence must be 0 or 1")
        if fam == "pois" and (x != int(x) or x < 0):
            raise SpnError(f"RV {j}: poisson evidence must be an integer >= 0")
        if fam == "gauss" and not math.isfinite(float(x)):
            raise SpnError(f"RV {j}: gaussian evidence must be finite")


def log_likelihood(spn: SpnGraph, ev: Evidence) -> float:
    check_evidence(spn, ev)
    order = topo_order(spn)
    val = {}
    for idx in order:
        nd = spn.nodes[idx]
        if isinstance(nd, LeafNode):
            x = ev.values[nd.rv]
            val[idx] = 0.0 if x is None else leaf_log2(nd.dist, x)
        elif isinstance(nd, ProductNode):
            val[idx] = add_tree([val[ch] for ch in nd.children])
        else:
            shifted = [val[ch] + _log2(w)
                       for ch, w in zip(nd.children, nd.weights)]
            with np.errstate(divide="ignore", over="ignore"):
                terms = np.exp2(np.array(shifted, dtype=np.float64))
                val[idx] = float(np.log2(add_tree(terms.tolist())))
    return val[spn.root]


def conditional_log_likelihood(spn: SpnGraph, target: Evidence,
                               given: Evidence) -> float:
    if len(target.values) != len(given.values):
        raise SpnError("target and given evidence lengths differ")
    both = []
    for j, (t, g) in enumerate(zip(target.values, given.values)):
        if t is not None and g is not None:
            raise SpnError(f"RV {j} observed in both target and given")
        both.append(t if t is not None else g)
    if all(t is None for t in target.values):
        return 0.0
    num = log_likelihood(spn, Evidence.of(both))
    if all(g is None for g in given.values):
        return num
    return num - log_likelihood(spn, given)


# -- serialization -------------------------------------------------------

_FAMILY_PARSE = {
    "gauss": (Gaussian, ("mu", "sigma2")),
    "pois": (Poisson, ("lambda",)),
    "bern": (Bernoulli, ("p",)),
}


def _remap(nd: Node, table) -> Node:
    if isinstance(nd, SumNode):
        return SumNode(tuple(table[c] for c in nd.children), nd.weights)
    if isinstance(nd, ProductNode):
        return ProductNode(tuple(table[c] for c in nd.children))
    return nd


def parse_spn(document: str, check: bool = True) -> SpnGraph:
    """Parse and, unless check=False, reject graphs that fail validation.

    check=False still enforces structural soundness (well-formed JSON,
    known node types, resolvable references, acyclicity); it only skips
    the semantic rules so a caller can inspect the violation report."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as e:
        raise SpnFormatError(f"syntax error at position {e.pos}: {e.msg}")
    for key in ("num_rvs", "leaf_family", "nodes", "root"):
        if key not in doc:
            raise SpnFormatError(f"missing top-level key {key!r}")
    family = doc["leaf_family"]
    if family not in _FAMILY_PARSE:
        raise SpnFormatError(f"unknown leaf family {family!r}")
    cls, params = _FAMILY_PARSE[family]
    by_id = {}
    for entry in doc["nodes"]:
        try:
            nid = int(entry["id"])
            kind = entry["type"]
            if nid in by_id:
                raise SpnFormatError(f"duplicate node id {nid}")
            if kind == "sum":
                nd = SumNode(tuple(int(c) for c in entry["children"]),
                             tuple(float(w) for w in entry["weights"]))
            elif kind == "prod":
                nd = ProductNode(tuple(int(c) for c in entry["children"]))
            elif kind == "leaf":
                nd = LeafNode(int(entry["rv"]),
                              cls(*(float(entry["params"][p]) for p in params)))
            else:
                raise SpnFormatError(f"unknown node type {kind!r}")
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, SpnFormatError):
                raise
            raise SpnFormatError(f"bad node entry {entry!r}: {e}")
        by_id[nid] = nd
    root_id = int(doc["root"])
    if root_id not in by_id:
        raise SpnFormatError(f"root id {root_id} not among nodes")
    for nid, nd in by_id.items():
        if not isinstance(nd, LeafNode):
            for ch in nd.children:
                if ch not in by_id:
                    raise SpnFormatError(f"node {nid}: dangling child {ch}")

    # ids may be arbitrary; map them to table positions first
    ids = sorted(by_id)
    pos = {k: i for i, k in enumerate(ids)}
    tmp = SpnGraph(
        nodes=tuple(_remap(by_id[k], pos) for k in ids),
        root=pos[root_id],
        num_rvs=int(doc["num_rvs"]),
        meta=doc.get("meta", {}),
    )
    try:
        order = topo_order(tmp)
    except SpnError as e:
        raise SpnFormatError(str(e))
    if len(order) != len(by_id):
        raise SpnFormatError("unreachable nodes present")

    already_topo = all(
        isinstance(nd, LeafNode) or (nd.children and max(nd.children) < i)
        for i, nd in enumerate(tmp.nodes))
    if already_topo:
        spn = tmp
    else:
        remap = {old: new for new, old in enumerate(order)}
        spn = SpnGraph(
            nodes=tuple(_remap(tmp.nodes[i], remap) for i in order),
            root=remap[tmp.root],
            num_rvs=tmp.num_rvs,
            meta=tmp.meta,
        )
    if check:
        report = validate(spn)
        if not report.valid:
            raise SpnFormatError(str(report))
        if spn.family != family:
            raise SpnFormatError("leaf_family does not match leaf nodes")
    return spn


def serialize_spn(spn: SpnGraph) -> str:
    nodes = []
    for i, nd in enumerate(spn.nodes):
        if isinstance(nd, SumNode):
            nodes.append({"id": i, "type": "sum",
                          "children": list(nd.children),
                          "weights": list(nd.weights)})
        elif isinstance(nd, ProductNode):
            nodes.append({"id": i, "type": "prod",
                          "children": list(nd.children)})
        else:
            cls, params = _FAMILY_PARSE[FAMILY_OF[type(nd.dist)]]
            vals = [nd.dist.mu, nd.dist.sigma2] if cls is Gaussian else (
                [nd.dist.lam] if cls is Poisson else [nd.dist.p])
            nodes.append({"id": i, "type": "leaf", "rv": nd.rv,
                          "params": dict(zip(params, vals))})
    doc = {
        "num_rvs": spn.num_rvs,
        "leaf_family": spn.family,
        "nodes": nodes,
        "root": spn.root,
        "meta": spn.meta,
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def spn_digest(spn: SpnGraph) -> str:
    return hashlib.sha256(serialize_spn(spn).encode()).hexdigest()


def parse_evidence(document: str, spn: Optional[SpnGraph] = None) -> Evidence:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as e:
        raise SpnFormatError(f"syntax error at position {e.pos}: {e.msg}")
    if "values" not in doc or not isinstance(doc["values"], list):
        raise SpnFormatError("evidence document needs a 'values' list")
    ev = Evidence.of([None if v is None else v for v in doc["values"]])
    if spn is not None:
        check_evidence(spn, ev)
    return ev


def serialize_evidence(ev: Evidence) -> str:
    return json.dumps({"values": list(ev.values)})


# -- RAT-style random structures -----------------------------------------

_DEFAULT_LEAF = {
    "gauss": lambda: Gaussian(0.0, 1.0),
    "pois": lambda: Poisson(1.0),
    "bern": lambda: Bernoulli(0.5),
}


def generate_rat_spn(cfg: RatSpnConfig, family: str = "bern") -> SpnGraph:
    """Random region-graph structure with default (untrained) parameters:
    uniform sum weights and fixed per-family leaf parameters.  Identical
    cfg gives an identical graph."""
    if family not in _DEFAULT_LEAF:
        raise SpnError(f"unknown leaf family {family!r}")
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    make_leaf = _DEFAULT_LEAF[family]
    nodes = []

    def emit(nd) -> int:
        nodes.append(nd)
        return len(nodes) - 1

    def split(rvs):
        k = len(rvs)
        perm = rng.permutation(k)
        cut = (k + 1) // 2
        left = tuple(sorted(rvs[i] for i in perm[:cut]))
        right = tuple(sorted(rvs[i] for i in perm[cut:]))
        return left, right

    def region(rvs, depth) -> list:
        """Returns the node ids representing this region's distributions."""
        if depth == cfg.split_depth:
            out = []
            for _ in range(cfg.leaves_per_rv):
                leaves = [emit(LeafNode(j, make_leaf())) for j in rvs]
                out.append(leaves[0] if len(leaves) == 1
                           else emit(ProductNode(tuple(leaves))))
            return out
        left, right = split(rvs)
        ln = region(left, depth + 1)
        rn = region(right, depth + 1)
        prods = [emit(ProductNode((a, c))) for a in ln for c in rn]
        k = 1 if depth == 0 else cfg.sums_per_region
        w = (1.0 / len(prods),) * len(prods)
        return [emit(SumNode(tuple(prods), w)) for _ in range(k)]

    rvs = tuple(range(cfg.num_rvs))
    replica_roots = [region(rvs, 0)[0] for _ in range(cfg.num_replicas)]
    if len(replica_roots) == 1:
        root = replica_roots[0]
    else:
        w = (1.0 / len(replica_roots),) * len(replica_roots)
        root = emit(SumNode(tuple(replica_roots), w))
    meta = {
        "generator": "rat",
        "family": family,
        "num_rvs": cfg.num_rvs,
        "split_depth": cfg.split_depth,
        "num_replicas": cfg.num_replicas,
        "sums_per_region": cfg.sums_per_region,
        "leaves_per_rv": cfg.leaves_per_rv,
        "seed": cfg.seed,
    }
    return SpnGraph(tuple(nodes), root, cfg.num_rvs, meta)


def randomize_parameters(spn: SpnGraph, seed: int) -> SpnGraph:
    """Fresh random leaf parameters and sum weights on an existing
    structure (test corpora need untied parameters, not fit ones)."""
    rng = np.random.Generator(np.random.Philox(seed))

    def new_dist(d):
        if isinstance(d, Gaussian):
            return Gaussian(float(rng.uniform(-2, 2)),
                            float(rng.uniform(0.1, 4.0)))
        if isinstance(d, Poisson):
            return Poisson(float(rng.uniform(0.5, 8.0)))
        return Bernoulli(float(rng.uniform(0.05, 0.95)))

    out = []
    for nd in spn.nodes:
        if isinstance(nd, LeafNode):
            out.append(LeafNode(nd.rv, new_dist(nd.dist)))
        elif isinstance(nd, SumNode):
            raw = rng.uniform(0.05, 1.0, len(nd.children))
            w = raw / raw.sum()
            out.append(SumNode(nd.children, tuple(float(x) for x in w)))
        else:
            out.append(nd)
    return SpnGraph(tuple(out), spn.root, spn.num_rvs, dict(spn.meta))
