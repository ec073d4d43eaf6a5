"""Small hand-built graphs shared across test modules."""

import numpy as np

from cryptospn.spn import (
    Bernoulli, Gaussian, LeafNode, Poisson, ProductNode, RatSpnConfig,
    SpnGraph, SumNode, generate_rat_spn, randomize_parameters,
)


def two_product_mixture() -> SpnGraph:
    """Seven-node Bernoulli SPN over two RVs; P(1,1) = 0.2 exactly.

    Mixture of two fully factorized components with weights 0.5/0.5 and
    leaf probabilities 0.8, 0.2, 0.6, 0.4: P(1,1) = 0.08 + 0.12.
    """
    nodes = (
        LeafNode(0, Bernoulli(0.8)),
        LeafNode(1, Bernoulli(0.2)),
        LeafNode(0, Bernoulli(0.6)),
        LeafNode(1, Bernoulli(0.4)),
        ProductNode((0, 1)),
        ProductNode((2, 3)),
        SumNode((4, 5), (0.5, 0.5)),
    )
    return SpnGraph(nodes, 6, 2)


def four_rv_mixture() -> SpnGraph:
    """The published cost walkthrough shape: n = 4, m = 4 leaves, one
    2-ary sum over two 2-ary products.

    The closed forms only read (n, m, fanouts), so the graph keeps the
    mixture on RVs 0 and 1 and simply declares two more RVs; splitting
    the components across disjoint RV pairs would make the root sum
    incomplete.  RVs 2 and 3 are unreferenced and marginal by
    construction, which keeps the graph valid and compilable.
    """
    nodes = (
        LeafNode(0, Bernoulli(0.8)),
        LeafNode(1, Bernoulli(0.2)),
        LeafNode(0, Bernoulli(0.6)),
        LeafNode(1, Bernoulli(0.4)),
        ProductNode((0, 1)),
        ProductNode((2, 3)),
        SumNode((4, 5), (0.5, 0.5)),
    )
    return SpnGraph(nodes, 6, 4)


def leaf_only(dist, num_rvs=1, rv=0) -> SpnGraph:
    return SpnGraph((LeafNode(rv, dist),), 0, num_rvs)


def single_rv_mixture() -> SpnGraph:
    """P(X=1) = 0.5*0.6 + 0.5*0.16 = 0.38."""
    nodes = (
        LeafNode(0, Bernoulli(0.6)),
        LeafNode(0, Bernoulli(0.16)),
        SumNode((0, 1), (0.5, 0.5)),
    )
    return SpnGraph(nodes, 2, 1)


def independent_pair() -> SpnGraph:
    nodes = (
        LeafNode(0, Bernoulli(0.8)),
        LeafNode(1, Bernoulli(0.3)),
        ProductNode((0, 1)),
    )
    return SpnGraph(nodes, 2, 2)


def random_spn(num_rvs: int, seed: int, family: str = "bern") -> SpnGraph:
    """Random structure plus random parameters, both driven by seed."""
    rng = np.random.Generator(np.random.Philox(seed))
    max_depth = max(1, min(3, int(np.log2(num_rvs)))) if num_rvs > 1 else 1
    cfg = RatSpnConfig(
        num_rvs=max(2, num_rvs),
        split_depth=int(rng.integers(1, max_depth + 1)),
        num_replicas=int(rng.integers(1, 3)),
        sums_per_region=int(rng.integers(1, 3)),
        leaves_per_rv=int(rng.integers(1, 4)),
        seed=seed,
    )
    return randomize_parameters(generate_rat_spn(cfg, family), seed + 1)


def all_assignments(n: int):
    for m in range(1 << n):
        yield tuple((m >> j) & 1 for j in range(n))
