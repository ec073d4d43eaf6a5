#!/usr/bin/env python3
"""Numeric accuracy of the compiled log2-domain pipeline.

Sweeps random SPNs per leaf family, evaluates each compiled circuit on
random evidence at 32 and 64 bits, and reports error statistics against
float64 cleartext inference.  The circuits run in cleartext simulation
here; garbled evaluation is bit-identical to simulation (see the test
suite), so these numbers are the secure path's numbers.
"""

import argparse
import math
import zlib
from dataclasses import dataclass

import numpy as np

from cryptospn.circuit import bits_to_float
from cryptospn.compiler import (compile_spn, derive_client_inputs,
                                derive_server_inputs)
from cryptospn.spn import (Evidence, RatSpnConfig, generate_rat_spn,
                           log_likelihood, randomize_parameters)


@dataclass
class SweepConfig:
    models: int = 10
    queries: int = 8
    rvs: int = 4
    seed: int = 0
    families: str = "bern,gauss,pois"


def random_model(family: str, rvs: int, seed: int):
    rng = np.random.Generator(np.random.Philox(seed))
    cfg = RatSpnConfig(
        num_rvs=rvs,
        split_depth=int(rng.integers(1, max(2, int(math.log2(rvs))) + 1)),
        num_replicas=int(rng.integers(1, 3)),
        sums_per_region=int(rng.integers(1, 3)),
        leaves_per_rv=int(rng.integers(1, 3)),
        seed=seed,
    )
    return randomize_parameters(generate_rat_spn(cfg, family), seed + 1)


def random_evidence(family: str, n: int, rng) -> list:
    if family == "bern":
        return list(rng.integers(0, 2, n))
    if family == "pois":
        return [int(v) for v in rng.integers(0, 6, n)]
    return [float(v) for v in rng.normal(0.0, 1.5, n)]


def sweep_family(family: str, cfg: SweepConfig):
    rng = np.random.Generator(
        np.random.Philox(cfg.seed ^ zlib.crc32(family.encode())))
    errs = {32: [], 64: []}
    for k in range(cfg.models):
        spn = random_model(family, cfg.rvs, cfg.seed + 101 * k)
        compiled = {b: compile_spn(spn, b) for b in (32, 64)}
        server = {b: derive_server_inputs(spn, c)
                  for b, c in compiled.items()}
        for _ in range(cfg.queries):
            ev = Evidence.of(random_evidence(family, cfg.rvs, rng))
            ref = log_likelihood(spn, ev)
            for b, comp in compiled.items():
                cb = derive_client_inputs(comp, ev)
                out = comp.circuit.simulate(cb, server[b])["log2_prob"]
                errs[b].append(bits_to_float(comp.precision, out) - ref)
    return {b: np.asarray(e) for b, e in errs.items()}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    d = SweepConfig()
    ap.add_argument("--models", type=int, default=d.models)
    ap.add_argument("--queries", type=int, default=d.queries)
    ap.add_argument("--rvs", type=int, default=d.rvs)
    ap.add_argument("--seed", type=int, default=d.seed)
    ap.add_argument("--families", default=d.families)
    cfg = SweepConfig(**vars(ap.parse_args()))

    print(f"{'family':<8}{'pairs':>7}{'rmse32':>12}{'max32':>12}"
          f"{'rmse64':>12}{'max64':>12}")
    for family in cfg.families.split(","):
        e = sweep_family(family.strip(), cfg)
        r32 = float(np.sqrt(np.mean(e[32] ** 2)))
        r64 = float(np.sqrt(np.mean(e[64] ** 2)))
        print(f"{family:<8}{len(e[32]):>7}{r32:>12.3e}"
              f"{float(np.max(np.abs(e[32]))):>12.3e}"
              f"{r64:>12.3e}{float(np.max(np.abs(e[64]))):>12.3e}")


if __name__ == "__main__":
    main()
