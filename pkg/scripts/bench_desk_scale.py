#!/usr/bin/env python3
"""Desk-scale end-to-end benchmark.

Generates a dataset-sized Bernoulli RAT-SPN (defaults give 640 leaves
and 880 products over 16 RVs, the shape of a typical nltcs model),
compiles it, runs full loopback sessions, and reconciles the measured
traffic against the closed-form predictions.
"""

import argparse
import time
from dataclasses import dataclass

from cryptospn.compiler import (compile_spn, derive_client_inputs,
                                derive_server_inputs)
from cryptospn.costs import (format_reconciliation, predict_communication,
                             reconcile)
from cryptospn.session import run_loopback
from cryptospn.spn import (Evidence, RatSpnConfig, generate_rat_spn,
                           randomize_parameters)


@dataclass
class BenchConfig:
    rvs: int = 16
    depth: int = 1
    replicas: int = 2
    sums: int = 1
    leaves: int = 20
    seed: int = 3
    bits: int = 32
    runs: int = 1
    hide_scope: bool = False
    marginals: bool = False


def build_model(cfg: BenchConfig):
    rat = RatSpnConfig(num_rvs=cfg.rvs, split_depth=cfg.depth,
                       num_replicas=cfg.replicas, sums_per_region=cfg.sums,
                       leaves_per_rv=cfg.leaves, seed=cfg.seed)
    return randomize_parameters(generate_rat_spn(rat, "bern"), cfg.seed + 1)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    d = BenchConfig()
    ap.add_argument("--rvs", type=int, default=d.rvs)
    ap.add_argument("--depth", type=int, default=d.depth)
    ap.add_argument("--replicas", type=int, default=d.replicas)
    ap.add_argument("--sums", type=int, default=d.sums)
    ap.add_argument("--leaves", type=int, default=d.leaves)
    ap.add_argument("--seed", type=int, default=d.seed)
    ap.add_argument("--bits", type=int, choices=(32, 64), default=d.bits)
    ap.add_argument("--runs", type=int, default=d.runs)
    ap.add_argument("--hide-scope", action="store_true")
    ap.add_argument("--marginals", action="store_true")
    cfg = BenchConfig(**vars(ap.parse_args()))

    spn = build_model(cfg)
    counts = spn.counts()
    print(f"model: {counts['sum']} sums, {counts['prod']} products, "
          f"{counts['leaf']} leaves over {cfg.rvs} RVs")

    t0 = time.perf_counter()
    comp = compile_spn(spn, cfg.bits, hide_scope=cfg.hide_scope,
                       marginals=cfg.marginals)
    st = comp.circuit.stats()
    print(f"compiled in {time.perf_counter() - t0:.2f}s: "
          f"{st.gate_count} gates, {st.and_count} AND "
          f"({32 * st.and_count / 2**20:.1f} MiB of tables), "
          f"depth {st.depth}")

    server_bits = derive_server_inputs(spn, comp)
    ev = Evidence(tuple(1 for _ in range(cfg.rvs)))
    client_bits = derive_client_inputs(comp, ev)

    print(f"{'run':<5}{'setup_s':>9}{'online_s':>10}{'setup_MiB':>11}"
          f"{'online_KiB':>12}")
    last = None
    for i in range(cfg.runs):
        rg, re = run_loopback(comp, server_bits, client_bits,
                              seed=cfg.seed + i)
        print(f"{i:<5}{rg.setup_seconds:>9.3f}{rg.online_seconds:>10.3f}"
              f"{re.payload_bits('setup') / 8 / 2**20:>11.2f}"
              f"{re.payload_bits('online') / 8 / 2**10:>12.2f}")
        last = re

    pred = predict_communication(spn, cfg.bits, hide_scope=cfg.hide_scope,
                                 marginals=cfg.marginals)
    print()
    print(format_reconciliation(reconcile(pred, last)))


if __name__ == "__main__":
    main()
