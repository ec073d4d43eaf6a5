"""Command line surface: validate, generate, compile, predict, infer,
serve, query, bench.

Exit codes: 0 success, 1 domain error (invalid model, bad parameters),
2 unreadable input (parse or I/O), 3 network or protocol failure.
"""

import argparse
import json
import logging
import math
import os
import socket
import sys

from .compiler import (
    compile_spn, derive_client_inputs, derive_server_inputs, load_compiled,
    routed_word_width, save_compiled,
)
from .costs import (
    format_reconciliation, measured_constants, paper_constants, predict_gates,
    predict_communication, reconcile,
)
from .selection import selection_formula_cost, selection_switch_count
from .session import (
    SessionConfig, SessionError, run_evaluator, run_garbler, run_loopback,
)
from .spn import (
    Evidence, RatSpnConfig, SpnError, SpnFormatError, generate_rat_spn,
    log_likelihood, parse_evidence, parse_spn, serialize_spn, spn_digest,
    validate,
)
from .transport import Listener, ProtocolError, connect

EXIT_OK, EXIT_DOMAIN, EXIT_INPUT, EXIT_NET = 0, 1, 2, 3

log = logging.getLogger("cryptospn")


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _addr(text: str):
    host, sep, port = text.rpartition(":")
    if not sep:
        raise SpnFormatError(f"address {text!r} is not host:port")
    try:
        return host, int(port)
    except ValueError:
        raise SpnFormatError(f"address {text!r} has a non-numeric port")


def cmd_validate(args) -> int:
    # parse structurally only; semantic violations are this command's output
    report = validate(parse_spn(_read(args.spn), check=False))
    print(report)
    return EXIT_OK if report.valid else EXIT_DOMAIN


def cmd_ratgen(args) -> int:
    cfg = RatSpnConfig(num_rvs=args.rvs, split_depth=args.depth,
                       num_replicas=args.replicas, sums_per_region=args.sums,
                       leaves_per_rv=args.leaves, seed=args.seed)
    spn = generate_rat_spn(cfg, family=args.family)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(serialize_spn(spn))
    counts = spn.counts()
    print(f"wrote {args.out}: {counts['sum']} sums, {counts['prod']} "
          f"products, {counts['leaf']} leaves, digest {spn_digest(spn)[:16]}")
    return EXIT_OK


def cmd_compile(args) -> int:
    spn = parse_spn(_read(args.spn))
    comp = compile_spn(spn, args.bits, hide_scope=args.hide_scope,
                       marginals=args.marginals)
    save_compiled(comp, args.out)
    print(f"wrote {args.out} (+.layout.json), digest {comp.spn_digest[:16]}")
    if args.stats:
        st = comp.circuit.stats()
        pred = predict_gates(spn, args.bits, hide_scope=args.hide_scope,
                             marginals=args.marginals)
        print(f"gates: {st.gate_count} total, {st.and_count} AND, "
              f"{st.xor_count} XOR, {st.inv_count} INV, "
              f"{st.const_count} CONST, depth {st.depth}")
        print(f"inputs: client {st.client_input_bits} bits, "
              f"server {st.server_input_bits} bits; "
              f"output {st.output_bits} bits")
        print(f"predicted AND gates (measured constants): {pred.and_gates}")
        if args.hide_scope:
            n = spn.num_rvs
            m = len({e.name.split(".")[0] for e in comp.server_layout.entries
                     if e.tag == "leaf_param"})
            w = routed_word_width(comp.family, args.bits, args.marginals)
            print(f"selection network: {selection_switch_count(n, m)} "
                  f"switches of width {w} "
                  f"(closed form C_sel({n},{m}) = "
                  f"{selection_formula_cost(n, m):g})")
    return EXIT_OK


def cmd_predict(args) -> int:
    spn = parse_spn(_read(args.spn))
    constants = (paper_constants(args.bits) if args.constants == "paper"
                 else measured_constants(args.bits))
    rep = predict_communication(spn, args.bits, constants,
                                hide_scope=args.hide_scope,
                                marginals=args.marginals)
    print(f"constants: {rep.source} ({rep.bits}-bit), kappa {rep.kappa}")
    print(f"{'component':<16}{'AND gates':>12}")
    for k, v in rep.gate_parts.items():
        print(f"{k:<16}{v:>12}")
    print(f"{'total':<16}{rep.and_gates:>12}")
    for phase, total, parts in (("setup", rep.setup_bits, rep.setup_parts),
                                ("online", rep.online_bits,
                                 rep.online_parts)):
        print(f"{phase} communication: {total} bits "
              f"({total / 8 / 1024 / 1024:.3f} MiB)")
        for k, v in parts.items():
            print(f"  {k:<20}{v:>14} bits")
    for note in rep.notes:
        print(f"note: {note}")
    return EXIT_OK


def cmd_infer(args) -> int:
    spn = parse_spn(_read(args.spn))
    ev = parse_evidence(_read(args.evidence))
    ll = log_likelihood(spn, ev)
    print(f"log2 probability: {ll!r}")
    print(f"probability: {0.0 if ll == -math.inf else 2.0 ** ll!r}")
    return EXIT_OK


def _scrubbed_report(rep) -> str:
    lines = [f"session done: digest {rep.digest[:16]}, "
             f"{rep.and_count} AND gates, {rep.table_bytes} table bytes",
             f"timing: setup {rep.setup_seconds:.3f}s, "
             f"online {rep.online_seconds:.3f}s"]
    for phase in ("setup", "online"):
        total = rep.payload_bits(phase) // 8
        lines.append(f"{phase} payload: {total} bytes "
                     f"({rep.frames} frames total, "
                     f"{rep.framing_bytes} framing bytes)")
    return "\n".join(lines)


def cmd_serve(args) -> int:
    comp = load_compiled(args.circuit)
    spn = parse_spn(_read(args.params))
    if spn_digest(spn) != comp.spn_digest:
        raise SpnError("parameter file does not match the compiled circuit")
    server_bits = derive_server_inputs(spn, comp)
    listen = args.listen or os.environ.get("CRYPTOSPN_LISTEN", "127.0.0.1:0")
    host, port = _addr(listen)
    srv = Listener(host, port)
    print(f"listening on {srv.host}:{srv.port}", flush=True)
    done = 0
    try:
        while args.sessions == 0 or done < args.sessions:
            conn = srv.accept(args.timeout)
            log.info("accepted session %d", done + 1)
            try:
                rep = run_garbler(comp, server_bits, conn,
                                  SessionConfig("garbler", seed=args.seed))
            finally:
                conn.close()
            print(_scrubbed_report(rep), flush=True)
            done += 1
    finally:
        srv.close()
    return EXIT_OK


def cmd_query(args) -> int:
    comp = load_compiled(args.circuit)
    ev = parse_evidence(_read(args.evidence))
    client_bits = derive_client_inputs(comp, ev)
    host, port = _addr(args.connect)
    conn = connect(host, port, timeout=args.timeout)
    try:
        rep = run_evaluator(comp, client_bits, conn,
                            SessionConfig("evaluator"))
    finally:
        conn.close()
    ll = rep.result
    print(f"log2 probability: {ll!r}")
    print(f"probability: {0.0 if ll == -math.inf else 2.0 ** ll!r}")
    log.info("online took %.3fs over %d frames", rep.online_seconds,
             rep.frames)
    return EXIT_OK


def _default_evidence(comp) -> Evidence:
    fam = comp.family
    value = {"bern": 1, "pois": 0, "gauss": 0.0}[fam]
    return Evidence(tuple(value for _ in range(comp.num_rvs)))


def cmd_bench(args) -> int:
    spn = parse_spn(_read(args.spn))
    comp = compile_spn(spn, args.bits, hide_scope=args.hide_scope,
                       marginals=args.marginals)
    server_bits = derive_server_inputs(spn, comp)
    client_bits = derive_client_inputs(comp, _default_evidence(comp))
    print(f"{'run':<5}{'setup_s':>9}{'online_s':>10}{'setup_B':>12}"
          f"{'online_B':>10}")
    acc = [0.0, 0.0, 0, 0]
    last = None
    for i in range(args.runs):
        seed = None if args.seed is None else args.seed + i
        rg, re = run_loopback(comp, server_bits, client_bits, seed=seed)
        su, on = rg.setup_seconds, rg.online_seconds
        sb, ob = re.payload_bits("setup") // 8, re.payload_bits("online") // 8
        print(f"{i:<5}{su:>9.3f}{on:>10.3f}{sb:>12}{ob:>10}")
        acc = [acc[0] + su, acc[1] + on, sb, ob]
        last = re
    k = args.runs
    print(f"{'mean':<5}{acc[0] / k:>9.3f}{acc[1] / k:>10.3f}{acc[2]:>12}"
          f"{acc[3]:>10}")
    pred = predict_communication(spn, args.bits, hide_scope=args.hide_scope,
                                 marginals=args.marginals)
    print(format_reconciliation(reconcile(pred, last)))
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cryptospn",
        description="Private two-party SPN inference over garbled circuits")
    sub = p.add_subparsers(dest="cmd", required=True)

    v = sub.add_parser("validate", help="check an SPN file")
    v.add_argument("spn")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("ratgen", help="generate a random-tensorized SPN")
    r.add_argument("--rvs", type=int, required=True)
    r.add_argument("--depth", type=int, required=True)
    r.add_argument("--replicas", type=int, required=True)
    r.add_argument("--sums", type=int, required=True)
    r.add_argument("--leaves", type=int, required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--family", choices=("bern", "gauss", "pois"),
                   default="bern")
    r.add_argument("-o", "--out", required=True)
    r.set_defaults(func=cmd_ratgen)

    c = sub.add_parser("compile", help="compile an SPN to a circuit")
    c.add_argument("spn")
    c.add_argument("--bits", type=int, choices=(32, 64), default=32)
    c.add_argument("--hide-scope", action="store_true")
    c.add_argument("--marginals", action="store_true")
    c.add_argument("--stats", action="store_true")
    c.add_argument("-o", "--out", required=True)
    c.set_defaults(func=cmd_compile)

    d = sub.add_parser("predict", help="closed-form cost prediction")
    d.add_argument("spn")
    d.add_argument("--bits", type=int, choices=(32, 64), default=32)
    d.add_argument("--constants", choices=("measured", "paper"),
                   default="measured")
    d.add_argument("--hide-scope", action="store_true")
    d.add_argument("--marginals", action="store_true")
    d.set_defaults(func=cmd_predict)

    i = sub.add_parser("infer", help="plain (cleartext) inference")
    i.add_argument("spn")
    i.add_argument("--evidence", required=True)
    i.set_defaults(func=cmd_infer)

    s = sub.add_parser("serve", help="run the model-holding garbler")
    s.add_argument("circuit")
    s.add_argument("--params", required=True, help="SPN file with parameters")
    s.add_argument("--listen", default=None,
                   help="host:port (default $CRYPTOSPN_LISTEN or "
                        "127.0.0.1:0)")
    s.add_argument("--sessions", type=int, default=1,
                   help="sessions to serve; 0 = forever")
    s.add_argument("--timeout", type=float, default=120.0)
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=cmd_serve)

    q = sub.add_parser("query", help="query a served model with evidence")
    q.add_argument("circuit")
    q.add_argument("--evidence", required=True)
    q.add_argument("--connect", required=True, help="host:port")
    q.add_argument("--timeout", type=float, default=120.0)
    q.set_defaults(func=cmd_query)

    b = sub.add_parser("bench", help="loopback timing and traffic")
    b.add_argument("spn")
    b.add_argument("--bits", type=int, choices=(32, 64), default=32)
    b.add_argument("--runs", type=int, default=1)
    b.add_argument("--hide-scope", action="store_true")
    b.add_argument("--marginals", action="store_true")
    b.add_argument("--seed", type=int, default=None)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=os.environ.get("CRYPTOSPN_LOG", "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except SpnFormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (SpnError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ProtocolError, SessionError, ConnectionError, socket.timeout) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NET
    except (FileNotFoundError, IsADirectoryError, PermissionError,
            json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NET


if __name__ == "__main__":
    sys.exit(main())
