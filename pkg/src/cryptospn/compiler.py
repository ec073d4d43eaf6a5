"""SPN to Boolean circuit compiler.

Everything stays in the log2 domain: leaves emit log2 densities from
precomputed server-side constants, products become balanced addition
trees, and sums go through per-child weight add, exp2, addition tree,
log2 (no max-shift, so the gate count follows the closed-form cost
model exactly).  Optionally a single selection network below all leaves
hides which RV feeds which leaf, and per-RV known-flag muxes turn
missing evidence into marginalization inside the circuit.
"""

import json
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .circuit import (
    CLIENT, FORMATS, SERVER, Assembler, Circuit, FloatFormat, float_to_bits,
)
from .selection import program_selection, selection_switch_count, selection_template
from .softfloat import (
    and_word_template, fp_add_template, fp_mul_template, fp_sub_template,
    mux_word_template,
)
from .spn import (
    Bernoulli, Evidence, Gaussian, LeafNode, Poisson, SpnError, SpnGraph,
    SumNode, spn_digest, topo_order, validate,
)
from .transcend import exp2_template, log2_template

LOG2E = math.log2(math.e)

TAG_RV = "rv_value"
TAG_FLAG = "rv_known_flag"
TAG_LFACT = "rv_log_factorial"
TAG_PARAM = "leaf_param"
TAG_WEIGHT = "sum_weight"
TAG_SEL = "selection_control"


@dataclass(frozen=True)
class LayoutEntry:
    name: str
    offset: int
    width: int
    tag: str


@dataclass(frozen=True)
class InputLayout:
    entries: tuple

    @property
    def total_bits(self) -> int:
        if not self.entries:
            return 0
        last = self.entries[-1]
        return last.offset + last.width

    def tagged(self, tag: str) -> list:
        return [e for e in self.entries if e.tag == tag]


@dataclass(frozen=True)
class CompiledSpn:
    circuit: Circuit
    client_layout: InputLayout
    server_layout: InputLayout
    precision: FloatFormat
    hide_scope: bool
    marginals_enabled: bool
    spn_digest: str

    @property
    def family(self) -> str:
        if self.client_layout.tagged(TAG_LFACT):
            return "pois"
        if self.client_layout.tagged(TAG_RV)[0].width == 1:
            return "bern"
        return "gauss"

    @property
    def num_rvs(self) -> int:
        return len(self.client_layout.tagged(TAG_RV))


def routed_word_width(family: str, bits: int, with_flag: bool) -> int:
    """Width of one RV's bundle through the scope-hiding network."""
    base = {"gauss": bits, "pois": 2 * bits, "bern": 1}[family]
    return base + (1 if with_flag else 0)


class _LayoutBuilder:
    def __init__(self):
        self.entries = []
        self.off = 0

    def add(self, name, width, tag):
        self.entries.append(LayoutEntry(name, self.off, width, tag))
        self.off += width

    def done(self) -> InputLayout:
        return InputLayout(tuple(self.entries))


def _client_layout(family: str, n: int, bits: int, marginals: bool) -> InputLayout:
    lb = _LayoutBuilder()
    for j in range(n):
        if family == "bern":
            lb.add(f"x{j}", 1, TAG_RV)
        else:
            lb.add(f"x{j}", bits, TAG_RV)
            if family == "pois":
                lb.add(f"lfact{j}", bits, TAG_LFACT)
    if marginals:
        for j in range(n):
            lb.add(f"known{j}", 1, TAG_FLAG)
    return lb.done()


def _server_layout(spn: SpnGraph, bits: int, hide_scope: bool) -> InputLayout:
    lb = _LayoutBuilder()
    for i, nd in enumerate(spn.nodes):
        if not isinstance(nd, LeafNode):
            continue
        if isinstance(nd.dist, Gaussian):
            for p in ("mu", "s1", "s2"):
                lb.add(f"leaf{i}.{p}", bits, TAG_PARAM)
        elif isinstance(nd.dist, Poisson):
            for p in ("s1", "s2"):
                lb.add(f"leaf{i}.{p}", bits, TAG_PARAM)
        else:
            for p in ("logp", "logq"):
                lb.add(f"leaf{i}.{p}", bits, TAG_PARAM)
    for i, nd in enumerate(spn.nodes):
        if isinstance(nd, SumNode):
            for k in range(len(nd.children)):
                lb.add(f"sum{i}.w{k}", bits, TAG_WEIGHT)
    if hide_scope:
        m = spn.counts()["leaf"]
        lb.add("sel", selection_switch_count(spn.num_rvs, m), TAG_SEL)
    return lb.done()


def _tree(asm, add_t, words):
    """Balanced pairwise reduction, same pairing as spn.add_tree."""
    words = list(words)
    while len(words) > 1:
        nxt = [asm.instantiate(add_t, np.concatenate([words[i], words[i + 1]]))
               for i in range(0, len(words) - 1, 2)]
        if len(words) % 2:
            nxt.append(words[-1])
        words = nxt
    return words[0]


def compile_spn(spn: SpnGraph, fmt: Union[FloatFormat, int],
                hide_scope: bool = False, marginals: bool = False) -> CompiledSpn:
    if isinstance(fmt, int):
        fmt = FORMATS[fmt]
    report = validate(spn)
    if not report.valid:
        raise SpnError(f"cannot compile invalid SPN: {report}")
    family = spn.family
    bits = fmt.bits
    n = spn.num_rvs
    leaf_ids = [i for i, nd in enumerate(spn.nodes)
                if isinstance(nd, LeafNode)]
    m = len(leaf_ids)
    if hide_scope and m < n:
        raise SpnError(f"scope hiding needs at least one leaf per RV "
                       f"(m={m} < n={n})")

    client = _client_layout(family, n, bits, marginals)
    server = _server_layout(spn, bits, hide_scope)

    asm = Assembler()
    wires = {}
    for e in client.entries:
        wires[e.name] = asm.add_input_group(e.name, CLIENT, e.width)
    for e in server.entries:
        wires[e.name] = asm.add_input_group(e.name, SERVER, e.width)

    add_t = fp_add_template(bits)
    sub_t = fp_sub_template(bits)
    mul_t = fp_mul_template(bits)
    exp_t = exp2_template(bits)
    log_t = log2_template(bits)
    word_mux_t = mux_word_template(bits)
    flag_t = and_word_template(bits)

    def op(t, *args):
        return asm.instantiate(t, np.concatenate(args))

    # feed[i] = (value wires [, lfact wires]) and optional flag wire per leaf
    if hide_scope:
        phi = [spn.nodes[i].rv for i in leaf_ids]
        w = routed_word_width(family, bits, marginals)
        bundle = []
        for j in range(n):
            parts = [wires[f"x{j}"]]
            if family == "pois":
                parts.append(wires[f"lfact{j}"])
            if marginals:
                parts.append(wires[f"known{j}"])
            bundle.append(np.concatenate(parts))
        routed = op(selection_template(n, m, w), *bundle, wires["sel"])
        routed = routed.reshape(m, w)
        feeds = {}
        for pos, i in enumerate(leaf_ids):
            word = routed[pos]
            flag = word[-1:] if marginals else None
            if family == "pois":
                feeds[i] = (word[:bits], word[bits: 2 * bits], flag)
            else:
                vw = routed_word_width(family, bits, False)
                feeds[i] = (word[:vw], None, flag)
    else:
        feeds = {}
        for i in leaf_ids:
            j = spn.nodes[i].rv
            flag = wires[f"known{j}"] if marginals else None
            lf = wires[f"lfact{j}"] if family == "pois" else None
            feeds[i] = (wires[f"x{j}"], lf, flag)

    value = {}
    for idx in topo_order(spn):
        nd = spn.nodes[idx]
        if isinstance(nd, LeafNode):
            x, lf, flag = feeds[idx]
            if isinstance(nd.dist, Gaussian):
                d = op(sub_t, x, wires[f"leaf{idx}.mu"])
                q = op(mul_t, d, d)
                r = op(mul_t, q, wires[f"leaf{idx}.s2"])
                out = op(sub_t, wires[f"leaf{idx}.s1"], r)
            elif isinstance(nd.dist, Poisson):
                t = op(mul_t, x, wires[f"leaf{idx}.s1"])
                u = op(add_t, t, lf)
                out = op(add_t, u, wires[f"leaf{idx}.s2"])
            else:
                out = op(word_mux_t, x, wires[f"leaf{idx}.logp"],
                         wires[f"leaf{idx}.logq"])
            if marginals:
                out = op(flag_t, flag, out)
            value[idx] = out
        elif isinstance(nd, SumNode):
            terms = []
            for k, ch in enumerate(nd.children):
                t = op(add_t, value[ch], wires[f"sum{idx}.w{k}"])
                terms.append(op(exp_t, t))
            value[idx] = op(log_t, _tree(asm, add_t, terms))
        else:
            value[idx] = _tree(asm, add_t, [value[ch] for ch in nd.children])

    circuit = asm.finish([("log2_prob", value[spn.root])], fmt)
    return CompiledSpn(
        circuit=circuit,
        client_layout=client,
        server_layout=server,
        precision=fmt,
        hide_scope=hide_scope,
        marginals_enabled=marginals,
        spn_digest=spn_digest(spn),
    )


# -- party input encodings ------------------------------------------------


def leaf_constants(dist) -> dict:
    """Server-side precomputed words, in float64 before target rounding."""
    if isinstance(dist, Gaussian):
        return {
            "mu": dist.mu,
            "s1": -0.5 * math.log2(2.0 * math.pi * dist.sigma2),
            "s2": LOG2E / (2.0 * dist.sigma2),
        }
    if isinstance(dist, Poisson):
        return {"s1": math.log2(dist.lam), "s2": -dist.lam * LOG2E}
    if not 0.0 < dist.p < 1.0:
        raise SpnError("bernoulli leaf with p in {0,1} has no finite log2")
    return {"logp": math.log2(dist.p), "logq": math.log2(1.0 - dist.p)}


def derive_server_inputs(spn: SpnGraph, compiled: CompiledSpn) -> np.ndarray:
    if spn_digest(spn) != compiled.spn_digest:
        raise SpnError("SPN does not match the compiled circuit digest")
    fmt = compiled.precision
    out = np.zeros(compiled.server_layout.total_bits, dtype=np.uint8)
    for e in compiled.server_layout.entries:
        if e.tag != TAG_PARAM:
            continue
        leaf, param = e.name.split(".")
        consts = leaf_constants(spn.nodes[int(leaf[4:])].dist)
        out[e.offset: e.offset + e.width] = float_to_bits(fmt, consts[param])
    for e in compiled.server_layout.entries:
        if e.tag != TAG_WEIGHT:
            continue
        sid, wk = e.name.split(".")
        w = spn.nodes[int(sid[3:])].weights[int(wk[1:])]
        lw = math.log2(w) if w > 0 else -math.inf
        out[e.offset: e.offset + e.width] = float_to_bits(fmt, lw)
    sel = compiled.server_layout.tagged(TAG_SEL)
    if sel:
        phi = [spn.nodes[i].rv for i, nd in enumerate(spn.nodes)
               if isinstance(nd, LeafNode)]
        ctrl = program_selection(phi, spn.num_rvs)
        out[sel[0].offset: sel[0].offset + sel[0].width] = ctrl
    return out


def derive_client_inputs(compiled: CompiledSpn, ev: Evidence) -> np.ndarray:
    family = compiled.family
    n = compiled.num_rvs
    if len(ev.values) != n:
        raise SpnError(f"evidence length {len(ev.values)} != num_rvs {n}")
    fmt = compiled.precision
    out = np.zeros(compiled.client_layout.total_bits, dtype=np.uint8)
    for e in compiled.client_layout.entries:
        j = int("".join(c for c in e.name if c.isdigit()))
        x = ev.values[j]
        if x is None:
            if e.tag == TAG_FLAG:
                continue  # leave 0
            if not compiled.marginals_enabled:
                raise SpnError(
                    f"RV {j} missing but circuit was compiled without "
                    f"marginal support")
            continue  # placeholder zeros; the known flag gates them off
        if e.tag == TAG_FLAG:
            out[e.offset] = 1
        elif e.tag == TAG_LFACT:
            c1 = -math.lgamma(float(x) + 1.0) / math.log(2.0)
            out[e.offset: e.offset + e.width] = float_to_bits(fmt, c1)
        elif family == "bern":
            if x not in (0, 1):
                raise SpnError(f"RV {j}: bernoulli evidence must be 0 or 1")
            out[e.offset] = int(x)
        else:
            if family == "pois" and (x != int(x) or x < 0):
                raise SpnError(f"RV {j}: poisson evidence must be an "
                               f"integer >= 0")
            if not math.isfinite(float(x)):
                raise SpnError(f"RV {j}: evidence must be finite")
            out[e.offset: e.offset + e.width] = float_to_bits(fmt, float(x))
    return out


# -- serialization ---------------------------------------------------------


def save_compiled(compiled: CompiledSpn, path: str) -> None:
    compiled.circuit.save(path)
    side = {
        "precision": compiled.precision.bits,
        "hide_scope": compiled.hide_scope,
        "marginals": compiled.marginals_enabled,
        "spn_digest": compiled.spn_digest,
        "client_layout": [vars(e) for e in compiled.client_layout.entries],
        "server_layout": [vars(e) for e in compiled.server_layout.entries],
    }
    with open(path + ".layout.json", "w") as f:
        json.dump(side, f, sort_keys=True, indent=1)


def load_compiled(path: str) -> CompiledSpn:
    circuit = Circuit.load(path)
    with open(path + ".layout.json") as f:
        side = json.load(f)

    def layout(entries):
        return InputLayout(tuple(LayoutEntry(**e) for e in entries))

    return CompiledSpn(
        circuit=circuit,
        client_layout=layout(side["client_layout"]),
        server_layout=layout(side["server_layout"]),
        precision=FORMATS[side["precision"]],
        hide_scope=side["hide_scope"],
        marginals_enabled=side["marginals"],
        spn_digest=side["spn_digest"],
    )
