"""Compilation: numeric fidelity, input layouts, gate counts, round trips."""

import math

import numpy as np
import pytest

from cryptospn.circuit import CLIENT, SERVER, bits_to_float
from cryptospn.compiler import (TAG_FLAG, TAG_LFACT, TAG_PARAM, TAG_RV, TAG_SEL,
                                TAG_WEIGHT, CompiledSpn, compile_spn,
                                derive_client_inputs, derive_server_inputs,
                                leaf_constants, load_compiled, save_compiled)
from cryptospn.costs import measured_constants, predict_gates
from cryptospn.selection import selection_switch_count
from cryptospn.spn import (Bernoulli, Evidence, LeafNode, SpnError, SpnGraph,
                           SumNode, log_likelihood)
from spn_fixtures import (independent_pair, random_spn, single_rv_mixture,
                          two_product_mixture)


def _decode(spn, comp, values):
    sb = derive_server_inputs(spn, comp)
    cb = derive_client_inputs(comp, Evidence.of(values))
    out = comp.circuit.simulate(cb, sb)["log2_prob"]
    return bits_to_float(comp.precision, out)


def _evidence_for(family, n, rng):
    if family == "bern":
        return list(rng.integers(0, 2, n))
    if family == "pois":
        return [int(v) for v in rng.integers(0, 6, n)]
    return [float(v) for v in rng.normal(0.0, 1.5, n)]


class TestNumericFidelity:
    @pytest.mark.parametrize("family", ["bern", "gauss", "pois"])
    @pytest.mark.parametrize("bits,tol", [(32, 1e-3), (64, 1e-9)])
    def test_simulation_tracks_plain_inference(self, family, bits, tol):
        rng = np.random.default_rng(hash((family, bits)) % 2**32)
        for seed in (1, 2, 3):
            spn = random_spn(4, seed=seed, family=family)
            comp = compile_spn(spn, bits)
            for _ in range(3):
                ev = _evidence_for(family, spn.num_rvs, rng)
                got = _decode(spn, comp, ev)
                want = log_likelihood(spn, Evidence.of(ev))
                assert got == pytest.approx(want, abs=tol)

    def test_marginalization_inside_the_circuit(self):
        spn = two_product_mixture()
        comp = compile_spn(spn, 64, marginals=True)
        cases = [([1, None], math.log2(0.7)),
                 ([None, 1], math.log2(0.3)),
                 ([None, None], 0.0),
                 ([1, 1], math.log2(0.2))]
        for ev, want in cases:
            assert log_likelihood(spn, Evidence.of(ev)) == pytest.approx(
                want, abs=1e-12)
            assert _decode(spn, comp, ev) == pytest.approx(want, abs=1e-9)

    @pytest.mark.parametrize("family", ["bern", "gauss", "pois"])
    def test_scope_hiding_is_numerically_transparent(self, family):
        spn = random_spn(3, seed=9, family=family)
        plain = compile_spn(spn, 32)
        hidden = compile_spn(spn, 32, hide_scope=True)
        rng = np.random.default_rng(10)
        for _ in range(3):
            ev = _evidence_for(family, spn.num_rvs, rng)
            sbp = derive_server_inputs(spn, plain)
            cbp = derive_client_inputs(plain, Evidence.of(ev))
            sbh = derive_server_inputs(spn, hidden)
            cbh = derive_client_inputs(hidden, Evidence.of(ev))
            a = plain.circuit.simulate(cbp, sbp)["log2_prob"]
            b = hidden.circuit.simulate(cbh, sbh)["log2_prob"]
            assert np.array_equal(a, b)  # routing only, bit for bit


class TestLayouts:
    @pytest.mark.parametrize("family,word", [("bern", 1), ("gauss", 32),
                                             ("pois", 64)])
    def test_client_widths(self, family, word):
        spn = random_spn(4, seed=4, family=family)
        n = spn.num_rvs
        comp = compile_spn(spn, 32)
        assert comp.client_layout.total_bits == n * word
        marg = compile_spn(spn, 32, marginals=True)
        assert marg.client_layout.total_bits == n * word + n
        assert len(marg.client_layout.tagged(TAG_FLAG)) == n

    @pytest.mark.parametrize("family,per_leaf", [("bern", 2), ("gauss", 3),
                                                 ("pois", 2)])
    def test_server_widths(self, family, per_leaf):
        spn = random_spn(4, seed=5, family=family)
        b = 32
        m = spn.counts()["leaf"]
        sum_ch = sum(len(nd.children) for nd in spn.nodes
                     if isinstance(nd, SumNode))
        comp = compile_spn(spn, b)
        assert comp.server_layout.total_bits == per_leaf * m * b + b * sum_ch
        hid = compile_spn(spn, b, hide_scope=True)
        s = selection_switch_count(spn.num_rvs, m)
        assert hid.server_layout.total_bits == (per_leaf * m * b + b * sum_ch
                                                + s)
        assert hid.server_layout.tagged(TAG_SEL)[0].width == s

    def test_layouts_cover_circuit_inputs(self):
        spn = random_spn(4, seed=6, family="pois")
        comp = compile_spn(spn, 32, hide_scope=True, marginals=True)
        assert comp.client_layout.total_bits == comp.circuit.party_bits(CLIENT)
        assert comp.server_layout.total_bits == comp.circuit.party_bits(SERVER)
        assert comp.family == "pois"
        assert comp.num_rvs == spn.num_rvs

    @pytest.mark.parametrize("family,bits,hide,marg", [
        ("bern", 32, False, False), ("bern", 32, True, True),
        ("gauss", 32, False, True), ("pois", 64, True, False),
        ("gauss", 64, True, True), ("pois", 32, False, True),
    ])
    def test_and_count_matches_closed_form(self, family, bits, hide, marg):
        spn = random_spn(4, seed=7, family=family)
        comp = compile_spn(spn, bits, hide_scope=hide, marginals=marg)
        pred = predict_gates(spn, bits, hide_scope=hide, marginals=marg)
        assert pred.and_gates == comp.circuit.and_count


class TestRoundTrip:
    def test_save_load_preserves_everything(self, tmp_path):
        spn = two_product_mixture()
        comp = compile_spn(spn, 32, hide_scope=True, marginals=True)
        path = str(tmp_path / "model.circ")
        save_compiled(comp, path)
        back = load_compiled(path)
        assert isinstance(back, CompiledSpn)
        assert back.spn_digest == comp.spn_digest
        assert back.precision.bits == 32
        assert back.hide_scope and back.marginals_enabled
        assert back.client_layout == comp.client_layout
        assert back.server_layout == comp.server_layout
        assert np.array_equal(back.circuit.kinds, comp.circuit.kinds)
        assert np.array_equal(back.circuit.in_a, comp.circuit.in_a)
        assert np.array_equal(back.circuit.in_b, comp.circuit.in_b)

        ev = Evidence.of([1, None])
        sb = derive_server_inputs(spn, back)
        cb = derive_client_inputs(back, ev)
        out = back.circuit.simulate(cb, sb)["log2_prob"]
        assert bits_to_float(back.precision, out) == pytest.approx(
            math.log2(0.7), abs=1e-3)


class TestGuards:
    def test_invalid_spn_does_not_compile(self):
        bad = SpnGraph(nodes=(LeafNode(0, Bernoulli(0.4)),
                              LeafNode(0, Bernoulli(0.6)),
                              SumNode((0, 1), (0.9, 0.9))),
                       root=2, num_rvs=1)
        with pytest.raises(SpnError, match="cannot compile"):
            compile_spn(bad, 32)

    def test_hide_scope_needs_one_leaf_per_rv(self):
        sparse = SpnGraph(nodes=(LeafNode(0, Bernoulli(0.4)),),
                          root=0, num_rvs=2)
        with pytest.raises(SpnError, match="at least one leaf per RV"):
            compile_spn(sparse, 32, hide_scope=True)

    def test_server_inputs_reject_wrong_model(self):
        comp = compile_spn(two_product_mixture(), 32)
        with pytest.raises(SpnError, match="does not match the compiled"):
            derive_server_inputs(single_rv_mixture(), comp)

    def test_degenerate_bernoulli_has_no_log_constants(self):
        with pytest.raises(SpnError, match="no finite log2"):
            leaf_constants(Bernoulli(1.0))

    def test_client_input_guards(self):
        spn = two_product_mixture()
        comp = compile_spn(spn, 32)
        with pytest.raises(SpnError, match="evidence length"):
            derive_client_inputs(comp, Evidence.of([1]))
        with pytest.raises(SpnError, match="must be 0 or 1"):
            derive_client_inputs(comp, Evidence.of([1, 2]))
        with pytest.raises(SpnError, match="without marginal"):
            derive_client_inputs(comp, Evidence.of([1, None]))

        pois = random_spn(2, seed=8, family="pois")
        pcomp = compile_spn(pois, 32)
        with pytest.raises(SpnError, match="integer >= 0"):
            derive_client_inputs(pcomp, Evidence.of([1, -3]))
        with pytest.raises(SpnError, match="integer >= 0"):
            derive_client_inputs(pcomp, Evidence.of([1, 2.5]))

        gauss = random_spn(2, seed=8, family="gauss")
        gcomp = compile_spn(gauss, 32)
        with pytest.raises(SpnError, match="finite"):
            derive_client_inputs(gcomp, Evidence.of([0.0, math.inf]))

    def test_independent_pair_sanity(self):
        spn = independent_pair()
        comp = compile_spn(spn, 64)
        for ev in ([0, 0], [0, 1], [1, 0], [1, 1]):
            got = _decode(spn, comp, ev)
            want = log_likelihood(spn, Evidence.of(ev))
            assert got == pytest.approx(want, abs=1e-9)
