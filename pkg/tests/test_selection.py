import numpy as np
import pytest

from cryptospn.circuit import CLIENT, SERVER, InputGroup
from cryptospn.selection import (
    program_selection,
    selection_formula_cost,
    selection_switch_count,
    selection_template,
    waksman_program,
    waksman_switch_count,
)


def route(n, m, width, phi, words, rng):
    tpl = selection_template(n, m, width)
    circ = tpl.as_circuit([
        InputGroup("words", CLIENT, n * width),
        InputGroup("ctrl", SERVER, selection_switch_count(n, m)),
    ])
    client = np.concatenate([words[i] for i in range(n)])[None, :]
    server = program_selection(phi, n)[None, :]
    out = circ.simulate_batch(client, server)["out"][0]
    return [out[k * width : (k + 1) * width] for k in range(m)]


def test_formula_worked_example():
    assert selection_formula_cost(4, 8) == 33


def test_waksman_counts():
    assert [waksman_switch_count(k) for k in (1, 2, 3, 4, 5, 6, 7, 8)] == [
        0, 1, 3, 5, 8, 11, 14, 17]
    for k in (2, 4, 8, 16, 64, 256):
        assert waksman_switch_count(k) == k * int(np.log2(k)) - k + 1


@pytest.mark.parametrize("n", [2, 3, 5, 8, 13, 33, 64])
def test_waksman_program_length(n):
    rng = np.random.default_rng(n)
    perm = list(rng.permutation(n))
    assert len(waksman_program(perm)) == waksman_switch_count(n)


def test_spec_worked_example():
    # two inputs (a, b), phi picks (2nd, 1st, 2nd)
    rng = np.random.default_rng(7)
    words = rng.integers(0, 2, (2, 8), dtype=np.uint8)
    out = route(2, 3, 8, [1, 0, 1], words, rng)
    assert (out[0] == words[1]).all()
    assert (out[1] == words[0]).all()
    assert (out[2] == words[1]).all()


def test_identity_permutation():
    rng = np.random.default_rng(3)
    n = 6
    words = rng.integers(0, 2, (n, 4), dtype=np.uint8)
    out = route(n, n, 4, list(range(n)), words, rng)
    for i in range(n):
        assert (out[i] == words[i]).all()


def test_random_instances_match_direct_gather():
    rng = np.random.default_rng(42)
    for trial in range(40):
        n = int(rng.integers(1, 17))
        m = int(n + rng.integers(0, 24))
        width = int(rng.integers(1, 7))
        phi = list(rng.integers(0, n, m))
        words = rng.integers(0, 2, (n, width), dtype=np.uint8)
        out = route(n, m, width, phi, words, rng)
        for j in range(m):
            assert (out[j] == words[phi[j]]).all(), (n, m, width, phi, j)


def test_and_count_is_width_times_switches():
    for n, m, width in [(2, 3, 8), (4, 8, 3), (1, 9, 2), (5, 5, 1), (3, 17, 4)]:
        tpl = selection_template(n, m, width)
        n_and = sum(1 for k in tpl.kinds if k == 1)
        assert n_and == width * selection_switch_count(n, m)


def test_bad_arguments_rejected():
    with pytest.raises(ValueError):
        selection_switch_count(5, 4)
    with pytest.raises(ValueError):
        selection_formula_cost(0, 4)
    with pytest.raises(ValueError):
        program_selection([0, 2], 2)
    with pytest.raises(ValueError):
        program_selection([0, 0], 3)
