import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hiercoop import calibration
from hiercoop.analytic import ConstraintError, generalized_mac_bound, mac_slots
from hiercoop.mac import MacProblem, full_problem, generalized_mac, random_targets, recursive_mac, tdma_mac
from hiercoop.netmodel import generate_network, ideal_network
from hiercoop.trace import write_jsonl


def test_tdma_counts_and_order():
    sched = tdma_mac(full_problem(np.arange(4), bits_per_pair=2))
    assert sched.total_slots == 4 * 3 * 2
    arrivals = [a for *_, a in sched.deliveries()]
    assert arrivals == sorted(arrivals) and arrivals[-1] == sched.total_slots
    sched.verify()


@pytest.mark.parametrize("m,levels", [(16, 2), (64, 3), (256, 2), (4096, 2), (4096, 3)])
def test_trace_equals_closed_form_on_ideal(m, levels):
    sched = recursive_mac(full_problem(np.arange(m)), levels, ideal_network(m), reuse=1)
    assert sched.total_slots == mac_slots(m, 2, levels)


@pytest.mark.parametrize("m,levels", [(16, 2), (64, 2), (100, 3), (256, 2)])
def test_every_pair_delivered(m, levels):
    sched = recursive_mac(full_problem(np.arange(m)), levels, generate_network(m, seed=m), reuse=9)
    sched.verify()


@given(st.integers(2, 120), st.integers(1, 3), st.integers(0, 500), st.sampled_from([1, 4, 9]))
@settings(max_examples=40, deadline=None)
def test_completeness_property(m, levels, seed, reuse):
    sched = recursive_mac(full_problem(np.arange(m)), levels, generate_network(m, seed=seed), reuse=reuse)
    sched.verify()
    assert len(list(sched.deliveries())) == m * (m - 1)


@given(st.integers(8, 150), st.integers(1, 3), st.integers(0, 500), st.data())
@settings(max_examples=40, deadline=None)
def test_generalized_completeness(m, levels, seed, data):
    A = data.draw(st.integers(1, m))
    rng = np.random.default_rng(seed)
    prob = MacProblem(np.arange(m), random_targets(np.arange(m), A, rng))
    sched = generalized_mac(prob, levels, generate_network(m, seed=seed), reuse=1, check=False)
    sched.verify()
    assert len(list(sched.deliveries())) == m * A - A


def test_payload_grows_by_q_per_level():
    sched = recursive_mac(full_problem(np.arange(256), q=3), 3, ideal_network(256), reuse=1)
    child = sched.children()[0]
    assert child.problem.bits_per_pair == 3
    assert all(g.problem.bits_per_pair == 9 for g in child.children())


def test_reuse_lengthens_cooperation():
    net = ideal_network(256)
    one = recursive_mac(full_problem(np.arange(256)), 2, net, reuse=1).total_slots
    nine = recursive_mac(full_problem(np.arange(256)), 2, net, reuse=9).total_slots
    assert nine > one


def test_reuse_must_be_square():
    with pytest.raises(ValueError):
        recursive_mac(full_problem(np.arange(64)), 2, ideal_network(64), reuse=3)


def test_generalized_target_threshold():
    # the needed condition is A >= m^((levels-1)/levels)
    m = 256
    prob = MacProblem(np.arange(m), np.arange(15))
    with pytest.raises(ConstraintError):
        generalized_mac(prob, 2, ideal_network(m))
    generalized_mac(MacProblem(np.arange(m), np.arange(16)), 2, ideal_network(m))
    with pytest.raises(ConstraintError):
        generalized_mac(MacProblem(np.arange(m), np.arange(16)), 3, ideal_network(m))


def test_recursive_needs_full_problem():
    with pytest.raises(ValueError):
        recursive_mac(MacProblem(np.arange(10), [1, 2]), 2, generate_network(10))


def test_problem_validation():
    with pytest.raises(ValueError):
        MacProblem(np.arange(5), [7])
    with pytest.raises(ValueError):
        MacProblem(np.arange(5), [])


def test_claimed_bound_holds_at_calibrated_k():
    for m in (64, 1024):
        for levels in (1, 2, 3):
            sched = recursive_mac(full_problem(np.arange(m)), levels, generate_network(m, seed=3), reuse=1)
            assert sched.total_slots <= sched.claimed_bound == calibration.MAC_K * m ** ((levels + 1) / levels)
    prob = MacProblem(np.arange(256), np.arange(0, 256, 4))
    sched = generalized_mac(prob, 2, generate_network(256, seed=3), reuse=1)
    assert sched.claimed_bound == pytest.approx(generalized_mac_bound(256, 64, 2, calibration.GENERALIZED_MAC_K))


def test_jsonl_stream():
    sched = recursive_mac(full_problem(np.arange(64)), 2, ideal_network(64), reuse=1)
    buf = io.StringIO()
    flat = write_jsonl(sched.trace, buf)
    assert flat == len(sched.trace.events)
    rec = json.loads(buf.getvalue().splitlines()[0])
    assert set(rec) == {"slots", "phase", "cluster", "kind", "payload", "depth", "repeat"}
    buf = io.StringIO()
    deep = write_jsonl(sched.trace, buf, expand=True)
    depths = {json.loads(line)["depth"] for line in buf.getvalue().splitlines()}
    assert deep > flat and depths == {0, 1}
