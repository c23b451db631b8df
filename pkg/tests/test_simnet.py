"""Tests for the network simulator: runs, adversary views, sweeps, replay."""

import io
import random
from fractions import Fraction

import pytest

from dsalab.errors import DecodeFailure, Infeasible, InvalidCollusion
from dsalab.field import SymbolVector
from dsalab.protocol import ProtocolConfig, Scheme, theoretical_rates
from dsalab.simnet import (
    ChannelModel,
    NodeState,
    collude,
    read_replay,
    run_protocol,
    sweep,
    write_replay,
)


def cfg_of(k, t=0, l=1, q=2, scheme=Scheme.OPTIMAL):
    return ProtocolConfig(
        num_users=k, threshold=t, input_len=l, modulus=q, scheme=scheme
    )


def test_measured_rates_k3_optimal():
    _, rates = run_protocol(cfg_of(3), seed=0)
    assert rates.report().as_tuple() == (1, 1, 2)
    assert rates.matches(theoretical_rates(cfg_of(3)))


def test_measured_rates_k4_baseline():
    cfg = cfg_of(4, scheme=Scheme.BASELINE)
    _, rates = run_protocol(cfg, seed=0)
    assert rates.report().as_tuple() == (3, 3, 12)
    assert rates.matches(theoretical_rates(cfg))


def test_dealer_unicast_overhead():
    # the dealer sends each user its key privately: K * R_Z * L symbols
    for cfg in [cfg_of(4, l=2, q=3), cfg_of(3, scheme=Scheme.BASELINE)]:
        _, rates = run_protocol(cfg, seed=1)
        assert rates.dealer_unicast_symbols == (
            cfg.num_users * rates.key_symbols_per_user
        )
        assert rates.dealer_unicast == cfg.num_users * rates.individual_key


def test_every_user_recovers_the_sum():
    for scheme in (Scheme.OPTIMAL, Scheme.BASELINE):
        cfg = cfg_of(5, l=2, q=3, scheme=scheme)
        transcript, _ = run_protocol(cfg, seed=3)
        expected = transcript.input_sum()
        assert all(transcript.recovered[k] == expected for k in cfg.users)


def test_pinned_inputs_are_respected():
    cfg = cfg_of(3, q=5)
    inputs = {k: SymbolVector((k,), 5) for k in cfg.users}
    transcript, _ = run_protocol(cfg, inputs, seed=4)
    assert transcript.inputs == inputs
    assert transcript.recovered[2] == SymbolVector((1 + 2 + 3,), 5)


@pytest.mark.parametrize("scheme", [Scheme.OPTIMAL, Scheme.BASELINE])
def test_delivery_order_invariance(scheme):
    cfg = cfg_of(4, q=3, scheme=scheme)
    rng = random.Random(5)
    base, _ = run_protocol(cfg, seed=6)
    for _ in range(5):
        order = list(cfg.users)
        rng.shuffle(order)
        permuted, _ = run_protocol(cfg, seed=6, delivery_order=order)
        assert permuted.recovered == base.recovered
        assert sorted(permuted.messages, key=lambda m: (m.round_index, m.sender)) == \
            sorted(base.messages, key=lambda m: (m.round_index, m.sender))


@pytest.mark.parametrize("scheme", [Scheme.OPTIMAL, Scheme.BASELINE])
def test_same_seed_same_transcript(scheme):
    cfg = cfg_of(4, scheme=scheme)
    first, rates_a = run_protocol(cfg, seed=7)
    second, rates_b = run_protocol(cfg, seed=7)
    assert first == second
    assert rates_a == rates_b
    third, _ = run_protocol(cfg, seed=8)
    assert third != first


def test_run_refuses_infeasible():
    cfg = ProtocolConfig(num_users=4, threshold=2, allow_infeasible=True)
    transcript, _ = run_protocol(cfg, seed=0)  # override allows execution
    assert len(transcript.messages) == 4
    with pytest.raises(Infeasible):
        ProtocolConfig(num_users=2)


def test_broadcast_reaches_everyone_else_unmodified():
    nodes = {
        k: NodeState(k, 4, SymbolVector((0,), 2), SymbolVector((0,), 2), inbox={})
        for k in range(1, 5)
    }
    payload = SymbolVector((1,), 2)
    ChannelModel().broadcast(2, payload, nodes)
    assert nodes[2].inbox == {}
    for k in (1, 3, 4):
        assert nodes[k].inbox == {2: payload}


def test_channel_rejects_bad_delivery_order():
    from dsalab.errors import ShapeMismatch

    with pytest.raises(ShapeMismatch):
        run_protocol(cfg_of(3), seed=0, delivery_order=[1, 2])


def test_decode_guard():
    node = NodeState(
        user=1,
        num_users=3,
        own_input=SymbolVector((0,), 2),
        own_key=SymbolVector((0,), 2),
        inbox={2: SymbolVector((1,), 2)},
    )
    with pytest.raises(DecodeFailure):
        node.decode()


# -- adversary views ---------------------------------------------------------


def test_empty_collusion_view():
    cfg = cfg_of(4, t=1)
    transcript, _ = run_protocol(cfg, seed=9)
    view = collude(transcript, 1, ())
    assert view.colluders == frozenset()
    assert len(view.observed_messages) == 3
    assert view.collected == {}
    assert view.own_input == transcript.inputs[1]


def test_collusion_includes_partner_secrets():
    cfg = cfg_of(4, t=1)
    transcript, _ = run_protocol(cfg, seed=10)
    view = collude(transcript, 1, {2})
    assert view.collected[2] == (transcript.inputs[2], transcript.keys[2])


def test_collusion_guards():
    cfg = cfg_of(3)
    transcript, _ = run_protocol(cfg, seed=11)
    with pytest.raises(InvalidCollusion):
        collude(transcript, 1, {2, 3})
    with pytest.raises(InvalidCollusion):
        collude(transcript, 1, {1})
    view = collude(transcript, 1, {2, 3}, override=True)
    assert view.colluders == {2, 3}


def test_baseline_view_is_round_addressed():
    cfg = cfg_of(3, scheme=Scheme.BASELINE)
    transcript, _ = run_protocol(cfg, seed=12)
    view = collude(transcript, 2, ())
    assert len(view.observed_messages) == 2
    assert all(m.round_index == 2 for m in view.observed_messages)


# -- sweeps --------------------------------------------------------------------


def test_sweep_optimal_grid():
    grid = [cfg_of(k) for k in (3, 4, 5)]
    report = sweep(grid, trials=100, rng=random.Random(13))
    assert report["passed"]
    for point, k in zip(report["points"], (3, 4, 5)):
        assert point["recovery_failures"] == 0
        assert point["rates_match"]
        assert point["theoretical"]["source_key"] == {"num": k - 1, "den": 1}


def test_sweep_baseline_dominates_optimal():
    k = 3
    report = sweep(
        [cfg_of(k), cfg_of(k, scheme=Scheme.BASELINE)],
        trials=5,
        rng=random.Random(14),
    )
    opt, base = report["points"]
    f = lambda d: Fraction(d["num"], d["den"])
    assert f(base["theoretical"]["communication"]) == (k - 1) * f(
        opt["theoretical"]["communication"]
    )
    assert f(base["theoretical"]["individual_key"]) == (k - 1) * f(
        opt["theoretical"]["individual_key"]
    )
    assert f(base["theoretical"]["source_key"]) == k * f(
        opt["theoretical"]["source_key"]
    )


def test_sweep_zero_trials_is_vacuous():
    report = sweep([cfg_of(3)], trials=0, rng=random.Random(15))
    assert report["passed"]
    assert report["points"][0]["measured"] is None
    assert report["points"][0]["recovery_failures"] == 0


# -- replay files -----------------------------------------------------------------


@pytest.mark.parametrize("scheme", [Scheme.OPTIMAL, Scheme.BASELINE])
def test_replay_roundtrip(scheme):
    cfg = cfg_of(3, q=5, l=2, scheme=scheme)
    transcript, _ = run_protocol(cfg, seed=16)
    buf = io.StringIO()
    write_replay(transcript, buf)
    buf.seek(0)
    header, messages = read_replay(buf)
    assert header["users"] == 3
    assert header["modulus"] == 5
    assert header["scheme"] == scheme.value
    assert header["seed"] == 16
    assert tuple(messages) == transcript.messages


def test_rates_json_uses_rationals():
    _, rates = run_protocol(cfg_of(3), seed=17)
    doc = rates.to_json()
    assert doc["communication"] == {"num": 1, "den": 1}
    assert doc["source_symbols"] == 2
    assert doc["dealer_unicast"] == {"num": 3, "den": 1}
