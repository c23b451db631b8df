"""Message-passing simulation of the fully connected aggregation network.

A trusted in-process dealer draws the source key and unicasts each user
its individual key; users then broadcast their masked inputs over
error-free orthogonal channels and decode the input sum.  The schedule is
two-phase (key distribution, then one broadcast round; K rounds for the
baseline).  Delivery order is a test knob: decoding is order-independent
summation, and the simulator asserts that rather than fixing an order.

The adversary is passive: `collude` assembles exactly what an observer
knows (its own input and key, the K-1 messages it received, and the
colluders' inputs and keys) without modifying anything.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import (
    DecodeFailure,
    DsaError,
    Infeasible,
    InvalidCollusion,
    ShapeMismatch,
)
from .field import SymbolVector, sample_uniform_vector, vec_sum
from .protocol import (
    BroadcastMessage,
    ProtocolConfig,
    RateReport,
    Scheme,
    Transcript,
    baseline_round_messages,
    derive_individual_keys,
    encode_message,
    generate_source_key,
    recover_sum,
    theoretical_rates,
)


@dataclass(frozen=True)
class ChannelModel:
    """Error-free orthogonal channels between the users.

    Every transmission reaches its recipients unmodified; there is no
    interference between senders.  delivery_order only permutes when
    senders are processed -- decoding is order-independent summation, and
    the tests assert that rather than fixing a canonical order.
    """

    delivery_order: tuple | None = None

    def sender_order(self, cfg: ProtocolConfig) -> list:
        if self.delivery_order is None:
            return list(cfg.users)
        order = list(self.delivery_order)
        if sorted(order) != list(cfg.users):
            raise ShapeMismatch(
                "delivery order must be a permutation of the users"
            )
        return order

    def broadcast(self, sender: int, payload: SymbolVector, nodes: Mapping) -> None:
        """Deliver one payload to every node except the sender."""
        for receiver, node in nodes.items():
            if receiver != sender:
                node.deliver(sender, payload)

    def send(self, sender: int, payload: SymbolVector, node: "NodeState") -> None:
        """Addressed delivery, used by the baseline's per-round traffic."""
        node.deliver(sender, payload)


@dataclass
class NodeState:
    """One user's local state during a run."""

    user: int
    num_users: int
    own_input: SymbolVector
    own_key: SymbolVector
    inbox: dict
    recovered: SymbolVector | None = None

    def deliver(self, sender: int, payload: SymbolVector) -> None:
        self.inbox[sender] = payload

    def decode(self) -> None:
        if self.user in self.inbox or len(self.inbox) != self.num_users - 1:
            raise DecodeFailure(
                f"user {self.user} decoded with inbox {sorted(self.inbox)}"
            )
        self.recovered = recover_sum(
            self.user, self.inbox, self.own_input, self.own_key
        )


@dataclass(frozen=True)
class MeasuredRates:
    """Exact symbol counts from a run; rates are the counts over input_len."""

    input_len: int
    transmitted_per_user: int
    key_symbols_per_user: int
    source_symbols: int
    dealer_unicast_symbols: int

    @property
    def communication(self) -> Fraction:
        return Fraction(self.transmitted_per_user, self.input_len)

    @property
    def individual_key(self) -> Fraction:
        return Fraction(self.key_symbols_per_user, self.input_len)

    @property
    def source_key(self) -> Fraction:
        return Fraction(self.source_symbols, self.input_len)

    @property
    def dealer_unicast(self) -> Fraction:
        return Fraction(self.dealer_unicast_symbols, self.input_len)

    def report(self) -> RateReport:
        return RateReport(self.communication, self.individual_key, self.source_key)

    def matches(self, theoretical: RateReport) -> bool:
        return self.report() == theoretical

    def to_json(self) -> dict:
        doc = {
            "input_len": self.input_len,
            "transmitted_per_user": self.transmitted_per_user,
            "key_symbols_per_user": self.key_symbols_per_user,
            "source_symbols": self.source_symbols,
            "dealer_unicast_symbols": self.dealer_unicast_symbols,
        }
        doc.update(self.report().to_json())
        doc["dealer_unicast"] = {
            "num": self.dealer_unicast.numerator,
            "den": self.dealer_unicast.denominator,
        }
        return doc


@dataclass(frozen=True)
class AdversaryView:
    """Exactly the information available to one passive observer."""

    observer: int
    colluders: frozenset
    own_input: SymbolVector
    own_key: SymbolVector
    observed_messages: tuple
    collected: dict

    def to_json(self) -> dict:
        return {
            "observer": self.observer,
            "colluders": sorted(self.colluders),
            "own_input": self.own_input.to_json(),
            "own_key": self.own_key.to_json(),
            "observed_messages": [m.to_json() for m in self.observed_messages],
            "collected": {
                str(i): {"input": w.to_json(), "key": z.to_json()}
                for i, (w, z) in self.collected.items()
            },
        }


def _validate_inputs(cfg: ProtocolConfig, inputs: Mapping) -> dict:
    if set(inputs) != set(cfg.users):
        raise ShapeMismatch("inputs must cover exactly users 1..K")
    for v in inputs.values():
        if len(v) != cfg.input_len or v.modulus != cfg.modulus:
            raise ShapeMismatch("input vector shape does not match config")
    return dict(inputs)


def run_protocol(
    cfg: ProtocolConfig,
    inputs: Mapping | None = None,
    *,
    rng: random.Random | None = None,
    seed: int | None = None,
    delivery_order: Sequence | None = None,
):
    """Execute one full run and account for every symbol moved.

    Inputs are sampled uniformly when absent (drawn before the source
    key, so a fixed seed reproduces the whole run).  Returns the
    transcript and the measured rates.
    """
    if not cfg.feasible and not cfg.allow_infeasible:
        raise Infeasible("refusing to run an infeasible shape")
    if rng is None:
        rng = random.Random(seed)
    if inputs is None:
        inputs = {
            k: sample_uniform_vector(cfg.input_len, cfg.modulus, rng)
            for k in cfg.users
        }
    else:
        inputs = _validate_inputs(cfg, inputs)
    src = generate_source_key(cfg, rng)
    keys = derive_individual_keys(src, cfg)
    channel = ChannelModel(
        tuple(delivery_order) if delivery_order is not None else None
    )
    order = channel.sender_order(cfg)

    if cfg.scheme is Scheme.OPTIMAL:
        nodes = {
            k: NodeState(k, cfg.num_users, inputs[k], keys[k], inbox={})
            for k in cfg.users
        }
        payloads = {k: encode_message(inputs[k], keys[k]) for k in cfg.users}
        messages = []
        for sender in order:
            messages.append(BroadcastMessage(0, sender, payloads[sender]))
            channel.broadcast(sender, payloads[sender], nodes)
        for k in cfg.users:
            nodes[k].decode()
        recovered = {k: nodes[k].recovered for k in cfg.users}
    else:
        messages = []
        recovered = {}
        for r in cfg.users:
            aggregator = NodeState(
                r, cfg.num_users, inputs[r], keys[r], inbox={}
            )
            payloads = baseline_round_messages(cfg, inputs, src, r)
            for sender in [u for u in order if u != r]:
                messages.append(BroadcastMessage(r, sender, payloads[sender]))
                channel.send(sender, payloads[sender], aggregator)
            if len(aggregator.inbox) != cfg.num_users - 1:
                raise DecodeFailure(f"round {r} inbox incomplete")
            recovered[r] = vec_sum(list(aggregator.inbox.values())) + inputs[r]

    transcript = Transcript(
        cfg=cfg,
        inputs=inputs,
        keys=keys,
        messages=tuple(messages),
        recovered=recovered,
        seed=seed,
    )
    per_user = {k: transcript.transmitted_symbols(k) for k in cfg.users}
    if len(set(per_user.values())) != 1:
        raise DecodeFailure(f"asymmetric transmission counts: {per_user}")
    key_symbols = {len(keys[k]) for k in cfg.users}
    if len(key_symbols) != 1:
        raise DecodeFailure("asymmetric key sizes")
    rates = MeasuredRates(
        input_len=cfg.input_len,
        transmitted_per_user=per_user[1],
        key_symbols_per_user=key_symbols.pop(),
        source_symbols=src.symbol_count(cfg),
        dealer_unicast_symbols=sum(len(keys[k]) for k in cfg.users),
    )
    return transcript, rates


def collude(
    transcript: Transcript,
    k: int,
    t_set: Iterable = (),
    *,
    override: bool = False,
) -> AdversaryView:
    """Assemble the passive view of observer k colluding with t_set."""
    cfg = transcript.cfg
    t = frozenset(t_set)
    if k not in cfg.users or not t <= set(cfg.users):
        raise InvalidCollusion("observer and colluders must be users")
    if k in t:
        raise InvalidCollusion(f"observer {k} cannot collude with itself")
    if len(t) > cfg.threshold and not override:
        raise InvalidCollusion(
            f"{len(t)} colluders exceed the threshold {cfg.threshold}"
        )
    return AdversaryView(
        observer=k,
        colluders=t,
        own_input=transcript.inputs[k],
        own_key=transcript.keys[k],
        observed_messages=tuple(transcript.incoming(k)),
        collected={i: (transcript.inputs[i], transcript.keys[i]) for i in sorted(t)},
    )


def sweep(
    grid: Iterable[ProtocolConfig],
    trials: int,
    rng: random.Random | None = None,
) -> dict:
    """Run `trials` executions per grid point and cross-check the rates.

    Asserts recovery on every run; measured rates must equal the
    theoretical rates exactly (integer symbol counts, no tolerance).
    """
    if rng is None:
        rng = random.Random(0)
    points = []
    all_ok = True
    for cfg in grid:
        theoretical = theoretical_rates(cfg)
        failures = 0
        measured = None
        for _ in range(trials):
            try:
                transcript, rates = run_protocol(cfg, rng=rng)
            except DsaError as err:
                err.args = (f"grid point {cfg.to_json()}: {err}",)
                raise
            expected = transcript.input_sum()
            if any(transcript.recovered[k] != expected for k in cfg.users):
                failures += 1
            if measured is None:
                measured = rates
            elif rates != measured:
                failures += 1
        rates_match = measured is None or measured.matches(theoretical)
        ok = failures == 0 and rates_match
        all_ok = all_ok and ok
        points.append(
            {
                "config": cfg.to_json(),
                "trials": trials,
                "recovery_failures": failures,
                "rates_match": rates_match,
                "theoretical": theoretical.to_json(),
                "measured": measured.to_json() if measured else None,
                "ok": ok,
            }
        )
    return {"points": points, "passed": all_ok}


# -- transcript replay files ------------------------------------------------


def write_replay(transcript: Transcript, fp) -> None:
    """Line-oriented replay: a header line, then one line per message."""
    header = transcript.cfg.to_json()
    header["seed"] = transcript.seed
    fp.write(json.dumps(header) + "\n")
    for m in transcript.messages:
        fp.write(json.dumps(m.to_json()) + "\n")


def read_replay(fp):
    """Parse a replay file back into its header and message records."""
    lines = [line for line in fp.read().splitlines() if line.strip()]
    if not lines:
        raise DsaError("empty replay file")
    header = json.loads(lines[0])
    modulus = header["modulus"]
    messages = []
    for line in lines[1:]:
        rec = json.loads(line)
        messages.append(
            BroadcastMessage(
                rec["round"],
                rec["sender"],
                SymbolVector(tuple(rec["symbols"]), modulus),
            )
        )
    return header, messages
