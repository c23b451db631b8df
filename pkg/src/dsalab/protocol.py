"""Aggregation schemes over prime fields.

Two schemes are implemented:

* optimal -- a dealer draws K-1 independent uniform seed vectors; user k
  gets seed k as its key and the last user gets the negated sum, so the
  K keys sum to zero while any K-1 of them stay mutually independent.
  Each user broadcasts its input masked by its key; summing all messages
  with one's own input and key cancels every key and yields the input sum.

* baseline -- the aggregation runs K times, each round designating one
  user as the aggregator.  The round's K-1 senders receive a fresh
  zero-sum key tuple, shuffled by a dealer-private permutation, and send
  their masked inputs to the aggregator only.  This costs K-1 times the
  communication and keys of the optimal scheme.

Construction is refused outside the feasible region (at least 3 users,
threshold at most users-3) unless the demonstration override is set.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .errors import Infeasible, MissingMessage, ShapeMismatch
from .field import (
    SymbolVector,
    check_prime,
    sample_permutation,
    sample_uniform_vector,
    vec_sum,
)


class Scheme(enum.Enum):
    OPTIMAL = "optimal"
    BASELINE = "baseline"


def feasibility_check(num_users: int, threshold: int) -> bool:
    """True iff secure aggregation is possible at all for this shape.

    The region is num_users >= 3 and threshold <= num_users - 3: with two
    users (or once an observer colludes with all but one other user) the
    input sum pins down the remaining input, so nothing can be hidden.
    """
    if num_users < 1 or threshold < 0:
        raise ValueError("need num_users >= 1 and threshold >= 0")
    return num_users >= 3 and threshold <= num_users - 3


@dataclass(frozen=True)
class ProtocolConfig:
    """Shape of one aggregation instance.

    num_users, threshold, input length and prime modulus, plus the scheme.
    Infeasible shapes only construct with allow_infeasible=True (used by
    the leakage demonstration).
    """

    num_users: int
    threshold: int = 0
    input_len: int = 1
    modulus: int = 2
    scheme: Scheme = Scheme.OPTIMAL
    allow_infeasible: bool = False

    def __post_init__(self):
        if self.num_users < 1:
            raise ValueError("need at least one user")
        if self.input_len < 1:
            raise ValueError("input length must be at least 1")
        if self.threshold < 0:
            raise ValueError("threshold cannot be negative")
        check_prime(self.modulus)
        if not isinstance(self.scheme, Scheme):
            object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.feasible and not self.allow_infeasible:
            raise Infeasible(
                f"num_users={self.num_users}, threshold={self.threshold} is "
                "outside the feasible region (need num_users >= 3 and "
                "threshold <= num_users - 3); set allow_infeasible to "
                "demonstrate the leakage anyway"
            )

    @property
    def feasible(self) -> bool:
        return feasibility_check(self.num_users, self.threshold)

    @property
    def users(self) -> range:
        return range(1, self.num_users + 1)

    def others(self, k: int) -> list:
        return [i for i in self.users if i != k]

    def to_json(self) -> dict:
        return {
            "users": self.num_users,
            "threshold": self.threshold,
            "input_len": self.input_len,
            "modulus": self.modulus,
            "scheme": self.scheme.value,
        }


@dataclass(frozen=True)
class SourceKey:
    """The dealer's master randomness.

    optimal:  seeds = K-1 independent uniform vectors, no permutations.
    baseline: seeds = K rounds x (K-2) independent vectors (round-major),
              perms = one uniform permutation of (1..K-1) per round; the
              last round key is always the negated sum of the round's
              seeds, so the materialized key pool has K-1 entries per
              round even though only K-2 of them are free.
    """

    seeds: tuple
    perms: tuple = ()

    def validate(self, cfg: ProtocolConfig) -> None:
        k, l = cfg.num_users, cfg.input_len
        expect = k - 1 if cfg.scheme is Scheme.OPTIMAL else k * (k - 2)
        if len(self.seeds) != expect:
            raise ShapeMismatch(
                f"{cfg.scheme.value} source key wants {expect} seed vectors, "
                f"got {len(self.seeds)}"
            )
        if cfg.scheme is Scheme.BASELINE and len(self.perms) != k:
            raise ShapeMismatch(
                f"baseline source key wants {k} round permutations, "
                f"got {len(self.perms)}"
            )
        for v in self.seeds:
            if len(v) != l or v.modulus != cfg.modulus:
                raise ShapeMismatch("seed vector shape does not match config")
        for p in self.perms:
            if sorted(p) != list(range(1, k)):
                raise ShapeMismatch("round permutation must reorder 1..K-1")

    def round_seeds(self, cfg: ProtocolConfig, round_index: int) -> tuple:
        """The K-2 free seed vectors of one baseline round (1-based)."""
        per_round = cfg.num_users - 2
        lo = (round_index - 1) * per_round
        return self.seeds[lo:lo + per_round]

    def round_keys(self, cfg: ProtocolConfig, round_index: int) -> tuple:
        """All K-1 round keys; the last one closes the zero sum."""
        free = self.round_seeds(cfg, round_index)
        closing = -vec_sum(free)
        return free + (closing,)

    def symbol_count(self, cfg: ProtocolConfig) -> int:
        """Total field symbols in the source key (the rate numerator).

        The baseline count includes each round's derived closing key:
        the collectively held key pool is K rounds of K-1 vectors.
        """
        if cfg.scheme is Scheme.OPTIMAL:
            return (cfg.num_users - 1) * cfg.input_len
        return cfg.num_users * (cfg.num_users - 1) * cfg.input_len

    def independent_symbol_count(self, cfg: ProtocolConfig) -> int:
        """Free uniform symbols actually drawn by the dealer."""
        return len(self.seeds) * cfg.input_len

    def to_json(self) -> dict:
        return {
            "seeds": [v.to_json() for v in self.seeds],
            "perms": [list(p) for p in self.perms],
        }


def generate_source_key(cfg: ProtocolConfig, rng: random.Random) -> SourceKey:
    """Draw the dealer's master randomness for the configured scheme."""
    if not cfg.feasible and not cfg.allow_infeasible:
        raise Infeasible("refusing to deal keys for an infeasible shape")
    k, l, q = cfg.num_users, cfg.input_len, cfg.modulus
    if cfg.scheme is Scheme.OPTIMAL:
        seeds = tuple(sample_uniform_vector(l, q, rng) for _ in range(k - 1))
        return SourceKey(seeds)
    seeds = tuple(
        sample_uniform_vector(l, q, rng)
        for _ in range(k)
        for _ in range(k - 2)
    )
    perms = tuple(sample_permutation(k - 1, rng) for _ in range(k))
    return SourceKey(seeds, perms)


@dataclass
class KeyAssignment:
    """Mapping user index (1-based) -> individual key vector."""

    keys: dict

    def __getitem__(self, k: int) -> SymbolVector:
        return self.keys[k]

    def sums_to_zero(self) -> bool:
        total = vec_sum(list(self.keys.values()))
        return all(s == 0 for s in total.symbols)

    def to_json(self) -> dict:
        return {str(k): v.to_json() for k, v in self.keys.items()}


def round_key_of(cfg: ProtocolConfig, src: SourceKey, round_index: int, sender: int) -> SymbolVector:
    """The key the permutation assigns to `sender` in one baseline round."""
    senders = cfg.others(round_index)
    position = senders.index(sender)
    key_index = src.perms[round_index - 1][position]
    return src.round_keys(cfg, round_index)[key_index - 1]


def derive_individual_keys(src: SourceKey, cfg: ProtocolConfig) -> KeyAssignment:
    """Deterministically derive every user's key from the source key.

    optimal:  key k = seed k for k < K, key K = -(sum of all seeds).
    baseline: key k = concatenation, over the rounds where k is a sender,
              of the round key its permutation slot assigns to it.
    """
    src.validate(cfg)
    k = cfg.num_users
    if cfg.scheme is Scheme.OPTIMAL:
        keys = {i: src.seeds[i - 1] for i in range(1, k)}
        keys[k] = -vec_sum(src.seeds)
        return KeyAssignment(keys)
    keys = {}
    for user in cfg.users:
        parts = [
            round_key_of(cfg, src, r, user) for r in cfg.users if r != user
        ]
        acc = parts[0]
        for p in parts[1:]:
            acc = acc.concat(p)
        keys[user] = acc
    return KeyAssignment(keys)


def encode_message(w_k: SymbolVector, z_k: SymbolVector) -> SymbolVector:
    """Mask an input with its key: the broadcast payload is w + z."""
    return w_k + z_k


def recover_sum(
    k: int,
    received: Mapping[int, SymbolVector],
    w_k: SymbolVector,
    z_k: SymbolVector,
) -> SymbolVector:
    """Decode the input sum from the K-1 received broadcasts.

    Summing every received message with one's own input and key cancels
    all keys (they sum to zero), leaving the sum of all inputs.
    """
    num_users = len(received) + 1
    expected = {i for i in range(1, num_users + 1) if i != k}
    if set(received) != expected:
        missing = sorted(expected - set(received))
        raise MissingMessage(f"user {k} is missing broadcasts from {missing}")
    return vec_sum(list(received.values())) + w_k + z_k


@dataclass(frozen=True)
class BroadcastMessage:
    """One transmitted payload; round 0 is the single optimal round."""

    round_index: int
    sender: int
    payload: SymbolVector

    def to_json(self) -> dict:
        return {
            "round": self.round_index,
            "sender": self.sender,
            "symbols": self.payload.to_json(),
        }


@dataclass
class Transcript:
    """Everything a finished run produced.

    For the baseline, messages carry the round they belong to and are
    addressed to that round's aggregator; incoming(k) returns exactly the
    K-1 messages user k observes under either scheme.
    """

    cfg: ProtocolConfig
    inputs: dict
    keys: KeyAssignment
    messages: tuple
    recovered: dict
    seed: int | None = None

    def messages_from(self, sender: int) -> list:
        return [m for m in self.messages if m.sender == sender]

    def incoming(self, k: int) -> list:
        if self.cfg.scheme is Scheme.OPTIMAL:
            return [m for m in self.messages if m.sender != k]
        return [m for m in self.messages if m.round_index == k]

    def transmitted_symbols(self, sender: int) -> int:
        return sum(len(m.payload) for m in self.messages_from(sender))

    def input_sum(self) -> SymbolVector:
        return vec_sum(list(self.inputs.values()))

    def to_json(self) -> dict:
        doc = self.cfg.to_json()
        doc.update(
            {
                "seed": self.seed,
                "inputs": {str(k): v.to_json() for k, v in self.inputs.items()},
                "keys": self.keys.to_json(),
                "messages": [m.to_json() for m in self.messages],
                "recovered": {
                    str(k): v.to_json() for k, v in self.recovered.items()
                },
            }
        )
        return doc


def baseline_round_messages(
    cfg: ProtocolConfig, inputs: Mapping[int, SymbolVector], src: SourceKey, round_index: int
) -> dict:
    """sender -> masked payload for one baseline round."""
    return {
        i: inputs[i] + round_key_of(cfg, src, round_index, i)
        for i in cfg.others(round_index)
    }


def baseline_execute(
    cfg: ProtocolConfig, inputs: Mapping[int, SymbolVector], src: SourceKey
) -> Transcript:
    """Run all K baseline rounds and record every message and decode.

    In round k each other user sends its input masked by its round key to
    user k; the round keys sum to zero, so the aggregator reads off the
    sum of the senders' inputs and adds its own.
    """
    if cfg.scheme is not Scheme.BASELINE:
        raise ValueError("baseline_execute needs a baseline config")
    if not cfg.feasible and not cfg.allow_infeasible:
        raise Infeasible("refusing to run an infeasible shape")
    src.validate(cfg)
    _check_inputs(cfg, inputs)
    messages = []
    recovered = {}
    for r in cfg.users:
        payloads = baseline_round_messages(cfg, inputs, src, r)
        for i in cfg.others(r):
            messages.append(BroadcastMessage(r, i, payloads[i]))
        recovered[r] = vec_sum(list(payloads.values())) + inputs[r]
    return Transcript(
        cfg=cfg,
        inputs=dict(inputs),
        keys=derive_individual_keys(src, cfg),
        messages=tuple(messages),
        recovered=recovered,
    )


def _check_inputs(cfg: ProtocolConfig, inputs: Mapping[int, SymbolVector]) -> None:
    if set(inputs) != set(cfg.users):
        raise ShapeMismatch("inputs must cover exactly users 1..K")
    for v in inputs.values():
        if len(v) != cfg.input_len or v.modulus != cfg.modulus:
            raise ShapeMismatch("input vector shape does not match config")


@dataclass(frozen=True)
class RateReport:
    """Exact rational rates: per-user messages, per-user key symbols, and
    collectively held independent key symbols, each normalized by the
    input length."""

    communication: Fraction
    individual_key: Fraction
    source_key: Fraction

    def as_tuple(self) -> tuple:
        return (self.communication, self.individual_key, self.source_key)

    def to_json(self) -> dict:
        def rat(x: Fraction) -> dict:
            return {"num": x.numerator, "den": x.denominator}

        return {
            "communication": rat(self.communication),
            "individual_key": rat(self.individual_key),
            "source_key": rat(self.source_key),
        }


def theoretical_rates(cfg: ProtocolConfig) -> RateReport:
    """The scheme's rates as exact rationals.

    optimal:  (1, 1, K-1)          baseline: (K-1, K-1, K(K-1))
    """
    if not cfg.feasible:
        raise Infeasible("rates are only defined on the feasible region")
    k = cfg.num_users
    if cfg.scheme is Scheme.OPTIMAL:
        return RateReport(Fraction(1), Fraction(1), Fraction(k - 1))
    return RateReport(
        Fraction(k - 1), Fraction(k - 1), Fraction(k * (k - 1))
    )
