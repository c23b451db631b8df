"""Exact information audits over the finite seed space.

Every primitive random symbol in a run -- the K inputs, the dealer's seed
symbols, and (for the baseline) the per-round permutation draws -- spans a
finite uniform outcome space.  This module enumerates that space exactly:
probabilities are integer counts over the total, and only the final
logarithm (base q, so one uniform field symbol has entropy 1) is floating
point.  Zero mutual information is certified, when possible, by an integer
factorization identity on the count tables instead of a tolerance.

A note on wording: checks derived from general lower-bound arguments can
only be *consistent with* those bounds on the schemes implemented here;
a numeric audit never proves a statement quantified over all conceivable
schemes.  Report text uses "consistent with" accordingly.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from .errors import BudgetExceeded, Infeasible, InvalidCollusion
from .protocol import ProtocolConfig, Scheme

DEFAULT_BUDGET = 1 << 24
ZERO_TOLERANCE = 1e-9

SUM_VAR = "sum"


def input_var(k: int) -> str:
    return f"input{k}"


def key_var(k: int) -> str:
    return f"key{k}"


def msg_var(k: int) -> str:
    return f"msg{k}"


def round_msg_var(sender: int, round_index: int) -> str:
    return f"msg{sender}.r{round_index}"


@dataclass(frozen=True)
class DerivedVariable:
    """A named deterministic function of one full seed assignment.

    The evaluator maps the flat digit tuple of an outcome to a hashable
    value (here always a tuple of residues).
    """

    name: str
    evaluator: Callable


@dataclass(frozen=True)
class AuditResult:
    """One audited quantity in q-ary units.

    exact_zero is set only when the integer count structure certifies the
    value is exactly zero, in which case value is 0.0 by construction.
    expected/relation describe the claim being checked; expected=None
    marks a plain measurement.
    """

    quantity: str
    value: float
    exact_zero: bool = False
    tolerance: float = ZERO_TOLERANCE
    expected: float | None = None
    relation: str = "=="

    @property
    def ok(self) -> bool:
        if self.expected is None:
            return True
        if self.relation == ">=":
            return self.value >= self.expected - self.tolerance
        if self.exact_zero and self.expected == 0.0:
            return True
        return abs(self.value - self.expected) <= self.tolerance

    def to_json(self) -> dict:
        return {
            "quantity": self.quantity,
            "value": self.value,
            "exact_zero": self.exact_zero,
            "tolerance": self.tolerance,
            "expected": self.expected,
            "relation": self.relation,
            "ok": self.ok,
        }


def partition_ranges(total: int, workers: int) -> list:
    """Split [0, total) into `workers` contiguous ranges (some may be empty)."""
    if workers < 1:
        raise ValueError("need at least one worker")
    base, extra = divmod(total, workers)
    ranges = []
    lo = 0
    for w in range(workers):
        hi = lo + base + (1 if w < extra else 0)
        ranges.append((lo, hi))
        lo = hi
    return ranges


class SeedSpace:
    """The uniform outcome space of one configuration.

    Outcomes are mixed-radix digit tuples: one digit per field symbol
    (radix q) and one digit per baseline round permutation (radix (K-1)!).
    Derived variables are registered by name; their per-outcome value
    columns are materialized lazily and cached.
    """

    def __init__(self, cfg: ProtocolConfig, components: Sequence, budget: int, total: int):
        self.cfg = cfg
        self.budget = budget
        self.total = total
        self.outcome_probability = Fraction(1, total)
        self.components = tuple(components)
        self._slices = {}
        pos = 0
        radices = []
        for name, rads in self.components:
            self._slices[name] = (pos, pos + len(rads))
            radices.extend(rads)
            pos += len(rads)
        self._radices = tuple(radices)
        self._vars: dict = {}
        self._columns: dict = {}
        self._digit_rows = None

    # -- layout ---------------------------------------------------------

    def component_slice(self, name: str) -> tuple:
        return self._slices[name]

    def digit_rows(self) -> list:
        """All outcomes as digit tuples, most significant digit first."""
        if self._digit_rows is None:
            rads = self._radices
            cur = [0] * len(rads)
            rows = []
            for _ in range(self.total):
                rows.append(tuple(cur))
                for p in range(len(rads) - 1, -1, -1):
                    cur[p] += 1
                    if cur[p] < rads[p]:
                        break
                    cur[p] = 0
            self._digit_rows = rows
        return self._digit_rows

    # -- variables ------------------------------------------------------

    @property
    def variables(self) -> tuple:
        return tuple(self._vars)

    def add_variable(self, name: str, evaluator: Callable) -> None:
        if name in self._vars:
            raise ValueError(f"variable {name!r} is already registered")
        self._vars[name] = DerivedVariable(name, evaluator)

    def add_sum_variable(self, name: str, sources: Sequence) -> None:
        """Register the elementwise mod-q sum of already registered variables."""
        evs = [self._vars[s].evaluator for s in sources]
        q = self.cfg.modulus

        def ev(d, evs=tuple(evs), q=q):
            vals = [e(d) for e in evs]
            acc = list(vals[0])
            for v in vals[1:]:
                for i, s in enumerate(v):
                    acc[i] = (acc[i] + s) % q
            return tuple(acc)

        self.add_variable(name, ev)

    def column(self, name: str) -> list:
        col = self._columns.get(name)
        if col is None:
            if name not in self._vars:
                raise KeyError(
                    f"unknown variable {name!r}; registered: {sorted(self._vars)}"
                )
            ev = self._vars[name].evaluator
            col = [ev(d) for d in self.digit_rows()]
            self._columns[name] = col
        return col

    # -- counting -------------------------------------------------------

    def joint_counts(self, names: Sequence, workers: int = 1) -> Counter:
        """Exact joint count table of the named variables.

        Keys are tuples with one value per variable.  The enumeration is
        split into `workers` disjoint index ranges whose per-range counts
        are merged by addition; the merged table is identical for any
        worker count.
        """
        names = list(names)
        if not names:
            raise ValueError("need at least one variable")
        cols = [self.column(n) for n in names]
        merged = Counter()
        for lo, hi in partition_ranges(self.total, workers):
            merged.update(zip(*(c[lo:hi] for c in cols)))
        return merged


# -- space construction ---------------------------------------------------


def build_seed_space(cfg: ProtocolConfig, budget: int | None = None) -> SeedSpace:
    """Enumerate the configuration's outcome space and register its variables.

    Fails with BudgetExceeded -- before allocating anything -- when the
    outcome count is larger than the budget (default 2**24).
    """
    budget = DEFAULT_BUDGET if budget is None else budget
    k, l, q = cfg.num_users, cfg.input_len, cfg.modulus
    components = []
    for u in cfg.users:
        components.append((input_var(u), (q,) * l))
    if cfg.scheme is Scheme.OPTIMAL:
        for j in range(1, k):
            components.append((f"seed{j}", (q,) * l))
    else:
        for r in cfg.users:
            for j in range(1, k - 1):
                components.append((f"seed{r}.{j}", (q,) * l))
        n_perms = math.factorial(k - 1)
        for r in cfg.users:
            components.append((f"perm{r}", (n_perms,)))
    total = 1
    for _, rads in components:
        for rad in rads:
            total *= rad
    if total > budget:
        raise BudgetExceeded(total, budget)
    space = SeedSpace(cfg, components, budget, total)
    if cfg.scheme is Scheme.OPTIMAL:
        _register_optimal(space)
    else:
        _register_baseline(space)
    return space


def _slicer(space: SeedSpace, name: str) -> Callable:
    lo, hi = space.component_slice(name)
    return lambda d: d[lo:hi]


def _register_optimal(space: SeedSpace) -> None:
    cfg = space.cfg
    k, l, q = cfg.num_users, cfg.input_len, cfg.modulus
    for u in cfg.users:
        space.add_variable(input_var(u), _slicer(space, input_var(u)))
    seed_slices = [space.component_slice(f"seed{j}") for j in range(1, k)]

    def closing_key(d, slices=tuple(seed_slices), l=l, q=q):
        acc = [0] * l
        for lo, _hi in slices:
            for i in range(l):
                acc[i] = (acc[i] + d[lo + i]) % q
        return tuple((q - a) % q for a in acc)

    key_evs = {}
    for u in range(1, k):
        key_evs[u] = _slicer(space, f"seed{u}")
    key_evs[k] = closing_key
    for u in cfg.users:
        space.add_variable(key_var(u), key_evs[u])
        w_lo, _ = space.component_slice(input_var(u))

        def msg(d, w_lo=w_lo, kev=key_evs[u], l=l, q=q):
            z = kev(d)
            return tuple((d[w_lo + i] + z[i]) % q for i in range(l))

        space.add_variable(msg_var(u), msg)
    space.add_sum_variable(SUM_VAR, [input_var(u) for u in cfg.users])


def _register_baseline(space: SeedSpace) -> None:
    cfg = space.cfg
    k, l, q = cfg.num_users, cfg.input_len, cfg.modulus
    perms_all = tuple(itertools.permutations(range(1, k)))
    for u in cfg.users:
        space.add_variable(input_var(u), _slicer(space, input_var(u)))

    def round_key_evs(r: int) -> list:
        slices = [space.component_slice(f"seed{r}.{j}") for j in range(1, k - 1)]
        evs = [
            (lambda d, lo=lo, hi=hi: d[lo:hi]) for lo, hi in slices
        ]

        def closing(d, slices=tuple(slices), l=l, q=q):
            acc = [0] * l
            for lo, _hi in slices:
                for i in range(l):
                    acc[i] = (acc[i] + d[lo + i]) % q
            return tuple((q - a) % q for a in acc)

        evs.append(closing)
        return evs

    keys_by_round = {r: round_key_evs(r) for r in cfg.users}

    def sender_key_ev(r: int, sender: int) -> Callable:
        position = cfg.others(r).index(sender)
        perm_digit = space.component_slice(f"perm{r}")[0]
        evs = tuple(keys_by_round[r])

        def ev(d, position=position, pd=perm_digit, evs=evs, perms_all=perms_all):
            return evs[perms_all[d[pd]][position] - 1](d)

        return ev

    round_msg_evs = {}
    for r in cfg.users:
        for sender in cfg.others(r):
            w_lo, _ = space.component_slice(input_var(sender))
            kev = sender_key_ev(r, sender)

            def ev(d, w_lo=w_lo, kev=kev, l=l, q=q):
                z = kev(d)
                return tuple((d[w_lo + i] + z[i]) % q for i in range(l))

            round_msg_evs[(sender, r)] = ev
            space.add_variable(round_msg_var(sender, r), ev)

    for u in cfg.users:
        key_parts = tuple(sender_key_ev(r, u) for r in cfg.users if r != u)

        def key_ev(d, parts=key_parts):
            out = []
            for p in parts:
                out.extend(p(d))
            return tuple(out)

        space.add_variable(key_var(u), key_ev)
        msg_parts = tuple(round_msg_evs[(u, r)] for r in cfg.users if r != u)

        def msg_ev(d, parts=msg_parts):
            out = []
            for p in parts:
                out.extend(p(d))
            return tuple(out)

        space.add_variable(msg_var(u), msg_ev)
    space.add_sum_variable(SUM_VAR, [input_var(u) for u in cfg.users])


def observed_message_vars(cfg: ProtocolConfig, k: int) -> list:
    """The K-1 message variables user k actually observes.

    Optimal: every other user's broadcast.  Baseline: the messages of
    user k's own aggregation round; the other rounds' traffic is
    addressed to that round's aggregator, not to user k.
    """
    if cfg.scheme is Scheme.OPTIMAL:
        return [msg_var(i) for i in cfg.others(k)]
    return [round_msg_var(i, k) for i in cfg.others(k)]


# -- entropy and mutual information ---------------------------------------


def _entropy_from_counts(counts: Iterable, total: int, q: int) -> float:
    """H in log-q units for exact counts summing to `total`."""
    s = 0.0
    for c in counts:
        s += c * math.log(c)
    return (math.log(total) - s / total) / math.log(q)


def entropy(space: SeedSpace, names: Sequence, workers: int = 1) -> float:
    """Exact joint entropy of the named variables, in q-ary units."""
    table = space.joint_counts(names, workers=workers)
    return _entropy_from_counts(table.values(), space.total, space.cfg.modulus)


def conditional_entropy(
    space: SeedSpace, names: Sequence, given: Sequence, workers: int = 1
) -> float:
    """H(names | given) = H(names, given) - H(given), in q-ary units."""
    names, given = list(names), list(given)
    if not given:
        return entropy(space, names, workers=workers)
    table = space.joint_counts(names + given, workers=workers)
    cond = Counter()
    split = len(names)
    for key, n in table.items():
        cond[key[split:]] += n
    q = space.cfg.modulus
    return _entropy_from_counts(table.values(), space.total, q) - _entropy_from_counts(
        cond.values(), space.total, q
    )


def conditional_mutual_information(
    space: SeedSpace,
    a_vars: Sequence,
    b_vars: Sequence,
    c_vars: Sequence = (),
    workers: int = 1,
    tolerance: float = ZERO_TOLERANCE,
) -> AuditResult:
    """I(A; B | C) from exact joint counts, in q-ary units.

    exact_zero is set when, within every conditioning cell, the joint
    counts factorize exactly -- count(a,b,cell) * count(cell) equals
    count(a,cell) * count(b,cell) for every value pair -- which certifies
    independence without floating-point error.
    """
    a_vars, b_vars, c_vars = list(a_vars), list(b_vars), list(c_vars)
    if not a_vars or not b_vars:
        raise ValueError("both variable groups must be nonempty")
    table = space.joint_counts(a_vars + b_vars + c_vars, workers=workers)
    na, nb = len(a_vars), len(b_vars)
    cells: dict = {}
    for key, n in table.items():
        cell = key[na + nb:]
        ca, cb, cab = cells.setdefault(cell, (Counter(), Counter(), {}))
        av, bv = key[:na], key[na:na + nb]
        ca[av] += n
        cb[bv] += n
        cab[(av, bv)] = n

    def factorizes() -> bool:
        for ca, cb, cab in cells.values():
            n_cell = sum(ca.values())
            for av, n_a in ca.items():
                for bv, n_b in cb.items():
                    if cab.get((av, bv), 0) * n_cell != n_a * n_b:
                        return False
        return True

    exact = factorizes()
    if exact:
        value = 0.0
    else:
        q = space.cfg.modulus
        total = space.total
        h_abc = _entropy_from_counts(table.values(), total, q)
        h_c = _entropy_from_counts(
            (sum(ca.values()) for ca, _, _ in cells.values()), total, q
        )
        h_ac = _entropy_from_counts(
            (n for ca, _, _ in cells.values() for n in ca.values()), total, q
        )
        h_bc = _entropy_from_counts(
            (n for _, cb, _ in cells.values() for n in cb.values()), total, q
        )
        value = h_ac + h_bc - h_abc - h_c
    given = ", ".join(c_vars) if c_vars else "nothing"
    quantity = f"I({', '.join(a_vars)}; {', '.join(b_vars)} | {given})"
    return AuditResult(quantity, value, exact_zero=exact, tolerance=tolerance)


# -- protocol audits -------------------------------------------------------


def audit_recovery(
    cfg: ProtocolConfig,
    k: int,
    space: SeedSpace | None = None,
    workers: int = 1,
    tolerance: float = ZERO_TOLERANCE,
) -> AuditResult:
    """H(input sum | user k's view) -- must be exactly zero.

    The view is the K-1 observed messages plus the user's own input and
    key.  Exactness is certified when every view value determines a
    single sum value.
    """
    space = space or build_seed_space(cfg)
    view = observed_message_vars(cfg, k) + [input_var(k), key_var(k)]
    table = space.joint_counts([SUM_VAR] + view, workers=workers)
    per_view: dict = {}
    for key, n in table.items():
        per_view.setdefault(key[1:], set()).add(key[0])
    exact = all(len(sums) == 1 for sums in per_view.values())
    if exact:
        value = 0.0
    else:
        value = conditional_entropy(space, [SUM_VAR], view, workers=workers)
    return AuditResult(
        quantity=f"recovery: user {k} pins down the input sum from its view",
        value=value,
        exact_zero=exact,
        tolerance=tolerance,
        expected=0.0,
    )


def _collusion_label(t_set) -> str:
    return "{" + ", ".join(str(t) for t in sorted(t_set)) + "}" if t_set else "{}"


def audit_security(
    cfg: ProtocolConfig,
    k: int,
    t_set: Iterable = (),
    space: SeedSpace | None = None,
    workers: int = 1,
    tolerance: float = ZERO_TOLERANCE,
) -> AuditResult:
    """Mutual information the observer gains beyond the sum -- must be zero.

    Evaluates I(observed messages; other inputs | sum, own input and key,
    colluders' inputs and keys) exactly.
    """
    t_set = frozenset(t_set)
    if k in t_set:
        raise InvalidCollusion(f"observer {k} cannot collude with itself")
    if not t_set <= set(cfg.others(k)):
        raise InvalidCollusion("collusion set must be a subset of the other users")
    if len(t_set) > cfg.num_users - 3 and not cfg.allow_infeasible:
        raise Infeasible(
            f"{len(t_set)} colluders with {cfg.num_users} users is infeasible; "
            "set allow_infeasible to probe the boundary"
        )
    space = space or build_seed_space(cfg)
    others = cfg.others(k)
    a = observed_message_vars(cfg, k)
    b = [input_var(i) for i in others]
    c = [SUM_VAR, input_var(k), key_var(k)]
    for t in sorted(t_set):
        c += [input_var(t), key_var(t)]
    result = conditional_mutual_information(
        space, a, b, c, workers=workers, tolerance=tolerance
    )
    return replace(
        result,
        quantity=(
            f"security: observer {k}, colluders {_collusion_label(t_set)} "
            "learn nothing beyond the sum"
        ),
        expected=0.0,
    )


def _subsets(items: Sequence, max_size: int, rng=None, cap: int = 64) -> list:
    """All subsets up to max_size, or a seeded random sample when capped.

    Exhaustive whenever the pool has at most 6 items (the desk-scale
    regime); above that a caller-seeded generator must be supplied.
    """
    items = list(items)
    exhaustive = len(items) <= 6
    out = []
    for size in range(0, max_size + 1):
        out.extend(itertools.combinations(items, size))
    if exhaustive or len(out) <= cap:
        return out
    if rng is None:
        raise ValueError(
            "subset sampling above 6 users needs a caller-seeded generator"
        )
    keep = [()] + rng.sample([s for s in out if s], cap - 1)
    return keep


def audit_all_security(
    cfg: ProtocolConfig,
    space: SeedSpace | None = None,
    workers: int = 1,
    tolerance: float = ZERO_TOLERANCE,
    subset_rng=None,
) -> list:
    """audit_security for every observer and collusion set within threshold."""
    space = space or build_seed_space(cfg)
    results = []
    for k in cfg.users:
        for t_set in _subsets(cfg.others(k), cfg.threshold, rng=subset_rng):
            results.append(
                audit_security(
                    cfg, k, t_set, space=space, workers=workers, tolerance=tolerance
                )
            )
    return results


def audit_key_structure(
    cfg: ProtocolConfig,
    space: SeedSpace | None = None,
    workers: int = 1,
    tolerance: float = ZERO_TOLERANCE,
    subset_rng=None,
) -> list:
    """Numeric checks on the zero-sum key design and its converse bounds.

    Checks, on the optimal scheme: every key subset of size at most K-1
    is jointly uniform (entropy = size * input_len); all K keys together
    carry (K-1) * input_len units; and the scheme is consistent with the
    general lower-bound identities (per-message content bound, masking
    independence, residual-information identity).
    """
    if cfg.scheme is not Scheme.OPTIMAL:
        raise ValueError(
            "key-structure audit targets the zero-sum key design of the "
            "optimal scheme"
        )
    space = space or build_seed_space(cfg)
    k_users, l = cfg.num_users, cfg.input_len
    results = []
    for subset in _subsets(list(cfg.users), k_users - 1, rng=subset_rng):
        if not subset:
            continue
        h = entropy(space, [key_var(i) for i in subset], workers=workers)
        results.append(
            AuditResult(
                quantity=f"key subset {_collusion_label(subset)} is jointly uniform",
                value=h,
                tolerance=tolerance,
                expected=float(len(subset) * l),
            )
        )
    h_all = entropy(space, [key_var(i) for i in cfg.users], workers=workers)
    results.append(
        AuditResult(
            quantity="joint entropy of all keys",
            value=h_all,
            tolerance=tolerance,
            expected=float((k_users - 1) * l),
        )
    )
    for k in cfg.users:
        given = []
        for i in cfg.others(k):
            given += [input_var(i), key_var(i)]
        h = conditional_entropy(space, [msg_var(k)], given, workers=workers)
        results.append(
            AuditResult(
                quantity=(
                    f"consistent with the message-content bound: user {k}'s "
                    "message carries its full input even given everyone "
                    "else's inputs and keys"
                ),
                value=h,
                tolerance=tolerance,
                expected=float(l),
                relation=">=",
            )
        )
    for k in cfg.users:
        for kp in cfg.others(k):
            res = conditional_mutual_information(
                space,
                [msg_var(k)],
                [input_var(k)],
                [input_var(kp), key_var(kp)],
                workers=workers,
                tolerance=tolerance,
            )
            results.append(
                replace(
                    res,
                    quantity=(
                        f"consistent with masking independence: user {k}'s "
                        f"message looks unrelated to its input from user "
                        f"{kp}'s seat"
                    ),
                    expected=0.0,
                )
            )
    for k in cfg.users:
        for t_set in _subsets(cfg.others(k), k_users - 3, rng=subset_rng):
            rest = [i for i in cfg.others(k) if i not in t_set]
            c = [input_var(k), key_var(k)]
            for t in sorted(t_set):
                c += [input_var(t), key_var(t)]
            res = conditional_mutual_information(
                space,
                [msg_var(i) for i in rest],
                [input_var(i) for i in rest],
                c,
                workers=workers,
                tolerance=tolerance,
            )
            results.append(
                replace(
                    res,
                    quantity=(
                        f"consistent with the residual-information identity: "
                        f"observer {k} with colluders {_collusion_label(t_set)} "
                        "infers exactly the honest users' sum"
                    ),
                    expected=float(l),
                )
            )
    return results


def leakage_without_sum(
    cfg: ProtocolConfig,
    k: int,
    k_prime: int,
    space: SeedSpace | None = None,
    workers: int = 1,
    tolerance: float = ZERO_TOLERANCE,
) -> AuditResult:
    """Demonstrate the infeasibility boundary on the optimal scheme.

    With colluders = everyone except the observer k and one target k',
    the conditioning pins down the target's key, so its message exposes
    the full input: the leakage is exactly input_len q-ary units.
    Requires the demonstration override on the configuration.
    """
    if not cfg.allow_infeasible:
        raise Infeasible(
            "the leakage demonstration runs outside the feasible region; "
            "construct the configuration with allow_infeasible=True"
        )
    if cfg.scheme is not Scheme.OPTIMAL:
        raise ValueError("the leakage demonstration targets the optimal scheme")
    if k == k_prime:
        raise InvalidCollusion("observer and target must differ")
    space = space or build_seed_space(cfg)
    t_set = [i for i in cfg.users if i not in (k, k_prime)]
    c = []
    for t in [k] + t_set:
        c += [input_var(t), key_var(t)]
    res = conditional_mutual_information(
        space,
        [msg_var(k_prime)],
        [input_var(k_prime)],
        c,
        workers=workers,
        tolerance=tolerance,
    )
    return replace(
        res,
        quantity=(
            f"leakage without the sum: observer {k} plus colluders "
            f"{_collusion_label(t_set)} expose user {k_prime}'s input"
        ),
        expected=float(cfg.input_len),
    )


def run_full_audit(
    cfg: ProtocolConfig,
    space: SeedSpace | None = None,
    workers: int = 1,
    tolerance: float = ZERO_TOLERANCE,
    subset_rng=None,
) -> list:
    """Recovery for every user, security for every (observer, collusion set)
    within the threshold, and -- for the optimal scheme -- the key-structure
    checks."""
    space = space or build_seed_space(cfg)
    results = [
        audit_recovery(cfg, k, space=space, workers=workers, tolerance=tolerance)
        for k in cfg.users
    ]
    results += audit_all_security(
        cfg, space=space, workers=workers, tolerance=tolerance, subset_rng=subset_rng
    )
    if cfg.scheme is Scheme.OPTIMAL:
        results += audit_key_structure(
            cfg, space=space, workers=workers, tolerance=tolerance,
            subset_rng=subset_rng,
        )
    return results
