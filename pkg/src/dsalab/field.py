"""Prime-field arithmetic and uniform sampling for all protocol symbols.

Every symbol in the system is a residue modulo a prime q.  Values are
immutable and safe to share between workers; the only stateful object is
the caller-supplied random generator.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

from .errors import InvalidModulus, ModulusMismatch, ShapeMismatch


@lru_cache(maxsize=None)
def is_prime(n: int) -> bool:
    """Trial-division primality test; cached, desk-scale moduli only."""
    if n < 2:
        return False
    if n < 4:
        return True
    if n % 2 == 0:
        return False
    d = 3
    while d * d <= n:
        if n % d == 0:
            return False
        d += 2
    return True


def check_prime(q: int) -> int:
    if not is_prime(q):
        raise InvalidModulus(f"modulus {q} is not prime")
    return q


@dataclass(frozen=True)
class FieldElement:
    """A fully reduced residue modulo a prime.

    The value is reduced at construction so that 0 <= value < modulus
    always holds.
    """

    value: int
    modulus: int

    def __post_init__(self):
        check_prime(self.modulus)
        object.__setattr__(self, "value", self.value % self.modulus)

    def __add__(self, other: "FieldElement") -> "FieldElement":
        return fe_add(self, other)

    def __neg__(self) -> "FieldElement":
        return fe_neg(self)

    def __sub__(self, other: "FieldElement") -> "FieldElement":
        return fe_add(self, fe_neg(other))

    def __int__(self) -> int:
        return self.value

    def __repr__(self):  # pragma: no cover - debugging aid
        return f"{self.value} (mod {self.modulus})"


def fe_add(a: FieldElement, b: FieldElement) -> FieldElement:
    """Field addition; both operands must share one modulus."""
    if a.modulus != b.modulus:
        raise ModulusMismatch(f"cannot add mod-{a.modulus} to mod-{b.modulus}")
    return FieldElement((a.value + b.value) % a.modulus, a.modulus)


def fe_neg(a: FieldElement) -> FieldElement:
    """Additive inverse: fe_add(a, fe_neg(a)) is zero."""
    return FieldElement((a.modulus - a.value) % a.modulus, a.modulus)


@dataclass(frozen=True)
class SymbolVector:
    """An immutable length-L vector of residues sharing one modulus.

    Symbols are stored as reduced ints; use element(i) for a FieldElement
    view of a single coordinate.
    """

    symbols: tuple
    modulus: int

    def __post_init__(self):
        check_prime(self.modulus)
        q = self.modulus
        object.__setattr__(self, "symbols", tuple(int(s) % q for s in self.symbols))

    @classmethod
    def zero(cls, length: int, modulus: int) -> "SymbolVector":
        return cls((0,) * length, modulus)

    def __len__(self) -> int:
        return len(self.symbols)

    def element(self, i: int) -> FieldElement:
        return FieldElement(self.symbols[i], self.modulus)

    def __add__(self, other: "SymbolVector") -> "SymbolVector":
        if self.modulus != other.modulus:
            raise ShapeMismatch(
                f"moduli differ: {self.modulus} vs {other.modulus}"
            )
        if len(self) != len(other):
            raise ShapeMismatch(f"lengths differ: {len(self)} vs {len(other)}")
        q = self.modulus
        return SymbolVector(
            tuple((a + b) % q for a, b in zip(self.symbols, other.symbols)), q
        )

    def __neg__(self) -> "SymbolVector":
        q = self.modulus
        return SymbolVector(tuple((q - s) % q for s in self.symbols), q)

    def concat(self, other: "SymbolVector") -> "SymbolVector":
        if self.modulus != other.modulus:
            raise ShapeMismatch(
                f"moduli differ: {self.modulus} vs {other.modulus}"
            )
        return SymbolVector(self.symbols + other.symbols, self.modulus)

    def to_json(self) -> list:
        return list(self.symbols)


def vec_sum(
    vectors: Iterable[SymbolVector],
    *,
    length: int | None = None,
    modulus: int | None = None,
) -> SymbolVector:
    """Elementwise field sum of a sequence of vectors.

    An empty sequence returns the all-zero vector, in which case the
    caller must supply length and modulus.
    """
    vectors = list(vectors)
    if not vectors:
        if length is None or modulus is None:
            raise ShapeMismatch("empty sum needs an explicit length and modulus")
        return SymbolVector.zero(length, modulus)
    acc = vectors[0]
    for v in vectors[1:]:
        acc = acc + v
    return acc


def rand_below(n: int, rng: random.Random) -> int:
    """Uniform draw from [0, n) by rejection sampling on raw generator bits."""
    bits = (n - 1).bit_length()
    while True:
        r = rng.getrandbits(bits)
        if r < n:
            return r


def sample_uniform_vector(length: int, q: int, rng: random.Random) -> SymbolVector:
    """Draw `length` i.i.d. uniform symbols from [0, q).

    Uses rejection sampling so every symbol is exactly uniform; identical
    generator state yields identical output.
    """
    check_prime(q)
    if length < 1:
        raise ShapeMismatch("vector length must be at least 1")
    return SymbolVector(tuple(rand_below(q, rng) for _ in range(length)), q)


def sample_permutation(n: int, rng: random.Random) -> tuple:
    """Uniform permutation of (1..n) via Fisher-Yates over rejection draws."""
    items = list(range(1, n + 1))
    for i in range(n - 1, 0, -1):
        j = rand_below(i + 1, rng)
        items[i], items[j] = items[j], items[i]
    return tuple(items)
