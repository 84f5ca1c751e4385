"""Finite models of arithmetic groupoid systems over class number one fields.

The underlying groupoid has arrows (g, rho, w) where g is a finite idele
shadow (a unit residue together with an exponent vector over the enumerated
primes), rho is a residue of the ring of integers, and w lives in a ray
class quotient.  Functions invariant under the two-sided unit action are
stored on orbit classes.  An orbit is pinned down by exact data:

* the exponent vector of g (units are absorbed by the action),
* one valuation class per relevant prime, either "exactly v" or
  "everything of valuation at least t",
* a coset of ray classes, saturated under the image of the stabilizer of
  the anchored residue.

Convolution, involution and the time evolution all stay inside this key
format, so associativity can be tested exactly.  The time evolution keeps
its phases symbolic: a coefficient is a Gaussian rational attached to a
formal product of p^{i r} factors with rational exponents r.

Normalization conventions: the ray class of an idele with unit part u and
exponent vector e is [u] * prod [pi]^{e_pi} over primes away from the
modulus; uniformizers at primes dividing the modulus act trivially on the
ray classes, matching the standard computation of the reciprocity map on
cyclotomic components.  The right action of a unit gamma on the class slot
is multiplication by cls(gamma)^{-1}.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .cyclotomic import CyclotomicElement
from .lattice import (
    IntMatrix,
    hermite_normal_form,
    lattice_contains,
    solve_int_rowspan,
    vstack,
)

TOP = "top"
EXACT = "exact"


# -- Number ring data ------------------------------------------------------------


class RingData:
    """Ring of integers of a builtin field in its power basis."""

    __slots__ = ("name", "cyclo_n", "degree", "basis", "unit_generators")

    def __init__(self, name, cyclo_n, unit_gen_coords, unit_orders):
        self.name = name
        self.cyclo_n = cyclo_n
        if cyclo_n == 1:
            degree = 1
        else:
            degree = len(CyclotomicElement.one(cyclo_n).coeffs)
        self.degree = degree
        basis = []
        for k in range(degree):
            if k == 0:
                basis.append(CyclotomicElement.one(cyclo_n))
            else:
                basis.append(CyclotomicElement.zeta(cyclo_n, k))
        self.basis = tuple(basis)
        gens = tuple(self.from_coords(c) for c in unit_gen_coords)
        for gen, order in zip(gens, unit_orders):
            self._verify_unit(gen, order)
        minus_one = -CyclotomicElement.one(cyclo_n)
        self.unit_generators = gens + (minus_one,)

    def _verify_unit(self, gen, order):
        if abs(gen.norm()) != 1:
            raise ValueError("declared unit generator has norm != 1")
        if order is None:
            power = gen
            for _ in range(24):
                if power == CyclotomicElement.one(self.cyclo_n):
                    raise ValueError("declared infinite order unit is torsion")
                power = power * gen
        else:
            power = CyclotomicElement.one(self.cyclo_n)
            for k in range(1, order):
                power = power * gen
                if power == CyclotomicElement.one(self.cyclo_n):
                    raise ValueError("unit generator order is smaller than declared")
            if power * gen != CyclotomicElement.one(self.cyclo_n):
                raise ValueError("unit generator order mismatch")

    def from_coords(self, coords) -> CyclotomicElement:
        vals = [Fraction(c) for c in coords]
        if len(vals) != self.degree:
            raise ValueError("coordinate length mismatch")
        return CyclotomicElement(self.cyclo_n, tuple(vals))

    def torsion_units(self) -> Tuple[CyclotomicElement, ...]:
        one = CyclotomicElement.one(self.cyclo_n)
        group = {self.coords(one): one}
        frontier = [one]
        gens = [-one]
        if self.cyclo_n > 1:
            gens.append(CyclotomicElement.zeta(self.cyclo_n, 1))
        while frontier:
            current = frontier.pop()
            for g in gens:
                nxt = current * g
                key = self.coords(nxt)
                if key not in group:
                    group[key] = nxt
                    frontier.append(nxt)
        return tuple(group.values())

    def coords(self, element: CyclotomicElement) -> Tuple[int, ...]:
        out = []
        for c in element.coeffs:
            if c.denominator != 1:
                raise ValueError("element is not integral in the power basis")
            out.append(int(c))
        return tuple(out)

    def multiplication_rows(self, element: CyclotomicElement) -> IntMatrix:
        """Rows are the coordinates of element * basis[i]."""
        return IntMatrix([self.coords(element * b) for b in self.basis])


_BUILTIN_RINGS = {
    "Q": dict(cyclo_n=1, unit_gen_coords=(), unit_orders=()),
    "Q(i)": dict(cyclo_n=4, unit_gen_coords=((0, 1),), unit_orders=(4,)),
    "Q(zeta5)": dict(
        cyclo_n=5,
        unit_gen_coords=((0, 1, 0, 0), (1, 1, 0, 0)),
        unit_orders=(5, None),
    ),
}

_RING_ALIASES = {
    "q": "Q",
    "qi": "Q(i)",
    "q(i)": "Q(i)",
    "qzeta5": "Q(zeta5)",
    "q(zeta5)": "Q(zeta5)",
    "zeta5": "Q(zeta5)",
}


def builtin_ring(name: str) -> RingData:
    key = _RING_ALIASES.get(name.lower(), name)
    if key not in _BUILTIN_RINGS:
        raise ValueError(
            "unknown field %r, builtins are %s" % (name, sorted(_BUILTIN_RINGS))
        )
    spec = _BUILTIN_RINGS[key]
    return RingData(key, spec["cyclo_n"], spec["unit_gen_coords"], spec["unit_orders"])


# -- Residue rings ----------------------------------------------------------------


class ResidueRing:
    """The quotient of a ring of integers by a principal ideal."""

    __slots__ = ("ring", "modulus", "lattice", "size")

    def __init__(self, ring: RingData, modulus: CyclotomicElement):
        self.ring = ring
        self.modulus = modulus
        rows = ring.multiplication_rows(modulus)
        h, _ = hermite_normal_form(rows)
        if any(h.entries[i][i] <= 0 for i in range(ring.degree)):
            raise ValueError("modulus generates a rank deficient ideal")
        self.lattice = h
        size = 1
        for i in range(h.rows):
            size *= h.entries[i][i]
        self.size = size

    def reduce(self, coords) -> Tuple[int, ...]:
        v = [int(c) for c in coords]
        h = self.lattice.entries
        for i in range(len(v)):
            q = v[i] // h[i][i]
            if q:
                for j in range(i, len(v)):
                    v[j] -= q * h[i][j]
        return tuple(v)

    def element(self, coords) -> CyclotomicElement:
        return self.ring.from_coords(self.reduce(coords))

    def one(self) -> Tuple[int, ...]:
        return self.reduce(self.ring.coords(CyclotomicElement.one(self.ring.cyclo_n)))

    def mul(self, a, b) -> Tuple[int, ...]:
        prod = self.ring.from_coords(a) * self.ring.from_coords(b)
        return self.reduce(self.ring.coords(prod))

    def add(self, a, b) -> Tuple[int, ...]:
        return self.reduce([x + y for x, y in zip(a, b)])

    def is_unit(self, coords) -> bool:
        rows = self.ring.multiplication_rows(self.ring.from_coords(coords))
        h, _ = hermite_normal_form(vstack(rows, self.lattice))
        d = self.ring.degree
        return all(
            h.entries[i][j] == (1 if i == j else 0)
            for i in range(d) for j in range(d)
        )

    def inverse(self, coords) -> Tuple[int, ...]:
        rows = self.ring.multiplication_rows(self.ring.from_coords(coords))
        target = self.ring.coords(CyclotomicElement.one(self.ring.cyclo_n))
        combo = solve_int_rowspan(vstack(rows, self.lattice), target)
        if combo is None:
            raise ValueError("residue is not invertible")
        return self.reduce(combo[: self.ring.degree])

    def enumerate(self, limit: Optional[int] = None) -> List[Tuple[int, ...]]:
        if limit is not None and self.size > limit:
            raise ValueError(
                "residue ring has %d elements, above the limit %d" % (self.size, limit)
            )
        h = self.lattice.entries
        ranges = [range(h[i][i]) for i in range(self.lattice.rows)]
        return [self.reduce(v) for v in itertools.product(*ranges)]


# -- Prime enumeration -------------------------------------------------------------


class PrimeData:
    """A chosen generator of a prime ideal together with local bookkeeping."""

    __slots__ = ("element", "norm", "p", "degree", "m_valuation", "in_window", "class_label")

    def __init__(self, element, norm, p, degree):
        self.element = element
        self.norm = norm
        self.p = p
        self.degree = degree
        self.m_valuation = 0
        self.in_window = True
        self.class_label = None


def _rational_primes(bound: int) -> List[int]:
    sieve = [True] * (bound + 1)
    out = []
    for n in range(2, bound + 1):
        if sieve[n]:
            out.append(n)
            for k in range(n * n, bound + 1, n):
                sieve[k] = False
    return out


def _splitting_data(ring: RingData, p: int) -> Tuple[int, int]:
    """Return (residue degree f, number of primes g) for p in the ring."""
    n = ring.cyclo_n
    if n == 1:
        return 1, 1
    if n % p == 0:
        # the ramified prime of a prime power cyclotomic field
        return 1, 1
    f = 1
    power = p % n
    while power != 1:
        power = (power * p) % n
        f += 1
    return f, ring.degree // f


def _prime_generators(ring: RingData, p: int, f: int, g: int) -> List[CyclotomicElement]:
    """Deterministic generators for the g primes above p, each of norm p**f.

    Each generator is normalized to the associate with the largest
    coefficient tuple under the torsion units, so 2 is preferred to -2
    and 1 + i to -1 - i.
    """
    target = p ** f
    torsion = ring.torsion_units()
    found: List[CyclotomicElement] = []
    max_height = target + 1 if ring.degree == 1 else 8
    for height in range(1, max_height + 1):
        box = range(-height, height + 1)
        for coords in sorted(itertools.product(box, repeat=ring.degree)):
            if max(abs(c) for c in coords) != height:
                continue
            candidate = ring.from_coords(coords)
            if abs(candidate.norm()) != target:
                continue
            if any(_same_ideal(candidate, seen) for seen in found):
                continue
            found.append(max(
                (candidate * u for u in torsion),
                key=lambda x: ring.coords(x),
            ))
            if len(found) == g:
                return found
    raise RuntimeError("prime generator search exhausted its height window")


def _same_ideal(a: CyclotomicElement, b: CyclotomicElement) -> bool:
    return (a / b).is_integral() and (b / a).is_integral()


def prime_window(ring: RingData, bound: int) -> List[PrimeData]:
    """All primes of norm at most bound, ordered by (norm, coefficients)."""
    out = []
    for p in _rational_primes(bound):
        f, g = _splitting_data(ring, p)
        if p ** f > bound:
            continue
        for gen in _prime_generators(ring, p, f, g):
            out.append(PrimeData(gen, p ** f, p, f))
    out.sort(key=lambda q: (q.norm, tuple(int(c) for c in q.element.coeffs)))
    return out


# -- Ray class quotient -------------------------------------------------------------


class ShimuraSet:
    """Residue classes modulo m up to the image of the global units.

    Labels are stable strings w0, w1, ... ordered by the smallest residue
    representative, and each class keeps that representative as its Artin
    label.
    """

    __slots__ = ("ring", "modulus", "residues", "labels", "_class_of", "_mult",
                 "_inverse", "identity", "artin_labels", "representatives")

    def __init__(self, ring: RingData, modulus: CyclotomicElement):
        self.ring = ring
        self.modulus = modulus
        ring_mod = ResidueRing(ring, modulus)
        units = [u for u in ring_mod.enumerate(limit=20000) if ring_mod.is_unit(u)]
        unit_set = set(units)
        gens = [ring_mod.reduce(ring.coords(g)) for g in ring.unit_generators]
        image = {ring_mod.one()}
        frontier = [ring_mod.one()]
        while frontier:
            current = frontier.pop()
            for g in gens:
                nxt = ring_mod.mul(current, g)
                if nxt not in image:
                    image.add(nxt)
                    frontier.append(nxt)
        if not image <= unit_set:
            raise ValueError("unit generators are not invertible modulo m")
        seen = set()
        classes = []
        for u in sorted(units):
            if u in seen:
                continue
            orbit = sorted(ring_mod.mul(u, h) for h in image)
            seen.update(orbit)
            classes.append(tuple(orbit))
        classes.sort(key=lambda orbit: orbit[0])
        self.residues = ring_mod
        self.labels = tuple("w%d" % k for k in range(len(classes)))
        self.artin_labels = {
            label: "+".join(str(c) for c in orbit[0])
            for label, orbit in zip(self.labels, classes)
        }
        lookup = {}
        for label, orbit in zip(self.labels, classes):
            for member in orbit:
                lookup[member] = label
        self._class_of = lookup
        reps = {label: orbit[0] for label, orbit in zip(self.labels, classes)}
        self.representatives = reps
        mult = {}
        inverse = {}
        for la, ra in reps.items():
            for lb, rb in reps.items():
                mult[(la, lb)] = lookup[ring_mod.mul(ra, rb)]
            inv = ring_mod.inverse(ra)
            inverse[la] = lookup[ring_mod.reduce(inv)]
        self._mult = mult
        self._inverse = inverse
        self.identity = lookup[ring_mod.one()]

    def __len__(self):
        return len(self.labels)

    def class_of(self, coords) -> str:
        reduced = self.residues.reduce(coords)
        label = self._class_of.get(reduced)
        if label is None:
            raise ValueError("residue %r is not invertible modulo m" % (reduced,))
        return label

    def mult(self, a: str, b: str) -> str:
        return self._mult[(a, b)]

    def inverse(self, a: str) -> str:
        return self._inverse[a]

    def power(self, a: str, k: int) -> str:
        if k < 0:
            return self.power(self.inverse(a), -k)
        out = self.identity
        for _ in range(k):
            out = self.mult(out, a)
        return out


# -- Finite level parameters --------------------------------------------------------


class FiniteLevelParams:
    """Field, modulus, prime window and caps for one finite model.

    The working modulus is m times the product of the window primes raised
    to the cap.  Orbit keys may carry valuations beyond the cap; the cap
    only controls the working residue ring and the samplers, and arrows
    whose divisibility bookkeeping would need more precision than a key
    provides are simply not representable at that key's resolution.
    """

    __slots__ = ("ring", "modulus", "bound", "cap", "primes", "places",
                 "shimura", "working_modulus", "residues", "_stab_cache",
                 "_val_lattices")

    def __init__(self, field: str, modulus_coords, bound: int, cap: int):
        self.ring = builtin_ring(field)
        self.modulus = self.ring.from_coords(modulus_coords)
        if self.modulus.is_zero():
            raise ValueError("modulus must be nonzero")
        if abs(self.modulus.norm()) == 1:
            raise ValueError("modulus must not be a unit")
        if not self.modulus.is_integral():
            raise ValueError("modulus must be integral")
        if bound < 2:
            raise ValueError("prime bound must be at least 2")
        if cap < 1:
            raise ValueError("valuation cap must be at least 1")
        self.bound = bound
        self.cap = cap
        window = prime_window(self.ring, bound)
        extra = self._modulus_only_primes(window)
        for q in extra:
            q.in_window = False
        self.primes = tuple(window)
        self.places = tuple(window + extra)
        working = self.modulus
        for q in window:
            working = working * (q.element ** cap)
        self.working_modulus = working
        self.residues = ResidueRing(self.ring, working)
        self.shimura = ShimuraSet(self.ring, self.modulus)
        for place in self.places:
            place.m_valuation = self._valuation_of(self.modulus, place.element)
            if place.m_valuation == 0:
                place.class_label = self.shimura.class_of(
                    self.ring.coords(place.element)
                )
        self._stab_cache = {}
        self._val_lattices = {}

    def _modulus_only_primes(self, window: Sequence[PrimeData]) -> List[PrimeData]:
        norm = abs(self.modulus.norm())
        if norm > 10 ** 6:
            raise ValueError("modulus norm is too large for prime factorization")
        out = []
        n = int(norm)
        p = 2
        while p * p <= n:
            if n % p == 0:
                while n % p == 0:
                    n //= p
                out.extend(self._primes_above_if_new(p, window))
            p += 1
        if n > 1:
            out.extend(self._primes_above_if_new(n, window))
        return out

    def _primes_above_if_new(self, p: int, window) -> List[PrimeData]:
        f, g = _splitting_data(self.ring, p)
        fresh = []
        for gen in _prime_generators(self.ring, p, f, g):
            if any(_same_ideal(gen, q.element) for q in window):
                continue
            if self._valuation_of(self.modulus, gen) == 0:
                continue
            fresh.append(PrimeData(gen, p ** f, p, f))
        return fresh

    def _valuation_of(self, element: CyclotomicElement, prime: CyclotomicElement) -> int:
        value = element
        v = 0
        while True:
            quotient = value / prime
            if not quotient.is_integral():
                return v
            value = quotient
            v += 1
            if v > 64:
                raise RuntimeError("runaway valuation")

    # -- local valuations of working residues -------------------------------

    def residue_cap(self, index: int) -> int:
        place = self.places[index]
        return place.m_valuation + (self.cap if place.in_window else 0)

    def _valuation_lattice(self, index: int, k: int) -> IntMatrix:
        key = (index, k)
        cached = self._val_lattices.get(key)
        if cached is None:
            power = self.places[index].element ** k
            rows = vstack(
                self.ring.multiplication_rows(power), self.residues.lattice
            )
            cached, _ = hermite_normal_form(rows)
            self._val_lattices[key] = cached
        return cached

    def residue_valuation(self, coords, index: int) -> Tuple[str, int]:
        """Valuation class of a working residue at one place.

        Returns (EXACT, v) when v is below the cap at that place, and
        (TOP, cap) when the residue is divisible by the full cap power.
        """
        cap = self.residue_cap(index)
        vec = list(self.residues.reduce(coords))
        v = 0
        while v < cap and lattice_contains(self._valuation_lattice(index, v + 1), vec):
            v += 1
        if v >= cap:
            return (TOP, cap)
        return (EXACT, v)

    # -- ray class bookkeeping ----------------------------------------------

    def class_of_exponents(self, exponents: Sequence[int]) -> str:
        label = self.shimura.identity
        for e, place in zip(exponents, self.places):
            if e == 0 or place.class_label is None:
                continue
            label = self.shimura.mult(label, self.shimura.power(place.class_label, e))
        return label

    def class_of_unit(self, coords) -> str:
        return self.shimura.class_of(coords)

    def stabilizer_image(self, exact_mask: Tuple[bool, ...]) -> frozenset:
        """Image in the ray classes of units congruent to 1 where required.

        A place with exact valuation pins its local residue up to units
        congruent to 1 modulo the full local component of m; a place in
        the TOP state imposes nothing.  Only places dividing m matter.
        """
        effective = tuple(
            place.m_valuation if (exact and place.m_valuation) else 0
            for exact, place in zip(exact_mask, self.places)
        )
        cached = self._stab_cache.get(effective)
        if cached is not None:
            return cached
        conductor = CyclotomicElement.one(self.ring.cyclo_n)
        for k, place in zip(effective, self.places):
            if k:
                conductor = conductor * place.element ** k
        rows = vstack(
            self.ring.multiplication_rows(conductor),
            self.shimura.residues.lattice,
        )
        h, _ = hermite_normal_form(rows)
        one = self.shimura.residues.one()
        labels = set()
        for u in self.shimura._class_of:
            diff = [a - b for a, b in zip(u, one)]
            if lattice_contains(h, diff):
                labels.add(self.shimura._class_of[u])
        result = frozenset(labels)
        self._stab_cache[effective] = result
        return result

    def saturate_coset(self, labels: Iterable[str], exact_mask) -> Tuple[str, ...]:
        stab = self.stabilizer_image(tuple(exact_mask))
        out = set()
        for w in labels:
            for s in stab:
                out.add(self.shimura.mult(w, s))
        return tuple(sorted(out))

    def split_coset(self, labels: Sequence[str], exact_mask) -> List[Tuple[str, ...]]:
        stab = self.stabilizer_image(tuple(exact_mask))
        remaining = set(labels)
        pieces = []
        while remaining:
            w = min(remaining)
            orbit = tuple(sorted(self.shimura.mult(w, s) for s in stab))
            if not set(orbit) <= remaining:
                raise AssertionError("coset is not saturated under the stabilizer")
            remaining -= set(orbit)
            pieces.append(orbit)
        return pieces


def build_params(field: str, modulus_coords, bound: int, cap: int = 1) -> FiniteLevelParams:
    return FiniteLevelParams(field, modulus_coords, bound, cap)


# -- Coefficients with symbolic phases ----------------------------------------------


def _phase_mul(a: Tuple, b: Tuple) -> Tuple:
    merged = dict(a)
    for p, r in b:
        merged[p] = merged.get(p, Fraction(0)) + r
    return tuple(sorted((p, r) for p, r in merged.items() if r != 0))


def _phase_conj(a: Tuple) -> Tuple:
    return tuple((p, -r) for p, r in a)


class Coefficient:
    """Gaussian rational combination of symbolic phases prod p^(i r).

    The trivial phase is the empty tuple, so plain Gaussian rationals are
    coefficients with a single term keyed by ().
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Dict[Tuple, Tuple[Fraction, Fraction]]):
        cleaned = {
            phase: (re, im)
            for phase, (re, im) in terms.items()
            if re != 0 or im != 0
        }
        object.__setattr__(self, "terms", tuple(sorted(cleaned.items())))

    def __setattr__(self, *a):  # pragma: no cover - guard
        raise AttributeError("Coefficient is immutable")

    @staticmethod
    def of(re, im=0) -> "Coefficient":
        return Coefficient({(): (Fraction(re), Fraction(im))})

    @staticmethod
    def zero() -> "Coefficient":
        return Coefficient({})

    @staticmethod
    def one() -> "Coefficient":
        return Coefficient.of(1)

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: "Coefficient") -> "Coefficient":
        out = {phase: [re, im] for phase, (re, im) in self.terms}
        for phase, (re, im) in other.terms:
            slot = out.setdefault(phase, [Fraction(0), Fraction(0)])
            slot[0] += re
            slot[1] += im
        return Coefficient({p: (v[0], v[1]) for p, v in out.items()})

    def __neg__(self) -> "Coefficient":
        return Coefficient({p: (-re, -im) for p, (re, im) in self.terms})

    def __sub__(self, other: "Coefficient") -> "Coefficient":
        return self + (-other)

    def __mul__(self, other: "Coefficient") -> "Coefficient":
        out: Dict[Tuple, List[Fraction]] = {}
        for pa, (ra, ia) in self.terms:
            for pb, (rb, ib) in other.terms:
                phase = _phase_mul(pa, pb)
                slot = out.setdefault(phase, [Fraction(0), Fraction(0)])
                slot[0] += ra * rb - ia * ib
                slot[1] += ra * ib + ia * rb
        return Coefficient({p: (v[0], v[1]) for p, v in out.items()})

    def conj(self) -> "Coefficient":
        return Coefficient(
            {_phase_conj(p): (re, -im) for p, (re, im) in self.terms}
        )

    def phase_shift(self, phase: Tuple) -> "Coefficient":
        return Coefficient(
            {_phase_mul(p, phase): (re, im) for p, (re, im) in self.terms}
        )

    def constant(self) -> Tuple[Fraction, Fraction]:
        """The Gaussian rational value, requiring every phase to be trivial."""
        for phase, _ in self.terms:
            if phase:
                raise ValueError("coefficient carries nontrivial phases")
        if not self.terms:
            return (Fraction(0), Fraction(0))
        return self.terms[0][1]

    def __eq__(self, other):
        return isinstance(other, Coefficient) and self.terms == other.terms

    def __hash__(self):
        return hash(self.terms)

    def __repr__(self):
        if not self.terms:
            return "Coefficient(0)"
        bits = []
        for phase, (re, im) in self.terms:
            tag = "" if not phase else " * " + " ".join(
                "%d^(i*%s)" % (p, r) for p, r in phase
            )
            sign = "+" if im >= 0 else "-"
            bits.append("(%s %s %si)%s" % (re, sign, abs(im), tag))
        return "Coefficient(%s)" % " + ".join(bits)


# -- Orbit keys ---------------------------------------------------------------------


class OrbitKey(Tuple):
    """Immutable key (exponents, locals, wcoset) for one orbit class."""

    __slots__ = ()

    def __new__(cls, exponents, locals_, wcoset):
        return super().__new__(cls, (tuple(exponents), tuple(locals_), tuple(wcoset)))

    @property
    def exponents(self):
        return self[0]

    @property
    def locals(self):
        return self[1]

    @property
    def wcoset(self):
        return self[2]


def _exact_mask(locals_) -> Tuple[bool, ...]:
    return tuple(kind == EXACT for kind, _ in locals_)


def make_key(params: FiniteLevelParams, exponents, locals_, wlabels) -> Optional[OrbitKey]:
    """Validate and saturate orbit data into a canonical key.

    Returns None when the data describes no valid arrow, for instance an
    exact valuation too small for the negative part of the exponents.
    """
    exps = list(exponents)
    places = params.places
    if len(exps) == len(params.primes) and len(places) > len(params.primes):
        exps = exps + [0] * (len(places) - len(params.primes))
    if len(exps) != len(places):
        raise ValueError("exponent vector length mismatch")
    norm_locals = []
    for e, loc, place in zip(exps, locals_, places):
        if not place.in_window and e != 0:
            raise ValueError("exponents must vanish at primes outside the window")
        kind, v = loc
        if kind == EXACT:
            if v < 0 or v < -e:
                return None
            norm_locals.append((EXACT, v))
        elif kind == TOP:
            norm_locals.append((TOP, max(v, 0, -e)))
        else:
            raise ValueError("unknown local kind %r" % (kind,))
    mask = _exact_mask(norm_locals)
    coset = params.saturate_coset(wlabels, mask)
    return OrbitKey(tuple(exps), tuple(norm_locals), coset)


class AlgebraElement:
    """Finitely supported function on orbit classes with exact coefficients."""

    __slots__ = ("params", "terms")

    def __init__(self, params: FiniteLevelParams, terms: Dict[OrbitKey, Coefficient]):
        cleaned = {k: c for k, c in terms.items() if not c.is_zero()}
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "terms", cleaned)

    def __setattr__(self, *a):  # pragma: no cover - guard
        raise AttributeError("AlgebraElement is immutable")

    def __add__(self, other: "AlgebraElement") -> "AlgebraElement":
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, Coefficient.zero()) + c
        return AlgebraElement(self.params, out)

    def __sub__(self, other: "AlgebraElement") -> "AlgebraElement":
        return self + other.scale(Coefficient.of(-1))

    def scale(self, coefficient: Coefficient) -> "AlgebraElement":
        return AlgebraElement(
            self.params, {k: c * coefficient for k, c in self.terms.items()}
        )

    def is_zero(self) -> bool:
        return not self.terms

    def support_size(self) -> int:
        return len(self.terms)

    # -- equality through a common refinement -----------------------------

    def _refined_terms(self, floors: Tuple[int, ...]) -> Dict[OrbitKey, Coefficient]:
        out: Dict[OrbitKey, Coefficient] = {}
        for key, coeff in self.terms.items():
            for piece in _refine_key(self.params, key, floors):
                out[piece] = out.get(piece, Coefficient.zero()) + coeff
        return {k: c for k, c in out.items() if not c.is_zero()}

    def _floors_with(self, other: "AlgebraElement") -> Tuple[int, ...]:
        n = len(self.params.places)
        floors = [0] * n
        for elem in (self, other):
            for key in elem.terms:
                for i, (kind, v) in enumerate(key.locals):
                    level = v + 1 if kind == EXACT else v
                    floors[i] = max(floors[i], level)
        return tuple(floors)

    def equals(self, other: "AlgebraElement") -> bool:
        if self.params is not other.params:
            raise ValueError("elements live over different parameters")
        floors = self._floors_with(other)
        return self._refined_terms(floors) == other._refined_terms(floors)

    def __repr__(self):
        return "AlgebraElement(%d orbit classes)" % len(self.terms)


def _refine_key(params, key: OrbitKey, floors: Tuple[int, ...]) -> List[OrbitKey]:
    """Split TOP classes until each matches the requested floor."""
    pieces = [(list(key.locals), key.wcoset)]
    for i, floor in enumerate(floors):
        next_pieces = []
        for locals_, coset in pieces:
            kind, v = locals_[i]
            if kind == EXACT or v >= floor:
                next_pieces.append((locals_, coset))
                continue
            for new_v in range(v, floor):
                replaced = list(locals_)
                replaced[i] = (EXACT, new_v)
                next_pieces.append((replaced, coset))
            replaced = list(locals_)
            replaced[i] = (TOP, floor)
            next_pieces.append((replaced, coset))
        pieces = next_pieces
    keys = []
    for locals_, coset in pieces:
        mask = _exact_mask(locals_)
        for sub in params.split_coset(params.saturate_coset(coset, mask), mask):
            candidate = make_key(params, key.exponents, locals_, sub)
            if candidate is not None:
                keys.append(candidate)
    return keys


# -- The *-algebra operations --------------------------------------------------------


def delta_units(params: FiniteLevelParams) -> AlgebraElement:
    """Indicator of all unit arrows; the identity of the convolution."""
    n = len(params.places)
    key = make_key(
        params,
        (0,) * n,
        tuple((TOP, 0) for _ in range(n)),
        params.shimura.labels,
    )
    return AlgebraElement(params, {key: Coefficient.one()})


def _intersect_local(loc1, loc2, shift: int):
    """Intersect (loc1 shifted down by shift) with loc2.

    loc1 constrains v + shift and loc2 constrains v directly.  Returns a
    local class for v or None when the intersection is empty.
    """
    kind1, v1 = loc1
    kind2, v2 = loc2
    if kind1 == EXACT:
        target = v1 - shift
        if target < 0:
            return None
        if kind2 == EXACT:
            return (EXACT, target) if target == v2 else None
        return (EXACT, target) if target >= v2 else None
    floor1 = max(v1 - shift, 0)
    if kind2 == EXACT:
        return (EXACT, v2) if v2 >= floor1 else None
    return (TOP, max(floor1, v2))


def convolve(f1: AlgebraElement, f2: AlgebraElement) -> AlgebraElement:
    """Groupoid convolution by counting composable factorizations.

    A pair of orbit classes composes one coset of middle arrows at a time;
    the contribution lands on the orbit of the composite and equals the
    product of the coefficients.
    """
    if f1.params is not f2.params:
        raise ValueError("elements live over different parameters")
    params = f1.params
    out: Dict[OrbitKey, Coefficient] = {}
    for k1, c1 in f1.terms.items():
        for k2, c2 in f2.terms.items():
            locals_out = []
            feasible = True
            for loc1, loc2, s in zip(k1.locals, k2.locals, k2.exponents):
                merged = _intersect_local(loc1, loc2, s)
                if merged is None:
                    feasible = False
                    break
                locals_out.append(merged)
            if not feasible:
                continue
            shift_cls = params.class_of_exponents(k2.exponents)
            shifted = {params.shimura.mult(w, shift_cls) for w in k1.wcoset}
            meet = shifted & set(k2.wcoset)
            if not meet:
                continue
            exponents = tuple(a + b for a, b in zip(k1.exponents, k2.exponents))
            mask = _exact_mask(locals_out)
            product = c1 * c2
            for coset in params.split_coset(tuple(sorted(meet)), mask):
                key = make_key(params, exponents, locals_out, coset)
                if key is None:
                    raise AssertionError("composite key lost validity")
                out[key] = out.get(key, Coefficient.zero()) + product
    return AlgebraElement(params, out)


def involution(f: AlgebraElement) -> AlgebraElement:
    """Adjoint: conjugate values on inverse arrows."""
    params = f.params
    out: Dict[OrbitKey, Coefficient] = {}
    for key, coeff in f.terms.items():
        exponents = tuple(-e for e in key.exponents)
        locals_ = tuple(
            (kind, v + e) for (kind, v), e in zip(key.locals, key.exponents)
        )
        cls = params.class_of_exponents(key.exponents)
        inv_cls = params.shimura.inverse(cls)
        coset = tuple(sorted(params.shimura.mult(w, inv_cls) for w in key.wcoset))
        new_key = make_key(params, exponents, locals_, coset)
        if new_key is None:
            raise AssertionError("involution produced an invalid key")
        out[new_key] = out.get(new_key, Coefficient.zero()) + coeff.conj()
    return AlgebraElement(params, out)


def idele_norm_exponents(params: FiniteLevelParams, exponents) -> Dict[int, int]:
    """Prime factorization of the idele norm of an exponent vector."""
    out: Dict[int, int] = {}
    for e, place in zip(exponents, params.places):
        if e:
            out[place.p] = out.get(place.p, 0) + place.degree * e
    return {p: k for p, k in out.items() if k}


def time_evolution(f: AlgebraElement, t) -> AlgebraElement:
    """Scale each orbit class by its idele norm raised to i*t, symbolically."""
    t = Fraction(t)
    if t == 0:
        return f
    params = f.params
    out = {}
    for key, coeff in f.terms.items():
        norm_exps = idele_norm_exponents(params, key.exponents)
        phase = tuple(sorted((p, k * t) for p, k in norm_exps.items()))
        out[key] = coeff.phase_shift(phase) if phase else coeff
    return AlgebraElement(params, out)


# -- States and symmetries -------------------------------------------------------------


def kms_state_value(f: AlgebraElement, label: str) -> Coefficient:
    """Evaluation at the unit arrow over (1, label); a KMS state at infinite
    inverse temperature."""
    params = f.params
    total = Coefficient.zero()
    for key, coeff in f.terms.items():
        if any(e != 0 for e in key.exponents):
            continue
        hit = True
        for kind, v in key.locals:
            if kind == EXACT and v != 0:
                hit = False
                break
            if kind == TOP and v > 0:
                hit = False
                break
        if hit and label in key.wcoset:
            total = total + coeff
    return total


def kms_state_labels(params: FiniteLevelParams) -> Tuple[str, ...]:
    return params.shimura.labels


def symmetry_action(f: AlgebraElement, unit_coords, exponents) -> AlgebraElement:
    """Push the class slot by the ray class of the idele (unit, exponents)."""
    params = f.params
    cls = params.class_of_unit(unit_coords)
    cls = params.shimura.mult(cls, params.class_of_exponents(list(exponents)))
    out = {}
    for key, coeff in f.terms.items():
        coset = tuple(sorted(params.shimura.mult(w, cls) for w in key.wcoset))
        out[OrbitKey(key.exponents, key.locals, coset)] = coeff
    return AlgebraElement(params, out)


def symmetry_class(params: FiniteLevelParams, unit_coords, exponents) -> str:
    cls = params.class_of_unit(unit_coords)
    return params.shimura.mult(cls, params.class_of_exponents(list(exponents)))


# -- Concrete arrows --------------------------------------------------------------------


class GroupoidArrow:
    """One arrow at the working modulus: unit part, exponents, source point."""

    __slots__ = ("params", "unit", "exponents", "rho", "w")

    def __init__(self, params: FiniteLevelParams, unit, exponents, rho, w: str):
        self.params = params
        self.unit = params.residues.reduce(unit)
        if not params.residues.is_unit(self.unit):
            raise ValueError("unit part is not invertible at the working modulus")
        exps = tuple(int(e) for e in exponents)
        if len(exps) == len(params.primes) and len(params.places) > len(params.primes):
            exps = exps + (0,) * (len(params.places) - len(params.primes))
        if len(exps) != len(params.places):
            raise ValueError("exponent vector length mismatch")
        for e, place in zip(exps, params.places):
            if e != 0 and not place.in_window:
                raise ValueError("exponents at primes outside the window must vanish")
        self.exponents = exps
        self.rho = params.residues.reduce(rho)
        if w not in params.shimura.labels:
            raise ValueError("unknown ray class label %r" % (w,))
        self.w = w
        if not self.is_valid():
            raise ValueError("arrow divisibility fails at a negative exponent")

    def is_valid(self) -> bool:
        for i, e in enumerate(self.exponents):
            if e >= 0:
                continue
            kind, v = self.params.residue_valuation(self.rho, i)
            if kind == EXACT and v < -e:
                return False
        return True

    def idele_norm(self) -> Fraction:
        total = Fraction(1)
        for e, place in zip(self.exponents, self.params.places):
            total *= Fraction(place.norm) ** e
        return total

    def valuation_pattern(self) -> Tuple[Tuple[str, int], ...]:
        return tuple(
            self.params.residue_valuation(self.rho, i)
            for i in range(len(self.params.places))
        )

    def orbit_key(self) -> OrbitKey:
        """Canonical orbit class: transport rho to the anchored residue.

        The anchor is the product of place powers matching the valuation
        pattern, so rho = gamma * anchor for a unit gamma.  The particular
        solution of that congruence is a unit at every exact place; at TOP
        places the anchor component vanishes and the solution is patched
        to 1 there through a Bezout idempotent.
        """
        params = self.params
        ring = params.ring
        one = CyclotomicElement.one(ring.cyclo_n)
        pattern = self.valuation_pattern()
        anchor = one
        exact_part = one
        top_part = one
        for (kind, v), place in zip(pattern, params.places):
            anchor = anchor * place.element ** v
            cap = place.m_valuation + (params.cap if place.in_window else 0)
            if kind == EXACT:
                exact_part = exact_part * place.element ** cap
            else:
                top_part = top_part * place.element ** cap
        anchor_coords = params.residues.reduce(ring.coords(anchor))
        rows = vstack(
            ring.multiplication_rows(params.residues.element(anchor_coords)),
            params.residues.lattice,
        )
        combo = solve_int_rowspan(rows, list(self.rho))
        if combo is None:
            raise AssertionError("anchored residue solve failed")
        gamma0 = params.residues.reduce(combo[: ring.degree])
        if top_part == one:
            gamma = gamma0
        elif exact_part == one:
            gamma = params.residues.one()
        else:
            bez_rows = vstack(
                ring.multiplication_rows(exact_part),
                ring.multiplication_rows(top_part),
            )
            bez = solve_int_rowspan(bez_rows, ring.coords(one))
            if bez is None:
                raise AssertionError("exact and TOP parts are not coprime")
            x = ring.from_coords(bez[: ring.degree])
            y = ring.from_coords(bez[ring.degree:])
            e_top = x * exact_part
            e_exact = y * top_part
            patched = params.residues.element(gamma0) * e_exact + e_top
            gamma = params.residues.reduce(ring.coords(patched))
        if not params.residues.is_unit(gamma):
            raise AssertionError("anchor transporter is not a unit")
        gamma_cls = params.shimura.class_of(gamma)
        anchored_w = params.shimura.mult(self.w, gamma_cls)
        key = make_key(params, self.exponents, pattern, (anchored_w,))
        if key is None:
            raise AssertionError("concrete arrow produced an invalid key")
        return key

    def translated(self, gamma1, gamma2) -> "GroupoidArrow":
        """Apply the two-sided unit action (g1, g2): g goes to g1^-1 g g2,
        the source residue to g2 rho, and the class slot to w cls(g2)^-1."""
        params = self.params
        g1 = params.residues.reduce(gamma1)
        g2 = params.residues.reduce(gamma2)
        inv1 = params.residues.inverse(g1)
        unit = params.residues.mul(params.residues.mul(inv1, self.unit), g2)
        rho = params.residues.mul(g2, self.rho)
        cls2 = params.shimura.class_of(g2)
        w = params.shimura.mult(self.w, params.shimura.inverse(cls2))
        return GroupoidArrow(params, unit, self.exponents, rho, w)

    def __repr__(self):
        return "GroupoidArrow(unit=%r, exponents=%r, rho=%r, w=%s)" % (
            self.unit, self.exponents, self.rho, self.w,
        )


def element_from_arrow(arrow: GroupoidArrow, coefficient=None) -> AlgebraElement:
    coeff = coefficient if coefficient is not None else Coefficient.one()
    return AlgebraElement(arrow.params, {arrow.orbit_key(): coeff})


class BCSystem:
    """A finite model bundling parameters with its convolution identity."""

    __slots__ = ("params", "delta")

    def __init__(self, params: FiniteLevelParams):
        self.params = params
        self.delta = delta_units(params)

    def unit_space_size(self) -> int:
        return self.params.residues.size * len(self.params.shimura)

    def unit_points(self, limit: int = 20000):
        residues = self.params.residues.enumerate(limit=limit)
        return [
            (rho, w) for rho in residues for w in self.params.shimura.labels
        ]


def build_finite_bc(params: FiniteLevelParams) -> BCSystem:
    return BCSystem(params)


# -- Samplers -----------------------------------------------------------------------


def sample_unit_residue(params: FiniteLevelParams, rng) -> Tuple[int, ...]:
    h = params.residues.lattice.entries
    for _ in range(1000):
        coords = [rng.randrange(h[i][i]) for i in range(len(h))]
        reduced = params.residues.reduce(coords)
        if params.residues.is_unit(reduced):
            return reduced
    raise RuntimeError("failed to sample a unit residue")


def sample_arrow(params: FiniteLevelParams, rng, exponent_cap: Optional[int] = None) -> GroupoidArrow:
    cap = exponent_cap if exponent_cap is not None else params.cap
    for _ in range(200):
        exponents = []
        for place in params.places:
            if not place.in_window or rng.random() < 0.4:
                exponents.append(0)
            else:
                exponents.append(rng.randint(-cap, cap))
        rho_scale = CyclotomicElement.one(params.ring.cyclo_n)
        for i, place in enumerate(params.places):
            upper = params.residue_cap(i)
            v = min(rng.choice((0, 0, 1, upper)), upper)
            if v:
                rho_scale = rho_scale * place.element ** v
        unit = sample_unit_residue(params, rng)
        rho_unit = sample_unit_residue(params, rng)
        rho = params.residues.reduce(
            params.ring.coords(
                params.residues.element(rho_unit) * rho_scale
            )
        )
        w = rng.choice(params.shimura.labels)
        try:
            return GroupoidArrow(params, unit, exponents, rho, w)
        except ValueError:
            continue
    raise RuntimeError("failed to sample a valid arrow")


def sample_algebra_element(
    params: FiniteLevelParams,
    rng,
    terms: int = 3,
    exponent_cap: Optional[int] = None,
) -> AlgebraElement:
    """Random finitely supported element with small Gaussian rational values."""
    out: Dict[OrbitKey, Coefficient] = {}
    attempts = 0
    while len(out) < terms and attempts < 200:
        attempts += 1
        arrow = sample_arrow(params, rng, exponent_cap)
        key = arrow.orbit_key()
        re = Fraction(rng.randint(-3, 3), rng.choice((1, 2, 3)))
        im = Fraction(rng.randint(-3, 3), rng.choice((1, 2, 3)))
        if re == 0 and im == 0:
            re = Fraction(1)
        coeff = Coefficient.of(re, im)
        out[key] = out.get(key, Coefficient.zero()) + coeff
    return AlgebraElement(params, out)


# -- Partition function ----------------------------------------------------------------


def _ideal_norms_q(bound: int):
    return range(1, bound + 1)


def _ideal_norms_qi(bound: int):
    """Norms of nonzero ideals of Z[i], one per ideal, via quadrant reps."""
    amax = math.isqrt(bound)
    for a in range(1, amax + 1):
        yield a * a
        top = math.isqrt(bound - a * a)
        for b in range(1, top + 1):
            yield a * a + b * b


def _prime_ideal_norms(ring: RingData, bound: int) -> List[int]:
    out = []
    for p in _rational_primes(bound):
        f, g = _splitting_data(ring, p)
        norm = p ** f
        if norm <= bound:
            out.extend([norm] * g)
    return out


def _ideal_norms_sieve(ring: RingData, bound: int) -> List[int]:
    """Ideal counts by norm from the prime ideals, as a coefficient sieve."""
    counts = [0] * (bound + 1)
    counts[1] = 1
    for q in _prime_ideal_norms(ring, bound):
        for n in range(q, bound + 1, q):
            counts[n] += counts[n // q]
    return counts


_CATALAN_CACHE = {}


def catalan_constant(terms: int = 200000) -> float:
    cached = _CATALAN_CACHE.get(terms)
    if cached is None:
        total = 0.0
        for k in range(terms - 1, -1, -1):
            term = 1.0 / (2 * k + 1) ** 2
            total += term if k % 2 == 0 else -term
        _CATALAN_CACHE[terms] = cached = total
    return cached


def partition_reference(params: FiniteLevelParams, beta) -> Optional[float]:
    """Independent closed form values where one is known."""
    beta = Fraction(beta)
    if beta != 2:
        return None
    if params.ring.name == "Q":
        return math.pi ** 2 / 6
    if params.ring.name == "Q(i)":
        return (math.pi ** 2 / 6) * catalan_constant()
    return None


def partition_tail_bound(params: FiniteLevelParams, beta, bound: int) -> Optional[float]:
    """Provable bound on the mass of ideals with norm beyond the cutoff.

    Uses r(n) <= d(n)^(deg - 1) <= (2 sqrt(n))^(deg - 1), so the tail is
    at most 2^(deg-1) * integral of t^((deg-1)/2 - beta) from the cutoff,
    which converges only for beta above 1 + (deg - 1) / 2.
    """
    degree = params.ring.degree
    beta = float(beta)
    s = (degree - 1) / 2.0 - beta
    if s + 1 >= 0:
        return None
    return (2.0 ** (degree - 1)) * bound ** (s + 1) / (-(s + 1))


def partition_function(
    params: FiniteLevelParams,
    beta,
    bound: int,
    exact_cutoff: int = 2000,
) -> Dict[str, object]:
    """Truncated Dedekind zeta value by direct enumeration and Euler product.

    Enumeration is per ideal: integers for Q, one quadrant representative
    per Gaussian ideal, and a multiplicative sieve over the prime ideal
    norms for the quartic field (there the two methods share the prime
    list, which is recorded in the report).
    """
    beta_f = Fraction(beta)
    if beta_f <= 1:
        raise ValueError("the partition function requires beta > 1")
    name = params.ring.name
    if name == "Q":
        norms = list(_ideal_norms_q(bound))
        independent = True
    elif name == "Q(i)":
        norms = list(_ideal_norms_qi(bound))
        independent = True
    else:
        counts = _ideal_norms_sieve(params.ring, bound)
        norms = [n for n in range(1, bound + 1) for _ in range(counts[n])]
        independent = False
    float_beta = float(beta_f)
    total = 0.0
    for n in norms:
        total += float(n) ** (-float_beta)
    exact = None
    if bound <= exact_cutoff and beta_f.denominator == 1:
        k = int(beta_f)
        exact = Fraction(0)
        for n in norms:
            exact += Fraction(1, n ** k)
    euler = 1.0
    for q in _prime_ideal_norms(params.ring, bound):
        euler *= 1.0 / (1.0 - float(q) ** (-float_beta))
    return {
        "exact": exact,
        "float": total,
        "euler": euler,
        "tail_bound": partition_tail_bound(params, beta_f, bound),
        "reference": partition_reference(params, beta_f),
        "ideal_count": len(norms),
        "methods_independent": independent,
    }
