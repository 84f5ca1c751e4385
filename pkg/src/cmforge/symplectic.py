"""Symplectic realization of CM data and similitude-group arithmetic.

This module turns the character-lattice constructions of :mod:`cmforge.cm`
into concrete matrices.  A CM field realized inside a cyclotomic field gets
a rational symplectic space built from trace forms, the similitude group of
that space receives exact rational elements, and the two morphisms into it
attached to a CM point (the universal-quotient composite and the explicit
norm composite) can be compared entry by entry.  The last block of the file
decomposes finite-adelic similitude elements into a rational part times an
everywhere-integral part, which is what lets quotients by the integral
similitude group be computed by exact lattice arithmetic.
"""

from __future__ import annotations

import cmath
from fractions import Fraction
from functools import lru_cache
from math import gcd

from .cm import (
    cyclotomic_level,
    enumerate_cm_types,
    induced_serre_morphism,
    is_primitive,
    mu_phi,
    norm_res_composite,
    realize_on_point,
    reflex_field,
    reflex_norm,
    rho_phi,
    serre_group,
)
from .cyclotomic import CyclotomicElement, multiplication_matrix
from .galois import FieldHandle, is_cm, maximal_totally_real_subfield
from .lattice import (
    IntMatrix,
    alternating_frobenius,
    frac_identity,
    frac_inv,
    frac_matmul,
    frac_solve,
    hermite_normal_form,
    int_matrix_inverse,
    lattice_intersection,
    right_kernel,
    smith_normal_form,
    solution_sublattice,
    vstack,
)
from .tori import (
    Cocharacter,
    TorusMorphism,
    mu_tau,
    norm_morphism,
    product_torus,
    subtorus_from_char_surjection,
    torus_of_field,
)

# ---------------------------------------------------------------------------
# Cyclotomic realization plumbing
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _galois_matrix(n: int, j: int) -> IntMatrix:
    """Matrix of the automorphism zeta -> zeta^j on power-basis coordinates."""
    d = len(CyclotomicElement.one(n).coeffs)
    cols = [CyclotomicElement.zeta(n, k).galois(j).coeffs for k in range(d)]
    return IntMatrix([[int(cols[j_][i]) for j_ in range(d)] for i in range(d)])


def fixed_integral_basis(field: FieldHandle):
    """Basis of (the field) ∩ Z[zeta_n] over the power-basis coordinates.

    The fixed sublattice of the subgroup action is saturated, so its rows
    are simultaneously a Z-basis of the subfield's integral elements and a
    Q-basis of the subfield itself.
    """
    n = cyclotomic_level(field.scenario)
    d = len(CyclotomicElement.one(n).coeffs)
    conditions = []
    for h in field.subgroup:
        j = int(h)
        if j % n != 1 % n:
            conditions.append(_galois_matrix(n, j) - IntMatrix.identity(d))
    rows = solution_sublattice(conditions, ambient_rank=d)
    if rows.rows != field.degree:
        raise AssertionError("fixed lattice rank does not match the field degree")
    return tuple(CyclotomicElement(n, row) for row in rows.entries)


def _stabilizer_exponents(x: CyclotomicElement, scenario):
    return {g for g in scenario.elements if x.galois(int(g)) == x}


def _complex_value(x: CyclotomicElement) -> complex:
    root = cmath.exp(2j * cmath.pi / x.n)
    return sum(float(c) * root**k for k, c in enumerate(x.coeffs))


def totally_imaginary_generator(field: FieldHandle, *, positive: bool = False):
    """A totally imaginary element generating the CM field over Q.

    Searches the differences zeta^a - zeta^{-a} first and then small
    integer combinations of them, ordered by coefficient height, so the
    result is deterministic.  With ``positive`` the sign is normalized to
    give positive imaginary part under the distinguished embedding.
    """
    ok, _ = is_cm(field)
    if not ok:
        raise ValueError("totally imaginary generators only exist for CM fields")
    n = cyclotomic_level(field.scenario)
    span = [a for a in range(1, n // 2 + (n % 2)) if (2 * a) % n != 0]

    def differences():
        for a in range(1, n):
            if (2 * a) % n:
                yield CyclotomicElement.zeta(n, a) - CyclotomicElement.zeta(n, n - a)
        for height in range(2, 4):
            for combo in _bounded_vectors(len(span), height):
                x = CyclotomicElement.zero(n)
                for c, a in zip(combo, span):
                    if c:
                        d = CyclotomicElement.zeta(n, a) - CyclotomicElement.zeta(n, n - a)
                        x = x + d * c
                yield x

    for xi in differences():
        if xi.is_zero():
            continue
        if _stabilizer_exponents(xi, field.scenario) != set(field.subgroup):
            continue
        assert xi.conjugate() == -xi
        if positive and _complex_value(xi).imag < 0:
            xi = -xi
        return xi
    raise ValueError("no totally imaginary generator of height below 4 found")


def _bounded_vectors(length, height):
    """Integer vectors with max |entry| equal to the given height."""
    if length == 0:
        return
    rng = range(-height, height + 1)

    def rec(prefix):
        if len(prefix) == length:
            if max(abs(c) for c in prefix) == height:
                yield tuple(prefix)
            return
        for c in rng:
            yield from rec(prefix + [c])

    yield from rec([])


# ---------------------------------------------------------------------------
# Symplectic spaces from trace forms
# ---------------------------------------------------------------------------


class SymplecticSummand:
    """One CM-field factor of the symplectic space with its trace form data."""

    __slots__ = ("field", "xi", "basis")

    def __init__(self, field: FieldHandle, xi: CyclotomicElement, basis):
        object.__setattr__(self, "field", field)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "basis", tuple(basis))

    def __setattr__(self, *a):  # pragma: no cover - guard
        raise AttributeError("SymplecticSummand is immutable")

    @property
    def degree(self):
        return len(self.basis)

    def __repr__(self):
        return f"SymplecticSummand({self.field.name or self.field.subgroup}, xi={self.xi!r})"


class SymplecticSpace:
    """Direct sum of CM fields with the alternating trace pairing.

    Vectors are rational coordinate tuples over the concatenated integral
    bases of the summands; the distinguished lattice is exactly the integer
    coordinate vectors.
    """

    __slots__ = ("summands", "gram", "dim")

    def __init__(self, summands, gram):
        object.__setattr__(self, "summands", tuple(summands))
        object.__setattr__(self, "gram", tuple(tuple(Fraction(x) for x in row) for row in gram))
        object.__setattr__(self, "dim", sum(s.degree for s in self.summands))
        if len(self.gram) != self.dim:
            raise ValueError("gram matrix size does not match the total degree")

    def __setattr__(self, *a):  # pragma: no cover - guard
        raise AttributeError("SymplecticSpace is immutable")

    @property
    def genus(self):
        return self.dim // 2

    def offsets(self):
        out = []
        pos = 0
        for s in self.summands:
            out.append(pos)
            pos += s.degree
        return out

    def psi(self, x, y) -> Fraction:
        acc = Fraction(0)
        for i, row in enumerate(self.gram):
            xi = Fraction(x[i])
            if xi:
                for j, gij in enumerate(row):
                    if gij:
                        acc += xi * gij * Fraction(y[j])
        return acc

    def elements_from_coords(self, coords):
        """Split a coordinate vector into one field element per summand."""
        out = []
        for off, s in zip(self.offsets(), self.summands):
            x = CyclotomicElement.zero(s.basis[0].n)
            for k in range(s.degree):
                c = Fraction(coords[off + k])
                if c:
                    x = x + s.basis[k] * c
            out.append(x)
        return tuple(out)

    def in_lattice(self, coords) -> bool:
        return all(Fraction(c).denominator == 1 for c in coords)

    def multiplication_element(self, elements) -> "GSpElement":
        """The similitude given by componentwise multiplication.

        Every component must multiply its summand into itself with one
        common rational value of x·x^ι; otherwise the block matrix fails
        the similitude identity and the call is rejected.
        """
        if len(elements) != len(self.summands):
            raise ValueError("one multiplier per summand is required")
        nu = None
        for s, x in zip(self.summands, elements):
            norm = x * x.conjugate()
            if not norm.is_rational():
                raise ValueError("multiplier does not have rational x·x^ι")
            value = norm.rational_value()
            if nu is None:
                nu = value
            elif nu != value:
                raise ValueError("summands disagree on the similitude factor")
        rows = [[Fraction(0)] * self.dim for _ in range(self.dim)]
        for off, s, x in zip(self.offsets(), self.summands, elements):
            block = multiplication_matrix(x, list(s.basis))
            for i in range(s.degree):
                for j in range(s.degree):
                    rows[off + i][off + j] = block[i][j]
        return GSpElement(self, rows)

    def __eq__(self, other):
        if not isinstance(other, SymplecticSpace):
            return NotImplemented
        return (
            tuple((s.field, s.xi) for s in self.summands)
            == tuple((s.field, s.xi) for s in other.summands)
            and self.gram == other.gram
        )

    def __hash__(self):
        return hash((tuple((s.field, s.xi) for s in self.summands), self.gram))

    def __repr__(self):
        names = ", ".join(s.field.name or "?" for s in self.summands)
        return f"SymplecticSpace({names}; dim={self.dim})"


def _field_trace(x: CyclotomicElement, degree: int) -> Fraction:
    """Trace from the subfield of the given degree down to Q."""
    full = x.trace()
    d = len(CyclotomicElement.one(x.n).coeffs)
    return Fraction(full) * degree / d


def build_symplectic_space(fields, generators=None, *, positive=False) -> SymplecticSpace:
    """Assemble the direct sum of trace-form symplectic spaces.

    Each summand contributes the pairing (x, y) -> Tr(xi·x·y^ι) on its
    integral basis; the result is checked to be alternating and
    nondegenerate before it is returned.
    """
    fields = list(fields)
    if generators is None:
        generators = [None] * len(fields)
    summands = []
    for field, xi in zip(fields, generators):
        if xi is None:
            xi = totally_imaginary_generator(field, positive=positive)
        else:
            _validate_imaginary_generator(field, xi)
        summands.append(SymplecticSummand(field, xi, fixed_integral_basis(field)))
    dim = sum(s.degree for s in summands)
    rows = [[Fraction(0)] * dim for _ in range(dim)]
    pos = 0
    for s in summands:
        for i in range(s.degree):
            for j in range(s.degree):
                value = _field_trace(s.xi * s.basis[i] * s.basis[j].conjugate(), s.degree)
                rows[pos + i][pos + j] = value
        pos += s.degree
    for i in range(dim):
        for j in range(dim):
            if rows[i][j] != -rows[j][i]:
                raise AssertionError("trace pairing is not alternating")
    if _frac_det(rows) == 0:
        raise AssertionError("trace pairing is degenerate")
    return SymplecticSpace(summands, rows)


def _validate_imaginary_generator(field, xi):
    if xi.conjugate() != -xi:
        raise ValueError("generator is not totally imaginary")
    if _stabilizer_exponents(xi, field.scenario) != set(field.subgroup):
        raise ValueError("element does not generate the field")


def _frac_det(rows):
    a = [list(r) for r in rows]
    n = len(a)
    det = Fraction(1)
    for c in range(n):
        piv = next((i for i in range(c, n) if a[i][c]), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            a[c], a[piv] = a[piv], a[c]
            det = -det
        det *= a[c][c]
        inv = 1 / a[c][c]
        for i in range(c + 1, n):
            if a[i][c]:
                f = a[i][c] * inv
                a[i] = [x - f * y for x, y in zip(a[i], a[c])]
    return det


# ---------------------------------------------------------------------------
# Similitude group elements
# ---------------------------------------------------------------------------


def _transpose(rows):
    return tuple(tuple(r[i] for r in rows) for i in range(len(rows[0])))


class GSpElement:
    """Rational symplectic similitude of a fixed space.

    Construction computes the multiplier from Mᵀ·G·M = nu·G and rejects
    matrices that do not satisfy it exactly.
    """

    __slots__ = ("space", "matrix", "similitude")

    def __init__(self, space: SymplecticSpace, rows):
        matrix = tuple(tuple(Fraction(x) for x in row) for row in rows)
        if len(matrix) != space.dim or any(len(r) != space.dim for r in matrix):
            raise ValueError("matrix size does not match the space")
        product = frac_matmul(frac_matmul(_transpose(matrix), space.gram), matrix)
        nu = None
        for i in range(space.dim):
            for j in range(space.dim):
                if space.gram[i][j]:
                    nu = product[i][j] / space.gram[i][j]
                    break
            if nu is not None:
                break
        if nu is None or nu == 0:
            raise ValueError("matrix is singular on the symplectic form")
        for i in range(space.dim):
            for j in range(space.dim):
                if product[i][j] != nu * space.gram[i][j]:
                    raise ValueError("matrix does not scale the symplectic form")
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "similitude", nu)

    def __setattr__(self, *a):  # pragma: no cover - guard
        raise AttributeError("GSpElement is immutable")

    @classmethod
    def identity(cls, space) -> "GSpElement":
        return cls(space, frac_identity(space.dim))

    def __mul__(self, other):
        if not isinstance(other, GSpElement):
            return NotImplemented
        return GSpElement(self.space, frac_matmul(self.matrix, other.matrix))

    def inverse(self) -> "GSpElement":
        return GSpElement(self.space, frac_inv(self.matrix))

    def apply(self, coords):
        return tuple(
            sum(self.matrix[i][j] * Fraction(coords[j]) for j in range(self.space.dim))
            for i in range(self.space.dim)
        )

    def is_integral_at(self, p: int) -> bool:
        return all(_valuation(x, p) >= 0 for row in self.matrix for x in row if x)

    def has_unit_similitude_at(self, p: int) -> bool:
        return _valuation(self.similitude, p) == 0

    def __eq__(self, other):
        if not isinstance(other, GSpElement):
            return NotImplemented
        return self.space == other.space and self.matrix == other.matrix

    def __hash__(self):
        return hash(self.matrix)

    def __repr__(self):
        return f"GSpElement(dim={self.space.dim}, nu={self.similitude})"


def gsp_check(space: SymplecticSpace, rows) -> GSpElement:
    """Validate a rational matrix as a similitude and report its multiplier."""
    return GSpElement(space, rows)


def _valuation(x: Fraction, p: int) -> int:
    x = Fraction(x)
    if x == 0:
        raise ValueError("zero has no finite valuation")
    v = 0
    num, den = x.numerator, x.denominator
    while num % p == 0:
        num //= p
        v += 1
    while den % p == 0:
        den //= p
        v -= 1
    return v


# ---------------------------------------------------------------------------
# Integral symplectic bases
# ---------------------------------------------------------------------------


def _greedy_hyperbolic(space: SymplecticSpace):
    """Rational symplectic basis via hyperbolic-pair extraction.

    Deterministic pivoting: take the first remaining vector, pair it with
    the first partner of nonzero pairing, normalize and project the rest
    into the orthogonal complement.
    """
    pool = [
        tuple(Fraction(1 if i == j else 0) for j in range(space.dim))
        for i in range(space.dim)
    ]
    left, right = [], []
    while pool:
        x = pool.pop(0)
        partner = next((k for k, y in enumerate(pool) if space.psi(x, y)), None)
        if partner is None:
            raise AssertionError("degenerate pairing during hyperbolic extraction")
        y = pool.pop(partner)
        s = space.psi(x, y)
        y = tuple(c / s for c in y)
        left.append(x)
        right.append(y)
        projected = []
        for z in pool:
            zy = space.psi(z, y)
            zx = space.psi(z, x)
            projected.append(
                tuple(zc - zy * xc + zx * yc for zc, xc, yc in zip(z, x, y))
            )
        pool = projected
    return left + right


def standard_j(genus: int):
    """Gram matrix of the reference symplectic basis, [[0, I], [-I, 0]]."""
    rows = [[Fraction(0)] * (2 * genus) for _ in range(2 * genus)]
    for k in range(genus):
        rows[k][genus + k] = Fraction(1)
        rows[genus + k][k] = Fraction(-1)
    return tuple(tuple(r) for r in rows)


def integral_symplectic_basis(space: SymplecticSpace):
    """Rescale the pairing so a symplectic basis exists inside the lattice.

    Returns (rescaled space, basis rows).  The generators are divided by
    the square of the common denominator q of the rational symplectic
    basis and the basis vectors are multiplied by q, which keeps all the
    pairings fixed while moving the vectors into integer coordinates.
    """
    basis = _greedy_hyperbolic(space)
    q = 1
    for vec in basis:
        for c in vec:
            q = q * c.denominator // gcd(q, c.denominator)
    scaled = [tuple(c * q for c in vec) for vec in basis]
    new_space = _rescaled_space(space, q)
    reference = standard_j(space.genus)
    for vec in scaled:
        if not new_space.in_lattice(vec):
            raise AssertionError("rescaled basis left the integral lattice")
    for i, x in enumerate(scaled):
        for j, y in enumerate(scaled):
            if new_space.psi(x, y) != reference[i][j]:
                raise AssertionError("rescaled basis is not symplectic")
    return new_space, tuple(scaled)


def _rescaled_space(space: SymplecticSpace, q: int) -> SymplecticSpace:
    factor = Fraction(1, q * q)
    summands = [
        SymplecticSummand(s.field, s.xi * factor, s.basis) for s in space.summands
    ]
    gram = [[g * factor for g in row] for row in space.gram]
    return SymplecticSpace(summands, gram)


# ---------------------------------------------------------------------------
# The rational-similitude subtorus
# ---------------------------------------------------------------------------


def similitude_subtorus(E: FieldHandle):
    """Subtorus of T^E of points with x·x^ι rational, with its inclusion.

    Characters of the quotient torus T^E -> T^F/G_m pull back to the
    annihilator of the subtorus; the character lattice of the subtorus is
    the corresponding saturated quotient of X^*(T^E).
    """
    ok, _ = is_cm(E)
    if not ok:
        raise ValueError("the similitude subtorus needs a CM field")
    F = maximal_totally_real_subfield(E)
    te = torus_of_field(E)
    norm_map = norm_morphism(E, F).char_map
    pulled = []
    for k in range(F.degree - 1):
        char = [0] * F.degree
        char[k] = 1
        char[k + 1] = -1
        pulled.append(norm_map.apply(char))
    if pulled:
        surjection = right_kernel(IntMatrix(pulled))
    else:
        surjection = IntMatrix.identity(E.degree)
    name = f"similitude({E.name or '?'})"
    sub = subtorus_from_char_surjection(te, surjection, name=name)
    inclusion = TorusMorphism(sub, te, surjection, name="incl")
    return sub, inclusion


def similitude_norm(field: FieldHandle, x: CyclotomicElement):
    """x·x^ι as a rational number, or None when it leaves Q."""
    value = x * x.conjugate()
    if not value.is_rational():
        return None
    return value.rational_value()


def _annihilator_rows(E: FieldHandle) -> list:
    """Characters of T^E vanishing on the similitude subtorus."""
    F = maximal_totally_real_subfield(E)
    norm_map = norm_morphism(E, F).char_map
    rows = []
    for k in range(F.degree - 1):
        char = [0] * F.degree
        char[k] = 1
        char[k + 1] = -1
        rows.append(norm_map.apply(char))
    return rows


# ---------------------------------------------------------------------------
# CM points
# ---------------------------------------------------------------------------


class CMPointData:
    """A CM point for the Siegel datum: types, cocharacter, matrix model."""

    __slots__ = (
        "field",
        "types",
        "space",
        "torus",
        "mu",
        "h_pair",
        "reflex_compositum",
        "injection",
        "serre",
        "reflex_serre",
    )

    def __init__(self, **kw):
        for slot in self.__slots__:
            object.__setattr__(self, slot, kw[slot])

    def __setattr__(self, *a):  # pragma: no cover - guard
        raise AttributeError("CMPointData is immutable")

    def __repr__(self):
        names = ", ".join(t.field.name or "?" for t in self.types)
        return f"CMPointData({self.field.name or '?'}; types on {names})"


def build_cm_point(E: FieldHandle, *, generators=None) -> CMPointData:
    """Search for a CM type collection realizing a point for the field.

    Candidates are primitive CM types on CM fields of the scenario whose
    reflex field lands inside E; the first singleton making the universal
    composite injective wins.  The search order is deterministic, so the
    same field always produces the same point.
    """
    ok, _ = is_cm(E)
    if not ok:
        raise ValueError("CM points are built over CM fields")
    s = E.scenario
    sg = serre_group(E)
    candidates = []
    seen = set()
    for sub in s.subgroups_containing(frozenset({s.identity})):
        if sub in seen:
            continue
        seen.add(sub)
        handle = s.field(sub)
        if is_cm(handle)[0]:
            candidates.append(handle)
    candidates.sort(key=lambda f: (-f.degree, sorted(f.subgroup)))
    chosen = None
    for field in candidates:
        for t in enumerate_cm_types(field):
            if not is_primitive(t):
                continue
            estar = reflex_field(t)
            if not E.contains_field(estar):
                continue
            sgr = serre_group(estar)
            inj = rho_phi(t, sgr).compose(induced_serre_morphism(sg, sgr))
            if inj.is_injective():
                chosen = (t, sgr, inj)
                break
        if chosen:
            break
    if chosen is None:
        raise ValueError("no primitive CM type with reflex inside the field works")
    t, sgr, inj = chosen
    types = (t,)
    reflex_serre = (sgr,)
    torus = product_torus([torus_of_field(t.field)])
    vector = []
    for tt in types:
        vector.extend(mu_phi(tt).vector)
    mu = Cocharacter(torus, vector)
    iota = s.iota
    h_pair = (mu, mu.translate(iota))
    compositum = reflex_field(types[0])
    for tt in types[1:]:
        compositum = compositum.compositum(reflex_field(tt))
    if not E.contains_field(compositum):
        raise AssertionError("reflex compositum escapes the CM field")
    if mu.stabilizer() != compositum.subgroup:
        raise AssertionError("the point cocharacter is not defined over the compositum")
    injection = TorusMorphism(sg.torus, torus, _hcat([inj.char_map]), name="inj")
    if not injection.is_injective():
        raise AssertionError("assembled injection lost injectivity")
    space = None
    if (s.name or "").startswith("cyclotomic-"):
        space = build_symplectic_space(
            [tt.field for tt in types], generators=generators
        )
    return CMPointData(
        field=E,
        types=types,
        space=space,
        torus=torus,
        mu=mu,
        h_pair=h_pair,
        reflex_compositum=compositum,
        injection=injection,
        serre=sg,
        reflex_serre=reflex_serre,
    )


def _hcat(blocks):
    rows = blocks[0].rows
    if any(b.rows != rows for b in blocks):
        raise ValueError("row count mismatch in horizontal concatenation")
    out = []
    for i in range(rows):
        row = []
        for b in blocks:
            row.extend(b.row(i))
        out.append(row)
    return IntMatrix(out)


# ---------------------------------------------------------------------------
# The two morphisms into the similitude torus
# ---------------------------------------------------------------------------


def phi_morphism(K: FieldHandle, point: CMPointData) -> TorusMorphism:
    """Universal-quotient composite from T^K into the product torus.

    Chains the quotient projection, the norm between universal quotients,
    the norms to the reflex quotients and the type morphisms.  The image
    is checked against the annihilator of the similitude subtorus, and the
    archimedean pair of the source is checked to land on the point's pair.
    """
    if not K.contains_field(point.field):
        raise ValueError("the base field must contain the CM field of the point")
    sgk = point.serre if K == point.field else serre_group(K)
    down = induced_serre_morphism(sgk, point.serre)
    blocks = []
    for t, sgr in zip(point.types, point.reflex_serre):
        step = induced_serre_morphism(point.serre, sgr)
        composite = rho_phi(t, sgr).compose(step).compose(down).compose(sgk.projection)
        for row in _annihilator_rows(t.field):
            if any(composite.char_map.apply(row)):
                raise AssertionError("image is not inside the similitude subtorus")
        blocks.append(composite.char_map)
    phi = TorusMorphism(sgk.projection.source, point.torus, _hcat(blocks), name="phi")
    hodge = mu_tau(K, sgk.tau)
    if phi.push_cocharacter(hodge) != point.mu:
        raise AssertionError("the morphism does not carry the Hodge cocharacter")
    if phi.push_cocharacter(hodge.translate(K.scenario.iota)) != point.h_pair[1]:
        raise AssertionError("the morphism does not carry the conjugate cocharacter")
    return phi


def phi_explicit(K: FieldHandle, point: CMPointData) -> TorusMorphism:
    """Closed-form composite: field norms to the reflex fields, then type norms."""
    if not K.contains_field(point.field):
        raise ValueError("the base field must contain the CM field of the point")
    blocks = []
    for t in point.types:
        composite = reflex_norm(t).compose(norm_morphism(K, reflex_field(t)))
        blocks.append(composite.char_map)
    tk = torus_of_field(K)
    return TorusMorphism(tk, point.torus, _hcat(blocks), name="phi-explicit")


def eta_morphism(K: FieldHandle, point: CMPointData) -> TorusMorphism:
    """Norm of the restriction of scalars of the point cocharacter."""
    if not K.contains_field(point.reflex_compositum):
        raise ValueError("the base field must contain the reflex compositum")
    return norm_res_composite(K, point.mu, name="eta")


def character_map_report(K: FieldHandle, point: CMPointData) -> dict:
    """Compare the three constructions of the map into the product torus."""
    phi = phi_morphism(K, point)
    explicit = phi_explicit(K, point)
    eta = eta_morphism(K, point)
    checks = [
        {"id": "phi-universal-vs-explicit", "pass": phi.char_map == explicit.char_map},
        {"id": "phi-equals-eta", "pass": phi.char_map == eta.char_map},
        {"id": "eta-explicit-agree", "pass": eta.char_map == explicit.char_map},
    ]
    return {
        "field": K.name or "?",
        "cm_field": point.field.name or "?",
        "char_map": [list(phi.char_map.row(i)) for i in range(phi.char_map.rows)],
        "checks": checks,
        "all_pass": all(c["pass"] for c in checks),
    }


# ---------------------------------------------------------------------------
# Realizing morphisms on rational points
# ---------------------------------------------------------------------------


def element_from_embedding_values(field: FieldHandle, values):
    """Reconstruct a field element from its tuple of embedding images."""
    n = cyclotomic_level(field.scenario)
    basis = fixed_integral_basis(field)
    order = field.scenario.elements.index
    exps = [int(min(c, key=order)) for c in field.embeddings]
    if len(values) != len(exps):
        raise ValueError("one value per embedding is required")
    d = len(CyclotomicElement.one(n).coeffs)
    rows = []
    rhs = []
    for k, j in enumerate(exps):
        images = [b.galois(j).coeffs for b in basis]
        for c in range(d):
            rows.append(tuple(Fraction(images[t][c]) for t in range(len(basis))))
            rhs.append(Fraction(values[k].coeffs[c]))
    sol = frac_solve(rows, rhs)
    if sol is None:
        raise ValueError("values are not the embedding images of one element")
    x = CyclotomicElement.zero(n)
    for c, b in zip(sol, basis):
        if c:
            x = x + b * c
    for k, j in enumerate(exps):
        assert x.galois(j) == values[k]
    return x


def gsp_realization(point: CMPointData, morphism: TorusMorphism, x) -> GSpElement:
    """Matrix of a morphism value acting on the symplectic space.

    Evaluates the character map on an exact point of the source field,
    reassembles one element per summand and returns the block multiplication
    matrix together with its similitude factor.
    """
    if point.space is None:
        raise ValueError("the point has no matrix realization")
    values = realize_on_point(morphism, x)
    elements = []
    pos = 0
    for t in point.types:
        chunk = values[pos : pos + t.field.degree]
        pos += t.field.degree
        elements.append(element_from_embedding_values(t.field, chunk))
    return point.space.multiplication_element(elements)


# ---------------------------------------------------------------------------
# Finite-adelic elements and their rational-integral decomposition
# ---------------------------------------------------------------------------


def _is_prime(p: int) -> bool:
    if p < 2:
        return False
    d = 2
    while d * d <= p:
        if p % d == 0:
            return False
        d += 1
    return True


def _prime_factors(n: int):
    n = abs(n)
    out = set()
    d = 2
    while d * d <= n:
        while n % d == 0:
            out.add(d)
            n //= d
        d += 1
    if n > 1:
        out.add(n)
    return out


class AdelicGSp:
    """Finite-adelic similitude with finite support and a rational tail.

    The element equals ``local[p]`` at the stored primes and ``tail`` at
    every other prime; the default tail is the identity, which models the
    restricted product directly.
    """

    __slots__ = ("space", "local", "tail")

    def __init__(self, space: SymplecticSpace, local, tail: GSpElement | None = None):
        parts = {}
        for p, g in dict(local).items():
            if not _is_prime(p):
                raise ValueError(f"support contains the non-prime {p}")
            if g.space != space:
                raise ValueError("local part lives on a different space")
            parts[p] = g
        if tail is None:
            tail = GSpElement.identity(space)
        if tail.space != space:
            raise ValueError("tail lives on a different space")
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "local", dict(sorted(parts.items())))
        object.__setattr__(self, "tail", tail)

    def __setattr__(self, *a):  # pragma: no cover - guard
        raise AttributeError("AdelicGSp is immutable")

    @property
    def support(self):
        return tuple(self.local)

    def local_at(self, p: int) -> GSpElement:
        return self.local.get(p, self.tail)

    def scale_left(self, q: GSpElement) -> "AdelicGSp":
        return AdelicGSp(
            self.space,
            {p: q * g for p, g in self.local.items()},
            tail=q * self.tail,
        )

    def _tail_denominator_primes(self):
        primes = set()
        for row in self.tail.matrix:
            for x in row:
                primes |= _prime_factors(Fraction(x).denominator)
        nu = self.tail.similitude
        primes |= _prime_factors(nu.numerator)
        primes |= _prime_factors(nu.denominator)
        return primes

    def is_everywhere_integral(self) -> bool:
        """Integral entries and unit similitude at every single prime."""
        for p, g in self.local.items():
            if not (g.is_integral_at(p) and g.has_unit_similitude_at(p)):
                return False
        return self._tail_denominator_primes() <= set(self.local)

    def __eq__(self, other):
        if not isinstance(other, AdelicGSp):
            return NotImplemented
        if self.space != other.space or self.tail != other.tail:
            return False
        keys = set(self.local) | set(other.local)
        return all(self.local_at(p) == other.local_at(p) for p in keys)

    def __repr__(self):
        return f"AdelicGSp(support={self.support}, dim={self.space.dim})"


def decompose_gsp(f: AdelicGSp):
    """Split an adelic similitude as rational times everywhere-integral.

    Returns (q, gamma) with q rational of positive multiplier, gamma equal
    to q^{-1}·f and integral with unit similitude at every prime.  The
    lattice moved by f is computed prime by prime through Smith normal
    form, its pairing is matched against the reference pairing through the
    alternating Frobenius form, and the resulting basis is the rational
    part.  Both factors are exact; the product returns f on the nose.
    """
    space = f.space
    n = space.dim
    tail = f.tail
    nu = abs(tail.similitude)
    for p, g in f.local.items():
        nu *= Fraction(p) ** (_valuation(g.similitude, p) - _valuation(tail.similitude, p))
    basis = [list(row) for row in _transpose(tail.matrix)]
    for p, g in f.local.items():
        relative = frac_matmul(frac_inv(tail.matrix), g.matrix)
        denom = _common_denominator(relative)
        integral = IntMatrix([[int(x * denom) for x in row] for row in relative])
        u, d, _ = smith_normal_form(integral)
        u_inv = int_matrix_inverse(u)
        shift = _valuation(Fraction(denom), p)
        scale = [
            Fraction(p) ** (_valuation(Fraction(d[k, k]), p) - shift) for k in range(n)
        ]
        cols = [[u_inv[i, k] * scale[k] for k in range(n)] for i in range(n)]
        local_rows = [
            [
                sum(Fraction(tail.matrix[i][j]) * cols[j][k] for j in range(n))
                for i in range(n)
            ]
            for k in range(n)
        ]
        basis = _replace_at_prime(basis, local_rows, p)
    gram_m = [
        [space.psi(basis[i], basis[j]) for j in range(n)] for i in range(n)
    ]
    w_m, inv_m = _scaled_frobenius(gram_m)
    w_g, inv_g = _scaled_frobenius([list(r) for r in space.gram])
    if len(inv_m) != len(inv_g) or any(
        a != nu * b for a, b in zip(inv_m, inv_g)
    ):
        raise AssertionError("the moved lattice does not scale the pairing by nu")
    adapted = frac_matmul(
        frac_matmul(frac_inv([[Fraction(x) for x in row] for row in w_g.entries]),
                    [[Fraction(x) for x in row] for row in w_m.entries]),
        basis,
    )
    q = GSpElement(space, _transpose(adapted))
    if q.similitude != nu:
        raise AssertionError("rational part has the wrong multiplier")
    gamma = f.scale_left(q.inverse())
    if not gamma.is_everywhere_integral():
        raise AssertionError("integral part failed the integrality check")
    for p in f.support:
        if q * gamma.local_at(p) != f.local_at(p):
            raise AssertionError("decomposition does not multiply back")
    return q, gamma


def _common_denominator(rows) -> int:
    denom = 1
    for row in rows:
        for x in row:
            x = Fraction(x)
            denom = denom * x.denominator // gcd(denom, x.denominator)
    return denom


def _lattice_sum(A: IntMatrix, B: IntMatrix) -> IntMatrix:
    h, _ = hermite_normal_form(vstack(A, B))
    return IntMatrix([row for row in h.entries if any(row)])


def _replace_at_prime(current, candidate, p: int):
    """Lattice equal to ``candidate`` at p and to ``current`` at other primes.

    Both arguments are full-rank rational row bases.  With k big enough
    that p^k carries each lattice into the other p-locally, the glue is
    (candidate ∩ p^{-k}·current) + p^k·current; localizing at p collapses
    the formula to candidate, and anywhere else to current.
    """
    rel = frac_matmul(candidate, frac_inv(current))
    k = 0
    for rows in (rel, frac_inv(rel)):
        for row in rows:
            for x in row:
                if x:
                    k = max(k, -_valuation(x, p))
    widened = [[x * Fraction(p) ** (-k) for x in row] for row in current]
    d1, d2 = _common_denominator(candidate), _common_denominator(widened)
    denom = d1 * d2 // gcd(d1, d2)
    a_int = IntMatrix([[int(x * denom) for x in row] for row in candidate])
    b_int = IntMatrix([[int(x * denom) for x in row] for row in widened])
    meet = lattice_intersection(a_int, b_int)
    glued = _lattice_sum(meet, b_int * (p ** (2 * k)))
    return [[Fraction(x, denom) for x in row] for row in glued.entries]


def _scaled_frobenius(gram):
    """Frobenius data of a rational alternating matrix.

    Returns (U, invariants) with U integral unimodular and the invariants
    rational, matching U·gram·Uᵀ in adjacent-pair block form.
    """
    denom = _common_denominator(gram)
    integral = IntMatrix([[int(Fraction(x) * denom) for x in row] for row in gram])
    u, invariants = alternating_frobenius(integral)
    return u, tuple(Fraction(d, denom) for d in invariants)


def adjoint_project(element):
    """Canonical integer representative of a matrix modulo rational scalars.

    Clears denominators with one common factor, divides out the content and
    normalizes the sign of the first nonzero entry, so two matrices agree
    up to Q^× exactly when their images coincide.
    """
    rows = element.matrix if isinstance(element, GSpElement) else element
    rows = [[Fraction(x) for x in row] for row in rows]
    denom = 1
    for row in rows:
        for x in row:
            denom = denom * x.denominator // gcd(denom, x.denominator)
    ints = [[int(x * denom) for x in row] for row in rows]
    content = 0
    for row in ints:
        for x in row:
            content = gcd(content, abs(x))
    if content > 1:
        ints = [[x // content for x in row] for row in ints]
    lead = next((x for row in ints for x in row if x), 0)
    if lead < 0:
        ints = [[-x for x in row] for row in ints]
    return tuple(tuple(row) for row in ints)


# ---------------------------------------------------------------------------
# Randomized sampling of adelic elements
# ---------------------------------------------------------------------------


def sample_integral_symplectic(space: SymplecticSpace, rng, steps: int = 4) -> GSpElement:
    """Random product of integral symplectic transvections (multiplier one).

    Directions and coefficients are kept tiny on purpose: entry growth is
    multiplicative across the factors, and the decomposition pipeline does
    exact arithmetic on whatever this returns.
    """
    denom = _common_denominator(space.gram)
    n = space.dim
    result = GSpElement.identity(space)
    made = 0
    while made < steps:
        v = [rng.randint(-1, 1) for _ in range(n)]
        if not any(v):
            continue
        c = rng.choice([-1, 1]) * denom
        w = [sum(space.gram[j][i] * v[j] for j in range(n)) for i in range(n)]
        rows = [
            [Fraction(int(i == j)) + c * v[i] * w[j] for j in range(n)]
            for i in range(n)
        ]
        result = result * GSpElement(space, rows)
        made += 1
    return result


@lru_cache(maxsize=None)
def _frobenius_frame(space: SymplecticSpace):
    """Unimodular basis change P with Pᵀ·gram·P in adjacent-pair block form."""
    w, _ = _scaled_frobenius([list(r) for r in space.gram])
    p_mat = w.transpose()
    return p_mat, int_matrix_inverse(p_mat)


def sample_local_similitude(
    space: SymplecticSpace, p: int, rng, max_val: int = 3, steps: int = 2
) -> GSpElement:
    """Random similitude with interesting valuations only at the prime p.

    A diagonal element with blockwise multiplier p^m is written in the
    block normal form of the pairing and conjugated back, so its entries
    are p-power multiples of integers; integral transvections on both
    sides hide the diagonal shape.
    """
    frame, frame_inv = _frobenius_frame(space)
    m = rng.randint(-2, max_val)
    lo, hi = min(0, m), max(0, m)
    exponents = []
    for _ in range(space.genus):
        a = rng.randint(lo, hi)
        exponents.extend([a, m - a])
    conjugated = [
        [
            sum(
                Fraction(frame[i, k]) * Fraction(p) ** exponents[k] * frame_inv[k, j]
                for k in range(space.dim)
            )
            for j in range(space.dim)
        ]
        for i in range(space.dim)
    ]
    torus_part = GSpElement(space, conjugated)
    left = sample_integral_symplectic(space, rng, steps)
    right = sample_integral_symplectic(space, rng, steps)
    return left * torus_part * right


def sample_adelic_gsp(
    space: SymplecticSpace, primes, rng, max_val: int = 3, steps: int = 2
) -> AdelicGSp:
    """Random finite-adelic similitude supported on the given primes."""
    local = {}
    for p in primes:
        if rng.random() < 0.75:
            local[p] = sample_local_similitude(space, p, rng, max_val, steps)
    return AdelicGSp(space, local)
