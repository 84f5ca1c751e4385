"""CM types, reflex fields and norms, and the attached universal torus.

Everything runs at the level of character lattices over a finite Galois
scenario.  The would-be group of all automorphisms of an algebraic closure
enters only through its finite quotient acting on the relevant embeddings;
the defining conditions quantify over that quotient, which is exactly what
they factor through.

A realization layer at the bottom of the module evaluates character maps on
actual field elements inside a cyclotomic model, which gives the
determinant oracle for reflex norms an implementation path independent of
the lattice solve.
"""

from __future__ import annotations

from fractions import Fraction

from .cyclotomic import CyclotomicElement
from .galois import (
    FieldHandle,
    is_cm,
    maximal_cm_subfield,
    maximal_totally_real_subfield,
)
from .lattice import (
    IntMatrix,
    frac_nullspace,
    frac_solve,
    hermite_normal_form,
    lattice_contains,
    right_kernel,
    smith_normal_form,
    solution_sublattice,
    solve_int_rowspan,
)
from .tori import (
    Cocharacter,
    Torus,
    TorusMorphism,
    mu_tau,
    norm_morphism,
    quotient_torus,
    torus_of_field,
)


class CMType:
    """A CM field together with a choice of one embedding per conjugate pair."""

    def __init__(self, field: FieldHandle, phi):
        ok, _ = is_cm(field)
        if not ok:
            raise ValueError("CM types need a CM field")
        phi = frozenset(phi)
        if not phi <= set(field.embeddings):
            raise ValueError("phi must consist of embeddings of the field")
        s = field.scenario
        conjugates = frozenset(field.act(s.iota, f) for f in phi)
        if phi & conjugates:
            raise ValueError("phi meets its own conjugate set")
        if phi | conjugates != set(field.embeddings):
            raise ValueError("phi and its conjugates must cover all embeddings")
        self.field = field
        self.phi = phi

    @property
    def g(self) -> int:
        return len(self.phi)

    def indices(self):
        return tuple(sorted(self.field.embedding_index(f) for f in self.phi))

    def translate(self, sigma) -> "CMType":
        return CMType(self.field, {self.field.act(sigma, f) for f in self.phi})

    def conjugate(self) -> "CMType":
        return self.translate(self.field.scenario.iota)

    def __eq__(self, other):
        return (
            isinstance(other, CMType)
            and self.field.scenario is other.field.scenario
            and self.field.subgroup == other.field.subgroup
            and self.phi == other.phi
        )

    def __hash__(self):
        return hash((id(self.field.scenario), self.field.subgroup, self.phi))

    def __repr__(self):
        return f"CMType({self.field.name or 'E'}, {self.indices()})"


def enumerate_cm_types(E: FieldHandle):
    """All 2^g choices of one embedding per conjugation orbit."""
    ok, _ = is_cm(E)
    if not ok:
        raise ValueError("can only enumerate CM types of a CM field")
    s = E.scenario
    orbits = []
    seen = set()
    for f in E.embeddings:
        if f in seen:
            continue
        m = E.act(s.iota, f)
        seen.update({f, m})
        orbits.append((f, m))
    types = []
    for mask in range(1 << len(orbits)):
        pick = {pair[(mask >> i) & 1] for i, pair in enumerate(orbits)}
        types.append(CMType(E, pick))
    return types


def induced_type(t: CMType, L: FieldHandle) -> CMType:
    """Lift a CM type along a CM extension L of its field."""
    if not L.contains_field(t.field):
        raise ValueError("can only induce to an extension")
    lifted = {f for f in L.embeddings if L.restrict_embedding(f, t.field) in t.phi}
    return CMType(L, lifted)


def is_primitive(t: CMType) -> bool:
    """No proper CM subfield carries a type inducing this one."""
    E = t.field
    s = E.scenario
    for bigger in s.subgroups_containing(E.subgroup):
        if bigger == E.subgroup:
            continue
        sub = FieldHandle(s, bigger)
        ok, _ = is_cm(sub)
        if not ok:
            continue
        restricted = {E.restrict_embedding(f, sub) for f in t.phi}
        if 2 * len(restricted) != sub.degree:
            continue
        try:
            candidate = CMType(sub, restricted)
        except ValueError:
            continue
        if induced_type(candidate, E) == t:
            return False
    return True


def reflex_field(t: CMType) -> FieldHandle:
    """Fixed field of the stabilizer of phi under translation."""
    s = t.field.scenario
    stab = frozenset(g for g in s.elements if t.translate(g) == t)
    name = f"{t.field.name}*" if t.field.name else "E*"
    return FieldHandle(s, stab, name=name)


def mu_phi(t: CMType) -> Cocharacter:
    """Cocharacter of T^E with exponent 1 on phi and 0 on the conjugates."""
    torus = torus_of_field(t.field)
    vec = [0] * torus.rank
    for f in t.phi:
        vec[t.field.embedding_index(f)] = 1
    return Cocharacter(torus, vec)


# ---------------------------------------------------------------------------
# The universal torus of a field
# ---------------------------------------------------------------------------


class SerreGroup:
    """Quotient of T^K by the conjugation-symmetry conditions.

    Carries the quotient torus, the projection, the distinguished
    cocharacter mu = pi(mu_tau) and the pair (mu, iota mu) that encodes the
    archimedean parameter h.
    """

    def __init__(self, field, ambient, torus, projection, mu, h_pair, sublattice, tau):
        self.field = field
        self.ambient = ambient
        self.torus = torus
        self.projection = projection
        self.mu = mu
        self.h_pair = h_pair
        self.sublattice = sublattice
        self.tau = tau

    @property
    def rank(self) -> int:
        return self.torus.rank

    def __repr__(self):
        return f"SerreGroup({self.field.name or '?'}, rank={self.rank})"


def _cochar_translate(torus: Torus, g, vector):
    return torus.act_cocharacter(g, vector)


def serre_condition_violations(mu: Cocharacter):
    """Elements sigma violating (iota+1)(sigma-1)mu = 0 = (sigma-1)(iota+1)mu."""
    torus = mu.torus
    s = torus.scenario
    v = mu.vector
    iota = s.iota
    bad = []
    for g in s.elements:
        gv = _cochar_translate(torus, g, v)
        step = tuple(a - b for a, b in zip(gv, v))
        first = tuple(a + b for a, b in zip(step, _cochar_translate(torus, iota, step)))
        w = tuple(a + b for a, b in zip(v, _cochar_translate(torus, iota, v)))
        second = tuple(a - b for a, b in zip(_cochar_translate(torus, g, w), w))
        if any(first) or any(second):
            bad.append(g)
    return bad


def serre_sublattice(K: FieldHandle) -> IntMatrix:
    """Saturated sublattice of X^*(T^K) cut out by the symmetry conditions."""
    t = torus_of_field(K)
    s = K.scenario
    eye = IntMatrix.identity(t.rank)
    iota_plus = t.act(s.iota) + eye
    conditions = []
    for g in s.elements:
        step = t.act(g) - eye
        conditions.append(step * iota_plus)
        conditions.append(iota_plus * step)
    return solution_sublattice(conditions, ambient_rank=t.rank)


def serre_group(K: FieldHandle, tau=None) -> SerreGroup:
    t = torus_of_field(K)
    sub = serre_sublattice(K)
    name = f"S^{K.name}" if K.name else "S"
    quotient, projection = quotient_torus(t, sub, name=name)
    if tau is None:
        tau = K.tau()
    mu = projection.push_cocharacter(mu_tau(K, tau))
    h_pair = (mu, mu.translate(K.scenario.iota))
    if not lattice_contains(sub, (1,) * t.rank):
        raise AssertionError("norm character must satisfy the symmetry conditions")
    return SerreGroup(K, t, quotient, projection, mu, h_pair, sub, tau)


def serre_kernel_report(K: FieldHandle, tau=None) -> dict:
    """Character-level exactness test for the norm-kernel presentation.

    The claim under test: with E the maximal CM subfield of K (or Q) and F
    the maximal totally real subfield of E, the kernel of the projection
    T^K -> S^K is the norm-one subtorus of T^F.  Dually: a character of
    T^K satisfies the symmetry conditions exactly when its pushforward to
    X^*(T^F) is a multiple of the norm character.  The report states
    whether that equality of sublattices actually holds.
    """
    s = K.scenario
    try:
        E = maximal_cm_subfield(K)
        F = maximal_totally_real_subfield(E)
    except ValueError:
        E = s.rational_field()
        F = s.rational_field()
    sub = serre_sublattice(K)
    k_emb = K.embeddings
    f_emb = F.embeddings
    restrict = [[0] * len(k_emb) for _ in range(len(f_emb))]
    for j, rho in enumerate(k_emb):
        restrict[F.embedding_index(K.restrict_embedding(rho, F))][j] = 1
    # solutions of R f = t * (1,...,1) as a sublattice of Z^{deg K + 1}
    stacked = IntMatrix([row + [-1] for row in restrict])
    solutions = right_kernel(stacked)
    predicted = IntMatrix([r[: len(k_emb)] for r in solutions.entries])
    actual_h, _ = hermite_normal_form(sub)
    predicted_h, _ = hermite_normal_form(predicted)
    exact = actual_h == predicted_h
    return {
        "field": K.name or "K",
        "max_cm_subfield": E.name or "E",
        "totally_real_base": F.name or "F",
        "rank_ambient": len(k_emb),
        "rank_quotient": sub.rows,
        "kernel_rank_predicted": F.degree - 1,
        "kernel_rank_actual": len(k_emb) - sub.rows,
        "exact": exact,
    }


def serre_kernel_check(K: FieldHandle, tau=None) -> bool:
    return serre_kernel_report(K, tau)["exact"]


# ---------------------------------------------------------------------------
# The universal property
# ---------------------------------------------------------------------------


def universal_rho(sg: SerreGroup, target: Torus, mu: Cocharacter) -> TorusMorphism:
    """Unique morphism rho with rho(mu_sg) = mu, solved from scratch.

    The defining constraints: the character map intertwines the Galois
    actions, and the distinguished cocharacter pushes onto mu.  The linear
    system is solved exactly; a nontrivial homogeneous solution space would
    contradict uniqueness and trips an assertion.
    """
    if mu.torus != target:
        raise ValueError("cocharacter must live on the target torus")
    if not sg.field.subgroup <= mu.stabilizer():
        raise ValueError("cocharacter is not defined over the base field")
    bad = serre_condition_violations(mu)
    if bad:
        raise ValueError(f"symmetry condition fails at {bad[0]!r}")
    s = sg.field.scenario
    rs, rt = sg.torus.rank, target.rank

    def idx(i, j):
        return i * rt + j

    rows, rhs = [], []
    for g in s.elements:
        a, b = sg.torus.act(g), target.act(g)
        for i in range(rs):
            for j in range(rt):
                row = [Fraction(0)] * (rs * rt)
                for k in range(rs):
                    row[idx(k, j)] += a[i, k]
                for k in range(rt):
                    row[idx(i, k)] -= b[k, j]
                rows.append(row)
                rhs.append(Fraction(0))
    for j in range(rt):
        row = [Fraction(0)] * (rs * rt)
        for i in range(rs):
            row[idx(i, j)] = Fraction(sg.mu.vector[i])
        rows.append(row)
        rhs.append(Fraction(mu.vector[j]))

    sol = frac_solve(rows, rhs)
    if sol is None:
        raise AssertionError("universal morphism must exist")
    if frac_nullspace(rows):
        raise AssertionError("universal morphism must be unique")
    if any(x.denominator != 1 for x in sol):
        raise AssertionError("universal morphism must be integral")
    m = IntMatrix([[int(sol[idx(i, j)]) for j in range(rt)] for i in range(rs)])
    rho = TorusMorphism(sg.torus, target, m, name="rho")
    assert rho.push_cocharacter(sg.mu) == mu
    return rho


def rho_phi(t: CMType, sg: SerreGroup | None = None) -> TorusMorphism:
    """The universal morphism attached to a CM type, over its reflex field."""
    estar = reflex_field(t)
    if sg is None:
        sg = serre_group(estar)
    if not sg.field.contains_field(estar):
        raise ValueError("base field must contain the reflex field")
    mu = mu_phi(t)
    rho = universal_rho(sg, mu.torus, mu)
    iota = t.field.scenario.iota
    # archimedean compatibility in pair form: h_phi = rho ∘ h
    assert rho.push_cocharacter(sg.h_pair[0]) == mu
    assert rho.push_cocharacter(sg.h_pair[1]) == mu.translate(iota)
    return rho


def norm_res_composite(F: FieldHandle, mu: Cocharacter, name="") -> TorusMorphism:
    """The composite norm ∘ restriction-of-scalars of a cocharacter.

    For mu a cocharacter of T defined over F, the composite is the morphism
    T^F -> T whose character map sends c to the vector of pairings
    ⟨rho mu, c⟩ over the embeddings rho of F.
    """
    torus = mu.torus
    if not F.subgroup <= mu.stabilizer():
        raise ValueError("cocharacter is not defined over the field")
    tf = torus_of_field(F)
    order = F.scenario.elements.index
    rows = []
    for coset in F.embeddings:
        rep = min(coset, key=order)
        rows.append(_cochar_translate(torus, rep, mu.vector))
    return TorusMorphism(tf, torus, IntMatrix(rows), name=name or "Nm∘Res")


def reflex_norm(t: CMType) -> TorusMorphism:
    """Reflex norm T^{E*} -> T^E through the universal quotient."""
    estar = reflex_field(t)
    sg = serre_group(estar)
    rho = rho_phi(t, sg)
    return rho.compose(sg.projection)


def reflex_norm_closed_form(t: CMType) -> TorusMorphism:
    """Same morphism out of the norm ∘ restriction composite (cross-check)."""
    return norm_res_composite(reflex_field(t), mu_phi(t), name="N_Phi")


# ---------------------------------------------------------------------------
# Compatibility properties
# ---------------------------------------------------------------------------


def induced_serre_morphism(sg_k: SerreGroup, sg_e: SerreGroup) -> TorusMorphism:
    """Norm-induced morphism between universal quotients.

    Exists because the norm character map carries one symmetry sublattice
    into the other; the projections commute with it by construction.
    """
    n = norm_morphism(sg_k.field, sg_e.field)
    cols = []
    for i in range(sg_e.sublattice.rows):
        image = n.char_map.apply(sg_e.sublattice.row(i))
        coeffs = solve_int_rowspan(sg_k.sublattice, image)
        if coeffs is None:
            raise ValueError("norm does not respect the symmetry sublattices")
        cols.append(coeffs)
    m = IntMatrix([[cols[j][i] for j in range(len(cols))] for i in range(sg_k.rank)])
    induced = TorusMorphism(sg_k.torus, sg_e.torus, m, name="N induced")
    assert sg_k.projection.char_map * m == n.char_map * sg_e.projection.char_map
    return induced


def is_isomorphism(f: TorusMorphism) -> bool:
    """Square character map with trivial elementary divisors."""
    m = f.char_map
    if m.rows != m.cols:
        return False
    _, d, _ = smith_normal_form(m)
    return d == IntMatrix.identity(m.rows)


def lemmahodge_check(sg: SerreGroup) -> bool:
    """The ambient-level h lifts the quotient-level h through the projection."""
    lift = mu_tau(sg.field, sg.tau)
    iota = sg.field.scenario.iota
    pair = (lift, lift.translate(iota))
    pushed = tuple(sg.projection.push_cocharacter(c) for c in pair)
    return pushed == sg.h_pair


def lemmacomp_check(t: CMType, bigger: FieldHandle) -> bool:
    """Norm ∘ restriction from an extension factors through the reflex field."""
    estar = reflex_field(t)
    if not bigger.contains_field(estar):
        raise ValueError("field must contain the reflex field")
    mu = mu_phi(t)
    direct = norm_res_composite(bigger, mu)
    through = norm_res_composite(estar, mu).compose(norm_morphism(bigger, estar))
    return direct.char_map == through.char_map


def serre_property_suite(K: FieldHandle, cm_type: CMType | None = None, tau=None) -> dict:
    """Diagram checks for the universal quotient of K, reported per item."""
    s = K.scenario
    checks = []

    def record(check_id, fn):
        try:
            ok, detail = fn()
        except (ValueError, AssertionError) as err:
            ok, detail = False, str(err)
        checks.append({"id": check_id, "pass": bool(ok), "detail": detail})

    sg_k = serre_group(K, tau)
    try:
        E = maximal_cm_subfield(K)
    except ValueError:
        E = s.rational_field()
    sg_e = serre_group(E)

    def norm_diagram():
        induced = induced_serre_morphism(sg_k, sg_e)
        return True, f"induced map {sg_k.rank}x{sg_e.rank}"

    def h_compat():
        induced = induced_serre_morphism(sg_k, sg_e)
        same_mu = induced.push_cocharacter(sg_k.mu) == sg_e.mu
        same_conj = (
            induced.push_cocharacter(sg_k.h_pair[1]) == sg_e.h_pair[1]
        )
        return same_mu and same_conj, "h-parameters match through the induced map"

    def max_cm_iso():
        induced = induced_serre_morphism(sg_k, sg_e)
        return is_isomorphism(induced), "elementary divisors all 1"

    def hodge():
        return lemmahodge_check(sg_k), "projection carries the ambient pair to the quotient pair"

    record("serre-norm-diagram", norm_diagram)
    record("serre-h-compat", h_compat)
    record("serre-max-cm-iso", max_cm_iso)
    record("serre-hodge-lift", hodge)

    kernel = serre_kernel_report(K, tau)
    checks.append(
        {
            "id": "serre-kernel-sequence",
            "pass": kernel["exact"],
            "detail": (
                f"predicted kernel rank {kernel['kernel_rank_predicted']}, "
                f"actual {kernel['kernel_rank_actual']}"
            ),
        }
    )

    if cm_type is not None:
        def rho_norm_compat():
            estar = reflex_field(cm_type)
            if not K.contains_field(estar):
                raise ValueError("base field does not contain the reflex field")
            sg_star = serre_group(estar)
            rho_small = rho_phi(cm_type, sg_star)
            rho_big = rho_phi(cm_type, sg_k)
            induced = induced_serre_morphism(sg_k, sg_star)
            return (
                rho_small.compose(induced).char_map == rho_big.char_map,
                "universal maps agree through the induced norm",
            )

        record("serre-rho-norm-compat", rho_norm_compat)

    return {
        "field": K.name or "K",
        "max_cm_subfield": E.name or "E",
        "rank_ambient": sg_k.ambient.rank,
        "rank_quotient": sg_k.rank,
        "checks": checks,
        "all_pass": all(c["pass"] for c in checks),
    }


# ---------------------------------------------------------------------------
# Point realization over a cyclotomic model
# ---------------------------------------------------------------------------


def cyclotomic_level(scenario) -> int:
    """Modulus n for scenarios realized on the n-th cyclotomic field."""
    name = scenario.name or ""
    if not name.startswith("cyclotomic-"):
        raise ValueError("scenario has no cyclotomic realization")
    n = int(name.split("-", 1)[1])
    if set(scenario.elements) != {str(k) for k in range(1, n) if _gcd(k, n) == 1}:
        raise ValueError("scenario labels do not match the residues mod n")
    return n


def _gcd(a, b):
    while b:
        a, b = b, a % b
    return a


def _embedding_exponents(field: FieldHandle, n: int):
    order = field.scenario.elements.index
    return tuple(int(min(c, key=order)) for c in field.embeddings)


def _check_in_field(a: CyclotomicElement, field: FieldHandle):
    for h in field.subgroup:
        if a.galois(int(h)) != a:
            raise ValueError("point is not fixed by the field's subgroup")


def realize_on_point(f: TorusMorphism, a: CyclotomicElement):
    """Evaluate a torus morphism on an actual point of the source field.

    The source and target tori must come from fields of one cyclotomic
    scenario; the result is the tuple of values of the image under every
    target embedding, each an exact cyclotomic number.
    """
    n = cyclotomic_level(f.source.scenario)
    src = [int(min(c, key=f.source.scenario.elements.index)) for c in f.source.basis_labels]
    if a.n != n:
        raise ValueError("point lives at the wrong cyclotomic level")
    m = f.char_map
    values = []
    conjugates = [a.galois(j) for j in src]
    for k in range(m.cols):
        acc = CyclotomicElement.one(n)
        for i in range(m.rows):
            e = m[i, k]
            if e:
                acc = acc * conjugates[i] ** e
        values.append(acc)
    return tuple(values)


def embed_under_all(field: FieldHandle, x: CyclotomicElement):
    """The tuple (rho(x)) over all embeddings of the field, in the realization."""
    n = cyclotomic_level(field.scenario)
    _check_in_field(x, field)
    return tuple(x.galois(j) for j in _embedding_exponents(field, n))


def reflex_determinant_oracle(t: CMType, a: CyclotomicElement) -> CyclotomicElement:
    """Determinant of multiplication by a on the reflex module.

    The module is the direct sum over phi of copies of the realization
    field, with the CM field acting on the phi-component through phi and
    the reflex field acting by plain multiplication.  This computes honest
    coordinates with Galois arithmetic and a Gaussian determinant over the
    field, never consulting the character-lattice solve.
    """
    E = t.field
    s = E.scenario
    n = cyclotomic_level(s)
    if E.subgroup != frozenset({s.identity}):
        raise ValueError("determinant oracle needs the fully realized field")
    estar = reflex_field(t)
    _check_in_field(a, estar)
    exponents = _embedding_exponents(E, n)
    phi_exps = [exponents[E.embedding_index(f)] for f in sorted(t.phi, key=E.embedding_index)]
    g = len(phi_exps)
    # matrix of the a-action over the module basis (one basis vector per
    # phi-component); coordinates of a vector in component phi are
    # phi^{-1}(vector) since the field acts through phi there.
    matrix = []
    for row_exp in phi_exps:
        inv = pow(row_exp, -1, n)
        row = []
        for col_exp in phi_exps:
            component = a if col_exp == row_exp else CyclotomicElement.zero(n)
            row.append(component.galois(inv))
        matrix.append(row)
    return _cyclotomic_det(matrix, n)


def _cyclotomic_det(matrix, n: int) -> CyclotomicElement:
    size = len(matrix)
    m = [row[:] for row in matrix]
    det = CyclotomicElement.one(n)
    for c in range(size):
        pivot = next((r for r in range(c, size) if not m[r][c].is_zero()), None)
        if pivot is None:
            return CyclotomicElement.zero(n)
        if pivot != c:
            m[c], m[pivot] = m[pivot], m[c]
            det = -det
        det = det * m[c][c]
        inv = m[c][c].inverse()
        for r in range(c + 1, size):
            if not m[r][c].is_zero():
                factor = m[r][c] * inv
                for k in range(c, size):
                    m[r][k] = m[r][k] - factor * m[c][k]
    return det
