"""Exact integer and rational linear algebra.

Everything downstream (character lattices, Serre-condition solving, symplectic
frames, residue rings) reduces to a handful of normal-form computations over
the integers plus exact Gaussian elimination over the rationals.  This module
keeps all of that in one place, with deterministic pivot rules so that
results are reproducible byte for byte.

No floating point is used anywhere here.
"""

from __future__ import annotations

from fractions import Fraction
from math import gcd


class IntMatrix:
    """Immutable integer matrix with row-major entries.

    Supports the small amount of arithmetic the rest of the package needs:
    multiplication, addition, transpose, determinant (Bareiss), and
    construction helpers.  Instances are hashable and usable as dict keys.
    """

    __slots__ = ("rows", "cols", "entries")

    def __init__(self, entries):
        rows = tuple(tuple(int(x) for x in row) for row in entries)
        if rows:
            width = len(rows[0])
            if any(len(r) != width for r in rows):
                raise ValueError("ragged rows")
        else:
            width = 0
        object.__setattr__(self, "entries", rows)
        object.__setattr__(self, "rows", len(rows))
        object.__setattr__(self, "cols", width)

    def __setattr__(self, *a):  # pragma: no cover - guard
        raise AttributeError("IntMatrix is immutable")

    # -- constructors -----------------------------------------------------

    @staticmethod
    def identity(n: int) -> "IntMatrix":
        return IntMatrix([[1 if i == j else 0 for j in range(n)] for i in range(n)])

    @staticmethod
    def zero(rows: int, cols: int) -> "IntMatrix":
        return IntMatrix([[0] * cols for _ in range(rows)])

    @staticmethod
    def from_rows(rows) -> "IntMatrix":
        return IntMatrix(rows)

    # -- basic protocol ----------------------------------------------------

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    def row(self, i):
        return self.entries[i]

    def column(self, j):
        return tuple(r[j] for r in self.entries)

    def __eq__(self, other):
        return isinstance(other, IntMatrix) and self.entries == other.entries

    def __hash__(self):
        return hash(self.entries)

    def __repr__(self):
        return f"IntMatrix({[list(r) for r in self.entries]})"

    # -- arithmetic ----------------------------------------------------------

    def __mul__(self, other):
        if isinstance(other, IntMatrix):
            if self.cols != other.rows:
                raise ValueError(f"shape mismatch {self.cols} vs {other.rows}")
            bt = other.transpose().entries
            return IntMatrix(
                [[sum(a * b for a, b in zip(row, col)) for col in bt] for row in self.entries]
            )
        if isinstance(other, int):
            return IntMatrix([[x * other for x in row] for row in self.entries])
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, int):
            return self * other
        return NotImplemented

    def __add__(self, other):
        if not isinstance(other, IntMatrix):
            return NotImplemented
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise ValueError("shape mismatch")
        return IntMatrix(
            [[a + b for a, b in zip(r1, r2)] for r1, r2 in zip(self.entries, other.entries)]
        )

    def __sub__(self, other):
        if not isinstance(other, IntMatrix):
            return NotImplemented
        return self + (other * -1)

    def __neg__(self):
        return self * -1

    def transpose(self) -> "IntMatrix":
        return IntMatrix(list(zip(*self.entries)) if self.rows else [[] for _ in range(self.cols)])

    def apply(self, vector):
        """Matrix times column vector, returned as a tuple."""
        if len(vector) != self.cols:
            raise ValueError("vector length mismatch")
        return tuple(sum(a * b for a, b in zip(row, vector)) for row in self.entries)

    def act_on_row(self, vector):
        """Row vector times matrix, returned as a tuple."""
        if len(vector) != self.rows:
            raise ValueError("vector length mismatch")
        return tuple(
            sum(vector[i] * self.entries[i][j] for i in range(self.rows)) for j in range(self.cols)
        )

    def determinant(self) -> int:
        """Exact determinant by Bareiss fraction-free elimination."""
        if self.rows != self.cols:
            raise ValueError("determinant of non-square matrix")
        n = self.rows
        if n == 0:
            return 1
        a = [list(r) for r in self.entries]
        sign = 1
        prev = 1
        for k in range(n - 1):
            if a[k][k] == 0:
                for i in range(k + 1, n):
                    if a[i][k] != 0:
                        a[k], a[i] = a[i], a[k]
                        sign = -sign
                        break
                else:
                    return 0
            for i in range(k + 1, n):
                for j in range(k + 1, n):
                    a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
                a[i][k] = 0
            prev = a[k][k]
        return sign * a[n - 1][n - 1]

    def is_unimodular(self) -> bool:
        return self.rows == self.cols and abs(self.determinant()) == 1

    def is_zero(self) -> bool:
        return all(x == 0 for row in self.entries for x in row)


def vstack(*matrices: IntMatrix) -> IntMatrix:
    mats = [m for m in matrices if m.rows > 0]
    if not mats:
        return IntMatrix.zero(0, matrices[0].cols if matrices else 0)
    cols = mats[0].cols
    if any(m.cols != cols for m in mats):
        raise ValueError("column count mismatch in vstack")
    rows = []
    for m in mats:
        rows.extend(m.entries)
    return IntMatrix(rows)


class FGAbelianGroup:
    """Finitely generated abelian group given by its invariant factors.

    ``invariant_factors`` is the chain d_1 | d_2 | ... with trivial factors
    (= 1) removed and free factors encoded as 0, listed last.
    """

    __slots__ = ("invariant_factors",)

    def __init__(self, factors):
        factors = [int(d) for d in factors]
        if any(d < 0 for d in factors):
            raise ValueError("invariant factors must be non-negative")
        torsion = [d for d in factors if d > 1]
        free = [d for d in factors if d == 0]
        for a, b in zip(torsion, torsion[1:]):
            if b % a != 0:
                raise ValueError(f"broken divisibility chain: {a} does not divide {b}")
        object.__setattr__(self, "invariant_factors", tuple(torsion + free))

    def __setattr__(self, *a):  # pragma: no cover - guard
        raise AttributeError("FGAbelianGroup is immutable")

    @property
    def free_rank(self) -> int:
        return sum(1 for d in self.invariant_factors if d == 0)

    @property
    def torsion_factors(self):
        return tuple(d for d in self.invariant_factors if d > 0)

    def order(self):
        """Group order, or None when the group is infinite."""
        if self.free_rank:
            return None
        n = 1
        for d in self.torsion_factors:
            n *= d
        return n

    def is_trivial(self) -> bool:
        return not self.invariant_factors

    def __eq__(self, other):
        return (
            isinstance(other, FGAbelianGroup)
            and self.invariant_factors == other.invariant_factors
        )

    def __hash__(self):
        return hash(self.invariant_factors)

    def __repr__(self):
        return f"FGAbelianGroup({list(self.invariant_factors)})"


class GModuleLattice:
    """A lattice Z^rank with a finite group acting by unimodular matrices.

    The action is stored in the homomorphism convention
    ``action(g*h) = action(g) * action(h)`` (matrices act on column
    vectors from the left).  Character coefficient vectors live in this
    lattice; pairing a character against a cocharacter row is the plain
    dot product.  This convention is fixed here once and relied on
    throughout the package.
    """

    __slots__ = ("rank", "elements", "action")

    def __init__(self, rank, action):
        action = dict(action)
        for g, m in action.items():
            if not isinstance(m, IntMatrix):
                m = IntMatrix(m)
                action[g] = m
            if m.rows != rank or m.cols != rank:
                raise ValueError(f"action matrix for {g!r} has wrong shape")
            if not m.is_unimodular():
                raise ValueError(f"action matrix for {g!r} is not unimodular")
        object.__setattr__(self, "rank", rank)
        object.__setattr__(self, "elements", tuple(action.keys()))
        object.__setattr__(self, "action", action)

    def __setattr__(self, *a):  # pragma: no cover - guard
        raise AttributeError("GModuleLattice is immutable")

    @property
    def group_order(self) -> int:
        return len(self.elements)

    def act(self, g) -> IntMatrix:
        return self.action[g]

    def check_homomorphism(self, multiply, identity) -> None:
        """Assert action(g·h) = action(g)·action(h) over the whole group."""
        if self.action[identity] != IntMatrix.identity(self.rank):
            raise AssertionError("action at the identity is not the identity matrix")
        for g in self.elements:
            for h in self.elements:
                if self.action[multiply(g, h)] != self.action[g] * self.action[h]:
                    raise AssertionError(f"action is not a homomorphism at ({g!r}, {h!r})")


# ---------------------------------------------------------------------------
# Integer normal forms
# ---------------------------------------------------------------------------


def smith_normal_form(M: IntMatrix):
    """Return (U, D, V) with U·M·V = D, U, V unimodular, D diagonal.

    The diagonal entries are non-negative and form a divisibility chain
    d_1 | d_2 | ...  Computed by alternating row and column Hermite
    reductions (Kannan-Bachem); each pass reduces entries modulo its
    pivots, so intermediate values stay bounded by minors of M instead of
    exploding the way a naive pivot dance can.  Both passes are
    deterministic, hence so is the output.
    """
    rows, cols = M.rows, M.cols
    a = M
    u = IntMatrix.identity(rows)
    v = IntMatrix.identity(cols)

    def off_diagonal(m):
        return any(
            m.entries[i][j] != 0
            for i in range(m.rows)
            for j in range(m.cols)
            if i != j
        )

    for _ in range(10_000):
        h, u1 = hermite_normal_form(a)
        a, u = h, u1 * u
        if off_diagonal(a):
            h2, v1 = hermite_normal_form(a.transpose())
            a, v = h2.transpose(), v * v1.transpose()
        if off_diagonal(a):
            continue
        n = min(rows, cols)
        diag = [a.entries[i][i] for i in range(n)]
        offender = next(
            (
                i
                for i in range(n - 1)
                if diag[i + 1] and (diag[i] == 0 or diag[i + 1] % diag[i])
            ),
            None,
        )
        if offender is None:
            assert u * M * v == a
            return u, a, v
        # Fold the next column into this one.  The coming row pass then
        # puts gcd(d_i, d_{i+1}) at position i; a row fold would be undone
        # by the row pass without ever shrinking the chain defect.
        folded = [list(r) for r in a.entries]
        for r in folded:
            r[offender] += r[offender + 1]
        a = IntMatrix(folded)
        v_rows = [list(r) for r in v.entries]
        for r in v_rows:
            r[offender] += r[offender + 1]
        v = IntMatrix(v_rows)
    raise AssertionError("normal form alternation failed to converge")


def hermite_normal_form(M: IntMatrix):
    """Return (H, U) with U·M = H in row Hermite normal form.

    H is in row-echelon shape with positive pivots, and every entry above a
    pivot is reduced into [0, pivot).  U is unimodular.
    """
    rows, cols = M.rows, M.cols
    a = [list(r) for r in M.entries]
    u = [[1 if i == j else 0 for j in range(rows)] for i in range(rows)]

    def row_op(i, j, q):
        a[i] = [x - q * y for x, y in zip(a[i], a[j])]
        u[i] = [x - q * y for x, y in zip(u[i], u[j])]

    r = 0
    for j in range(cols):
        # Euclid in column j among rows >= r.
        while True:
            live = [i for i in range(r, rows) if a[i][j]]
            if not live:
                pivot_row = None
                break
            i0 = min(live, key=lambda i: (abs(a[i][j]), i))
            for i in live:
                if i != i0:
                    row_op(i, i0, a[i][j] // a[i0][j])
            if all(a[i][j] == 0 for i in range(r, rows) if i != i0):
                pivot_row = i0
                break
        if pivot_row is None:
            continue
        if pivot_row != r:
            a[r], a[pivot_row] = a[pivot_row], a[r]
            u[r], u[pivot_row] = u[pivot_row], u[r]
        if a[r][j] < 0:
            a[r] = [-x for x in a[r]]
            u[r] = [-x for x in u[r]]
        for i in range(r):  # reduce entries above the pivot
            q = a[i][j] // a[r][j]
            if q:
                row_op(i, r, q)
        r += 1
        if r == rows:
            break
    return IntMatrix(a), IntMatrix(u)


def kernel_lattice(M: IntMatrix) -> IntMatrix:
    """Basis (as rows) of the left kernel {x : x·M = 0}.

    The output basis is automatically saturated: it consists of rows of a
    unimodular matrix, so the kernel is a direct summand of Z^rows.
    """
    u, d, _ = smith_normal_form(M)
    zero_rows = [i for i in range(M.rows) if all(x == 0 for x in d.entries[i])]
    if not zero_rows:
        return IntMatrix.zero(0, M.rows)
    # x·M = 0 iff (x·U^{-1})·D = 0 iff x is a Z-combination of the U-rows
    # sitting over zero rows of D.
    basis = IntMatrix([u.entries[i] for i in zero_rows])
    h, _ = hermite_normal_form(basis)
    return IntMatrix([row for row in h.entries if any(row)])


def right_kernel(M: IntMatrix) -> IntMatrix:
    """Basis (as rows) of {x : M·x = 0}, x read as a column vector."""
    return kernel_lattice(M.transpose())


def cokernel(M: IntMatrix) -> FGAbelianGroup:
    """Invariant factors of Z^cols modulo the row span of M."""
    _, d, _ = smith_normal_form(M)
    n = min(M.rows, M.cols)
    diag = [d.entries[i][i] for i in range(n)]
    rank = sum(1 for x in diag if x)
    return FGAbelianGroup([x for x in diag if x] + [0] * (M.cols - rank))


def lattice_intersection(A: IntMatrix, B: IntMatrix) -> IntMatrix:
    """Basis of the intersection of the row lattices of A and B.

    Rows of A and B must live in the same ambient Z^n.  The result is the
    Hermite basis of {x : x in rowspan(A) and x in rowspan(B)}.
    """
    if A.cols != B.cols:
        raise ValueError("ambient rank mismatch")
    if A.rows == 0 or B.rows == 0:
        return IntMatrix.zero(0, A.cols)
    stacked = vstack(A, B)
    ker = kernel_lattice(stacked)  # rows (u | v) with u·A + v·B = 0
    rows = []
    for row in ker.entries:
        u = row[: A.rows]
        vec = [sum(u[i] * A.entries[i][j] for i in range(A.rows)) for j in range(A.cols)]
        if any(vec):
            rows.append(vec)
    if not rows:
        return IntMatrix.zero(0, A.cols)
    h, _ = hermite_normal_form(IntMatrix(rows))
    return IntMatrix([row for row in h.entries if any(row)])


def solution_sublattice(conditions, ambient_rank=None) -> IntMatrix:
    """Saturated basis of the common kernel of a list of operators.

    Each condition is an IntMatrix acting on column vectors of a common
    lattice Z^n; the result rows span {f : C·f = 0 for every C}.  With an
    empty condition list the full lattice comes back (ambient_rank must be
    given in that case).
    """
    conditions = [c if isinstance(c, IntMatrix) else IntMatrix(c) for c in conditions]
    if not conditions:
        if ambient_rank is None:
            raise ValueError("empty condition list needs an explicit ambient_rank")
        return IntMatrix.identity(ambient_rank)
    n = conditions[0].cols
    if ambient_rank is not None and ambient_rank != n:
        raise ValueError("ambient_rank disagrees with operator shape")
    if any(c.cols != n for c in conditions):
        raise ValueError("operators act on different lattices")
    stacked = vstack(*conditions)
    if stacked.is_zero():
        return IntMatrix.identity(n)
    return right_kernel(stacked)


def lattice_contains(basis: IntMatrix, vector) -> bool:
    """Whether the integer row vector lies in the row span of ``basis``."""
    if basis.rows == 0:
        return all(x == 0 for x in vector)
    sol = solve_int_rowspan(basis, vector)
    return sol is not None


def solve_int_rowspan(basis: IntMatrix, vector):
    """Integer coefficients expressing ``vector`` in the rows of ``basis``.

    Returns a tuple c with c·basis = vector, or None when no integer
    solution exists.
    """
    u, d, v = smith_normal_form(basis)
    # x·basis = vector  with x = y·U:  y·D = vector·V
    t = tuple(vector)
    if len(t) != basis.cols:
        raise ValueError("vector length mismatch")
    w = v.act_on_row(t)
    y = []
    n = min(basis.rows, basis.cols)
    for i in range(basis.rows):
        di = d.entries[i][i] if i < n else 0
        wi = w[i] if i < len(w) else 0
        if di == 0:
            if i < len(w) and wi != 0:
                return None
            y.append(0)
        else:
            if wi % di != 0:
                return None
            y.append(wi // di)
    for i in range(basis.rows, len(w)):
        if w[i] != 0:
            return None
    return u.act_on_row(y) if basis.rows else tuple()


def int_matrix_inverse(M: IntMatrix) -> IntMatrix:
    """Inverse of a unimodular integer matrix, exact."""
    if not M.is_unimodular():
        raise ValueError("matrix is not unimodular")
    inv = frac_inv(frac_matrix(M.entries))
    return IntMatrix([[int(x) for x in row] for row in inv])


# ---------------------------------------------------------------------------
# Exact rational linear algebra (tuple-of-tuples of Fraction)
# ---------------------------------------------------------------------------


def frac_matrix(entries):
    return tuple(tuple(Fraction(x) for x in row) for row in entries)


def frac_identity(n):
    return tuple(
        tuple(Fraction(1) if i == j else Fraction(0) for j in range(n)) for i in range(n)
    )


def frac_matmul(A, B):
    if A and len(A[0]) != len(B):
        raise ValueError("shape mismatch")
    bt = tuple(zip(*B)) if B else ()
    return tuple(tuple(sum(a * b for a, b in zip(row, col)) for col in bt) for row in A)


def frac_apply(A, vec):
    return tuple(sum(a * b for a, b in zip(row, vec)) for row in A)


def frac_det(A):
    n = len(A)
    if n == 0:
        return Fraction(1)
    a = [list(r) for r in A]
    det = Fraction(1)
    for k in range(n):
        piv = None
        for i in range(k, n):
            if a[i][k] != 0:
                piv = i
                break
        if piv is None:
            return Fraction(0)
        if piv != k:
            a[k], a[piv] = a[piv], a[k]
            det = -det
        det *= a[k][k]
        inv = 1 / a[k][k]
        for i in range(k + 1, n):
            f = a[i][k] * inv
            if f:
                a[i] = [x - f * y for x, y in zip(a[i], a[k])]
    return det

def frac_inv(A):
    n = len(A)
    a = [list(r) + list(e) for r, e in zip(A, frac_identity(n))]
    for k in range(n):
        piv = None
        for i in range(k, n):
            if a[i][k] != 0:
                piv = i
                break
        if piv is None:
            raise ValueError("singular matrix")
        a[k], a[piv] = a[piv], a[k]
        inv = 1 / a[k][k]
        a[k] = [x * inv for x in a[k]]
        for i in range(n):
            if i != k and a[i][k]:
                f = a[i][k]
                a[i] = [x - f * y for x, y in zip(a[i], a[k])]
    return tuple(tuple(row[n:]) for row in a)


def frac_solve(A, b):
    """One exact solution x of A·x = b, or None when inconsistent.

    A is m×n (tuples of Fractions), b a length-m vector.  Free variables
    are set to zero.
    """
    m = len(A)
    n = len(A[0]) if m else 0
    a = [list(row) + [Fraction(b[i])] for i, row in enumerate(A)]
    pivots = []
    r = 0
    for c in range(n):
        piv = None
        for i in range(r, m):
            if a[i][c] != 0:
                piv = i
                break
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        inv = 1 / a[r][c]
        a[r] = [x * inv for x in a[r]]
        for i in range(m):
            if i != r and a[i][c]:
                f = a[i][c]
                a[i] = [x - f * y for x, y in zip(a[i], a[r])]
        pivots.append(c)
        r += 1
        if r == m:
            break
    for i in range(r, m):
        if a[i][n] != 0:
            return None
    x = [Fraction(0)] * n
    for i, c in enumerate(pivots):
        x[c] = a[i][n]
    return tuple(x)


def frac_nullspace(A):
    """Basis (rows) of {x : A·x = 0} over the rationals."""
    m = len(A)
    n = len(A[0]) if m else 0
    a = [list(row) for row in A]
    pivots = []
    r = 0
    for c in range(n):
        piv = None
        for i in range(r, m):
            if a[i][c] != 0:
                piv = i
                break
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        inv = 1 / a[r][c]
        a[r] = [x * inv for x in a[r]]
        for i in range(m):
            if i != r and a[i][c]:
                f = a[i][c]
                a[i] = [x - f * y for x, y in zip(a[i], a[r])]
        pivots.append(c)
        r += 1
        if r == m:
            break
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for fc in free:
        vec = [Fraction(0)] * n
        vec[fc] = Fraction(1)
        for i, pc in enumerate(pivots):
            vec[pc] = -a[i][fc]
        basis.append(tuple(vec))
    return tuple(basis)


def clear_denominators(rows):
    """Scale rational rows to primitive integer rows; returns IntMatrix."""
    out = []
    for row in rows:
        row = [Fraction(x) for x in row]
        denom = 1
        for x in row:
            denom = denom * x.denominator // gcd(denom, x.denominator)
        ints = [int(x * denom) for x in row]
        g = 0
        for x in ints:
            g = gcd(g, abs(x))
        if g > 1:
            ints = [x // g for x in ints]
        out.append(ints)
    return IntMatrix(out)


def alternating_frobenius(M: IntMatrix):
    """Congruence normal form of an alternating integer matrix.

    Returns (U, invariants) with U unimodular and U·M·Uᵀ block diagonal,
    the k-th 2×2 block being [[0, d_k], [-d_k, 0]] with d_k > 0 and
    d_1 | d_2 | ...  A zero block may trail when M is degenerate.  Pivot
    selection mirrors smith_normal_form: smallest absolute nonzero entry
    of the remaining block, row-major tie-breaking, so the basis change
    is deterministic.
    """
    n = M.rows
    if M.cols != n or M.transpose() != -M:
        raise ValueError("matrix is not alternating")
    a = [list(r) for r in M.entries]
    u = [[1 if i == j else 0 for j in range(n)] for i in range(n)]

    def basis_add(i, j, c):  # e_i += c·e_j, applied on both sides
        a[i] = [x + c * y for x, y in zip(a[i], a[j])]
        for r in a:
            r[i] += c * r[j]
        u[i] = [x + c * y for x, y in zip(u[i], u[j])]

    def basis_swap(i, j):
        a[i], a[j] = a[j], a[i]
        for r in a:
            r[i], r[j] = r[j], r[i]
        u[i], u[j] = u[j], u[i]

    invariants = []
    b = 0
    while b + 1 < n:
        best = None
        for i in range(b, n):
            for j in range(b, n):
                x = abs(a[i][j])
                if x and (best is None or x < best[0]):
                    best = (x, i, j)
        if best is None:
            break
        _, pi, pj = best
        if pi != b:
            basis_swap(pi, b)
            pj = pi if pj == b else pj
        if pj != b + 1:
            basis_swap(pj, b + 1)
        if a[b][b + 1] < 0:
            basis_swap(b, b + 1)
        while True:
            d = a[b][b + 1]
            dirty = False
            for k in range(b + 2, n):
                if a[b][k]:
                    basis_add(k, b + 1, -(a[b][k] // d))
                    dirty = dirty or a[b][k] != 0
                if a[b + 1][k]:
                    basis_add(k, b, a[b + 1][k] // d)
                    dirty = dirty or a[b + 1][k] != 0
            if dirty:
                # A remainder smaller than the pivot appeared; re-pivot the
                # whole trailing block on it.
                best = None
                for i in range(b, n):
                    for j in range(b, n):
                        x = abs(a[i][j])
                        if x and (best is None or x < best[0]):
                            best = (x, i, j)
                _, pi, pj = best
                if pi != b:
                    basis_swap(pi, b)
                    pj = pi if pj == b else pj
                if pj != b + 1:
                    basis_swap(pj, b + 1)
                if a[b][b + 1] < 0:
                    basis_swap(b, b + 1)
                continue
            offender = None
            for i in range(b + 2, n):
                for j in range(b + 2, n):
                    if a[i][j] % d != 0:
                        offender = i
                        break
                if offender is not None:
                    break
            if offender is None:
                break
            basis_add(b, offender, 1)
        invariants.append(a[b][b + 1])
        b += 2
    for i in range(b, n):
        for j in range(b, n):
            if a[i][j]:
                raise AssertionError("nonzero tail after an odd-rank sweep")
    return IntMatrix(u), tuple(invariants)
