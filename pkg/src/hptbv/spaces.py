"""Z-graded vector spaces, sparse vectors, degree-homogeneous linear maps.

Sign conventions follow one rule: reordering homogeneous objects picks up
(-1)^(|a||b|) per transposition of adjacent factors (Koszul).  Duals use
j*f(a) = (-1)^(|j||f|) f(j(a)); consequently (g f)* = (-1)^(|f||g|) f* g*
and the double dual is the identity under the canonical pairing
ev_a(f) = (-1)^(|a||f|) f(a).
"""

from __future__ import annotations

from fractions import Fraction

from .scalars import Scalar


class StructuralError(Exception):
    """Dimension, degree or space mismatch detected before any identity check."""


def koszul_sign(degrees, perm) -> int:
    """Sign of rearranging homogeneous objects of the given degrees by `perm`.

    `perm[k]` is the original position of the object landing at slot k.
    Each inversion (k < l with perm[k] > perm[l]) contributes
    (-1)^(degrees[perm[k]] * degrees[perm[l]]).
    """
    if sorted(perm) != list(range(len(degrees))):
        raise ValueError("perm must be a permutation matching the degree list")
    sign = 1
    n = len(perm)
    for k in range(n):
        for l in range(k + 1, n):
            if perm[k] > perm[l]:
                if (degrees[perm[k]] * degrees[perm[l]]) % 2:
                    sign = -sign
    return sign


def sort_with_sign(indices, degrees):
    """Stable-sort basis indices, returning (tuple, koszul sign, is_zero).

    is_zero flags a repeated odd generator (its square vanishes).
    """
    idx = list(indices)
    sign = 1
    # insertion sort, counting graded transpositions
    for i in range(1, len(idx)):
        j = i
        while j > 0 and idx[j - 1] > idx[j]:
            if (degrees[idx[j - 1]] * degrees[idx[j]]) % 2:
                sign = -sign
            idx[j - 1], idx[j] = idx[j], idx[j - 1]
            j -= 1
    for a, b in zip(idx, idx[1:]):
        if a == b and degrees[a] % 2:
            return tuple(idx), 0, True
    return tuple(idx), sign, False


class GradedSpace:
    """Finite ordered basis of (name, degree) pairs; names are unique."""

    def __init__(self, basis, label: str = ""):
        names = [b[0] for b in basis]
        if len(set(names)) != len(names):
            raise StructuralError("basis names must be unique")
        self.names = tuple(names)
        self.degrees = tuple(int(b[1]) for b in basis)
        self.index = {n: i for i, n in enumerate(self.names)}
        self.label = label

    @property
    def dim(self):
        return len(self.names)

    def degree(self, i: int) -> int:
        return self.degrees[i]

    def basis_vector(self, i, coeff=1) -> "GradedVector":
        return GradedVector(self, {i: Scalar.of(coeff)})

    def zero(self) -> "GradedVector":
        return GradedVector(self, {})

    def shifted(self, n: int) -> "GradedSpace":
        """Degree shift: an element of degree d sits in degree d - n after [n]."""
        return GradedSpace([(nm, d - n) for nm, d in zip(self.names, self.degrees)],
                           label=f"{self.label}[{n}]" if self.label else "")

    def dual(self) -> "GradedSpace":
        return GradedSpace([(nm + "*", -d) for nm, d in zip(self.names, self.degrees)],
                           label=f"{self.label}*" if self.label else "")

    def __eq__(self, other):
        return (isinstance(other, GradedSpace)
                and self.names == other.names and self.degrees == other.degrees)

    def __hash__(self):
        return hash((self.names, self.degrees))

    def __repr__(self):
        inner = ", ".join(f"{n}({d})" for n, d in zip(self.names, self.degrees))
        return f"GradedSpace[{inner}]"

    def to_json(self):
        return {"basis": [{"name": n, "degree": d}
                          for n, d in zip(self.names, self.degrees)]}

    @classmethod
    def from_json(cls, obj) -> "GradedSpace":
        return cls([(b["name"], b["degree"]) for b in obj["basis"]])


class GradedVector:
    """Sparse element of a GradedSpace; zero coefficients are never stored."""

    def __init__(self, space: GradedSpace, terms=None):
        self.space = space
        self.terms = {}
        if terms:
            for i, c in terms.items():
                if not isinstance(c, Scalar):
                    c = Scalar.of(c)
                if not c.is_zero():
                    self.terms[i] = c

    def is_zero(self):
        return not self.terms

    def is_homogeneous(self):
        degs = {self.space.degree(i) for i in self.terms}
        return len(degs) <= 1

    def degree(self):
        degs = {self.space.degree(i) for i in self.terms}
        if len(degs) > 1:
            raise StructuralError("vector is not homogeneous")
        return degs.pop() if degs else None

    def __add__(self, other):
        if self.space != other.space:
            raise StructuralError("vectors live in different spaces")
        data = dict(self.terms)
        for i, c in other.terms.items():
            s = data.get(i)
            data[i] = c if s is None else s + c
        return GradedVector(self.space, data)

    def __neg__(self):
        return GradedVector(self.space, {i: -c for i, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "GradedVector":
        if not isinstance(c, Scalar):
            c = Scalar.of(c)
        return GradedVector(self.space, {i: v * c for i, v in self.terms.items()})

    def __eq__(self, other):
        return (isinstance(other, GradedVector) and self.space == other.space
                and self.terms == other.terms)

    def __repr__(self):
        if not self.terms:
            return "0"
        return " + ".join(f"({c})*{self.space.names[i]}"
                          for i, c in sorted(self.terms.items()))


class LinMap:
    """Degree-homogeneous linear map stored by sparse columns.

    columns[j] maps a target basis index to the Scalar coefficient of the
    image of source basis vector j.  Composition carries no Koszul sign;
    signs enter through duals and tensor/derivation extensions.
    """

    def __init__(self, source: GradedSpace, target: GradedSpace, degree: int,
                 columns=None):
        self.source = source
        self.target = target
        self.degree = degree
        self.columns = {}
        if columns:
            for j, col in columns.items():
                clean = {}
                for i, c in col.items():
                    if not isinstance(c, Scalar):
                        c = Scalar.of(c)
                    if not c.is_zero():
                        clean[i] = c
                if clean:
                    self.columns[j] = clean

    # -- constructors --------------------------------------------------------
    @classmethod
    def zero(cls, source, target, degree=0):
        return cls(source, target, degree)

    @classmethod
    def identity(cls, space):
        return cls(space, space, 0,
                   {j: {j: Scalar.one()} for j in range(space.dim)})

    @classmethod
    def from_entries(cls, source, target, degree, entries):
        """entries: iterable of (from_name, to_name, Scalar-like)."""
        cols = {}
        for frm, to, c in entries:
            j = source.index[frm]
            i = target.index[to]
            if not isinstance(c, Scalar):
                c = Scalar.of(c)
            cols.setdefault(j, {})
            prev = cols[j].get(i)
            cols[j][i] = c if prev is None else prev + c
        return cls(source, target, degree, cols)

    # -- action and algebra ----------------------------------------------------
    def apply(self, v: GradedVector) -> GradedVector:
        if v.space != self.source:
            raise StructuralError("vector space does not match map source")
        out = {}
        for j, c in v.terms.items():
            col = self.columns.get(j)
            if not col:
                continue
            for i, a in col.items():
                s = out.get(i)
                t = a * c
                out[i] = t if s is None else s + t
        return GradedVector(self.target, out)

    def __call__(self, v):
        return self.apply(v)

    def compose(self, other: "LinMap") -> "LinMap":
        """self o other."""
        if other.target != self.source:
            raise StructuralError("composition mismatch")
        cols = {}
        for j, col in other.columns.items():
            acc = {}
            for k, c in col.items():
                inner = self.columns.get(k)
                if not inner:
                    continue
                for i, a in inner.items():
                    s = acc.get(i)
                    t = a * c
                    acc[i] = t if s is None else s + t
            acc = {i: c for i, c in acc.items() if not c.is_zero()}
            if acc:
                cols[j] = acc
        return LinMap(other.source, self.target, self.degree + other.degree, cols)

    def __matmul__(self, other):
        return self.compose(other)

    def __add__(self, other):
        if (self.source != other.source or self.target != other.target
                or self.degree != other.degree):
            raise StructuralError("sum of maps with different shape or degree")
        cols = {j: dict(col) for j, col in self.columns.items()}
        for j, col in other.columns.items():
            dst = cols.setdefault(j, {})
            for i, c in col.items():
                s = dst.get(i)
                dst[i] = c if s is None else s + c
        return LinMap(self.source, self.target, self.degree, cols)

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "LinMap":
        if not isinstance(c, Scalar):
            c = Scalar.of(c)
        return LinMap(self.source, self.target, self.degree,
                      {j: {i: a * c for i, a in col.items()}
                       for j, col in self.columns.items()})

    def is_zero(self):
        return not self.columns

    def __eq__(self, other):
        return (isinstance(other, LinMap) and self.source == other.source
                and self.target == other.target and self.degree == other.degree
                and self.columns == other.columns)

    def entry(self, i, j) -> Scalar:
        return self.columns.get(j, {}).get(i, Scalar.zero())

    def check_degree(self):
        """Every column image must be homogeneous of degree col_degree + map degree."""
        for j, col in self.columns.items():
            want = self.source.degree(j) + self.degree
            for i in col:
                if self.target.degree(i) != want:
                    return False, (self.source.names[j], self.target.names[i])
        return True, None

    def first_difference(self, other):
        """Name of a source basis vector on which the two maps differ, or None."""
        for j in range(self.source.dim):
            if self.columns.get(j, {}) != other.columns.get(j, {}):
                return self.source.names[j]
        return None

    def __repr__(self):
        ent = []
        for j, col in sorted(self.columns.items()):
            for i, c in sorted(col.items()):
                ent.append(f"{self.source.names[j]} -> ({c})*{self.target.names[i]}")
        return f"LinMap(deg {self.degree}; " + "; ".join(ent) + ")"

    def to_json(self):
        entries = []
        for j, col in sorted(self.columns.items()):
            for i, c in sorted(col.items()):
                for k, q in sorted(c.coeffs.items()):
                    entries.append({"from": self.source.names[j],
                                    "to": self.target.names[i],
                                    "coeff": str(q), "hbar": k})
        return {"degree": self.degree, "entries": entries}

    @classmethod
    def from_json(cls, source, target, obj) -> "LinMap":
        cols = {}
        for e in obj.get("entries", []):
            j = source.index[e["from"]]
            i = target.index[e["to"]]
            power = int(e.get("hbar", 0))
            c = Scalar({power: Fraction(e["coeff"])},
                       floor=min(0, power))
            cols.setdefault(j, {})
            prev = cols[j].get(i)
            cols[j][i] = c if prev is None else prev + c
        return cls(source, target, int(obj["degree"]), cols)


def dual_map(f: LinMap) -> LinMap:
    """Map on duals with the Koszul convention j*phi(a) = (-1)^(|j||phi|) phi(j a)."""
    src = f.target.dual()
    tgt = f.source.dual()
    cols = {}
    for j, col in f.columns.items():  # f(e_j) = sum_i col[i] e_i
        for i, c in col.items():
            # (f* e_i^*)(e_j) = (-1)^(|f| * |e_i^*|) e_i^*(f e_j);  |e_i^*| = -deg(e_i)
            sign = -1 if (f.degree * f.target.degree(i)) % 2 else 1
            cols.setdefault(i, {})
            prev = cols[i].get(j)
            add = c.scale(sign)
            cols[i][j] = add if prev is None else prev + add
    return LinMap(src, tgt, f.degree, cols)


def double_dual_iso(space: GradedSpace) -> LinMap:
    """Canonical V -> V** given by ev_a(phi) = (-1)^(|a||phi|) phi(a).

    On the naive double-dual basis this is e_i -> (-1)^(|e_i|) e_i**.
    """
    dd = space.dual().dual()
    cols = {i: {i: Scalar.of(-1 if space.degree(i) % 2 else 1)}
            for i in range(space.dim)}
    return LinMap(space, dd, 0, cols)


# -- exact linear algebra over the Scalar ring --------------------------------

def invert_linmap(f: LinMap) -> LinMap:
    """Inverse of a degree-0 map over Q[[hbar]] (truncated).

    Invertibility is decided by the hbar^0 part; higher orders are handled by
    the geometric series, which terminates at the truncation order.
    """
    if f.degree != 0:
        raise StructuralError("only degree-0 maps can be inverted")
    if f.source.dim != f.target.dim:
        raise StructuralError("inverse needs equal dimensions")
    n = f.source.dim
    # rational hbar^0 block, inverted by Gauss elimination
    a = [[f.entry(i, j).constant() for j in range(n)] for i in range(n)]
    inv0 = _invert_rational_matrix(a)
    if inv0 is None:
        raise StructuralError("map is not invertible (hbar^0 block singular)")
    g0 = LinMap(f.target, f.source, 0,
                {j: {i: Scalar.of(inv0[i][j]) for i in range(n)
                     if inv0[i][j] != 0} for j in range(n)})
    # f g0 = 1 + N with N of positive hbar order: invert by alternating series
    idm = LinMap.identity(f.target)
    nmap = f.compose(g0) - idm
    cap = 2 + max((c.order for col in f.columns.values() for c in col.values()),
                  default=Scalar.one().order)
    series = idm
    power = idm
    guard = 0
    while True:
        power = nmap.compose(power)
        if power.is_zero():
            break
        series = series + power.scale(-1) if guard % 2 == 0 else series + power
        guard += 1
        if guard > cap:
            raise StructuralError("inverse series did not terminate")
    return g0.compose(series)


def _invert_rational_matrix(a):
    """Exact inverse of a square Fraction matrix, or None if singular."""
    n = len(a)
    m = [[Fraction(a[i][j]) for j in range(n)] + [Fraction(1 if i == j else 0)
         for j in range(n)] for i in range(n)]
    row = 0
    for col in range(n):
        piv = None
        for r in range(row, n):
            if m[r][col] != 0:
                piv = r
                break
        if piv is None:
            return None
        m[row], m[piv] = m[piv], m[row]
        pv = m[row][col]
        m[row] = [x / pv for x in m[row]]
        for r in range(n):
            if r != row and m[r][col] != 0:
                fac = m[r][col]
                m[r] = [x - fac * y for x, y in zip(m[r], m[row])]
        row += 1
    return [[m[i][n + j] for j in range(n)] for i in range(n)]


def rational_matrix_rank(a) -> int:
    """Rank of a matrix of Fractions by exact row reduction."""
    if not a:
        return 0
    m = [list(map(Fraction, row)) for row in a]
    rows, cols = len(m), len(m[0])
    rank = 0
    r = 0
    for c in range(cols):
        piv = None
        for i in range(r, rows):
            if m[i][c] != 0:
                piv = i
                break
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        pv = m[r][c]
        m[r] = [x / pv for x in m[r]]
        for i in range(rows):
            if i != r and m[i][c] != 0:
                fac = m[i][c]
                m[i] = [x - fac * y for x, y in zip(m[i], m[r])]
        r += 1
        rank += 1
        if r == rows:
            break
    return rank


def rational_nullspace(a):
    """Basis of the right nullspace of a Fraction matrix (list of columns)."""
    if not a:
        return []
    rows, cols = len(a), len(a[0])
    m = [list(map(Fraction, row)) for row in a]
    pivots = {}
    r = 0
    for c in range(cols):
        piv = None
        for i in range(r, rows):
            if m[i][c] != 0:
                piv = i
                break
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        pv = m[r][c]
        m[r] = [x / pv for x in m[r]]
        for i in range(rows):
            if i != r and m[i][c] != 0:
                fac = m[i][c]
                m[i] = [x - fac * y for x, y in zip(m[i], m[r])]
        pivots[c] = r
        r += 1
        if r == rows:
            break
    free = [c for c in range(cols) if c not in pivots]
    basis = []
    for fc in free:
        vec = [Fraction(0)] * cols
        vec[fc] = Fraction(1)
        for pc, pr in pivots.items():
            vec[pc] = -m[pr][fc]
        basis.append(vec)
    return basis
