"""Truncated graded symmetric algebras and the operators living on them.

Monomials are stored as sorted tuples of basis indices with a canonical
Koszul sign; every sign in this module is re-derived through
`sort_with_sign` / explicit prefix-degree counting, so there is a single
source of sign truth.

Operator kinds:
  * DerivationExt  - Leibniz extension of a linear map on generators
  * MorphismExt    - multiplicative extension of a degree-0 map
  * TwoToZero      - constant-coefficient second-order operator (pair table)
  * NToValue       - k-th order operator with values in the algebra
  * QOperator      - the weighted projector sum entering K^sym = q K^der

The symmetric tensor power of an SDR is produced by `sym_sdr`, with the
homotopy computed through the q-formula; the permutation-sum formula is
kept as a test oracle (see tests).
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from math import factorial

from .scalars import Scalar
from .spaces import GradedSpace, LinMap, StructuralError, koszul_sign, sort_with_sign


class TruncationError(Exception):
    pass


class SymSpace:
    """Sym(V) truncated at word length <= wmax, over a GradedSpace V."""

    def __init__(self, space: GradedSpace, wmax: int):
        self.space = space
        self.wmax = wmax
        self.truncation_events = 0
        self._basis = None
        self._graded = None
        self._index = None

    def monomials(self):
        if self._basis is None:
            out = [()]
            degs = self.space.degrees
            for w in range(1, self.wmax + 1):
                for combo in itertools.combinations_with_replacement(
                        range(self.space.dim), w):
                    ok = True
                    for a, b in zip(combo, combo[1:]):
                        if a == b and degs[a] % 2:
                            ok = False
                            break
                    if ok:
                        out.append(combo)
            self._basis = out
            self._index = {m: k for k, m in enumerate(out)}
        return self._basis

    def monomial_index(self, mono):
        self.monomials()
        return self._index[mono]

    def monomial_degree(self, mono) -> int:
        return sum(self.space.degrees[i] for i in mono)

    def monomial_name(self, mono) -> str:
        if not mono:
            return "1"
        return "*".join(self.space.names[i] for i in mono)

    def graded_space(self) -> GradedSpace:
        if self._graded is None:
            self._graded = GradedSpace(
                [(self.monomial_name(m), self.monomial_degree(m))
                 for m in self.monomials()],
                label=f"Sym<={self.wmax}({self.space.label})")
        return self._graded

    # -- elements -----------------------------------------------------------
    def zero(self) -> "SymElement":
        return SymElement(self, {})

    def one(self) -> "SymElement":
        return SymElement(self, {(): Scalar.one()})

    def generator(self, i) -> "SymElement":
        if isinstance(i, str):
            i = self.space.index[i]
        return SymElement(self, {(i,): Scalar.one()})

    def from_word(self, indices, coeff=1) -> "SymElement":
        ind = [self.space.index[i] if isinstance(i, str) else i for i in indices]
        mono, sign, dead = sort_with_sign(ind, self.space.degrees)
        if dead:
            return self.zero()
        if len(mono) > self.wmax:
            self.truncation_events += 1
            return self.zero()
        c = coeff if isinstance(coeff, Scalar) else Scalar.of(coeff)
        return SymElement(self, {mono: c.scale(sign)})

    def from_vector_word(self, vectors, coeff=1) -> "SymElement":
        """Product of GradedVector factors, expanded multilinearly."""
        out = self.from_word([], coeff)
        for v in vectors:
            out = out * self.inject(v)
        return out

    def inject(self, vector) -> "SymElement":
        return SymElement(self, {(i,): c for i, c in vector.terms.items()})

    def element(self, data) -> "SymElement":
        """Build from {word-tuple-or-names: coeff} without assuming sortedness."""
        acc = self.zero()
        for word, coeff in data.items():
            acc = acc + self.from_word(word, coeff)
        return acc


class SymElement:
    """Sparse element of a truncated symmetric algebra."""

    __slots__ = ("sym", "terms")

    def __init__(self, sym: SymSpace, terms=None):
        self.sym = sym
        self.terms = {}
        if terms:
            for m, c in terms.items():
                if not isinstance(c, Scalar):
                    c = Scalar.of(c)
                if not c.is_zero():
                    self.terms[m] = c

    def is_zero(self):
        return not self.terms

    def __add__(self, other):
        data = dict(self.terms)
        for m, c in other.terms.items():
            s = data.get(m)
            data[m] = c if s is None else s + c
        return SymElement(self.sym, data)

    def __neg__(self):
        return SymElement(self.sym, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "SymElement":
        if not isinstance(c, Scalar):
            c = Scalar.of(c)
        return SymElement(self.sym, {m: v * c for m, v in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, Fraction, Scalar)):
            return self.scale(other)
        degs = self.sym.space.degrees
        data = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                if len(m1) + len(m2) > self.sym.wmax:
                    self.sym.truncation_events += 1
                    continue
                mono, sign, dead = sort_with_sign(m1 + m2, degs)
                if dead:
                    continue
                c = c1 * c2
                if sign < 0:
                    c = -c
                s = data.get(mono)
                data[mono] = c if s is None else s + c
        return SymElement(self.sym, data)

    __rmul__ = __mul__

    def word_components(self):
        out = {}
        for m, c in self.terms.items():
            out.setdefault(len(m), {})[m] = c
        return {w: SymElement(self.sym, d) for w, d in sorted(out.items())}

    def word_part(self, w) -> "SymElement":
        return SymElement(self.sym, {m: c for m, c in self.terms.items()
                                     if len(m) == w})

    def min_word(self):
        return min((len(m) for m in self.terms), default=None)

    def degree(self):
        degs = {self.sym.monomial_degree(m) for m in self.terms}
        if len(degs) > 1:
            raise StructuralError("element is not homogeneous")
        return degs.pop() if degs else None

    def constant_part(self) -> Scalar:
        return self.terms.get((), Scalar.zero())

    def is_integral(self) -> bool:
        return all(c.is_integral() for c in self.terms.values())

    def hbar_truncate(self, hmax) -> "SymElement":
        return SymElement(self.sym, {
            m: Scalar({k: v for k, v in c.coeffs.items() if k <= hmax},
                      order=c.order, floor=c.floor)
            for m, c in self.terms.items()})

    def restrict(self, wmax=None, hmax=None) -> "SymElement":
        data = {}
        for m, c in self.terms.items():
            if wmax is not None and len(m) > wmax:
                continue
            if hmax is not None:
                c = Scalar({k: v for k, v in c.coeffs.items() if k <= hmax},
                           order=c.order, floor=c.floor)
            if not c.is_zero():
                data[m] = c
        return SymElement(self.sym, data)

    def __eq__(self, other):
        return isinstance(other, SymElement) and self.terms == other.terms

    def __repr__(self):
        if not self.terms:
            return "0"
        bits = []
        for m in sorted(self.terms, key=lambda t: (len(t), t)):
            bits.append(f"({self.terms[m]})*{self.sym.monomial_name(m)}")
        return " + ".join(bits)

    def to_vector(self):
        from .spaces import GradedVector
        gs = self.sym.graded_space()
        return GradedVector(gs, {self.sym.monomial_index(m): c
                                 for m, c in self.terms.items()})

    @classmethod
    def from_vector(cls, sym: SymSpace, vec) -> "SymElement":
        basis = sym.monomials()
        return cls(sym, {basis[i]: c for i, c in vec.terms.items()})

    def to_json(self):
        return [{"word": [self.sym.space.names[i] for i in m],
                 "coeff": c.to_json()}
                for m, c in sorted(self.terms.items(),
                                   key=lambda t: (len(t[0]), t[0]))]


# -- extraction signs ---------------------------------------------------------

def _extract_sign(mono, positions, degrees) -> int:
    """Koszul sign for moving the letters at `positions` (ascending) to the front,
    preserving their relative order."""
    sign = 1
    taken = 0
    for rank, pos in enumerate(positions):
        d = degrees[mono[pos]]
        if d % 2:
            passed = sum(degrees[mono[q]] for q in range(pos)
                         if q not in positions[:rank])
            if passed % 2:
                sign = -sign
    return sign


# -- operators ----------------------------------------------------------------

class SymOp:
    degree = 0

    def apply(self, elt: SymElement) -> SymElement:
        raise NotImplementedError

    def __call__(self, elt):
        return self.apply(elt)

    def __add__(self, other):
        return OpSum(self, other)

    def __neg__(self):
        return OpScale(self, Scalar.of(-1))

    def __sub__(self, other):
        return OpSum(self, OpScale(other, Scalar.of(-1)))

    def scale(self, c):
        return OpScale(self, c)

    def compose(self, other):
        return OpCompose(self, other)


class OpSum(SymOp):
    def __init__(self, *ops):
        if len({op.degree for op in ops}) > 1:
            raise StructuralError("summed operators must share a degree")
        self.ops = ops
        self.degree = ops[0].degree if ops else 0

    def apply(self, elt):
        acc = elt.sym.zero()
        for op in self.ops:
            acc = acc + op.apply(elt)
        return acc


class OpScale(SymOp):
    def __init__(self, op, c):
        self.op = op
        self.c = c if isinstance(c, Scalar) else Scalar.of(c)
        self.degree = op.degree

    def apply(self, elt):
        return self.op.apply(elt).scale(self.c)


class OpCompose(SymOp):
    def __init__(self, outer, inner):
        self.outer = outer
        self.inner = inner
        self.degree = outer.degree + inner.degree

    def apply(self, elt):
        return self.outer.apply(self.inner.apply(elt))


class ZeroOp(SymOp):
    def __init__(self, degree=0):
        self.degree = degree

    def apply(self, elt):
        return elt.sym.zero()


class IdentityOp(SymOp):
    def apply(self, elt):
        return elt


class DerivationExt(SymOp):
    """Leibniz extension of a linear map on generators; kills the unit."""

    def __init__(self, linmap: LinMap, sym: SymSpace):
        if linmap.source != sym.space or linmap.target != sym.space:
            raise StructuralError("derivation generator map must act on Sym generators")
        self.linmap = linmap
        self.sym = sym
        self.degree = linmap.degree

    def apply(self, elt):
        degs = self.sym.space.degrees
        acc = self.sym.zero()
        odd_op = self.degree % 2
        for mono, coeff in elt.terms.items():
            prefix_parity = 0
            for k, idx in enumerate(mono):
                col = self.linmap.columns.get(idx)
                if col:
                    # D crosses the prefix m_0 ... m_(k-1)
                    sign = -1 if (odd_op and prefix_parity) else 1
                    for tgt, a in col.items():
                        word, s2, dead = sort_with_sign(
                            mono[:k] + (tgt,) + mono[k + 1:], degs)
                        if dead:
                            continue
                        c = coeff * a
                        if sign * s2 < 0:
                            c = -c
                        s = acc.terms.get(word)
                        acc.terms[word] = c if s is None else s + c
                        if acc.terms[word].is_zero():
                            del acc.terms[word]
                prefix_parity ^= degs[idx] % 2
        return acc


class MorphismExt(SymOp):
    """Multiplicative extension of a degree-0 map between generator spaces."""

    def __init__(self, linmap: LinMap, sym_src: SymSpace, sym_tgt: SymSpace):
        if linmap.degree != 0:
            raise StructuralError("algebra morphism extension needs degree 0")
        if linmap.source != sym_src.space or linmap.target != sym_tgt.space:
            raise StructuralError("morphism generator map spaces mismatch")
        self.linmap = linmap
        self.sym_src = sym_src
        self.sym_tgt = sym_tgt
        self.degree = 0

    def apply(self, elt):
        acc = self.sym_tgt.zero()
        for mono, coeff in elt.terms.items():
            prod = SymElement(self.sym_tgt, {(): coeff})
            for idx in mono:
                col = self.linmap.columns.get(idx, {})
                vec = SymElement(self.sym_tgt, {(t,): c for t, c in col.items()})
                prod = prod * vec
                if prod.is_zero():
                    break
            acc = acc + prod
        return acc


class TwoToZero(SymOp):
    """Constant-coefficient second-order operator given by its pair table.

    table[(i, j)] (i <= j) is G(e_i e_j) in Sym^0, i.e. a Scalar.  Action on a
    longer word is the signed sum over pairwise contractions; words of length
    <= 1 are annihilated.
    """

    def __init__(self, sym: SymSpace, table, degree: int):
        self.sym = sym
        self.degree = degree
        self.table = {}
        for (i, j), c in table.items():
            if not isinstance(c, Scalar):
                c = Scalar.of(c)
            if c.is_zero():
                continue
            if i > j:
                # store on the canonical sorted pair with the swap sign
                s = -1 if (sym.space.degrees[i] * sym.space.degrees[j]) % 2 else 1
                i, j = j, i
                c = c.scale(s)
            key = (i, j)
            prev = self.table.get(key)
            self.table[key] = c if prev is None else prev + c
        self.table = {k: v for k, v in self.table.items() if not v.is_zero()}

    def pair_value(self, i, j) -> Scalar:
        if i > j:
            s = -1 if (self.sym.space.degrees[i] * self.sym.space.degrees[j]) % 2 else 1
            v = self.table.get((j, i), Scalar.zero())
            return v.scale(s)
        return self.table.get((i, j), Scalar.zero())

    def apply(self, elt):
        degs = self.sym.space.degrees
        data = {}
        for mono, coeff in elt.terms.items():
            n = len(mono)
            if n < 2:
                continue
            for k in range(n):
                for l in range(k + 1, n):
                    val = self.table.get((mono[k], mono[l]))
                    if val is None:
                        continue
                    sign = _extract_sign(mono, (k, l), degs)
                    rest = mono[:k] + mono[k + 1:l] + mono[l + 1:]
                    c = coeff * val
                    if sign < 0:
                        c = -c
                    s = data.get(rest)
                    data[rest] = c if s is None else s + c
        return SymElement(self.sym, data)

    def __add__(self, other):
        if isinstance(other, TwoToZero) and other.sym is self.sym \
                and other.degree == self.degree:
            table = {k: v for k, v in self.table.items()}
            for k, v in other.table.items():
                prev = table.get(k)
                table[k] = v if prev is None else prev + v
            return TwoToZero(self.sym, table, self.degree)
        return OpSum(self, other)

    def is_zero(self):
        return not self.table


class NToValue(SymOp):
    """k-th order operator with constant coefficients and values in the algebra.

    table[sorted k-tuple] is the value on that generator word; longer words
    get the signed sum over k-subsets, shorter words are annihilated.
    """

    def __init__(self, sym: SymSpace, k: int, table, degree: int):
        self.sym = sym
        self.k = k
        self.degree = degree
        self.table = {}
        for word, val in table.items():
            mono, sign, dead = sort_with_sign(word, sym.space.degrees)
            if dead or (val.is_zero() if isinstance(val, SymElement) else False):
                continue
            v = val.scale(sign) if sign < 0 else val
            prev = self.table.get(mono)
            self.table[mono] = v if prev is None else prev + v
        self.table = {m: v for m, v in self.table.items() if not v.is_zero()}

    def apply(self, elt):
        degs = self.sym.space.degrees
        acc = self.sym.zero()
        for mono, coeff in elt.terms.items():
            n = len(mono)
            if n < self.k:
                continue
            for positions in itertools.combinations(range(n), self.k):
                key = tuple(mono[p] for p in positions)
                val = self.table.get(key)
                if val is None:
                    continue
                sign = _extract_sign(mono, positions, degs)
                taken = set(positions)
                rest = tuple(mono[q] for q in range(n) if q not in taken)
                rest_elt = SymElement(self.sym, {rest: coeff.scale(sign)})
                acc = acc + val * rest_elt
        return acc


class QOperator(SymOp):
    """The weighted sum over proper projector subsets entering K^sym.

    q(a_1...a_n) = sum over proper subsets T of positions of
    |T|!(n-1-|T|)!/n! times the word with pi = i p applied on T.
    """

    def __init__(self, pi: LinMap, sym: SymSpace):
        self.pi = pi
        self.sym = sym
        self.degree = 0

    def apply(self, elt):
        acc = self.sym.zero()
        for mono, coeff in elt.terms.items():
            n = len(mono)
            if n == 0:
                continue
            for r in range(n):  # |T| = r < n
                w = Fraction(factorial(r) * factorial(n - 1 - r), factorial(n))
                for subset in itertools.combinations(range(n), r):
                    prod = SymElement(self.sym, {(): coeff.scale(w)})
                    chosen = set(subset)
                    for pos, idx in enumerate(mono):
                        if pos in chosen:
                            col = self.pi.columns.get(idx, {})
                            vec = SymElement(self.sym,
                                             {(t,): c for t, c in col.items()})
                        else:
                            vec = SymElement(self.sym, {(idx,): Scalar.one()})
                        prod = prod * vec
                        if prod.is_zero():
                            break
                    acc = acc + prod
        return acc


def op_exp(op: SymOp, elt: SymElement, cap: int = 64) -> SymElement:
    """exp(op) applied to elt; op must be nilpotent on elt within truncation."""
    acc = elt
    term = elt
    k = 0
    while True:
        k += 1
        term = op.apply(term).scale(Fraction(1, k))
        if term.is_zero():
            return acc
        acc = acc + term
        if k > cap:
            raise TruncationError("operator exponential did not terminate")


def bracket(g: SymOp, a: SymElement, b: SymElement) -> SymElement:
    """Failure of g to be a derivation: g(ab) - (ga)b - (-1)^(|g||a|) a (gb).

    For a 2-to-0 operator this reduces to contractions pairing one letter of
    a with one letter of b, which avoids materializing the product ab (whose
    word length may exceed the truncation cap even when the bracket fits).
    """
    if isinstance(g, TwoToZero):
        return _cross_bracket(g, a, b)
    gb = g.apply(b)
    cross = a.sym.zero()
    for mono, coeff in a.terms.items():
        sign = -1 if (g.degree * a.sym.monomial_degree(mono)) % 2 else 1
        cross = cross + SymElement(a.sym, {mono: coeff.scale(sign)}) * gb
    return g.apply(a * b) - g.apply(a) * b - cross


def _cross_bracket(g: TwoToZero, a: SymElement, b: SymElement) -> SymElement:
    sym = a.sym
    degs = sym.space.degrees
    acc = sym.zero()
    for amono, ac in a.terms.items():
        adeg_prefix = []
        run = 0
        for idx in amono:
            adeg_prefix.append(run)
            run ^= degs[idx] % 2
        atotal = run
        for bmono, bc in b.terms.items():
            if len(amono) + len(bmono) - 2 > sym.wmax:
                sym.truncation_events += 1
                continue
            bdeg_prefix = []
            run_b = 0
            for idx in bmono:
                bdeg_prefix.append(run_b)
                run_b ^= degs[idx] % 2
            coeff_ab = ac * bc
            for k, ga in enumerate(amono):
                for l, gb_idx in enumerate(bmono):
                    val = g.pair_value(ga, gb_idx)
                    if val.is_zero():
                        continue
                    sign = 1
                    if degs[ga] % 2 and adeg_prefix[k]:
                        sign = -sign
                    crossed = (atotal ^ (degs[ga] % 2)) ^ bdeg_prefix[l]
                    if degs[gb_idx] % 2 and crossed:
                        sign = -sign
                    cc = coeff_ab.scale(sign) * val
                    rest_a = SymElement(sym, {amono[:k] + amono[k + 1:]: cc})
                    rest_b = SymElement(sym, {bmono[:l] + bmono[l + 1:]:
                                              Scalar.one(order=cc.order)})
                    acc = acc + rest_a * rest_b
    return acc


def linmap_of_op(op: SymOp, src: SymSpace, tgt: SymSpace = None) -> LinMap:
    """Materialize an operator as a LinMap on monomial bases."""
    tgt = tgt or src
    cols = {}
    gs_src = src.graded_space()
    gs_tgt = tgt.graded_space()
    for j, mono in enumerate(src.monomials()):
        img = op.apply(SymElement(src, {mono: Scalar.one()}))
        if img.is_zero():
            continue
        cols[j] = {tgt.monomial_index(m): c for m, c in img.terms.items()}
    return LinMap(gs_src, gs_tgt, op.degree, cols)


def two_to_zero_part(op: SymOp, sym: SymSpace) -> TwoToZero:
    """Pair table of an operator: (m1, m2) -> Sym^0 coefficient of op(m1 m2)."""
    table = {}
    degs = sym.space.degrees
    for i in range(sym.space.dim):
        for j in range(i, sym.space.dim):
            if i == j and degs[i] % 2:
                continue
            val = op.apply(sym.from_word([i, j]))
            c = val.constant_part()
            if not c.is_zero():
                table[(i, j)] = c
    return TwoToZero(sym, table, op.degree)


def is_pairwise_reconstruction(op: SymOp, sym: SymSpace, wmax=None) -> bool:
    """Does the pair-table extension reproduce op on all words <= wmax?"""
    wmax = wmax if wmax is not None else sym.wmax
    g2 = two_to_zero_part(op, sym)
    for mono in sym.monomials():
        if len(mono) > wmax:
            continue
        x = SymElement(sym, {mono: Scalar.one()})
        if not (op.apply(x) - g2.apply(x)).is_zero():
            return False
    return True


# -- the Convention pairing ----------------------------------------------------

def sym_to_tensor(elt: SymElement):
    """Fixed embedding Sym^m(V) -> V^(x m): signed sum over all permutations."""
    out = []
    degs = elt.sym.space.degrees
    for mono, coeff in elt.terms.items():
        n = len(mono)
        if n == 0:
            out.append((coeff, ()))
            continue
        dlist = [degs[i] for i in mono]
        for perm in itertools.permutations(range(n)):
            s = koszul_sign(dlist, list(perm))
            word = tuple(mono[p] for p in perm)
            out.append((coeff.scale(s), word))
    return out


def eval_tensor_functional(fword, aword, fdegs, adegs) -> int:
    """Sign of (f_1 x ... x f_m)(a_1 x ... x a_m) evaluation order."""
    sign = 1
    m = len(fword)
    for k in range(m):
        for l in range(k):
            # f_k crosses a_l for l < k
            if (fdegs[k] * adegs[l]) % 2:
                sign = -sign
    return sign


def pair_sym_with_tensor(f_elt: SymElement, tensor_terms, vspace: GradedSpace) -> Scalar:
    """Evaluate an element of Sym(V*) on a tensor in V^(x m).

    f_elt lives over V* (basis aligned with V); tensor_terms is a list of
    (Scalar, index word).  Uses the fixed embedding on the functional side.
    """
    total = Scalar.zero(order=_order_of(f_elt, tensor_terms))
    fstar_degs = f_elt.sym.space.degrees
    vdegs = vspace.degrees
    for fmono, fcoeff in f_elt.terms.items():
        m = len(fmono)
        fdlist = [fstar_degs[i] for i in fmono]
        for perm in itertools.permutations(range(m)):
            s = koszul_sign(fdlist, list(perm))
            fword = tuple(fmono[p] for p in perm)
            for tcoeff, aword in tensor_terms:
                if len(aword) != m:
                    continue
                if fword != aword:
                    continue  # e_i* (e_j) = delta_ij
                es = eval_tensor_functional(fword, aword,
                                            [fstar_degs[i] for i in fword],
                                            [vdegs[i] for i in aword])
                total = total + (fcoeff * tcoeff).scale(s * es)
    return total


def _order_of(f_elt, tensor_terms):
    orders = [c.order for c in f_elt.terms.values()]
    orders += [c.order for c, _ in tensor_terms]
    return min(orders) if orders else Scalar.one().order


def pair_sym(f_elt: SymElement, a_elt: SymElement) -> Scalar:
    """The Convention pairing Sym^m(V*) x Sym^m(V) -> k, m! included."""
    return pair_sym_with_tensor(f_elt, sym_to_tensor(a_elt), a_elt.sym.space)


def contract_with_kernel(sym_dual: SymSpace, kernel_terms, kernel_degree: int,
                         vspace: GradedSpace) -> TwoToZero:
    """2-to-0 operator d_E on Sym(V*) from a two-leg kernel E in V (x) V.

    d_E(a1 a2) = (-1)^(|E|(|a1|+|a2|)) (a1 a2)(E), evaluated through the
    Convention embedding.  kernel_terms: list of (Scalar, (i, j)) over V.
    """
    table = {}
    degs = sym_dual.space.degrees
    for i in range(sym_dual.space.dim):
        for j in range(i, sym_dual.space.dim):
            if i == j and degs[i] % 2:
                continue
            pair = sym_dual.from_word([i, j])
            if pair.is_zero():
                continue
            val = pair_sym_with_tensor(pair, kernel_terms, vspace)
            if val.is_zero():
                continue
            tot = degs[i] + degs[j]
            if (kernel_degree * tot) % 2:
                val = -val
            table[(i, j)] = val
    return TwoToZero(sym_dual, table, kernel_degree)


def two_to_zero_from_table(sym: SymSpace, table, degree: int) -> TwoToZero:
    """Public constructor with degree-homogeneity validation."""
    degs = sym.space.degrees
    for (i, j), c in table.items():
        cc = c if isinstance(c, Scalar) else Scalar.of(c)
        if cc.is_zero():
            continue
        if degs[i] + degs[j] + degree != 0:
            raise StructuralError(
                f"pair ({sym.space.names[i]},{sym.space.names[j]}) violates "
                f"degree homogeneity for a degree {degree} two-to-zero operator")
    return TwoToZero(sym, table, degree)


# -- symmetric tensor power of an SDR -------------------------------------------

def sym_sdr(s, wmax: int):
    """Symmetric tensor power construction of an SDR, homotopy via K^sym = q K^der."""
    from .homotopy import SDR  # local import to avoid a cycle

    sym_n = SymSpace(s.small_space, wmax)
    sym_m = SymSpace(s.big_space, wmax)
    i_sym = MorphismExt(s.i, sym_n, sym_m)
    p_sym = MorphismExt(s.p, sym_m, sym_n)
    b_der = DerivationExt(s.b, sym_n)
    d_der = DerivationExt(s.d, sym_m)
    pi = s.i.compose(s.p)
    k_sym = OpCompose(QOperator(pi, sym_m), DerivationExt(s.K, sym_m))
    sdr = SDR(
        small=sym_n.graded_space(),
        big=sym_m.graded_space(),
        b=linmap_of_op(b_der, sym_n),
        d=linmap_of_op(d_der, sym_m),
        i=linmap_of_op(i_sym, sym_n, sym_m),
        p=linmap_of_op(p_sym, sym_m, sym_n),
        K=linmap_of_op(k_sym, sym_m),
    )
    sdr.sym_small = sym_n
    sdr.sym_big = sym_m
    return sdr
