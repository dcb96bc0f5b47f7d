"""Differential BV algebras, the quantum master equation, homotopic
renormalization group operators, and the free / interactive transfer theorems.

The two HRG operators

    W(G, I)    = hbar log(e^(hbar G) e^(I/hbar))
    W(G, I, f) = e^(-W(G,I)/hbar) e^(hbar G) (e^(I/hbar) f)

are evaluated two independent ways: the production path integrates the flow
these formulas satisfy,

    d/ds W(sG, I) = hbar G W + 1/2 {W, W}_G,
    d/ds W(sG, I, f) = hbar G F + {W, F}_G,

which terminates exactly at truncation, and the oracle path sums connected
Feynman graphs (vertices from I, propagator G, exponential-formula weights).
Both are asserted equal on the window where the truncation is exact.  A
literal Laurent-window exp/log evaluator is kept for small cross-checks.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .scalars import Scalar
from .spaces import LinMap, StructuralError
from .symalg import (DerivationExt, MorphismExt, OpCompose, OpScale, OpSum,
                     QOperator, SymElement, SymOp, SymSpace, TwoToZero,
                     bracket, linmap_of_op, op_exp, sort_with_sign,
                     two_to_zero_part)
from .homotopy import SDR, certify, perturb


class HypothesisFailed(Exception):
    pass


class QMEViolated(Exception):
    pass


class LaurentLeak(Exception):
    """A negative hbar power survived into a final result."""


# -- truncation window ---------------------------------------------------------

def _phi_need(w: int, wmax: int) -> int:
    """Lower bound on the hbar cost of bringing word w back inside the bound."""
    if w <= wmax + 1:
        return 0
    return (w - wmax) // 2


def phi_truncate(elt: SymElement, wmax: int, hmax: int) -> SymElement:
    """Keep only (hbar power k, word w) with k + floor(max(0,w-wmax)/2) <= hmax.

    This is the exactness window for flows driven by plus-class interactions:
    the quantity k + floor((w - wmax)/2) never decreases under hbar G
    contractions or brackets with plus-class partners (whose hbar^0 parts
    have word >= 3), so nothing dropped here can re-enter components with
    word <= wmax and order <= hmax.
    """
    data = {}
    for mono, c in elt.terms.items():
        need = _phi_need(len(mono), wmax)
        kept = {k: v for k, v in c.coeffs.items() if k + need <= hmax}
        if kept:
            data[mono] = Scalar(kept, order=c.order, floor=c.floor)
    return SymElement(elt.sym, data)


def restrict_window(elt: SymElement, wmax: int, hmax: int) -> SymElement:
    return elt.restrict(wmax=wmax, hmax=hmax)


# -- differential BV algebras ----------------------------------------------------

@dataclass
class DiffBVAlgebra:
    """(Sym(M), Q, Delta): derivation differential plus 2-to-0 BV operator."""
    sym: SymSpace
    q: SymOp        # degree-1 derivation extension
    delta: TwoToZero

    def verify(self, wcheck=None) -> dict:
        wcheck = wcheck if wcheck is not None else self.sym.wmax
        report = {"q_squared": True, "delta_squared": True, "commute": True}
        for mono in self.sym.monomials():
            if len(mono) > wcheck:
                continue
            x = SymElement(self.sym, {mono: Scalar.one()})
            if not self.q.apply(self.q.apply(x)).is_zero():
                report["q_squared"] = False
                report.setdefault("witness", self.sym.monomial_name(mono))
            if not self.delta.apply(self.delta.apply(x)).is_zero():
                report["delta_squared"] = False
                report.setdefault("witness", self.sym.monomial_name(mono))
            anti = self.q.apply(self.delta.apply(x)) + self.delta.apply(self.q.apply(x))
            if not anti.is_zero():
                report["commute"] = False
                report.setdefault("witness", self.sym.monomial_name(mono))
        report["pass"] = all(report[k] for k in ("q_squared", "delta_squared", "commute"))
        return report

    def bracket(self, a, b):
        return bracket(self.delta, a, b)


@dataclass
class ActionFunctional:
    """Interaction functional with its wellformedness class.

    class "plus": word >= 3 at hbar^0, anything at hbar >= 1 (display class
    Sym[[hbar]]^+).  class "boundary" additionally allows a quadratic
    hbar^0 part; the L'-only restriction on it is enforced by the boundary
    module, which knows the splitting.
    """
    element: SymElement
    klass: str = "plus"

    def __post_init__(self):
        deg = self.element.degree()
        if deg not in (None, 0):
            raise StructuralError("action functional must have degree 0")
        for mono, c in self.element.terms.items():
            if len(mono) >= 3:
                continue
            floorv = min((k for k in c.coeffs), default=1)
            if floorv >= 1:
                continue
            if self.klass == "boundary" and len(mono) == 2:
                continue
            raise StructuralError(
                f"term {mono} at hbar^{floorv} violates the {self.klass} class")


def qme_residual(bv: DiffBVAlgebra, i_elt: SymElement) -> SymElement:
    """Q I + hbar Delta I + 1/2 {I, I}."""
    res = bv.q.apply(i_elt)
    res = res + bv.delta.apply(i_elt).scale(Scalar.hbar())
    res = res + bracket(bv.delta, i_elt, i_elt).scale(Fraction(1, 2))
    return res


class BracketWith(SymOp):
    """The operator {I, -} for a fixed I and 2-to-0 generator of the bracket."""

    def __init__(self, g: TwoToZero, i_elt: SymElement):
        self.g = g
        self.i_elt = i_elt
        ideg = i_elt.degree()
        self.degree = g.degree + (ideg or 0)

    def apply(self, x):
        return bracket(self.g, self.i_elt, x)


def twisted_differential(bv: DiffBVAlgebra, i_elt: SymElement,
                         require_square_zero: bool = True,
                         wcheck: int = None, hmax: int = None) -> SymOp:
    """Q + hbar Delta + {I,-}; square asserted zero where truncation is exact."""
    res = qme_residual(bv, i_elt)
    if hmax is not None:
        res = restrict_window(res, wcheck if wcheck is not None else bv.sym.wmax, hmax)
    if not res.is_zero():
        raise QMEViolated("interaction does not satisfy the quantum master equation")
    op = OpSum(bv.q, OpScale(bv.delta, Scalar.hbar()), BracketWith(bv.delta, i_elt))
    if require_square_zero:
        wi = max((len(m) for m in i_elt.terms), default=0)
        margin = 2 * max(0, wi - 2)
        limit = bv.sym.wmax - margin
        for mono in bv.sym.monomials():
            if len(mono) > limit:
                continue
            x = SymElement(bv.sym, {mono: Scalar.one()})
            sq = op.apply(op.apply(x))
            if hmax is not None:
                sq = restrict_window(sq, wcheck if wcheck is not None else bv.sym.wmax, hmax)
            if not sq.is_zero():
                raise QMEViolated(
                    f"twisted differential fails to square to zero on "
                    f"{bv.sym.monomial_name(mono)}")
    return op


# -- HRG operators: flow route ---------------------------------------------------

def _flow_cap(wmax, hmax):
    return (hmax + 2) * (wmax + 2) + 8


def _hrg_flow_terms(g: TwoToZero, i_elt: SymElement, wkeep: int, hmax: int):
    """Taylor coefficients in s of W(sG, I), phi-truncated; exact at truncation."""
    js = [phi_truncate(i_elt, wkeep, hmax)]
    cap = _flow_cap(wkeep, hmax)
    m = 0
    while True:
        acc = g.apply(js[m]).scale(Scalar.hbar())
        for a in range(m + 1):
            acc = acc + bracket(g, js[a], js[m - a]).scale(Fraction(1, 2))
        acc = phi_truncate(acc.scale(Fraction(1, m + 1)), wkeep, hmax)
        if acc.is_zero():
            return js
        js.append(acc)
        m += 1
        if m > cap:
            raise HypothesisFailed(
                "HRG flow did not terminate; interaction is not small "
                "within the truncation window")


def hrg_w_true(g: TwoToZero, i_elt: SymElement, wkeep: int, hmax: int) -> SymElement:
    """hbar log(e^(hbar G) e^(I/hbar)) including its constant part."""
    total = i_elt.sym.zero()
    for j in _hrg_flow_terms(g, i_elt, wkeep, hmax):
        total = total + j
    return total


class GraphBudgetExceeded(Exception):
    pass


def hrg_w(g: TwoToZero, i_elt: SymElement, wkeep: int = None, hmax: int = None,
          check: bool = True, klass: str = "plus",
          graph_steps: int = 300000) -> SymElement:
    """First HRG operator with the constant-part subtraction.

    The contraction-generated constant is discarded (the finite shadow of the
    renormalized definition); the interaction's own constant part rides
    through unchanged, so G = 0 acts as the identity.

    check=True evaluates the operator two more ways: the literal
    Laurent-window exp/log and the connected-graph sum, and asserts
    agreement (the graph window shrinks adaptively if enumeration would
    exceed graph_steps).
    """
    sym = i_elt.sym
    wkeep = wkeep if wkeep is not None else sym.wmax
    hmax = hmax if hmax is not None else _default_hmax(i_elt)
    ActionFunctional(i_elt, klass=klass)
    total = hrg_w_true(g, i_elt, wkeep, hmax)
    if not total.is_integral():
        raise LaurentLeak("negative hbar power in W(G, I)")
    shift = total.constant_part() - i_elt.constant_part()
    result = total - SymElement(sym, {(): shift})
    if check:
        brute = hrg_w_brute(g, i_elt, wkeep, hmax)
        if restrict_window(result, wkeep, hmax) != brute:
            raise AssertionError(
                "HRG flow route and Laurent log-exp route disagree for W(G, I)")
        _assert_graphs_agree(g, i_elt, None, total, wkeep, hmax, graph_steps)
    return result


def _assert_graphs_agree(g, i_elt, f_elt, reference, wkeep, hmax, steps):
    """Compare against the connected-graph sum at the largest affordable window."""
    for wc, hc in _shrinking_windows(wkeep, hmax):
        try:
            graphs = _graph_sum(g, i_elt, wc, hc, f_elt=f_elt, step_cap=steps)
        except GraphBudgetExceeded:
            continue
        if restrict_window(reference, wc, hc) != graphs:
            what = "W(G, I)" if f_elt is None else "W(G, I, f)"
            raise AssertionError(
                f"Feynman-graph route disagrees with the flow route for {what} "
                f"at window ({hc}, {wc})")
        return (wc, hc)
    return None


def _shrinking_windows(wkeep, hmax):
    seen = set()
    for dh in range(hmax + 1):
        for dw in range(wkeep + 1):
            wc, hc = max(0, wkeep - dw), max(0, hmax - dh)
            if (wc, hc) not in seen:
                seen.add((wc, hc))
                yield wc, hc


def hrg_w2(g: TwoToZero, i_elt: SymElement, f_elt: SymElement,
           wkeep: int = None, hmax: int = None, check: bool = True,
           klass: str = "plus", graph_steps: int = 300000) -> SymElement:
    """Second HRG operator e^(-W/hbar) e^(hbar G)(e^(I/hbar) f)."""
    sym = i_elt.sym
    wkeep = wkeep if wkeep is not None else sym.wmax
    hmax = hmax if hmax is not None else _default_hmax(i_elt)
    ActionFunctional(i_elt, klass=klass)
    # one extra window level: a word-1 factor of f can pull a dropped
    # boundary term back by one notch, unlike the plus-class-only first flow
    slack = hmax + 1
    js = _hrg_flow_terms(g, i_elt, wkeep, slack)
    fs = [phi_truncate(f_elt, wkeep, slack)]
    cap = _flow_cap(wkeep, slack)
    m = 0
    while True:
        acc = g.apply(fs[m]).scale(Scalar.hbar())
        for a in range(m + 1):
            if a < len(js):
                acc = acc + bracket(g, js[a], fs[m - a])
        acc = phi_truncate(acc.scale(Fraction(1, m + 1)), wkeep, slack)
        if acc.is_zero():
            break
        fs.append(acc)
        m += 1
        if m > cap:
            raise HypothesisFailed("second HRG flow did not terminate")
    total = sym.zero()
    for f in fs:
        total = total + f
    total = phi_truncate(total, wkeep, hmax)
    if not total.is_integral():
        raise LaurentLeak("negative hbar power in W(G, I, f)")
    if check:
        brute = hrg_w2_brute(g, i_elt, f_elt, wkeep, hmax)
        if restrict_window(total, wkeep, hmax) != brute:
            raise AssertionError(
                "HRG flow route and Laurent log-exp route disagree for W(G, I, f)")
        _assert_graphs_agree(g, i_elt, f_elt, total, wkeep, hmax, graph_steps)
    return total


def _default_hmax(elt: SymElement):
    orders = [c.order for c in elt.terms.values()]
    return min(orders) if orders else Scalar.one().order


# -- HRG operators: connected Feynman graph route --------------------------------

def _vertex_weight(term_coeff: Scalar) -> Scalar:
    return term_coeff.shift(-1)  # one 1/hbar per interaction vertex


def _matching_sign(degs, pairs) -> int:
    """Sign of sequentially extracting the given disjoint position pairs."""
    alive = [True] * len(degs)
    sign = 1
    for a, b in pairs:
        if degs[a] % 2:
            passed = sum(degs[q] for q in range(a) if alive[q]) % 2
            if passed:
                sign = -sign
        alive[a] = False
        if degs[b] % 2:
            passed = sum(degs[q] for q in range(b) if alive[q]) % 2
            if passed:
                sign = -sign
        alive[b] = False
    return sign


class _StepCounter:
    __slots__ = ("left",)

    def __init__(self, cap):
        self.left = cap

    def tick(self):
        self.left -= 1
        if self.left < 0:
            raise GraphBudgetExceeded


def _enumerate_pairings(positions, nz, gens, budget, counter, min_edges=0,
                        unmatched_allow=None, k_so_far=0, unmatched=0):
    """Yield lists of disjoint position pairs with nonzero propagator value.

    Prunes branches that can no longer reach `min_edges` (connectivity lower
    bound) or whose external-leg count already exceeds the word allowance
    for the remaining hbar budget.
    """
    counter.tick()
    if unmatched_allow is not None and \
            unmatched > unmatched_allow(k_so_far):
        return
    if k_so_far + len(positions) // 2 < min_edges:
        return
    if not positions:
        yield []
        return
    first, rest = positions[0], positions[1:]
    if budget > 0:
        gf = gens[first]
        for k, q in enumerate(rest):
            gq = gens[q]
            if ((gf, gq) if gf <= gq else (gq, gf)) not in nz:
                continue
            remaining = rest[:k] + rest[k + 1:]
            for sub in _enumerate_pairings(remaining, nz, gens, budget - 1,
                                           counter, min_edges, unmatched_allow,
                                           k_so_far + 1, unmatched):
                yield [(first, q)] + sub
    yield from _enumerate_pairings(rest, nz, gens, budget, counter, min_edges,
                                   unmatched_allow, k_so_far, unmatched + 1)


def _components_connected(n_vertices, edges, vid_of):
    if n_vertices <= 1:
        return True
    parent = list(range(n_vertices))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(vid_of[a]), find(vid_of[b])
        if ra != rb:
            parent[ra] = rb
    roots = {find(v) for v in range(n_vertices)}
    return len(roots) == 1


def _vertex_multisets(terms, max_omega):
    """Multisets of interaction-term indices with bounded total weight
    omega = sum over vertices of (2 * valuation + word - 2)."""
    omegas = []
    for mono, c in terms:
        val = c.valuation()
        omegas.append(2 * max(0, val if val is not None else 0) + len(mono) - 2)

    def rec(start, budget):
        yield []
        for t in range(start, len(terms)):
            if 0 < omegas[t] <= budget:
                for sub in rec(t, budget - omegas[t]):
                    yield [t] + sub

    # single-vertex multisets for weight-0 vertices (bare hbar-constants):
    # they carry no legs, so they only ever appear alone
    for t in range(len(terms)):
        if omegas[t] <= 0:
            yield [t]
    yield from rec(0, max_omega)


def _graph_sum(g, i_elt, wkeep, hmax, f_elt=None, step_cap=None):
    """Connected-graph evaluation shared by both HRG operators.

    For f_elt None: hbar * (sum over connected graphs with n >= 1 vertices
    from I).  Otherwise: sum over connected graphs with exactly one f vertex
    and n >= 0 I-vertices, no outer hbar factor.
    """
    counter = _StepCounter(step_cap if step_cap is not None else 10 ** 9)
    sym = i_elt.sym
    degs = sym.space.degrees
    terms = sorted(i_elt.terms.items(), key=lambda t: (len(t[0]), t[0]))
    for mono, c in terms:
        if sum(degs[i] for i in mono) % 2:
            raise StructuralError("graph route requires even interaction vertices")
        val = c.valuation()
        if mono and 2 * max(0, val if val is not None else 0) + len(mono) - 2 <= 0:
            raise StructuralError(
                "graph oracle requires a plus-class interaction "
                "(vertex with non-positive weight found)")
    out = sym.zero()
    outer = 1 if f_elt is None else 0  # the closing hbar factor of W(G, I)
    omega_total = 2 * (hmax - outer) + wkeep

    f_terms = [((), Scalar.one())] if f_elt is None else \
        sorted(f_elt.terms.items(), key=lambda t: (len(t[0]), t[0]))

    for fmono, fcoeff in f_terms:
        fval = fcoeff.valuation()
        omega_f = 0 if f_elt is None else \
            2 * (fval if fval is not None else 0) + len(fmono)
        for multiset in _vertex_multisets(terms, omega_total - omega_f):
            if f_elt is None and not multiset:
                continue
            # multiplicity weight prod w_t^(k_t) / k_t!
            weight = fcoeff if f_elt is not None else Scalar.one()
            counts = {}
            for t in multiset:
                counts[t] = counts.get(t, 0) + 1
            for t, k in counts.items():
                wt = _vertex_weight(terms[t][1])
                for _ in range(k):
                    weight = weight * wt
                weight = weight.scale(Fraction(1, _fact(k)))
            if weight.is_zero():
                continue
            # concatenated legs with vertex ids; vertex 0 is f when present
            gens = []
            vid_of = []
            vid = 0
            if f_elt is not None:
                gens.extend(fmono)
                vid_of.extend([0] * len(fmono))
                vid = 1
            for t in multiset:
                gens.extend(terms[t][0])
                vid_of.extend([vid] * len(terms[t][0]))
                vid += 1
            word_degs = [degs[i] for i in gens]
            val0 = weight.valuation()
            base = val0 if val0 is not None else 0
            hbudget = hmax - outer - base
            if hbudget < 0:
                continue

            def unmatched_allow(k_now, _h=hbudget):
                return wkeep + 2 * max(0, _h - k_now)

            nz = frozenset(g.table.keys())
            for pairs in _enumerate_pairings(tuple(range(len(gens))), nz,
                                             gens, hbudget, counter,
                                             min_edges=max(0, vid - 1),
                                             unmatched_allow=unmatched_allow):
                if not _components_connected(vid, pairs, vid_of):
                    continue
                k = len(pairs)
                matched = {p for pr in pairs for p in pr}
                external = [gens[q] for q in range(len(gens)) if q not in matched]
                coeff = weight.shift(k)  # hbar^k from e^(hbar G)
                for a, b in pairs:
                    coeff = coeff * g.pair_value(gens[a], gens[b])
                if coeff.is_zero():
                    continue
                sgn = _matching_sign(word_degs, pairs)
                word, s2, dead = sort_with_sign(tuple(external), degs)
                if dead:
                    continue
                if sgn * s2 < 0:
                    coeff = -coeff
                out = out + SymElement(sym, {word: coeff})
    if f_elt is None:
        out = out.scale(Scalar.hbar())
    return restrict_window(out, wkeep, hmax)


def _fact(n):
    out = 1
    for k in range(2, n + 1):
        out *= k
    return out


def hrg_w_graphs(g: TwoToZero, i_elt: SymElement, wkeep: int, hmax: int) -> SymElement:
    return _graph_sum(g, i_elt, wkeep, hmax, f_elt=None)


def hrg_w2_graphs(g: TwoToZero, i_elt: SymElement, f_elt: SymElement,
                  wkeep: int, hmax: int) -> SymElement:
    return _graph_sum(g, i_elt, wkeep, hmax, f_elt=f_elt)


# -- HRG operators: literal Laurent exp/log (independent cross-check route) -------

def _omega_prune(elt: SymElement, omega_cap: int, floor: int) -> SymElement:
    """Drop (hbar power k, word w) with 2k + w > omega_cap or k < floor.

    Multiplying by plus-class vertices, contracting with hbar G, and taking
    series products all preserve or raise 2*valuation + word, so such terms
    can never re-enter the kept window."""
    data = {}
    for mono, c in elt.terms.items():
        w = len(mono)
        kept = {k: v for k, v in c.coeffs.items()
                if floor <= k and 2 * k + w <= omega_cap}
        if kept:
            data[mono] = Scalar(kept, order=c.order, floor=max(c.floor, floor))
    return SymElement(elt.sym, data)


def exp_element(x: SymElement, omega_cap: int, floor: int, order: int,
                nmax: int = 80) -> SymElement:
    """sum x^n / n! pruned by the omega filtration and Laurent window."""
    sym = x.sym
    acc = sym.one()
    term = sym.one()
    for n in range(1, nmax + 1):
        term = _omega_prune((term * x).scale(Fraction(1, n)), omega_cap, floor)
        term = term.hbar_truncate(order)
        if term.is_zero():
            return acc
        acc = acc + term
    raise LaurentLeak("exp series did not terminate within the window")


def log_one_plus(y: SymElement, omega_cap: int, floor: int, order: int,
                 nmax: int = 80) -> SymElement:
    sym = y.sym
    acc = sym.zero()
    power = sym.one()
    for n in range(1, nmax + 1):
        power = _omega_prune(power * y, omega_cap, floor).hbar_truncate(order)
        if power.is_zero():
            return acc
        acc = acc + power.scale(Fraction((-1) ** (n + 1), n))
    raise LaurentLeak("log series did not terminate within the window")


def _brute_setup(i_elt: SymElement, wkeep: int, hmax: int, outer: int):
    """Wide working SymSpace and window parameters for the literal route."""
    omega_cap = 2 * (hmax - outer) + wkeep
    floor = -(omega_cap + 2)
    wide = SymSpace(i_elt.sym.space, 3 * omega_cap + 4)
    lift = SymElement(wide, dict(i_elt.terms))
    return wide, lift, omega_cap, floor


def hrg_w_brute(g: TwoToZero, i_elt: SymElement, wkeep: int, hmax: int) -> SymElement:
    """Literal Laurent-window evaluation of hbar log(e^(hbar G) e^(I/hbar)),
    with the same constant-part convention as hrg_w."""
    sym = i_elt.sym
    wide, lift, omega_cap, floor = _brute_setup(i_elt, wkeep, hmax, outer=1)
    const = lift.constant_part()
    i0 = lift - SymElement(wide, {(): const})
    g_wide = TwoToZero(wide, g.table, g.degree)
    e_i = exp_element(i0.scale(Scalar.hbar(-1, order=hmax, floor=floor)),
                      omega_cap, floor, hmax)
    contracted = op_exp(OpScale(g_wide, Scalar.hbar(order=hmax)), e_i)
    contracted = _omega_prune(contracted, omega_cap, floor).hbar_truncate(hmax)
    y = contracted - wide.one()
    w_log = log_one_plus(y, omega_cap, floor, hmax).scale(Scalar.hbar(order=hmax))
    w_log = w_log + SymElement(wide, {(): const})
    out = restrict_window(SymElement(sym, dict(w_log.terms)), wkeep, hmax)
    if not out.is_integral():
        raise LaurentLeak("negative hbar power in brute W(G, I)")
    shift = out.constant_part() - i_elt.constant_part()
    return out - SymElement(sym, {(): shift})


def hrg_w2_brute(g: TwoToZero, i_elt: SymElement, f_elt: SymElement,
                 wkeep: int, hmax: int) -> SymElement:
    """Literal evaluation of (e^(hbar G) e^(I/hbar))^(-1) e^(hbar G)(e^(I/hbar) f).

    The prefactor is inverted as an element: the denominator is 1 plus terms
    of strictly positive weight, so its geometric series terminates."""
    sym = i_elt.sym
    wide, lift, omega_cap, floor = _brute_setup(i_elt, wkeep, hmax, outer=0)
    const = lift.constant_part()
    i0 = lift - SymElement(wide, {(): const})  # e^(c/hbar) cancels in the ratio
    f_wide = SymElement(wide, dict(f_elt.terms))
    g_wide = TwoToZero(wide, g.table, g.degree)
    e_i = exp_element(i0.scale(Scalar.hbar(-1, order=hmax, floor=floor)),
                      omega_cap, floor, hmax)
    numer = op_exp(OpScale(g_wide, Scalar.hbar(order=hmax)), e_i * f_wide)
    numer = _omega_prune(numer, omega_cap, floor).hbar_truncate(hmax)
    denom = op_exp(OpScale(g_wide, Scalar.hbar(order=hmax)), e_i)
    denom = _omega_prune(denom, omega_cap, floor).hbar_truncate(hmax)
    y = denom - wide.one()
    inv = wide.one()
    power = wide.one()
    for n in range(1, 81):
        power = _omega_prune(power * y, omega_cap, floor).hbar_truncate(hmax)
        if power.is_zero():
            break
        inv = inv + power.scale(Fraction((-1) ** n, 1))
    else:
        raise LaurentLeak("denominator inversion did not terminate")
    out_wide = _omega_prune(inv * numer, omega_cap, floor).hbar_truncate(hmax)
    out = restrict_window(SymElement(sym, dict(out_wide.terms)), wkeep, hmax)
    if not out.is_integral():
        raise LaurentLeak("negative hbar power in brute W(G, I, f)")
    return out


# -- transfer theorems ------------------------------------------------------------

def _pair_hypothesis_free(s: SDR, delta: TwoToZero):
    """Delta d(m1 m2) = 0 on generator pairs."""
    sym2 = SymSpace(s.big, 2)
    degs = s.big.degrees
    d2 = TwoToZero(sym2, delta.table, delta.degree)
    for a in range(s.big.dim):
        for b in range(a, s.big.dim):
            if a == b and degs[a] % 2:
                continue
            dm1 = s.d.apply(s.big.basis_vector(a))
            dm2 = s.d.apply(s.big.basis_vector(b))
            sgn = -1 if degs[a] % 2 else 1
            elt = (sym2.inject(dm1) * sym2.inject(s.big.basis_vector(b))
                   + (sym2.inject(s.big.basis_vector(a)) * sym2.inject(dm2)).scale(sgn))
            if not d2.apply(elt).is_zero():
                return (s.big.names[a], s.big.names[b])
    return None


def _pair_hypothesis_homotopy(s: SDR, delta: TwoToZero):
    """Delta((K m1) m2) = (-1)^(|m1|) Delta(m1 (K m2)) on generator pairs."""
    sym2 = SymSpace(s.big, 2)
    degs = s.big.degrees
    d2 = TwoToZero(sym2, delta.table, delta.degree)
    for a in range(s.big.dim):
        for b in range(s.big.dim):
            km1 = s.K.apply(s.big.basis_vector(a))
            km2 = s.K.apply(s.big.basis_vector(b))
            sgn = -1 if degs[a] % 2 else 1
            elt = (sym2.inject(km1) * sym2.inject(s.big.basis_vector(b))
                   - (sym2.inject(s.big.basis_vector(a)) * sym2.inject(km2)).scale(sgn))
            if not d2.apply(elt).is_zero():
                return (s.big.names[a], s.big.names[b])
    return None


def build_sym_operators(s: SDR, wmax: int):
    """Operator-form symmetric power of an SDR (nothing materialized)."""
    sym_n = SymSpace(s.small, wmax)
    sym_m = SymSpace(s.big, wmax)
    ops = {
        "sym_n": sym_n,
        "sym_m": sym_m,
        "b": DerivationExt(s.b, sym_n),
        "d": DerivationExt(s.d, sym_m),
        "i": MorphismExt(s.i, sym_n, sym_m),
        "p": MorphismExt(s.p, sym_m, sym_n),
        "K": OpCompose(QOperator(s.i.compose(s.p), sym_m), DerivationExt(s.K, sym_m)),
    }
    return ops


def delta_k_sym_pair(delta: TwoToZero, ops) -> TwoToZero:
    """(Delta K^sym)_2: the 2-to-0 operator with pair values Delta K^sym(m1 m2)."""
    sym_m = ops["sym_m"]
    table = {}
    degs = sym_m.space.degrees
    for a in range(sym_m.space.dim):
        for b in range(a, sym_m.space.dim):
            if a == b and degs[a] % 2:
                continue
            word = sym_m.from_word([a, b])
            if word.is_zero():
                continue
            val = delta.apply(ops["K"].apply(word)).constant_part()
            if not val.is_zero():
                table[(a, b)] = val
    return TwoToZero(sym_m, table, delta.degree - 1)


def effective_two_to_zero(s: SDR, delta: TwoToZero, sym_n: SymSpace,
                          sym_m: SymSpace) -> TwoToZero:
    """p Delta i on Sym(N): pair values Delta(i(n1) i(n2))."""
    table = {}
    degs = s.small.degrees
    for a in range(s.small.dim):
        for b in range(a, s.small.dim):
            if a == b and degs[a] % 2:
                continue
            ia = sym_m.inject(s.i.apply(s.small.basis_vector(a)))
            ib = sym_m.inject(s.i.apply(s.small.basis_vector(b)))
            val = delta.apply(ia * ib).constant_part()
            if not val.is_zero():
                table[(a, b)] = val
    return TwoToZero(sym_n, table, delta.degree)


class PerturbationSeries:
    """Lazy A = (1 - delta K)^(-1) delta for operator-valued SDR data."""

    def __init__(self, delta_op: SymOp, k_op: SymOp, wkeep: int, hmax: int,
                 cap: int = None):
        self.delta_op = delta_op
        self.k_op = k_op
        self.wkeep = wkeep
        self.hmax = hmax
        self.cap = cap if cap is not None else _flow_cap(wkeep, hmax) * 2

    def apply_A(self, x: SymElement) -> SymElement:
        term = phi_truncate(self.delta_op.apply(x), self.wkeep, self.hmax)
        acc = term
        n = 0
        while not term.is_zero():
            term = phi_truncate(
                self.delta_op.apply(self.k_op.apply(term)), self.wkeep, self.hmax)
            acc = acc + term
            n += 1
            if n > self.cap:
                raise HypothesisFailed("perturbation series did not terminate")
        return acc


def free_transfer(s: SDR, delta: TwoToZero, wmax: int, hmax: int,
                  cross_check: bool = True) -> dict:
    """Effective BV package of a free theory: (Sym(N), b, p Delta i).

    The closed forms b_h = b + hbar p Delta i, i_h = i and
    p_h = p e^(hbar (Delta K^sym)_2) are compared map-by-map against the
    generic perturbation-lemma route applied to the symmetric-power SDR.
    """
    witness = _pair_hypothesis_free(s, delta)
    if witness is not None:
        raise HypothesisFailed(f"Delta d(m1 m2) != 0 on generator pair {witness}")
    from .symalg import sym_sdr as build_sym_sdr
    sym = build_sym_sdr(s, wmax)
    sym_n, sym_m = sym.sym_small, sym.sym_big
    delta_w = TwoToZero(sym_m, delta.table, delta.degree)
    ops = build_sym_operators(s, wmax)
    g2 = delta_k_sym_pair(delta_w, ops)
    delta_n = effective_two_to_zero(s, delta_w, sym_n, sym_m)

    b_h = sym.b + linmap_of_op(OpScale(delta_n, Scalar.hbar()), sym_n)
    exp_op_cols = {}
    for j, mono in enumerate(sym_m.monomials()):
        img = op_exp(OpScale(g2, Scalar.hbar()),
                     SymElement(sym_m, {mono: Scalar.one()}))
        img = ops["p"].apply(img)
        if not img.is_zero():
            exp_op_cols[j] = {sym_n.monomial_index(m): c for m, c in img.terms.items()}
    p_h = LinMap(sym_m.graded_space(), sym_n.graded_space(), 0, exp_op_cols)

    report = {"closed_vs_generic": True}
    if cross_check:
        delta_lin = linmap_of_op(OpScale(delta_w, Scalar.hbar()), sym_m)
        res = perturb(sym, certify(sym, delta_lin), verify=True)
        report["closed_vs_generic"] = (res.b == b_h and res.i == sym.i
                                       and res.p == p_h)
        if not report["closed_vs_generic"]:
            raise AssertionError(
                "free transfer closed forms disagree with the generic "
                "perturbation route")
    effective = DiffBVAlgebra(sym_n, DerivationExt(s.b, sym_n), delta_n)
    return {"effective": effective, "b_h": b_h, "p_h": p_h, "i_h": sym.i,
            "g2": g2, "delta_n": delta_n, "sym_sdr": sym, "report": report}


def interactive_transfer(s: SDR, delta: TwoToZero, i_elt: SymElement,
                         wmax: int, hmax: int, cross_check: bool = True,
                         hrg_check: bool = True) -> dict:
    """Effective interactive theory: I_eff and the transferred maps.

    Works in the enlarged word window wmax + 2(hmax+1) so that every
    comparison at (hmax, wmax) is exact; the closed forms

        I_eff      = p W((Delta K^sym)_2, I)
        p_int(x)   = p W((Delta K^sym)_2, I, x)
        b_int      = b + hbar p Delta i + {I_eff, -}

    are compared column-by-column against the generic perturbation route
    with perturbation hbar Delta + {I, -}.
    """
    w_big = wmax + 2 * (hmax + 1)
    witness = _pair_hypothesis_free(s, delta)
    if witness is not None:
        raise HypothesisFailed(f"Delta d(m1 m2) != 0 on generator pair {witness}")
    witness = _pair_hypothesis_homotopy(s, delta)
    if witness is not None:
        raise HypothesisFailed(
            f"Delta((K m1) m2) = +/- Delta(m1 K m2) fails on {witness}")
    ops = build_sym_operators(s, w_big)
    sym_n, sym_m = ops["sym_n"], ops["sym_m"]
    if i_elt.sym.space != s.big:
        raise StructuralError("interaction must live on Sym of the big space")
    i_big = SymElement(sym_m, dict(i_elt.terms))
    ActionFunctional(i_big, klass="plus")

    big_bv = DiffBVAlgebra(sym_m, ops["d"], TwoToZero(sym_m, delta.table, delta.degree))
    res_qme = restrict_window(qme_residual(big_bv, i_big), wmax, hmax)
    if not res_qme.is_zero():
        raise HypothesisFailed("interaction does not satisfy the QME at truncation")

    g2 = delta_k_sym_pair(big_bv.delta, ops)
    delta_n = effective_two_to_zero(s, big_bv.delta, sym_n, sym_m)

    i_eff_big = hrg_w(g2, i_big, wkeep=wmax, hmax=hmax, check=hrg_check)
    i_eff = ops["p"].apply(i_eff_big)

    b_n = DerivationExt(s.b, sym_n)
    b_int_op = OpSum(b_n, OpScale(delta_n, Scalar.hbar()),
                     BracketWith(delta_n, i_eff))

    def p_int(x: SymElement) -> SymElement:
        return ops["p"].apply(hrg_w2(g2, i_big, x, wkeep=wmax, hmax=hmax,
                                     check=False))

    effective = DiffBVAlgebra(sym_n, b_n, delta_n)
    res_eff = restrict_window(qme_residual(effective, i_eff), wmax, hmax)
    if not res_eff.is_zero():
        raise QMEViolated("I_eff fails the effective QME; engine inconsistency")

    report = {"b_match": True, "p_match": True}
    delta_op = OpSum(OpScale(big_bv.delta, Scalar.hbar()),
                     BracketWith(big_bv.delta, i_big))
    series = PerturbationSeries(delta_op, ops["K"], w_big, hmax)

    def generic_b(x: SymElement) -> SymElement:
        return b_n.apply(x) + ops["p"].apply(series.apply_A(ops["i"].apply(x)))

    def generic_p(x: SymElement) -> SymElement:
        return ops["p"].apply(x) + ops["p"].apply(series.apply_A(ops["K"].apply(x)))

    def generic_i(x: SymElement) -> SymElement:
        return ops["i"].apply(x) + ops["K"].apply(series.apply_A(ops["i"].apply(x)))

    def generic_k(x: SymElement) -> SymElement:
        return ops["K"].apply(x) + ops["K"].apply(series.apply_A(ops["K"].apply(x)))

    if cross_check:
        for mono in sym_n.monomials():
            if len(mono) > wmax:
                continue
            x = SymElement(sym_n, {mono: Scalar.one()})
            lhs = restrict_window(b_int_op.apply(x), wmax, hmax)
            rhs = restrict_window(generic_b(x), wmax, hmax)
            if lhs != rhs:
                report["b_match"] = False
                report["b_witness"] = sym_n.monomial_name(mono)
                break
        for mono in sym_m.monomials():
            if len(mono) > wmax:
                continue
            x = SymElement(sym_m, {mono: Scalar.one()})
            lhs = restrict_window(p_int(x), wmax, hmax)
            rhs = restrict_window(generic_p(x), wmax, hmax)
            if lhs != rhs:
                report["p_match"] = False
                report["p_witness"] = sym_m.monomial_name(mono)
                break
        if not (report["b_match"] and report["p_match"]):
            raise AssertionError(
                f"interactive transfer closed forms disagree with the generic "
                f"route: {report}")
    return {"i_eff": i_eff, "effective": effective, "b_int_op": b_int_op,
            "p_int": p_int, "g2": g2, "delta_n": delta_n, "ops": ops,
            "generic": {"b": generic_b, "p": generic_p, "i": generic_i,
                        "K": generic_k},
            "report": report}


# -- the scale-change conjugation (finite analog of the RG relation) --------------

def rg_conjugation_check(sym: SymSpace, q_op: SymOp, delta_eps: TwoToZero,
                         p_table: TwoToZero, wcheck: int = None) -> dict:
    """With Delta_L = Delta_e + [d_P, Q] on pairs, conjugation by e^(hbar d_P)
    carries Q + hbar Delta_e to Q + hbar Delta_L exactly at truncation."""
    wcheck = wcheck if wcheck is not None else sym.wmax
    bracket_table = {}
    degs = sym.space.degrees
    for a in range(sym.space.dim):
        for b in range(a, sym.space.dim):
            if a == b and degs[a] % 2:
                continue
            word = sym.from_word([a, b])
            if word.is_zero():
                continue
            val = p_table.apply(q_op.apply(word)).constant_part()
            if not val.is_zero():
                bracket_table[(a, b)] = val
    delta_lambda = delta_eps + TwoToZero(sym, bracket_table, delta_eps.degree)
    lhs_op = OpSum(q_op, OpScale(delta_eps, Scalar.hbar()))
    rhs_op = OpSum(q_op, OpScale(delta_lambda, Scalar.hbar()))
    ok = True
    witness = None
    for mono in sym.monomials():
        if len(mono) > wcheck:
            continue
        x = SymElement(sym, {mono: Scalar.one()})
        lhs = op_exp(OpScale(p_table, Scalar.hbar()), lhs_op.apply(
            op_exp(OpScale(p_table, Scalar.hbar(1)).scale(-1), x)))
        rhs = rhs_op.apply(x)
        if lhs != rhs:
            ok = False
            witness = sym.monomial_name(mono)
            break
    return {"pass": ok, "witness": witness,
            "delta_lambda": delta_lambda}
