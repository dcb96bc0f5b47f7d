"""Seeded random instances: SDRs, perturbations, BV data, QME solutions.

All randomness flows through a caller-supplied `random.Random`, so scenario
runs are reproducible from their documented seed lists.  Every instance is
exact: smallness certificates are discovered, never assumed, and QME
solutions are built on a differential-closed, contraction-isotropic set of
generators so the master equation holds identically.
"""

from __future__ import annotations

import itertools
import random
from fractions import Fraction

from .scalars import Scalar
from .spaces import GradedSpace, LinMap, rational_nullspace
from .symalg import SymSpace, TwoToZero
from .homotopy import SDR, NotSmall, certify, exp_nilpotent_linmap


def _rand_frac(rng: random.Random, lo=-3, hi=3, den=(1, 2)):
    num = rng.randint(lo, hi)
    return Fraction(num, rng.choice(den))


def _random_unitriangular(rng, dim):
    """Random integer matrix with unit determinant (L * U, unitriangular)."""
    low = [[Fraction(1 if i == j else 0) for j in range(dim)] for i in range(dim)]
    up = [[Fraction(1 if i == j else 0) for j in range(dim)] for i in range(dim)]
    for i in range(dim):
        for j in range(i):
            low[i][j] = Fraction(rng.randint(-2, 2))
            up[j][i] = Fraction(rng.randint(-2, 2))
    return [[sum(low[i][k] * up[k][j] for k in range(dim)) for j in range(dim)]
            for i in range(dim)]


def random_degree0_automorphism(rng, space: GradedSpace) -> LinMap:
    """Block-diagonal (per degree) exact invertible map with unit determinant."""
    cols = {}
    by_degree = {}
    for idx, d in enumerate(space.degrees):
        by_degree.setdefault(d, []).append(idx)
    for idxs in by_degree.values():
        block = _random_unitriangular(rng, len(idxs))
        for c, j in enumerate(idxs):
            col = {}
            for r, i in enumerate(idxs):
                if block[r][c] != 0:
                    col[i] = Scalar.of(block[r][c])
            cols[j] = col
    return LinMap(space, space, 0, cols)


def random_degree0_nilpotent(rng, space: GradedSpace, density=0.5) -> LinMap:
    """Strictly triangular within each degree block: nilpotent, degree 0."""
    cols = {}
    by_degree = {}
    for idx, d in enumerate(space.degrees):
        by_degree.setdefault(d, []).append(idx)
    for idxs in by_degree.values():
        for a, j in enumerate(idxs):
            for b, i in enumerate(idxs):
                if b < a and rng.random() < density:
                    cols.setdefault(j, {})[i] = Scalar.of(_rand_frac(rng))
    return LinMap(space, space, 0, cols)


def random_sdr(rng: random.Random, max_dim: int = 6, degree_span=(-1, 2),
               conjugate: bool = True) -> SDR:
    """Random SDR with dim(M) <= max_dim, exact over Q.

    Construction: N = harmonic generators + contractible pairs, M = N + more
    contractible pairs, then both sides are twisted by random exact
    automorphisms so nothing stays in normal form.
    """
    lo, hi = degree_span
    n_harm = rng.randint(1, 2)
    n_pairs_small = rng.randint(0, 1)
    room = max_dim - (n_harm + 2 * n_pairs_small)
    n_pairs_big = max(1, room // 2)

    basis_n = []
    b_entries = []
    for k in range(n_harm):
        basis_n.append((f"h{k}", rng.randint(lo, hi)))
    for k in range(n_pairs_small):
        dg = rng.randint(lo, hi - 1)
        basis_n.append((f"x{k}", dg))
        basis_n.append((f"y{k}", dg + 1))
        b_entries.append((f"x{k}", f"y{k}", 1))
    small = GradedSpace(basis_n, label="N")
    b = LinMap.from_entries(small, small, 1, b_entries)

    basis_m = list(basis_n)
    d_entries = list(b_entries)
    k_entries = []
    for k in range(n_pairs_big):
        dg = rng.randint(lo, hi - 1)
        basis_m.append((f"a{k}", dg))
        basis_m.append((f"c{k}", dg + 1))
        d_entries.append((f"a{k}", f"c{k}", 1))
        k_entries.append((f"c{k}", f"a{k}", -1))
    big = GradedSpace(basis_m, label="M")
    d = LinMap.from_entries(big, big, 1, d_entries)
    K = LinMap.from_entries(big, big, -1, k_entries)
    i = LinMap.from_entries(small, big, 0, [(nm, nm, 1) for nm, _ in basis_n])
    p = LinMap.from_entries(big, small, 0, [(nm, nm, 1) for nm, _ in basis_n])

    s = SDR(small=small, big=big, b=b, d=d, i=i, p=p, K=K)
    if not conjugate:
        return s
    from .spaces import invert_linmap
    u = random_degree0_automorphism(rng, big)
    v = random_degree0_automorphism(rng, small)
    u_inv = invert_linmap(u)
    v_inv = invert_linmap(v)
    return SDR(
        small=small, big=big,
        b=v.compose(b).compose(v_inv),
        d=u.compose(d).compose(u_inv),
        i=u.compose(i).compose(v_inv),
        p=v.compose(p).compose(u_inv),
        K=u.compose(K).compose(u_inv),
    )


def random_perturbation(rng: random.Random, s: SDR, tries: int = 20):
    """Certified-small perturbation of d, built from a nilpotent conjugation
    so that (d + delta)^2 = 0 holds by construction."""
    for _ in range(tries):
        nu = random_degree0_nilpotent(rng, s.big)
        if nu.is_zero():
            continue
        u = exp_nilpotent_linmap(nu)
        u_inv = exp_nilpotent_linmap(nu.scale(-1))
        delta = u.compose(s.d).compose(u_inv) - s.d
        if delta.is_zero():
            continue
        try:
            return certify(s, delta), nu
        except NotSmall:
            continue
    zero = LinMap.zero(s.big, s.big, 1)
    return certify(s, zero), LinMap.zero(s.big, s.big, 0)


def split_perturbation(rng: random.Random, s: SDR, nu: LinMap):
    """Two deltas whose sum is the nu-conjugation perturbation, each valid on
    its own route (the first is a conjugation by exp(nu/2))."""
    half = nu.scale(Fraction(1, 2))
    u1 = exp_nilpotent_linmap(half)
    u1_inv = exp_nilpotent_linmap(half.scale(-1))
    u = exp_nilpotent_linmap(nu)
    u_inv = exp_nilpotent_linmap(nu.scale(-1))
    delta1 = u1.compose(s.d).compose(u1_inv) - s.d
    delta_total = u.compose(s.d).compose(u_inv) - s.d
    return delta1, delta_total - delta1


# -- BV / transfer instances ---------------------------------------------------

def _sym2_rows(sym2: SymSpace, elt, unknown_pairs):
    """Constraint row: coefficients of a Sym^2 element against the unknown
    pair table.  Pairs of the wrong degree carry a zero table value, so their
    coefficients drop out."""
    row = [Fraction(0)] * len(unknown_pairs)
    lookup = {pair: k for k, pair in enumerate(unknown_pairs)}
    for mono, c in elt.terms.items():
        k = lookup.get(mono)
        if k is not None:
            row[k] += c.constant()
    return row


def solve_delta_table(s: SDR, isotropic: set = frozenset(), compat_k: bool = True):
    """All degree-1 pair tables with [Q, Delta] = 0 (pair form) and, when
    compat_k, the homotopy compatibility Delta((K m1) m2) = +/- Delta(m1 K m2).

    Returns (unknown_pairs, nullspace basis vectors over Q).
    """
    space = s.big
    sym2 = SymSpace(space, 2)
    degs = space.degrees
    unknown = []
    for a in range(space.dim):
        for bdx in range(a, space.dim):
            if a == bdx and degs[a] % 2:
                continue
            if degs[a] + degs[bdx] != -1:
                continue
            unknown.append((a, bdx))
    if not unknown:
        return [], []
    rows = []

    def vec(idx):
        return space.basis_vector(idx)

    for a in range(space.dim):
        for bdx in range(a, space.dim):
            if a == bdx and degs[a] % 2:
                continue
            # Delta d^der (m1 m2) = 0
            dm1 = s.d.apply(vec(a))
            dm2 = s.d.apply(vec(bdx))
            sgn = -1 if degs[a] % 2 else 1
            elt = (sym2.inject(dm1) * sym2.inject(vec(bdx))
                   + (sym2.inject(vec(a)) * sym2.inject(dm2)).scale(sgn))
            rows.append(_sym2_rows(sym2, elt, unknown))
            if compat_k:
                km1 = s.K.apply(vec(a))
                km2 = s.K.apply(vec(bdx))
                elt2 = (sym2.inject(km1) * sym2.inject(vec(bdx))
                        - (sym2.inject(vec(a)) * sym2.inject(km2)).scale(sgn))
                rows.append(_sym2_rows(sym2, elt2, unknown))
    for k, pair in enumerate(unknown):
        if pair[0] in isotropic and pair[1] in isotropic:
            row = [Fraction(0)] * len(unknown)
            row[k] = Fraction(1)
            rows.append(row)
    return unknown, rational_nullspace(rows)


def random_transfer_instance(rng: random.Random, hmax: int, wmax: int,
                             max_dim: int = 4, want_interaction: bool = True,
                             tries: int = 40):
    """SDR + compatible 2-to-0 Delta + exact QME solution I.

    The SDR is kept in normal form (randomness lives in Delta and I); I is
    supported on differential-closed generators on which Delta vanishes, so
    Q I = Delta I = {I, I} = 0 identically.
    """
    for _ in range(tries):
        s = random_sdr(rng, max_dim=max_dim, degree_span=(-1, 1), conjugate=False)
        closed = [idx for idx in range(s.big.dim)
                  if not s.d.columns.get(idx)]
        even_zero = [idx for idx in closed if s.big.degrees[idx] == 0]
        if not even_zero:
            continue
        support = set(rng.sample(closed, k=min(len(closed),
                                               1 + rng.randint(1, 2))))
        support |= {rng.choice(even_zero)}
        unknown, null = solve_delta_table(s, isotropic=support, compat_k=True)
        if not null:
            continue
        coeffs = [Fraction(rng.randint(-2, 2)) for _ in null]
        table_vec = [sum(c * v[k] for c, v in zip(coeffs, null))
                     for k in range(len(unknown))]
        table = {pair: Scalar.of(val) for pair, val in zip(unknown, table_vec)
                 if val != 0}
        if not table:
            continue
        big_window = wmax + 2 * (hmax + 1)
        sym_big = SymSpace(s.big, big_window)
        delta = TwoToZero(sym_big, table, 1)
        interaction = sym_big.zero()
        if want_interaction:
            support_even0 = [idx for idx in support if s.big.degrees[idx] == 0]
            if not support_even0:
                continue
            nterms = rng.randint(1, 2)
            for _ in range(nterms):
                w = rng.randint(3, min(4, wmax))
                word = [rng.choice(support_even0) for _ in range(w)]
                interaction = interaction + sym_big.from_word(
                    word, Scalar.of(_rand_frac(rng, -2, 2)))
            if rng.random() < 0.5:
                w = rng.randint(1, 2)
                word = [rng.choice(support_even0) for _ in range(w)]
                interaction = interaction + sym_big.from_word(
                    word, Scalar.hbar().scale(_rand_frac(rng, -2, 2)))
            if interaction.is_zero():
                continue
        return s, delta, interaction, sym_big
    raise RuntimeError("could not build a transfer instance; widen the search")
