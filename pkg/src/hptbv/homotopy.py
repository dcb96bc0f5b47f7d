"""Special deformation retracts and the homological perturbation lemma.

An SDR is the five-map datum

    (N, b)  <-- p --  (M, d),  K
            -- i -->

with p i = 1, i p - 1 = d K + K d, p K = 0, K i = 0, K^2 = 0.  Perturbing d
by a certified-small delta updates the whole datum in closed form:

    A   = (1 - delta K)^(-1) delta
    b1  = b + p A i,   i1 = i + K A i,   p1 = p + p A K,   K1 = K + K A K.

Smallness is certified by discovered nilpotency of (delta K) within the
truncation window; inputs without a certificate are rejected (NotSmall).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .scalars import Scalar
from .spaces import (GradedSpace, LinMap, StructuralError, dual_map,
                     invert_linmap)


class NotSmall(Exception):
    """No nilpotency/filtration certificate for (1 - delta K)^(-1)."""


class NonInvertible(Exception):
    """A map the theory guarantees invertible failed inversion."""


@dataclass
class SDR:
    small: GradedSpace
    big: GradedSpace
    b: LinMap  # degree 1 on small
    d: LinMap  # degree 1 on big
    i: LinMap  # degree 0, small -> big
    p: LinMap  # degree 0, big -> small
    K: LinMap  # degree -1 on big
    sym_small: object = field(default=None, repr=False, compare=False)
    sym_big: object = field(default=None, repr=False, compare=False)

    @property
    def small_space(self):
        return self.small

    @property
    def big_space(self):
        return self.big

    def maps(self):
        return {"b": self.b, "d": self.d, "i": self.i, "p": self.p, "K": self.K}

    def equal_maps(self, other: "SDR") -> bool:
        return all(self.maps()[k] == other.maps()[k] for k in ("b", "d", "i", "p", "K"))


def _structural_check(s: SDR):
    if s.b.degree != 1 or s.d.degree != 1:
        raise StructuralError("differentials must have degree 1")
    if s.i.degree != 0 or s.p.degree != 0 or s.K.degree != -1:
        raise StructuralError("i, p must have degree 0 and K degree -1")
    if (s.i.source, s.i.target) != (s.small, s.big):
        raise StructuralError("i must map small -> big")
    if (s.p.source, s.p.target) != (s.big, s.small):
        raise StructuralError("p must map big -> small")
    for f, sp in ((s.b, s.small), (s.d, s.big), (s.K, s.big)):
        if (f.source, f.target) != (sp, sp):
            raise StructuralError("b, d, K must be endomorphisms")
    for name, f in s.maps().items():
        ok, witness = f.check_degree()
        if not ok:
            raise StructuralError(f"map {name} is not degree-homogeneous at {witness}")


def verify_sdr(s: SDR) -> dict:
    """Exact evaluation of all SDR identities; failures carry a basis witness."""
    _structural_check(s)
    id_small = LinMap.identity(s.small)
    id_big = LinMap.identity(s.big)
    zero_sm = LinMap.zero(s.small, s.big, -1)

    checks = {
        "b_squared": (s.b.compose(s.b), LinMap.zero(s.small, s.small, 2)),
        "d_squared": (s.d.compose(s.d), LinMap.zero(s.big, s.big, 2)),
        "chain_p": (s.p.compose(s.d), s.b.compose(s.p)),
        "chain_i": (s.d.compose(s.i), s.i.compose(s.b)),
        "pi": (s.p.compose(s.i), id_small),
        "ip": (s.i.compose(s.p) - id_big,
               s.d.compose(s.K) + s.K.compose(s.d)),
        "pK": (s.p.compose(s.K), LinMap.zero(s.big, s.small, -1)),
        "Ki": (s.K.compose(s.i), zero_sm),
        "KK": (s.K.compose(s.K), LinMap.zero(s.big, s.big, -2)),
    }
    report = {}
    for name, (lhs, rhs) in checks.items():
        witness = lhs.first_difference(rhs)
        report[name] = {"pass": witness is None}
        if witness is not None:
            report[name]["witness"] = witness
    report["pass"] = all(v["pass"] for k, v in report.items() if k != "pass")
    return report


def assert_sdr(s: SDR, context: str = ""):
    rep = verify_sdr(s)
    if not rep["pass"]:
        bad = {k: v for k, v in rep.items() if k != "pass" and not v["pass"]}
        raise AssertionError(f"SDR identities failed{' in ' + context if context else ''}: {bad}")


@dataclass
class Perturbation:
    """delta plus its smallness certificate.

    certificate: ("nilpotent", n) with (delta K)^n = 0, discovered by
    iteration, or ("declared", note) for a filtration argument that is then
    still confirmed by iteration within the window.
    """
    delta: LinMap
    certificate: tuple = None

    def is_zero(self):
        return self.delta.is_zero()


def certify(s: SDR, delta: LinMap, cap: int = None) -> Perturbation:
    """Find a nilpotency order for (delta K); raise NotSmall at the cap."""
    if delta.degree != 1 or (delta.source, delta.target) != (s.big, s.big):
        raise StructuralError("perturbation must be a degree 1 endomorphism of M")
    d1 = s.d + delta
    if not d1.compose(d1).is_zero():
        raise StructuralError("(d + delta)^2 != 0")
    if cap is None:
        span = 1
        for col in delta.columns.values():
            for c in col.values():
                span = max(span, c.order - c.floor + 1)
        cap = s.big.dim * span + 4
    dk = delta.compose(s.K)
    power = dk
    n = 1
    while not power.is_zero():
        power = dk.compose(power)
        n += 1
        if n > cap:
            raise NotSmall(f"(delta K)^n not zero for n <= {cap}")
    return Perturbation(delta=delta, certificate=("nilpotent", n))


def _series_apply(dk: LinMap, nil_order: int):
    """(1 - delta K)^(-1) = sum (delta K)^m as an explicit LinMap."""
    acc = LinMap.identity(dk.source)
    power = LinMap.identity(dk.source)
    for _ in range(nil_order):
        power = dk.compose(power)
        if power.is_zero():
            break
        acc = acc + power
    return acc


def perturb(s: SDR, pert: Perturbation | LinMap, verify: bool = True) -> SDR:
    """Homological perturbation lemma, all series evaluated exactly."""
    if isinstance(pert, LinMap):
        pert = certify(s, pert)
    delta = pert.delta
    if pert.certificate is None or pert.certificate[0] != "nilpotent":
        # declared filtration certificates are still confirmed by iteration
        pert = certify(s, delta)
    nil = pert.certificate[1]
    inv = _series_apply(delta.compose(s.K), nil)  # (1 - delta K)^(-1)
    a_map = inv.compose(delta)                    # A = (1 - delta K)^(-1) delta
    out = SDR(
        small=s.small,
        big=s.big,
        b=s.b + s.p.compose(a_map).compose(s.i),
        d=s.d + delta,
        i=s.i + s.K.compose(a_map).compose(s.i),
        p=s.p + s.p.compose(a_map).compose(s.K),
        K=s.K + s.K.compose(a_map).compose(s.K),
    )
    out.sym_small = s.sym_small
    out.sym_big = s.sym_big
    if verify:
        assert_sdr(out, "perturbed SDR")
    return out


def check_projection_preserved(s: SDR, pert: Perturbation | LinMap) -> dict:
    """Equivalence triple (p delta K = 0, p1 = p, p delta = p delta i p)."""
    if isinstance(pert, LinMap):
        pert = certify(s, pert)
    delta = pert.delta
    res = perturb(s, pert, verify=False)
    a = s.p.compose(delta).compose(s.K).is_zero()
    b = res.p == s.p
    pd = s.p.compose(delta)
    c = pd == pd.compose(s.i).compose(s.p)
    if not (a == b == c):
        raise AssertionError(
            f"projection-preservation triple disagrees: ({a}, {b}, {c}); engine bug")
    return {"p_delta_K_zero": a, "p_unchanged": b, "p_delta_factors": c,
            "value": a}


def check_injection_preserved(s: SDR, pert: Perturbation | LinMap) -> dict:
    """Equivalence triple (K delta i = 0, i1 = i, i p delta i = delta i)."""
    if isinstance(pert, LinMap):
        pert = certify(s, pert)
    delta = pert.delta
    res = perturb(s, pert, verify=False)
    a = s.K.compose(delta).compose(s.i).is_zero()
    b = res.i == s.i
    di = delta.compose(s.i)
    c = s.i.compose(s.p).compose(di) == di
    if not (a == b == c):
        raise AssertionError(
            f"injection-preservation triple disagrees: ({a}, {b}, {c}); engine bug")
    return {"K_delta_i_zero": a, "i_unchanged": b, "delta_i_factors": c,
            "value": a}


def two_step_equals_one_step(s: SDR, delta1: LinMap, delta2: LinMap) -> dict:
    """Associativity of perturbation: perturbing by delta1 + delta2 at once
    equals perturbing by delta1 and then by delta2."""
    one = perturb(s, certify(s, delta1 + delta2), verify=False)
    first = perturb(s, certify(s, delta1), verify=False)
    second = perturb(first, certify(first, delta2), verify=False)
    report = {}
    for name in ("b", "d", "i", "p", "K"):
        witness = one.maps()[name].first_difference(second.maps()[name])
        report[name] = {"pass": witness is None}
        if witness is not None:
            report[name]["witness"] = witness
    report["pass"] = all(v["pass"] for k, v in report.items() if k != "pass")
    return report


def dual_sdr(s: SDR) -> SDR:
    """Dual construction: roles of i*, p* swap and the homotopy flips sign."""
    return SDR(
        small=s.small.dual(),
        big=s.big.dual(),
        b=dual_map(s.b),
        d=dual_map(s.d),
        i=dual_map(s.p),
        p=dual_map(s.i),
        K=dual_map(s.K).scale(-1),
    )


def exp_nilpotent_linmap(nu: LinMap, cap: int = 64) -> LinMap:
    """exp of a nilpotent endomorphism, exact."""
    from fractions import Fraction
    acc = LinMap.identity(nu.source)
    term = LinMap.identity(nu.source)
    k = 0
    while True:
        k += 1
        term = nu.compose(term).scale(Fraction(1, k))
        if term.is_zero():
            return acc
        acc = acc + term
        if k > cap:
            raise NotSmall("exp series did not terminate; map not nilpotent")


def conjugation_perturb(s: SDR, u: LinMap, u_inv: LinMap = None) -> dict:
    """Perturb by d_U - d for a conjugation U, checking the two Propositions.

    When p U^(-1) K = 0, the conjugated SDR's differential is similar to b via
    W = (p U^(-1) i)^(-1) and the projection is W p U^(-1).  Symmetrically,
    when K U i = 0 the injection is U i W^(-1) with W = p U i.
    """
    if u.degree != 0 or (u.source, u.target) != (s.big, s.big):
        raise StructuralError("conjugation must be a degree 0 endomorphism of M")
    if u_inv is None:
        u_inv = invert_linmap(u)
    d_u = u.compose(s.d).compose(u_inv)
    delta = d_u - s.d
    res = perturb(s, certify(s, delta), verify=False)
    out = {"sdr": res, "projection_variant": None, "injection_variant": None}

    if s.p.compose(u_inv).compose(s.K).is_zero():
        core = s.p.compose(u_inv).compose(s.i)
        try:
            w = invert_linmap(core)
        except StructuralError as exc:
            raise NonInvertible(
                "p U^-1 K = 0 but p U^-1 i is singular; contradicts the "
                "conjugation proposition") from exc
        ok_b = res.b == w.compose(s.b).compose(invert_linmap(w))
        ok_p = res.p == w.compose(s.p).compose(u_inv)
        out["projection_variant"] = {"W": w, "b_similar": ok_b, "p_formula": ok_p}
        if not (ok_b and ok_p):
            raise AssertionError("conjugation proposition (projection) failed; engine bug")

    if s.K.compose(u).compose(s.i).is_zero():
        w = s.p.compose(u).compose(s.i)
        try:
            w_inv = invert_linmap(w)
        except StructuralError as exc:
            raise NonInvertible(
                "K U i = 0 but p U i is singular; contradicts the "
                "conjugation proposition") from exc
        ok_b = res.b == w.compose(s.b).compose(w_inv)
        ok_i = res.i == u.compose(s.i).compose(w_inv)
        out["injection_variant"] = {"W": w, "b_similar": ok_b, "i_formula": ok_i}
        if not (ok_b and ok_i):
            raise AssertionError("conjugation proposition (injection) failed; engine bug")
    return out


def identity_sdr(space: GradedSpace, differential: LinMap) -> SDR:
    """Degenerate SDR with N = M, i = p = 1, K = 0."""
    return SDR(small=space, big=space, b=differential, d=differential,
               i=LinMap.identity(space), p=LinMap.identity(space),
               K=LinMap.zero(space, space, -1))
