"""Truncated formal power / Laurent series in hbar with exact rational coefficients.

Every algebraic computation in the package runs over this ring.  A Scalar
keeps coefficients for hbar powers in the window [floor, order]; products
truncate above `order` and the truncation is idempotent.  `floor` is 0 for
ordinary power series and negative only inside intermediate renormalization
bookkeeping; final results are expected to be integral (no negative powers).
"""

from __future__ import annotations

from fractions import Fraction

DEFAULT_ORDER = 4


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"cannot coerce {x!r} to an exact rational")


class Scalar:
    """Element of Q[[hbar]] / hbar^(order+1), optionally with a Laurent floor."""

    __slots__ = ("coeffs", "order", "floor")

    def __init__(self, coeffs=None, order: int = DEFAULT_ORDER, floor: int = 0):
        self.order = order
        self.floor = floor
        data = {}
        if coeffs:
            for k, v in coeffs.items():
                v = _frac(v)
                if v == 0:
                    continue
                if k < floor:
                    raise ValueError(f"hbar power {k} below window floor {floor}")
                if k <= order:
                    data[k] = v
        self.coeffs = data

    # -- constructors ------------------------------------------------------
    @classmethod
    def of(cls, value, order: int = DEFAULT_ORDER, floor: int = 0) -> "Scalar":
        return cls({0: _frac(value)}, order=order, floor=floor)

    @classmethod
    def zero(cls, order: int = DEFAULT_ORDER, floor: int = 0) -> "Scalar":
        return cls({}, order=order, floor=floor)

    @classmethod
    def one(cls, order: int = DEFAULT_ORDER, floor: int = 0) -> "Scalar":
        return cls({0: Fraction(1)}, order=order, floor=floor)

    @classmethod
    def hbar(cls, power: int = 1, order: int = DEFAULT_ORDER, floor: int = 0) -> "Scalar":
        if power < floor:
            floor = power
        return cls({power: Fraction(1)}, order=order, floor=floor)

    # -- window bookkeeping -------------------------------------------------
    def _join(self, other: "Scalar"):
        return min(self.order, other.order), min(self.floor, other.floor)

    def with_window(self, order=None, floor=None) -> "Scalar":
        order = self.order if order is None else order
        floor = self.floor if floor is None else floor
        return Scalar({k: v for k, v in self.coeffs.items() if floor <= k <= order},
                      order=order, floor=floor)

    # -- ring operations ----------------------------------------------------
    def __add__(self, other):
        other = self._coerce(other)
        order, floor = self._join(other)
        data = dict(self.coeffs)
        for k, v in other.coeffs.items():
            data[k] = data.get(k, Fraction(0)) + v
        return Scalar(data, order=order, floor=floor)

    __radd__ = __add__

    def __neg__(self):
        return Scalar({k: -v for k, v in self.coeffs.items()},
                      order=self.order, floor=self.floor)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        order = min(self.order, other.order)
        floor = self.floor + other.floor
        data = {}
        for k1, v1 in self.coeffs.items():
            for k2, v2 in other.coeffs.items():
                k = k1 + k2
                if k > order:
                    continue
                if k < floor:
                    raise ValueError(
                        f"product fell below Laurent floor {floor} (power {k})")
                data[k] = data.get(k, Fraction(0)) + v1 * v2
        return Scalar(data, order=order, floor=floor)

    __rmul__ = __mul__

    def _coerce(self, other) -> "Scalar":
        if isinstance(other, Scalar):
            return other
        return Scalar({0: _frac(other)}, order=self.order, floor=self.floor)

    def scale(self, rational) -> "Scalar":
        c = _frac(rational)
        return Scalar({k: v * c for k, v in self.coeffs.items()},
                      order=self.order, floor=self.floor)

    def shift(self, powers: int) -> "Scalar":
        """Multiply by hbar**powers (powers may be negative)."""
        floor = min(self.floor, self.floor + powers)
        data = {}
        for k, v in self.coeffs.items():
            k2 = k + powers
            if k2 <= self.order:
                data[k2] = v
        return Scalar(data, order=self.order, floor=floor)

    def inverse(self) -> "Scalar":
        """Series inverse; the lowest-power coefficient must be nonzero."""
        if not self.coeffs:
            raise ZeroDivisionError("inverse of zero Scalar")
        low = min(self.coeffs)
        c0 = self.coeffs[low]
        # self = hbar^low * c0 * (1 + n)  with n of strictly positive valuation;
        # invert the (1 + n) factor by the alternating geometric series.
        n = {k - low: v / c0 for k, v in self.coeffs.items() if k != low}
        span = self.order - self.floor
        inv = {0: Fraction(1)}
        power = {0: Fraction(1)}
        sign = 1
        for _ in range(span):
            nxt = {}
            for k1, v1 in power.items():
                for k2, v2 in n.items():
                    k = k1 + k2
                    if k <= span:
                        nxt[k] = nxt.get(k, Fraction(0)) + v1 * v2
            power = {k: v for k, v in nxt.items() if v != 0}
            if not power:
                break
            sign = -sign
            for k, v in power.items():
                inv[k] = inv.get(k, Fraction(0)) + sign * v
        floor = min(self.floor, -low)
        out = {}
        for k, v in inv.items():
            kk = k - low
            if floor <= kk <= self.order and v != 0:
                out[kk] = v / c0
        return Scalar(out, order=self.order, floor=floor)

    # -- queries -------------------------------------------------------------
    def is_zero(self) -> bool:
        return not self.coeffs

    def is_integral(self) -> bool:
        """No negative hbar powers present (checked, not assumed)."""
        return all(k >= 0 for k in self.coeffs)

    def coefficient(self, power: int) -> Fraction:
        return self.coeffs.get(power, Fraction(0))

    def constant(self) -> Fraction:
        return self.coefficient(0)

    def valuation(self):
        return min(self.coeffs) if self.coeffs else None

    def __eq__(self, other):
        if isinstance(other, (int, Fraction, str)):
            other = self._coerce(other)
        if not isinstance(other, Scalar):
            return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self):
        return hash(frozenset(self.coeffs.items()))

    def __bool__(self):
        return bool(self.coeffs)

    def __repr__(self):
        if not self.coeffs:
            return "0"
        parts = []
        for k in sorted(self.coeffs):
            c = self.coeffs[k]
            if k == 0:
                parts.append(f"{c}")
            elif k == 1:
                parts.append(f"{c}*h" if c != 1 else "h")
            else:
                parts.append(f"{c}*h^{k}" if c != 1 else f"h^{k}")
        return " + ".join(parts)

    def to_json(self):
        return {str(k): str(v) for k, v in sorted(self.coeffs.items())}

    @classmethod
    def from_json(cls, obj, order: int = DEFAULT_ORDER, floor: int = 0) -> "Scalar":
        data = {int(k): Fraction(v) for k, v in obj.items()}
        if data:
            floor = min(floor, min(data))
        return cls(data, order=order, floor=floor)
