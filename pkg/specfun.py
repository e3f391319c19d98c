"""
Cylinder functions
==================
Bessel, Hankel (first kind) and modified Bessel functions of integer order
with derivatives, evaluated through scipy.special and guarded against
out-of-domain arguments and overflow. Power-series evaluations in decimal
arithmetic serve as extended-precision cross-checks.
"""

from contextlib import contextmanager
from dataclasses import dataclass
from decimal import Decimal, localcontext
from typing import Iterator, Optional, Tuple

import numpy as np
from scipy import special

from errors import SpecialFunctionDomainError, SpecialFunctionRangeError

DEFAULT_MAX_ORDER = 200

_max_order = DEFAULT_MAX_ORDER

_PI = "3.14159265358979323846264338327950288419716939937510"
_EULER_GAMMA = "0.57721566490153286060651209008240243104215933593992"


@dataclass(frozen=True)
class CylPair:
    """J_m, Y_m and their derivatives at one argument"""

    j: float
    y: float
    jp: float
    yp: float
    x: float

    @property
    def wronskian_residual(self) -> float:
        """Relative defect of J Y' - J' Y = 2 / (pi x)"""
        expected = 2.0 / (np.pi * self.x)
        return abs(self.j * self.yp - self.jp * self.y - expected) / expected

    @property
    def hankel(self) -> complex:
        return complex(self.j, self.y)


def max_order_limit() -> int:
    return _max_order


@contextmanager
def order_limit(max_order: int) -> Iterator[int]:
    """Cap the Bessel order for every evaluation inside the block"""
    global _max_order
    if max_order < 1:
        raise SpecialFunctionDomainError(f"the order limit must be at least 1, got {max_order}")
    previous = _max_order
    _max_order = int(max_order)
    try:
        yield _max_order
    finally:
        _max_order = previous


def _check(m, x, max_order: Optional[int]):
    max_order = _max_order if max_order is None else max_order
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0.0)):
        raise SpecialFunctionDomainError(f"argument must be positive and finite, got {x}")
    if np.any(~np.isfinite(x)):
        raise SpecialFunctionDomainError(f"argument must be finite, got {x}")
    if np.any(np.abs(np.asarray(m)) > max_order):
        raise SpecialFunctionDomainError(f"order {m} exceeds the configured maximum {max_order}")


def _finite(name: str, m, x, *values):
    for value in values:
        if not np.all(np.isfinite(value)):
            raise SpecialFunctionRangeError(f"{name} overflows at order {m}, argument {x}")


def cyl_bessel(m: int, x: float, max_order: Optional[int] = None) -> CylPair:
    if m < 0:
        raise SpecialFunctionDomainError(f"order must be non-negative, got {m}")
    _check(m, x, max_order)
    j = float(special.jv(m, x))
    y = float(special.yv(m, x))
    jp = float(special.jvp(m, x))
    yp = float(special.yvp(m, x))
    _finite("Y_m", m, x, j, y, jp, yp)
    return CylPair(j=j, y=y, jp=jp, yp=yp, x=float(x))


def hankel1_values(orders, x: float, max_order: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    H_m(x) and H_m'(x) for integer orders of either sign.

    Negative orders use H_{-m} = (-1)^m H_m; the derivative comes from
    H_m' = H_{m-1} - (m/x) H_m.
    """
    orders = np.asarray(orders, dtype=int)
    _check(orders, x, max_order)
    absolute = np.abs(orders)
    parity = np.where((orders < 0) & (absolute % 2 == 1), -1.0, 1.0)
    value = special.hankel1(absolute, x)
    previous = special.hankel1(absolute - 1, x)
    derivative = previous - (absolute / x) * value
    _finite("H_m", orders, x, value, derivative)
    return parity * value, parity * derivative


def hankel1(m: int, x: float, max_order: Optional[int] = None) -> Tuple[complex, complex]:
    value, derivative = hankel1_values([m], x, max_order)
    return complex(value[0]), complex(derivative[0])


def bessel_j_values(orders, x: float, max_order: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """J_m(x) and J_m'(x) for integer orders of either sign"""
    orders = np.asarray(orders, dtype=int)
    _check(orders, x, max_order)
    value = special.jv(orders, x)
    derivative = special.jvp(orders, x)
    _finite("J_m", orders, x, value, derivative)
    return value, derivative


def hankel1_grid(orders, xs, max_order: Optional[int] = None) -> np.ndarray:
    """H_m(x) for every (x, m) pair, shape (len(xs), len(orders))"""
    orders = np.asarray(orders, dtype=int)
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    _check(orders, xs, max_order)
    absolute = np.abs(orders)
    parity = np.where((orders < 0) & (absolute % 2 == 1), -1.0, 1.0)
    values = special.hankel1(absolute[None, :], xs[:, None]) * parity[None, :]
    _finite("H_m", orders, xs, values)
    return values


def mod_bessel(m: int, x: float, max_order: Optional[int] = None) -> Tuple[float, float, float, float]:
    """(I_m, K_m, I_m', K_m') at x > 0"""
    if m < 0:
        raise SpecialFunctionDomainError(f"order must be non-negative, got {m}")
    _check(m, x, max_order)
    values = (
        float(special.iv(m, x)),
        float(special.kv(m, x)),
        float(special.ivp(m, x)),
        float(special.kvp(m, x)),
    )
    _finite("I_m/K_m", m, x, *values)
    return values


def mod_bessel_ratio(orders, x: float) -> np.ndarray:
    """I_m'(x) / I_m(x) for integer orders, via exponentially scaled I"""
    orders = np.abs(np.asarray(orders, dtype=int))
    _check(orders, x, None)
    value = special.ive(orders, x)
    derivative = 0.5 * (special.ive(orders - 1, x) + special.ive(orders + 1, x))
    _finite("I_m", orders, x, value, derivative)
    return derivative / value


def helmholtz_kernel(k: float, distance) -> np.ndarray:
    """Outgoing fundamental solution (i/4) H_0(k r) of -(Delta + k^2)"""
    distance = np.asarray(distance, dtype=float)
    if np.any(distance <= 0.0):
        raise SpecialFunctionDomainError("kernel evaluated at zero distance")
    return 0.25j * special.hankel1(0, k * distance)


# SERIES ORACLES (decimal arithmetic)


def _factorial_table(n: int):
    table = [Decimal(1)]
    for i in range(1, n + 1):
        table.append(table[-1] * i)
    return table


def bessel_j_series(m: int, x: float, terms: int = 30, precision: int = 40) -> float:
    """sum_k (-1)^k (x/2)^(2k+m) / (k! (k+m)!)"""
    with localcontext() as ctx:
        ctx.prec = precision
        half = Decimal(x) / 2
        fact = _factorial_table(terms + m)
        total = Decimal(0)
        for k in range(terms):
            term = half ** (2 * k + m) / (fact[k] * fact[k + m])
            total += -term if k % 2 else term
        return float(total)


def bessel_i_series(m: int, x: float, terms: int = 30, precision: int = 40) -> float:
    with localcontext() as ctx:
        ctx.prec = precision
        half = Decimal(x) / 2
        fact = _factorial_table(terms + m)
        total = Decimal(0)
        for k in range(terms):
            total += half ** (2 * k + m) / (fact[k] * fact[k + m])
        return float(total)


def _harmonic(n: int):
    total = Decimal(0)
    for i in range(1, n + 1):
        total += Decimal(1) / i
    return total


def bessel_y0_series(x: float, terms: int = 60, precision: int = 50) -> float:
    with localcontext() as ctx:
        ctx.prec = precision
        pi = Decimal(_PI)
        gamma = Decimal(_EULER_GAMMA)
        X = Decimal(x)
        quarter = X * X / 4
        fact = _factorial_table(terms)
        j0 = Decimal(0)
        tail = Decimal(0)
        for k in range(terms):
            term = quarter ** k / (fact[k] * fact[k])
            j0 += -term if k % 2 else term
            if k >= 1:
                weighted = _harmonic(k) * term
                tail += weighted if k % 2 else -weighted
        total = 2 / pi * ((X / 2).ln() + gamma) * j0 + 2 / pi * tail
        return float(total)


def bessel_y1_series(x: float, terms: int = 60, precision: int = 50) -> float:
    with localcontext() as ctx:
        ctx.prec = precision
        pi = Decimal(_PI)
        gamma = Decimal(_EULER_GAMMA)
        X = Decimal(x)
        half = X / 2
        fact = _factorial_table(terms + 1)
        j1 = Decimal(0)
        tail = Decimal(0)
        for k in range(terms):
            term = half ** (2 * k + 1) / (fact[k] * fact[k + 1])
            signed = -term if k % 2 else term
            j1 += signed
            digamma_sum = (_harmonic(k) - gamma) + (_harmonic(k + 1) - gamma)
            tail += digamma_sum * signed
        total = 2 / pi * half.ln() * j1 - 2 / (pi * X) - tail / pi
        return float(total)
