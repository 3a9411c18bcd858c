"""
Forward-mode automatic differentiation on generalized dual numbers.

Two number types are provided:

- ``Dual``: a truncated multivariate dual number. Each differentiation pass
  introduces a perturbation tag with any number of tangent directions; a
  number carries one coefficient axis per tag it depends on, so derivatives
  of derivatives are obtained by nesting passes without nesting objects.
  Later perturbations get larger tags and always sit on the last axes.
- ``HyperDual``: a second-order number holding value, gradient and a dense
  Hessian. One sweep yields the exact Hessian, symmetric by construction.

User fields are written with ordinary arithmetic and the elementary
functions of this module (``exp``, ``log``, ``sin``, ``cos``, ``tanh``,
``sqrt``), which dispatch on the number type.
"""

import functools
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial as npp
from typing_extensions import Self

from srusk.exceptions import DomainError

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

_REAL = (int, float, np.integer, np.floating)

# Perturbation tags; later perturbations get larger tags.
_tags = itertools.count(1)

Scalar = Union[float, "Dual", "HyperDual"]


def _real(x: Any) -> float:
    """Underlying real value of a generalized dual."""
    if isinstance(x, Dual):
        return float(x.coeffs.flat[0])
    if isinstance(x, HyperDual):
        return float(x.value)
    return float(x)


def _vector(items: Sequence[Any]) -> np.ndarray:
    """Float array when possible, object array when entries are dual numbers."""
    try:
        return np.array(items, dtype=float)
    except (TypeError, ValueError):
        out = np.empty(len(items), dtype=object)
        for i, item in enumerate(items):
            out[i] = item
        return out


@functools.lru_cache(maxsize=None)
def _product_table(shape: Tuple[int, ...]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flat (left, right, target) index triples of the truncated product for one coefficient shape."""
    per_axis = []
    for size in shape:
        pairs = [(0, 0, 0)]
        pairs += [(0, j, j) for j in range(1, size)]
        pairs += [(j, 0, j) for j in range(1, size)]
        per_axis.append(pairs)
    combos = np.array(list(itertools.product(*per_axis)), dtype=np.intp)
    left = np.ravel_multi_index(tuple(combos[:, :, 0].T), shape)
    right = np.ravel_multi_index(tuple(combos[:, :, 1].T), shape)
    target = np.ravel_multi_index(tuple(combos[:, :, 2].T), shape)
    return left, right, target


def _product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Coefficients of the product of two numbers over the same perturbations."""
    if a.ndim == 1:
        out = a * b[0]
        out[1:] += a[0] * b[1:]
        return out
    left, right, target = _product_table(a.shape)
    terms = a.reshape(-1)[left] * b.reshape(-1)[right]
    return np.bincount(target, weights=terms, minlength=a.size).reshape(a.shape)


def _embed(x: Any, tags: Tuple[int, ...], shape: Tuple[int, ...]) -> np.ndarray:
    """Coefficients of ``x`` over a superset of its perturbations."""
    if isinstance(x, Dual) and x.tags == tags:
        return x.coeffs
    out = np.zeros(shape)
    if isinstance(x, Dual):
        out[tuple(slice(None) if t in x.tags else 0 for t in tags)] = x.coeffs
    else:
        out[(0,) * len(shape)] = x
    return out


def _common(items: Sequence[Any]) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    """Sorted union of the perturbations of ``items`` and the matching coefficient shape."""
    sizes: Dict[int, int] = {}
    for item in items:
        if isinstance(item, Dual):
            sizes.update(zip(item.tags, item.coeffs.shape))
    tags = tuple(sorted(sizes))
    return tags, tuple(sizes[t] for t in tags)


def _align(a: "Dual", b: "Dual") -> Tuple[np.ndarray, np.ndarray, Tuple[int, ...]]:
    if a.tags == b.tags:
        return a.coeffs, b.coeffs, a.tags
    tags, shape = _common((a, b))
    return _embed(a, tags, shape), _embed(b, tags, shape), tags


def _wrap(coeffs: np.ndarray, tags: Tuple[int, ...]) -> Any:
    """A float or a Dual, dropping perturbations whose tangent coefficients all vanish."""
    keep = [axis for axis in range(len(tags)) if np.take(coeffs, range(1, coeffs.shape[axis]), axis=axis).any()]
    if len(keep) < len(tags):
        coeffs = coeffs[tuple(slice(None) if axis in keep else 0 for axis in range(len(tags)))]
        tags = tuple(tags[axis] for axis in keep)
    if not tags:
        return float(coeffs)
    return Dual(np.array(coeffs), tags)


def _seed(x: Any, columns: Sequence[Sequence[Any]], tags: Sequence[int]) -> Any:
    """``x`` perturbed by one new tag per column, the column holding its tangent entries."""
    active = [(tag, column) for tag, column in zip(tags, columns)
              if any(not isinstance(e, _REAL) or e != 0 for e in column)]
    if not active:
        return float(x) if isinstance(x, np.floating) else x
    outer, outer_shape = _common([x, *(e for _, column in active for e in column)])
    coeffs = np.zeros(outer_shape + tuple(len(column) + 1 for _, column in active))
    base = [0] * len(active)
    coeffs[(Ellipsis, *base)] = _embed(x, outer, outer_shape)
    for level, (_, column) in enumerate(active):
        for j, entry in enumerate(column, start=1):
            index = list(base)
            index[level] = j
            coeffs[(Ellipsis, *index)] = _embed(entry, outer, outer_shape)
    return Dual(coeffs, outer + tuple(tag for tag, _ in active))


class Dual:
    """
    Truncated multivariate dual number.

    Args:
        coeffs: One axis per perturbation in ``tags``; index 0 along an axis is
            the part free of that perturbation, index j its coefficient along
            direction j. Two tangents of one perturbation multiply to zero.
        tags: Ascending perturbation tags
    """

    __slots__ = ("coeffs", "tags")

    def __init__(self, coeffs: np.ndarray, tags: Tuple[int, ...]):
        self.coeffs = coeffs
        self.tags = tags

    @classmethod
    def seed(cls, value: Any, grad: Sequence[Any], tag: int) -> Any:
        """``value + sum_k grad[k] * eps_k`` for a fresh perturbation ``tag``."""
        return _seed(value, [list(grad)], [tag])

    @property
    def order(self) -> int:
        """Number of perturbations; (x - x0) ** (order + 1) vanishes."""
        return len(self.tags)

    @property
    def value(self) -> Any:
        """Part free of the outermost perturbation."""
        return _wrap(self.coeffs[..., 0], self.tags[:-1])

    @property
    def grad(self) -> np.ndarray:
        """Tangent parts along the outermost perturbation."""
        rest = self.tags[:-1]
        return _vector([_wrap(self.coeffs[..., j], rest) for j in range(1, self.coeffs.shape[-1])])

    def __repr__(self) -> str:
        return f"Dual({self.coeffs!r}, tags={self.tags})"

    def __add__(self, other: Any) -> Any:
        if isinstance(other, Dual):
            a, b, tags = _align(self, other)
            return Dual(a + b, tags)
        if isinstance(other, _REAL):
            coeffs = self.coeffs.copy()
            coeffs.flat[0] += other
            return Dual(coeffs, self.tags)
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other: Any) -> Any:
        if isinstance(other, Dual):
            a, b, tags = _align(self, other)
            return Dual(a - b, tags)
        if isinstance(other, _REAL):
            coeffs = self.coeffs.copy()
            coeffs.flat[0] -= other
            return Dual(coeffs, self.tags)
        return NotImplemented

    def __rsub__(self, other: Any) -> Any:
        if isinstance(other, _REAL):
            coeffs = -self.coeffs
            coeffs.flat[0] += other
            return Dual(coeffs, self.tags)
        return NotImplemented

    def __mul__(self, other: Any) -> Any:
        if isinstance(other, Dual):
            a, b, tags = _align(self, other)
            return Dual(_product(a, b), tags)
        if isinstance(other, _REAL):
            return Dual(self.coeffs * other, self.tags)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> Any:
        if isinstance(other, Dual):
            return self * other._reciprocal()
        if isinstance(other, _REAL):
            if other == 0:
                raise DomainError("division by zero")
            return Dual(self.coeffs / other, self.tags)
        return NotImplemented

    def __rtruediv__(self, other: Any) -> Any:
        if isinstance(other, _REAL):
            return self._reciprocal() * other
        return NotImplemented

    def __neg__(self) -> "Dual":
        return Dual(-self.coeffs, self.tags)

    def __pos__(self) -> Self:
        return self

    def __pow__(self, power: Any) -> Any:
        if isinstance(power, _REAL):
            return self._power_const(power)
        return exp(power * log(self))

    def __rpow__(self, base: Any) -> Any:
        return exp(self * log(base))

    def _reciprocal(self) -> "Dual":
        v = _real(self)
        if v == 0.0:
            raise DomainError("division by zero")
        return _series(self, [(-1.0) ** j / v ** (j + 1) for j in range(self.order + 1)])

    def _power_const(self, c: float) -> Any:
        if c == 0:
            return 1.0
        if c == 1:
            return self
        base = _real(self)
        if base < 0.0 and not float(c).is_integer():
            raise DomainError(f"power domain error: negative base {base} with exponent {c}")
        series: List[float] = []
        binomial = 1.0
        for j in range(self.order + 1):
            if binomial == 0.0:
                series.append(0.0)
            elif base == 0.0 and c - j < 0:
                raise DomainError(f"power domain error: derivative of x**{c} undefined at 0")
            else:
                series.append(binomial * base ** (c - j))
            binomial *= (c - j) / (j + 1)
        return _series(self, series)


def _series(x: Dual, series: Sequence[float]) -> Dual:
    """sum_j series[j] * (x - x0) ** j by Horner's rule."""
    nilpotent = x.coeffs.copy()
    nilpotent.flat[0] = 0.0
    out = nilpotent * series[-1]
    for coefficient in series[-2:0:-1]:
        out.flat[0] += coefficient
        out = _product(out, nilpotent)
    out.flat[0] += series[0]
    return Dual(out, x.tags)


def _tanh_series(th: float, order: int) -> List[float]:
    # d^j tanh / dx^j is a polynomial in tanh: P_{j+1} = P_j' (1 - y^2).
    series = [th]
    poly = np.array([0.0, 1.0])
    for j in range(1, order + 1):
        poly = npp.polymul(npp.polyder(poly), [1.0, 0.0, -1.0])
        series.append(float(npp.polyval(th, poly)) / math.factorial(j))
    return series


class HyperDual:
    """
    Second-order number: value, gradient and dense symmetric Hessian.

    Args:
        value: Real value
        grad: Gradient with respect to the seeded variables
        hess: Hessian with respect to the seeded variables
    """

    __slots__ = ("value", "grad", "hess")

    def __init__(self, value: float, grad: np.ndarray, hess: np.ndarray):
        self.value = value
        self.grad = grad
        self.hess = hess

    def __repr__(self) -> str:
        return f"HyperDual({self.value!r}, grad={self.grad!r})"

    def _compose(self, f0: float, f1: float, f2: float) -> "HyperDual":
        """Chain rule for a scalar function with derivatives f1, f2 at the value."""
        return HyperDual(f0, f1 * self.grad, f1 * self.hess + f2 * np.outer(self.grad, self.grad))

    def __add__(self, other: Any) -> Any:
        if isinstance(other, HyperDual):
            return HyperDual(self.value + other.value, self.grad + other.grad, self.hess + other.hess)
        if isinstance(other, _REAL):
            return HyperDual(self.value + other, self.grad, self.hess)
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other: Any) -> Any:
        if isinstance(other, HyperDual):
            return HyperDual(self.value - other.value, self.grad - other.grad, self.hess - other.hess)
        if isinstance(other, _REAL):
            return HyperDual(self.value - other, self.grad, self.hess)
        return NotImplemented

    def __rsub__(self, other: Any) -> Any:
        if isinstance(other, _REAL):
            return HyperDual(other - self.value, -self.grad, -self.hess)
        return NotImplemented

    def __mul__(self, other: Any) -> Any:
        if isinstance(other, HyperDual):
            cross = np.outer(self.grad, other.grad)
            return HyperDual(
                self.value * other.value,
                self.grad * other.value + other.grad * self.value,
                self.hess * other.value + other.hess * self.value + (cross + cross.T),
            )
        if isinstance(other, _REAL):
            return HyperDual(self.value * other, self.grad * other, self.hess * other)
        return NotImplemented

    __rmul__ = __mul__

    def _reciprocal(self) -> "HyperDual":
        v = self.value
        if v == 0.0:
            raise DomainError("division by zero")
        return self._compose(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))

    def __truediv__(self, other: Any) -> Any:
        if isinstance(other, HyperDual):
            return self * other._reciprocal()
        if isinstance(other, _REAL):
            if other == 0:
                raise DomainError("division by zero")
            return self * (1.0 / other)
        return NotImplemented

    def __rtruediv__(self, other: Any) -> Any:
        if isinstance(other, _REAL):
            return self._reciprocal() * other
        return NotImplemented

    def __neg__(self) -> "HyperDual":
        return HyperDual(-self.value, -self.grad, -self.hess)

    def __pos__(self) -> Self:
        return self

    def __pow__(self, power: Any) -> Any:
        if isinstance(power, _REAL):
            return self._power_const(power)
        if isinstance(power, HyperDual):
            return exp(power * log(self))
        return NotImplemented

    def __rpow__(self, base: Any) -> Any:
        if isinstance(base, _REAL):
            return exp(self * log(base))
        return NotImplemented

    def _power_const(self, c: float) -> Any:
        if c == 0:
            return 1.0
        if c == 1:
            return self
        v = self.value
        if v < 0.0 and not float(c).is_integer():
            raise DomainError(f"power domain error: negative base {v} with exponent {c}")
        if v == 0.0 and c < 2:
            raise DomainError(f"power domain error: second derivative of x**{c} undefined at 0")
        return self._compose(v ** c, c * v ** (c - 1), c * (c - 1) * v ** (c - 2))


def exp(x: Any) -> Any:
    if isinstance(x, Dual):
        e = math.exp(_real(x))
        return _series(x, [e / math.factorial(j) for j in range(x.order + 1)])
    if isinstance(x, HyperDual):
        e = math.exp(x.value)
        return x._compose(e, e, e)
    return math.exp(x)


def log(x: Any) -> Any:
    if _real(x) <= 0.0:
        raise DomainError(f"log domain error: input must be > 0, got {_real(x)}")
    if isinstance(x, Dual):
        v = _real(x)
        return _series(x, [math.log(v)] + [(-1.0) ** (j - 1) / (j * v ** j) for j in range(1, x.order + 1)])
    if isinstance(x, HyperDual):
        v = x.value
        return x._compose(math.log(v), 1.0 / v, -1.0 / (v * v))
    return math.log(x)


def sin(x: Any) -> Any:
    if isinstance(x, Dual):
        s, c = math.sin(_real(x)), math.cos(_real(x))
        cycle = (s, c, -s, -c)
        return _series(x, [cycle[j % 4] / math.factorial(j) for j in range(x.order + 1)])
    if isinstance(x, HyperDual):
        s = math.sin(x.value)
        return x._compose(s, math.cos(x.value), -s)
    return math.sin(x)


def cos(x: Any) -> Any:
    if isinstance(x, Dual):
        s, c = math.sin(_real(x)), math.cos(_real(x))
        cycle = (c, -s, -c, s)
        return _series(x, [cycle[j % 4] / math.factorial(j) for j in range(x.order + 1)])
    if isinstance(x, HyperDual):
        c = math.cos(x.value)
        return x._compose(c, -math.sin(x.value), -c)
    return math.cos(x)


def tanh(x: Any) -> Any:
    if isinstance(x, Dual):
        return _series(x, _tanh_series(math.tanh(_real(x)), x.order))
    if isinstance(x, HyperDual):
        th = math.tanh(x.value)
        slope = 1.0 - th * th
        return x._compose(th, slope, -2.0 * th * slope)
    return math.tanh(x)


def sqrt(x: Any) -> Any:
    if isinstance(x, (Dual, HyperDual)):
        if _real(x) <= 0.0:
            raise DomainError(f"sqrt domain error: derivative needs input > 0, got {_real(x)}")
    elif x < 0.0:
        raise DomainError(f"sqrt domain error: input must be >= 0, got {x}")
    if isinstance(x, Dual):
        return x._power_const(0.5)
    if isinstance(x, HyperDual):
        s = math.sqrt(x.value)
        return x._compose(s, 0.5 / s, -0.25 / (s * x.value))
    return math.sqrt(x)


@dataclass(frozen=True)
class SmoothScalarField:
    """
    A scalar field of ``arity`` real arguments written with the arithmetic and
    elementary functions of this module.

    Args:
        arity: Number of arguments
        evaluate: Callable taking a sequence of ``arity`` generalized scalars
        name: Label used in logs and reports
    """

    arity: int
    evaluate: Callable[[Sequence[Any]], Any]
    name: str = "field"

    def __post_init__(self) -> None:
        if self.arity < 1:
            raise ValueError(f"arity must be positive, got {self.arity}")

    def __call__(self, x: Sequence[Any]) -> Any:
        if len(x) != self.arity:
            raise ValueError(f"{self.name} expects {self.arity} arguments, got {len(x)}")
        return self.evaluate(x)


@dataclass(frozen=True)
class Jet2:
    """Value, gradient and Hessian of a field at one point."""

    value: float
    gradient: np.ndarray
    hessian: np.ndarray


def jet2(f: SmoothScalarField, x: Sequence[float]) -> Jet2:
    """
    Exact value, gradient and Hessian of ``f`` at the real point ``x``.

    Args:
        f: Field to differentiate
        x: Evaluation point of length ``f.arity``

    Returns:
        Jet2 with a bitwise-symmetric Hessian
    """
    m = f.arity
    if len(x) != m:
        raise ValueError(f"{f.name} expects {m} arguments, got {len(x)}")
    eye = np.eye(m)
    seeds = [HyperDual(float(xi), eye[i].copy(), np.zeros((m, m))) for i, xi in enumerate(x)]
    out = f(seeds)
    if isinstance(out, HyperDual):
        return Jet2(float(out.value), out.grad.copy(), out.hess.copy())
    if isinstance(out, Dual):
        raise TypeError(f"{f.name} leaked a perturbation it did not own")
    return Jet2(float(out), np.zeros(m), np.zeros((m, m)))


def mixed_derivatives(f: SmoothScalarField, x: Sequence[Any], levels: Sequence[Sequence[Sequence[Any]]]) -> np.ndarray:
    """
    Value of ``f`` and its mixed directional derivatives for stacked perturbations, in one pass.

    Level l holds k_l directions. Entry ``[j_1, ..., j_L]`` of the result is the
    derivative along direction j_l of every level with j_l > 0; levels with
    j_l = 0 are not differentiated, so ``[0, ..., 0]`` is the value.

    Args:
        f: Field to differentiate
        x: Evaluation point; entries may be generalized duals
        levels: Per level, its direction vectors of length ``f.arity``

    Returns:
        Array of shape (k_1 + 1, ..., k_L + 1), of floats at real inputs
    """
    tags = [next(_tags) for _ in levels]
    seeded = [
        _seed(xi, [[d[i] for d in directions] for directions in levels], tags)
        for i, xi in enumerate(x)
    ]
    out = f(seeded)

    shape = tuple(len(directions) + 1 for directions in levels)
    result = np.full(shape, 0.0, dtype=object)
    if isinstance(out, Dual):
        outer = tuple(t for t in out.tags if t < tags[0])
        own = [tags.index(t) for t in out.tags if t >= tags[0]]
        for index in np.ndindex(*out.coeffs.shape[len(outer):]):
            full = [0] * len(levels)
            for level, j in zip(own, index):
                full[level] = j
            result[tuple(full)] = _wrap(out.coeffs[(Ellipsis, *index)], outer)
    else:
        result[(0,) * len(levels)] = float(out) if isinstance(out, _REAL) else out
    try:
        return result.astype(float)
    except TypeError:
        return result


def value_and_directional_derivatives(
        f: SmoothScalarField, x: Sequence[Any], directions: Sequence[Sequence[Any]]
) -> Tuple[Any, np.ndarray]:
    """
    Value of ``f`` and its derivatives along each direction, in one pass.

    Points and directions may hold generalized duals; coordinates along which
    every direction is exactly zero are passed through unperturbed.

    Args:
        f: Field to differentiate
        x: Evaluation point
        directions: k direction vectors of length ``f.arity``

    Returns:
        Tuple of the value and the k directional derivatives
    """
    coefficients = mixed_derivatives(f, x, [directions])
    value = coefficients[0]
    return (float(value) if isinstance(value, _REAL) else value), coefficients[1:]


def value_and_gradient(
        f: SmoothScalarField, x: Sequence[Any], indices: Optional[Sequence[int]] = None
) -> Tuple[Any, np.ndarray]:
    """
    Value and first partial derivatives with respect to selected coordinates.

    Args:
        f: Field to differentiate
        x: Evaluation point
        indices: Coordinates to differentiate against (all when None)

    Returns:
        Tuple of the value and the partial derivatives
    """
    m = len(x)
    if indices is None:
        indices = range(m)
    eye = np.eye(m)
    return value_and_directional_derivatives(f, x, [eye[i] for i in indices])


def directional_derivative(f: SmoothScalarField, x: Sequence[Any], d: Sequence[Any]) -> Any:
    """
    Derivative of ``f`` at ``x`` along ``d``, i.e. ``grad f(x) . d``.

    Args:
        f: Field to differentiate
        x: Evaluation point
        d: Direction

    Returns:
        A float for real inputs, a generalized dual otherwise
    """
    if len(x) != f.arity or len(d) != f.arity:
        raise ValueError(f"{f.name} expects {f.arity} arguments")
    _, derivative = value_and_directional_derivatives(f, x, [d])
    result = derivative[0]
    return float(result) if isinstance(result, _REAL) else result


def derivative_field(f: SmoothScalarField, d: Sequence[float], name: Optional[str] = None) -> SmoothScalarField:
    """Field ``x -> grad f(x) . d`` for a constant direction ``d``; nestable."""
    direction = [float(di) for di in d]

    def evaluate(x: Sequence[Any]) -> Any:
        _, derivative = value_and_directional_derivatives(f, x, [direction])
        result = derivative[0]
        return float(result) if isinstance(result, _REAL) else result

    return SmoothScalarField(f.arity, evaluate, name or f"d({f.name})")
