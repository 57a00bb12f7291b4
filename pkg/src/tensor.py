import itertools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Any, Dict, Iterator, Mapping, Optional, Sequence, Tuple

import numpy as np
import sympy

from .errors import ConfigError, TensorShapeError, VarianceError
from .expr import Expression, is_exact_number, to_sympy_number

logger = logging.getLogger(__name__)

Index = Tuple[int, ...]


class Variance(str, Enum):
    COVARIANT = 'co'
    CONTRAVARIANT = 'contra'


class Symmetry(str, Enum):
    NONE = 'none'
    PAIR = 'pair-symmetric'
    CURVATURE = 'curvature-type'


# (permutation of the leading slots, sign)
_GROUPS = {
    Symmetry.NONE: (((), 1),),
    Symmetry.PAIR: (((0, 1), 1), ((1, 0), 1)),
    Symmetry.CURVATURE: (
        ((0, 1, 2, 3), 1), ((1, 0, 2, 3), -1), ((0, 1, 3, 2), -1), ((1, 0, 3, 2), 1),
        ((2, 3, 0, 1), 1), ((3, 2, 0, 1), -1), ((2, 3, 1, 0), -1), ((3, 2, 1, 0), 1),
    ),
}


def pack_index(index: Sequence[int]) -> int:
    return int.from_bytes(bytes(index), 'big')


def unpack_index(key: int, order: int) -> Index:
    return tuple(key.to_bytes(order, 'big'))


def is_zero(value) -> bool:
    return value == 0


def as_number(value):
    """Rational values stay exact, anything else becomes a float"""
    if isinstance(value, sympy.Basic):
        return value if value.is_Rational else float(value)
    if isinstance(value, (int, Fraction)):
        return to_sympy_number(value)
    return float(value)


def _image(index: Index, permutation: Tuple[int, ...]) -> Index:
    m = len(permutation)
    return tuple(index[permutation[i]] for i in range(m)) + tuple(index[m:])


@dataclass(frozen=True)
class CoordinateChart:
    """Index layout x, z_0..z_p, zt_0..zt_p, xs, zs_0..zs_p, zts_0..zts_p"""

    p: int

    def __post_init__(self):
        if self.p < 0:
            raise ConfigError(f"p must be non-negative, got {self.p}")
        if self.dimension > 255:
            raise ConfigError(f"Dimension {self.dimension} exceeds 255")

    @property
    def dimension(self) -> int:
        return 6 + 4 * self.p

    @property
    def x(self) -> int:
        return 0

    def z(self, i: int) -> int:
        return 1 + i

    def zt(self, i: int) -> int:
        return self.p + 2 + i

    @property
    def xs(self) -> int:
        return 2 * self.p + 3

    def zs(self, i: int) -> int:
        return 2 * self.p + 4 + i

    def zts(self, i: int) -> int:
        return 3 * self.p + 5 + i

    @property
    def s_indices(self) -> Tuple[int, ...]:
        """The z and zt coordinates, in the order z_0..z_p, zt_0..zt_p"""
        return tuple(range(1, 2 * self.p + 3))

    def dual(self, index: int) -> int:
        if not 0 <= index <= 2 * self.p + 2:
            raise ConfigError(f"Index {index} has no dual partner")
        return index + 2 * self.p + 3

    @cached_property
    def names(self) -> Tuple[str, ...]:
        q = range(self.p + 1)
        return (('x',) + tuple(f'z{i}' for i in q) + tuple(f'zt{i}' for i in q)
                + ('xs',) + tuple(f'zs{i}' for i in q) + tuple(f'zts{i}' for i in q))

    @cached_property
    def frame_labels(self) -> Tuple[str, ...]:
        q = range(self.p + 1)
        return (('X',) + tuple(f'Z{i}' for i in q) + tuple(f'Zt{i}' for i in q)
                + ('X*',) + tuple(f'Z*{i}' for i in q) + tuple(f'Zt*{i}' for i in q))

    @cached_property
    def _lookup(self) -> Dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    def index(self, name: str) -> int:
        try:
            return self._lookup[name]
        except KeyError:
            raise ConfigError(f"'{name}' is not a coordinate of the p={self.p} chart") from None

    def name(self, index: int) -> str:
        return self.names[index]

    def bindings(self, point: Sequence) -> Dict[str, Any]:
        if len(point) != self.dimension:
            raise TensorShapeError(f"Point has {len(point)} coordinates, expected {self.dimension}")
        return dict(zip(self.names, point))


@dataclass(frozen=True, eq=False)
class SparseTensor:
    dimension: int
    variance: Tuple[Variance, ...]
    entries: Mapping[int, Any]
    symmetry: Symmetry = Symmetry.NONE

    @classmethod
    def build(cls, dimension: int, variance: Sequence, entries: Mapping[Index, Any] = None,
              symmetry: Symmetry = Symmetry.NONE) -> 'SparseTensor':
        variance = tuple(Variance(v) for v in variance)
        order = len(variance)
        if symmetry is Symmetry.PAIR and order != 2:
            raise TensorShapeError("Pair symmetry needs order 2")
        if symmetry is Symmetry.CURVATURE and order < 4:
            raise TensorShapeError("Curvature symmetry needs order >= 4")
        packed = {}
        for index, value in (entries or {}).items():
            index = tuple(index)
            if len(index) != order or any(not 0 <= i < dimension for i in index):
                raise TensorShapeError(f"Index {index} does not fit order {order}, dimension {dimension}")
            if not is_zero(value):
                packed[pack_index(index)] = value
        return cls(dimension, variance, packed, symmetry)

    @classmethod
    def covariant(cls, dimension: int, order: int, entries: Mapping[Index, Any] = None,
                  symmetry: Symmetry = Symmetry.NONE) -> 'SparseTensor':
        return cls.build(dimension, [Variance.COVARIANT] * order, entries, symmetry)

    @property
    def order(self) -> int:
        return len(self.variance)

    @property
    def nnz(self) -> int:
        return len(self.entries)

    @property
    def is_zero(self) -> bool:
        return not self.entries

    def raw_items(self) -> Iterator[Tuple[Index, Any]]:
        for key in sorted(self.entries):
            yield unpack_index(key, self.order), self.entries[key]

    def __getitem__(self, index: Sequence[int]):
        index = tuple(index)
        if len(index) != self.order:
            raise TensorShapeError(f"Index {index} does not fit order {self.order}")
        for permutation, sign in _GROUPS[self.symmetry]:
            key = pack_index(_image(index, permutation))
            if key in self.entries:
                return sign * self.entries[key]
        return 0

    @cached_property
    def _components(self) -> Dict[Index, Any]:
        full = {}
        for index, value in self.raw_items():
            for permutation, sign in _GROUPS[self.symmetry]:
                image = _image(index, permutation)
                if image not in full:
                    full[image] = sign * value if sign != 1 else value
        return {k: v for k, v in full.items() if not is_zero(v)}

    def components(self) -> Dict[Index, Any]:
        """Every non-zero component, symmetry images included"""
        return dict(self._components)

    def map_values(self, fn) -> 'SparseTensor':
        return SparseTensor.build(self.dimension, self.variance,
                                  {i: fn(v) for i, v in self.raw_items()}, self.symmetry)

    def numeric(self) -> 'SparseTensor':
        return self.map_values(as_number)

    def as_float(self) -> 'SparseTensor':
        return self.map_values(float)

    def is_rational(self) -> bool:
        return all(isinstance(v, sympy.Basic) and v.is_Rational for v in self.entries.values())

    def at(self, point: Mapping[str, Any], exact: bool = True) -> 'SparseTensor':
        """Evaluate a field whose entries are sympy expressions"""
        def value(v):
            if isinstance(v, sympy.Basic) and v.free_symbols:
                return Expression(v).evaluate(point, exact)
            return v if exact else float(v)
        return self.map_values(value)

    def expanded(self) -> 'SparseTensor':
        return SparseTensor.build(self.dimension, self.variance, self._components)

    def permute(self, order: Sequence[int]) -> 'SparseTensor':
        """Slot i of the result is slot order[i] of this tensor"""
        order = tuple(order)
        if sorted(order) != list(range(self.order)):
            raise TensorShapeError(f"{order} is not a permutation of the slots")
        entries = {tuple(idx[o] for o in order): v for idx, v in self._components.items()}
        return SparseTensor.build(self.dimension, [self.variance[o] for o in order], entries)

    def to_dense(self) -> np.ndarray:
        array = np.zeros((self.dimension,) * self.order)
        for index, value in self._components.items():
            array[index] = float(value)
        return array

    def to_json(self) -> Dict[str, Any]:
        return {
            'order': self.order,
            'dimension': self.dimension,
            'variance': [v.value for v in self.variance],
            'symmetry': self.symmetry.value,
            'entries': [[list(index), json_number(value)] for index, value in self.raw_items()],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> 'SparseTensor':
        entries = {tuple(index): parse_json_number(value) for index, value in data['entries']}
        return cls.build(data['dimension'], data['variance'], entries,
                         Symmetry(data.get('symmetry', Symmetry.NONE.value)))


def json_number(value):
    value = as_number(value)
    if isinstance(value, sympy.Basic):
        if value.is_Integer:
            return int(value)
        return f"{value.p}/{value.q}"
    return value


def parse_json_number(value):
    if isinstance(value, str):
        return to_sympy_number(Fraction(value))
    if isinstance(value, int):
        return sympy.Integer(value)
    return float(value)


def _metric_rows(metric: SparseTensor) -> Dict[int, Dict[int, Any]]:
    rows = defaultdict(dict)
    for (a, b), value in metric.components().items():
        rows[a][b] = value
    return rows


def _check_metric_inverse(metric_inverse: SparseTensor) -> None:
    if metric_inverse.order != 2 or any(v is not Variance.CONTRAVARIANT for v in metric_inverse.variance):
        raise VarianceError("metric_inverse must be an order-2 contravariant tensor")
    if metric_inverse.symmetry is not Symmetry.PAIR:
        comps = metric_inverse.components()
        if any(not is_zero(v - comps.get((b, a), 0)) for (a, b), v in comps.items()):
            raise TensorShapeError("metric_inverse must be symmetric")


def _check_slot(t: SparseTensor, slot: int, variance: Variance) -> None:
    if not 0 <= slot < t.order:
        raise TensorShapeError(f"Slot {slot} out of range for order {t.order}")
    if t.variance[slot] is not variance:
        raise VarianceError(f"Slot {slot} is {t.variance[slot].value}, expected {variance.value}")


def contract(t1: SparseTensor, slot1: int, t2: SparseTensor, slot2: int,
             metric_inverse: SparseTensor) -> SparseTensor:
    """Sum t1(..a..) g^{ab} t2(..b..) over one covariant slot of each factor"""
    _check_slot(t1, slot1, Variance.COVARIANT)
    _check_slot(t2, slot2, Variance.COVARIANT)
    _check_metric_inverse(metric_inverse)
    if not t1.dimension == t2.dimension == metric_inverse.dimension:
        raise TensorShapeError("Dimension mismatch in contraction")
    rows = _metric_rows(metric_inverse)
    grouped = defaultdict(list)
    for index, value in t2.components().items():
        grouped[index[slot2]].append((index[:slot2] + index[slot2 + 1:], value))
    result = defaultdict(int)
    for index, v1 in t1.components().items():
        rest = index[:slot1] + index[slot1 + 1:]
        for b, g in rows.get(index[slot1], {}).items():
            for rest2, v2 in grouped.get(b, ()):
                result[rest + rest2] += v1 * g * v2
    variance = t1.variance[:slot1] + t1.variance[slot1 + 1:] + t2.variance[:slot2] + t2.variance[slot2 + 1:]
    return SparseTensor.build(t1.dimension, variance, result)


def trace(t: SparseTensor, slot_a: int, slot_b: int, metric_inverse: SparseTensor) -> SparseTensor:
    """Contract two covariant slots of one tensor with the inverse metric"""
    if slot_a == slot_b:
        raise TensorShapeError("Cannot trace a slot against itself")
    _check_slot(t, slot_a, Variance.COVARIANT)
    _check_slot(t, slot_b, Variance.COVARIANT)
    _check_metric_inverse(metric_inverse)
    rows = _metric_rows(metric_inverse)
    keep = [i for i in range(t.order) if i not in (slot_a, slot_b)]
    result = defaultdict(int)
    for index, value in t.components().items():
        g = rows.get(index[slot_a], {}).get(index[slot_b])
        if g is not None:
            result[tuple(index[i] for i in keep)] += value * g
    return SparseTensor.build(t.dimension, [t.variance[i] for i in keep], result)


def raise_last_slot(t: SparseTensor, metric_inverse: SparseTensor) -> SparseTensor:
    _check_slot(t, t.order - 1, Variance.COVARIANT)
    _check_metric_inverse(metric_inverse)
    rows = _metric_rows(metric_inverse)
    result = defaultdict(int)
    for index, value in t.components().items():
        for c, g in rows.get(index[-1], {}).items():
            result[index[:-1] + (c,)] += value * g
    return SparseTensor.build(t.dimension, t.variance[:-1] + (Variance.CONTRAVARIANT,), result)


def lower_last_slot(t: SparseTensor, metric: SparseTensor) -> SparseTensor:
    _check_slot(t, t.order - 1, Variance.CONTRAVARIANT)
    if metric.order != 2 or any(v is not Variance.COVARIANT for v in metric.variance):
        raise VarianceError("metric must be an order-2 covariant tensor")
    rows = _metric_rows(metric)
    result = defaultdict(int)
    for index, value in t.components().items():
        for c, g in rows.get(index[-1], {}).items():
            result[index[:-1] + (c,)] += value * g
    return SparseTensor.build(t.dimension, t.variance[:-1] + (Variance.COVARIANT,), result)


def full_contraction(factors: Sequence[SparseTensor], pairs: Sequence[Tuple[int, int]],
                     metric_inverse: SparseTensor):
    """
    Contract the tensor product of the factors to a scalar.

    Slots are numbered consecutively across the factors; every slot must
    appear in exactly one pair. The search assigns one stored component
    per factor and only visits components compatible with the inverse
    metric rows of already assigned partners.
    """
    _check_metric_inverse(metric_inverse)
    offsets = [0]
    for factor in factors:
        if any(v is not Variance.COVARIANT for v in factor.variance):
            raise VarianceError("Full contraction needs covariant factors")
        offsets.append(offsets[-1] + factor.order)
    total = offsets[-1]
    partner = {}
    for a, b in pairs:
        if a in partner or b in partner or a == b:
            raise TensorShapeError(f"Pairing {pairs} reuses a slot")
        partner[a], partner[b] = b, a
    if sorted(partner) != list(range(total)):
        raise TensorShapeError(f"Pairing {pairs} does not cover {total} slots")

    rows = _metric_rows(metric_inverse)
    entries = [sorted(f.components().items()) for f in factors]
    lookup = []
    for f, listing in enumerate(entries):
        table = defaultdict(set)
        for eid, (index, _) in enumerate(listing):
            for u, coordinate in enumerate(index):
                table[(u, coordinate)].add(eid)
        lookup.append(table)

    assigned: Dict[int, int] = {}

    def visit(f: int):
        if f == len(factors):
            return 1
        base, order = offsets[f], factors[f].order
        candidates = None
        for u in range(order):
            q = partner[base + u]
            if q < base:
                allowed = set()
                for coordinate in rows.get(assigned[q], {}):
                    allowed |= lookup[f].get((u, coordinate), set())
                candidates = allowed if candidates is None else candidates & allowed
                if not candidates:
                    return 0
        if candidates is None:
            candidates = range(len(entries[f]))
        subtotal = 0
        for eid in sorted(candidates):
            index, weight = entries[f][eid]
            for u in range(order):
                q = partner[base + u]
                if q < base:
                    weight = weight * rows[assigned[q]][index[u]]
                elif base + u < q < base + order:
                    g = rows.get(index[u], {}).get(index[q - base])
                    if g is None:
                        weight = 0
                        break
                    weight = weight * g
            if is_zero(weight):
                continue
            for u in range(order):
                assigned[base + u] = index[u]
            rest = visit(f + 1)
            if not is_zero(rest):
                subtotal += weight * rest
        for u in range(order):
            assigned.pop(base + u, None)
        return subtotal

    return visit(0)


def sup_difference(a: SparseTensor, b: SparseTensor) -> float:
    """Largest absolute component difference"""
    if a.dimension != b.dimension or a.order != b.order:
        raise TensorShapeError("Cannot compare tensors of different shape")
    ca, cb = a.components(), b.components()
    worst = 0.0
    for index in set(ca) | set(cb):
        diff = ca.get(index, 0) - cb.get(index, 0)
        worst = max(worst, abs(float(diff)))
    return worst


def tensors_close(a: SparseTensor, b: SparseTensor, rel_tol: float = 1e-9, abs_tol: float = 1e-12) -> bool:
    ca, cb = a.components(), b.components()
    for index in set(ca) | set(cb):
        x, y = ca.get(index, 0), cb.get(index, 0)
        if is_exact_number(x) and is_exact_number(y):
            if not is_zero(sympy.expand(to_sympy_number(x) - to_sympy_number(y))):
                return False
        elif not math.isclose(float(x), float(y), rel_tol=rel_tol, abs_tol=abs_tol):
            return False
    return True


@dataclass(frozen=True, eq=False)
class Frame:
    """
    Ordered basis of a tangent space; columns[j][a] is coordinate
    component a of frame vector j, ordered like the chart.
    """

    base_point: Tuple
    columns: Tuple[Tuple[Any, ...], ...]

    def __post_init__(self):
        n = len(self.columns)
        if any(len(c) != n for c in self.columns):
            raise TensorShapeError("Frame matrix must be square")
        if self.base_point is not None and len(self.base_point) != n:
            raise TensorShapeError(f"Base point has {len(self.base_point)} coordinates, expected {n}")
        if self.determinant() == 0:
            raise TensorShapeError("Frame vectors are linearly dependent")

    @classmethod
    def from_columns(cls, base_point: Optional[Sequence], columns: Sequence[Sequence]) -> 'Frame':
        values = [v for column in columns for v in column]
        exact = all(as_number_is_rational(v) for v in values)
        convert = to_sympy_number if exact else float
        cols = tuple(tuple(convert(v) for v in column) for column in columns)
        return cls(tuple(base_point) if base_point is not None else None, cols)

    @classmethod
    def from_matrix(cls, base_point: Optional[Sequence], matrix) -> 'Frame':
        """matrix[a][j] holds component a of frame vector j"""
        if isinstance(matrix, np.ndarray):
            matrix = matrix.tolist()
        elif isinstance(matrix, sympy.MatrixBase):
            matrix = matrix.tolist()
        n = len(matrix)
        return cls.from_columns(base_point, [[matrix[a][j] for a in range(n)] for j in range(n)])

    @classmethod
    def identity(cls, dimension: int, base_point: Optional[Sequence] = None) -> 'Frame':
        return cls.from_matrix(base_point, sympy.eye(dimension))

    @property
    def dimension(self) -> int:
        return len(self.columns)

    @cached_property
    def exact(self) -> bool:
        return all(isinstance(v, sympy.Basic) for c in self.columns for v in c)

    def column(self, j: int) -> Tuple[Any, ...]:
        return self.columns[j]

    def matrix(self) -> sympy.Matrix:
        n = self.dimension
        return sympy.Matrix(n, n, lambda a, j: self.columns[j][a])

    def array(self) -> np.ndarray:
        return np.array([[float(self.columns[j][a]) for j in range(self.dimension)]
                         for a in range(self.dimension)])

    def determinant(self):
        if self.exact:
            return self.matrix().det(method='bareiss')
        return float(np.linalg.det(self.array()))

    @cached_property
    def rows(self) -> Tuple[Tuple[Tuple[int, Any], ...], ...]:
        """For each coordinate a, the (frame index, component) pairs with non-zero component"""
        n = self.dimension
        return tuple(tuple((j, self.columns[j][a]) for j in range(n) if not is_zero(self.columns[j][a]))
                     for a in range(n))

    def compose(self, change) -> 'Frame':
        """The frame whose vector j is sum_i change[i][j] * (vector i of this frame)"""
        if self.exact:
            product = self.matrix() * sympy.Matrix(change)
        else:
            product = self.array() @ np.asarray(change, dtype=float)
        return Frame.from_matrix(self.base_point, product)

    def inverse_matrix(self):
        if self.exact:
            return self.matrix().inv()
        return np.linalg.inv(self.array())


def as_number_is_rational(value) -> bool:
    if isinstance(value, sympy.Basic):
        return value.is_Rational is True
    return isinstance(value, (int, Fraction)) and not isinstance(value, bool)


def pullback(t: SparseTensor, frame: Frame) -> SparseTensor:
    """Component (i1..ir) of the result is t evaluated on frame vectors i1..ir"""
    if any(v is not Variance.COVARIANT for v in t.variance):
        raise VarianceError("pullback needs a fully covariant tensor")
    if t.dimension != frame.dimension:
        raise TensorShapeError(f"Tensor dimension {t.dimension} does not match frame dimension {frame.dimension}")
    exact = frame.exact and all(as_number_is_rational(v) for v in t.entries.values())
    convert = to_sympy_number if exact else float
    rows = frame.rows if exact else tuple(tuple((j, float(w)) for j, w in row) for row in frame.rows)
    result = defaultdict(int)
    for index, value in t.components().items():
        value = convert(value)
        for choice in itertools.product(*(rows[a] for a in index)):
            result[tuple(j for j, _ in choice)] += value * math.prod(w for _, w in choice)
    return SparseTensor.build(t.dimension, t.variance, result, t.symmetry)


def evaluate_on(t: SparseTensor, vectors: Sequence[Optional[Sequence]]):
    """
    Feed vectors into the covariant slots; a None leaves that slot open.
    Returns a scalar when every slot is filled, otherwise a dict keyed by
    the open-slot indices.
    """
    if len(vectors) != t.order:
        raise TensorShapeError(f"Need {t.order} vectors, got {len(vectors)}")
    open_slots = [i for i, v in enumerate(vectors) if v is None]
    result = defaultdict(int)
    for index, value in t.components().items():
        term = value
        for slot, vector in enumerate(vectors):
            if vector is not None:
                term = term * vector[index[slot]]
                if is_zero(term):
                    break
        if not is_zero(term):
            result[tuple(index[i] for i in open_slots)] += term
    if not open_slots:
        return result.get((), 0)
    return dict(result)
