import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

logger = logging.getLogger(__name__)

State = Tuple[int, int]

MAX_SCAN = 100000


class NullConditioningEvent(ValueError):
    pass


class UnstructuredResult(ValueError):
    pass


class InvalidCharge(ValueError):
    pass


def as_fraction(value) -> Fraction:
    """Read ints, Fractions, rational strings ("3/4", "0.125") and floats (through their repr) exactly."""
    if isinstance(value, bool):
        raise TypeError(f"Expected a rational number, got {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"Expected a rational number, got {value!r}")


def exact_number(value):
    """Like as_fraction, but lets exact symbolic values (sympy expressions) through; rational ones become Fractions."""
    if getattr(value, 'is_number', False) and not isinstance(value, (int, float, Fraction)):
        if value.is_Rational:
            return Fraction(int(value.p), int(value.q))
        return value
    return as_fraction(value)


@dataclass(frozen=True)
class GeometricSequence:
    """j -> constant + sum(c * r**j) with rational coefficients and positive ratios r != 1."""
    constant: Fraction = Fraction(0)
    terms: Tuple[Tuple[Fraction, Fraction], ...] = ()

    def __post_init__(self):
        constant = exact_number(self.constant)
        merged: Dict[Fraction, Fraction] = {}
        for coefficient, ratio in self.terms:
            coefficient, ratio = exact_number(coefficient), as_fraction(ratio)
            if ratio <= 0:
                raise ValueError(f"Geometric ratios must be positive, got {ratio}")
            if ratio == 1:
                constant += coefficient
                continue
            merged[ratio] = merged.get(ratio, Fraction(0)) + coefficient
        # dominant term first
        terms = tuple((c, r) for r, c in sorted(merged.items(), reverse=True) if c != 0)
        object.__setattr__(self, 'constant', constant)
        object.__setattr__(self, 'terms', terms)

    @classmethod
    def of(cls, value) -> 'GeometricSequence':
        if isinstance(value, GeometricSequence):
            return value
        return cls(exact_number(value))

    @property
    def is_constant(self) -> bool:
        return not self.terms

    @property
    def ratios(self) -> Tuple[Fraction, ...]:
        return tuple(r for _, r in self.terms)

    def at(self, j: int) -> Fraction:
        return self.constant + sum((c * r ** j for c, r in self.terms), Fraction(0))

    def __add__(self, other):
        other = GeometricSequence.of(other)
        return GeometricSequence(self.constant + other.constant, self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self):
        return GeometricSequence(-self.constant, tuple((-c, r) for c, r in self.terms))

    def __sub__(self, other):
        return self + (-GeometricSequence.of(other))

    def __rsub__(self, other):
        return GeometricSequence.of(other) - self

    def __mul__(self, other):
        if not isinstance(other, GeometricSequence):
            factor = exact_number(other)
            return GeometricSequence(self.constant * factor, tuple((c * factor, r) for c, r in self.terms))
        terms = [(c * other.constant, r) for c, r in self.terms]
        terms += [(c * self.constant, r) for c, r in other.terms]
        terms += [(c1 * c2, r1 * r2) for c1, r1 in self.terms for c2, r2 in other.terms]
        return GeometricSequence(self.constant * other.constant, tuple(terms))

    __rmul__ = __mul__

    def tail_sum(self, start: int) -> Fraction:
        """Sum over j >= start; requires a vanishing constant and ratios below 1."""
        if self.constant != 0 or any(r >= 1 for r in self.ratios):
            raise UnstructuredResult(f"Series {self.describe()} does not converge")
        return sum((c * r ** start / (1 - r) for c, r in self.terms), Fraction(0))

    def weighted_tail_sum(self, coefficient: Fraction, ratio: Fraction, start: int) -> Fraction:
        """Sum over j >= start of coefficient * ratio**j * self.at(j), for ratio < 1 and ratios below 1."""
        total = coefficient * self.constant * ratio ** start / (1 - ratio)
        for c, r in self.terms:
            product = ratio * r
            total += coefficient * c * product ** start / (1 - product)
        return total

    def infimum(self, start: int = 1, skip: FrozenSet[int] = frozenset()) -> Tuple[Optional[Fraction], bool, Optional[int]]:
        """Exact infimum over j >= start outside skip.

        Returns (value, attained, index). value is None when the sequence is unbounded below;
        index is None when the infimum is a limit that is never reached.
        """
        best, best_j = None, None

        def visit(j):
            nonlocal best, best_j
            if j in skip:
                return
            v = self.at(j)
            if best is None or v < best:
                best, best_j = v, j

        if not self.terms:
            j = start
            while j in skip:
                j += 1
            return self.constant, True, j

        coefficient, ratio = self.terms[0]
        others = self.terms[1:]
        j = start
        # past this index the dominant term fixes the sign of the deviation
        while abs(coefficient) * ratio ** j <= sum((abs(c) * r ** j for c, r in others), Fraction(0)):
            visit(j)
            j = self._advance(j, start)

        if ratio > 1:
            if coefficient < 0:
                return None, False, None
            while True:
                bound = self.constant + coefficient * ratio ** j - sum((abs(c) * r ** j for c, r in others), Fraction(0))
                if best is not None and bound >= best:
                    return best, True, best_j
                visit(j)
                j = self._advance(j, start)

        if coefficient > 0:
            if best is not None and best <= self.constant:
                return best, True, best_j
            return self.constant, False, None
        while True:
            spread = sum((abs(c) * r ** j for c, r in self.terms), Fraction(0))
            if best is not None and self.constant - spread >= best:
                return best, True, best_j
            visit(j)
            j = self._advance(j, start)

    def supremum(self, start: int = 1, skip: FrozenSet[int] = frozenset()) -> Tuple[Optional[Fraction], bool, Optional[int]]:
        value, attained, index = (-self).infimum(start, skip)
        return (None if value is None else -value), attained, index

    @staticmethod
    def _advance(j: int, start: int) -> int:
        if j - start > MAX_SCAN:
            raise UnstructuredResult(f"Extreme value search did not settle within {MAX_SCAN} indices")
        return j + 1

    def describe(self) -> str:
        parts = [str(self.constant)]
        parts += [f"{c}*({r})^j" for c, r in self.terms]
        return ' + '.join(parts)


@dataclass(frozen=True)
class StateSpace:
    columns: Tuple[str, ...]

    def __post_init__(self):
        columns = tuple(str(c) for c in self.columns)
        if not columns:
            raise ValueError("A state space needs at least one column")
        if len(set(columns)) != len(columns):
            raise ValueError(f"Column names must be distinct: {columns}")
        object.__setattr__(self, 'columns', columns)

    @property
    def size(self) -> int:
        return len(self.columns)

    def column_numbers(self) -> range:
        return range(1, self.size + 1)

    def column_index(self, column) -> int:
        if isinstance(column, int) and not isinstance(column, bool):
            if 1 <= column <= self.size:
                return column
            raise ValueError(f"Column {column} outside 1..{self.size}")
        if column in self.columns:
            return self.columns.index(column) + 1
        raise ValueError(f"Unknown column {column!r}; known columns: {', '.join(self.columns)}")

    def check_state(self, state: State) -> State:
        k, j = state
        if not 1 <= k <= self.size or j < 1:
            raise ValueError(f"State {state} is not in the space (columns 1..{self.size}, indices >= 1)")
        return k, j

    def label(self, state: State) -> str:
        k, j = state
        return f"{self.columns[k - 1]}[{j}]"


@dataclass(frozen=True)
class ColumnSet:
    """Finite set of indices, or the complement of one (cofinite)."""
    cofinite: bool
    indices: FrozenSet[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, 'indices', frozenset(int(j) for j in self.indices))

    def contains(self, j: int) -> bool:
        return (j not in self.indices) if self.cofinite else (j in self.indices)

    def complement(self) -> 'ColumnSet':
        return ColumnSet(not self.cofinite, self.indices)

    def union(self, other: 'ColumnSet') -> 'ColumnSet':
        if self.cofinite and other.cofinite:
            return ColumnSet(True, self.indices & other.indices)
        if self.cofinite:
            return ColumnSet(True, self.indices - other.indices)
        if other.cofinite:
            return ColumnSet(True, other.indices - self.indices)
        return ColumnSet(False, self.indices | other.indices)

    def intersection(self, other: 'ColumnSet') -> 'ColumnSet':
        return self.complement().union(other.complement()).complement()

    @property
    def is_empty(self) -> bool:
        return not self.cofinite and not self.indices


@dataclass(frozen=True)
class StructuredEvent:
    space: StateSpace
    columns: Tuple[ColumnSet, ...]

    def __post_init__(self):
        if len(self.columns) != self.space.size:
            raise ValueError(f"Event has {len(self.columns)} columns, space has {self.space.size}")

    @classmethod
    def omega(cls, space: StateSpace) -> 'StructuredEvent':
        return cls(space, tuple(ColumnSet(True) for _ in space.columns))

    @classmethod
    def empty(cls, space: StateSpace) -> 'StructuredEvent':
        return cls(space, tuple(ColumnSet(False) for _ in space.columns))

    @classmethod
    def column(cls, space: StateSpace, column) -> 'StructuredEvent':
        k = space.column_index(column)
        return cls(space, tuple(ColumnSet(c == k) for c in space.column_numbers()))

    @classmethod
    def cross_section(cls, space: StateSpace, j: int) -> 'StructuredEvent':
        """H_j = {(k, j): k = 1..K}."""
        if j < 1:
            raise ValueError(f"Cross-section index must be >= 1, got {j}")
        return cls(space, tuple(ColumnSet(False, frozenset([j])) for _ in space.columns))

    @classmethod
    def from_states(cls, space: StateSpace, states: Iterable[State]) -> 'StructuredEvent':
        members: Dict[int, set] = {k: set() for k in space.column_numbers()}
        for state in states:
            k, j = space.check_state(state)
            members[k].add(j)
        return cls(space, tuple(ColumnSet(False, frozenset(members[k])) for k in space.column_numbers()))

    @classmethod
    def singleton(cls, space: StateSpace, state: State) -> 'StructuredEvent':
        return cls.from_states(space, [state])

    def contains(self, state: State) -> bool:
        k, j = self.space.check_state(state)
        return self.columns[k - 1].contains(j)

    def complement(self) -> 'StructuredEvent':
        return StructuredEvent(self.space, tuple(c.complement() for c in self.columns))

    def union(self, other: 'StructuredEvent') -> 'StructuredEvent':
        _same_space(self.space, other.space)
        return StructuredEvent(self.space, tuple(a.union(b) for a, b in zip(self.columns, other.columns)))

    def intersection(self, other: 'StructuredEvent') -> 'StructuredEvent':
        _same_space(self.space, other.space)
        return StructuredEvent(self.space, tuple(a.intersection(b) for a, b in zip(self.columns, other.columns)))

    __invert__ = complement
    __or__ = union
    __and__ = intersection

    def __sub__(self, other: 'StructuredEvent') -> 'StructuredEvent':
        return self & ~other

    @property
    def is_empty(self) -> bool:
        return all(c.is_empty for c in self.columns)

    def is_disjoint(self, other: 'StructuredEvent') -> bool:
        return (self & other).is_empty

    def max_index(self) -> int:
        return max((max(c.indices) for c in self.columns if c.indices), default=0)

    def indicator(self) -> 'StructuredRV':
        columns = []
        for c in self.columns:
            inside, outside = (Fraction(0), Fraction(1)) if c.cofinite else (Fraction(1), Fraction(0))
            columns.append(ColumnValues(tuple((j, inside) for j in c.indices), GeometricSequence(outside)))
        return StructuredRV(self.space, tuple(columns))

    def describe(self) -> str:
        parts = []
        for name, c in zip(self.space.columns, self.columns):
            listed = ','.join(str(j) for j in sorted(c.indices))
            if c.cofinite:
                parts.append(f"{name}: all" + (f" except {{{listed}}}" if listed else ""))
            elif c.indices:
                parts.append(f"{name}: {{{listed}}}")
        return '; '.join(parts) if parts else 'empty'


@dataclass(frozen=True)
class ColumnValues:
    exceptions: Tuple[Tuple[int, object], ...]
    pattern: GeometricSequence

    def __post_init__(self):
        pattern = GeometricSequence.of(self.pattern)
        exceptions = {}
        for j, v in self.exceptions:
            j = int(j)
            if j < 1:
                raise ValueError(f"Column indices start at 1, got {j}")
            v = exact_number(v)
            if v != pattern.at(j):
                exceptions[j] = v
        object.__setattr__(self, 'pattern', pattern)
        object.__setattr__(self, 'exceptions', tuple(sorted(exceptions.items())))

    @property
    def eventual(self):
        return self.pattern.constant

    def exception_map(self) -> Dict[int, object]:
        return dict(self.exceptions)

    def value(self, j: int):
        for index, v in self.exceptions:
            if index == j:
                return v
        return self.pattern.at(j)

    def max_index(self) -> int:
        return self.exceptions[-1][0] if self.exceptions else 0


class StructuredRV:
    """A random variable that, on each column, follows a geometric pattern off a finite exception list.

    With a constant pattern this is the eventually-constant representation; a transient
    (ratios in (0, 1)) lets exact infinite sums such as 3 + 2^{-j-1} stay representable.
    """

    def __init__(self, space: StateSpace, columns: Tuple[ColumnValues, ...]):
        if len(columns) != space.size:
            raise ValueError(f"Variable has {len(columns)} columns, space has {space.size}")
        for c in columns:
            if any(not 0 < r < 1 for r in c.pattern.ratios):
                raise UnstructuredResult(f"Transient ratios must lie in (0, 1), got {c.pattern.describe()}")
        self.space = space
        self.columns = tuple(columns)

    @classmethod
    def constant(cls, space: StateSpace, value) -> 'StructuredRV':
        return cls(space, tuple(ColumnValues((), GeometricSequence.of(value)) for _ in space.columns))

    @classmethod
    def build(cls, space: StateSpace, columns: Mapping) -> 'StructuredRV':
        """columns maps a column (name or number) to (exceptions mapping, eventual value or GeometricSequence).

        Columns that are not mentioned are identically 0.
        """
        data = {k: ColumnValues((), GeometricSequence()) for k in space.column_numbers()}
        for column, (exceptions, eventual) in columns.items():
            k = space.column_index(column)
            data[k] = ColumnValues(tuple(dict(exceptions).items()), GeometricSequence.of(eventual))
        return cls(space, tuple(data[k] for k in space.column_numbers()))

    def column(self, column) -> ColumnValues:
        return self.columns[self.space.column_index(column) - 1]

    def eventual(self, column):
        return self.column(column).eventual

    def value(self, state: State):
        k, j = self.space.check_state(state)
        return self.columns[k - 1].value(j)

    __call__ = value

    @property
    def has_transient(self) -> bool:
        return any(c.pattern.terms for c in self.columns)

    @property
    def is_constant(self) -> bool:
        first = self.columns[0].eventual
        return not self.has_transient and all(not c.exceptions and c.eventual == first for c in self.columns)

    def max_index(self) -> int:
        return max(c.max_index() for c in self.columns)

    def _combine(self, other, op) -> 'StructuredRV':
        if not isinstance(other, StructuredRV):
            other = StructuredRV.constant(self.space, other)
        _same_space(self.space, other.space)
        columns = []
        for a, b in zip(self.columns, other.columns):
            indices = {j for j, _ in a.exceptions} | {j for j, _ in b.exceptions}
            exceptions = tuple((j, op(a.value(j), b.value(j))) for j in sorted(indices))
            columns.append(ColumnValues(exceptions, op(a.pattern, b.pattern)))
        return StructuredRV(self.space, tuple(columns))

    def __add__(self, other):
        return self._combine(other, lambda x, y: x + y)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, lambda x, y: x - y)

    def __rsub__(self, other):
        return self._combine(other, lambda x, y: y - x)

    def __neg__(self):
        return self * -1

    def __mul__(self, other):
        return self._combine(other, lambda x, y: x * y)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, StructuredRV):
            return NotImplemented
        return self.space == other.space and self.columns == other.columns

    def __hash__(self):
        return hash((self.space, self.columns))

    def map(self, fn) -> 'StructuredRV':
        """Apply fn pointwise; only eventually-constant variables map to structured results."""
        if self.has_transient:
            raise UnstructuredResult("Cannot map a function over a variable with a geometric transient")
        columns = tuple(
            ColumnValues(tuple((j, fn(v)) for j, v in c.exceptions), GeometricSequence.of(fn(c.eventual)))
            for c in self.columns
        )
        return StructuredRV(self.space, columns)

    def infimum(self) -> Tuple[object, bool, Optional[State]]:
        """Exact infimum over all states, whether it is attained, and a state attaining it."""
        best, best_state = None, None
        limit_only = None
        for k, c in enumerate(self.columns, start=1):
            for j, v in c.exceptions:
                if best is None or v < best:
                    best, best_state = v, (k, j)
            value, attained, j = c.pattern.infimum(1, frozenset(i for i, _ in c.exceptions))
            if attained:
                if best is None or value < best:
                    best, best_state = value, (k, j)
            elif limit_only is None or value < limit_only:
                limit_only = value
        if limit_only is not None and (best is None or limit_only < best):
            return limit_only, False, None
        return best, True, best_state

    def supremum(self) -> Tuple[object, bool, Optional[State]]:
        value, attained, state = (-self).infimum()
        return -value, attained, state

    def describe(self, depth: int = 3) -> str:
        parts = []
        for name, c in zip(self.space.columns, self.columns):
            listed = ', '.join(f"{j}: {v}" for j, v in c.exceptions[:depth])
            more = ' ...' if len(c.exceptions) > depth else ''
            parts.append(f"{name}: {{{listed}{more}}} then {c.pattern.describe()}")
        return '; '.join(parts)

    def __repr__(self):
        return f"StructuredRV({self.describe()})"


def _same_space(a: StateSpace, b: StateSpace) -> None:
    if a != b:
        raise ValueError(f"State spaces differ: {a.columns} vs {b.columns}")


@dataclass(frozen=True)
class GeometricTail:
    """Atom weights coefficient * ratio**j for j > after on one column."""
    column: int
    after: int
    coefficient: Fraction
    ratio: Fraction

    def __post_init__(self):
        object.__setattr__(self, 'coefficient', as_fraction(self.coefficient))
        object.__setattr__(self, 'ratio', as_fraction(self.ratio))
        if self.coefficient < 0:
            raise InvalidCharge(f"Geometric tail on column {self.column} has negative coefficient {self.coefficient}")
        if not 0 < self.ratio < 1:
            raise InvalidCharge(f"Geometric tail ratio must lie in (0, 1), got {self.ratio}")
        if self.after < 0:
            raise InvalidCharge(f"Geometric tail start must be >= 0, got {self.after}")

    def weight(self, j: int) -> Fraction:
        return self.coefficient * self.ratio ** j if j > self.after else Fraction(0)

    def mass(self) -> Fraction:
        return self.coefficient * self.ratio ** (self.after + 1) / (1 - self.ratio)


@dataclass(frozen=True, eq=False)
class Charge:
    """Finitely additive probability: explicit atoms, geometric atom tails and diffuse cofinite masses."""
    space: StateSpace
    atoms: Dict[State, Fraction] = field(default_factory=dict)
    tails: Dict[int, GeometricTail] = field(default_factory=dict)
    diffuse: Dict[int, Fraction] = field(default_factory=dict)
    conditionals: Dict[StructuredEvent, 'Charge'] = field(default_factory=dict)
    name: str = ''

    def __post_init__(self):
        atoms = {}
        for state, weight in self.atoms.items():
            state = self.space.check_state(state)
            weight = as_fraction(weight)
            if weight < 0:
                raise InvalidCharge(f"Atom {self.space.label(state)} has negative weight {weight}")
            if weight:
                atoms[state] = weight
        tails = {}
        for column, tail in self.tails.items():
            k = self.space.column_index(column)
            if tail.column != k:
                tail = GeometricTail(k, tail.after, tail.coefficient, tail.ratio)
            clash = [j for (c, j) in atoms if c == k and j > tail.after]
            if clash:
                raise InvalidCharge(f"Explicit atoms {clash} on column {k} overlap its geometric tail (after {tail.after})")
            tails[k] = tail
        diffuse = {}
        for column, mass in self.diffuse.items():
            k = self.space.column_index(column)
            mass = as_fraction(mass)
            if mass < 0:
                raise InvalidCharge(f"Diffuse mass on column {k} is negative: {mass}")
            if mass:
                diffuse[k] = mass
        for event, conditional in self.conditionals.items():
            _same_space(self.space, event.space)
            _same_space(self.space, conditional.space)
        object.__setattr__(self, 'atoms', atoms)
        object.__setattr__(self, 'tails', tails)
        object.__setattr__(self, 'diffuse', diffuse)
        total = self.total_mass()
        if total != 1:
            raise InvalidCharge(f"Charge total mass must be exactly 1 (normalization), got {total}")

    def total_mass(self) -> Fraction:
        return (sum(self.atoms.values(), Fraction(0))
                + sum((t.mass() for t in self.tails.values()), Fraction(0))
                + sum(self.diffuse.values(), Fraction(0)))

    def atom_weight(self, state: State) -> Fraction:
        k, j = self.space.check_state(state)
        if state in self.atoms:
            return self.atoms[state]
        tail = self.tails.get(k)
        return tail.weight(j) if tail else Fraction(0)

    def diffuse_mass(self, column) -> Fraction:
        return self.diffuse.get(self.space.column_index(column), Fraction(0))

    def column_atom_mass(self, column) -> Fraction:
        k = self.space.column_index(column)
        explicit = sum((w for (c, _), w in self.atoms.items() if c == k), Fraction(0))
        tail = self.tails.get(k)
        return explicit + (tail.mass() if tail else Fraction(0))

    def stable_index(self) -> int:
        """Largest index touched by an explicit atom or a tail start."""
        explicit = max((j for (_, j) in self.atoms), default=0)
        return max([explicit] + [t.after for t in self.tails.values()])

    @property
    def is_countably_additive(self) -> bool:
        return not self.diffuse

    def with_conditional(self, event: StructuredEvent, conditional: 'Charge') -> 'Charge':
        conditionals = dict(self.conditionals)
        conditionals[event] = conditional
        return Charge(self.space, dict(self.atoms), dict(self.tails), dict(self.diffuse), conditionals, self.name)


def prevision(P: Charge, X: StructuredRV):
    """Exact expectation of X under the charge P."""
    _same_space(P.space, X.space)
    total = Fraction(0)
    for state, weight in P.atoms.items():
        total += weight * X.value(state)
    for k in P.space.column_numbers():
        c = X.columns[k - 1]
        tail = P.tails.get(k)
        if tail is not None and tail.coefficient:
            total += c.pattern.weighted_tail_sum(tail.coefficient, tail.ratio, tail.after + 1)
            for j, v in c.exceptions:
                if j > tail.after:
                    total += tail.weight(j) * (v - c.pattern.at(j))
        mass = P.diffuse.get(k)
        if mass:
            # a charge that vanishes on finite sets sees only the limit
            total += mass * c.eventual
    return total


def event_probability(P: Charge, A: StructuredEvent) -> Fraction:
    return prevision(P, A.indicator())


def conditional_prevision(P: Charge, X: StructuredRV, H: StructuredEvent, conditional: Optional[Charge] = None):
    if H.is_empty:
        raise ValueError("Cannot condition on the empty event")
    probability = event_probability(P, H)
    if probability > 0:
        return prevision(P, H.indicator() * X) / probability
    conditional = conditional if conditional is not None else P.conditionals.get(H)
    if conditional is None:
        raise NullConditioningEvent(f"P(H) = 0 for H = {H.describe()} and no conditional charge is attached")
    if event_probability(conditional, H) != 1:
        raise InvalidCharge(f"Conditional charge for {H.describe()} must give it probability 1")
    return prevision(conditional, H.indicator() * X)


@dataclass(frozen=True)
class Partition:
    """Cells covering the space: explicit events, optionally followed by cross-section cells of the remainder."""
    space: StateSpace
    kind: str
    cells: Tuple[StructuredEvent, ...] = ()
    tail: bool = False

    def __post_init__(self):
        if self.kind not in ('cross_section', 'columns', 'explicit'):
            raise ValueError(f"Unknown partition kind {self.kind!r}")
        union = StructuredEvent.empty(self.space)
        for n, cell in enumerate(self.cells, start=1):
            _same_space(self.space, cell.space)
            if cell.is_empty:
                raise ValueError(f"Partition cell {n} is empty")
            if not union.is_disjoint(cell):
                raise ValueError(f"Partition cell {n} overlaps an earlier cell")
            union = union | cell
        if not self.tail and union != StructuredEvent.omega(self.space):
            raise ValueError(f"Partition cells do not cover the space; missing {(~union).describe()}")

    @classmethod
    def cross_section(cls, space: StateSpace) -> 'Partition':
        return cls(space, 'cross_section', (), True)

    @classmethod
    def by_columns(cls, space: StateSpace) -> 'Partition':
        return cls(space, 'columns', tuple(StructuredEvent.column(space, k) for k in space.column_numbers()))

    @classmethod
    def explicit(cls, space: StateSpace, cells, tail: bool = False) -> 'Partition':
        return cls(space, 'explicit', tuple(cells), tail)

    @property
    def remainder(self) -> StructuredEvent:
        remainder = StructuredEvent.omega(self.space)
        for cell in self.cells:
            remainder = remainder - cell
        return remainder

    def section(self, j: int) -> StructuredEvent:
        return self.remainder & StructuredEvent.cross_section(self.space, j)

    def cell_label(self, state: State) -> str:
        for n, cell in enumerate(self.cells, start=1):
            if cell.contains(state):
                return f"cell{n}"
        return f"H{state[1]}"

    def stable_index(self) -> int:
        return max([0] + [cell.max_index() for cell in self.cells])


@dataclass
class PartitionConditionals:
    """Conditional previsions cell by cell, a closed form for the cross-section tail, and Y = P(X|π)."""
    cells: List[Tuple[str, StructuredEvent, Fraction, object]]
    tail_start: Optional[int]
    tail_pattern: Optional[GeometricSequence]
    y: StructuredRV


def partition_conditionals(P: Charge, X: StructuredRV, partition: Partition) -> PartitionConditionals:
    _same_space(P.space, partition.space)
    _same_space(P.space, X.space)
    space = P.space
    cells = []
    cell_values = []
    for n, cell in enumerate(partition.cells, start=1):
        value = conditional_prevision(P, X, cell)
        cells.append((f"cell{n}", cell, event_probability(P, cell), value))
        cell_values.append(value)

    remainder = partition.remainder
    stable = max(P.stable_index(), X.max_index(), partition.stable_index())
    section_values: Dict[int, object] = {}
    tail_pattern = None
    if partition.tail and not remainder.is_empty:
        for j in range(1, stable + 1):
            section = remainder & StructuredEvent.cross_section(space, j)
            if section.is_empty:
                continue
            value = conditional_prevision(P, X, section)
            section_values[j] = value
            cells.append((f"H{j}", section, event_probability(P, section), value))
        open_columns = [k for k in space.column_numbers() if remainder.columns[k - 1].cofinite]
        if open_columns:
            tail_pattern = _section_tail(P, X, open_columns, stable)

    columns = []
    for k in space.column_numbers():
        def value_at(j, k=k):
            for cell, value in zip(partition.cells, cell_values):
                if cell.columns[k - 1].contains(j):
                    return value
            return section_values[j] if j in section_values else tail_pattern.at(j)
        exceptions = tuple((j, value_at(j)) for j in range(1, stable + 1))
        if remainder.columns[k - 1].cofinite:
            pattern = tail_pattern
        else:
            owner = next(v for cell, v in zip(partition.cells, cell_values) if cell.columns[k - 1].cofinite)
            pattern = GeometricSequence.of(owner)
        columns.append(ColumnValues(exceptions, pattern))
    y = StructuredRV(space, tuple(columns))
    logger.debug(f"Conditional previsions: {len(cells)} explicit cells, tail from {stable + 1}")
    return PartitionConditionals(cells, stable + 1 if tail_pattern is not None else None, tail_pattern, y)


def _section_tail(P: Charge, X: StructuredRV, open_columns: List[int], stable: int) -> GeometricSequence:
    """P(X | H_j) for j past every explicit atom, exception and tail start."""
    contributing = [k for k in open_columns if k in P.tails and P.tails[k].coefficient > 0]
    if not contributing:
        probe = StructuredEvent.cross_section(P.space, stable + 1)
        if probe in P.conditionals:
            raise UnstructuredResult("Conditional charges cover only finitely many cross-section cells")
        raise NullConditioningEvent(f"Cross-section cells beyond index {stable} have probability zero")
    patterns = [X.columns[k - 1].pattern for k in contributing]
    if all(p == patterns[0] for p in patterns):
        return patterns[0]
    ratios = {P.tails[k].ratio for k in contributing}
    if len(ratios) != 1:
        raise UnstructuredResult("Cross-section conditionals are not eventually geometric: "
                                 "contributing columns decay at different rates")
    weights = [P.tails[k].coefficient for k in contributing]
    total = sum(weights, Fraction(0))
    result = GeometricSequence()
    for w, p in zip(weights, patterns):
        result = result + p * (w / total)
    return result


def prevision_given_partition(P: Charge, X: StructuredRV, partition: Partition) -> StructuredRV:
    return partition_conditionals(P, X, partition).y
