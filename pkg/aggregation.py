import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import count, product
from typing import Callable, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

from charges import (Charge, ColumnValues, GeometricSequence, Partition, State, StateSpace, StructuredEvent,
                     StructuredRV, UnstructuredResult, as_fraction, event_probability, partition_conditionals, prevision)
from coherence import DominanceVerdict, ForecastEntry, dominance_verdict, solve_exact
from scoring import (RuleFamily, ScoringRule, SpreadReport, check_uniform_similarity, check_uniform_spread,
                     interval_mass, invert_mass)
from settings import DEFAULT_DEPTH, DEFAULT_SAFETY

logger = logging.getLogger(__name__)

DEFAULT_RATIOS = (Fraction(1, 2),)
WITNESS_SCAN = 100000


class DivergentCombination(ValueError):
    pass


class NotNonconglomerable(ValueError):
    pass


class SimilarityViolated(ValueError):
    pass


class PreconditionFailed(ValueError):
    pass


def fit_geometric(values: Sequence[Fraction], ratios: Iterable[Fraction], start: int,
                  what: str) -> Tuple[int, GeometricSequence]:
    """Find the first s >= start from which values[j - 1] (j = 1..len) is constant + sum c * r**j over ratios.

    Every value from s up to the end is checked against the fitted sequence.
    """
    depth = len(values)
    ratios = sorted({as_fraction(r) for r in ratios} - {Fraction(1)})
    n = 1 + len(ratios)
    if any(not isinstance(v, Fraction) for v in values):
        raise UnstructuredResult(f"{what} has non-rational terms and cannot be summed exactly")
    for s in range(start, depth - n):
        rows = [[Fraction(1)] + [r ** i for r in ratios] for i in range(s, s + n)]
        coefficients = solve_exact(rows, [values[i - 1] for i in range(s, s + n)])
        fitted = GeometricSequence(coefficients[0], tuple(zip(coefficients[1:], ratios)))
        if all(values[i - 1] == fitted.at(i) for i in range(s + n, depth + 1)):
            return s, fitted
    raise DivergentCombination(f"{what} does not settle into a geometric pattern with ratios "
                               f"{[str(r) for r in ratios]} within depth {depth}")


def scale_values(values: ColumnValues, factor) -> ColumnValues:
    return ColumnValues(tuple((j, v * factor) for j, v in values.exceptions), values.pattern * factor)


def sequence_extreme(values: Sequence, pattern: Optional[GeometricSequence], start: Optional[int],
                     lowest: bool = True) -> Tuple[Optional[Fraction], bool]:
    """Extreme of finitely many explicit values together with a geometric tail from start on."""
    def better(a, b):
        return a < b if lowest else a > b

    best, attained = None, False
    for v in values:
        if best is None or better(v, best):
            best, attained = v, True
    if pattern is not None:
        v, tail_attained, _ = pattern.infimum(start) if lowest else pattern.supremum(start)
        if v is None:
            return None, False
        if best is None or better(v, best):
            best, attained = v, tail_attained
        elif v == best:
            attained = attained or tail_attained
    return best, attained


def nonpositive_state(rv: StructuredRV) -> Optional[State]:
    """A state where rv <= 0, if there is one."""
    value, attained, state = rv.infimum()
    if value > 0 or (value == 0 and not attained):
        return None
    if attained:
        return state
    for j in count(1):
        for k in rv.space.column_numbers():
            if rv.value((k, j)) <= 0:
                return k, j
        if j > WITNESS_SCAN:
            return None


@dataclass(frozen=True)
class CombinationEntry:
    """A forecast entry taken either as a fair option, as a scored forecast, or as |fair option|."""
    entry: ForecastEntry
    kind: str

    def __post_init__(self):
        if self.kind not in ('fair_option', 'scored', 'absolute'):
            raise ValueError(f"Unknown combination kind {self.kind!r}")

    def value(self, state: State):
        if self.kind == 'scored':
            return self.entry.score_at(state)
        loss = self.entry.fair_loss_at(state)
        return abs(loss) if self.kind == 'absolute' else loss

    def eventual(self, column: int):
        if self.kind == 'scored':
            return self.entry.eventual_score(column)
        loss = self.entry.eventual_fair_loss(column)
        return abs(loss) if self.kind == 'absolute' else loss

    def total(self) -> StructuredRV:
        if self.kind == 'scored':
            return self.entry.score_term()
        loss = self.entry.fair_loss()
        return loss.map(abs) if self.kind == 'absolute' else loss


@dataclass(frozen=True)
class RivalForecasts:
    head: Tuple[Fraction, ...]
    indexed: Optional[ColumnValues] = None
    label: str = 'rival'

    def describe(self) -> str:
        parts = [str(q) for q in self.head]
        if self.indexed is not None:
            listed = ', '.join(f"{j}: {v}" for j, v in self.indexed.exceptions)
            parts.append(f"{{{listed}}} then {self.indexed.pattern.describe()}")
        return '; '.join(parts)


@dataclass
class EntryFamily:
    """Finitely many head entries plus indexed entries i -> entry_i (i >= 1).

    Entry i may differ from its eventual value only at indices i + o for o in window, so each
    per-state total is a background sum of eventual values plus a local correction. Both are
    recovered exactly by fitting geometric patterns with the declared ratios.
    """
    space: StateSpace
    head: Tuple[ForecastEntry, ...] = ()
    make_entry: Optional[Callable[[int], ForecastEntry]] = None
    window: Tuple[int, ...] = (0,)
    ratios: Tuple[Fraction, ...] = DEFAULT_RATIOS
    regular_from: int = 1
    label: str = 'family'
    forecasts: Optional[ColumnValues] = None

    def entry(self, i: int) -> ForecastEntry:
        if self.make_entry is None:
            raise ValueError(f"Family {self.label} has no indexed entries")
        return self.make_entry(i)

    def original_forecasts(self) -> RivalForecasts:
        return RivalForecasts(tuple(e.forecast for e in self.head), self.forecasts, self.label)

    def with_forecasts(self, rival: RivalForecasts) -> 'EntryFamily':
        if len(rival.head) != len(self.head):
            raise ValueError(f"Rival has {len(rival.head)} head forecasts, family has {len(self.head)}")
        head = tuple(e.with_forecast(q) for e, q in zip(self.head, rival.head))
        make = None
        if self.make_entry is not None:
            if rival.indexed is None:
                raise ValueError(f"Rival {rival.label} gives no indexed forecasts")
            base, indexed = self.make_entry, rival.indexed
            make = lambda i: base(i).with_forecast(indexed.value(i))  # noqa: E731
        return replace(self, head=head, make_entry=make, label=rival.label, forecasts=rival.indexed)

    def with_coefficients(self, head: Sequence, indexed: Optional[ColumnValues]) -> 'EntryFamily':
        if len(head) != len(self.head):
            raise ValueError(f"{len(head)} head coefficients for {len(self.head)} head entries")
        entries = tuple(replace(e, coefficient=as_fraction(a)) for e, a in zip(self.head, head))
        make = None
        if self.make_entry is not None:
            base = self.make_entry
            make = lambda i: replace(base(i), coefficient=indexed.value(i))  # noqa: E731
        return replace(self, head=entries, make_entry=make)

    def combine(self, kind: str, depth: int = DEFAULT_DEPTH) -> StructuredRV:
        total = StructuredRV.constant(self.space, 0)
        for e in self.head:
            total = total + CombinationEntry(e, kind).total()
        if self.make_entry is None:
            return total

        unknowns = 1 + len(set(self.ratios) - {Fraction(1)})
        reach = max(0, max(self.window))
        if depth < self.regular_from + reach + unknowns + 2:
            raise ValueError(f"Depth {depth} is too small to verify the tail of {self.label}")
        cache = {}

        def term(i: int) -> CombinationEntry:
            if i not in cache:
                cache[i] = CombinationEntry(self.make_entry(i), kind)
            return cache[i]

        self._check_locality(term, depth)
        columns = []
        for k in self.space.column_numbers():
            name = self.space.columns[k - 1]
            eventual = [term(i).eventual(k) for i in range(1, depth + 1)]
            s, tail = fit_geometric(eventual, self.ratios, self.regular_from, f"{self.label} terms on column {name}")
            if tail.constant != 0:
                raise DivergentCombination(f"{self.label} terms on column {name} tend to {tail.constant}; "
                                           f"the series diverges")
            background = sum(eventual[:s - 1], Fraction(0)) + tail.tail_sum(s)
            corrections = []
            for j in range(1, depth + 1):
                c = Fraction(0)
                for o in self.window:
                    i = j - o
                    if i >= 1:
                        c += term(i).value((k, j)) - term(i).eventual(k)
                corrections.append(c)
            s2, local = fit_geometric(corrections, self.ratios, self.regular_from + reach,
                                      f"{self.label} local corrections on column {name}")
            exceptions = tuple((j, background + corrections[j - 1]) for j in range(1, s2))
            columns.append(ColumnValues(exceptions, local + background))
        logger.debug(f"Combined {kind} of {self.label} over depth {depth}")
        return total + StructuredRV(self.space, tuple(columns))

    def _check_locality(self, term, depth: int) -> None:
        for i in range(1, depth + 1):
            for k in self.space.column_numbers():
                for j in term(i).entry.exception_indices(k):
                    if j - i not in self.window:
                        raise UnstructuredResult(f"Entry {i} of {self.label} varies at index {j}, "
                                                 f"outside its window {list(self.window)}")


def _check_space(P: Charge, family: EntryFamily) -> None:
    if P.space != family.space:
        raise ValueError(f"Charge and family {family.label} live on different state spaces")


def combined_fair_loss(P: Charge, family: EntryFamily, depth: int = DEFAULT_DEPTH,
                       coefficients: Optional[Tuple[Sequence, Optional[ColumnValues]]] = None) -> StructuredRV:
    """Per-state total of sum alpha_i H_i (X_i - p_i)."""
    _check_space(P, family)
    if coefficients is not None:
        family = family.with_coefficients(*coefficients)
    return family.combine('fair_option', depth)


def combined_score(P: Charge, family: EntryFamily, depth: int = DEFAULT_DEPTH) -> StructuredRV:
    _check_space(P, family)
    return family.combine('scored', depth)


def abstain_dominance(loss: StructuredRV) -> Optional[Fraction]:
    """Uniform margin by which abstaining (loss 0) beats the combined option, if any."""
    value, _, _ = loss.infimum()
    return value if value > 0 else None


@dataclass
class ConditionReport:
    V: Optional[Fraction]
    W: Optional[Fraction]
    spread: SpreadReport
    verdict: str
    violations: List[str] = field(default_factory=list)


def thm1_condition_check(P: Charge, family: EntryFamily, rules=None, epsilon=1,
                         depth: int = DEFAULT_DEPTH) -> ConditionReport:
    """Finite V = P[sum |X_i - p_i|], finite W = P[sum g_i(X_i, p_i)] and uniform spread of the rules."""
    _check_space(P, family)
    violations = []
    try:
        V = prevision(P, family.combine('absolute', depth))
    except DivergentCombination as e:
        V = None
        violations.append(f"V is infinite ({e})")
    try:
        W = prevision(P, family.combine('scored', depth))
    except DivergentCombination as e:
        W = None
        violations.append(f"W is infinite ({e})")
    if rules:
        spread = check_uniform_spread(rules, epsilon, depth)
    else:
        spread = SpreadReport('satisfied', as_fraction(epsilon))
    if spread.verdict != 'satisfied':
        violations.append(f"uniform spread {spread.verdict}")
    verdict = 'conditions-met' if not violations else 'violated'
    logger.info(f"[{'OK' if not violations else 'FAIL'}] Sum conditions for {family.label}: V = {V}, W = {W}, "
                f"spread {spread.verdict}")
    return ConditionReport(V, W, spread, verdict, violations)


@dataclass
class ConglomerabilityVerdict:
    conglomerable: bool
    prevision: Fraction
    infimum: Optional[Fraction]
    supremum: Optional[Fraction]
    inf_attained: bool = False
    sup_attained: bool = False
    gap: Optional[Fraction] = None
    side: Optional[str] = None


def conglomerability_verdict(P: Charge, X: StructuredRV, partition: Partition) -> ConglomerabilityVerdict:
    table = partition_conditionals(P, X, partition)
    px = prevision(P, X)
    values = [value for _, _, _, value in table.cells]
    low, low_attained = sequence_extreme(values, table.tail_pattern, table.tail_start, lowest=True)
    high, high_attained = sequence_extreme(values, table.tail_pattern, table.tail_start, lowest=False)
    if low is not None and px < low:
        result = ConglomerabilityVerdict(False, px, low, high, low_attained, high_attained, low - px, 'inf')
    elif high is not None and px > high:
        result = ConglomerabilityVerdict(False, px, low, high, low_attained, high_attained, px - high, 'sup')
    else:
        result = ConglomerabilityVerdict(True, px, low, high, low_attained, high_attained)
    logger.debug(f"Conglomerability: P(X) = {px}, conditionals in [{low}, {high}]")
    return result


@dataclass
class LtpVerdict:
    holds: bool
    prevision_x: Fraction
    prevision_y: Fraction
    y: StructuredRV


def ltp_verdict(P: Charge, X: StructuredRV, partition: Partition) -> LtpVerdict:
    y = partition_conditionals(P, X, partition).y
    px, py = prevision(P, X), prevision(P, y)
    return LtpVerdict(px == py, px, py, y)


@dataclass
class ClassVerdict:
    members: List[dict]
    conglomerable: bool
    ltp_holds: bool

    @property
    def agree(self) -> bool:
        return self.conglomerable == self.ltp_holds


def class_verdicts(P: Charge, variables: Sequence[Tuple[str, StructuredRV]], partition: Partition) -> ClassVerdict:
    """Conglomerability and the law of total previsions over {X, X - P(X|partition)} for each X."""
    members = []
    for name, X in variables:
        y = ltp_verdict(P, X, partition).y
        for label, Z in ((name, X), (f"{name} - P({name}|pi)", X - y)):
            members.append({
                'variable': label,
                'conglomerable': conglomerability_verdict(P, Z, partition).conglomerable,
                'ltp_holds': ltp_verdict(P, Z, partition).holds,
            })
    conglomerable = all(m['conglomerable'] for m in members)
    ltp_holds = all(m['ltp_holds'] for m in members)
    return ClassVerdict(members, conglomerable, ltp_holds)


class ConditionalSystem:
    """X forecast unconditionally (rule0) and given each cross-section cell H_j (cell rule j)."""

    def __init__(self, P: Charge, X: StructuredRV, partition: Partition, rule0: ScoringRule,
                 cell_rules: RuleFamily, ratios: Tuple[Fraction, ...] = DEFAULT_RATIOS, label: str = 'system'):
        if partition.kind != 'cross_section':
            raise ValueError("Conditional systems are indexed by a cross-section partition")
        self.P = P
        self.X = X
        self.partition = partition
        self.rule0 = rule0
        self.cell_rules = RuleFamily.of(cell_rules)
        self.ratios = tuple(ratios)
        self.label = label
        self.conditionals = partition_conditionals(P, X, partition)
        self.p_x = prevision(P, X)
        explicit = tuple((int(name[1:]), value) for name, _, _, value in self.conditionals.cells)
        self.p_cells = ColumnValues(explicit, self.conditionals.tail_pattern)
        logger.info(f"[START] Conditional system {label}: P(X) = {self.p_x}, "
                    f"P(X|H_j) = {self.p_cells.pattern.describe()} beyond the listed cells")

    def head_entry(self) -> ForecastEntry:
        return ForecastEntry.unconditional(self.X, self.p_x, rule=self.rule0, label='X')

    def entry(self, j: int) -> ForecastEntry:
        return ForecastEntry(self.X, StructuredEvent.cross_section(self.X.space, j), self.p_cells.value(j),
                             self.cell_rules.member(j), Fraction(1), f"X|H{j}")

    def family(self) -> EntryFamily:
        return EntryFamily(self.X.space, (self.head_entry(),), self.entry, (0,), self.ratios, 1,
                           self.label, self.p_cells)

    def rule_family(self) -> RuleFamily:
        return self.cell_rules.with_head(self.rule0)

    def reflected(self) -> 'ConditionalSystem':
        return ConditionalSystem(self.P, -self.X, self.partition, self.rule0.reflected(),
                                 self.cell_rules.reflected(), self.ratios, f"{self.label} (reflected)")


@dataclass
class Thm2Construction:
    """Rival forecasts beating a nonconglomerable conditional system by at least delta in every state."""
    epsilon: Fraction
    side: str
    w0: Fraction
    w1: Fraction
    w2: Fraction
    q_prime: Fraction
    q_x: Fraction
    q_cells: ColumnValues
    delta: Fraction
    rival: RivalForecasts
    margin: Fraction
    verdict: DominanceVerdict
    fair_alphas: Tuple[Fraction, Fraction]
    fair_loss: StructuredRV
    abstain_margin: Optional[Fraction]

    def verify(self, system: ConditionalSystem, depth: int = DEFAULT_DEPTH) -> bool:
        """Re-score both families in every state and recheck the equal-mass moves."""
        if interval_mass(system.rule0.measure, system.p_x, self.rival.head[0]) != self.w2:
            return False
        checked = max((j for j, _ in self.rival.indexed.exceptions), default=0) + 3
        for j in range(1, checked + 1):
            rule = system.cell_rules.member(j)
            if interval_mass(rule.measure, system.p_cells.value(j), self.rival.indexed.value(j)) != self.w2:
                return False
        family = system.family()
        original = combined_score(system.P, family, depth)
        rival_total = combined_score(system.P, family.with_forecasts(self.rival), depth)
        margin, _, _ = (original - rival_total).infimum()
        return margin >= self.delta


def thm2_rival_construction(system: ConditionalSystem, safety=DEFAULT_SAFETY,
                            depth: int = DEFAULT_DEPTH) -> Thm2Construction:
    safety = as_fraction(safety)
    if not 0 < safety < 1:
        raise ValueError(f"Safety factor must lie in (0, 1), got {safety}")
    verdict = conglomerability_verdict(system.P, system.X, system.partition)
    if verdict.conglomerable:
        raise NotNonconglomerable(f"P(X) = {verdict.prevision} lies within the conditional range "
                                  f"[{verdict.infimum}, {verdict.supremum}]")
    # the sup side is handled through -X with reflected rules
    work = system if verdict.side == 'inf' else system.reflected()
    sign = 1 if verdict.side == 'inf' else -1
    epsilon = verdict.gap
    p_x = work.p_x
    measure0 = work.rule0.measure

    w0 = interval_mass(measure0, p_x, p_x + epsilon) / 2
    similarity = check_uniform_similarity(work.rule_family(), work.rule0, w0, depth)
    if similarity.verdict != 'satisfied':
        raise SimilarityViolated(f"No similarity constant for epsilon = {w0}: {similarity.verdict}")
    w1 = similarity.gamma
    if not isinstance(w0, Fraction) or not isinstance(w1, Fraction):
        raise UnstructuredResult(f"Rival construction for {system.label} needs rational interval masses; "
                                 f"{work.rule0.id} gives w0 = {w0}, w1 = {w1}")
    q_prime = invert_mass(measure0, p_x + epsilon, w0, 'down')
    w2 = safety * min(w0, w1)
    q_x = invert_mass(measure0, p_x, w2, 'up')
    if not isinstance(q_prime, Fraction) or not isinstance(q_x, Fraction):
        raise UnstructuredResult(f"Rival construction for {system.label} gives irrational forecasts "
                                 f"q' = {q_prime}, q_X = {q_x} under {work.rule0.id}")
    q_values = [invert_mass(work.cell_rules.member(j).measure, work.p_cells.value(j), w2, 'down')
                for j in range(1, depth + 1)]
    s, pattern = fit_geometric(q_values, work.ratios, 1, "rival conditional forecasts")
    q_cells = ColumnValues(tuple((j, q_values[j - 1]) for j in range(1, s)), pattern)
    delta = w2 * (q_prime - q_x)
    rival = RivalForecasts((sign * q_x,), scale_values(q_cells, sign), 'construction')

    family = system.family()
    original = combined_score(system.P, family, depth)
    rival_total = combined_score(system.P, family.with_forecasts(rival), depth)
    dominance = dominance_verdict(original, rival_total)
    margin, _, _ = (original - rival_total).infimum()
    if margin < delta:
        raise ValueError(f"Constructed rival improves by only {margin}, below delta = {delta}")

    alphas = (Fraction(sign), Fraction(-sign))
    fair_loss = combined_fair_loss(system.P, family, depth, ((alphas[0],), ColumnValues((), alphas[1])))
    abstain = abstain_dominance(fair_loss)
    logger.info(f"[OK] Rival construction for {system.label}: delta = {delta}, margin = {margin}, "
                f"q_X = {rival.head[0]}")
    return Thm2Construction(epsilon, verdict.side, w0, w1, w2, q_prime, q_x, q_cells, delta, rival,
                            margin, dominance, alphas, fair_loss, abstain)


@dataclass
class RivalGrid:
    """Rival families: head forecasts and q_1..q_L on a grid, then one constant tail value."""
    step: Fraction = Fraction(1, 16)
    lo: Optional[Fraction] = None
    hi: Optional[Fraction] = None
    prefix_length: int = 0

    def __post_init__(self):
        self.step = as_fraction(self.step)
        if self.step <= 0:
            raise ValueError(f"Grid step must be positive, got {self.step}")
        if self.prefix_length < 0:
            raise ValueError(f"Prefix length must be >= 0, got {self.prefix_length}")

    def hull(self, family: EntryFamily) -> Tuple[Fraction, Fraction]:
        if self.lo is not None and self.hi is not None:
            return as_fraction(self.lo), as_fraction(self.hi)
        entries = list(family.head)
        if family.make_entry is not None:
            entries += [family.entry(i) for i in range(1, self.prefix_length + 3)]
        lows = [e.variable.infimum()[0] for e in entries] + [e.forecast for e in entries]
        highs = [e.variable.supremum()[0] for e in entries] + [e.forecast for e in entries]
        lo = as_fraction(self.lo) if self.lo is not None else min(lows)
        hi = as_fraction(self.hi) if self.hi is not None else max(highs)
        return lo, hi

    def points(self, lo: Fraction, hi: Fraction) -> List[Fraction]:
        result = []
        q = lo
        while q <= hi:
            result.append(q)
            q += self.step
        if result[-1] != hi:
            result.append(hi)
        return result

    def rivals(self, family: EntryFamily) -> Iterator[RivalForecasts]:
        points = self.points(*self.hull(family))
        original = family.original_forecasts()
        for head in product(points, repeat=len(family.head)):
            if family.make_entry is None:
                candidate = RivalForecasts(tuple(head), None, f"rival {list(map(str, head))}")
                if candidate.head != original.head:
                    yield candidate
                continue
            for prefix in product(points, repeat=self.prefix_length):
                for tail in points:
                    indexed = ColumnValues(tuple((j, q) for j, q in enumerate(prefix, start=1)),
                                           GeometricSequence(tail))
                    candidate = RivalForecasts(tuple(head), indexed, "rival")
                    if candidate.head == original.head and indexed == original.indexed:
                        continue
                    yield replace(candidate, label=f"rival {candidate.describe()}")


@dataclass
class RivalOutcome:
    label: str
    status: str
    epsilon: Optional[Fraction] = None
    witness: Optional[State] = None
    expected: Optional[Fraction] = None


@dataclass
class RivalProbeReport:
    family: str
    outcomes: List[RivalOutcome]

    @property
    def dominated(self) -> bool:
        return any(o.status == 'dominates' for o in self.outcomes)

    @property
    def skipped(self) -> int:
        return sum(o.status == 'infinite_total' for o in self.outcomes)


def _rival_totals(P: Charge, family: EntryFamily, rivals: Iterable[RivalForecasts],
                  depth: int) -> Iterator[Tuple[RivalForecasts, Optional[StructuredRV]]]:
    for rival in rivals:
        try:
            yield rival, combined_score(P, family.with_forecasts(rival), depth)
        except DivergentCombination as e:
            logger.warning(f"[SKIP] {rival.label}: infinite total ({e})")
            yield rival, None


def rival_dominance_probe(P: Charge, family: EntryFamily, rivals: Iterable[RivalForecasts],
                          depth: int = DEFAULT_DEPTH) -> RivalProbeReport:
    """Exact improvement of each rival over the family's own forecasts, state by state."""
    original = combined_score(P, family, depth)
    outcomes = []
    for rival, total in _rival_totals(P, family, rivals, depth):
        if total is None:
            outcomes.append(RivalOutcome(rival.label, 'infinite_total'))
            continue
        verdict = dominance_verdict(original, total)
        if verdict.kind == 'uniform_strict':
            outcome = RivalOutcome(rival.label, 'dominates', verdict.epsilon, None)
        elif verdict.kind == 'simple':
            outcome = RivalOutcome(rival.label, 'simple')
        else:
            outcome = RivalOutcome(rival.label, 'no_dominance', None, nonpositive_state(original - total))
        logger.debug(f"{rival.label}: {outcome.status}")
        outcomes.append(outcome)
    report = RivalProbeReport(family.label, outcomes)
    logger.info(f"[{'FAIL' if report.dominated else 'OK'}] Probed {len(outcomes)} rivals against {family.label}; "
                f"{report.skipped} with infinite totals")
    return report


DEFAULT_ALPHA_PATTERNS = (
    ('head +1, cells -1', (Fraction(1),), ColumnValues((), GeometricSequence(-1))),
    ('head -1, cells +1', (Fraction(-1),), ColumnValues((), GeometricSequence(1))),
    ('head 2, cell 1 at -3, cells -2', (Fraction(2),), ColumnValues(((1, Fraction(-3)),), GeometricSequence(-2))),
    ('finitely many cells', (Fraction(0),), ColumnValues(((1, Fraction(1)), (2, Fraction(-1))), GeometricSequence(0))),
)


@dataclass
class Thm3Report:
    ltp: LtpVerdict
    conditionals_consistent: bool
    fair_loss_previsions: List[Tuple[str, Fraction]]
    probe: RivalProbeReport

    @property
    def passed(self) -> bool:
        return (self.conditionals_consistent and all(v == 0 for _, v in self.fair_loss_previsions)
                and not self.probe.dominated)


def thm3_no_dominance_probe(system: ConditionalSystem, grid: RivalGrid, depth: int = DEFAULT_DEPTH,
                            alpha_patterns=DEFAULT_ALPHA_PATTERNS) -> Thm3Report:
    ltp = ltp_verdict(system.P, system.X, system.partition)
    if not ltp.holds:
        raise PreconditionFailed(f"Law of total previsions fails: P(X) = {ltp.prevision_x}, "
                                 f"P(P(X|pi)) = {ltp.prevision_y}")
    consistent = True
    last = max(system.conditionals.tail_start or 1, 1) + 2
    for j in range(1, last + 1):
        cell = StructuredEvent.cross_section(system.X.space, j)
        if prevision(system.P, cell.indicator() * system.X) != \
                event_probability(system.P, cell) * system.p_cells.value(j):
            consistent = False
    family = system.family()
    previsions = []
    for label, head, cells in alpha_patterns:
        loss = combined_fair_loss(system.P, family, depth, (head, cells))
        previsions.append((label, prevision(system.P, loss)))
    probe = rival_dominance_probe(system.P, family, grid.rivals(family), depth)
    return Thm3Report(ltp, consistent, previsions, probe)


@dataclass
class SumProprietyReport:
    proper: bool
    expected_original: Fraction
    witness: Optional[str] = None
    witness_expected: Optional[Fraction] = None
    best: Optional[str] = None
    best_expected: Optional[Fraction] = None
    construction_included: bool = False
    compared: int = 0
    skipped: int = 0


def propriety_of_infinite_sum(P: Charge, system: Union[ConditionalSystem, EntryFamily], depth: int = DEFAULT_DEPTH,
                              grid: RivalGrid = None, safety=DEFAULT_SAFETY) -> SumProprietyReport:
    """Does announcing the forecasts themselves minimize the expected total score among the rivals?"""
    grid = grid or RivalGrid()
    family = system.family() if isinstance(system, ConditionalSystem) else system
    expected_original = prevision(P, combined_score(P, family, depth))
    candidates: List[RivalForecasts] = []
    included = False
    if isinstance(system, ConditionalSystem):
        try:
            candidates.append(thm2_rival_construction(system, safety, depth).rival)
            included = True
        except (NotNonconglomerable, SimilarityViolated) as e:
            logger.info(f"[SKIP] No constructed rival for {system.label}: {e}")
    candidates.extend(grid.rivals(family))

    report = SumProprietyReport(True, expected_original, construction_included=included)
    for rival, total in _rival_totals(P, family, candidates, depth):
        if total is None:
            report.skipped += 1
            continue
        report.compared += 1
        expected = prevision(P, total)
        if expected < expected_original:
            report.proper = False
            if report.witness is None:
                report.witness, report.witness_expected = rival.label, expected
            if report.best_expected is None or expected < report.best_expected:
                report.best, report.best_expected = rival.label, expected
    logger.info(f"[{'OK' if report.proper else 'FAIL'}] Infinite-sum propriety for {family.label}: "
                f"expected total {expected_original}, {report.compared} rivals compared, {report.skipped} skipped")
    return report
