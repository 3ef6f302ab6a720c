import logging
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple, Union

import sympy as sy

from charges import Charge, GeometricSequence, StructuredRV, as_fraction, exact_number, prevision

logger = logging.getLogger(__name__)

DEFAULT_RUNGS = 6


class DegenerateInterval(ValueError):
    pass


class OutOfRange(ValueError):
    pass


def _symbolic(value):
    if isinstance(value, Fraction):
        return sy.Rational(value.numerator, value.denominator)
    if isinstance(value, int):
        return sy.Integer(value)
    return value


def to_exact(expr):
    """Collapse a sympy result to a Fraction when it is rational."""
    if isinstance(expr, (int, Fraction)):
        return Fraction(expr)
    return exact_number(sy.radsimp(sy.simplify(expr)))


def _symbolic_score(x, mass, moment):
    return to_exact(_symbolic(x) * _symbolic(mass) - _symbolic(moment))


@dataclass(frozen=True)
class PiecewiseDensity:
    """Density values[p] on (-inf, b0], (b0, b1], ..., (b_{m-1}, inf)."""
    breakpoints: Tuple[Fraction, ...] = ()
    values: Tuple[Fraction, ...] = (Fraction(2),)

    kind = 'piecewise'

    def __post_init__(self):
        breakpoints = tuple(as_fraction(b) for b in self.breakpoints)
        values = tuple(as_fraction(v) for v in self.values)
        if len(values) != len(breakpoints) + 1:
            raise ValueError(f"{len(breakpoints)} breakpoints need {len(breakpoints) + 1} density values, got {len(values)}")
        if any(a >= b for a, b in zip(breakpoints, breakpoints[1:])):
            raise ValueError(f"Breakpoints must be strictly increasing: {[str(b) for b in breakpoints]}")
        if any(v <= 0 for v in values):
            raise ValueError(f"Density values must be positive: {[str(v) for v in values]}")
        object.__setattr__(self, 'breakpoints', breakpoints)
        object.__setattr__(self, 'values', values)

    def density_at(self, v) -> Fraction:
        return self.values[bisect_left(self.breakpoints, v)]

    def integrals(self, a, b) -> Tuple[Fraction, Fraction]:
        """Signed (mass, first moment) of the density from a to b."""
        if a == b:
            return Fraction(0), Fraction(0)
        if a > b:
            mass, moment = self.integrals(b, a)
            return -mass, -moment
        points = [a] + [p for p in self.breakpoints if a < p < b] + [b]
        mass, moment = Fraction(0), Fraction(0)
        for lo, hi in zip(points, points[1:]):
            f = self.density_at((lo + hi) / 2)
            mass += f * (hi - lo)
            moment += f * (hi * hi - lo * lo) / 2
        return mass, moment

    def invert(self, anchor, m, direction: str):
        remaining = m
        current = anchor
        if direction == 'up':
            for b in (p for p in self.breakpoints if p > anchor):
                f = self.density_at((current + b) / 2)
                if f * (b - current) >= remaining:
                    return current + remaining / f
                remaining -= f * (b - current)
                current = b
            return current + remaining / self.values[-1]
        for b in (p for p in reversed(self.breakpoints) if p < anchor):
            f = self.density_at((current + b) / 2)
            if f * (current - b) >= remaining:
                return current - remaining / f
            remaining -= f * (current - b)
            current = b
        return current - remaining / self.values[0]

    def pieces(self) -> List[Tuple[Optional[Fraction], Optional[Fraction], Fraction]]:
        bounds = [None] + list(self.breakpoints) + [None]
        return [(lo, hi, f) for lo, hi, f in zip(bounds, bounds[1:], self.values)]

    def sup(self) -> Fraction:
        return max(self.values)

    def inf(self) -> Fraction:
        return min(self.values)

    def scaled(self, factor) -> 'PiecewiseDensity':
        return PiecewiseDensity(self.breakpoints, tuple(v * as_fraction(factor) for v in self.values))

    def reflected(self) -> 'PiecewiseDensity':
        """The density v -> f(-v)."""
        return PiecewiseDensity(tuple(-b for b in reversed(self.breakpoints)), tuple(reversed(self.values)))

    def describe(self) -> str:
        if not self.breakpoints:
            return f"f = {self.values[0]}"
        return f"f = {self.values[0]} up to {self.breakpoints[0]}, " + ', '.join(
            f"{v} above {b}" for b, v in zip(self.breakpoints, self.values[1:]))


@dataclass(frozen=True)
class SqrtDensity:
    """f(v) = scale * |v|^(-1/2) / 2; mass and moments in closed form through sympy."""
    scale: Fraction = Fraction(1)

    kind = 'sqrt'

    def __post_init__(self):
        scale = as_fraction(self.scale)
        if scale <= 0:
            raise ValueError(f"Square-root density scale must be positive, got {scale}")
        object.__setattr__(self, 'scale', scale)

    def density_at(self, v):
        if v == 0:
            return sy.oo
        return to_exact(_symbolic(self.scale) / (2 * sy.sqrt(abs(_symbolic(v)))))

    def antiderivative(self, x):
        x = _symbolic(x)
        return _symbolic(self.scale) * sy.sign(x) * sy.sqrt(abs(x))

    def first_moment(self, x):
        x = _symbolic(x)
        return _symbolic(self.scale) / 3 * abs(x) ** sy.Rational(3, 2)

    def integrals(self, a, b):
        mass = self.antiderivative(b) - self.antiderivative(a)
        moment = self.first_moment(b) - self.first_moment(a)
        return to_exact(mass), to_exact(moment)

    def invert(self, anchor, m, direction: str):
        target = self.antiderivative(anchor) + (_symbolic(m) if direction == 'up' else -_symbolic(m))
        return to_exact(sy.sign(target) * (target / _symbolic(self.scale)) ** 2)

    def sup(self):
        return None

    def inf(self) -> Fraction:
        return Fraction(0)

    def scaled(self, factor) -> 'SqrtDensity':
        return SqrtDensity(self.scale * as_fraction(factor))

    def reflected(self) -> 'SqrtDensity':
        return self

    def describe(self) -> str:
        return f"f = {self.scale}*|v|^(-1/2)/2"


LambdaMeasure = Union[PiecewiseDensity, SqrtDensity]


@dataclass(frozen=True)
class ScoringRule:
    id: str
    measure: LambdaMeasure
    note: str = ''

    @classmethod
    def brier(cls, weight=1, id: str = None) -> 'ScoringRule':
        weight = as_fraction(weight)
        if weight <= 0:
            raise ValueError(f"Brier weight must be positive, got {weight}")
        name = id or ('brier' if weight == 1 else f"brier*{weight}")
        return cls(name, PiecewiseDensity((), (2 * weight,)), f"{weight}-weighted Brier score")

    @classmethod
    def sqrt(cls, scale=1, id: str = None) -> 'ScoringRule':
        return cls(id or f"sqrt*{scale}", SqrtDensity(as_fraction(scale)))

    def brier_weight(self) -> Optional[Fraction]:
        if self.measure.kind == 'piecewise' and len(self.measure.values) == 1:
            return self.measure.values[0] / 2
        return None

    def scaled(self, factor, id: str = None) -> 'ScoringRule':
        return ScoringRule(id or f"{self.id}*{factor}", self.measure.scaled(factor), self.note)

    def reflected(self) -> 'ScoringRule':
        """Rule with g'(-x, -q) = g(x, q)."""
        return ScoringRule(self.id, self.measure.reflected(), self.note)


def interval_mass(measure: LambdaMeasure, a, b):
    if a > b:
        a, b = b, a
    return measure.integrals(a, b)[0]


def barycenter(measure: LambdaMeasure, a, b):
    """Mean of the normalized measure on (a, b)."""
    if a == b:
        raise DegenerateInterval(f"Barycenter of the empty interval ({a}, {b})")
    if a > b:
        a, b = b, a
    mass, moment = measure.integrals(a, b)
    if measure.kind == 'sqrt':
        return to_exact(_symbolic(moment) / _symbolic(mass))
    return moment / mass


def score(g: ScoringRule, x, q):
    """g(x, q) = integral from q to x of (x - v) dλ(v)."""
    mass, moment = g.measure.integrals(q, x)
    if g.measure.kind == 'piecewise':
        return x * mass - moment
    return _symbolic_score(x, mass, moment)


def score_difference(g: ScoringRule, x, q, p):
    """g(x, q) - g(x, p) as λ((q, p)) * [x - r(q, p, λ)] with signed mass."""
    if p == q:
        return Fraction(0)
    mass = interval_mass(g.measure, q, p)
    signed = mass if q < p else -mass
    center = barycenter(g.measure, q, p)
    if g.measure.kind == 'sqrt':
        return to_exact(_symbolic(signed) * (_symbolic(x) - _symbolic(center)))
    return signed * (x - center)


def invert_mass(measure: LambdaMeasure, anchor, m, direction: str = 'up'):
    if direction not in ('up', 'down'):
        raise ValueError(f"Direction must be 'up' or 'down', got {direction!r}")
    if m <= 0:
        raise ValueError(f"Mass to invert must be positive, got {m}")
    return measure.invert(anchor, m, direction)


def expected_score(P: Charge, X: StructuredRV, g: ScoringRule, q):
    return prevision(P, X.map(lambda x: score(g, x, q)))


@dataclass
class ProprietyReport:
    rule: str
    prevision: Fraction
    argmin: Fraction
    margin: Optional[Fraction]
    passed: bool
    table: List[Tuple[Fraction, Fraction]] = field(default_factory=list)


def propriety_probe(g: ScoringRule, P: Charge, X: StructuredRV, grid: Sequence) -> ProprietyReport:
    if not grid:
        raise ValueError("Propriety probe needs a nonempty grid")
    target = prevision(P, X)
    points = sorted(set(as_fraction(q) for q in grid) | {target})
    table = [(q, expected_score(P, X, g, q)) for q in points]
    ranked = sorted(table, key=lambda row: row[1])
    best_q, best = ranked[0]
    margin = ranked[1][1] - best if len(ranked) > 1 else None
    unique = margin is None or margin > 0
    passed = unique and best_q == target
    logger.debug(f"Propriety probe for {g.id}: argmin {best_q}, prevision {target}, margin {margin}")
    return ProprietyReport(g.id, target, best_q, margin, passed, table)


@dataclass(frozen=True)
class RuleTemplate:
    """Scoring rules indexed by i whose breakpoints and piece values (or sqrt scale) are GeometricSequences in i."""
    kind: str
    breakpoints: Tuple[GeometricSequence, ...] = ()
    values: Tuple[GeometricSequence, ...] = ()
    scale: Optional[GeometricSequence] = None
    id_prefix: str = 'g'

    def __post_init__(self):
        if self.kind not in ('piecewise', 'sqrt'):
            raise ValueError(f"Unknown rule template kind {self.kind!r}")
        if self.kind == 'piecewise' and len(self.values) != len(self.breakpoints) + 1:
            raise ValueError("Rule template needs one more value sequence than breakpoint sequences")
        if self.kind == 'sqrt' and self.scale is None:
            raise ValueError("Square-root rule template needs a scale sequence")

    @classmethod
    def brier(cls, weight: GeometricSequence, id_prefix: str = 'g') -> 'RuleTemplate':
        return cls('piecewise', (), (GeometricSequence.of(weight) * 2,), None, id_prefix)

    def member(self, i: int) -> ScoringRule:
        if self.kind == 'sqrt':
            return ScoringRule(f"{self.id_prefix}{i}", SqrtDensity(self.scale.at(i)))
        measure = PiecewiseDensity(tuple(b.at(i) for b in self.breakpoints), tuple(v.at(i) for v in self.values))
        return ScoringRule(f"{self.id_prefix}{i}", measure)

    def density_sup(self, start: int) -> Optional[Fraction]:
        if self.kind == 'sqrt':
            return None
        sups = [v.supremum(start)[0] for v in self.values]
        return None if any(s is None for s in sups) else max(sups)

    def density_inf(self, start: int) -> Tuple[Fraction, bool]:
        if self.kind == 'sqrt':
            return Fraction(0), False
        infs = [v.infimum(start) for v in self.values]
        if any(row[0] is None for row in infs):
            raise ValueError(f"Rule template {self.id_prefix} has densities that are unbounded below")
        value, attained, _ = min(infs, key=lambda row: row[0])
        if value < 0:
            raise ValueError(f"Rule template {self.id_prefix} has densities that are not positive")
        if value == 0 and attained:
            raise ValueError(f"Rule template {self.id_prefix} has a vanishing density piece")
        return value, attained

    def scale_sup(self, start: int) -> Optional[Fraction]:
        return self.scale.supremum(start)[0] if self.kind == 'sqrt' else Fraction(0)

    def reflected(self) -> 'RuleTemplate':
        return RuleTemplate(self.kind, tuple(-b for b in reversed(self.breakpoints)),
                            tuple(reversed(self.values)), self.scale, self.id_prefix)


@dataclass(frozen=True)
class RuleFamily:
    """Unindexed head rules, then members 1..len(prefix) explicitly and the template beyond."""
    name: str
    head: Tuple[ScoringRule, ...] = ()
    prefix: Tuple[ScoringRule, ...] = ()
    template: Optional[RuleTemplate] = None

    @classmethod
    def of(cls, rules) -> 'RuleFamily':
        if isinstance(rules, RuleFamily):
            return rules
        if isinstance(rules, ScoringRule):
            rules = [rules]
        rules = tuple(rules)
        if not rules:
            raise ValueError("A rule collection needs at least one rule")
        return cls('rules', (), rules, None)

    @property
    def is_finite(self) -> bool:
        return self.template is None

    def reflected(self) -> 'RuleFamily':
        return RuleFamily(self.name, tuple(r.reflected() for r in self.head), tuple(r.reflected() for r in self.prefix),
                          self.template.reflected() if self.template is not None else None)

    def with_head(self, *rules: ScoringRule) -> 'RuleFamily':
        return RuleFamily(self.name, tuple(rules) + self.head, self.prefix, self.template)

    def member(self, i: int) -> ScoringRule:
        if i < 1:
            raise ValueError(f"Family members are indexed from 1, got {i}")
        if i <= len(self.prefix):
            return self.prefix[i - 1]
        if self.template is None:
            raise ValueError(f"Family {self.name} has only {len(self.prefix)} members")
        return self.template.member(i)

    def members(self, depth: int) -> List[ScoringRule]:
        count = len(self.prefix) if self.template is None else max(depth, len(self.prefix))
        return list(self.head) + [self.member(i) for i in range(1, count + 1)]

    def explicit_rules(self) -> List[ScoringRule]:
        return list(self.head) + list(self.prefix)

    def has_sqrt(self) -> bool:
        return any(r.measure.kind == 'sqrt' for r in self.explicit_rules()) or (
            self.template is not None and self.template.kind == 'sqrt')

    def has_piecewise(self) -> bool:
        return any(r.measure.kind == 'piecewise' for r in self.explicit_rules()) or (
            self.template is not None and self.template.kind == 'piecewise')

    def density_sup(self) -> Optional[Fraction]:
        """Exact bound U on every piecewise density, None when unbounded."""
        sups = [r.measure.sup() for r in self.explicit_rules() if r.measure.kind == 'piecewise']
        if self.template is not None and self.template.kind == 'piecewise':
            tail = self.template.density_sup(len(self.prefix) + 1)
            if tail is None:
                return None
            sups.append(tail)
        return max(sups) if sups else None

    def scale_sup(self) -> Optional[Fraction]:
        scales = [r.measure.scale for r in self.explicit_rules() if r.measure.kind == 'sqrt']
        if self.template is not None and self.template.kind == 'sqrt':
            tail = self.template.scale_sup(len(self.prefix) + 1)
            if tail is None:
                return None
            scales.append(tail)
        return max(scales) if scales else None


@dataclass
class SpreadReport:
    verdict: str
    epsilon: Fraction
    delta: Optional[Fraction] = None
    bound: Optional[Fraction] = None
    witnesses: List[dict] = field(default_factory=list)


@dataclass
class SimilarityReport:
    verdict: str
    epsilon: Fraction
    reference: str
    gamma: Optional[Fraction] = None
    lower_bound: Optional[Fraction] = None
    witnesses: List[dict] = field(default_factory=list)


def _spread_witness(rule: ScoringRule, epsilon: Fraction) -> Optional[dict]:
    """An interval of mass 2*epsilon whose barycenter sits as close to an endpoint as this rule allows."""
    measure = rule.measure
    if measure.kind == 'sqrt':
        width = (2 * epsilon / measure.scale) ** 2
        return {'rule': rule.id, 'a': Fraction(0), 'b': width, 'mass': 2 * epsilon, 'distance': width / 3}
    best = None
    for lo, hi, f in measure.pieces():
        width = 2 * epsilon / f
        if lo is not None and hi is not None and hi - lo < width:
            continue
        a = lo if lo is not None else hi - width
        candidate = {'rule': rule.id, 'a': a, 'b': a + width, 'mass': 2 * epsilon, 'distance': width / 2}
        if best is None or candidate['distance'] < best['distance']:
            best = candidate
    return best


def check_uniform_spread(rules, epsilon, depth: int = 64, rungs: int = DEFAULT_RUNGS) -> SpreadReport:
    family = RuleFamily.of(rules)
    epsilon = as_fraction(epsilon)
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    bound = family.density_sup()
    scale = family.scale_sup()
    bounded = (bound is not None or not family.has_piecewise()) and (scale is not None or not family.has_sqrt())
    if bounded:
        candidates = []
        if family.has_piecewise():
            candidates.append(epsilon / (2 * bound))
        if family.has_sqrt():
            candidates.append(epsilon ** 2 / (6 * scale ** 2))
        delta = min(candidates)
        logger.info(f"[OK] Uniform spread holds for {family.name}: U = {bound}, delta = {delta}")
        return SpreadReport('satisfied', epsilon, delta, bound)

    witnesses = []
    members = [w for w in (_spread_witness(r, epsilon) for r in family.members(depth)) if w is not None]
    for m in range(1, rungs + 1):
        delta_m = epsilon / 2 ** m
        hit = next((w for w in members if w['distance'] < delta_m), None)
        if hit is None:
            logger.info(f"[SKIP] No spread witness below delta = {delta_m} within depth {depth}")
            return SpreadReport('inconclusive', epsilon, None, None, witnesses)
        witnesses.append(dict(hit, delta=delta_m))
    logger.info(f"[FAIL] Uniform spread violated for {family.name}: {len(witnesses)} witness intervals")
    return SpreadReport('violated', epsilon, None, None, witnesses)


def density_ratio_floor(reference: PiecewiseDensity, other: PiecewiseDensity) -> Fraction:
    """Exact inf over v of other(v) / reference(v) for two piecewise densities."""
    points = sorted(set(reference.breakpoints) | set(other.breakpoints))
    samples = [points[0] - 1] if points else [Fraction(0)]
    samples += [(a + b) / 2 for a, b in zip(points, points[1:])]
    samples += points
    if points:
        samples.append(points[-1] + 1)
    return min(other.density_at(v) / reference.density_at(v) for v in samples)


def sqrt_scale_floor(reference: SqrtDensity, family: RuleFamily) -> Optional[Fraction]:
    """Exact inf of scale ratios; every interval mass of a square-root rule is proportional to its scale."""
    rules = family.explicit_rules()
    if any(r.measure.kind != 'sqrt' for r in rules):
        return None
    ratios = [r.measure.scale / reference.scale for r in rules] + [Fraction(1)]
    if family.template is not None:
        if family.template.kind != 'sqrt':
            return None
        tail_inf, _, _ = family.template.scale.infimum(len(family.prefix) + 1)
        if tail_inf is None:
            return None
        ratios.append(tail_inf / reference.scale)
    return min(ratios)


def _resolve_reference(family: RuleFamily, reference) -> ScoringRule:
    if isinstance(reference, ScoringRule):
        return reference
    if isinstance(reference, str):
        match = [r for r in family.explicit_rules() if r.id == reference]
        if not match:
            raise ValueError(f"Rule {reference!r} is not an explicit member of {family.name}")
        return match[0]
    return family.member(int(reference))


def check_uniform_similarity(rules, reference, epsilon, depth: int = 64, rungs: int = DEFAULT_RUNGS) -> SimilarityReport:
    """epsilon may be an exact irrational (a square-root interval mass); floats are read through their repr."""
    family = RuleFamily.of(rules)
    try:
        epsilon = exact_number(epsilon)
    except TypeError:
        raise ValueError(f"epsilon must be an exact number, got {epsilon!r}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    base = _resolve_reference(family, reference)

    floor = None
    if base.measure.kind == 'piecewise' and not family.has_sqrt():
        floor = min(density_ratio_floor(base.measure, r.measure) for r in family.explicit_rules() + [base])
        if family.template is not None:
            tail_inf, _ = family.template.density_inf(len(family.prefix) + 1)
            floor = min(floor, tail_inf / base.measure.sup())
    elif base.measure.kind == 'sqrt':
        floor = sqrt_scale_floor(base.measure, family)
    if floor is not None and floor > 0:
        gamma = floor * epsilon if isinstance(epsilon, Fraction) else to_exact(_symbolic(floor) * epsilon)
        logger.info(f"[OK] Uniform similarity holds for {family.name} at {base.id}: L = {floor}, gamma = {gamma}")
        return SimilarityReport('satisfied', epsilon, base.id, gamma, floor)

    anchors = [Fraction(0)]
    if base.measure.kind == 'piecewise':
        anchors += list(base.measure.breakpoints)
    anchors += [Fraction(s * 2 ** m) for m in range(rungs + 1) for s in (1, -1)]
    intervals = [(a, invert_mass(base.measure, a, epsilon, 'up')) for a in anchors]
    members = family.members(depth)
    witnesses = []
    for m in range(1, rungs + 1):
        gamma_m = epsilon / 2 ** m
        hit = None
        for rule in members:
            for a, b in intervals:
                mass = interval_mass(rule.measure, a, b)
                if mass < gamma_m:
                    hit = {'rule': rule.id, 'a': a, 'b': b, 'reference_mass': epsilon, 'mass': mass, 'gamma': gamma_m}
                    break
            if hit is not None:
                break
        if hit is None:
            logger.info(f"[SKIP] No similarity witness below gamma = {gamma_m} within depth {depth}")
            return SimilarityReport('inconclusive', epsilon, base.id, None, floor, witnesses)
        witnesses.append(hit)
    logger.info(f"[FAIL] Uniform similarity violated for {family.name} at {base.id}: {len(witnesses)} witnesses")
    return SimilarityReport('violated', epsilon, base.id, None, floor, witnesses)


def log_score_demo(c1, c2, q) -> float:
    """Expected log score when all mass agglutinates at c1 from above; infinite at q = c1."""
    c1, c2, q = as_fraction(c1), as_fraction(c2), as_fraction(q)
    if not c1 < c2:
        raise OutOfRange(f"Need c1 < c2, got c1 = {c1}, c2 = {c2}")
    if q == c1:
        return math.inf
    if not c1 < q < c2:
        raise OutOfRange(f"q = {q} is outside [{c1}, {c2})")
    return math.log((c2 - c1) / (c2 - q))
