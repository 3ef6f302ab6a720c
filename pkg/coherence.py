import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from charges import (State, StructuredEvent, StructuredRV, UnstructuredResult, as_fraction)
from scoring import ScoringRule, score

logger = logging.getLogger(__name__)


class EmptySystem(ValueError):
    pass


class UnsupportedRule(ValueError):
    pass


@dataclass(frozen=True)
class ForecastEntry:
    """A forecast p for X given H, with the rule that scores it and a combination coefficient."""
    variable: StructuredRV
    conditioning: StructuredEvent
    forecast: Fraction
    rule: Optional[ScoringRule] = None
    coefficient: Fraction = Fraction(1)
    label: str = ''

    def __post_init__(self):
        if self.conditioning.is_empty:
            raise ValueError(f"Entry {self.label or '?'} conditions on the empty event")
        if self.variable.space != self.conditioning.space:
            raise ValueError(f"Entry {self.label or '?'} mixes state spaces")
        object.__setattr__(self, 'forecast', as_fraction(self.forecast))
        object.__setattr__(self, 'coefficient', as_fraction(self.coefficient))

    @classmethod
    def unconditional(cls, variable: StructuredRV, forecast, **kwargs) -> 'ForecastEntry':
        return cls(variable, StructuredEvent.omega(variable.space), forecast, **kwargs)

    @property
    def is_conditional(self) -> bool:
        return self.conditioning != StructuredEvent.omega(self.variable.space)

    def with_forecast(self, forecast) -> 'ForecastEntry':
        return replace(self, forecast=as_fraction(forecast))

    def gamble(self) -> StructuredRV:
        """H * (X - p), the fair bet at price p called off outside H."""
        return self.conditioning.indicator() * (self.variable - self.forecast)

    def fair_loss(self) -> StructuredRV:
        return self.gamble() * self.coefficient

    def _require_rule(self) -> ScoringRule:
        if self.rule is None:
            raise ValueError(f"Entry {self.label or '?'} has no scoring rule")
        return self.rule

    def score_term(self, forecast=None) -> StructuredRV:
        q = self.forecast if forecast is None else as_fraction(forecast)
        rule = self._require_rule()
        return self.conditioning.indicator() * self.variable.map(lambda x: score(rule, x, q)) * self.coefficient

    def fair_loss_at(self, state: State) -> Fraction:
        if not self.conditioning.contains(state):
            return Fraction(0)
        return self.coefficient * (self.variable.value(state) - self.forecast)

    def score_at(self, state: State, forecast=None):
        if not self.conditioning.contains(state):
            return Fraction(0)
        q = self.forecast if forecast is None else forecast
        return self.coefficient * score(self._require_rule(), self.variable.value(state), q)

    def eventual_fair_loss(self, column: int) -> Fraction:
        """Value of the fair loss on column k for all large indices."""
        if not self.conditioning.columns[column - 1].cofinite:
            return Fraction(0)
        return self.coefficient * (self.variable.columns[column - 1].eventual - self.forecast)

    def eventual_score(self, column: int, forecast=None):
        if not self.conditioning.columns[column - 1].cofinite:
            return Fraction(0)
        q = self.forecast if forecast is None else forecast
        return self.coefficient * score(self._require_rule(), self.variable.columns[column - 1].eventual, q)

    def exception_indices(self, column: int) -> List[int]:
        """Indices on column k where the entry's terms may differ from their eventual value."""
        c = self.variable.columns[column - 1]
        h = self.conditioning.columns[column - 1]
        if not h.cofinite:
            return sorted(h.indices)
        if c.pattern.terms:
            raise UnstructuredResult(f"Entry {self.label or '?'} has a variable with a geometric transient")
        return sorted({j for j, _ in c.exceptions} | set(h.indices))


def representative_states(entries: Sequence[ForecastEntry]) -> List[State]:
    """Exceptional states of every entry plus one tail representative per column."""
    if not entries:
        raise EmptySystem("No forecast entries")
    space = entries[0].variable.space
    states = []
    for k in space.column_numbers():
        indices = sorted({j for e in entries for j in e.exception_indices(k)})
        states += [(k, j) for j in indices]
        states.append((k, (indices[-1] if indices else 0) + 1))
    return states


def solve_exact(matrix: List[List[Fraction]], rhs: List[Fraction]) -> List[Fraction]:
    """Solve a square system exactly by Gaussian elimination with row pivoting."""
    n = len(matrix)
    rows = [list(map(Fraction, row)) + [Fraction(b)] for row, b in zip(matrix, rhs)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if rows[r][col] != 0), None)
        if pivot is None:
            raise ValueError("Singular system")
        rows[col], rows[pivot] = rows[pivot], rows[col]
        lead = rows[col][col]
        rows[col] = [v / lead for v in rows[col]]
        for r in range(n):
            if r != col and rows[r][col] != 0:
                factor = rows[r][col]
                rows[r] = [a - factor * b for a, b in zip(rows[r], rows[col])]
    return [row[-1] for row in rows]


class SimplexTableau:
    """Exact dictionary-form simplex: maximize z = c.x subject to A x <= b, x >= 0, b >= 0.

    Basic variables satisfy x_B = b - A x_N. Bland's rule picks the entering and leaving variables.
    """

    def __init__(self, A: List[List[Fraction]], b: List[Fraction], c: List[Fraction], names: Sequence[str] = None):
        self.m = len(A)
        self.n = len(c)
        if any(v < 0 for v in b):
            raise ValueError("The origin must be feasible (b >= 0)")
        self.A = [[Fraction(v) for v in row] for row in A]
        self.b = [Fraction(v) for v in b]
        self.c = [Fraction(v) for v in c]
        self.z = Fraction(0)
        self.nb_vars = list(names) if names else [f"x{j}" for j in range(self.n)]
        self.b_vars = [f"s{i}" for i in range(self.m)]
        self.pivots = 0

    def pivot(self, i: int, j: int) -> None:
        logger.debug(f"Pivot {self.b_vars[i]} -> {self.nb_vars[j]} ({i},{j})")
        piv = self.A[i][j]
        delta = self.c[j] / piv
        self.z += delta * self.b[i]
        for l in range(self.n):
            self.c[l] -= delta * self.A[i][l]
        self.c[j] = -delta
        for l in range(self.n):
            self.A[i][l] = 1 / piv if l == j else self.A[i][l] / piv
        self.b[i] /= piv
        for k in range(self.m):
            if k != i:
                f = self.A[k][j]
                if f == 0:
                    continue
                for l in range(self.n):
                    self.A[k][l] = -f / piv if l == j else self.A[k][l] - f * self.A[i][l]
                self.b[k] -= f * self.b[i]
        self.nb_vars[j], self.b_vars[i] = self.b_vars[i], self.nb_vars[j]
        self.pivots += 1

    def bland_primal_step(self) -> str:
        try:
            _, j = min((self.nb_vars_order(j), j) for j in range(self.n) if self.c[j] > 0)
        except ValueError:
            return 'optimal'
        try:
            _, _, i = min((self.b[i] / self.A[i][j], self.order(self.b_vars[i]), i)
                          for i in range(self.m) if self.A[i][j] > 0)
        except ValueError:
            return 'unbounded'
        self.pivot(i, j)
        return 'go_on'

    def nb_vars_order(self, j: int):
        return self.order(self.nb_vars[j])

    @staticmethod
    def order(name: str) -> Tuple[int, int]:
        # structural variables before slacks, then by position
        return (0 if name[0] == 'x' else 1, int(name[1:]))

    def solve(self) -> str:
        while True:
            status = self.bland_primal_step()
            if status != 'go_on':
                logger.debug(f"Simplex {status} after {self.pivots} pivots, z = {self.z}")
                return status

    def primal(self) -> Dict[str, Fraction]:
        values = {name: Fraction(0) for name in self.nb_vars}
        values.update(zip(self.b_vars, self.b))
        return values

    def duals(self) -> List[Fraction]:
        """Shadow prices of the constraints: minus the reduced cost of each nonbasic slack."""
        result = [Fraction(0)] * self.m
        for j, name in enumerate(self.nb_vars):
            if name[0] == 's':
                result[int(name[1:])] = -self.c[j]
        return result


@dataclass
class IncoherenceCertificate:
    alphas: List[Fraction]
    epsilon: Fraction
    states: List[State]
    labels: List[str] = field(default_factory=list)
    note: str = "coherence1 allows coefficients of either sign"

    def verify(self, entries: Sequence[ForecastEntry]) -> bool:
        return all(
            sum((a * e.gamble().value(s) for a, e in zip(self.alphas, entries)), Fraction(0)) >= self.epsilon
            for s in self.states
        ) and sum(abs(a) for a in self.alphas) == 1


@dataclass
class CoherenceResult:
    """Outcome of the coherence1 program: a certificate, or the dual probability showing there is none."""
    optimum: Fraction
    certificate: Optional[IncoherenceCertificate]
    dual_probability: Dict[State, Fraction]


def incoherence1_program(entries: Sequence[ForecastEntry], restriction: Sequence[State] = None) -> CoherenceResult:
    if not entries:
        raise EmptySystem("No forecast entries")
    states = list(restriction) if restriction is not None else representative_states(entries)
    n = len(entries)
    gambles = [e.gamble() for e in entries]
    payoff = [[g.value(s) for g in gambles] for s in states]

    # variables: epsilon, alpha+ (n), alpha- (n)
    A = []
    for row in payoff:
        A.append([Fraction(1)] + [-a for a in row] + [a for a in row])
    A.append([Fraction(0)] + [Fraction(1)] * (2 * n))
    b = [Fraction(0)] * len(states) + [Fraction(1)]
    c = [Fraction(1)] + [Fraction(0)] * (2 * n)
    tableau = SimplexTableau(A, b, c)
    status = tableau.solve()
    if status != 'optimal':
        raise ValueError(f"Coherence program ended {status}")

    duals = tableau.duals()[:len(states)]
    total = sum(duals, Fraction(0))
    dual_probability = {s: y / total for s, y in zip(states, duals) if y} if total else {}
    if tableau.z <= 0:
        logger.info(f"[OK] No coherence1 violation among {n} entries over {len(states)} states")
        return CoherenceResult(tableau.z, None, dual_probability)

    values = tableau.primal()
    alphas = [values[f"x{1 + j}"] - values[f"x{1 + n + j}"] for j in range(n)]
    scale = sum(abs(a) for a in alphas)
    alphas = [a / scale for a in alphas]
    epsilon = min(sum((a * p for a, p in zip(alphas, row)), Fraction(0)) for row in payoff)
    certificate = IncoherenceCertificate(alphas, epsilon, states, [e.label for e in entries])
    logger.info(f"[FAIL] Coherence1 violated: epsilon = {epsilon} with alphas {[str(a) for a in alphas]}")
    return CoherenceResult(tableau.z, certificate, dual_probability)


def incoherence1_certificate(entries: Sequence[ForecastEntry],
                             restriction: Sequence[State] = None) -> Optional[IncoherenceCertificate]:
    return incoherence1_program(entries, restriction).certificate


@dataclass
class DominanceCertificate:
    rival: List[Fraction]
    epsilon: Fraction
    method: str
    labels: List[str] = field(default_factory=list)

    def verify(self, entries: Sequence[ForecastEntry], states: Sequence[State]) -> bool:
        for s in states:
            original = sum((e.score_at(s) for e in entries), Fraction(0))
            rival = sum((e.score_at(s, q) for e, q in zip(entries, self.rival)), Fraction(0))
            if original < rival + self.epsilon:
                return False
        return True


def brier_weights(entries: Sequence[ForecastEntry]) -> List[Fraction]:
    weights = []
    for e in entries:
        scale = e.rule.brier_weight() if e.rule is not None else None
        if scale is None:
            raise UnsupportedRule(f"Entry {e.label or '?'} is not scored by a multiple of the Brier score")
        weight = scale * e.coefficient
        if weight <= 0:
            raise ValueError(f"Entry {e.label or '?'} has non-positive Brier weight {weight}")
        weights.append(weight)
    return weights


def min_norm_point(points: List[List[Fraction]], weights: List[Fraction]) -> List[Fraction]:
    """Exact minimum-norm point of conv(points) under <x, y> = sum w x y (Wolfe's algorithm)."""
    def ip(x, y):
        return sum((w * a * b for w, a, b in zip(weights, x, y)), Fraction(0))

    def combine(coefs, members):
        return [sum((c * points[m][d] for c, m in zip(coefs, members)), Fraction(0)) for d in range(len(weights))]

    unique = []
    for p in points:
        if p not in unique:
            unique.append(p)
    points = unique
    start = min(range(len(points)), key=lambda i: (ip(points[i], points[i]), i))
    members, lambdas = [start], [Fraction(1)]
    x = list(points[start])
    while True:
        j = min(range(len(points)), key=lambda i: (ip(x, points[i]), i))
        if ip(x, points[j]) >= ip(x, x) or j in members:
            return x
        members.append(j)
        lambdas.append(Fraction(0))
        while True:
            size = len(members)
            system = [[ip(points[a], points[b]) for b in members] + [Fraction(1)] for a in members]
            system.append([Fraction(1)] * size + [Fraction(0)])
            mu = solve_exact(system, [Fraction(0)] * size + [Fraction(1)])[:size]
            if all(v > 0 for v in mu):
                lambdas = mu
                x = combine(lambdas, members)
                break
            steps = [lam / (lam - v) for lam, v in zip(lambdas, mu) if v <= 0 and lam > v]
            theta = min(steps) if steps else Fraction(0)
            lambdas = [theta * v + (1 - theta) * lam for lam, v in zip(lambdas, mu)]
            keep = [i for i, lam in enumerate(lambdas) if lam > 0]
            members = [members[i] for i in keep]
            lambdas = [lambdas[i] for i in keep]
            x = combine(lambdas, members)


def _uniform_improvement(entries, rival, states) -> Fraction:
    return min(
        sum((e.score_at(s) - e.score_at(s, q) for e, q in zip(entries, rival)), Fraction(0))
        for s in states
    )


def brier_projection_rival(entries: Sequence[ForecastEntry],
                           restriction: Sequence[State] = None) -> Optional[DominanceCertificate]:
    if not entries:
        raise EmptySystem("No forecast entries")
    weights = brier_weights(entries)
    states = list(restriction) if restriction is not None else representative_states(entries)
    forecasts = [e.forecast for e in entries]

    if not any(e.is_conditional for e in entries):
        shifted = [[e.variable.value(s) - e.forecast for e in entries] for s in states]
        x = min_norm_point(shifted, weights)
        if all(v == 0 for v in x):
            logger.info(f"[OK] Forecasts lie in the convex hull of outcomes; no Brier rival")
            return None
        rival = [p + d for p, d in zip(forecasts, x)]
        method = 'projection'
    else:
        certificate = incoherence1_certificate(entries, states)
        if certificate is None:
            logger.info(f"[OK] Conditional system is coherent1; no Brier rival")
            return None
        spread = max(
            sum((a * a / (4 * w) for a, w, e in zip(certificate.alphas, weights, entries)
                 if e.conditioning.contains(s)), Fraction(0))
            for s in states
        )
        t = certificate.epsilon / (2 * spread)
        rival = [p + t * a / (2 * w) for p, a, w in zip(forecasts, certificate.alphas, weights)]
        method = 'certificate_shift'

    epsilon = _uniform_improvement(entries, rival, states)
    if epsilon <= 0:
        raise ValueError(f"Rival from {method} does not improve uniformly (epsilon = {epsilon})")
    logger.info(f"[FAIL] Brier rival {[str(q) for q in rival]} improves every state by {epsilon} ({method})")
    return DominanceCertificate(rival, epsilon, method, [e.label for e in entries])


@dataclass
class DominanceVerdict:
    kind: str
    epsilon: Optional[Fraction] = None
    infimum: Optional[Fraction] = None
    attained: bool = True
    witness: Optional[State] = None

    def __str__(self):
        return f"uniform_strict({self.epsilon})" if self.kind == 'uniform_strict' else self.kind


def dominance_verdict(loss_a: StructuredRV, loss_b: StructuredRV) -> DominanceVerdict:
    """How B dominates A: by a uniform margin, pointwise only, or not at all."""
    if loss_a.space != loss_b.space:
        raise ValueError("Losses live on different state spaces")
    value, attained, state = (loss_a - loss_b).infimum()
    if value > 0:
        return DominanceVerdict('uniform_strict', value, value, attained, state)
    if value == 0 and not attained:
        return DominanceVerdict('simple', None, value, attained, None)
    return DominanceVerdict('none', None, value, attained, state)
