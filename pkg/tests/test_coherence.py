from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from charges import GeometricSequence, StateSpace, StructuredEvent, StructuredRV
from coherence import (EmptySystem, ForecastEntry, SimplexTableau, UnsupportedRule, brier_projection_rival,
                       dominance_verdict, incoherence1_certificate, incoherence1_program, representative_states,
                       solve_exact)
from scoring import ScoringRule
from strategies import events, spaces, variables

HALF = Fraction(1, 2)
THIRD = Fraction(1, 3)


@pytest.fixture
def line():
    return StateSpace(('w',))


def cells_of(line):
    """w1, w2 and everything else."""
    a = StructuredEvent.singleton(line, (1, 1))
    b = StructuredEvent.singleton(line, (1, 2))
    return a, b, ~(a | b)


@pytest.fixture
def three_cells(line):
    return cells_of(line)


def indicator_entries(cells, forecasts, rule=None):
    rule = rule or ScoringRule.brier()
    return [ForecastEntry.unconditional(cell.indicator(), p, rule=rule, label=f"P({name})")
            for cell, p, name in zip(cells, forecasts, 'ABC')]


class TestForecastEntry:
    def test_gamble_is_zero_off_the_conditioning_event(self, line, three_cells):
        a, b, _ = three_cells
        entry = ForecastEntry(a.indicator(), a | b, Fraction(3, 4), ScoringRule.brier(), label='A|H')
        assert entry.is_conditional
        assert entry.gamble().value((1, 1)) == Fraction(1, 4)
        assert entry.gamble().value((1, 2)) == Fraction(-3, 4)
        assert entry.gamble().value((1, 9)) == 0
        assert entry.score_at((1, 9)) == 0
        assert entry.score_at((1, 2)) == Fraction(9, 16)
        assert entry.score_at((1, 2), 0) == 0

    def test_empty_conditioning_event(self, line):
        empty = StructuredEvent.from_states(line, [])
        with pytest.raises(ValueError, match='empty event'):
            ForecastEntry(StructuredRV.constant(line, 1), empty, 0)

    def test_representative_states(self, three_cells):
        states = representative_states(indicator_entries(three_cells, [HALF] * 3))
        assert states == [(1, 1), (1, 2), (1, 3)]

    def test_no_entries(self):
        with pytest.raises(EmptySystem):
            representative_states([])


def test_solve_exact():
    assert solve_exact([[0, 1], [2, 1]], [3, 5]) == [1, 3]
    with pytest.raises(ValueError, match='Singular'):
        solve_exact([[1, 2], [2, 4]], [1, 2])


def test_simplex_tableau_maximizes():
    # max x0 + x1 with x0 + 2 x1 <= 4 and 3 x0 + x1 <= 6
    tableau = SimplexTableau([[1, 2], [3, 1]], [4, 6], [1, 1])
    assert tableau.solve() == 'optimal'
    assert tableau.z == Fraction(14, 5)
    assert tableau.primal()['x0'] == Fraction(8, 5)
    assert tableau.primal()['x1'] == Fraction(6, 5)


class TestIncoherence:
    def test_overcommitted_forecasts(self, three_cells):
        entries = indicator_entries(three_cells, [HALF] * 3)
        result = incoherence1_program(entries)
        certificate = result.certificate
        assert certificate.epsilon == Fraction(1, 6)
        assert certificate.alphas == [-THIRD] * 3
        assert certificate.labels == ['P(A)', 'P(B)', 'P(C)']
        assert certificate.verify(entries)
        assert sum(result.dual_probability.values()) == 1

    def test_coherent_forecasts(self, three_cells):
        entries = indicator_entries(three_cells, [Fraction(1, 4), Fraction(1, 4), HALF])
        result = incoherence1_program(entries)
        assert result.certificate is None
        assert sum(result.dual_probability.values()) == 1

    def test_conditional_forecast_against_its_pieces(self, three_cells):
        a, b, _ = three_cells
        entries = indicator_entries(three_cells[:2], [HALF, HALF])
        entries.append(ForecastEntry(a.indicator(), a | b, Fraction(3, 4), ScoringRule.brier(), label='A|H'))
        certificate = incoherence1_certificate(entries)
        assert certificate is not None
        assert certificate.verify(entries)


class TestBrierRival:
    def test_projection_onto_the_simplex(self, three_cells):
        entries = indicator_entries(three_cells, [HALF] * 3)
        rival = brier_projection_rival(entries)
        assert rival.method == 'projection'
        assert rival.rival == [THIRD] * 3
        assert rival.epsilon == Fraction(1, 12)
        assert rival.verify(entries, representative_states(entries))

    def test_coherent_forecasts_have_no_rival(self, three_cells):
        entries = indicator_entries(three_cells, [Fraction(1, 4), Fraction(1, 4), HALF])
        assert brier_projection_rival(entries) is None

    def test_certificate_shift_for_conditional_entries(self, three_cells):
        a, b, _ = three_cells
        entries = indicator_entries(three_cells[:2], [HALF, HALF])
        entries.append(ForecastEntry(a.indicator(), a | b, Fraction(3, 4), ScoringRule.brier(), label='A|H'))
        rival = brier_projection_rival(entries)
        assert rival.method == 'certificate_shift'
        assert rival.epsilon > 0
        assert rival.verify(entries, representative_states(entries))

    def test_non_brier_rules_are_refused(self, three_cells):
        entries = indicator_entries(three_cells, [HALF] * 3, rule=ScoringRule.sqrt())
        with pytest.raises(UnsupportedRule):
            brier_projection_rival(entries)


class TestDominanceVerdict:
    def test_uniform(self, line):
        verdict = dominance_verdict(StructuredRV.constant(line, 1), StructuredRV.constant(line, Fraction(1, 4)))
        assert verdict.kind == 'uniform_strict'
        assert verdict.epsilon == Fraction(3, 4)
        assert str(verdict) == 'uniform_strict(3/4)'

    def test_vanishing_margin_is_only_simple(self, line):
        shrinking = StructuredRV.build(line, {'w': ({}, GeometricSequence(0, ((1, HALF),)))})
        verdict = dominance_verdict(shrinking, StructuredRV.constant(line, 0))
        assert verdict.kind == 'simple'
        assert verdict.infimum == 0 and not verdict.attained

    def test_equal_losses(self, line):
        loss = StructuredRV.build(line, {'w': ({1: 2}, 1)})
        assert dominance_verdict(loss, loss).kind == 'none'


forecasts = st.fractions(min_value=-HALF, max_value=Fraction(3, 2), max_denominator=8)


@settings(deadline=None)
@given(st.tuples(forecasts, forecasts, forecasts))
def test_checkers_agree_on_brier_systems(ps):
    entries = indicator_entries(cells_of(StateSpace(('w',))), ps)
    certificate = incoherence1_certificate(entries)
    rival = brier_projection_rival(entries)
    coherent = all(p >= 0 for p in ps) and sum(ps) == 1
    assert (certificate is None) == coherent
    assert (rival is None) == coherent


@st.composite
def brier_systems(draw):
    """One to four Brier-scored entries over up to two columns, some called off outside an event."""
    space = draw(spaces(max_columns=2))
    outcomes = st.fractions(min_value=-1, max_value=2, max_denominator=4)
    entries = []
    for n in range(draw(st.integers(1, 4))):
        conditioning = draw(events(space))
        if conditioning.is_empty or draw(st.booleans()):
            conditioning = StructuredEvent.omega(space)
        rule = ScoringRule.brier(draw(st.sampled_from([Fraction(1, 4), HALF, 1, 2])))
        entries.append(ForecastEntry(draw(variables(space, outcomes)), conditioning, draw(forecasts), rule,
                                     label=f"e{n}"))
    return entries


@settings(max_examples=100, deadline=None)
@given(brier_systems())
def test_emitted_certificates_reverify(entries):
    states = representative_states(entries)
    certificate = incoherence1_certificate(entries)
    rival = brier_projection_rival(entries)
    assert (certificate is None) == (rival is None)
    if certificate is None:
        return
    assert certificate.epsilon > 0
    assert certificate.verify(entries)
    assert rival.verify(entries, states)
    assert rival.method == ('certificate_shift' if any(e.is_conditional for e in entries) else 'projection')
