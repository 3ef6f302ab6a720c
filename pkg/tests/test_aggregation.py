from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from aggregation import (ConditionalSystem, DivergentCombination, EntryFamily, NotNonconglomerable,
                         PreconditionFailed, RivalForecasts, RivalGrid, SimilarityViolated, abstain_dominance,
                         class_verdicts, combined_fair_loss, combined_score, conglomerability_verdict, fit_geometric,
                         ltp_verdict, propriety_of_infinite_sum, rival_dominance_probe, thm1_condition_check,
                         thm2_rival_construction, thm3_no_dominance_probe)
from charges import (Charge, ColumnValues, GeometricSequence, Partition, StateSpace, StructuredEvent, StructuredRV,
                     UnstructuredResult, prevision)
from coherence import ForecastEntry
from scoring import RuleFamily, RuleTemplate, ScoringRule
from strategies import cell_charges, fractions, positive, spaces, variables

HALF = Fraction(1, 2)
QUARTER = Fraction(1, 4)


def constant_forecasts(value):
    return ColumnValues((), GeometricSequence(value))


@pytest.fixture
def singleton_bets():
    """Diffuse line; entry i forecasts 0 for the indicator of w_i under Brier weight 1 - 2^-(i+1)."""
    space = StateSpace(('omega',))
    P = Charge(space, diffuse={1: 1})
    rules = RuleFamily('weighted', template=RuleTemplate.brier(GeometricSequence(1, ((-HALF, HALF),)), 'w'))

    def make(i):
        return ForecastEntry.unconditional(StructuredEvent.singleton(space, (1, i)).indicator(), 0,
                                           rule=rules.member(i), label=f"W{i}")

    family = EntryFamily(space, (), make, (0,), (HALF,), 1, 'forecasts', constant_forecasts(0))
    return P, family, rules


class TestFitGeometric:
    def test_recovers_exceptions_then_pattern(self):
        values = [Fraction(7)] + [1 + HALF ** j for j in range(2, 40)]
        start, fitted = fit_geometric(values, [HALF], 1, 'values')
        assert start == 2
        assert fitted == GeometricSequence(1, ((1, HALF),))

    def test_irregular_values_diverge(self):
        with pytest.raises(DivergentCombination):
            fit_geometric([Fraction(j * j) for j in range(1, 30)], [HALF], 1, 'squares')


class TestConglomerability:
    def test_dubins_is_nonconglomerable(self, dubins, indicator_f, cross_section):
        verdict = conglomerability_verdict(dubins, indicator_f, cross_section)
        assert not verdict.conglomerable
        assert verdict.prevision == HALF
        assert (verdict.infimum, verdict.supremum) == (1, 1)
        assert verdict.gap == HALF and verdict.side == 'inf'

    def test_complement_fails_on_the_other_side(self, dubins, indicator_f, cross_section):
        verdict = conglomerability_verdict(dubins, 1 - indicator_f, cross_section)
        assert verdict.side == 'sup' and verdict.gap == HALF

    def test_control_is_conglomerable(self, control, indicator_f, cross_section):
        verdict = conglomerability_verdict(control, indicator_f, cross_section)
        assert verdict.conglomerable
        assert verdict.infimum == verdict.supremum == Fraction(3, 4)

    def test_ltp(self, dubins, control, indicator_f, cross_section):
        failing = ltp_verdict(dubins, indicator_f, cross_section)
        assert not failing.holds
        assert (failing.prevision_x, failing.prevision_y) == (HALF, 1)
        assert ltp_verdict(control, indicator_f, cross_section).holds

    def test_class_verdicts_agree(self, dubins, control, indicator_f, cross_section):
        bad = class_verdicts(dubins, [('F', indicator_f)], cross_section)
        assert not bad.conglomerable and not bad.ltp_holds and bad.agree
        good = class_verdicts(control, [('F', indicator_f)], cross_section)
        assert good.conglomerable and good.ltp_holds and good.agree
        assert [m['variable'] for m in good.members] == ['F', 'F - P(F|pi)']


class TestCombinations:
    def test_dubins_fair_options_lose_surely(self, dubins, dubins_system):
        loss = combined_fair_loss(dubins, dubins_system.family(), coefficients=((1,), constant_forecasts(-1)))
        assert loss == StructuredRV.constant(dubins.space, HALF)
        assert abstain_dominance(loss) == HALF

    def test_control_fair_options_are_fair(self, control, control_system):
        loss = combined_fair_loss(control, control_system.family(), coefficients=((1,), constant_forecasts(-1)))
        assert prevision(control, loss) == 0
        assert abstain_dominance(loss) is None

    def test_dubins_brier_totals(self, dubins, dubins_system):
        total = combined_score(dubins, dubins_system.family())
        assert total.value((1, 1)) == Fraction(5, 4)
        assert total.value((2, 1)) == QUARTER
        assert total.eventual('notF') == Fraction(5, 4)
        assert prevision(dubins, total) == Fraction(3, 4)

    def test_halving_totals(self, dubins, indicator_f, cross_section, brier, halving_cells):
        system = ConditionalSystem(dubins, indicator_f, cross_section, brier, halving_cells)
        total = combined_score(dubins, system.family())
        assert total.value((1, 1)) == HALF
        assert total.value((1, 2)) == Fraction(3, 8)
        assert total.eventual('notF') == QUARTER
        assert total.value((2, 1)) == QUARTER

    def test_shallow_depth_is_refused(self, dubins, dubins_system):
        with pytest.raises(ValueError, match='too small'):
            combined_score(dubins, dubins_system.family(), depth=3)


class TestSumConditions:
    def test_singleton_bets_meet_the_conditions(self, singleton_bets):
        P, family, rules = singleton_bets
        assert combined_fair_loss(P, family) == StructuredRV.constant(P.space, 1)
        report = thm1_condition_check(P, family, rules, 1)
        assert (report.V, report.W) == (1, 1)
        assert report.spread.delta == QUARTER
        assert report.verdict == 'conditions-met'

    def test_nonvanishing_terms_diverge(self):
        space = StateSpace(('omega',))
        P = Charge(space, diffuse={1: 1})
        one = StructuredRV.constant(space, 1)
        family = EntryFamily(space, (), lambda i: ForecastEntry.unconditional(one, 0, rule=ScoringRule.brier()),
                             label='constant')
        with pytest.raises(DivergentCombination):
            combined_fair_loss(P, family)
        report = thm1_condition_check(P, family)
        assert report.V is None
        assert report.verdict == 'violated'


class TestRivalConstruction:
    def test_dubins(self, dubins_system):
        construction = thm2_rival_construction(dubins_system, safety=Fraction(9, 10))
        assert construction.side == 'inf'
        assert construction.epsilon == HALF
        assert (construction.w0, construction.w1, construction.w2) == (HALF, HALF, Fraction(9, 20))
        assert construction.q_prime == Fraction(3, 4)
        assert construction.q_x == Fraction(29, 40)
        assert construction.rival.head == (Fraction(29, 40),)
        assert all(construction.q_cells.value(j) == Fraction(31, 40) for j in range(1, 6))
        assert construction.delta == Fraction(9, 800)
        assert construction.margin == Fraction(99, 800)
        assert construction.verdict.kind == 'uniform_strict'
        assert construction.abstain_margin == HALF
        assert construction.verify(dubins_system)

    def test_sup_side_reflects(self, dubins, indicator_f, cross_section, brier, brier_cells):
        system = ConditionalSystem(dubins, 1 - indicator_f, cross_section, brier, brier_cells)
        construction = thm2_rival_construction(system, safety=Fraction(9, 10))
        assert construction.side == 'sup'
        assert construction.rival.head == (Fraction(11, 40),)
        assert construction.margin >= construction.delta

    def test_square_root_rules_give_irrational_masses(self, dubins, indicator_f, cross_section):
        roots = RuleFamily('roots', template=RuleTemplate('sqrt', (), (), GeometricSequence(1), 'root_'))
        system = ConditionalSystem(dubins, indicator_f, cross_section, ScoringRule.sqrt(), roots)
        with pytest.raises(UnstructuredResult, match='rational interval masses'):
            thm2_rival_construction(system)

    def test_conglomerable_system_has_no_construction(self, control_system):
        with pytest.raises(NotNonconglomerable):
            thm2_rival_construction(control_system)

    def test_halving_rules_are_not_similar(self, dubins, indicator_f, cross_section, brier, halving_cells):
        system = ConditionalSystem(dubins, indicator_f, cross_section, brier, halving_cells)
        with pytest.raises(SimilarityViolated):
            thm2_rival_construction(system)

    @pytest.mark.parametrize('safety', [0, 1, Fraction(3, 2)])
    def test_safety_must_be_a_proper_fraction(self, dubins_system, safety):
        with pytest.raises(ValueError, match='Safety'):
            thm2_rival_construction(dubins_system, safety=safety)


class TestRivalGrid:
    def test_grid_points(self):
        assert RivalGrid(QUARTER).points(0, 1) == [0, QUARTER, HALF, Fraction(3, 4), 1]
        assert RivalGrid(Fraction(3, 8)).points(0, 1) == [0, Fraction(3, 8), Fraction(3, 4), 1]
        with pytest.raises(ValueError):
            RivalGrid(0)

    def test_hand_picked_rival_dominates_dubins(self, dubins, dubins_system):
        rival = RivalForecasts((Fraction(3, 4),), constant_forecasts(Fraction(3, 4)), 'Q')
        report = rival_dominance_probe(dubins, dubins_system.family(), [rival])
        assert report.dominated
        assert report.outcomes[0].epsilon == Fraction(1, 8)

    def test_control_survives_the_grid(self, control_system):
        report = thm3_no_dominance_probe(control_system, RivalGrid(QUARTER))
        assert report.ltp.holds
        assert report.conditionals_consistent
        assert all(v == 0 for _, v in report.fair_loss_previsions)
        assert not report.probe.dominated
        assert report.passed

    def test_conditional_table_must_match_the_charge(self, control_system):
        control_system.p_cells = constant_forecasts(HALF)
        report = thm3_no_dominance_probe(control_system, RivalGrid(QUARTER))
        assert report.ltp.holds
        assert not report.conditionals_consistent
        assert not report.passed

    def test_dubins_fails_the_precondition(self, dubins_system):
        with pytest.raises(PreconditionFailed):
            thm3_no_dominance_probe(dubins_system, RivalGrid(QUARTER))

    def test_infinite_sum_propriety(self, dubins, control, dubins_system, control_system):
        dubins_report = propriety_of_infinite_sum(dubins, dubins_system, grid=RivalGrid(QUARTER))
        assert not dubins_report.proper
        assert dubins_report.expected_original == Fraction(3, 4)
        assert dubins_report.witness == 'construction'
        assert dubins_report.construction_included
        control_report = propriety_of_infinite_sum(control, control_system, grid=RivalGrid(QUARTER))
        assert control_report.proper
        assert not control_report.construction_included


unit_values = st.fractions(min_value=-1, max_value=1, max_denominator=4)


@st.composite
def cross_section_systems(draw):
    space = draw(spaces())
    return draw(cell_charges(space)), draw(variables(space, unit_values)), Partition.cross_section(space)


@st.composite
def diffuse_column_systems(draw):
    """Column 1 holds only diffuse mass, and X's eventual value there ranges wider than elsewhere."""
    space = draw(spaces(max_columns=3).filter(lambda s: len(s.columns) > 1))
    P = draw(cell_charges(space, diffuse=positive, bare_columns=1))
    X = draw(variables(space, unit_values))
    wide = ColumnValues((), GeometricSequence(draw(fractions)))
    X = StructuredRV(space, (wide,) + X.columns[1:])
    return P, X, Partition.cross_section(space)


def brier_system(P, X, partition):
    cells = RuleFamily('cells', template=RuleTemplate.brier(1, 'brier_'))
    return ConditionalSystem(P, X, partition, ScoringRule.brier(), cells, label='generated')


@settings(max_examples=100, deadline=None)
@given(cross_section_systems())
def test_conglomerability_agrees_with_total_previsions(case):
    P, X, partition = case
    assert class_verdicts(P, [('X', X)], partition).agree


@settings(max_examples=60, deadline=None)
@given(cross_section_systems())
def test_fair_combination_expectation_is_the_total_prevision_gap(case):
    P, X, partition = case
    system = brier_system(P, X, partition)
    ltp = ltp_verdict(P, X, partition)
    loss = combined_fair_loss(P, system.family(), 32, ((1,), constant_forecasts(-1)))
    assert prevision(P, loss) == ltp.prevision_y - ltp.prevision_x
    if ltp.holds:
        assert prevision(P, loss) == 0


@settings(max_examples=60, deadline=None)
@given(diffuse_column_systems())
def test_construction_beats_every_nonconglomerable_system(case):
    P, X, partition = case
    system = brier_system(P, X, partition)
    if conglomerability_verdict(P, X, partition).conglomerable:
        with pytest.raises(NotNonconglomerable):
            thm2_rival_construction(system, depth=32)
        return
    construction = thm2_rival_construction(system, depth=32)
    assert construction.delta > 0
    assert construction.margin >= construction.delta
    assert construction.verdict.kind == 'uniform_strict'
    assert construction.verify(system, depth=32)
