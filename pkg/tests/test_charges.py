from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from charges import (Charge, GeometricSequence, GeometricTail, InvalidCharge, NullConditioningEvent, Partition,
                     StructuredEvent, StructuredRV, UnstructuredResult, conditional_prevision, event_probability,
                     partition_conditionals, prevision)
from strategies import HALF, charges, events, fractions, spaces, variables, weights


@st.composite
def charge_and_events(draw):
    space = draw(spaces())
    return draw(charges(space)), draw(events(space)), draw(events(space))


@st.composite
def charge_and_variables(draw):
    space = draw(spaces())
    return draw(charges(space)), draw(variables(space)), draw(variables(space)), draw(fractions), draw(fractions)


class TestGeometricSequence:
    def test_evaluation_and_tail_sum(self):
        seq = GeometricSequence(3, ((HALF, HALF),))
        assert seq.at(1) == Fraction(13, 4)
        assert seq.at(2) == Fraction(25, 8)
        assert GeometricSequence(0, ((1, HALF),)).tail_sum(1) == 1

    def test_divergent_tail_sum(self):
        with pytest.raises(UnstructuredResult):
            GeometricSequence(1).tail_sum(1)

    def test_extremes_report_attainment(self):
        decreasing = GeometricSequence(0, ((1, HALF),))
        assert decreasing.infimum() == (0, False, None)
        assert decreasing.supremum() == (HALF, True, 1)
        assert GeometricSequence(0, ((1, 2),)).supremum()[0] is None

    def test_unit_ratio_folds_into_the_constant(self):
        assert GeometricSequence(1, ((2, 1),)) == GeometricSequence(3)

    @given(fractions, fractions, fractions)
    def test_arithmetic_matches_pointwise(self, a, b, c):
        x = GeometricSequence(a, ((b, HALF),))
        y = GeometricSequence(c, ((a, Fraction(1, 3)),))
        for j in range(1, 6):
            assert (x + y).at(j) == x.at(j) + y.at(j)
            assert (x * y).at(j) == x.at(j) * y.at(j)


class TestCharge:
    def test_normalization_is_enforced(self, two_columns):
        with pytest.raises(InvalidCharge, match='normalization'):
            Charge(two_columns, diffuse={1: Fraction(9, 10)})

    def test_atoms_may_not_overlap_a_tail(self, two_columns):
        with pytest.raises(InvalidCharge):
            Charge(two_columns, atoms={(2, 2): Fraction(1, 4)},
                   tails={2: GeometricTail(2, 0, Fraction(3, 4), HALF)})

    def test_dubins_probabilities(self, dubins, two_columns, indicator_f):
        assert prevision(dubins, indicator_f) == HALF
        for j in range(1, 6):
            cell = StructuredEvent.cross_section(two_columns, j)
            assert event_probability(dubins, cell) == Fraction(1, 2 ** (j + 1))
            assert conditional_prevision(dubins, indicator_f, cell) == 1
        assert not dubins.is_countably_additive

    def test_diffuse_charge_sees_only_limits(self, diffuse_line):
        space = diffuse_line.space
        w3 = StructuredEvent.singleton(space, (1, 3))
        assert event_probability(diffuse_line, w3) == 0
        assert event_probability(diffuse_line, ~w3) == 1
        with pytest.raises(NullConditioningEvent):
            conditional_prevision(diffuse_line, w3.indicator(), w3)

    def test_attached_conditional_charge(self, diffuse_line):
        space = diffuse_line.space
        w3 = StructuredEvent.singleton(space, (1, 3))
        P = diffuse_line.with_conditional(w3, Charge(space, atoms={(1, 3): 1}))
        X = StructuredRV.build(space, {1: ({3: 5}, 1)})
        assert conditional_prevision(P, X, w3) == 5

    def test_transient_prevision(self, dubins, two_columns):
        X = StructuredRV.build(two_columns, {'F': ({}, GeometricSequence(0, ((1, HALF),)))})
        # sum_j 2^-(j+1) * 2^-j
        assert prevision(dubins, X) == Fraction(1, 6)


class TestPartitions:
    def test_dubins_cross_section(self, dubins, indicator_f, cross_section):
        table = partition_conditionals(dubins, indicator_f, cross_section)
        assert table.y == StructuredRV.constant(dubins.space, 1)
        assert table.tail_pattern == GeometricSequence(1)

    def test_control_cross_section(self, control, indicator_f, cross_section):
        y = partition_conditionals(control, indicator_f, cross_section).y
        assert y == StructuredRV.constant(control.space, Fraction(3, 4))

    def test_by_columns(self, dubins, indicator_f):
        y = partition_conditionals(dubins, indicator_f, Partition.by_columns(dubins.space)).y
        assert y.eventual('F') == 1 and y.eventual('notF') == 0

    def test_explicit_cells_must_cover(self, two_columns):
        with pytest.raises(ValueError, match='cover'):
            Partition.explicit(two_columns, [StructuredEvent.column(two_columns, 'F')])


class TestStructuredRV:
    def test_infimum_of_a_limit(self, two_columns):
        X = StructuredRV.build(two_columns, {'notF': ({1: 2}, GeometricSequence(1, ((1, HALF),))),
                                             'F': ({}, 3)})
        assert X.infimum() == (1, False, None)
        assert X.supremum() == (3, True, (2, 1))

    def test_map_refuses_transients(self, two_columns):
        X = StructuredRV.build(two_columns, {'F': ({}, GeometricSequence(0, ((1, HALF),)))})
        with pytest.raises(UnstructuredResult):
            X.map(abs)


@settings(max_examples=1000, deadline=None)
@given(charge_and_events())
def test_finite_additivity(case):
    P, A, B = case
    B = B - A
    assert event_probability(P, A | B) == event_probability(P, A) + event_probability(P, B)
    assert event_probability(P, StructuredEvent.omega(P.space)) == 1


@settings(max_examples=1000, deadline=None)
@given(charge_and_variables())
def test_prevision_is_linear(case):
    P, X, Y, a, b = case
    assert prevision(P, X * a + Y * b) == a * prevision(P, X) + b * prevision(P, Y)


@st.composite
def charge_variable_increment(draw):
    space = draw(spaces())
    return draw(charges(space)), draw(variables(space)), draw(variables(space, weights))


@settings(max_examples=1000, deadline=None)
@given(charge_variable_increment())
def test_prevision_is_monotone(case):
    P, X, Z = case
    assert prevision(P, X) <= prevision(P, X + Z)
