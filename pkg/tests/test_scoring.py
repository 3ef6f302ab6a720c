import math
from fractions import Fraction

import pytest
import sympy as sy
from hypothesis import assume, given, settings, strategies as st

from charges import GeometricSequence
from scoring import (DegenerateInterval, OutOfRange, PiecewiseDensity, RuleFamily, RuleTemplate, ScoringRule,
                     SqrtDensity, barycenter, check_uniform_similarity, check_uniform_spread, expected_score,
                     interval_mass, invert_mass, log_score_demo, propriety_probe, score, score_difference)
from strategies import HALF, charges, fractions, piecewise_densities, piecewise_rules, positive, spaces, variables

STEP = PiecewiseDensity((Fraction(0),), (Fraction(2), Fraction(4)))


@pytest.fixture
def spiky():
    """Density 2 up to 2^-(i+1), then 4 * 2^i."""
    return RuleFamily('f', template=RuleTemplate(
        'piecewise', (GeometricSequence(0, ((HALF, HALF),)),),
        (GeometricSequence(2), GeometricSequence(0, ((4, 2),))), None, 'f'))


class TestScores:
    @pytest.mark.parametrize('x,q', [(0, 0), (1, 0), (0, HALF), (1, Fraction(3, 4)), (-2, 3)])
    def test_brier_is_squared_error(self, brier, x, q):
        assert score(brier, x, q) == (Fraction(x) - q) ** 2

    def test_weighted_brier(self):
        rule = ScoringRule.brier(Fraction(1, 4))
        assert rule.brier_weight() == Fraction(1, 4)
        assert score(rule, 1, 0) == Fraction(1, 4)

    def test_nonpositive_weight_is_rejected(self):
        with pytest.raises(ValueError, match='positive'):
            ScoringRule.brier(0)

    def test_spiky_member_at_its_own_forecast(self, spiky):
        rule = spiky.member(1)
        assert rule.measure.breakpoints == (Fraction(1, 4),)
        assert score(rule, Fraction(-3, 4), HALF) == Fraction(13, 4)

    def test_sqrt_score_is_exact(self):
        assert score(ScoringRule.sqrt(), 1, 0) == Fraction(2, 3)


class TestBarycenter:
    def test_brier(self):
        assert barycenter(STEP, 0, 1) == HALF
        assert barycenter(ScoringRule.brier().measure, 0, 1) == HALF

    def test_piecewise_across_a_breakpoint(self):
        assert interval_mass(STEP, -1, 1) == 6
        assert barycenter(STEP, -1, 1) == Fraction(1, 6)

    def test_sqrt(self):
        assert barycenter(SqrtDensity(), 0, 1) == Fraction(1, 3)
        assert barycenter(SqrtDensity(), 1, 4) == Fraction(7, 3)

    def test_endpoint_order_does_not_matter(self):
        assert barycenter(STEP, 1, -1) == barycenter(STEP, -1, 1)

    def test_empty_interval(self):
        with pytest.raises(DegenerateInterval):
            barycenter(STEP, 2, 2)


class TestInvertMass:
    def test_brier(self, brier):
        assert invert_mass(brier.measure, 0, 1, 'up') == HALF
        assert invert_mass(brier.measure, 1, Fraction(9, 10), 'down') == Fraction(11, 20)

    def test_crosses_a_breakpoint(self):
        assert invert_mass(STEP, -1, 4, 'up') == HALF
        assert invert_mass(STEP, 1, 5, 'down') == -HALF

    def test_sqrt(self):
        assert invert_mass(SqrtDensity(), 0, 1, 'up') == 1
        assert invert_mass(SqrtDensity(), 1, 1, 'up') == 4
        assert invert_mass(SqrtDensity(), 1, 2, 'down') == -1

    @pytest.mark.parametrize('m,direction', [(0, 'up'), (-1, 'down'), (1, 'sideways')])
    def test_bad_arguments(self, brier, m, direction):
        with pytest.raises(ValueError):
            invert_mass(brier.measure, 0, m, direction)


def test_expected_brier_score(brier, dubins, indicator_f):
    assert expected_score(dubins, indicator_f, brier, 0) == HALF
    assert expected_score(dubins, indicator_f, brier, HALF) == Fraction(1, 4)


def test_propriety_probe_finds_the_prevision(brier, dubins, indicator_f):
    report = propriety_probe(brier, dubins, indicator_f, [Fraction(k, 4) for k in range(5)])
    assert report.argmin == HALF
    assert report.prevision == HALF
    assert report.passed
    assert report.margin == Fraction(1, 16)


class TestUniformSpread:
    def test_brier_bound(self, brier):
        report = check_uniform_spread([brier], 1)
        assert report.verdict == 'satisfied'
        assert report.bound == 2
        assert report.delta == Fraction(1, 4)

    def test_bounded_template(self, brier_cells):
        report = check_uniform_spread(brier_cells, HALF)
        assert report.verdict == 'satisfied'
        assert report.delta == Fraction(1, 8)

    def test_sharpening_densities_violate(self, spiky):
        report = check_uniform_spread(spiky, 1)
        assert report.verdict == 'violated'
        assert [w['delta'] for w in report.witnesses] == [Fraction(1, 2 ** m) for m in range(1, 7)]
        assert all(w['distance'] < w['delta'] for w in report.witnesses)

    def test_shallow_depth_is_inconclusive(self, spiky):
        assert check_uniform_spread(spiky, 1, depth=2).verdict == 'inconclusive'

    def test_epsilon_must_be_positive(self, brier):
        with pytest.raises(ValueError):
            check_uniform_spread([brier], 0)


class TestUniformSimilarity:
    def test_identical_rules(self, brier):
        report = check_uniform_similarity([brier], 'brier', HALF)
        assert report.verdict == 'satisfied'
        assert report.gamma == HALF

    def test_double_weight(self, brier):
        report = check_uniform_similarity([brier, ScoringRule.brier(2, 'double')], 'double', 1)
        assert report.lower_bound == HALF
        assert report.gamma == HALF

    def test_halving_weights_violate(self, brier, halving_cells):
        report = check_uniform_similarity(halving_cells, brier, HALF)
        assert report.verdict == 'violated'
        assert report.witnesses[-1]['mass'] < report.witnesses[-1]['gamma']

    def test_unknown_reference(self, brier):
        with pytest.raises(ValueError, match='explicit member'):
            check_uniform_similarity([brier], 'log', 1)

    def test_identical_square_root_rules(self):
        root = ScoringRule.sqrt()
        report = check_uniform_similarity([root, root], root, 1)
        assert report.verdict == 'satisfied'
        assert report.lower_bound == 1
        assert report.gamma == 1

    def test_square_root_scales(self):
        rules = [ScoringRule.sqrt(2, 'two'), ScoringRule.sqrt(3, 'three')]
        report = check_uniform_similarity(rules, 'three', 1)
        assert report.lower_bound == Fraction(2, 3)
        assert report.gamma == Fraction(2, 3)

    def test_square_root_template(self):
        roots = RuleFamily('roots', template=RuleTemplate('sqrt', (), (), GeometricSequence(2), 'root_'))
        report = check_uniform_similarity(roots, ScoringRule.sqrt(4), HALF)
        assert report.verdict == 'satisfied'
        assert report.gamma == Fraction(1, 4)

    def test_irrational_epsilon_is_kept_exact(self):
        root = ScoringRule.sqrt()
        epsilon = interval_mass(root.measure, HALF, 1) / 2
        assert not isinstance(epsilon, Fraction)
        report = check_uniform_similarity([root], root, epsilon)
        assert report.verdict == 'satisfied'
        assert sy.simplify(report.gamma - epsilon) == 0

    def test_epsilon_must_be_exact(self, brier):
        with pytest.raises(ValueError, match='exact number'):
            check_uniform_similarity([brier], brier, None)


class TestLogScore:
    def test_agglutinated_mass(self):
        assert log_score_demo(0, 1, 0) == math.inf
        assert log_score_demo(0, 1, HALF) == pytest.approx(math.log(2))

    @pytest.mark.parametrize('c1,c2,q', [(0, 1, 1), (0, 1, -1), (1, 0, HALF)])
    def test_out_of_range(self, c1, c2, q):
        with pytest.raises(OutOfRange):
            log_score_demo(c1, c2, q)


@settings(max_examples=1000, deadline=None)
@given(piecewise_rules(), fractions, fractions, fractions)
def test_score_difference_matches_scores(rule, x, q, p):
    assert score(rule, x, q) - score(rule, x, p) == score_difference(rule, x, q, p)


@settings(max_examples=1000, deadline=None)
@given(piecewise_densities(), fractions, fractions)
def test_barycenter_is_interior(measure, a, b):
    assume(a != b)
    center = barycenter(measure, a, b)
    assert min(a, b) < center < max(a, b)


@settings(max_examples=1000, deadline=None)
@given(piecewise_densities(), fractions, positive, st.sampled_from(['up', 'down']))
def test_invert_mass_inverts_interval_mass(measure, anchor, m, direction):
    end = invert_mass(measure, anchor, m, direction)
    assert interval_mass(measure, anchor, end) == m


@settings(deadline=None)
@given(piecewise_rules(), st.fractions(0, 1, max_denominator=10), st.fractions(-1, 2, max_denominator=10))
def test_strict_propriety_on_a_binary_event(rule, p, q):
    assume(q != p)

    def expected(forecast):
        return p * score(rule, 1, forecast) + (1 - p) * score(rule, 0, forecast)

    assert expected(q) > expected(p)


@st.composite
def rule_charge_variable(draw):
    space = draw(spaces(max_columns=2))
    values = st.fractions(min_value=-2, max_value=2, max_denominator=4)
    return draw(piecewise_rules()), draw(charges(space)), draw(variables(space, values))


@settings(max_examples=100, deadline=None)
@given(rule_charge_variable())
def test_prevision_uniquely_minimizes_expected_score(case):
    rule, P, X = case
    grid = [Fraction(k, 4) for k in range(-8, 9)]
    report = propriety_probe(rule, P, X, grid)
    assert report.passed
    best = dict(report.table)[report.prevision]
    assert all(expected > best for q, expected in report.table if q != report.prevision)
