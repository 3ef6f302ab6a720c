import os
import sys
from fractions import Fraction

import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from charges import Charge, GeometricSequence, GeometricTail, Partition, StateSpace, StructuredEvent  # noqa: E402
from scoring import RuleFamily, RuleTemplate, ScoringRule  # noqa: E402
from aggregation import ConditionalSystem  # noqa: E402

HALF = Fraction(1, 2)


@pytest.fixture
def two_columns():
    return StateSpace(('notF', 'F'))


@pytest.fixture
def dubins(two_columns):
    """Diffuse mass 1/2 off F, atoms 2^-(j+1) on F."""
    return Charge(two_columns, tails={2: GeometricTail(2, 0, HALF, HALF)}, diffuse={1: HALF}, name='P')


@pytest.fixture
def control(two_columns):
    """Countably additive: atoms 2^-j split 1/4 off F and 3/4 on F."""
    return Charge(two_columns, tails={1: GeometricTail(1, 0, Fraction(1, 4), HALF),
                                      2: GeometricTail(2, 0, Fraction(3, 4), HALF)}, name='Q')


@pytest.fixture
def diffuse_line():
    space = StateSpace(('omega',))
    return Charge(space, diffuse={1: 1})


@pytest.fixture
def indicator_f(two_columns):
    return StructuredEvent.column(two_columns, 'F').indicator()


@pytest.fixture
def cross_section(two_columns):
    return Partition.cross_section(two_columns)


@pytest.fixture
def brier():
    return ScoringRule.brier()


@pytest.fixture
def brier_cells():
    return RuleFamily('brier_cells', template=RuleTemplate.brier(1, 'brier_'))


@pytest.fixture
def halving_cells():
    return RuleFamily('halving', template=RuleTemplate.brier(GeometricSequence(0, ((HALF, HALF),)), 'h'))


@pytest.fixture
def dubins_system(dubins, indicator_f, cross_section, brier, brier_cells):
    return ConditionalSystem(dubins, indicator_f, cross_section, brier, brier_cells, label='dubins')


@pytest.fixture
def control_system(control, indicator_f, cross_section, brier, brier_cells):
    return ConditionalSystem(control, indicator_f, cross_section, brier, brier_cells, label='control')
