from fractions import Fraction

import pytest

from documents import SpecError
from scenarios import UnknownScenario, list_scenarios, run_document, run_scenario, scenario_document

SCENARIO_IDS = ['ex1_abstain', 'ex3_purely_fa_brier', 'ctrex_thm1_spread', 'ex2_dubins', 'ctrex_thm2_similarity',
                'control_ca']


def failures(report):
    return {o.id: o.error or o.mismatches for o in report.outcomes if not o.passed}


def test_catalogue():
    assert list_scenarios() == SCENARIO_IDS
    assert scenario_document('ex2_dubins')['title'] == 'Example 2 (Dubins)'


def test_unknown_scenario():
    with pytest.raises(UnknownScenario, match='ex9'):
        scenario_document('ex9')


def test_documents_are_copies():
    scenario_document('control_ca')['checks'].clear()
    assert scenario_document('control_ca')['checks']


@pytest.mark.parametrize('scenario_id', SCENARIO_IDS)
def test_builtin_scenarios_pass(scenario_id):
    report = run_scenario(scenario_id)
    assert failures(report) == {}
    assert report.passed
    assert report.body()['verdict'] == 'PASS'


def test_abstaining_with_countable_mass():
    report = run_scenario('ex1_abstain', {'c': '1/4'})
    assert failures(report) == {}
    assert report.params == {'c': Fraction(1, 4)}
    sure_loss = next(o for o in report.outcomes if o.id == 'sure_loss')
    assert sure_loss.values['constant'] == Fraction(3, 4)


def test_wrong_expectation_fails_the_check():
    doc = scenario_document('control_ca')
    doc['checks'][0]['expect']['prevision'] = '1/2'
    report = run_document(doc)
    assert not report.passed
    assert list(failures(report)) == ['conglomerable']
    assert report.body()['checks'][0]['verdict'] == 'FAIL'


def test_expected_error_that_never_comes():
    doc = scenario_document('control_ca')
    doc['checks'] = [{'id': 'wrong', 'op': 'conglomerability', 'variable': 'F', 'partition': 'pi',
                      'expect_error': 'NotNonconglomerable'}]
    outcome = run_document(doc).outcomes[0]
    assert not outcome.passed
    assert 'but the check completed' in outcome.mismatches[0]


def test_unexpected_error_fails_only_its_check():
    doc = scenario_document('ctrex_thm2_similarity')
    doc['checks'] = [c for c in doc['checks'] if c['id'] in ('nonconglomerable', 'no_construction')]
    del doc['checks'][1]['expect_error']
    report = run_document(doc)
    assert [o.passed for o in report.outcomes] == [True, False]
    assert report.outcomes[1].error.startswith('SimilarityViolated')


def test_unknown_operation():
    doc = scenario_document('control_ca')
    doc['checks'] = [{'id': 'x', 'op': 'teleport'}]
    with pytest.raises(SpecError, match='unknown operation'):
        run_document(doc)


def test_float_mode_body():
    body = run_scenario('control_ca').body('float')
    conglomerable = body['checks'][0]
    assert conglomerable['result']['prevision'] == 0.75
    assert body['mode'] == 'float'
