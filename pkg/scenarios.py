"""Built-in scenario documents and the engine that runs the checks a document lists."""
import copy
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Tuple

from aggregation import (ConditionalSystem, EntryFamily, RivalGrid, abstain_dominance,
                         class_verdicts, combined_fair_loss, combined_score, conglomerability_verdict, ltp_verdict,
                         propriety_of_infinite_sum, rival_dominance_probe, thm1_condition_check,
                         thm2_rival_construction, thm3_no_dominance_probe)
from charges import GeometricSequence, StructuredRV, prevision
from coherence import brier_projection_rival, dominance_verdict, incoherence1_certificate
from documents import (Model, SpecError, compile_document, parse_coefficients, parse_rational, parse_rival,
                       parse_sequence, render)
from scoring import check_uniform_similarity, check_uniform_spread, expected_score, log_score_demo, propriety_probe
from settings import DEFAULT_DEPTH, DEFAULT_GRID, DEFAULT_SAFETY

logger = logging.getLogger(__name__)


class UnknownScenario(ValueError):
    pass


def _dubins_base(name: str, title: str) -> dict:
    return {
        'name': name,
        'title': title,
        'state_space': {'columns': ['notF', 'F']},
        'charge': {
            'name': 'P',
            'geometric_tails': [{'column': 'F', 'after': 0, 'coefficient': '1/2', 'ratio': '1/2'}],
            'diffuse': {'notF': '1/2'},
        },
        'events': [{'id': 'F', 'column': 'F'}],
        'variables': [{'id': 'F', 'indicator': 'F'}],
        'partitions': [{'id': 'pi', 'kind': 'cross_section'}],
        'rules': [{'id': 'brier', 'brier': 1}],
        'rule_families': [{'id': 'brier_cells', 'template': {'kind': 'brier', 'weight': 1, 'id_prefix': 'brier_'}}],
    }


def ex1_abstain() -> dict:
    return {
        'name': 'ex1_abstain',
        'title': 'Example 1 (abstaining)',
        'parameters': {'c': {'default': '0', 'min': '0', 'below': '1'}},
        'state_space': {'columns': ['omega']},
        'charge': {
            'geometric_tails': [{'column': 'omega', 'after': 0, 'coefficient': 'c', 'ratio': '1/2'}],
            'diffuse': {'omega': '1 - c'},
        },
        'systems': [
            {'id': 'bets', 'kind': 'family', 'ratios': ['1/2'],
             'indexed': {'variable': {'omega': {'eventual': 0, 'at_index': 1}},
                         'forecast': {'const': 0, 'terms': [['c', '1/2']]}, 'alpha': 1, 'label': 'W'}},
            {'id': 'control', 'kind': 'family', 'ratios': ['1/2', '1/4'],
             'indexed': {'variable': {'omega': {'eventual': 0, 'at_index': 1}},
                         'forecast': {'const': 0, 'terms': [[1, '1/2']]},
                         'alpha': {'const': 1, 'terms': [[1, '1/2']]}, 'label': 'W'}},
        ],
        'checks': [
            {'id': 'sure_loss', 'op': 'fair_loss', 'system': 'bets',
             'expect': {'constant': '1 - c', 'abstain_epsilon': '1 - c'}},
            {'id': 'countably_additive_control', 'op': 'fair_loss', 'system': 'control',
             'expect': {'abstain_epsilon': None, 'infimum': '-1/3',
                        'at': {'omega:1': '1/6', 'omega:2': '-1/12', 'omega:tail': '-1/3'}}},
            {'id': 'finite_prefix_coherent', 'op': 'coherence1', 'system': 'bets', 'prefix': 3,
             'expect': {'coherent': True}},
        ],
    }


def ex3_purely_fa_brier() -> dict:
    return {
        'name': 'ex3_purely_fa_brier',
        'title': 'Example 3 (purely finitely additive Brier)',
        'state_space': {'columns': ['omega']},
        'charge': {'diffuse': {'omega': 1}},
        'rule_families': [{'id': 'weighted', 'template': {
            'kind': 'brier', 'weight': {'const': 1, 'terms': [['-1/2', '1/2']]}, 'id_prefix': 'w'}}],
        'systems': [
            {'id': 'forecasts', 'kind': 'family', 'ratios': ['1/2'],
             'indexed': {'variable': {'omega': {'eventual': 0, 'at_index': 1}}, 'forecast': 0,
                         'rule': 'weighted', 'alpha': 1, 'label': 'W'}},
        ],
        'checks': [
            {'id': 'sure_loss', 'op': 'fair_loss', 'system': 'forecasts',
             'expect': {'constant': 1, 'abstain_epsilon': 1}},
            {'id': 'sum_conditions', 'op': 'sum_conditions', 'system': 'forecasts', 'rules': 'weighted',
             'epsilon': 1, 'expect': {'V': 1, 'W': 1, 'spread': 'satisfied', 'verdict': 'conditions-met'}},
            {'id': 'spread', 'op': 'uniform_spread', 'rules': 'weighted', 'epsilon': 1,
             'expect': {'verdict': 'satisfied', 'delta': '1/4'}},
            {'id': 'no_dominating_rival', 'op': 'rival_probe', 'system': 'forecasts',
             'grid': {'step': '1/4', 'prefix_length': 1}, 'expect': {'dominated': False}},
            {'id': 'finite_d_analysis', 'op': 'finite_d_analysis', 'system': 'forecasts',
             'grid': {'step': '1/4', 'prefix_length': 1}, 'expect': {'holds': True}},
            {'id': 'sum_is_proper', 'op': 'sum_propriety', 'system': 'forecasts',
             'grid': {'step': '1/4', 'prefix_length': 1}, 'expect': {'proper': True, 'expected_original': 1}},
        ],
    }


def ctrex_thm1_spread() -> dict:
    return {
        'name': 'ctrex_thm1_spread',
        'title': 'Counterexample to Theorem 1 (uniform spread)',
        'state_space': {'columns': ['A']},
        'charge': {'diffuse': {'A': 1}},
        'rule_families': [{'id': 'f', 'template': {
            'kind': 'piecewise', 'id_prefix': 'f',
            'breakpoints': [{'const': 0, 'terms': [['1/2', '1/2']]}],
            'values': [2, {'const': 0, 'terms': [[4, 2]]}]}}],
        'systems': [
            {'id': 'forecasts', 'kind': 'family', 'ratios': ['1/2'],
             'indexed': {'variable': {'A': {'eventual': {'const': 0, 'terms': [[1, '1/2']]},
                                            'at_index': {'const': -1, 'terms': [['1/2', '1/2']]}}},
                         'forecast': {'const': 0, 'terms': [[1, '1/2']]}, 'rule': 'f', 'alpha': 1,
                         'label': 'X'}},
        ],
        'checks': [
            {'id': 'total_at_forecasts', 'op': 'total_score', 'system': 'forecasts',
             'expect': {'prevision': 3, 'at': {'A:1': '13/4', 'A:2': '25/8', 'A:tail': 3}}},
            {'id': 'total_at_rivals', 'op': 'total_score', 'system': 'forecasts',
             'rival': {'indexed': {'const': 0, 'terms': [['1/2', '1/2']]}, 'label': 'q'},
             'expect': {'prevision': '3/2', 'at': {'A:1': '5/4', 'A:tail': '3/2'}}},
            {'id': 'rivals_dominate', 'op': 'dominance', 'system': 'forecasts',
             'rival': {'indexed': {'const': 0, 'terms': [['1/2', '1/2']]}, 'label': 'q'},
             'expect': {'kind': 'uniform_strict', 'epsilon': '3/2', 'at': {'A:1': 2, 'A:2': '7/4', 'A:tail': '3/2'}}},
            {'id': 'sum_conditions', 'op': 'sum_conditions', 'system': 'forecasts', 'rules': 'f', 'epsilon': 1,
             'expect': {'V': 1, 'W': 3, 'spread': 'violated', 'verdict': 'violated'}},
        ],
    }


def ex2_dubins() -> dict:
    doc = _dubins_base('ex2_dubins', 'Example 2 (Dubins)')
    doc['systems'] = [{'id': 'dubins', 'kind': 'conditional', 'variable': 'F', 'partition': 'pi',
                       'rule0': 'brier', 'cell_rules': 'brier_cells', 'ratios': ['1/2']}]
    doc['checks'] = [
        {'id': 'nonconglomerable', 'op': 'conglomerability', 'variable': 'F', 'partition': 'pi',
         'expect': {'conglomerable': False, 'prevision': '1/2', 'infimum': 1, 'supremum': 1, 'gap': '1/2',
                    'side': 'inf'}},
        {'id': 'total_previsions_fail', 'op': 'ltp', 'variable': 'F', 'partition': 'pi',
         'expect': {'holds': False, 'prevision_x': '1/2', 'prevision_y': 1}},
        {'id': 'class_agreement', 'op': 'class_verdicts', 'variables': ['F'], 'partition': 'pi',
         'expect': {'conglomerable': False, 'ltp_holds': False, 'agree': True}},
        {'id': 'fair_options_sure_loss', 'op': 'fair_loss', 'system': 'dubins',
         'coefficients': {'head': [1], 'indexed': -1},
         'expect': {'constant': '1/2', 'abstain_epsilon': '1/2'}},
        {'id': 'brier_totals', 'op': 'total_score', 'system': 'dubins',
         'expect': {'at': {'notF:1': '5/4', 'F:1': '1/4', 'notF:tail': '5/4', 'F:tail': '1/4'},
                    'prevision': '3/4'}},
        {'id': 'hand_picked_rival', 'op': 'dominance', 'system': 'dubins',
         'rival': {'head': ['3/4'], 'indexed': '3/4', 'label': 'Q'},
         'expect': {'kind': 'uniform_strict', 'epsilon': '1/8'}},
        {'id': 'constructed_rival', 'op': 'rival_construction', 'system': 'dubins',
         'expect': {'epsilon': '1/2', 'side': 'inf', 'w0': '1/2', 'w1': '1/2', 'w2': '9/20', 'q_prime': '3/4',
                    'q_x': '29/40', 'q_cells': '31/40', 'delta': '9/800', 'margin': '99/800',
                    'dominance': 'uniform_strict', 'abstain_margin': '1/2'}},
        {'id': 'sum_not_proper', 'op': 'sum_propriety', 'system': 'dubins', 'grid': {'step': '1/4'},
         'expect': {'proper': False, 'expected_original': '3/4', 'witness': 'construction'}},
    ]
    return doc


def ctrex_thm2_similarity() -> dict:
    doc = _dubins_base('ctrex_thm2_similarity', 'Counterexample to Theorem 2 (uniform similarity)')
    doc['rule_families'].append({'id': 'halving', 'template': {
        'kind': 'brier', 'weight': {'const': 0, 'terms': [['1/2', '1/2']]}, 'id_prefix': 'h'}})
    doc['systems'] = [{'id': 'dubins', 'kind': 'conditional', 'variable': 'F', 'partition': 'pi',
                       'rule0': 'brier', 'cell_rules': 'halving', 'ratios': ['1/2']}]
    doc['checks'] = [
        {'id': 'nonconglomerable', 'op': 'conglomerability', 'variable': 'F', 'partition': 'pi',
         'expect': {'conglomerable': False, 'gap': '1/2'}},
        {'id': 'similarity_fails', 'op': 'uniform_similarity', 'system': 'dubins', 'epsilon': '1/2',
         'expect': {'verdict': 'violated'}},
        {'id': 'totals', 'op': 'total_score', 'system': 'dubins',
         'expect': {'at': {'notF:1': '1/2', 'notF:2': '3/8', 'F:1': '1/4', 'notF:tail': '1/4'}}},
        {'id': 'no_construction', 'op': 'rival_construction', 'system': 'dubins',
         'expect_error': 'SimilarityViolated'},
        {'id': 'no_dominating_rival', 'op': 'rival_probe', 'system': 'dubins', 'grid': {'step': '1/4'},
         'expect': {'dominated': False}},
        {'id': 'delta_threshold', 'op': 'delta_threshold', 'system': 'dubins',
         'head_grid': ['0', '1/8', '1/4', '3/8', '5/8', '3/4', '7/8', '1'], 'cell_grid': ['0', '1/2', '3/4', '1'],
         'one_column': 'F', 'zero_column': 'notF', 'expect': {'holds': True}},
    ]
    return doc


def control_ca() -> dict:
    doc = _dubins_base('control_ca', 'Countably additive control (Q of Example 2)')
    doc['charge'] = {
        'name': 'Q',
        'geometric_tails': [{'column': 'notF', 'after': 0, 'coefficient': '1/4', 'ratio': '1/2'},
                            {'column': 'F', 'after': 0, 'coefficient': '3/4', 'ratio': '1/2'}],
    }
    doc['systems'] = [{'id': 'control', 'kind': 'conditional', 'variable': 'F', 'partition': 'pi',
                       'rule0': 'brier', 'cell_rules': 'brier_cells', 'ratios': ['1/2']}]
    doc['checks'] = [
        {'id': 'conglomerable', 'op': 'conglomerability', 'variable': 'F', 'partition': 'pi',
         'expect': {'conglomerable': True, 'prevision': '3/4', 'infimum': '3/4', 'supremum': '3/4'}},
        {'id': 'total_previsions_hold', 'op': 'ltp', 'variable': 'F', 'partition': 'pi',
         'expect': {'holds': True, 'prevision_x': '3/4', 'prevision_y': '3/4'}},
        {'id': 'class_agreement', 'op': 'class_verdicts', 'variables': ['F'], 'partition': 'pi',
         'expect': {'conglomerable': True, 'ltp_holds': True, 'agree': True}},
        {'id': 'no_dominance', 'op': 'no_dominance_probe', 'system': 'control', 'grid': {'step': '1/4'},
         'expect': {'passed': True, 'fair_losses_zero': True, 'dominated': False}},
        {'id': 'no_construction', 'op': 'rival_construction', 'system': 'control',
         'expect_error': 'NotNonconglomerable'},
        {'id': 'sum_is_proper', 'op': 'sum_propriety', 'system': 'control', 'grid': {'step': '1/4'},
         'expect': {'proper': True}},
    ]
    return doc


SCENARIOS: Dict[str, Callable[[], dict]] = {
    'ex1_abstain': ex1_abstain,
    'ex3_purely_fa_brier': ex3_purely_fa_brier,
    'ctrex_thm1_spread': ctrex_thm1_spread,
    'ex2_dubins': ex2_dubins,
    'ctrex_thm2_similarity': ctrex_thm2_similarity,
    'control_ca': control_ca,
}


def list_scenarios() -> List[str]:
    return list(SCENARIOS)


def scenario_document(scenario_id: str) -> dict:
    if scenario_id not in SCENARIOS:
        raise UnknownScenario(f"Unknown scenario {scenario_id!r}; known: {', '.join(SCENARIOS)}")
    return copy.deepcopy(SCENARIOS[scenario_id]())


@dataclass
class RunContext:
    model: Model
    depth: int = DEFAULT_DEPTH
    grid_step: Fraction = DEFAULT_GRID
    safety: Fraction = DEFAULT_SAFETY

    def number(self, value, path: str) -> Fraction:
        return parse_rational(value, path, self.model.params)

    def system(self, check: dict, path: str):
        return self.model.lookup('systems', check.get('system'), f"{path}.system")

    def family(self, check: dict, path: str) -> EntryFamily:
        system = self.system(check, path)
        return system.family() if isinstance(system, ConditionalSystem) else system

    def conditional_system(self, check: dict, path: str) -> ConditionalSystem:
        system = self.system(check, path)
        if not isinstance(system, ConditionalSystem):
            raise SpecError(f"{path}.system", f"{check.get('system')!r} is not a conditional system")
        return system

    def grid(self, check: dict, path: str) -> RivalGrid:
        spec = check.get('grid', {})
        lo = self.number(spec['lo'], f"{path}.grid.lo") if 'lo' in spec else None
        hi = self.number(spec['hi'], f"{path}.grid.hi") if 'hi' in spec else None
        step = self.number(spec['step'], f"{path}.grid.step") if 'step' in spec else self.grid_step
        return RivalGrid(step, lo, hi, int(spec.get('prefix_length', 0)))


@dataclass
class OpResult:
    values: dict
    quantities: Dict[str, StructuredRV] = field(default_factory=dict)
    focus: Optional[StructuredRV] = None


def _rv_summary(rv: StructuredRV, P) -> dict:
    low, low_attained, _ = rv.infimum()
    return {
        'infimum': low,
        'infimum_attained': low_attained,
        'supremum': rv.supremum()[0],
        'constant': rv.eventual(1) if rv.is_constant else None,
        'prevision': prevision(P, rv),
        'values': rv,
    }


def op_conglomerability(ctx: RunContext, check: dict, path: str) -> OpResult:
    X = ctx.model.lookup('variables', check.get('variable'), f"{path}.variable")
    partition = ctx.model.lookup('partitions', check.get('partition'), f"{path}.partition")
    v = conglomerability_verdict(ctx.model.charge, X, partition)
    return OpResult({'conglomerable': v.conglomerable, 'prevision': v.prevision, 'infimum': v.infimum,
                     'supremum': v.supremum, 'gap': v.gap, 'side': v.side})


def op_ltp(ctx: RunContext, check: dict, path: str) -> OpResult:
    X = ctx.model.lookup('variables', check.get('variable'), f"{path}.variable")
    partition = ctx.model.lookup('partitions', check.get('partition'), f"{path}.partition")
    v = ltp_verdict(ctx.model.charge, X, partition)
    return OpResult({'holds': v.holds, 'prevision_x': v.prevision_x, 'prevision_y': v.prevision_y, 'Y': v.y},
                    {'Y': v.y}, v.y)


def op_class_verdicts(ctx: RunContext, check: dict, path: str) -> OpResult:
    variables = [(name, ctx.model.lookup('variables', name, f"{path}.variables[{n}]"))
                 for n, name in enumerate(check.get('variables', []))]
    partition = ctx.model.lookup('partitions', check.get('partition'), f"{path}.partition")
    v = class_verdicts(ctx.model.charge, variables, partition)
    return OpResult({'conglomerable': v.conglomerable, 'ltp_holds': v.ltp_holds, 'agree': v.agree,
                     'members': v.members})


def op_fair_loss(ctx: RunContext, check: dict, path: str) -> OpResult:
    family = ctx.family(check, path)
    coefficients = None
    if 'coefficients' in check:
        coefficients = parse_coefficients(check['coefficients'], f"{path}.coefficients", ctx.model.params)
    loss = combined_fair_loss(ctx.model.charge, family, ctx.depth, coefficients)
    values = _rv_summary(loss, ctx.model.charge)
    values['abstain_epsilon'] = abstain_dominance(loss)
    return OpResult(values, {'fair_loss': loss}, loss)


def op_total_score(ctx: RunContext, check: dict, path: str) -> OpResult:
    family = ctx.family(check, path)
    if 'rival' in check:
        family = family.with_forecasts(parse_rival(check['rival'], f"{path}.rival", ctx.model.params))
    total = combined_score(ctx.model.charge, family, ctx.depth)
    return OpResult(_rv_summary(total, ctx.model.charge), {'total_score': total}, total)


def op_dominance(ctx: RunContext, check: dict, path: str) -> OpResult:
    family = ctx.family(check, path)
    rival = parse_rival(check.get('rival', {}), f"{path}.rival", ctx.model.params)
    original = combined_score(ctx.model.charge, family, ctx.depth)
    challenger = combined_score(ctx.model.charge, family.with_forecasts(rival), ctx.depth)
    verdict = dominance_verdict(original, challenger)
    improvement = original - challenger
    return OpResult({'kind': verdict.kind, 'epsilon': verdict.epsilon, 'infimum': verdict.infimum,
                     'attained': verdict.attained, 'improvement': improvement},
                    {'original': original, 'rival': challenger, 'improvement': improvement}, improvement)


def op_sum_conditions(ctx: RunContext, check: dict, path: str) -> OpResult:
    family = ctx.family(check, path)
    rules = ctx.model.rule_collection(check['rules'], f"{path}.rules") if 'rules' in check else None
    report = thm1_condition_check(ctx.model.charge, family, rules, ctx.number(check.get('epsilon', 1), f"{path}.epsilon"),
                                  ctx.depth)
    return OpResult({'V': report.V, 'W': report.W, 'spread': report.spread.verdict, 'delta': report.spread.delta,
                     'verdict': report.verdict, 'violations': report.violations})


def op_uniform_spread(ctx: RunContext, check: dict, path: str) -> OpResult:
    rules = ctx.model.rule_collection(check.get('rules'), f"{path}.rules")
    report = check_uniform_spread(rules, ctx.number(check.get('epsilon', 1), f"{path}.epsilon"), ctx.depth)
    return OpResult({'verdict': report.verdict, 'delta': report.delta, 'bound': report.bound,
                     'witnesses': report.witnesses})


def op_uniform_similarity(ctx: RunContext, check: dict, path: str) -> OpResult:
    if 'system' in check:
        system = ctx.conditional_system(check, path)
        rules, reference = system.rule_family(), system.rule0
    else:
        rules = ctx.model.rule_collection(check.get('rules'), f"{path}.rules")
        reference = check.get('reference', 1)
    report = check_uniform_similarity(rules, reference, ctx.number(check.get('epsilon', 1), f"{path}.epsilon"),
                                      ctx.depth)
    return OpResult({'verdict': report.verdict, 'gamma': report.gamma, 'lower_bound': report.lower_bound,
                     'witnesses': report.witnesses})


def op_propriety(ctx: RunContext, check: dict, path: str) -> OpResult:
    rule = ctx.model.lookup('rules', check.get('rule'), f"{path}.rule")
    X = ctx.model.lookup('variables', check.get('variable'), f"{path}.variable")
    grid = [ctx.number(q, f"{path}.grid[{n}]") for n, q in enumerate(check.get('grid', []))]
    report = propriety_probe(rule, ctx.model.charge, X, grid)
    return OpResult({'passed': report.passed, 'argmin': report.argmin, 'prevision': report.prevision,
                     'margin': report.margin})


def op_expected_score(ctx: RunContext, check: dict, path: str) -> OpResult:
    rule = ctx.model.lookup('rules', check.get('rule'), f"{path}.rule")
    X = ctx.model.lookup('variables', check.get('variable'), f"{path}.variable")
    return OpResult({'value': expected_score(ctx.model.charge, X, rule,
                                             ctx.number(check.get('forecast'), f"{path}.forecast"))})


def _finite_entries(ctx: RunContext, check: dict, path: str):
    family = ctx.family(check, path)
    entries = list(family.head)
    if family.make_entry is not None:
        entries += [family.entry(i) for i in range(1, int(check.get('prefix', 1)) + 1)]
    return entries


def op_coherence1(ctx: RunContext, check: dict, path: str) -> OpResult:
    certificate = incoherence1_certificate(_finite_entries(ctx, check, path))
    if certificate is None:
        return OpResult({'coherent': True, 'epsilon': None, 'alphas': None})
    return OpResult({'coherent': False, 'epsilon': certificate.epsilon, 'alphas': certificate.alphas})


def op_brier_rival(ctx: RunContext, check: dict, path: str) -> OpResult:
    certificate = brier_projection_rival(_finite_entries(ctx, check, path))
    if certificate is None:
        return OpResult({'dominated': False, 'epsilon': None, 'rival': None, 'method': None})
    return OpResult({'dominated': True, 'epsilon': certificate.epsilon, 'rival': certificate.rival,
                     'method': certificate.method})


def op_rival_construction(ctx: RunContext, check: dict, path: str) -> OpResult:
    system = ctx.conditional_system(check, path)
    safety = ctx.number(check['safety'], f"{path}.safety") if 'safety' in check else ctx.safety
    c = thm2_rival_construction(system, safety, ctx.depth)
    improvement = (combined_score(system.P, system.family(), ctx.depth)
                   - combined_score(system.P, system.family().with_forecasts(c.rival), ctx.depth))
    cells = c.q_cells.pattern if not c.q_cells.exceptions else c.q_cells
    return OpResult({'epsilon': c.epsilon, 'side': c.side, 'w0': c.w0, 'w1': c.w1, 'w2': c.w2,
                     'q_prime': c.q_prime, 'q_x': c.q_x, 'q_cells': cells, 'delta': c.delta, 'margin': c.margin,
                     'dominance': c.verdict.kind, 'abstain_margin': c.abstain_margin,
                     'rival': c.rival.describe()},
                    {'improvement': improvement, 'fair_loss': c.fair_loss}, improvement)


def _outcome_rows(report) -> List[dict]:
    return [{'rival': o.label, 'status': o.status, 'epsilon': o.epsilon,
             'witness': list(o.witness) if o.witness else None} for o in report.outcomes]


def op_rival_probe(ctx: RunContext, check: dict, path: str) -> OpResult:
    family = ctx.family(check, path)
    grid = ctx.grid(check, path)
    report = rival_dominance_probe(ctx.model.charge, family, grid.rivals(family), ctx.depth)
    return OpResult({'dominated': report.dominated, 'rivals': len(report.outcomes), 'skipped': report.skipped,
                     'dominating': [o.label for o in report.outcomes if o.status == 'dominates']})


def op_no_dominance_probe(ctx: RunContext, check: dict, path: str) -> OpResult:
    system = ctx.conditional_system(check, path)
    report = thm3_no_dominance_probe(system, ctx.grid(check, path), ctx.depth)
    return OpResult({'passed': report.passed, 'ltp_holds': report.ltp.holds,
                     'conditionals_consistent': report.conditionals_consistent,
                     'fair_losses_zero': all(v == 0 for _, v in report.fair_loss_previsions),
                     'fair_loss_previsions': dict(report.fair_loss_previsions),
                     'dominated': report.probe.dominated, 'rivals': len(report.probe.outcomes),
                     'skipped': report.probe.skipped})


def op_sum_propriety(ctx: RunContext, check: dict, path: str) -> OpResult:
    system = ctx.system(check, path)
    report = propriety_of_infinite_sum(ctx.model.charge, system, ctx.depth, ctx.grid(check, path), ctx.safety)
    return OpResult({'proper': report.proper, 'expected_original': report.expected_original,
                     'witness': report.witness, 'witness_expected': report.witness_expected,
                     'best': report.best, 'best_expected': report.best_expected,
                     'construction_included': report.construction_included,
                     'compared': report.compared, 'skipped': report.skipped})


def op_finite_d_analysis(ctx: RunContext, check: dict, path: str) -> OpResult:
    """Each rival with finite d = sum a_i q_i^2 does worse wherever a_i |q_i| < d / 2."""
    family = ctx.family(check, path)
    P = ctx.model.charge
    original = combined_score(P, family, ctx.depth)
    weights = []
    for i in range(1, ctx.depth + 1):
        entry = family.entry(i)
        weight = entry.rule.brier_weight() if entry.rule is not None else None
        if weight is None:
            raise SpecError(f"{path}.system", "finite-d analysis needs Brier-weighted entries")
        weights.append(weight * entry.coefficient)
    checked, infinite, failures = 0, 0, []
    for rival in ctx.grid(check, path).rivals(family):
        if rival.indexed.pattern != GeometricSequence():
            infinite += 1
            continue
        d = sum((a * rival.indexed.value(i) ** 2 for i, a in enumerate(weights, start=1)), Fraction(0))
        total = combined_score(P, family.with_forecasts(rival), ctx.depth)
        index = next(i for i, a in enumerate(weights, start=1) if a * abs(rival.indexed.value(i)) < d / 2)
        worse = [k for k in P.space.column_numbers() if total.value((k, index)) > original.value((k, index))]
        checked += 1
        if not worse:
            failures.append(rival.label)
    return OpResult({'holds': not failures, 'checked': checked, 'infinite_d': infinite, 'failures': failures})


def op_delta_threshold(ctx: RunContext, check: dict, path: str) -> OpResult:
    """For q_F != 1/2 the improvement is negative on one side of H_j once 2^-j < max{(q_F-1)^2, q_F^2} - 1/4."""
    system = ctx.conditional_system(check, path)
    space = system.X.space
    one = space.column_index(check.get('one_column'))
    zero = space.column_index(check.get('zero_column'))
    family = system.family()
    original = combined_score(system.P, family, ctx.depth)
    half = Fraction(1, 2)
    cases, failures = [], []
    for n, raw in enumerate(check.get('head_grid', [])):
        q_f = ctx.number(raw, f"{path}.head_grid[{n}]")
        if q_f == half:
            continue
        excess = max((q_f - 1) ** 2, q_f ** 2) - Fraction(1, 4)
        j = 1
        while Fraction(1, 2 ** j) >= excess:
            j += 1
        side = one if q_f < half else zero
        for m, cell_raw in enumerate(check.get('cell_grid', [])):
            q_j = ctx.number(cell_raw, f"{path}.cell_grid[{m}]")
            rival = family.with_forecasts(
                parse_rival({'head': [q_f], 'indexed': q_j}, path, ctx.model.params))
            improvement = original.value((side, j)) - combined_score(system.P, rival, ctx.depth).value((side, j))
            cases.append({'q_F': q_f, 'q_j': q_j, 'j': j, 'state': space.label((side, j)), 'improvement': improvement})
            if improvement >= 0:
                failures.append(f"q_F = {q_f}, q_j = {q_j}")
    return OpResult({'holds': not failures, 'cases': cases, 'failures': failures})


def op_log_score(ctx: RunContext, check: dict, path: str) -> OpResult:
    value = log_score_demo(ctx.number(check.get('c1'), f"{path}.c1"), ctx.number(check.get('c2'), f"{path}.c2"),
                           ctx.number(check.get('q'), f"{path}.q"))
    return OpResult({'value': value})


OPERATIONS: Dict[str, Callable[[RunContext, dict, str], OpResult]] = {
    'conglomerability': op_conglomerability,
    'ltp': op_ltp,
    'class_verdicts': op_class_verdicts,
    'fair_loss': op_fair_loss,
    'total_score': op_total_score,
    'dominance': op_dominance,
    'sum_conditions': op_sum_conditions,
    'uniform_spread': op_uniform_spread,
    'uniform_similarity': op_uniform_similarity,
    'propriety': op_propriety,
    'expected_score': op_expected_score,
    'coherence1': op_coherence1,
    'brier_rival': op_brier_rival,
    'rival_construction': op_rival_construction,
    'rival_probe': op_rival_probe,
    'no_dominance_probe': op_no_dominance_probe,
    'sum_propriety': op_sum_propriety,
    'finite_d_analysis': op_finite_d_analysis,
    'delta_threshold': op_delta_threshold,
    'log_score': op_log_score,
}


def _same(expected, actual, path: str, params) -> bool:
    if isinstance(actual, bool) or actual is None or isinstance(expected, bool) or expected is None:
        return expected == actual
    if isinstance(actual, str):
        return str(expected) == actual
    if isinstance(actual, GeometricSequence):
        return parse_sequence(expected, path, params) == actual
    if isinstance(actual, float):
        if math.isinf(actual):
            return str(expected) == ('inf' if actual > 0 else '-inf')
        return math.isclose(float(parse_rational(expected, path, params)), actual, rel_tol=1e-12)
    if isinstance(actual, (int, Fraction)):
        return parse_rational(expected, path, params) == actual
    return False


def _state_value(rv: StructuredRV, key: str, path: str):
    column, _, index = key.rpartition(':')
    if not column:
        raise SpecError(path, f"states are written 'column:index' or 'column:tail', got {key!r}")
    if index == 'tail':
        return rv.eventual(column)
    return rv.value((rv.space.column_index(column), int(index)))


def compare(expect: dict, result: OpResult, path: str, params) -> List[str]:
    mismatches = []
    for key, expected in expect.items():
        if key == 'at':
            if result.focus is None:
                raise SpecError(f"{path}.at", "this check has no per-state result")
            for state, value in expected.items():
                actual = _state_value(result.focus, state, f"{path}.at.{state}")
                if not _same(value, actual, f"{path}.at.{state}", params):
                    mismatches.append(f"at {state}: expected {value}, got {actual}")
            continue
        if key not in result.values:
            raise SpecError(f"{path}.{key}", f"the check does not produce {key!r}")
        actual = result.values[key]
        if not _same(expected, actual, f"{path}.{key}", params):
            shown = actual.describe() if isinstance(actual, GeometricSequence) else actual
            mismatches.append(f"{key}: expected {expected}, got {shown}")
    return mismatches


@dataclass
class CheckOutcome:
    id: str
    op: str
    passed: bool
    values: dict = field(default_factory=dict)
    mismatches: List[str] = field(default_factory=list)
    error: Optional[str] = None


@dataclass
class RunReport:
    name: str
    title: str
    params: Dict[str, Fraction]
    depth: int
    outcomes: List[CheckOutcome] = field(default_factory=list)
    quantities: Dict[str, StructuredRV] = field(default_factory=dict)
    space: object = None

    @property
    def passed(self) -> bool:
        return all(o.passed for o in self.outcomes)

    def body(self, mode: str = 'exact') -> dict:
        return {
            'scenario': self.name,
            'title': self.title,
            'parameters': render(self.params, mode),
            'depth': self.depth,
            'mode': mode,
            'verdict': 'PASS' if self.passed else 'FAIL',
            'checks': [{'id': o.id, 'op': o.op, 'verdict': 'PASS' if o.passed else 'FAIL',
                        'result': render(o.values, mode), 'mismatches': o.mismatches, 'error': o.error}
                       for o in self.outcomes],
        }


def run_check(ctx: RunContext, check: dict, path: str) -> Tuple[CheckOutcome, OpResult]:
    op = check['op']
    check_id = str(check.get('id', path))
    if op not in OPERATIONS:
        raise SpecError(f"{path}.op", f"unknown operation {op!r}; known: {', '.join(OPERATIONS)}")
    expected_error = check.get('expect_error')
    try:
        result = OPERATIONS[op](ctx, check, path)
    except SpecError:
        raise
    except ValueError as e:
        name = type(e).__name__
        if expected_error == name:
            logger.info(f"[OK] {check_id}: raised {name} as expected")
            return CheckOutcome(check_id, op, True, {'error': name, 'message': str(e)}), OpResult({})
        logger.error(f"[FAIL] {check_id}: {name}: {e}")
        return CheckOutcome(check_id, op, False, {}, [], f"{name}: {e}"), OpResult({})
    if expected_error:
        message = f"expected {expected_error}, but the check completed"
        logger.error(f"[FAIL] {check_id}: {message}")
        return CheckOutcome(check_id, op, False, result.values, [message]), result
    mismatches = compare(check.get('expect', {}), result, f"{path}.expect", ctx.model.params)
    if mismatches:
        logger.error(f"[FAIL] {check_id}: {'; '.join(mismatches)}")
    else:
        logger.info(f"[OK] {check_id}")
    return CheckOutcome(check_id, op, not mismatches, result.values, mismatches), result


def run_document(doc: dict, overrides: Dict[str, str] = None, depth: int = DEFAULT_DEPTH,
                 grid_step=DEFAULT_GRID, safety=DEFAULT_SAFETY) -> RunReport:
    if depth < 1:
        raise SpecError('--depth', f"depth must be at least 1, got {depth}")
    model = compile_document(doc, overrides)
    ctx = RunContext(model, depth, Fraction(grid_step), Fraction(safety))
    report = RunReport(model.name, model.title, model.params, depth, space=model.space)
    logger.info(f"[START] {model.name}: {len(model.checks)} checks at depth {depth}")
    for n, check in enumerate(model.checks):
        outcome, result = run_check(ctx, check, f"checks[{n}]")
        report.outcomes.append(outcome)
        for name, rv in result.quantities.items():
            report.quantities[f"{outcome.id}.{name}"] = rv
    logger.info(f"[DONE] {model.name}: {'PASS' if report.passed else 'FAIL'} "
                f"({sum(o.passed for o in report.outcomes)}/{len(report.outcomes)} checks)")
    return report


def run_scenario(scenario_id: str, overrides: Dict[str, str] = None, depth: int = DEFAULT_DEPTH,
                 grid_step=DEFAULT_GRID, safety=DEFAULT_SAFETY) -> RunReport:
    return run_document(scenario_document(scenario_id), overrides, depth, grid_step, safety)
