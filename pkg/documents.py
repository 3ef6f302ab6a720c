"""Scenario documents: JSON in, compiled model objects, JSON reports and per-state CSV tables out.

A document is a plain dict with the sections state_space, charge, measures, rules,
rule_families, events, variables, partitions, systems, parameters and checks. Numbers
are exact: "3/4", "0.125", JSON numbers (read as decimals, never floats) or arithmetic
over the document's parameters such as "1 - c". Index-dependent values are written
{"const": r, "terms": [[coefficient, ratio], ...]}.
"""
import csv
import json
import logging
import math
import os
import re
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from typing import Any, Dict, List, Optional

import sympy as sy
from sympy.parsing.sympy_parser import parse_expr, rationalize, standard_transformations

from aggregation import ConditionalSystem, EntryFamily, RivalForecasts
from charges import (Charge, ColumnValues, GeometricSequence, GeometricTail, Partition, StateSpace, StructuredEvent,
                     StructuredRV)
from coherence import ForecastEntry
from scoring import PiecewiseDensity, RuleFamily, RuleTemplate, ScoringRule, SqrtDensity

logger = logging.getLogger(__name__)

_PLAIN_NUMBER = re.compile(r'^\s*[+-]?\d+(\.\d+)?([eE][+-]?\d+)?(\s*/\s*\d+)?\s*$')
_EXPRESSION = re.compile(r'^[0-9A-Za-z_+\-*/(). ]+$')


class SpecError(ValueError):
    """A document problem, reported with the path of the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def load_document(path: str) -> dict:
    with open(path, 'r', encoding='utf-8') as f:
        try:
            return json.load(f, parse_float=Fraction)
        except json.JSONDecodeError as e:
            raise SpecError(f"{path}:{e.lineno}:{e.colno}", e.msg)


def parse_rational(value, path: str, params: Dict[str, Fraction] = None) -> Fraction:
    if isinstance(value, bool) or value is None:
        raise SpecError(path, f"expected a number, got {value!r}")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if not isinstance(value, str):
        raise SpecError(path, f"expected a number, got {type(value).__name__}")
    text = value.strip()
    if _PLAIN_NUMBER.match(text):
        try:
            return Fraction(text.replace(' ', ''))
        except ZeroDivisionError:
            raise SpecError(path, f"division by zero in {value!r}")
    if not _EXPRESSION.match(text):
        raise SpecError(path, f"cannot read {value!r} as an exact number")
    params = params or {}
    symbols = {name: sy.Rational(v.numerator, v.denominator) for name, v in params.items()}
    try:
        expr = parse_expr(text, local_dict=symbols, transformations=standard_transformations + (rationalize,))
    except Exception as e:
        raise SpecError(path, f"cannot parse {value!r}: {e}")
    if not expr.is_Rational:
        unknown = sorted(str(s) for s in expr.free_symbols)
        detail = f"unknown parameters {unknown}" if unknown else "the result is not rational"
        raise SpecError(path, f"{value!r} does not evaluate to an exact number ({detail})")
    return Fraction(int(expr.p), int(expr.q))


def parse_sequence(value, path: str, params: Dict[str, Fraction] = None) -> GeometricSequence:
    if isinstance(value, dict):
        unknown = set(value) - {'const', 'terms'}
        if unknown:
            raise SpecError(path, f"unknown keys {sorted(unknown)}")
        constant = parse_rational(value.get('const', 0), f"{path}.const", params)
        terms = []
        for n, term in enumerate(value.get('terms', [])):
            if not isinstance(term, list) or len(term) != 2:
                raise SpecError(f"{path}.terms[{n}]", "expected [coefficient, ratio]")
            coefficient = parse_rational(term[0], f"{path}.terms[{n}][0]", params)
            ratio = parse_rational(term[1], f"{path}.terms[{n}][1]", params)
            if ratio <= 0:
                raise SpecError(f"{path}.terms[{n}][1]", f"ratio must be positive, got {ratio}")
            terms.append((coefficient, ratio))
        return GeometricSequence(constant, tuple(terms))
    return GeometricSequence(parse_rational(value, path, params))


def sequence_document(seq: GeometricSequence) -> Any:
    if seq.is_constant:
        return render_number(seq.constant)
    return {'const': render_number(seq.constant),
            'terms': [[render_number(c), render_number(r)] for c, r in seq.terms]}


@dataclass
class Model:
    """Everything a document declares, compiled to domain objects."""
    name: str
    title: str
    params: Dict[str, Fraction]
    space: StateSpace
    charge: Charge
    measures: Dict[str, Any] = field(default_factory=dict)
    rules: Dict[str, ScoringRule] = field(default_factory=dict)
    families: Dict[str, RuleFamily] = field(default_factory=dict)
    events: Dict[str, StructuredEvent] = field(default_factory=dict)
    variables: Dict[str, StructuredRV] = field(default_factory=dict)
    partitions: Dict[str, Partition] = field(default_factory=dict)
    systems: Dict[str, Any] = field(default_factory=dict)
    checks: List[dict] = field(default_factory=list)

    def lookup(self, table: str, key, path: str):
        entries = getattr(self, table)
        if key not in entries:
            raise SpecError(path, f"unknown {table[:-1]} id {key!r}")
        return entries[key]

    def rule_collection(self, key, path: str) -> RuleFamily:
        """A rule family id, a single rule id or a list of rule ids."""
        if isinstance(key, list):
            return RuleFamily.of([self.lookup('rules', k, f"{path}[{n}]") for n, k in enumerate(key)])
        if key in self.families:
            return self.families[key]
        return RuleFamily.of(self.lookup('rules', key, path))

    def state(self, value, path: str):
        if not isinstance(value, list) or len(value) != 2:
            raise SpecError(path, f"a state is [column, index], got {value!r}")
        try:
            return self.space.check_state((self.space.column_index(value[0]), int(value[1])))
        except (ValueError, TypeError) as e:
            raise SpecError(path, str(e))


def _section(doc: dict, key: str, kind=list):
    value = doc.get(key, kind())
    if not isinstance(value, kind):
        raise SpecError(key, f"expected a {kind.__name__}")
    return value


def resolve_parameters(doc: dict, overrides: Dict[str, str] = None) -> Dict[str, Fraction]:
    declared = _section(doc, 'parameters', dict)
    overrides = overrides or {}
    unknown = set(overrides) - set(declared)
    if unknown:
        raise SpecError('parameters', f"unknown parameters {sorted(unknown)}; declared: {sorted(declared)}")
    params = {}
    for name, spec in declared.items():
        path = f"parameters.{name}"
        spec = spec if isinstance(spec, dict) else {'default': spec}
        raw = overrides.get(name, spec.get('default'))
        value = parse_rational(raw, path if name not in overrides else f"--param {name}")
        if 'min' in spec and value < parse_rational(spec['min'], f"{path}.min"):
            raise SpecError(path, f"{value} is below the minimum {spec['min']}")
        if 'below' in spec and value >= parse_rational(spec['below'], f"{path}.below"):
            raise SpecError(path, f"{value} must be below {spec['below']}")
        params[name] = value
    return params


def compile_document(doc: dict, overrides: Dict[str, str] = None) -> Model:
    if not isinstance(doc, dict):
        raise SpecError('$', "a document is a JSON object")
    params = resolve_parameters(doc, overrides)
    space = _compile_space(doc)
    charge = _compile_charge(doc, space, params)
    model = Model(str(doc.get('name', 'document')), str(doc.get('title', '')), params, space, charge)
    _compile_measures(doc, model)
    _compile_rules(doc, model)
    _compile_families(doc, model)
    _compile_events(doc, model)
    _compile_variables(doc, model)
    _compile_partitions(doc, model)
    _attach_conditionals(doc, model)
    _compile_systems(doc, model)
    model.checks = _section(doc, 'checks')
    for n, check in enumerate(model.checks):
        if not isinstance(check, dict) or 'op' not in check:
            raise SpecError(f"checks[{n}]", "each check needs an 'op'")
    logger.debug(f"Compiled document {model.name}: {len(model.checks)} checks")
    return model


def _compile_space(doc: dict) -> StateSpace:
    section = _section(doc, 'state_space', dict)
    columns = section.get('columns')
    if not isinstance(columns, list) or not columns:
        raise SpecError('state_space.columns', "expected a nonempty list of column names")
    try:
        return StateSpace(tuple(str(c) for c in columns))
    except ValueError as e:
        raise SpecError('state_space.columns', str(e))


def _charge_parts(section: dict, space: StateSpace, params, path: str):
    atoms = {}
    for n, atom in enumerate(section.get('atoms', [])):
        state = _plain_state(space, atom.get('state'), f"{path}.atoms[{n}].state")
        atoms[state] = parse_rational(atom.get('weight'), f"{path}.atoms[{n}].weight", params)
    tails = {}
    for n, tail in enumerate(section.get('geometric_tails', [])):
        where = f"{path}.geometric_tails[{n}]"
        k = _column(space, tail.get('column'), f"{where}.column")
        tails[k] = GeometricTail(k, int(tail.get('after', 0)),
                                 parse_rational(tail.get('coefficient'), f"{where}.coefficient", params),
                                 parse_rational(tail.get('ratio'), f"{where}.ratio", params))
    diffuse = {}
    for column, mass in section.get('diffuse', {}).items():
        diffuse[_column(space, column, f"{path}.diffuse")] = parse_rational(mass, f"{path}.diffuse.{column}", params)
    return atoms, tails, diffuse


def _compile_charge(doc: dict, space: StateSpace, params) -> Charge:
    section = _section(doc, 'charge', dict)
    atoms, tails, diffuse = _charge_parts(section, space, params, 'charge')
    try:
        return Charge(space, atoms, tails, diffuse, name=str(section.get('name', 'P')))
    except ValueError as e:
        raise SpecError('charge', str(e))


def _column(space: StateSpace, value, path: str) -> int:
    try:
        return space.column_index(value)
    except (ValueError, IndexError, KeyError) as e:
        raise SpecError(path, str(e))


def _plain_state(space: StateSpace, value, path: str):
    if not isinstance(value, list) or len(value) != 2:
        raise SpecError(path, f"a state is [column, index], got {value!r}")
    try:
        return space.check_state((_column(space, value[0], path), int(value[1])))
    except (ValueError, TypeError) as e:
        raise SpecError(path, str(e))


def _compile_measures(doc: dict, model: Model) -> None:
    for n, spec in enumerate(_section(doc, 'measures')):
        path = f"measures[{n}]"
        kind = spec.get('kind')
        try:
            if kind == 'piecewise':
                measure = PiecewiseDensity(
                    tuple(parse_rational(b, f"{path}.breakpoints", model.params) for b in spec.get('breakpoints', [])),
                    tuple(parse_rational(v, f"{path}.values", model.params) for v in spec.get('values', [])))
            elif kind == 'sqrt':
                measure = SqrtDensity(parse_rational(spec.get('scale', 1), f"{path}.scale", model.params))
            else:
                raise SpecError(f"{path}.kind", f"unknown measure kind {kind!r}")
        except SpecError:
            raise
        except ValueError as e:
            raise SpecError(path, str(e))
        model.measures[spec.get('id', f"measure{n}")] = measure


def _compile_rules(doc: dict, model: Model) -> None:
    for n, spec in enumerate(_section(doc, 'rules')):
        path = f"rules[{n}]"
        rule_id = spec.get('id')
        if not rule_id:
            raise SpecError(f"{path}.id", "every rule needs an id")
        if 'brier' in spec:
            rule = ScoringRule.brier(parse_rational(spec['brier'], f"{path}.brier", model.params), rule_id)
        else:
            measure = model.lookup('measures', spec.get('measure'), f"{path}.measure")
            rule = ScoringRule(rule_id, measure, str(spec.get('note', '')))
        model.rules[rule_id] = rule


def _compile_families(doc: dict, model: Model) -> None:
    for n, spec in enumerate(_section(doc, 'rule_families')):
        path = f"rule_families[{n}]"
        family_id = spec.get('id')
        if not family_id:
            raise SpecError(f"{path}.id", "every rule family needs an id")
        head = tuple(model.lookup('rules', r, f"{path}.head") for r in spec.get('head', []))
        prefix = tuple(model.lookup('rules', r, f"{path}.prefix") for r in spec.get('prefix', []))
        template = None
        if 'template' in spec:
            template = _compile_template(spec['template'], f"{path}.template", model.params, family_id)
        if not prefix and template is None and not head:
            raise SpecError(path, "a rule family needs head rules, prefix rules or a template")
        model.families[family_id] = RuleFamily(family_id, head, prefix, template)


def _compile_template(spec: dict, path: str, params, family_id: str) -> RuleTemplate:
    kind = spec.get('kind')
    prefix = str(spec.get('id_prefix', f"{family_id}_"))
    try:
        if kind == 'brier':
            return RuleTemplate.brier(parse_sequence(spec.get('weight', 1), f"{path}.weight", params), prefix)
        if kind == 'piecewise':
            return RuleTemplate('piecewise',
                                tuple(parse_sequence(b, f"{path}.breakpoints", params) for b in spec.get('breakpoints', [])),
                                tuple(parse_sequence(v, f"{path}.values", params) for v in spec.get('values', [])),
                                None, prefix)
        if kind == 'sqrt':
            return RuleTemplate('sqrt', (), (), parse_sequence(spec.get('scale'), f"{path}.scale", params), prefix)
    except ValueError as e:
        raise SpecError(path, str(e))
    raise SpecError(f"{path}.kind", f"unknown template kind {kind!r}")


def _compile_events(doc: dict, model: Model) -> None:
    space = model.space
    model.events['omega'] = StructuredEvent.omega(space)
    for n, spec in enumerate(_section(doc, 'events')):
        path = f"events[{n}]"
        event_id = spec.get('id')
        if not event_id:
            raise SpecError(f"{path}.id", "every event needs an id")
        if 'column' in spec:
            event = StructuredEvent.column(space, _column(space, spec['column'], f"{path}.column"))
        elif 'states' in spec:
            event = StructuredEvent.from_states(
                space, [model.state(s, f"{path}.states[{m}]") for m, s in enumerate(spec['states'])])
        elif 'cross_section' in spec:
            event = StructuredEvent.cross_section(space, int(spec['cross_section']))
        elif 'complement' in spec:
            event = ~model.lookup('events', spec['complement'], f"{path}.complement")
        elif 'union' in spec:
            event = StructuredEvent.empty(space)
            for m, other in enumerate(spec['union']):
                event = event | model.lookup('events', other, f"{path}.union[{m}]")
        elif 'intersection' in spec:
            event = StructuredEvent.omega(space)
            for m, other in enumerate(spec['intersection']):
                event = event & model.lookup('events', other, f"{path}.intersection[{m}]")
        else:
            raise SpecError(path, "an event needs one of column, states, cross_section, complement, union, intersection")
        model.events[event_id] = event


def _column_values(spec, path: str, params) -> ColumnValues:
    if not isinstance(spec, dict) or 'const' in spec or 'terms' in spec:
        return ColumnValues((), parse_sequence(spec, path, params))
    exceptions = tuple((int(j), parse_rational(v, f"{path}.exceptions.{j}", params))
                       for j, v in spec.get('exceptions', {}).items())
    return ColumnValues(exceptions, parse_sequence(spec.get('eventual', 0), f"{path}.eventual", params))


def _compile_variables(doc: dict, model: Model) -> None:
    for n, spec in enumerate(_section(doc, 'variables')):
        path = f"variables[{n}]"
        variable_id = spec.get('id')
        if not variable_id:
            raise SpecError(f"{path}.id", "every variable needs an id")
        if 'indicator' in spec:
            variable = model.lookup('events', spec['indicator'], f"{path}.indicator").indicator()
        else:
            columns = spec.get('columns', {})
            values = []
            for k, name in enumerate(model.space.columns, start=1):
                values.append(_column_values(columns.get(name, 0), f"{path}.columns.{name}", model.params))
            try:
                variable = StructuredRV(model.space, tuple(values))
            except ValueError as e:
                raise SpecError(path, str(e))
        model.variables[variable_id] = variable


def _compile_partitions(doc: dict, model: Model) -> None:
    for n, spec in enumerate(_section(doc, 'partitions')):
        path = f"partitions[{n}]"
        kind = spec.get('kind')
        try:
            if kind == 'cross_section':
                partition = Partition.cross_section(model.space)
            elif kind == 'columns':
                partition = Partition.by_columns(model.space)
            elif kind == 'explicit':
                cells = [model.lookup('events', c, f"{path}.cells[{m}]") for m, c in enumerate(spec.get('cells', []))]
                partition = Partition.explicit(model.space, cells, bool(spec.get('tail', False)))
            else:
                raise SpecError(f"{path}.kind", f"unknown partition kind {kind!r}")
        except SpecError:
            raise
        except ValueError as e:
            raise SpecError(path, str(e))
        model.partitions[spec.get('id', f"partition{n}")] = partition


def _attach_conditionals(doc: dict, model: Model) -> None:
    section = _section(doc, 'charge', dict)
    for n, spec in enumerate(section.get('conditionals', [])):
        path = f"charge.conditionals[{n}]"
        event = model.lookup('events', spec.get('event'), f"{path}.event")
        atoms, tails, diffuse = _charge_parts(spec, model.space, model.params, path)
        try:
            conditional = Charge(model.space, atoms, tails, diffuse, name=f"P(.|{spec.get('event')})")
            model.charge = model.charge.with_conditional(event, conditional)
        except ValueError as e:
            raise SpecError(path, str(e))


def _head_entry(spec: dict, path: str, model: Model) -> ForecastEntry:
    variable = model.lookup('variables', spec.get('variable'), f"{path}.variable")
    conditioning = model.lookup('events', spec.get('conditioning', 'omega'), f"{path}.conditioning")
    rule = model.lookup('rules', spec['rule'], f"{path}.rule") if 'rule' in spec else None
    try:
        return ForecastEntry(variable, conditioning, parse_rational(spec.get('forecast'), f"{path}.forecast", model.params),
                             rule, parse_rational(spec.get('alpha', 1), f"{path}.alpha", model.params),
                             str(spec.get('label', spec.get('variable'))))
    except ValueError as e:
        raise SpecError(path, str(e))


class IndexedEntries:
    """Entry i of an indexed family: variables, forecasts, rules and weights given as sequences in i."""

    def __init__(self, space: StateSpace, columns: Dict[int, tuple], conditioning: str, forecast: GeometricSequence,
                 rules: Optional[RuleFamily], alpha: GeometricSequence, label: str):
        self.space = space
        self.columns = columns
        self.conditioning = conditioning
        self.forecast = forecast
        self.rules = rules
        self.alpha = alpha
        self.label = label

    def variable(self, i: int) -> StructuredRV:
        values = []
        for k in self.space.column_numbers():
            eventual, at_index = self.columns.get(k, (GeometricSequence(), None))
            exceptions = ((i, at_index.at(i)),) if at_index is not None else ()
            values.append(ColumnValues(exceptions, eventual.at(i)))
        return StructuredRV(self.space, tuple(values))

    def __call__(self, i: int) -> ForecastEntry:
        if self.conditioning == 'cross_section':
            conditioning = StructuredEvent.cross_section(self.space, i)
        else:
            conditioning = StructuredEvent.omega(self.space)
        rule = self.rules.member(i) if self.rules is not None else None
        return ForecastEntry(self.variable(i), conditioning, self.forecast.at(i), rule, self.alpha.at(i),
                             f"{self.label}{i}")


def _compile_systems(doc: dict, model: Model) -> None:
    for n, spec in enumerate(_section(doc, 'systems')):
        path = f"systems[{n}]"
        system_id = spec.get('id')
        if not system_id:
            raise SpecError(f"{path}.id", "every system needs an id")
        ratios = tuple(parse_rational(r, f"{path}.ratios", model.params) for r in spec.get('ratios', ['1/2']))
        kind = spec.get('kind')
        if kind == 'conditional':
            variable = model.lookup('variables', spec.get('variable'), f"{path}.variable")
            partition = model.lookup('partitions', spec.get('partition'), f"{path}.partition")
            rule0 = model.lookup('rules', spec.get('rule0'), f"{path}.rule0")
            cells = model.rule_collection(spec.get('cell_rules'), f"{path}.cell_rules")
            try:
                system = ConditionalSystem(model.charge, variable, partition, rule0, cells, ratios, system_id)
            except ValueError as e:
                raise SpecError(path, str(e))
        elif kind == 'family':
            head = tuple(_head_entry(e, f"{path}.head[{m}]", model) for m, e in enumerate(spec.get('head', [])))
            make, forecasts, window = None, None, (0,)
            if 'indexed' in spec:
                make = _indexed_entries(spec['indexed'], f"{path}.indexed", model)
                forecasts = ColumnValues((), make.forecast)
                window = tuple(int(o) for o in spec['indexed'].get('window', [0]))
            system = EntryFamily(model.space, head, make, window, ratios, 1, system_id, forecasts)
        else:
            raise SpecError(f"{path}.kind", f"unknown system kind {kind!r}")
        model.systems[system_id] = system


def _indexed_entries(spec: dict, path: str, model: Model) -> IndexedEntries:
    columns = {}
    for name, values in spec.get('variable', {}).items():
        k = _column(model.space, name, f"{path}.variable")
        values = values if isinstance(values, dict) and ('eventual' in values or 'at_index' in values) \
            else {'eventual': values}
        eventual = parse_sequence(values.get('eventual', 0), f"{path}.variable.{name}.eventual", model.params)
        at_index = None
        if 'at_index' in values:
            at_index = parse_sequence(values['at_index'], f"{path}.variable.{name}.at_index", model.params)
        columns[k] = (eventual, at_index)
    conditioning = spec.get('conditioning', 'omega')
    if conditioning not in ('omega', 'cross_section'):
        raise SpecError(f"{path}.conditioning", "indexed entries condition on 'omega' or 'cross_section'")
    rules = model.rule_collection(spec['rule'], f"{path}.rule") if 'rule' in spec else None
    return IndexedEntries(model.space, columns, conditioning,
                          parse_sequence(spec.get('forecast', 0), f"{path}.forecast", model.params),
                          rules, parse_sequence(spec.get('alpha', 1), f"{path}.alpha", model.params),
                          str(spec.get('label', 'X')))


def parse_rival(spec: dict, path: str, params) -> RivalForecasts:
    head = tuple(parse_rational(q, f"{path}.head[{n}]", params) for n, q in enumerate(spec.get('head', [])))
    indexed = _column_values(spec['indexed'], f"{path}.indexed", params) if 'indexed' in spec else None
    return RivalForecasts(head, indexed, str(spec.get('label', 'rival')))


def parse_coefficients(spec: dict, path: str, params):
    head = [parse_rational(a, f"{path}.head[{n}]", params) for n, a in enumerate(spec.get('head', []))]
    indexed = _column_values(spec['indexed'], f"{path}.indexed", params) if 'indexed' in spec else None
    return head, indexed


def render_number(value, mode: str = 'exact'):
    """Exact numbers as "p/q" strings, or as decimals in float mode."""
    if value is None or isinstance(value, (bool, str)):
        return value
    if isinstance(value, float):
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value if mode == 'float' else repr(value)
    if isinstance(value, int):
        return value if mode == 'float' else str(value)
    if isinstance(value, Fraction):
        if mode == 'float':
            return float(value)
        return str(value)
    if isinstance(value, sy.Basic):
        return float(value) if mode == 'float' else str(value)
    return value


def render(value, mode: str = 'exact', space: StateSpace = None):
    if isinstance(value, dict):
        return {str(k): render(v, mode, space) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [render(v, mode, space) for v in value]
    if isinstance(value, GeometricSequence):
        return value.describe() if mode == 'exact' or not value.is_constant else float(value.constant)
    if isinstance(value, ColumnValues):
        return {'exceptions': {str(j): render_number(v, mode) for j, v in value.exceptions},
                'pattern': render(value.pattern, mode)}
    if isinstance(value, StructuredRV):
        return {name: render(value.columns[k], mode) for k, name in enumerate(value.space.columns)}
    return render_number(value, mode)


def report_body_text(body: dict) -> str:
    return json.dumps(body, indent=2, sort_keys=True)


def _atomic_write(path: str, write) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, temp_path = tempfile.mkstemp(prefix='.tmp-', dir=directory)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            write(f)
        os.replace(temp_path, path)
    except BaseException:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise


def write_report(path: str, body: dict) -> None:
    document = {'generated_at': datetime.now(timezone.utc).isoformat(), 'body': body}
    _atomic_write(path, lambda f: f.write(json.dumps(document, indent=2, sort_keys=True) + '\n'))
    logger.info(f"[DONE] Report written to {path}")


def write_document(path: str, doc: dict) -> None:
    _atomic_write(path, lambda f: f.write(json.dumps(doc, indent=2, sort_keys=True) + '\n'))
    logger.info(f"[DONE] Document written to {path}")


def state_table_rows(space: StateSpace, quantities: Dict[str, StructuredRV], depth: int,
                     mode: str = 'exact') -> List[dict]:
    """One row per state (k, j) with j <= depth, then a tail row per column with the eventual values."""
    rows = []
    for k, name in enumerate(space.columns, start=1):
        for j in range(1, depth + 1):
            row = {'column': name, 'index': j, 'state': space.label((k, j))}
            for key, rv in quantities.items():
                row[key] = render_number(rv.value((k, j)), mode)
            rows.append(row)
        tail = {'column': name, 'index': 'tail', 'state': f"{name}:tail"}
        for key, rv in quantities.items():
            tail[key] = render_number(rv.eventual(k), mode)
        rows.append(tail)
    return rows


def write_state_table(path: str, space: StateSpace, quantities: Dict[str, StructuredRV], depth: int,
                      mode: str = 'exact') -> None:
    rows = state_table_rows(space, quantities, depth, mode)
    fieldnames = ['column', 'index', 'state'] + list(quantities)

    def write(f):
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)

    _atomic_write(path, write)
    logger.info(f"[DONE] Per-state table with {len(rows)} rows written to {path}")
