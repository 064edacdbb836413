"""
Reader and writer for the sectioned LP file format.

The writer emits ``Maximize``/``Minimize``, ``Subject To``, ``Bounds``,
``Binary`` and ``End`` sections. Quadratic objective terms use the bracketed
``[ 2q x ^ 2 ] / 2`` form. The reader accepts what the writer produces plus
the common keyword aliases, comments and default bounds.
"""

import math
import re
from typing import Dict, List, Optional, Tuple

from .model import INF, Model, ObjectiveSense, Sense, VarType
from ..errors import ModelError

TERMS_PER_LINE = 6

_SECTION_ALIASES = {
    'maximize': 'max', 'maximise': 'max', 'maximum': 'max', 'max': 'max',
    'minimize': 'min', 'minimise': 'min', 'minimum': 'min', 'min': 'min',
    'subject to': 'st', 'such that': 'st', 'st': 'st', 's.t.': 'st', 'st.': 'st',
    'bounds': 'bounds', 'bound': 'bounds',
    'binary': 'binary', 'binaries': 'binary', 'bin': 'binary',
    'general': 'general', 'generals': 'general', 'gen': 'general',
    'end': 'end',
}

_TOKEN = re.compile(r"""
    (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<op><=|>=|=<|=>|==|<|>|=)
  | (?P<punct>[+\-\[\]\^/:*])
  | (?P<name>[A-Za-z_!"\#$%&(),.;?@`'{}|~][A-Za-z0-9_!"\#$%&(),.;?@`'{}|~]*)
""", re.VERBOSE)


def _fmt(value: float) -> str:
    if value == INF:
        return '+inf'
    if value == -INF:
        return '-inf'
    text = format(value, '.17g')
    return text


def _linear_terms(coeffs: Dict[int, float], model: Model) -> List[str]:
    terms = []
    for var_id in sorted(coeffs):
        value = coeffs[var_id]
        sign = '-' if value < 0 else '+'
        terms.append(f"{sign} {_fmt(abs(value))} {model.variables[var_id].name}")
    return terms


def _wrap(prefix: str, terms: List[str], suffix: str = '') -> List[str]:
    if not terms:
        terms = ['0']
    lines = []
    for start in range(0, len(terms), TERMS_PER_LINE):
        chunk = ' '.join(terms[start:start + TERMS_PER_LINE])
        lines.append((prefix if start == 0 else ' ' * len(prefix)) + chunk)
    if suffix:
        lines[-1] += ' ' + suffix
    return lines


def export_lp_format(model: Model) -> str:
    """
    Render ``model`` as LP-format text.

    :param model: Model to export
    :return: LP file contents
    """
    out = [f"\\ Problem name: {model.name}", '']
    out.append('Maximize' if model.sense is ObjectiveSense.MAXIMIZE else 'Minimize')

    terms = _linear_terms(model.objective, model)
    if model.objective_constant:
        sign = '-' if model.objective_constant < 0 else '+'
        terms.append(f"{sign} {_fmt(abs(model.objective_constant))}")
    if model.quadratic:
        quad = []
        for var_id in sorted(model.quadratic):
            value = 2.0 * model.quadratic[var_id]
            sign = '-' if value < 0 else '+'
            quad.append(f"{sign} {_fmt(abs(value))} {model.variables[var_id].name} ^ 2")
        terms.append('+ [ ' + ' '.join(quad) + ' ] / 2')
    out.extend(_wrap(' obj: ', terms))

    out.append('Subject To')
    for con in model.constraints:
        sense = {Sense.LE: '<=', Sense.GE: '>=', Sense.EQ: '='}[con.sense]
        out.extend(_wrap(f" {con.name}: ", _linear_terms(con.coeffs, model), f"{sense} {_fmt(con.rhs)}"))

    out.append('Bounds')
    for var in model.variables:
        if var.kind is VarType.BINARY and var.lo == 0.0 and var.hi == 1.0:
            continue
        if var.lo == -INF and var.hi == INF:
            out.append(f" {var.name} free")
        elif var.hi == INF:
            out.append(f" {var.name} >= {_fmt(var.lo)}")
        else:
            out.append(f" {_fmt(var.lo)} <= {var.name} <= {_fmt(var.hi)}")

    binaries = [var.name for var in model.variables if var.kind is VarType.BINARY]
    if binaries:
        out.append('Binary')
        for start in range(0, len(binaries), 8):
            out.append(' ' + ' '.join(binaries[start:start + 8]))
    out.append('End')
    return '\n'.join(out) + '\n'


def _tokenize(text: str) -> List[Tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        match = _TOKEN.match(text, pos)
        if not match:
            raise ModelError(f"Unexpected character in LP text: {text[pos]!r}")
        kind = match.lastgroup
        value = match.group(kind)
        if kind == 'name' and value.lower() in ('inf', 'infinity'):
            kind = 'num'
            value = 'inf'
        tokens.append((kind, value))
        pos = match.end()
    return tokens


def _split_sections(text: str) -> List[Tuple[str, str]]:
    sections: List[Tuple[str, str]] = []
    current: Optional[str] = None
    body: List[str] = []
    for raw in text.splitlines():
        line = raw.split('\\', 1)[0].strip()
        if not line:
            continue
        key = _SECTION_ALIASES.get(re.sub(r'\s+', ' ', line.lower()))
        if key is None:
            # "Maximize obj: ..." on one line
            head = line.split(None, 1)
            alias = _SECTION_ALIASES.get(head[0].lower()) if head else None
            if alias in ('max', 'min') and len(head) > 1:
                if current is not None:
                    sections.append((current, ' '.join(body)))
                current, body = alias, [head[1]]
                continue
            if current is None:
                raise ModelError(f"LP text outside of any section: {line!r}")
            body.append(line)
            continue
        if current is not None:
            sections.append((current, ' '.join(body)))
        if key == 'end':
            current, body = None, []
            break
        current, body = key, []
    if current is not None:
        sections.append((current, ' '.join(body)))
    return sections


class _Reader:
    def __init__(self):
        self.model = Model()
        self.bounds: Dict[str, List[float]] = {}
        self.binaries: List[str] = []

    def var(self, name: str) -> int:
        if not self.model.has_variable(name):
            return self.model.add_variable(name, 0.0, INF)
        return self.model.variable_id(name)

    @staticmethod
    def _number(tokens, i) -> Tuple[float, int]:
        kind, value = tokens[i]
        if kind != 'num':
            raise ModelError(f"Expected a number, found {value!r}")
        return (math.inf if value == 'inf' else float(value)), i + 1

    def expression(self, tokens, i, stop_ops=True):
        """Parse a linear (optionally bracketed quadratic) expression starting at ``i``."""
        linear: Dict[int, float] = {}
        quadratic: Dict[int, float] = {}
        constant = 0.0
        sign = 1.0
        while i < len(tokens):
            kind, value = tokens[i]
            if kind == 'op' and stop_ops:
                break
            if kind == 'name' and i + 1 < len(tokens) and tokens[i + 1] == ('punct', ':'):
                break
            if value == '+':
                i += 1
                continue
            if value == '-':
                sign = -sign
                i += 1
                continue
            if value == '[':
                i, quad = self._bracket(tokens, i + 1)
                for var_id, coef in quad.items():
                    quadratic[var_id] = quadratic.get(var_id, 0.0) + sign * coef
                sign = 1.0
                continue
            coef = 1.0
            if kind == 'num':
                coef, i = self._number(tokens, i)
                if i < len(tokens) and tokens[i][1] == '*':
                    i += 1
                if i >= len(tokens) or tokens[i][0] != 'name' or (
                        i + 1 < len(tokens) and tokens[i + 1] == ('punct', ':')):
                    constant += sign * coef
                    sign = 1.0
                    continue
            kind, value = tokens[i]
            if kind != 'name':
                raise ModelError(f"Unexpected token {value!r} in expression")
            var_id = self.var(value)
            linear[var_id] = linear.get(var_id, 0.0) + sign * coef
            sign = 1.0
            i += 1
        return i, linear, quadratic, constant

    def _bracket(self, tokens, i):
        quad: Dict[int, float] = {}
        sign = 1.0
        while tokens[i][1] != ']':
            kind, value = tokens[i]
            if value in '+-':
                sign = -sign if value == '-' else sign
                i += 1
                continue
            coef = 1.0
            if kind == 'num':
                coef, i = self._number(tokens, i)
            name = tokens[i][1]
            i += 1
            if tokens[i][1] != '^' or tokens[i + 1][1] != '2':
                raise ModelError("Only squared terms are supported inside brackets")
            i += 2
            var_id = self.var(name)
            quad[var_id] = quad.get(var_id, 0.0) + sign * coef
            sign = 1.0
        i += 1
        divisor = 1.0
        if i < len(tokens) and tokens[i][1] == '/':
            divisor, i = self._number(tokens, i + 1)
        return i, {k: v / divisor for k, v in quad.items()}

    def objective(self, body: str, sense: ObjectiveSense):
        tokens = _tokenize(body)
        i = 0
        if len(tokens) >= 2 and tokens[0][0] == 'name' and tokens[1] == ('punct', ':'):
            i = 2
        _, linear, quadratic, constant = self.expression(tokens, i, stop_ops=False)
        self._objective = (linear, sense, constant, quadratic)

    def constraints(self, body: str):
        tokens = _tokenize(body)
        i = 0
        while i < len(tokens):
            name = None
            if tokens[i][0] == 'name' and i + 1 < len(tokens) and tokens[i + 1] == ('punct', ':'):
                name = tokens[i][1]
                i += 2
            i, linear, _, constant = self.expression(tokens, i)
            if i >= len(tokens) or tokens[i][0] != 'op':
                raise ModelError(f"Constraint {name or ''} has no sense")
            sense = Sense.parse(tokens[i][1])
            i += 1
            negative = False
            if tokens[i][1] in '+-':
                negative = tokens[i][1] == '-'
                i += 1
            rhs, i = self._number(tokens, i)
            rhs = -rhs if negative else rhs
            self.model.add_constraint(linear, sense, rhs - constant, name)

    def bound_lines(self, body_lines: List[str]):
        for line in body_lines:
            values = _tokenize(line)
            lowered = [v.lower() for _, v in values]
            if len(values) == 2 and lowered[1] == 'free':
                self.bounds[values[0][1]] = [-INF, INF]
                continue
            parsed = self._bound_chain(values)
            for name, lo, hi in parsed:
                current = self.bounds.setdefault(name, [0.0, INF])
                if lo is not None:
                    current[0] = lo
                if hi is not None:
                    current[1] = hi

    def _bound_chain(self, tokens):
        # forms: "lo <= x <= hi", "x >= lo", "x <= hi", "x = v", "lo <= x"
        items = []
        i = 0
        while i < len(tokens):
            kind, value = tokens[i]
            if value in ('+', '-'):
                number, i = self._number(tokens, i + 1)
                items.append(('num', -number if value == '-' else number))
            elif kind == 'num':
                number, i = self._number(tokens, i)
                items.append(('num', number))
            else:
                items.append((kind, value))
                i += 1
        if len(items) == 5:
            lo, op1, name, op2, hi = items
            return [(name[1], lo[1], hi[1])]
        if len(items) == 3:
            left, op, right = items
            sense = Sense.parse(op[1])
            if left[0] == 'name':
                name, number = left[1], right[1]
                if sense is Sense.EQ:
                    return [(name, number, number)]
                return [(name, number, None)] if sense is Sense.GE else [(name, None, number)]
            name, number = right[1], left[1]
            if sense is Sense.EQ:
                return [(name, number, number)]
            return [(name, number, None)] if sense is Sense.LE else [(name, None, number)]
        raise ModelError(f"Cannot parse bound line: {' '.join(str(v) for _, v in items)}")

    def finish(self) -> Model:
        for name in self.binaries:
            var_id = self.var(name)
            var = self.model.variables[var_id]
            var.kind = VarType.BINARY
            lo, hi = self.bounds.get(name, [0.0, 1.0])
            var.lo, var.hi = max(lo, 0.0), min(hi, 1.0)
        for name, (lo, hi) in self.bounds.items():
            if name in self.binaries:
                continue
            var = self.model.variables[self.var(name)]
            var.lo, var.hi = lo, hi
        if hasattr(self, '_objective'):
            linear, sense, constant, quadratic = self._objective
            self.model.set_objective(linear, sense, constant, quadratic)
        return self.model


def parse_lp_format(text: str, name: str = 'model') -> Model:
    """
    Parse LP-format text into a :class:`Model`.

    :param text: LP file contents
    :param name: Model name when the text carries none
    :return: Parsed model; variables appear in order of first mention
    """
    reader = _Reader()
    match = re.search(r'\\\s*Problem name:\s*(\S+)', text)
    reader.model.name = match.group(1) if match else name

    for key, body in _split_sections(text):
        if key in ('max', 'min'):
            sense = ObjectiveSense.MAXIMIZE if key == 'max' else ObjectiveSense.MINIMIZE
            reader.objective(body, sense)
        elif key == 'st':
            reader.constraints(body)
        elif key == 'binary':
            reader.binaries.extend(tok for _, tok in _tokenize(body))
        elif key == 'general':
            raise ModelError("General integer variables are not supported")

    bound_lines = _section_lines(text, 'bounds')
    reader.bound_lines(bound_lines)
    return reader.finish()


def _section_lines(text: str, wanted: str) -> List[str]:
    lines: List[str] = []
    active = False
    for raw in text.splitlines():
        line = raw.split('\\', 1)[0].strip()
        if not line:
            continue
        key = _SECTION_ALIASES.get(re.sub(r'\s+', ' ', line.lower()))
        if key is not None:
            active = key == wanted
            continue
        if active:
            lines.append(line)
    return lines
