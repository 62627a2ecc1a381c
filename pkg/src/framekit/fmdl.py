"""The textual knowledge language: lexer, recursive-descent parser, validator
and canonical pretty-printer.

Source files combine static frame declarations with production rules:

    frame Thing {
      slot size: integer;
      slot big: boolean;
      big := true if size > 10;
      big := false;
      ask size: "Enter size";
    }

Rules become slot actions in declaration order, which the first-applicable
conflict resolution relies on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

from .errors import FramekitError
from .model import (
    ACT_ASK,
    ACT_BACKWARD,
    ACT_FORWARD,
    Action,
    Binary,
    Call,
    Exists,
    Expr,
    FRAME_FRAMESET,
    FRAME_REMOTE,
    FrameDef,
    Lit,
    ListExpr,
    PARENT_SLOT,
    Rule,
    SlotRef,
    Specialize,
    Unary,
    WorldBuild,
    iter_slot_refs,
)
from .values import Kind, Value, make_value

KEYWORDS = {
    "frame", "slot", "default", "constraint", "ask", "rules", "from", "remote",
    "at", "frameset", "table", "key", "extern", "function", "on", "if", "in",
    "exists", "where", "specialize", "unknown", "integer", "boolean", "string",
    "reference", "list", "of", "and", "or", "not", "true", "false",
}
# `parent` stays an ordinary identifier: it is both the reserved slot name and
# the optional clause word in frameset declarations.

_SYMBOLS = (":=", "<=", ">=", "<>", "{", "}", "(", ")", "[", "]", ":", ";", ",",
            ".", "+", "-", "*", "/", "=", "<", ">")


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    column: int
    length: int = 1

    def __str__(self):
        return f"{self.file}:{self.line}:{self.column}"


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    span: SourceSpan
    code: str
    message: str

    def __str__(self):
        return f"{self.span}: {self.severity}[{self.code}]: {self.message}"


class FmdlError(FramekitError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "keyword" | "int" | "string" | symbol text | "eof"
    text: str
    span: SourceSpan
    value: object = None


def _diag(severity, span, code, message) -> Diagnostic:
    return Diagnostic(severity, span, code, message)


def tokenize(text: str, file: str = "<fmdl>") -> List[Token]:
    """Lex source text into tokens with spans. `//` and `/* */` comments are
    skipped; string literals support \\" and \\\\ escapes."""
    tokens: List[Token] = []
    i = 0
    line = 1
    col = 1
    n = len(text)

    def span(length=1, at_line=None, at_col=None):
        return SourceSpan(file, at_line or line, at_col or col, length)

    def fail(code, message, sp):
        raise FmdlError([_diag("error", sp, code, message)])

    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
                col += 1
            continue
        if text.startswith("/*", i):
            start = span(2)
            i += 2
            col += 2
            while i < n and not text.startswith("*/", i):
                if text[i] == "\n":
                    line += 1
                    col = 1
                else:
                    col += 1
                i += 1
            if i >= n:
                fail("unterminated-comment", "block comment never closes", start)
            i += 2
            col += 2
            continue
        if c == '"':
            start_line, start_col = line, col
            i += 1
            col += 1
            buf = []
            while True:
                if i >= n or text[i] == "\n":
                    fail("unterminated-string", "string literal never closes",
                         span(1, start_line, start_col))
                ch = text[i]
                if ch == "\\":
                    if i + 1 >= n:
                        fail("unterminated-string", "string literal never closes",
                             span(1, start_line, start_col))
                    esc = text[i + 1]
                    if esc == '"':
                        buf.append('"')
                    elif esc == "\\":
                        buf.append("\\")
                    else:
                        fail("illegal-escape", f"unsupported escape \\{esc}",
                             span(2, line, col))
                    i += 2
                    col += 2
                    continue
                if ch == '"':
                    i += 1
                    col += 1
                    break
                buf.append(ch)
                i += 1
                col += 1
            value = "".join(buf)
            tokens.append(Token("string", value, span(col - start_col, start_line, start_col), value))
            continue
        if c.isdigit():
            start_col = col
            j = i
            while j < n and text[j].isdigit():
                j += 1
            lexeme = text[i:j]
            tokens.append(Token("int", lexeme, span(j - i, line, start_col), int(lexeme)))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            start_col = col
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            lexeme = text[i:j]
            kind = "keyword" if lexeme in KEYWORDS else "ident"
            tokens.append(Token(kind, lexeme, span(j - i, line, start_col)))
            col += j - i
            i = j
            continue
        for sym in _SYMBOLS:
            if text.startswith(sym, i):
                tokens.append(Token(sym, sym, span(len(sym))))
                i += len(sym)
                col += len(sym)
                break
        else:
            fail("illegal-character", f"illegal character {c!r}", span())
    tokens.append(Token("eof", "", SourceSpan(file, line, col, 0)))
    return tokens


class _SyntaxError(Exception):
    def __init__(self, diagnostic: Diagnostic):
        self.diagnostic = diagnostic


class _Parser:
    def __init__(self, tokens: List[Token]):
        self.tokens = tokens
        self.pos = 0
        self.diagnostics: List[Diagnostic] = []

    # -- token plumbing ------------------------------------------------------

    @property
    def cur(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.cur
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        tok = self.cur
        return tok.kind == kind and (text is None or tok.text == text)

    def at_keyword(self, *words: str) -> bool:
        return self.cur.kind == "keyword" and self.cur.text in words

    def error(self, expected: str) -> _SyntaxError:
        tok = self.cur
        got = tok.text or "end of input"
        return _SyntaxError(_diag("error", tok.span, "syntax",
                                  f"expected {expected}, got {got!r}"))

    def expect(self, kind: str, text: Optional[str] = None, expected: Optional[str] = None) -> Token:
        if self.at(kind, text):
            return self.advance()
        raise self.error(expected or (text or kind))

    def expect_keyword(self, word: str) -> Token:
        if self.at_keyword(word):
            return self.advance()
        raise self.error(f"keyword `{word}`")

    def ident(self, expected="identifier") -> Token:
        if self.cur.kind == "ident":
            return self.advance()
        raise self.error(expected)

    def sync_member(self):
        """Recover to the next member boundary (`;` or `}`)."""
        while not self.at("eof"):
            if self.at(";"):
                self.advance()
                return
            if self.at("}"):
                return
            self.advance()

    def sync_item(self):
        while not self.at("eof"):
            if self.at_keyword("frame", "remote", "frameset", "extern"):
                return
            if self.at("}"):
                self.advance()
                return
            self.advance()

    # -- grammar -------------------------------------------------------------

    def parse_world(self, file: str) -> WorldBuild:
        world = WorldBuild()
        while not self.at("eof"):
            try:
                self.parse_item(world)
            except _SyntaxError as e:
                self.diagnostics.append(e.diagnostic)
                self.sync_item()
        return world

    def parse_item(self, world: WorldBuild):
        if self.at_keyword("frame"):
            self.parse_frame(world)
        elif self.at_keyword("remote"):
            self.parse_remote(world)
        elif self.at_keyword("frameset"):
            self.parse_frameset(world)
        elif self.at_keyword("extern"):
            self.parse_extern(world)
        else:
            raise self.error("`frame`, `remote`, `frameset` or `extern`")

    def _register(self, world: WorldBuild, frame: FrameDef, span: SourceSpan):
        if frame.name in world.frames:
            self.diagnostics.append(_diag("error", span, "duplicate-frame",
                                          f"frame {frame.name!r} declared twice"))
        else:
            world.add_frame(frame)

    def parse_frame(self, world: WorldBuild):
        self.expect_keyword("frame")
        name_tok = self.ident("frame name")
        parent = None
        if self.at(":"):
            self.advance()
            parent = self.ident("parent frame name").text
        frame = FrameDef(name_tok.text, parent=parent)
        self.expect("{")
        while not self.at("}") and not self.at("eof"):
            try:
                self.parse_member(frame)
            except _SyntaxError as e:
                self.diagnostics.append(e.diagnostic)
                self.sync_member()
        self.expect("}")
        self._register(world, frame, name_tok.span)

    def parse_remote(self, world: WorldBuild):
        self.expect_keyword("remote")
        self.expect_keyword("frame")
        name_tok = self.ident("frame name")
        self.expect_keyword("at")
        url = self.expect("string", expected="url string")
        self.expect(";")
        self._register(world, FrameDef(name_tok.text, kind=FRAME_REMOTE, url=url.value),
                       name_tok.span)

    def parse_frameset(self, world: WorldBuild):
        self.expect_keyword("frameset")
        name_tok = self.ident("frameset name")
        self.expect_keyword("from")
        self.expect_keyword("table")
        table = self.expect("string", expected="table location string")
        self.expect_keyword("key")
        key = self.ident("key column name")
        parent = None
        if self.at("ident", "parent"):
            self.advance()
            parent = self.ident("parent frame name").text
        self.expect(";")
        self._register(world, FrameDef(name_tok.text, parent=parent, kind=FRAME_FRAMESET,
                                       table=table.value, key=key.text), name_tok.span)

    def parse_extern(self, world: WorldBuild):
        self.expect_keyword("extern")
        self.expect_keyword("function")
        name = self.ident("function name")
        self.expect("/")
        arity = self.expect("int", expected="arity")
        self.expect(";")
        world.declare_extern(name.text, arity.value)

    def parse_member(self, frame: FrameDef):
        if self.at_keyword("slot"):
            self.parse_slot(frame)
        elif self.at_keyword("constraint"):
            self.parse_constraint(frame)
        elif self.at_keyword("ask"):
            self.parse_ask(frame)
        elif self.at_keyword("on"):
            self.parse_forward_rule(frame)
        elif self.at_keyword("rules"):
            self.advance()
            self.expect_keyword("from")
            url = self.expect("string", expected="url string")
            self.expect(";")
            frame.rules_from = url.value
        elif self.cur.kind == "ident":
            self.parse_backward_rule(frame)
        else:
            raise self.error("a slot, rule, constraint, ask or rules-from member")

    def parse_type(self) -> Tuple[Kind, Optional[Kind]]:
        if self.at_keyword("integer"):
            self.advance()
            return Kind.INTEGER, None
        if self.at_keyword("boolean"):
            self.advance()
            return Kind.BOOLEAN, None
        if self.at_keyword("string"):
            self.advance()
            return Kind.STRING, None
        if self.at_keyword("reference"):
            self.advance()
            return Kind.REFERENCE, None
        if self.at_keyword("list"):
            self.advance()
            self.expect_keyword("of")
            if self.at_keyword("integer", "boolean", "string"):
                elem = Kind(self.advance().text)
                return Kind.LIST, elem
            raise self.error("a scalar element type")
        raise self.error("a type")

    def parse_literal(self) -> Value:
        tok = self.cur
        if tok.kind == "int":
            self.advance()
            return make_value(Kind.INTEGER, tok.value)
        if tok.kind == "-":
            self.advance()
            num = self.expect("int", expected="integer literal")
            return make_value(Kind.INTEGER, -num.value)
        if tok.kind == "string":
            self.advance()
            return make_value(Kind.STRING, tok.value)
        if self.at_keyword("true"):
            self.advance()
            return make_value(Kind.BOOLEAN, True)
        if self.at_keyword("false"):
            self.advance()
            return make_value(Kind.BOOLEAN, False)
        if tok.kind == "ident":
            self.advance()
            return make_value(Kind.REFERENCE, tok.text)
        if tok.kind == "[":
            self.advance()
            items = []
            if not self.at("]"):
                items.append(self.parse_literal())
                while self.at(","):
                    self.advance()
                    items.append(self.parse_literal())
            self.expect("]")
            elem = items[0].kind if items else Kind.STRING
            try:
                return make_value(Kind.LIST, items, elem)
            except FramekitError as e:
                raise _SyntaxError(_diag("error", tok.span, "bad-literal", str(e))) from None
        raise self.error("a literal")

    def parse_slot(self, frame: FrameDef):
        self.expect_keyword("slot")
        name = self.ident("slot name")
        self.expect(":")
        kind, elem = self.parse_type()
        default = None
        if self.at_keyword("default"):
            self.advance()
            default = self.parse_literal()
        self.expect(";")
        existing = frame.slots.get(name.text)
        if existing is not None and existing.declared:
            self.diagnostics.append(_diag("error", name.span, "duplicate-slot",
                                          f"slot {name.text!r} declared twice in frame {frame.name!r}"))
            return
        if (default is not None and kind is Kind.LIST and default.kind is Kind.LIST
                and not default.payload):
            default = make_value(Kind.LIST, [], elem)  # empty default adopts the slot's element kind
        entry = frame.ensure_slot(name.text)
        entry.type = kind
        entry.elem = elem
        entry.default = default
        entry.declared = True

    def parse_constraint(self, frame: FrameDef):
        kw = self.expect_keyword("constraint")
        expr = self.parse_expr()
        self.expect(";")
        mentioned = []
        for ref in iter_slot_refs(expr):
            if ref.frame is None and ref.name not in mentioned:
                mentioned.append(ref.name)
        if not mentioned:
            self.diagnostics.append(_diag("warning", kw.span, "constraint-no-slots",
                                          "constraint mentions no slots and is dropped"))
            return
        for slot_name in mentioned:
            entry = frame.ensure_slot(slot_name)
            entry.constraints = entry.constraints + (expr,)

    def parse_ask(self, frame: FrameDef):
        self.expect_keyword("ask")
        name = self.ident("slot name")
        self.expect(":")
        prompt = self.expect("string", expected="prompt string")
        self.expect(";")
        entry = frame.ensure_slot(name.text)
        entry.prompt = prompt.value
        frame.slots[name.text] = entry.with_action(Action.ask())

    def parse_backward_rule(self, frame: FrameDef):
        target = self.ident("slot name")
        self.expect(":=")
        value = self.parse_expr()
        condition = None
        if self.at_keyword("if"):
            self.advance()
            condition = self.parse_expr()
        self.expect(";")
        rule = Rule(target.text, ((target.text, value),), condition, "backward")
        entry = frame.ensure_slot(target.text)
        frame.slots[target.text] = entry.with_action(Action.backward(rule))

    def parse_forward_rule(self, frame: FrameDef):
        self.expect_keyword("on")
        trigger = self.ident("slot name")
        condition = None
        if self.at_keyword("if"):
            self.advance()
            condition = self.parse_expr()
        self.expect("{")
        assignments = []
        while not self.at("}"):
            name = self.ident("slot name")
            self.expect(":=")
            value = self.parse_expr()
            self.expect(";")
            assignments.append((name.text, value))
        self.expect("}")
        if not assignments:
            raise self.error("at least one assignment in the on-block")
        rule = Rule(trigger.text, tuple(assignments), condition, "forward")
        entry = frame.ensure_slot(trigger.text)
        frame.slots[trigger.text] = entry.with_action(Action.forward(rule))

    # -- expressions ----------------------------------------------------------

    def parse_expr(self) -> Expr:
        return self.parse_or()

    def parse_or(self) -> Expr:
        left = self.parse_and()
        while self.at_keyword("or"):
            self.advance()
            left = Binary("or", left, self.parse_and())
        return left

    def parse_and(self) -> Expr:
        left = self.parse_not()
        while self.at_keyword("and"):
            self.advance()
            left = Binary("and", left, self.parse_not())
        return left

    def parse_not(self) -> Expr:
        if self.at_keyword("not"):
            self.advance()
            return Unary("not", self.parse_not())
        return self.parse_comparison()

    def parse_comparison(self) -> Expr:
        left = self.parse_additive()
        for op in ("=", "<>", "<=", ">=", "<", ">"):
            if self.at(op):
                self.advance()
                return Binary(op, left, self.parse_additive())
        if self.at_keyword("in"):
            self.advance()
            return Binary("in", left, self.parse_additive())
        return left

    def parse_additive(self) -> Expr:
        left = self.parse_multiplicative()
        while self.at("+") or self.at("-"):
            op = self.advance().text
            left = Binary(op, left, self.parse_multiplicative())
        return left

    def parse_multiplicative(self) -> Expr:
        left = self.parse_unary()
        while self.at("*") or self.at("/"):
            op = self.advance().text
            left = Binary(op, left, self.parse_unary())
        return left

    def parse_unary(self) -> Expr:
        if self.at("-"):
            self.advance()
            return Unary("neg", self.parse_unary())
        return self.parse_primary()

    def parse_primary(self) -> Expr:
        tok = self.cur
        if tok.kind == "int":
            self.advance()
            return Lit(make_value(Kind.INTEGER, tok.value))
        if tok.kind == "string":
            self.advance()
            return Lit(make_value(Kind.STRING, tok.value))
        if self.at_keyword("true"):
            self.advance()
            return Lit(make_value(Kind.BOOLEAN, True))
        if self.at_keyword("false"):
            self.advance()
            return Lit(make_value(Kind.BOOLEAN, False))
        if self.at_keyword("unknown"):
            self.advance()
            return Lit(Value(Kind.UNKNOWN))
        if self.at("("):
            self.advance()
            inner = self.parse_expr()
            self.expect(")")
            return inner
        if self.at("["):
            self.advance()
            items = []
            if not self.at("]"):
                items.append(self.parse_expr())
                while self.at(","):
                    self.advance()
                    items.append(self.parse_expr())
            self.expect("]")
            return ListExpr(tuple(items))
        if self.at_keyword("exists"):
            self.advance()
            var = self.ident("variable name")
            self.expect_keyword("in")
            root = self.ident("subtree root frame")
            self.expect_keyword("where")
            condition = self.parse_expr()
            return Exists(var.text, root.text, condition)
        if self.at_keyword("specialize"):
            self.advance()
            self.expect("(")
            root = self.ident("subtree root frame")
            self.expect(")")
            return Specialize(root.text)
        if tok.kind == "ident":
            self.advance()
            if self.at("."):
                self.advance()
                slot = self.ident("slot name")
                return SlotRef(slot.text, frame=tok.text)
            if self.at("("):
                self.advance()
                args = []
                if not self.at(")"):
                    args.append(self.parse_expr())
                    while self.at(","):
                        self.advance()
                        args.append(self.parse_expr())
                self.expect(")")
                return Call(tok.text, tuple(args))
            return SlotRef(tok.text)
        raise self.error("an expression")


def try_parse(text: str, file: str = "<fmdl>"):
    """Parse with recovery. Returns (world build or None, diagnostics)."""
    try:
        tokens = tokenize(text, file)
    except FmdlError as e:
        return None, e.diagnostics
    parser = _Parser(tokens)
    world = parser.parse_world(file)
    errors = [d for d in parser.diagnostics if d.severity == "error"]
    return (None if errors else world), parser.diagnostics


def parse(text: str, file: str = "<fmdl>") -> WorldBuild:
    """Parse source into a world build, raising FmdlError on any error."""
    world, diagnostics = try_parse(text, file)
    if world is None:
        raise FmdlError([d for d in diagnostics if d.severity == "error"])
    return world


def parse_expression(text: str) -> Expr:
    """Parse a single expression (used by tests and the remote-rule tooling)."""
    parser = _Parser(tokenize(text, "<expr>"))
    try:
        expr = parser.parse_expr()
    except _SyntaxError as e:
        raise FmdlError([e.diagnostic]) from None
    if not parser.at("eof"):
        raise FmdlError([_diag("error", parser.cur.span, "syntax", "trailing input after expression")])
    return expr


def validate(world: WorldBuild, file: str = "<fmdl>") -> List[Diagnostic]:
    """Post-parse checks: unknown parents and default mismatches are errors;
    slot references that resolve nowhere along the static chain are warnings
    (inheritance is dynamic, the slot may appear at run time)."""
    diagnostics: List[Diagnostic] = []
    origin = SourceSpan(file, 1, 1, 0)

    def chain(name):
        seen = set()
        while name is not None and name in world.frames and name not in seen:
            seen.add(name)
            yield world.frames[name]
            name = world.frames[name].parent

    def slot_known(frame_name, slot_name):
        if slot_name == PARENT_SLOT:
            return True
        return any(fd.slot(slot_name) is not None for fd in chain(frame_name))

    for frame in world.frames.values():
        if frame.parent is not None and frame.parent not in world.frames:
            diagnostics.append(_diag("error", origin, "unknown-parent",
                                     f"frame {frame.name!r} names unknown parent {frame.parent!r}"))
        for slot in frame.slots.values():
            if slot.default is not None and slot.type is not None:
                from .values import kind_matches

                if not kind_matches(slot.default, slot.type, slot.elem):
                    diagnostics.append(_diag("error", origin, "default-type",
                                             f"default of {frame.name}.{slot.name} does not match its type"))
            exprs = list(slot.constraints)
            for action in (*slot.on_need, *slot.on_change):
                if action.rule is not None:
                    if action.rule.condition is not None:
                        exprs.append(action.rule.condition)
                    exprs.extend(e for _, e in action.rule.assignments)
            for expr in exprs:
                for ref in iter_slot_refs(expr):
                    if ref.frame is not None:
                        if ref.frame in world.frames and not slot_known(ref.frame, ref.name):
                            diagnostics.append(_diag(
                                "warning", origin, "unknown-slot-ref",
                                f"{frame.name}: {ref.frame}.{ref.name} is declared nowhere in the static chain"))
                    elif not slot_known(frame.name, ref.name):
                        diagnostics.append(_diag(
                            "warning", origin, "unknown-slot-ref",
                            f"{frame.name}: slot {ref.name!r} is declared nowhere in the static chain"))
    return diagnostics


# ---------------------------------------------------------------------------
# Pretty printer (canonical formatting: 2-space indent, one member per line)
# ---------------------------------------------------------------------------

_PREC = {"or": 1, "and": 2, "=": 4, "<>": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
         "in": 4, "+": 5, "-": 5, "*": 6, "/": 6}


def format_expr(expr: Expr) -> str:
    def fmt(node: Expr, parent_prec: int, right_side: bool) -> str:
        if isinstance(node, Lit):
            return str(node.value)
        if isinstance(node, SlotRef):
            return f"{node.frame}.{node.name}" if node.frame else node.name
        if isinstance(node, ListExpr):
            return "[" + ", ".join(fmt(i, 0, False) for i in node.items) + "]"
        if isinstance(node, Call):
            return node.name + "(" + ", ".join(fmt(a, 0, False) for a in node.args) + ")"
        if isinstance(node, Exists):
            body = f"exists {node.var} in {node.root} where {fmt(node.condition, 0, False)}"
            return f"({body})" if parent_prec > 0 else body
        if isinstance(node, Specialize):
            return f"specialize({node.root})"
        if isinstance(node, Unary):
            if node.op == "not":
                body = "not " + fmt(node.operand, 3, True)
                return f"({body})" if parent_prec > 3 else body
            return "-" + fmt(node.operand, 7, True)
        if isinstance(node, Binary):
            prec = _PREC[node.op]
            text = (fmt(node.left, prec, False) + f" {node.op} " + fmt(node.right, prec, True))
            needs = parent_prec > prec or (parent_prec == prec and right_side) or \
                (prec == 4 and parent_prec == 4)
            return f"({text})" if needs else text
        raise TypeError(f"cannot format {type(node).__name__}")

    return fmt(expr, 0, False)


def _format_type(kind: Kind, elem: Optional[Kind]) -> str:
    if kind is Kind.LIST:
        return f"list of {elem.value}"
    return kind.value


def _format_rule_member(rule: Rule, indent: str) -> str:
    if rule.direction == "backward":
        slot, value = rule.assignments[0]
        text = f"{indent}{slot} := {format_expr(value)}"
        if rule.condition is not None:
            text += f" if {format_expr(rule.condition)}"
        return text + ";"
    head = f"{indent}on {rule.target}"
    if rule.condition is not None:
        head += f" if {format_expr(rule.condition)}"
    lines = [head + " {"]
    for slot, value in rule.assignments:
        lines.append(f"{indent}  {slot} := {format_expr(value)};")
    lines.append(indent + "}")
    return "\n".join(lines)


def format_world(world) -> str:
    """Emit canonical source for a world build or frozen world.

    Members print in a canonical order: slot declarations, constraints, then
    per-slot actions in their declared firing order. Reparsing the output
    yields a structurally equal world.
    """
    frames = world.frames
    order = list(world.order)
    lines: List[str] = []
    for name, arity in world.externs.items():
        lines.append(f"extern function {name}/{arity};")
    for frame_name in order:
        frame = frames[frame_name]
        if frame.kind == FRAME_REMOTE:
            lines.append(f'remote frame {frame.name} at "{frame.url}";')
            continue
        if frame.kind == FRAME_FRAMESET:
            decl = f'frameset {frame.name} from table "{frame.table}" key {frame.key}'
            if frame.parent:
                decl += f" parent {frame.parent}"
            lines.append(decl + ";")
            continue
        head = f"frame {frame.name}"
        if frame.parent:
            head += f" : {frame.parent}"
        lines.append(head + " {")
        for slot in frame.slots.values():
            if not slot.declared:
                continue
            decl = f"  slot {slot.name}: {_format_type(slot.type, slot.elem)}"
            if slot.default is not None:
                default = slot.default
                rendered = default.payload if default.kind is Kind.REFERENCE else str(default)
                decl += f" default {rendered}"
            lines.append(decl + ";")
        for c in frame.own_constraints():
            lines.append(f"  constraint {format_expr(c)};")
        for slot in frame.slots.values():
            for action in slot.on_need:
                if action.kind == ACT_BACKWARD:
                    lines.append(_format_rule_member(action.rule, "  "))
                elif action.kind == ACT_ASK:
                    lines.append(f'  ask {slot.name}: "{_escape(slot.prompt or "")}";')
                else:
                    raise ValueError(f"action kind {action.kind} is not expressible in source")
        for slot in frame.slots.values():
            for action in slot.on_change:
                if action.kind != ACT_FORWARD:
                    raise ValueError(f"action kind {action.kind} is not expressible in source")
                lines.append(_format_rule_member(action.rule, "  "))
        if frame.rules_from:
            lines.append(f'  rules from "{frame.rules_from}";')
        lines.append("}")
    return "\n".join(lines) + "\n"


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')
