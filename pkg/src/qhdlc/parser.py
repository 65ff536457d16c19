"""Recursive-descent parser for QHDL.

Grammar (terminals uppercase):

  file          := { entity architecture }
  entity        := "entity" ID "is" [generics] ports "end" [ID] ";"
  generics      := "generic" "(" gen { ";" gen } ")" ";"
  gen           := ID {"," ID} ":" ("real"|"complex"|"int") [":=" expr]
  ports         := "port" "(" port { ";" port } ")" ";"
  port          := ID {"," ID} ":" ("in"|"out") "fieldmode"
  architecture  := "architecture" ID "of" ID "is" { componentdecl }
                   { signaldecl } "begin" { instance } "end" [ID] ";"
  componentdecl := "component" ID [generics] ports "end" "component" [ID] ";"
  signaldecl    := "signal" ID {"," ID} ":" "fieldmode" ";"
  instance      := ID ":" ID ["generic" "map" "(" assoc {"," assoc} ")"]
                   "port" "map" "(" assoc {"," assoc} ")" ";"
  assoc         := ID "=>" expr
  expr          := arithmetic over ID, numeric literals, parentheses,
                   and complex literals "(re, im)"

Declaration-level rules are enforced here as parse-time validation:
port and generic names unique per interface, all `in` ports before all
`out` ports, unique component/signal/instance names per architecture,
and every architecture naming an entity declared in the same file.
"""

from __future__ import annotations

from . import params
from .design import (
    ArchitectureDecl,
    ComponentDecl,
    Design,
    EntityDecl,
    GenericAssoc,
    GenericDecl,
    InstanceAssign,
    Loc,
    PortAssoc,
    PortDecl,
    SignalDecl,
)
from .errors import ParseError
from .lexer import Token, tokenize


def parse(source: str, filename: str = "<input>") -> Design:
    """Parse one QHDL source text into a design tree."""
    return Parser(tokenize(source, filename), filename).parse_file()


def parse_file(path: str) -> Design:
    with open(path, "r", encoding="utf-8") as handle:
        return parse(handle.read(), path)


class Parser:
    def __init__(self, tokens: list[Token], filename: str):
        self.tokens = tokens
        self.filename = filename
        self.pos = 0

    # -- token plumbing --

    def _cur(self) -> Token:
        return self.tokens[self.pos]

    def _at(self, *kinds: str) -> bool:
        return self._cur().kind in kinds

    def _eat(self, kind: str) -> Token:
        tok = self._cur()
        if tok.kind != kind:
            shown = tok.text or "end of file"
            raise self._error(f"expected '{kind}', found '{shown}'", tok)
        self.pos += 1
        return tok

    def _eat_if(self, kind: str) -> Token | None:
        if self._at(kind):
            return self._eat(kind)
        return None

    def _error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self._cur()
        return ParseError(message, self.filename, tok.line, tok.col)

    def _loc(self, tok: Token) -> Loc:
        return Loc(tok.line, tok.col)

    # -- file level --

    def parse_file(self) -> Design:
        entities: list[EntityDecl] = []
        architectures: list[ArchitectureDecl] = []
        while not self._at("EOF"):
            if self._at("entity"):
                entity = self._entity()
                if any(e.name == entity.name for e in entities):
                    raise self._error(f"duplicate entity '{entity.name}'")
                entities.append(entity)
            elif self._at("architecture"):
                architectures.append(self._architecture())
            else:
                raise self._error(
                    f"expected 'entity' or 'architecture', found '{self._cur().text}'")
        for arch in architectures:
            if not any(e.name == arch.entity for e in entities):
                raise ParseError(
                    f"architecture '{arch.name}' references undeclared entity "
                    f"'{arch.entity}'", self.filename, arch.loc.line, arch.loc.col)
        return Design(tuple(entities), tuple(architectures), self.filename)

    # -- declarations --

    def _entity(self) -> EntityDecl:
        start = self._eat("entity")
        name = self._eat("ID").text
        self._eat("is")
        generics = self._generic_clause()
        ports = self._port_clause()
        self._eat("end")
        closer = self._eat_if("ID")
        if closer and closer.text != name:
            raise self._error(
                f"'end {closer.text}' does not close entity '{name}'", closer)
        self._eat(";")
        decl = EntityDecl(name, generics, ports, self._loc(start))
        self._check_interface(decl, "entity")
        return decl

    def _component(self) -> ComponentDecl:
        start = self._eat("component")
        name = self._eat("ID").text
        generics = self._generic_clause()
        ports = self._port_clause()
        self._eat("end")
        self._eat("component")
        closer = self._eat_if("ID")
        if closer and closer.text != name:
            raise self._error(
                f"'end component {closer.text}' does not close '{name}'", closer)
        self._eat(";")
        decl = ComponentDecl(name, generics, ports, self._loc(start))
        self._check_interface(decl, "component")
        return decl

    def _check_interface(self, decl, what: str):
        seen: set[str] = set()
        for g in decl.generics:
            if g.name in seen:
                raise ParseError(f"duplicate generic '{g.name}' in {what} "
                                 f"'{decl.name}'", self.filename,
                                 g.loc.line, g.loc.col)
            seen.add(g.name)
        seen = set()
        passed_out = False
        for p in decl.ports:
            if p.name in seen:
                raise ParseError(f"duplicate port '{p.name}' in {what} "
                                 f"'{decl.name}'", self.filename,
                                 p.loc.line, p.loc.col)
            seen.add(p.name)
            if p.direction == "out":
                passed_out = True
            elif passed_out:
                raise ParseError(
                    f"input port '{p.name}' declared after an output port; "
                    "all input ports must precede all output ports",
                    self.filename, p.loc.line, p.loc.col)

    def _generic_clause(self) -> tuple[GenericDecl, ...]:
        if not self._at("generic"):
            return ()
        self._eat("generic")
        self._eat("(")
        decls: list[GenericDecl] = []
        while True:
            names = [self._eat("ID")]
            while self._eat_if(","):
                names.append(self._eat("ID"))
            self._eat(":")
            kind_tok = self._cur()
            if kind_tok.kind not in ("real", "complex", "int"):
                raise self._error("expected a generic kind: real, complex or int")
            self.pos += 1
            default = None
            if self._eat_if(":="):
                default = self._expression()
            decls.extend(GenericDecl(tok.text, kind_tok.kind, default,
                                     self._loc(tok)) for tok in names)
            if not self._eat_if(";"):
                break
        self._eat(")")
        self._eat(";")
        return tuple(decls)

    def _port_clause(self) -> tuple[PortDecl, ...]:
        self._eat("port")
        self._eat("(")
        decls: list[PortDecl] = []
        while True:
            names = [self._eat("ID")]
            while self._eat_if(","):
                names.append(self._eat("ID"))
            self._eat(":")
            dir_tok = self._cur()
            if dir_tok.kind not in ("in", "out"):
                raise self._error("expected a port direction: in or out")
            self.pos += 1
            self._eat("fieldmode")
            decls.extend(PortDecl(tok.text, dir_tok.kind, self._loc(tok))
                         for tok in names)
            if not self._eat_if(";"):
                break
        self._eat(")")
        self._eat(";")
        return tuple(decls)

    def _architecture(self) -> ArchitectureDecl:
        start = self._eat("architecture")
        name = self._eat("ID").text
        self._eat("of")
        entity = self._eat("ID").text
        self._eat("is")
        components: list[ComponentDecl] = []
        while self._at("component"):
            comp = self._component()
            if any(c.name == comp.name for c in components):
                raise ParseError(f"duplicate component declaration '{comp.name}'",
                                 self.filename, comp.loc.line, comp.loc.col)
            components.append(comp)
        signals: list[SignalDecl] = []
        while self._at("signal"):
            self._eat("signal")
            names = [self._eat("ID")]
            while self._eat_if(","):
                names.append(self._eat("ID"))
            self._eat(":")
            self._eat("fieldmode")
            self._eat(";")
            for tok in names:
                if any(s.name == tok.text for s in signals):
                    raise ParseError(f"duplicate signal '{tok.text}'",
                                     self.filename, tok.line, tok.col)
                signals.append(SignalDecl(tok.text, self._loc(tok)))
        self._eat("begin")
        instances: list[InstanceAssign] = []
        while not self._at("end"):
            inst = self._instance()
            if any(i.name == inst.name for i in instances):
                raise ParseError(f"duplicate instance name '{inst.name}'",
                                 self.filename, inst.loc.line, inst.loc.col)
            instances.append(inst)
        self._eat("end")
        closer = self._eat_if("ID")
        if closer and closer.text != name:
            raise self._error(
                f"'end {closer.text}' does not close architecture '{name}'", closer)
        self._eat(";")
        return ArchitectureDecl(name, entity, tuple(components), tuple(signals),
                                tuple(instances), self._loc(start))

    def _instance(self) -> InstanceAssign:
        name_tok = self._eat("ID")
        self._eat(":")
        component = self._eat("ID").text
        generic_map: tuple[GenericAssoc, ...] = ()
        if self._at("generic"):
            self._eat("generic")
            self._eat("map")
            generic_map = tuple(self._assoc_list(self._generic_assoc))
        self._eat("port")
        self._eat("map")
        port_map = tuple(self._assoc_list(self._port_assoc))
        self._eat(";")
        return InstanceAssign(name_tok.text, component, generic_map, port_map,
                              self._loc(name_tok))

    def _assoc_list(self, one):
        self._eat("(")
        items = [one()]
        while self._eat_if(","):
            items.append(one())
        self._eat(")")
        return items

    def _generic_assoc(self) -> GenericAssoc:
        name_tok = self._eat("ID")
        self._eat("=>")
        return GenericAssoc(name_tok.text, self._expression(), self._loc(name_tok))

    def _port_assoc(self) -> PortAssoc:
        name_tok = self._eat("ID")
        self._eat("=>")
        target_tok = self._cur()
        target = self._expression()
        if not isinstance(target, params.Ref):
            raise self._error("port map target must be a signal or port name",
                              target_tok)
        return PortAssoc(name_tok.text, target.name, self._loc(name_tok))

    # -- expressions --

    def _expression(self) -> params.ParamExpr:
        node = self._term()
        while self._at("+", "-"):
            op = self._cur().kind
            self.pos += 1
            node = params.BinOp(op, node, self._term())
        return node

    def _term(self) -> params.ParamExpr:
        node = self._factor()
        while self._at("*", "/"):
            op = self._cur().kind
            self.pos += 1
            node = params.BinOp(op, node, self._factor())
        return node

    def _factor(self) -> params.ParamExpr:
        if self._eat_if("-"):
            return params.Neg(self._factor())
        return self._atom()

    def _atom(self) -> params.ParamExpr:
        tok = self._cur()
        if tok.kind == "NUM":
            self.pos += 1
            integral = "." not in tok.text and "e" not in tok.text.lower()
            return params.Num(float(tok.text), integral)
        if tok.kind == "ID":
            self.pos += 1
            return params.Ref(tok.text)
        if tok.kind == "(":
            self.pos += 1
            first = self._expression()
            if self._eat_if(","):
                second = self._expression()
                self._eat(")")
                return params.Cplx(first, second)
            self._eat(")")
            return first
        raise self._error(f"expected an expression, found '{tok.text}'")
