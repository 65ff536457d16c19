"""The QHDL design tree: entities, architectures, instances.

Source positions are carried for diagnostics but excluded from equality,
so pretty-printing followed by re-parsing yields an equal tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import params


@dataclass(frozen=True)
class Loc:
    line: int = 0
    col: int = 0


_NOLOC = Loc()


def _locfield():
    return field(compare=False, repr=False, default=_NOLOC)


@dataclass(frozen=True)
class GenericDecl:
    name: str
    kind: str  # real | complex | int
    default: Optional[params.ParamExpr] = None
    loc: Loc = _locfield()


@dataclass(frozen=True)
class PortDecl:
    name: str
    direction: str  # in | out
    loc: Loc = _locfield()


@dataclass(frozen=True)
class InterfaceDecl:
    """Common shape of entity and component declarations."""

    name: str
    generics: tuple[GenericDecl, ...]
    ports: tuple[PortDecl, ...]
    loc: Loc = _locfield()

    @property
    def in_ports(self) -> tuple[PortDecl, ...]:
        return tuple(p for p in self.ports if p.direction == "in")

    @property
    def out_ports(self) -> tuple[PortDecl, ...]:
        return tuple(p for p in self.ports if p.direction == "out")

    @property
    def cdim(self) -> int:
        return len(self.in_ports)

    def find_port(self, name: str) -> Optional[PortDecl]:
        for p in self.ports:
            if p.name == name:
                return p
        return None

    def find_generic(self, name: str) -> Optional[GenericDecl]:
        for g in self.generics:
            if g.name == name:
                return g
        return None


@dataclass(frozen=True)
class EntityDecl(InterfaceDecl):
    pass


@dataclass(frozen=True)
class ComponentDecl(InterfaceDecl):
    pass


@dataclass(frozen=True)
class SignalDecl:
    name: str
    loc: Loc = _locfield()


@dataclass(frozen=True)
class GenericAssoc:
    generic: str
    expr: params.ParamExpr
    loc: Loc = _locfield()


@dataclass(frozen=True)
class PortAssoc:
    port: str
    target: str  # a signal name or an entity port name
    loc: Loc = _locfield()


@dataclass(frozen=True)
class InstanceAssign:
    name: str
    component: str
    generic_map: tuple[GenericAssoc, ...]
    port_map: tuple[PortAssoc, ...]
    loc: Loc = _locfield()


@dataclass(frozen=True)
class ArchitectureDecl:
    name: str
    entity: str
    components: tuple[ComponentDecl, ...]
    signals: tuple[SignalDecl, ...]
    instances: tuple[InstanceAssign, ...]
    loc: Loc = _locfield()

    def find_component(self, name: str) -> Optional[ComponentDecl]:
        for c in self.components:
            if c.name == name:
                return c
        return None


@dataclass(frozen=True)
class Design:
    entities: tuple[EntityDecl, ...]
    architectures: tuple[ArchitectureDecl, ...]
    source_name: str = field(compare=False, repr=False, default="<input>")

    def entity(self, name: str) -> Optional[EntityDecl]:
        for e in self.entities:
            if e.name == name:
                return e
        return None

    def architectures_of(self, entity_name: str) -> tuple[ArchitectureDecl, ...]:
        return tuple(a for a in self.architectures if a.entity == entity_name)


# -- pretty printer --------------------------------------------------------

def pretty(design: Design) -> str:
    """Canonical text form; re-parsing it reproduces the design tree."""
    pairs: dict[str, list[ArchitectureDecl]] = {}
    for arch in design.architectures:
        pairs.setdefault(arch.entity, []).append(arch)
    chunks = []
    for entity in design.entities:
        chunks.append(_pp_interface("entity", entity, f"end {entity.name};"))
        for arch in pairs.get(entity.name, []):
            chunks.append(_pp_architecture(arch))
    return "\n".join(chunks)


def _pp_generics(decl: InterfaceDecl, indent: str) -> list[str]:
    if not decl.generics:
        return []
    items = []
    for g in decl.generics:
        text = f"{g.name} : {g.kind}"
        if g.default is not None:
            text += f" := {params.render(g.default)}"
        items.append(text)
    return [f"{indent}generic ({'; '.join(items)});"]


def _pp_ports(decl: InterfaceDecl, indent: str) -> list[str]:
    items = [f"{p.name} : {p.direction} fieldmode" for p in decl.ports]
    return [f"{indent}port ({'; '.join(items)});"]


def _pp_interface(keyword: str, decl: InterfaceDecl, closing: str) -> str:
    lines = [f"{keyword} {decl.name} is"]
    lines += _pp_generics(decl, "  ")
    lines += _pp_ports(decl, "  ")
    lines.append(closing)
    return "\n".join(lines) + "\n"


def _pp_architecture(arch: ArchitectureDecl) -> str:
    lines = [f"architecture {arch.name} of {arch.entity} is"]
    for comp in arch.components:
        lines.append(f"  component {comp.name}")
        lines += _pp_generics(comp, "    ")
        lines += _pp_ports(comp, "    ")
        lines.append(f"  end component {comp.name};")
    for sig in arch.signals:
        lines.append(f"  signal {sig.name} : fieldmode;")
    lines.append("begin")
    for inst in arch.instances:
        lines.append(f"  {inst.name} : {inst.component}")
        if inst.generic_map:
            items = ", ".join(f"{a.generic} => {params.render(a.expr)}"
                              for a in inst.generic_map)
            lines.append(f"    generic map ({items})")
        items = ", ".join(f"{a.port} => {a.target}" for a in inst.port_map)
        lines.append(f"    port map ({items});")
    lines.append(f"end {arch.name};")
    return "\n".join(lines) + "\n"
