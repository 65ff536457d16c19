"""Netlist validation: design tree -> checked connectivity graph.

A signal connects exactly two endpoints of opposite polarity: one driver
(an instance output) and one sink (an instance input).  Entity ports
bind either directly to instance ports through port maps, or — for
wire-through channels constructed programmatically — in entity-in to
entity-out pairs carried as passthroughs.  Validation stops at the first
violated rule and reports it with a source position.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import params
from .design import (
    ArchitectureDecl,
    ComponentDecl,
    Design,
    EntityDecl,
    InstanceAssign,
    Loc,
)
from .errors import ValidationError

# connection targets of an instance port
ENTITY = "entity"
SIGNAL = "signal"

Connection = tuple[str, str]  # (ENTITY | SIGNAL, name)


@dataclass(frozen=True)
class Instance:
    name: str
    component: ComponentDecl
    generic_map: tuple[tuple[str, params.ParamExpr], ...]
    connections: tuple[tuple[str, Connection], ...]  # per port, declaration order

    def connection(self, port: str) -> Connection:
        for name, conn in self.connections:
            if name == port:
                return conn
        raise KeyError(port)


@dataclass(frozen=True)
class NetlistGraph:
    entity: EntityDecl
    arch_name: str
    instances: tuple[Instance, ...]
    signals: tuple[str, ...]  # internal instance-to-instance signals
    signal_driver: tuple[tuple[str, tuple[str, str]], ...]  # signal -> (inst, port)
    signal_sink: tuple[tuple[str, tuple[str, str]], ...]
    passthroughs: tuple[tuple[str, str], ...] = ()  # (entity in, entity out) pairs

    def driver_of(self, signal: str) -> tuple[str, str]:
        return dict(self.signal_driver)[signal]

    def sink_of(self, signal: str) -> tuple[str, str]:
        return dict(self.signal_sink)[signal]


def _err(message: str, filename: str, loc: Loc) -> ValidationError:
    return ValidationError(message, filename, loc.line, loc.col)


def validate(design: Design, entity_name: str,
             arch_name: Optional[str] = None) -> NetlistGraph:
    """Check one architecture and return its connectivity graph.

    With `arch_name` omitted, the most recently declared architecture of
    the entity is used.
    """
    filename = design.source_name
    entity = design.entity(entity_name)
    if entity is None:
        raise ValidationError(f"unknown entity '{entity_name}'", filename)
    archs = design.architectures_of(entity_name)
    if not archs:
        raise ValidationError(f"entity '{entity_name}' has no architecture",
                              filename)
    if arch_name is None:
        arch = archs[-1]
    else:
        matches = [a for a in archs if a.name == arch_name]
        if not matches:
            raise ValidationError(
                f"entity '{entity_name}' has no architecture '{arch_name}'",
                filename)
        arch = matches[-1]

    if len(entity.in_ports) != len(entity.out_ports):
        raise _err(f"entity '{entity.name}' has {len(entity.in_ports)} input but "
                   f"{len(entity.out_ports)} output ports", filename, entity.loc)
    for comp in arch.components:
        if len(comp.in_ports) != len(comp.out_ports):
            raise _err(f"component '{comp.name}' has {len(comp.in_ports)} input "
                       f"but {len(comp.out_ports)} output ports", filename, comp.loc)

    signal_names = {s.name for s in arch.signals}
    entity_generics = {g.name: g.kind for g in entity.generics}

    instances = []
    # per-signal endpoint lists: (inst, port, direction, loc)
    endpoints: dict[str, list[tuple[str, str, str, Loc]]] = {
        s.name: [] for s in arch.signals}
    entity_bound: dict[str, tuple[str, str, Loc]] = {}

    for inst in arch.instances:
        comp = arch.find_component(inst.component)
        if comp is None:
            raise _err(f"unknown component '{inst.component}'", filename, inst.loc)
        _check_generic_map(inst, comp, entity_generics, filename)
        connections = _check_port_map(inst, comp, entity, signal_names,
                                      endpoints, entity_bound, filename)
        instances.append(Instance(
            inst.name, comp,
            tuple((a.generic, a.expr) for a in inst.generic_map),
            connections))

    signal_driver: dict[str, tuple[str, str]] = {}
    signal_sink: dict[str, tuple[str, str]] = {}
    for sig in arch.signals:
        ends = endpoints[sig.name]
        drivers = [e for e in ends if e[2] == "out"]
        sinks = [e for e in ends if e[2] == "in"]
        if len(drivers) > 1:
            raise _err(f"signal '{sig.name}' has two drivers", filename,
                       drivers[1][3])
        if len(sinks) > 1:
            raise _err(f"signal '{sig.name}' has two sinks", filename, sinks[1][3])
        if not ends:
            raise _err(f"unused signal '{sig.name}'", filename, sig.loc)
        if len(ends) == 1:
            raise _err(f"dangling signal '{sig.name}': only one endpoint",
                       filename, ends[0][3])
        signal_driver[sig.name] = (drivers[0][0], drivers[0][1])
        signal_sink[sig.name] = (sinks[0][0], sinks[0][1])

    for port in entity.ports:
        if port.name not in entity_bound:
            raise _err(f"entity port '{port.name}' is not connected",
                       filename, port.loc)

    return NetlistGraph(
        entity=entity,
        arch_name=arch.name,
        instances=tuple(instances),
        signals=tuple(s.name for s in arch.signals),
        signal_driver=tuple(sorted(signal_driver.items())),
        signal_sink=tuple(sorted(signal_sink.items())),
    )


def _check_generic_map(inst: InstanceAssign, comp: ComponentDecl,
                       entity_generics: dict[str, str], filename: str):
    seen: set[str] = set()
    for assoc in inst.generic_map:
        generic = comp.find_generic(assoc.generic)
        if generic is None:
            raise _err(f"component '{comp.name}' has no generic "
                       f"'{assoc.generic}'", filename, assoc.loc)
        if assoc.generic in seen:
            raise _err(f"generic '{assoc.generic}' mapped twice", filename,
                       assoc.loc)
        seen.add(assoc.generic)
        try:
            kind = params.infer_kind(assoc.expr, entity_generics)
        except params.ParamError as exc:
            raise _err(f"in generic map of '{inst.name}': {exc}", filename,
                       assoc.loc) from None
        if params.KIND_ORDER[kind] > params.KIND_ORDER[generic.kind]:
            raise _err(
                f"generic '{assoc.generic}' of '{comp.name}' is {generic.kind} "
                f"but the expression is {kind}", filename, assoc.loc)


def _check_port_map(inst: InstanceAssign, comp: ComponentDecl, entity: EntityDecl,
                    signal_names: set[str],
                    endpoints: dict[str, list],
                    entity_bound: dict[str, tuple[str, str, Loc]],
                    filename: str) -> tuple[tuple[str, Connection], ...]:
    mapped: dict[str, Connection] = {}
    for assoc in inst.port_map:
        port = comp.find_port(assoc.port)
        if port is None:
            raise _err(f"component '{comp.name}' has no port '{assoc.port}'",
                       filename, assoc.loc)
        if assoc.port in mapped:
            raise _err(f"port '{assoc.port}' mapped twice", filename, assoc.loc)
        if assoc.target in signal_names:
            mapped[assoc.port] = (SIGNAL, assoc.target)
            endpoints[assoc.target].append(
                (inst.name, assoc.port, port.direction, assoc.loc))
            continue
        entity_port = entity.find_port(assoc.target)
        if entity_port is None:
            raise _err(f"unknown signal or entity port '{assoc.target}'",
                       filename, assoc.loc)
        if entity_port.direction != port.direction:
            raise _err(
                f"polarity violation: instance {port.direction}-port "
                f"'{inst.name}:{assoc.port}' wired to entity "
                f"{entity_port.direction}-port '{assoc.target}'",
                filename, assoc.loc)
        if assoc.target in entity_bound:
            other = entity_bound[assoc.target]
            raise _err(
                f"entity port '{assoc.target}' bound twice (also at "
                f"'{other[0]}:{other[1]}')", filename, assoc.loc)
        entity_bound[assoc.target] = (inst.name, assoc.port, assoc.loc)
        mapped[assoc.port] = (ENTITY, assoc.target)
    for port in comp.ports:
        if port.name not in mapped:
            raise _err(f"unmapped port '{port.name}' of component "
                       f"'{comp.name}'", filename, inst.loc)
    return tuple((p.name, mapped[p.name]) for p in comp.ports)
