"""Compilation: resolve component references and evaluate to a triplet.

Component names resolve first against the entities of the file being
compiled, then against any further files given on the command line, and
finally against the built-in primitive library (beamsplitter, phase,
displace, kerr_cavity).  Referenced entities are compiled recursively;
cavity modes of nested instances get dot-separated path labels, e.g. the
Kerr mode of instance `k` inside instance `n1` is mode `n1.k`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

from . import params
from .circuit import CircuitExpression, simplify
from .design import ComponentDecl, Design, EntityDecl, GenericDecl, PortDecl
from .errors import UserError
from .netlist import NetlistGraph, validate
from .slh import (
    SLHTriplet,
    beamsplitter,
    displace,
    evaluate,
    identity_system,
    kerr_cavity,
    model_from_json,
    phase,
)
from .synthesis import synthesize

Number = params.Number


@dataclass(frozen=True)
class Primitive:
    interface: EntityDecl
    needs_mode: bool
    build: Callable[..., SLHTriplet]


def _iface(name: str, generics: Sequence[tuple[str, str]],
           inputs: Sequence[str], outputs: Sequence[str]) -> EntityDecl:
    return EntityDecl(
        name,
        tuple(GenericDecl(g, kind) for g, kind in generics),
        tuple(PortDecl(p, "in") for p in inputs)
        + tuple(PortDecl(p, "out") for p in outputs))


PRIMITIVES: dict[str, Primitive] = {
    "beamsplitter": Primitive(
        _iface("beamsplitter", [("theta", "real")],
               ["in_1", "in_2"], ["out_1", "out_2"]),
        needs_mode=False,
        build=lambda values, mode, dim: beamsplitter(values["theta"].real)),
    "phase": Primitive(
        _iface("phase", [("phi", "real")], ["in_1"], ["out_1"]),
        needs_mode=False,
        build=lambda values, mode, dim: phase(values["phi"].real)),
    "displace": Primitive(
        _iface("displace", [("alpha", "complex")], ["in_1"], ["out_1"]),
        needs_mode=False,
        build=lambda values, mode, dim: displace(values["alpha"])),
    "kerr_cavity": Primitive(
        _iface("kerr_cavity",
               [("delta", "real"), ("chi", "real"),
                ("kappa_1", "real"), ("kappa_2", "real")],
               ["in_1", "in_2"], ["out_1", "out_2"]),
        needs_mode=True,
        build=lambda values, mode, dim: kerr_cavity(
            values["delta"].real, values["chi"].real,
            values["kappa_1"].real, values["kappa_2"].real, mode, dim)),
    "passthrough": Primitive(
        _iface("passthrough", [], ["in_1"], ["out_1"]),
        needs_mode=False,
        build=lambda values, mode, dim: identity_system(1)),
}


@dataclass
class CompileOptions:
    """Scalar parameters and truncation dimensions for one compilation."""

    parameters: dict[str, Number] = field(default_factory=dict)
    fock_dims: dict[str, int] = field(default_factory=dict)
    fock_default: Optional[int] = None
    # instance path -> compiled-model file overriding normal resolution
    bound_models: dict[str, str] = field(default_factory=dict)

    def fock_for(self, mode_label: str) -> int:
        if mode_label in self.fock_dims:
            return self.fock_dims[mode_label]
        if self.fock_default is not None:
            return self.fock_default
        raise UserError(f"missing Fock dimension for mode '{mode_label}' "
                        f"(use --fock {mode_label}=N or --fock N)")


@dataclass
class CompiledModel:
    entity: EntityDecl
    netlist: NetlistGraph
    expression: CircuitExpression
    bindings: dict[str, SLHTriplet]
    model: SLHTriplet

    @property
    def ports(self) -> dict:
        return {"in": [p.name for p in self.entity.in_ports],
                "out": [p.name for p in self.entity.out_ports]}


def find_entity(name: str, designs: Sequence[Design]
                ) -> Optional[tuple[Design, EntityDecl]]:
    for design in designs:
        entity = design.entity(name)
        if entity is not None:
            return design, entity
    return None


def _interfaces_match(decl: ComponentDecl, target: EntityDecl) -> Optional[str]:
    """Return a mismatch description, or None if compatible."""
    declared = [(p.name, p.direction) for p in decl.ports]
    expected = [(p.name, p.direction) for p in target.ports]
    if declared != expected:
        return (f"ports {declared} do not match the resolved interface "
                f"{expected}")
    for g in decl.generics:
        tg = target.find_generic(g.name)
        if tg is None:
            return f"resolved interface has no generic '{g.name}'"
        if tg.kind != g.kind:
            return (f"generic '{g.name}' declared {g.kind} but resolved "
                    f"interface has {tg.kind}")
    return None


def _generic_values(inst_name: str, generic_map, decl: ComponentDecl,
                    target: EntityDecl, env: Mapping[str, Number]
                    ) -> dict[str, Number]:
    assoc = dict(generic_map)
    values: dict[str, Number] = {}
    for generic in target.generics:
        if generic.name in assoc:
            value = params.evaluate(assoc[generic.name], env)
        else:
            default = None
            declared = decl.find_generic(generic.name)
            if declared is not None and declared.default is not None:
                default = declared.default
            elif generic.default is not None:
                default = generic.default
            if default is None:
                raise UserError(f"instance '{inst_name}' is missing generic "
                                f"'{generic.name}' and no default is declared")
            value = params.evaluate(default, {})
        if generic.kind != "complex" and isinstance(value, complex):
            if abs(value.imag) > 0:
                raise UserError(
                    f"generic '{generic.name}' of instance '{inst_name}' is "
                    f"{generic.kind} but received a complex value")
            value = value.real
        values[generic.name] = value
    return values


def top_level_values(entity: EntityDecl, supplied: Mapping[str, Number]
                     ) -> dict[str, Number]:
    known = {g.name for g in entity.generics}
    for name in supplied:
        if name not in known:
            raise UserError(f"unknown parameter '{name}' for entity "
                            f"'{entity.name}'")
    values: dict[str, Number] = {}
    for generic in entity.generics:
        if generic.name in supplied:
            value = supplied[generic.name]
        elif generic.default is not None:
            value = params.evaluate(generic.default, {})
        else:
            raise UserError(f"missing parameter '{generic.name}'")
        if generic.kind != "complex" and isinstance(value, complex):
            if abs(value.imag) > 0:
                raise UserError(f"parameter '{generic.name}' is "
                                f"{generic.kind} but received a complex value")
            value = value.real
        values[generic.name] = value
    return values


def compile_model(designs: Sequence[Design], entity_name: str,
                  arch_name: Optional[str] = None,
                  options: Optional[CompileOptions] = None) -> CompiledModel:
    """Compile an entity from the given designs into a concrete triplet."""
    options = options or CompileOptions()
    found = find_entity(entity_name, designs)
    if found is None:
        raise UserError(f"unknown entity '{entity_name}'")
    design, entity = found
    env = top_level_values(entity, options.parameters)
    netlist = validate(design, entity_name, arch_name)
    expression = simplify(synthesize(netlist))
    bindings = _build_bindings(netlist, env, (), design, designs, options)
    model = evaluate(expression, bindings)
    return CompiledModel(entity, netlist, expression, bindings, model)


def _build_bindings(netlist: NetlistGraph, env: Mapping[str, Number],
                    path: tuple[str, ...], design: Design,
                    designs: Sequence[Design],
                    options: CompileOptions) -> dict[str, SLHTriplet]:
    bindings: dict[str, SLHTriplet] = {}
    for inst in netlist.instances:
        inst_path = path + (inst.name,)
        path_label = ".".join(inst_path)
        if path_label in options.bound_models:
            triplet = _load_bound_model(options.bound_models[path_label],
                                        inst, path_label)
            bindings[inst.name] = triplet
            continue
        target_name = inst.component.name

        resolved = find_entity(target_name, [design])
        if resolved is None:
            others = [d for d in designs if d is not design]
            resolved = find_entity(target_name, others)
        if resolved is not None:
            child_design, child_entity = resolved
            mismatch = _interfaces_match(inst.component, child_entity)
            if mismatch:
                raise UserError(f"component '{target_name}' of instance "
                                f"'{path_label}': {mismatch}")
            child_env = _generic_values(path_label, inst.generic_map,
                                        inst.component, child_entity, env)
            child_netlist = validate(child_design, target_name)
            child_expr = simplify(synthesize(child_netlist))
            child_bindings = _build_bindings(child_netlist, child_env,
                                             inst_path, child_design,
                                             designs, options)
            bindings[inst.name] = evaluate(child_expr, child_bindings)
            continue

        primitive = PRIMITIVES.get(target_name)
        if primitive is None:
            raise UserError(f"cannot resolve component '{target_name}' of "
                            f"instance '{path_label}': not declared in any "
                            f"given file or the primitive library")
        mismatch = _interfaces_match(inst.component, primitive.interface)
        if mismatch:
            raise UserError(f"component '{target_name}' of instance "
                            f"'{path_label}': {mismatch}")
        values = _generic_values(path_label, inst.generic_map, inst.component,
                                 primitive.interface, env)
        values = {k: complex(v) for k, v in values.items()}
        mode = path_label if primitive.needs_mode else None
        dim = options.fock_for(path_label) if primitive.needs_mode else None
        bindings[inst.name] = primitive.build(values, mode, dim)
    return bindings


def _load_bound_model(filename: str, inst, path_label: str) -> SLHTriplet:
    try:
        with open(filename, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise UserError(f"cannot load bound model '{filename}': {exc}") from None
    triplet, _ = model_from_json(doc)
    expected = len(inst.component.in_ports)
    if triplet.n != expected:
        raise UserError(f"bound model '{filename}' for '{path_label}' has "
                        f"{triplet.n} channels, expected {expected}")
    return triplet


def mode_labels(model: SLHTriplet) -> list[str]:
    return list(model.space.labels)
