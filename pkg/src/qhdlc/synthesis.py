"""Netlist-to-expression synthesis.

Converts a validated netlist into a circuit expression in six steps:
build one leaf per instance with ordered port-label lists, concatenate
everything, pad with one identity channel per internal wire, close each
wire with two feedback operations (driver output into the identity
input, identity output into the sink input), and finally route the
residual channels onto the entity ports with a pair of permutations.

Channel indices are never tracked arithmetically; they are recomputed
from ordered label lists before every feedback, which makes the
construction independent of bookkeeping drift.
"""

from __future__ import annotations

from .circuit import (
    CircuitExpression,
    ComponentRef,
    Feedback,
    Identity,
    Permutation,
    SeriesProduct,
    concat,
)
from .errors import CircuitError
from .netlist import ENTITY, SIGNAL, NetlistGraph

# channel labels: ("port", instance, port) for instance ports,
# ("wire", signal) for padded identity channels belonging to internal
# signals, ("through", k) for entity-to-entity wire-through channels
_PORT = "port"
_WIRE = "wire"
_THROUGH = "through"


def synthesize(netlist: NetlistGraph) -> CircuitExpression:
    """Build the circuit expression realizing a validated netlist."""
    leaves = []
    out_labels: list[tuple] = []
    in_labels: list[tuple] = []
    for inst in netlist.instances:
        leaves.append(ComponentRef(inst.component.name, inst.name,
                                   len(inst.component.in_ports),
                                   inst.generic_map))
        in_labels.extend((_PORT, inst.name, p.name)
                         for p in inst.component.in_ports)
        out_labels.extend((_PORT, inst.name, p.name)
                          for p in inst.component.out_ports)

    pad_labels = [(_WIRE, sig) for sig in netlist.signals]
    pad_labels += [(_THROUGH, i) for i in range(len(netlist.passthroughs))]
    parts = list(leaves)
    if pad_labels:
        parts.append(Identity(len(pad_labels)))
    if not parts:
        raise CircuitError("netlist synthesizes to an empty circuit")
    expr = concat(parts) if len(parts) > 1 else parts[0]
    out_labels.extend(pad_labels)
    in_labels.extend(pad_labels)

    def close(out_label: tuple, in_label: tuple) -> CircuitExpression:
        k = out_labels.index(out_label) + 1
        m = in_labels.index(in_label) + 1
        del out_labels[k - 1]
        del in_labels[m - 1]
        return Feedback(expr, k, m)

    # route each driver output into its wire channel.
    for inst in netlist.instances:
        for port in inst.component.out_ports:
            kind, name = inst.connection(port.name)
            if kind == SIGNAL:
                expr = close((_PORT, inst.name, port.name), (_WIRE, name))
    # route each wire channel into its sink input.
    for inst in netlist.instances:
        for port in inst.component.in_ports:
            kind, name = inst.connection(port.name)
            if kind == SIGNAL:
                expr = close((_WIRE, name), (_PORT, inst.name, port.name))

    # residual channels all face entity ports; build the routing permutations
    entity_of_out = {}
    entity_of_in = {}
    for inst in netlist.instances:
        for port in inst.component.ports:
            kind, name = inst.connection(port.name)
            if kind == ENTITY:
                label = (_PORT, inst.name, port.name)
                if port.direction == "out":
                    entity_of_out[label] = name
                else:
                    entity_of_in[label] = name
    for i, (in_port, out_port) in enumerate(netlist.passthroughs):
        entity_of_out[(_THROUGH, i)] = out_port
        entity_of_in[(_THROUGH, i)] = in_port

    out_ports = [p.name for p in netlist.entity.out_ports]
    in_ports = [p.name for p in netlist.entity.in_ports]
    if sorted(entity_of_out.values()) != sorted(out_ports) or \
            sorted(entity_of_in.values()) != sorted(in_ports):
        raise CircuitError("internal defect: residual channels do not "
                           "match the entity ports")

    # sigma_out sends residual output j to the entity position of its port
    sigma_out = tuple(out_ports.index(entity_of_out[label]) + 1
                      for label in out_labels)
    # sigma_in is the inverse of the map residual-input -> entity position
    sigma_in_inv = [in_ports.index(entity_of_in[label]) + 1
                    for label in in_labels]
    sigma_in = [0] * len(sigma_in_inv)
    for residual_index, entity_index in enumerate(sigma_in_inv):
        sigma_in[entity_index - 1] = residual_index + 1

    expr = SeriesProduct(expr, Permutation(tuple(sigma_in)))
    return SeriesProduct(Permutation(sigma_out), expr)
