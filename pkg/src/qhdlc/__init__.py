"""qhdlc: a compiler and simulator for quantum photonic circuits.

Parses QHDL (a structural-VHDL subset) netlists, synthesizes (S, L, H)
models through the circuit algebra, simulates their dynamics via the
Lindblad master equation or Monte-Carlo wavefunction trajectories, and
performs empirical Markov-chain model reduction.
"""

__version__ = "0.1.0"

from .circuit import (
    ComponentRef,
    Concatenation,
    Feedback,
    Identity,
    Permutation,
    SeriesProduct,
    concat,
    feedback,
    render_text,
    series,
    simplify,
)
from .compiler import CompileOptions, CompiledModel, compile_model
from .dynamics import (
    DensityMatrix,
    ExpectationTrace,
    Segment,
    SimulationConfig,
    StateVector,
    fock_state,
    integrate_master,
    liouvillian_apply,
    mcwf_trajectory,
    run_input_sequence,
    run_trajectories,
    trajectory_rng,
    vacuum_state,
)
from .operators import HilbertSpace, Operator, create, destroy, imag_part, number
from .parser import parse, parse_file
from .netlist import NetlistGraph, validate
from .slh import (
    SLHTriplet,
    beamsplitter,
    concatenation,
    displace,
    evaluate,
    feedback_reduce,
    identity_system,
    kerr_cavity,
    model_from_json,
    model_to_json,
    permutation_system,
    phase,
    series_product,
    split_channels,
)
from .synthesis import synthesize

__all__ = [name for name in dir() if not name.startswith("_")]
