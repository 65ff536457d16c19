"""Empirical Markov-chain model reduction.

Trajectory expectation traces are coarse-grained on the single observable
D = <a'a> - <b'b>, transitions are counted per input condition to give
conditional transition matrices, and those are converted to rate
matrices.  The rates are then rebuilt as low-dimensional SLH models: a
jump model reproducing the HOLD dynamics, a drive model whose drift
operators implement input-controlled SET/RESET transitions, and an
optional output-emulation model that scatters a bias field in a
state-dependent way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .dynamics import ExpectationTrace
from .errors import QhdlcError
from .operators import HilbertSpace, Operator
from .slh import (
    SLHTriplet,
    concatenation,
    displace,
    identity_system,
    model_to_json,
    series_product,
)

REDUCED_MODE = "reduced"


class ReductionError(QhdlcError):
    pass


# -- binning --------------------------------------------------------------------

@dataclass(frozen=True)
class BinningSpec:
    """Uniform bins over D; only visited bins become model states."""

    width: float
    origin: float = 0.0

    def bin_of(self, value: float) -> int:
        return int(math.floor((value - self.origin) / self.width))


@dataclass(frozen=True)
class BinTable:
    """Visited bins, indexed 1..M by descending D (low index = high D)."""

    spec: BinningSpec
    bins: tuple[int, ...]  # descending bin numbers

    @property
    def m(self) -> int:
        return len(self.bins)

    def state_of(self, bin_number: int) -> int:
        return self.bins.index(bin_number) + 1


def d_values(trace: ExpectationTrace, obs_a: str, obs_b: str) -> np.ndarray:
    return trace.value(obs_a).real - trace.value(obs_b).real


def coarse_grain(traces: Sequence[ExpectationTrace], spec: BinningSpec,
                 obs_a: str, obs_b: str
                 ) -> tuple[BinTable, dict[str, list[np.ndarray]]]:
    """Map every sample to a state index; sequences split per condition.

    Samples are grouped into runs of constant condition so that no
    counted transition spans a condition boundary.  Traces without
    condition labels count as a single HOLD run.
    """
    if not traces:
        raise ReductionError("no traces to coarse-grain")
    visited: set[int] = set()
    runs: list[tuple[str, np.ndarray]] = []
    for trace in traces:
        d = d_values(trace, obs_a, obs_b)
        bins = np.array([spec.bin_of(v) for v in d])
        visited.update(int(b) for b in bins)
        conditions = trace.conditions or ["HOLD"] * len(d)
        start = 0
        for i in range(1, len(d) + 1):
            if i == len(d) or conditions[i] != conditions[start]:
                runs.append((conditions[start], bins[start:i]))
                start = i
    table = BinTable(spec, tuple(sorted(visited, reverse=True)))
    index_of = {b: i + 1 for i, b in enumerate(table.bins)}
    sequences: dict[str, list[np.ndarray]] = {}
    for condition, bins in runs:
        states = np.array([index_of[int(b)] for b in bins], dtype=np.int64)
        sequences.setdefault(condition, []).append(states)
    return table, sequences


# -- chain estimation --------------------------------------------------------------

@dataclass
class MarkovChainEstimate:
    """Per-condition transition counts and row-normalized estimates."""

    n_states: int
    delta_t: float
    counts: dict[str, np.ndarray]
    transition_matrices: dict[str, np.ndarray] = field(init=False)

    def __post_init__(self):
        self.transition_matrices = {}
        for condition, counts in self.counts.items():
            p = np.zeros_like(counts, dtype=float)
            totals = counts.sum(axis=1)
            for i in range(self.n_states):
                if totals[i] > 0:
                    p[i] = counts[i] / totals[i]
                else:
                    p[i, i] = 1.0  # unobserved state: hold in place
            self.transition_matrices[condition] = p


def estimate_markov(sequences: Mapping[str, Sequence[np.ndarray]],
                    n_states: int, delta_t: float) -> MarkovChainEstimate:
    """Count lag-one transitions within each constant-condition sequence."""
    counts: dict[str, np.ndarray] = {}
    for condition, seqs in sequences.items():
        c = np.zeros((n_states, n_states), dtype=np.int64)
        for seq in seqs:
            if np.any((seq < 1) | (seq > n_states)):
                raise ReductionError("state index out of range")
            np.add.at(c, (seq[:-1] - 1, seq[1:] - 1), 1)
        counts[condition] = c
    return MarkovChainEstimate(n_states, delta_t, counts)


def to_rate_matrix(estimate: MarkovChainEstimate) -> dict[str, np.ndarray]:
    """Q = (P - 1)/dt per condition; rows sum to zero by construction."""
    if estimate.delta_t <= 0:
        raise ReductionError("sampling interval must be positive")
    eye = np.eye(estimate.n_states)
    return {condition: (p - eye) / estimate.delta_t
            for condition, p in estimate.transition_matrices.items()}


# -- reduced-space operators ---------------------------------------------------------

def reduced_space(m: int, label: str = REDUCED_MODE) -> HilbertSpace:
    return HilbertSpace.of((label, m))


def basis_transfer(m: int, j: int, i: int, label: str = REDUCED_MODE) -> Operator:
    """|j><i| on the M-dimensional reduced space (1-based states)."""
    mat = np.zeros((m, m), dtype=complex)
    mat[j - 1, i - 1] = 1.0
    return Operator(reduced_space(m, label), mat)


def jump_slh(rates: np.ndarray, label: str = REDUCED_MODE) -> SLHTriplet:
    """One decay channel per strictly positive off-diagonal rate.

    Channel (i -> j) couples through sqrt(rate) |j><i|; in a trajectory
    simulation started from a basis state the model reproduces the
    classical jump process of the rate matrix.
    """
    rates = np.asarray(rates, dtype=float)
    m = rates.shape[0]
    if rates.shape != (m, m):
        raise ReductionError("rate matrix must be square")
    ops = []
    for i in range(m):
        for j in range(m):
            if i != j and rates[i, j] > 0:
                ops.append(math.sqrt(rates[i, j]) * basis_transfer(m, j + 1, i + 1,
                                                                   label))
    if not ops:
        return SLHTriplet((), (), Operator.zero(reduced_space(m, label)))
    k = len(ops)
    S = tuple(tuple(Operator.scalar(1 if a == b else 0) for b in range(k))
              for a in range(k))
    return SLHTriplet(S, tuple(ops), Operator.zero(reduced_space(m, label)))


def drift_operators(m: int, label: str = REDUCED_MODE) -> tuple[Operator, Operator]:
    """The SET and RESET drift ladders on an M = 4k + 2 state space.

    sigma_set sums |M-4-2j><M-1-2j| down to |M/2-1><M/2+2|; sigma_reset
    sums |5+2j><2+2j| up to |M/2+2><M/2-1|.
    """
    if m < 6 or m % 4 != 2:
        raise ReductionError(f"drive construction needs M = 4k + 2 with "
                             f"k >= 1, got M = {m}")
    k = (m - 2) // 4
    sigma_set = Operator.zero(reduced_space(m, label))
    sigma_reset = Operator.zero(reduced_space(m, label))
    for j in range(k):
        sigma_set = sigma_set + basis_transfer(m, m - 4 - 2 * j, m - 1 - 2 * j, label)
        sigma_reset = sigma_reset + basis_transfer(m, 5 + 2 * j, 2 + 2 * j, label)
    return sigma_set, sigma_reset


def drive_slh(m: int, alpha: complex, label: str = REDUCED_MODE) -> SLHTriplet:
    """Four-channel drive model; feeding both inputs with amplitude alpha
    cancels its coupling vector exactly (the HOLD condition)."""
    sigma_s, sigma_r = drift_operators(m, label)
    one = Operator.identity(reduced_space(m, label))
    zero = Operator.zero(reduced_space(m, label))
    ps = sigma_s.dag() * sigma_s
    pr = sigma_r.dag() * sigma_r
    qs = sigma_s * sigma_s.dag()
    qr = sigma_r * sigma_r.dag()
    S = (
        (one - ps, zero, sigma_s.dag(), zero),
        (zero, one - pr, zero, sigma_r.dag()),
        (sigma_s, zero, one - qs, zero),
        (zero, sigma_r, zero, one - qr),
    )
    L = ((-alpha) * (one - ps), (-alpha) * (one - pr),
         (-alpha) * sigma_s, (-alpha) * sigma_r)
    return SLHTriplet(S, L, Operator.zero(reduced_space(m, label)))


def compose_reduced(jump: SLHTriplet, drive: SLHTriplet,
                    inputs: tuple[complex, complex]) -> SLHTriplet:
    """Feed (sbar, rbar) displacements into the drive, then adjoin the
    jump model."""
    sbar, rbar = inputs
    block = concatenation(concatenation(displace(sbar), displace(rbar)),
                          identity_system(2))
    driven = series_product(drive, block)
    return concatenation(driven, jump)


def output_slh(thetas: Sequence[float], phases_1: Sequence[float],
               phases_2: Sequence[float], beta_prime: complex,
               label: str = REDUCED_MODE) -> SLHTriplet:
    """State-dependent two-channel scatterer emulating the latch output.

    In reduced state |i> the block is a rotation by thetas[i] with row
    phases (phases_1[i], phases_2[i]); the bias beta_prime enters the
    first channel.
    """
    m = len(thetas)
    if not (len(phases_1) == len(phases_2) == m):
        raise ReductionError("need one (theta, phi1, phi2) triple per state")
    space = reduced_space(m, label)
    blocks = np.zeros((m, 2, 2), dtype=complex)
    for i in range(m):
        c, s = math.cos(thetas[i]), math.sin(thetas[i])
        e1, e2 = np.exp(1j * phases_1[i]), np.exp(1j * phases_2[i])
        blocks[i] = [[e1 * c, -e1 * s], [e2 * s, e2 * c]]
    entries = [[Operator(space, np.diag(blocks[:, r, c])) for c in range(2)]
               for r in range(2)]
    S = (tuple(entries[0]), tuple(entries[1]))
    L = (beta_prime * entries[0][0], beta_prime * entries[1][0])
    return SLHTriplet(S, L, Operator.zero(space))


# -- end-to-end reduction --------------------------------------------------------------

@dataclass
class ReducedModel:
    """Everything the reduction pipeline produces for one dataset."""

    m: int
    alpha: complex
    delta_t: float
    bin_table: BinTable
    estimate: MarkovChainEstimate
    rate_matrices: dict[str, np.ndarray]
    jump: SLHTriplet
    drive: SLHTriplet
    output: Optional[SLHTriplet] = None

    @property
    def full_model(self) -> SLHTriplet:
        """Drive and jump (and output emulation) adjoined; inputs 1 and 2
        of the result take the SET/RESET displacement amplitudes."""
        model = concatenation(self.drive, self.jump)
        if self.output is not None:
            model = concatenation(model, self.output)
        return model


def pad_state_count(n_visited: int) -> int:
    """Smallest M = 4k + 2 >= max(n_visited, 6)."""
    m = max(n_visited, 6)
    while m % 4 != 2:
        m += 1
    return m


def suggest_drive_amplitude(rates_set: np.ndarray, rates_reset: np.ndarray,
                            m: int) -> float:
    """Least-squares fit of |alpha| to the observed drift-arc rates.

    The drive model adds rate |alpha|^2 on each drift arc, so the fit is
    the root of the mean empirical rate over the arcs the drifts cover.
    Heuristic: the reduction leaves alpha a free calibration parameter.
    """
    k = (m - 2) // 4
    arcs = []
    for j in range(k):
        arcs.append(rates_set[m - 1 - 2 * j - 1, m - 4 - 2 * j - 1])
        arcs.append(rates_reset[2 + 2 * j - 1, 5 + 2 * j - 1])
    arcs = [r for r in arcs if r > 0]
    if not arcs:
        return 0.0
    return math.sqrt(sum(arcs) / len(arcs))


def build_reduced_model(traces: Sequence[ExpectationTrace], spec: BinningSpec,
                        obs_a: str, obs_b: str,
                        alpha: Optional[complex] = None,
                        delta_t: Optional[float] = None,
                        output_params: Optional[dict] = None,
                        label: str = REDUCED_MODE) -> ReducedModel:
    """Full pipeline: bin, count, convert to rates, rebuild SLH models.

    Visited-bin counts that are not of the form 4k + 2 are padded with
    unvisited boundary states (appended past the low-D end); padded
    states carry zero rates and are dynamically inert.
    """
    if delta_t is None:
        trace = traces[0]
        if len(trace.times) < 2:
            raise ReductionError("traces are too short to infer delta_t")
        delta_t = float(trace.times[1] - trace.times[0])
    table, sequences = coarse_grain(traces, spec, obs_a, obs_b)
    m = pad_state_count(table.m)
    estimate = estimate_markov(sequences, m, delta_t)
    rates = to_rate_matrix(estimate)
    hold = rates.get("HOLD")
    if hold is None:
        raise ReductionError(
            f"no HOLD data found; conditions present: {sorted(rates)}")
    if alpha is None:
        if "SET" in rates and "RESET" in rates:
            alpha = suggest_drive_amplitude(rates["SET"], rates["RESET"], m)
        else:
            raise ReductionError("drive amplitude not given and not inferable "
                                 "without SET and RESET data")
    jump = jump_slh(hold, label)
    drive = drive_slh(m, alpha, label)
    output = None
    if output_params is not None:
        output = output_slh(output_params["theta"], output_params["phi1"],
                            output_params["phi2"],
                            complex(*output_params["beta_prime"])
                            if isinstance(output_params["beta_prime"], (list, tuple))
                            else output_params["beta_prime"], label)
    return ReducedModel(m, alpha, delta_t, table, estimate, rates,
                        jump, drive, output)


def reduced_model_to_json(reduced: ReducedModel) -> dict:
    doc = model_to_json(reduced.full_model)
    doc["metadata"] = {
        "M": reduced.m,
        "delta_t": reduced.delta_t,
        "bin_width": reduced.bin_table.spec.width,
        "bin_origin": reduced.bin_table.spec.origin,
        "conditions": sorted(reduced.estimate.counts),
        "alpha": [reduced.alpha.real, reduced.alpha.imag]
        if isinstance(reduced.alpha, complex) else [float(reduced.alpha), 0.0],
        "jump_channels": reduced.jump.n,
    }
    return doc


def write_counts_csv(estimate: MarkovChainEstimate, directory: str):
    import os
    for condition, counts in estimate.counts.items():
        path = os.path.join(directory, f"counts_{condition}.csv")
        np.savetxt(path, counts, fmt="%d", delimiter=",")
