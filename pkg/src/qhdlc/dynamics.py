"""Time-domain simulation of compiled SLH models.

Two backends over a fixed-step 4th-order Runge-Kutta core: direct
integration of the Lindblad master equation for density matrices, and
Monte-Carlo wavefunction trajectories with norm-threshold jump detection
for pure states.  The scattering matrix never enters the equations of
motion; only L and H do.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import SimulationError, SpaceError
from .operators import HilbertSpace, Operator, number, union_space
from .slh import SLHTriplet, concatenation, displace, identity_system, series_product

TRACE_DRIFT_LIMIT = 1e-4
_DENSE_LIMIT = 2048  # densify operators below this dimension


# -- states -------------------------------------------------------------------

class StateVector:
    """Pure state |psi> on a Hilbert space; normalized within 1e-9."""

    __slots__ = ("space", "data")

    def __init__(self, space: HilbertSpace, data, *, check: bool = True):
        data = np.asarray(data, dtype=np.complex128).reshape(-1)
        if data.size != space.dim:
            raise SpaceError(f"state length {data.size} does not match "
                             f"space dimension {space.dim}")
        if check:
            norm = np.linalg.norm(data)
            if abs(norm - 1.0) > 1e-9:
                raise SimulationError(f"state vector norm {norm} is not 1")
        self.space = space
        self.data = data


class DensityMatrix:
    """Mixed state rho: Hermitian, unit trace, positive semidefinite."""

    __slots__ = ("space", "data")

    def __init__(self, space: HilbertSpace, data, *, check: bool = True):
        data = np.asarray(data, dtype=np.complex128)
        if data.shape != (space.dim, space.dim):
            raise SpaceError(f"density matrix shape {data.shape} does not "
                             f"match space dimension {space.dim}")
        if check:
            if abs(np.trace(data).real - 1.0) > 1e-6 or abs(np.trace(data).imag) > 1e-6:
                raise SimulationError(f"density matrix trace {np.trace(data)} is not 1")
            if np.max(np.abs(data - data.conj().T)) > 1e-8:
                raise SimulationError("density matrix is not Hermitian")
            if np.linalg.eigvalsh((data + data.conj().T) / 2).min() < -1e-8:
                raise SimulationError("density matrix is not positive semidefinite")
        self.space = space
        self.data = data


def fock_state(space: HilbertSpace, occupations: Mapping[str, int] | None = None
               ) -> StateVector:
    """Product Fock state; unspecified modes start in vacuum."""
    occupations = dict(occupations or {})
    index = []
    for label, dim in space.modes:
        n = occupations.pop(label, 0)
        if not 0 <= n < dim:
            raise SimulationError(f"occupation {n} out of range for mode "
                                  f"'{label}' of dimension {dim}")
        index.append(n)
    if occupations:
        raise SimulationError(f"unknown modes in initial state: "
                              f"{sorted(occupations)}")
    data = np.zeros(space.dim, dtype=np.complex128)
    data[np.ravel_multi_index(tuple(index), space.dims) if index else 0] = 1.0
    return StateVector(space, data)


def vacuum_state(space: HilbertSpace) -> StateVector:
    return fock_state(space, {})


def number_observables(space: HilbertSpace) -> dict[str, Operator]:
    """Photon-number operator for every mode, keyed `n:<label>`."""
    return {f"n:{label}": number(label, dim) for label, dim in space.modes}


# -- configuration and traces ---------------------------------------------------

@dataclass
class SimulationConfig:
    t_final: float
    dt: float
    sample_interval: float
    method: str = "master"  # master | mcwf
    trajectories: int = 1
    seed: int = 0
    observables: dict[str, Operator] = field(default_factory=dict)

    def __post_init__(self):
        if not (0 < self.dt <= self.sample_interval <= self.t_final):
            raise SimulationError(
                "need 0 < dt <= sample_interval <= t_final, got "
                f"dt={self.dt}, sample_interval={self.sample_interval}, "
                f"t_final={self.t_final}")
        if self.method not in ("master", "mcwf"):
            raise SimulationError(f"unknown method '{self.method}'")
        steps = self.sample_interval / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise SimulationError("sample_interval must be a multiple of dt")

    @property
    def steps_per_sample(self) -> int:
        return round(self.sample_interval / self.dt)


@dataclass
class ExpectationTrace:
    """Uniformly sampled expectation values, with jump records for mcwf."""

    times: np.ndarray
    values: dict[str, np.ndarray]
    jumps: list[tuple[float, int]] = field(default_factory=list)
    conditions: Optional[list[str]] = None
    segments: Optional[list[tuple[float, str]]] = None

    def value(self, name: str) -> np.ndarray:
        return self.values[name]

    def column_names(self) -> list[str]:
        return list(self.values)

    def write_csv(self, path: str):
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            header = ["t"]
            for name in self.values:
                header += [f"{name}_re", f"{name}_im"]
            if self.conditions is not None:
                header.append("condition")
            writer.writerow(header)
            for i, t in enumerate(self.times):
                row = [f"{t:.17g}"]
                for series in self.values.values():
                    row += [f"{series[i].real:.17g}", f"{series[i].imag:.17g}"]
                if self.conditions is not None:
                    row.append(self.conditions[i])
                writer.writerow(row)

    @classmethod
    def read_csv(cls, path: str) -> "ExpectationTrace":
        with open(path, "r", newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = next(reader)
            has_condition = header and header[-1] == "condition"
            obs_header = header[1:-1] if has_condition else header[1:]
            names = [h[:-3] for h in obs_header[::2]]
            times, conditions = [], []
            series: list[list[complex]] = [[] for _ in names]
            for row in reader:
                times.append(float(row[0]))
                for k in range(len(names)):
                    series[k].append(complex(float(row[1 + 2 * k]),
                                             float(row[2 + 2 * k])))
                if has_condition:
                    conditions.append(row[-1])
        return cls(np.asarray(times),
                   {name: np.asarray(col) for name, col in zip(names, series)},
                   conditions=conditions if has_condition else None)


def write_jump_records(path: str, traces: Sequence[ExpectationTrace]):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["trajectory", "t", "channel"])
        for k, trace in enumerate(traces):
            for t, channel in trace.jumps:
                writer.writerow([k, f"{t:.17g}", channel])


# -- prepared operators -----------------------------------------------------------

class _Prepared:
    """Model operators promoted to the joint space and densified when small."""

    def __init__(self, model: SLHTriplet, extra_space: HilbertSpace | None = None):
        space = model.space
        if extra_space is not None:
            space = space.union(extra_space)
        self.space = space
        self.dim = space.dim
        dense = self.dim <= _DENSE_LIMIT

        def mat(op: Operator):
            m = op.promoted(space).matrix
            return m.toarray() if dense else m.tocsr()

        self.H = mat(model.H)
        self.Ls = [mat(op) for op in model.L]
        # -iH - (1/2) sum L^dag L: drives both the trajectory evolution and
        # the drift half of the master equation
        drift = -1j * self.H
        for op in model.L:
            drift = drift - 0.5 * mat(op.dag() * op)
        self.K = drift


def _prepare_observables(observables: Mapping[str, Operator], space: HilbertSpace):
    out = {}
    for name, op in observables.items():
        m = op.promoted(space).matrix
        out[name] = m.toarray() if space.dim <= _DENSE_LIMIT else m.tocsr()
    return out


# -- master equation ---------------------------------------------------------------

def liouvillian_apply(model: SLHTriplet, rho: DensityMatrix | np.ndarray,
                      space: HilbertSpace | None = None) -> np.ndarray:
    """Right-hand side of the master equation for one density matrix."""
    if isinstance(rho, DensityMatrix):
        space = rho.space
        rho = rho.data
    if space is None:
        space = model.space
    prep = _Prepared(model, space)
    if rho.shape != (prep.dim, prep.dim):
        raise SpaceError(f"density matrix shape {rho.shape} does not match "
                         f"model space of dimension {prep.dim}")
    return _master_rhs(prep, rho)


def _master_rhs(prep: _Prepared, rho: np.ndarray) -> np.ndarray:
    out = prep.K @ rho
    out = out + out.conj().T
    for L in prep.Ls:
        out = out + L @ rho @ L.conj().T
    return out


def integrate_master(model: SLHTriplet, rho0: DensityMatrix,
                     config: SimulationConfig,
                     ) -> tuple[ExpectationTrace, DensityMatrix]:
    """Fixed-step RK4 integration of the master equation."""
    prep = _Prepared(model, rho0.space)
    obs = _prepare_observables(config.observables, prep.space)
    rho = _promote_rho(rho0, prep.space).data.astype(np.complex128, copy=True)

    n_samples = round(config.t_final / config.sample_interval)
    times = np.arange(n_samples + 1) * config.sample_interval
    values = {name: np.empty(n_samples + 1, dtype=np.complex128) for name in obs}
    dt = config.dt

    def record(i):
        for name, op in obs.items():
            values[name][i] = _expect_rho(op, rho)
        drift = abs(np.trace(rho).real - 1.0) + abs(np.trace(rho).imag)
        if drift > TRACE_DRIFT_LIMIT:
            raise SimulationError(
                f"trace drift {drift:.3e} at t={times[i]:.6g} exceeds "
                f"{TRACE_DRIFT_LIMIT}; the step dt={dt} is too large")

    record(0)
    for i in range(1, n_samples + 1):
        for _ in range(config.steps_per_sample):
            k1 = _master_rhs(prep, rho)
            k2 = _master_rhs(prep, rho + (0.5 * dt) * k1)
            k3 = _master_rhs(prep, rho + (0.5 * dt) * k2)
            k4 = _master_rhs(prep, rho + dt * k3)
            rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        record(i)
    trace = ExpectationTrace(times, values)
    return trace, DensityMatrix(prep.space, rho, check=False)


def _promote_rho(rho: DensityMatrix, space: HilbertSpace) -> DensityMatrix:
    if rho.space == space:
        return rho
    op = Operator(rho.space, rho.data).promoted(space)
    return DensityMatrix(space, op.to_dense(), check=False)


def _promote_psi(psi: StateVector, space: HilbertSpace) -> StateVector:
    """Extend with vacuum on missing modes, reordering tensor factors."""
    if psi.space == space:
        return psi
    if not space.contains(psi.space):
        raise SpaceError(f"cannot promote state from {psi.space.labels} "
                         f"to {space.labels}")
    own = set(psi.space.labels)
    missing = [(label, dim) for label, dim in space.modes if label not in own]
    vac = np.zeros(math.prod(d for _, d in missing) if missing else 1,
                   dtype=np.complex128)
    vac[0] = 1.0
    big = np.kron(psi.data, vac)
    cur_modes = list(psi.space.modes) + missing
    cur_dims = [d for _, d in cur_modes]
    cur_index = {label: i for i, (label, _) in enumerate(cur_modes)}
    perm = [cur_index[label] for label in space.labels]
    coords = np.unravel_index(np.arange(space.dim), cur_dims)
    new_flat = np.ravel_multi_index([coords[p] for p in perm], space.dims)
    out = np.empty(space.dim, dtype=np.complex128)
    out[new_flat] = big
    return StateVector(space, out, check=False)


# -- quantum trajectories -------------------------------------------------------------

class _TrajectoryEngine:
    """One stochastic wavefunction evolving under a (switchable) model."""

    def __init__(self, rng: np.random.Generator, psi: np.ndarray):
        self.rng = rng
        self.psi = psi.astype(np.complex128, copy=True)
        self.threshold = rng.random()
        self.jumps: list[tuple[float, int]] = []

    @staticmethod
    def _step(prep: _Prepared, psi: np.ndarray, h: float) -> np.ndarray:
        K = prep.K
        k1 = K @ psi
        k2 = K @ (psi + (0.5 * h) * k1)
        k3 = K @ (psi + (0.5 * h) * k2)
        k4 = K @ (psi + h * k3)
        return psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def advance(self, prep: _Prepared, t: float, h: float) -> float:
        """Integrate across one step of size h, applying any jumps inside."""
        remaining = h
        while remaining > 0:
            candidate = self._step(prep, self.psi, remaining)
            norm2 = np.vdot(candidate, candidate).real
            if norm2 >= self.threshold:
                self.psi = candidate
                t += remaining
                return t
            # a jump occurred within this step: bisect the crossing time
            lo, hi = 0.0, remaining
            resolution = max(h / 100.0, 1e-15)
            psi_hi = candidate
            while hi - lo > resolution:
                mid = 0.5 * (lo + hi)
                trial = self._step(prep, self.psi, mid)
                if np.vdot(trial, trial).real >= self.threshold:
                    lo = mid
                else:
                    hi = mid
                    psi_hi = trial
            self._apply_jump(prep, t + hi, psi_hi)
            t += hi
            remaining -= hi
        return t

    def _apply_jump(self, prep: _Prepared, t_jump: float, psi_pre: np.ndarray):
        weights = np.array([np.linalg.norm(L @ psi_pre) ** 2 for L in prep.Ls])
        total = weights.sum()
        if not prep.Ls or total <= 0 or not np.isfinite(total):
            raise SimulationError(
                f"jump at t={t_jump:.6g} has no finite channel weights; "
                "the state norm underflowed")
        channel = int(self.rng.choice(len(weights), p=weights / total))
        post = prep.Ls[channel] @ psi_pre
        self.psi = post / np.linalg.norm(post)
        self.jumps.append((t_jump, channel + 1))
        self.threshold = self.rng.random()


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per trajectory; results do not depend on scheduling."""
    return np.random.default_rng(np.random.SeedSequence((seed, index)))


def mcwf_trajectory(model: SLHTriplet, psi0: StateVector,
                    config: SimulationConfig,
                    rng: np.random.Generator
                    ) -> tuple[ExpectationTrace, StateVector]:
    """One quantum-jump trajectory; deterministic for a given rng stream."""
    prep = _Prepared(model, psi0.space)
    obs = _prepare_observables(config.observables, prep.space)
    psi = _promote_psi(psi0, prep.space).data
    engine = _TrajectoryEngine(rng, psi)

    n_samples = round(config.t_final / config.sample_interval)
    times = np.arange(n_samples + 1) * config.sample_interval
    values = {name: np.empty(n_samples + 1, dtype=np.complex128) for name in obs}
    for name, op in obs.items():
        values[name][0] = _expect_vec(op, engine.psi)
    t = 0.0
    for i in range(1, n_samples + 1):
        for _ in range(config.steps_per_sample):
            t = engine.advance(prep, t, config.dt)
        for name, op in obs.items():
            values[name][i] = _expect_vec(op, engine.psi)
    trace = ExpectationTrace(times, values, jumps=engine.jumps)
    norm = np.linalg.norm(engine.psi)
    return trace, StateVector(prep.space, engine.psi / norm, check=False)


def run_trajectories(model: SLHTriplet, psi0: StateVector,
                     config: SimulationConfig) -> list[ExpectationTrace]:
    """All trajectories of a config, one independent rng stream each."""
    traces = []
    for k in range(config.trajectories):
        trace, _ = mcwf_trajectory(model, psi0, config, trajectory_rng(config.seed, k))
        traces.append(trace)
    return traces


# -- scheduled input sequences ----------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    condition: str
    duration: float
    inputs: tuple[tuple[int, complex], ...]  # (1-based channel, amplitude)


def input_block(n: int, inputs: Mapping[int, complex]) -> SLHTriplet:
    """Parallel displacements, identity on channels without an amplitude."""
    parts = []
    for channel in range(1, n + 1):
        amp = inputs.get(channel, 0)
        parts.append(displace(amp) if amp else identity_system(1))
    block = parts[0]
    for part in parts[1:]:
        block = concatenation(block, part)
    return block


def compose_with_inputs(model: SLHTriplet, inputs: Mapping[int, complex]
                        ) -> SLHTriplet:
    return series_product(model, input_block(model.n, inputs))


def run_input_sequence(model: SLHTriplet, schedule: Sequence[Segment],
                       config: SimulationConfig,
                       initial: StateVector | DensityMatrix,
                       rng: np.random.Generator | None = None
                       ) -> ExpectationTrace:
    """Piecewise simulation under a schedule of input conditions.

    The state is carried across segment boundaries; each sample row is
    labeled with the condition active when it was taken.
    """
    composed: dict[tuple, SLHTriplet] = {}
    for seg in schedule:
        key = seg.inputs
        if key not in composed:
            composed[key] = compose_with_inputs(model, dict(seg.inputs))

    if config.method == "mcwf":
        if not isinstance(initial, StateVector):
            raise SimulationError("mcwf needs a state-vector initial state")
        return _run_sequence_mcwf(composed, schedule, config, initial,
                                  rng or trajectory_rng(config.seed, 0))
    if not isinstance(initial, DensityMatrix):
        initial = DensityMatrix(
            initial.space, np.outer(initial.data, initial.data.conj()),
            check=False)
    return _run_sequence_master(composed, schedule, config, initial)


def _segment_steps(seg: Segment, config: SimulationConfig) -> tuple[int, int]:
    samples = seg.duration / config.sample_interval
    if abs(samples - round(samples)) > 1e-9:
        raise SimulationError(
            f"segment '{seg.condition}' duration {seg.duration} is not a "
            f"multiple of the sample interval {config.sample_interval}")
    return round(samples), config.steps_per_sample


def _first_condition(schedule: Sequence[Segment]) -> str:
    for seg in schedule:
        if seg.duration > 0:
            return seg.condition
    return schedule[0].condition


def _run_sequence_master(composed, schedule, config, rho0):
    space = union_space([m.space for m in composed.values()] + [rho0.space])
    preps = {key: _Prepared(m, space) for key, m in composed.items()}
    obs = _prepare_observables(config.observables, space)
    rho = _promote_rho(rho0, space).data.copy()

    times, conditions, segments = [0.0], [_first_condition(schedule)], []
    values = {name: [_expect_rho(obs[name], rho)] for name in obs}
    t = 0.0
    for seg in schedule:
        n_samples, steps = _segment_steps(seg, config)
        if n_samples == 0:
            continue
        segments.append((t, seg.condition))
        prep = preps[seg.inputs]
        dt = config.dt
        for _ in range(n_samples):
            for _ in range(steps):
                k1 = _master_rhs(prep, rho)
                k2 = _master_rhs(prep, rho + (0.5 * dt) * k1)
                k3 = _master_rhs(prep, rho + (0.5 * dt) * k2)
                k4 = _master_rhs(prep, rho + dt * k3)
                rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += config.sample_interval
            times.append(t)
            conditions.append(seg.condition)
            for name, op in obs.items():
                values[name].append(_expect_rho(op, rho))
            drift = abs(np.trace(rho).real - 1.0) + abs(np.trace(rho).imag)
            if drift > TRACE_DRIFT_LIMIT:
                raise SimulationError(
                    f"trace drift {drift:.3e} at t={t:.6g}; dt too large")
    return ExpectationTrace(
        np.asarray(times),
        {name: np.asarray(col) for name, col in values.items()},
        conditions=conditions, segments=segments)


def _run_sequence_mcwf(composed, schedule, config, psi0, rng):
    space = union_space([m.space for m in composed.values()] + [psi0.space])
    preps = {key: _Prepared(m, space) for key, m in composed.items()}
    obs = _prepare_observables(config.observables, space)
    engine = _TrajectoryEngine(rng, _promote_psi(psi0, space).data)

    times, conditions, segments = [0.0], [_first_condition(schedule)], []
    values = {name: [_expect_vec(obs[name], engine.psi)] for name in obs}
    t = 0.0
    for seg in schedule:
        n_samples, steps = _segment_steps(seg, config)
        if n_samples == 0:
            continue
        segments.append((t, seg.condition))
        prep = preps[seg.inputs]
        for _ in range(n_samples):
            for _ in range(steps):
                t = engine.advance(prep, t, config.dt)
            times.append(t)
            conditions.append(seg.condition)
            for name, op in obs.items():
                values[name].append(_expect_vec(op, engine.psi))
    return ExpectationTrace(
        np.asarray(times),
        {name: np.asarray(col) for name, col in values.items()},
        jumps=engine.jumps, conditions=conditions, segments=segments)


def _expect_rho(op, rho) -> complex:
    return complex(np.trace(op @ rho))


def _expect_vec(op, psi) -> complex:
    return complex(np.vdot(psi, op @ psi) / np.vdot(psi, psi).real)
