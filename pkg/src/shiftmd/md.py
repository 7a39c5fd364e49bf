"""MD loop for one water molecule: features -> MLP forces -> integration.

Units are Angstrom, femtosecond, amu and eV throughout. The conversion
constant ACCEL_UNIT turns (eV/A)/amu into A/fs^2 and doubles as the eV ->
amu*(A/fs)^2 kinetic-energy factor.

Features are the internal coordinates (target O-H length, other O-H length,
H-O-H angle), affinely scaled into the activation's working range. The two
model outputs are the in-plane force components of the target hydrogen along
the local frame (u, w); the oxygen force is the negative sum of the hydrogen
forces, so the total force is zero by construction.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataset as ds
from .fxp import Q5_10, encode_fx
from .net import FeatureScaling, MlpModel, forward_float, forward_fqnn, forward_sqnn

# (eV/A)/amu in A/fs^2, from CODATA eV and amu values
ACCEL_UNIT = 9.6485332e-3
# Boltzmann constant in eV/K
KB_EV = 8.617333262e-5

ATOMIC_MASSES = {"H": 1.008, "O": 15.999}
WATER_SPECIES = ("O", "H", "H")
WATER_MASSES = np.array([ATOMIC_MASSES[s] for s in WATER_SPECIES])


class Engine(enum.Enum):
    FLOAT = "float"
    FQNN = "fqnn"
    SQNN = "sqnn"
    SURROGATE = "surrogate"


@dataclass
class SimState:
    positions: np.ndarray  # (N, 3) A
    velocities: np.ndarray  # (N, 3) A/fs
    masses: np.ndarray  # (N,) amu
    t: float = 0.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        self.masses = np.asarray(self.masses, dtype=float)
        if self.positions.shape != self.velocities.shape:
            raise ValueError("positions and velocities must shape-match")
        if self.masses.shape != (self.positions.shape[0],):
            raise ValueError("one mass per atom required")
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.velocities))):
            raise ValueError("state must be finite")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 2.0  # fs
    steps: int = 1000
    temperature_init: float = 300.0  # K
    seed: int = 0
    engine: Engine = Engine.SQNN
    surrogate: ds.SurrogateParams = field(default_factory=ds.SurrogateParams)
    # neighbor-pruning knobs; a 3-atom molecule keeps every neighbor, so these
    # prune nothing here and exist for larger systems
    r_cut: float = 6.0
    n_cut: int = 8

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")


@dataclass(frozen=True)
class FeatureVec:
    values: np.ndarray  # (3,) scaled, dimensionless
    u: np.ndarray  # unit vector along the target O-H bond
    w: np.ndarray  # unit in-plane vector orthogonal to u


def internal_coordinates(positions: np.ndarray) -> tuple[float, float, float]:
    """(r_OH1, r_OH2, angle in degrees) for an O,H,H geometry."""
    pos = np.asarray(positions, dtype=float)
    d1 = pos[1] - pos[0]
    d2 = pos[2] - pos[0]
    r1 = float(np.linalg.norm(d1))
    r2 = float(np.linalg.norm(d2))
    if r1 < 1e-8 or r2 < 1e-8:
        raise ValueError("coincident atoms in water geometry")
    c = float(np.clip((d1 @ d2) / (r1 * r2), -1.0, 1.0))
    return r1, r2, math.degrees(math.acos(c))


def extract_features(
    positions: np.ndarray, which_h: int, scaling: FeatureScaling | None = None
) -> FeatureVec:
    """Scaled internal coordinates plus the target hydrogen's local frame.

    which_h is 1 or 2. With scaling=None the raw internal coordinates are
    returned (bond lengths in Angstrom, angle in degrees).
    """
    if which_h not in (1, 2):
        raise ValueError("which_h must be 1 or 2")
    pos = np.asarray(positions, dtype=float)
    other = 3 - which_h
    d_t = pos[which_h] - pos[0]
    d_o = pos[other] - pos[0]
    r_t = float(np.linalg.norm(d_t))
    r_o = float(np.linalg.norm(d_o))
    if r_t < 1e-8 or r_o < 1e-8:
        raise ValueError("coincident atoms in water geometry")
    u = d_t / r_t
    uo = d_o / r_o
    c = float(np.clip(u @ uo, -1.0, 1.0))
    w_raw = uo - c * u
    s = float(np.linalg.norm(w_raw))
    if s < 1e-10:
        raise ValueError("collinear O-H-H geometry: local frame undefined")
    w = w_raw / s
    raw = np.array([r_t, r_o, math.degrees(math.acos(c))])
    values = raw if scaling is None else scaling.scale_features(raw)
    return FeatureVec(values, u, w)


def _forward_scaled(model: MlpModel, values: np.ndarray, engine: Engine) -> np.ndarray:
    """Run one scaled feature vector through the requested engine."""
    if engine is Engine.FLOAT:
        return forward_float(model, values)
    if engine is Engine.SQNN:
        xs = [encode_fx(float(v), model.fx_format) for v in values]
        return np.array([v.to_float() for v in forward_sqnn(model, xs)])
    if engine is Engine.FQNN:
        xs = [encode_fx(float(v), Q5_10) for v in values]
        return np.array([v.to_float() for v in forward_fqnn(model, xs)])
    raise ValueError(f"engine {engine} does not use the model")


def predict_inplane_forces(model: MlpModel, positions: np.ndarray, engine: Engine) -> np.ndarray:
    """(2, 2) array: per hydrogen, physical (F_u, F_w) in eV/A."""
    out = np.empty((2, 2))
    for h in (1, 2):
        fv = extract_features(positions, h, model.scaling)
        scaled = _forward_scaled(model, fv.values, engine)
        out[h - 1] = model.scaling.unscale_outputs(scaled)
    return out


def evaluate_forces(
    state: SimState,
    model: MlpModel | None,
    engine: Engine,
    surrogate: ds.SurrogateParams | None = None,
) -> np.ndarray:
    """Forces (3, 3) eV/A on O,H,H; the oxygen row closes the total to zero."""
    if engine is Engine.SURROGATE:
        _, forces = ds.surrogate_water(state.positions, surrogate or ds.SurrogateParams())
        return forces
    if model is None:
        raise ValueError(f"engine {engine.value} requires a model")
    forces = np.zeros((3, 3))
    for h in (1, 2):
        fv = extract_features(state.positions, h, model.scaling)
        fu, fw = model.scaling.unscale_outputs(_forward_scaled(model, fv.values, engine))
        forces[h] = fu * fv.u + fw * fv.w
    forces[0] = -(forces[1] + forces[2])
    return forces


def integrate_step(state: SimState, forces: np.ndarray, dt: float) -> SimState:
    """Semi-implicit Euler: velocity from the current force, then position."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    v = state.velocities + forces / state.masses[:, None] * (ACCEL_UNIT * dt)
    r = state.positions + v * dt
    return SimState(r, v, state.masses, state.t + dt)


def kinetic_energy(state: SimState) -> float:
    v2 = np.sum(state.velocities**2, axis=1)
    return 0.5 * float(np.dot(state.masses, v2)) / ACCEL_UNIT


def thermal_state(
    params: ds.SurrogateParams, temperature: float, seed: int
) -> SimState:
    """Equilibrium geometry with Gaussian velocities, COM motion removed."""
    pos = ds.water_geometry(params.r0, params.r0, math.radians(params.theta0))
    rng = np.random.default_rng(seed)
    sigma = np.sqrt(KB_EV * temperature * ACCEL_UNIT / WATER_MASSES)
    v = rng.normal(size=(3, 3)) * sigma[:, None]
    v -= (WATER_MASSES @ v) / WATER_MASSES.sum()
    return SimState(pos, v, WATER_MASSES.copy())


@dataclass
class Trajectory:
    species: tuple[str, ...]
    masses: np.ndarray  # (N,)
    times: np.ndarray  # (F,) fs
    positions: np.ndarray  # (F, N, 3)
    velocities: np.ndarray  # (F, N, 3)
    forces: np.ndarray  # (F, N, 3)
    energies: np.ndarray  # (F,) potential eV; NaN when the engine has none

    @property
    def n_frames(self) -> int:
        return len(self.times)


def run_md(
    config: SimConfig,
    model: MlpModel | None = None,
    initial: SimState | None = None,
) -> Trajectory:
    """Integrate `config.steps` steps; the trajectory includes the initial frame."""
    state = initial if initial is not None else thermal_state(
        config.surrogate, config.temperature_init, config.seed
    )
    n = state.positions.shape[0]
    steps = config.steps
    times = np.empty(steps + 1)
    positions = np.empty((steps + 1, n, 3))
    velocities = np.empty((steps + 1, n, 3))
    forces = np.empty((steps + 1, n, 3))
    energies = np.full(steps + 1, np.nan)
    for i in range(steps + 1):
        try:
            if config.engine is Engine.SURROGATE:
                energies[i], f = ds.surrogate_water(state.positions, config.surrogate)
            else:
                f = evaluate_forces(state, model, config.engine, config.surrogate)
        except Exception as exc:
            raise RuntimeError(f"force evaluation failed at step {i}") from exc
        times[i] = state.t
        positions[i] = state.positions
        velocities[i] = state.velocities
        forces[i] = f
        if i < steps:
            state = integrate_step(state, f, config.dt)
    return Trajectory(
        species=WATER_SPECIES if n == 3 else tuple("X" * n),
        masses=state.masses.copy(),
        times=times,
        positions=positions,
        velocities=velocities,
        forces=forces,
        energies=energies,
    )


# ---------------------------------------------------------------------------
# Trajectory IO


def trajectory_to_frames(traj: Trajectory) -> list[ds.Frame]:
    frames = []
    for i in range(traj.n_frames):
        info = {"time": f"{traj.times[i]:.17g}"}
        if np.isfinite(traj.energies[i]):
            info["energy"] = f"{traj.energies[i]:.17g}"
        frames.append(
            ds.Frame(list(traj.species), traj.positions[i], traj.forces[i], info=info)
        )
    return frames


def write_trajectory_extxyz(traj: Trajectory, path) -> None:
    ds.write_extxyz_file(trajectory_to_frames(traj), path)


_TRAJ_MAGIC = b"SMDTRJ1\x00"


def write_trajectory_binary(traj: Trajectory, path) -> None:
    """Fixed little-endian float64 layout for fast load of long runs."""
    n_frames, n_atoms = traj.positions.shape[:2]
    with open(path, "wb") as fh:
        fh.write(_TRAJ_MAGIC)
        fh.write(struct.pack("<II", n_frames, n_atoms))
        names = "".join(f"{s:<2s}" for s in traj.species)
        fh.write(names.encode("ascii"))
        for arr in (traj.masses, traj.times, traj.positions, traj.velocities,
                    traj.forces, traj.energies):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_trajectory_binary(path) -> Trajectory:
    blob = Path(path).read_bytes()
    if blob[: len(_TRAJ_MAGIC)] != _TRAJ_MAGIC:
        raise ValueError("not a trajectory file (bad magic)")
    off = len(_TRAJ_MAGIC)
    n_frames, n_atoms = struct.unpack_from("<II", blob, off)
    off += 8
    species = tuple(
        blob[off + 2 * i : off + 2 * i + 2].decode("ascii").strip() for i in range(n_atoms)
    )
    off += 2 * n_atoms

    def take(count, shape):
        nonlocal off
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape)
        off += 8 * count
        return arr.astype(float)

    masses = take(n_atoms, (n_atoms,))
    times = take(n_frames, (n_frames,))
    positions = take(n_frames * n_atoms * 3, (n_frames, n_atoms, 3))
    velocities = take(n_frames * n_atoms * 3, (n_frames, n_atoms, 3))
    forces = take(n_frames * n_atoms * 3, (n_frames, n_atoms, 3))
    energies = take(n_frames, (n_frames,))
    return Trajectory(species, masses, times, positions, velocities, forces, energies)
