"""Training data: extended-XYZ IO and the analytic water surrogate.

The surrogate potential is a harmonic bond + harmonic angle model,

    E = k_bond * [(r1 - r0)^2 + (r2 - r0)^2] + k_angle * (theta - theta0)^2

with analytic forces. It stands in for an ab-initio labeler at desk scale:
generated frames are perturbed around the equilibrium geometry, posed rigidly
at random, and labeled with the surrogate's forces.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ExtxyzError(ValueError):
    """Malformed extended-XYZ input; carries the offending 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class Frame:
    species: list[str]
    positions: np.ndarray  # (N, 3) Angstrom
    forces: np.ndarray | None = None  # (N, 3) eV/Angstrom
    cell: np.ndarray | None = None  # (3, 3) Angstrom
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.shape != (len(self.species), 3):
            raise ValueError("positions must be (N, 3) matching species")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("positions must be finite")
        if self.forces is not None:
            self.forces = np.asarray(self.forces, dtype=float)
            if self.forces.shape != self.positions.shape:
                raise ValueError("forces must shape-match positions")
        if self.cell is not None:
            self.cell = np.asarray(self.cell, dtype=float)
            if self.cell.shape != (3, 3):
                raise ValueError("cell must be 3x3")


# ---------------------------------------------------------------------------
# Extended XYZ


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _split_comment(line: str) -> dict[str, str]:
    """Tokenize key=value pairs, honoring double quotes around values."""
    out: dict[str, str] = {}
    i, n = 0, len(line)
    while i < n:
        while i < n and line[i].isspace():
            i += 1
        if i >= n:
            break
        j = line.find("=", i)
        if j < 0:
            break  # bare token, ignore
        key = line[i:j]
        i = j + 1
        if i < n and line[i] == '"':
            k = line.find('"', i + 1)
            if k < 0:
                k = n
            out[key] = line[i + 1 : k]
            i = k + 1
        else:
            k = i
            while k < n and not line[k].isspace():
                k += 1
            out[key] = line[i:k]
            i = k
    return out


_KNOWN_PROPS = {"species": ("S", 1), "pos": ("R", 3), "forces": ("R", 3)}


def parse_extxyz(text: str) -> list[Frame]:
    """Parse one or more extended-XYZ frames from a string."""
    lines = text.splitlines()
    frames: list[Frame] = []
    i = 0
    while i < len(lines):
        if lines[i].strip() == "" and all(l.strip() == "" for l in lines[i:]):
            break  # trailing blank lines
        count_line = i + 1
        try:
            natoms = int(lines[i].strip())
        except ValueError:
            raise ExtxyzError(f"malformed atom count {lines[i].strip()!r}", count_line)
        if natoms < 1:
            raise ExtxyzError(f"atom count must be positive, got {natoms}", count_line)
        if i + 1 >= len(lines):
            raise ExtxyzError("missing comment line", count_line + 1)
        info = _split_comment(lines[i + 1])
        props = info.pop("Properties", "species:S:1:pos:R:3")
        cell = None
        if "Lattice" in info:
            vals = info.pop("Lattice").split()
            if len(vals) != 9:
                raise ExtxyzError("Lattice must hold 9 numbers", count_line + 1)
            cell = np.array([float(v) for v in vals]).reshape(3, 3)
        columns = []
        toks = props.split(":")
        if len(toks) % 3 != 0:
            raise ExtxyzError(f"malformed Properties spec {props!r}", count_line + 1)
        for name, kind, width in zip(toks[0::3], toks[1::3], toks[2::3]):
            if name not in _KNOWN_PROPS or _KNOWN_PROPS[name] != (kind, int(width)):
                raise ExtxyzError(f"unknown property column {name}:{kind}:{width}", count_line + 1)
            columns.append((name, int(width)))
        ncols = sum(w for _, w in columns)

        species: list[str] = []
        pos = np.zeros((natoms, 3))
        forces = np.zeros((natoms, 3)) if any(n == "forces" for n, _ in columns) else None
        for a in range(natoms):
            li = i + 2 + a
            if li >= len(lines) or lines[li].strip() == "":
                raise ExtxyzError(f"truncated frame at line {li + 1}", li + 1)
            parts = lines[li].split()
            if len(parts) != ncols:
                raise ExtxyzError(
                    f"expected {ncols} columns, got {len(parts)}", li + 1
                )
            c = 0
            for name, width in columns:
                vals = parts[c : c + width]
                c += width
                if name == "species":
                    species.append(vals[0])
                    continue
                try:
                    nums = [float(v) for v in vals]
                except ValueError:
                    raise ExtxyzError(f"non-numeric field in column {name!r}", li + 1)
                if name == "pos":
                    pos[a] = nums
                else:
                    forces[a] = nums
        frames.append(Frame(species, pos, forces, cell, info))
        i += 2 + natoms
    return frames


def write_extxyz(frames: list[Frame]) -> str:
    """Serialize frames losslessly (17 significant digits)."""
    chunks = []
    for fr in frames:
        props = "species:S:1:pos:R:3"
        if fr.forces is not None:
            props += ":forces:R:3"
        comment = []
        if fr.cell is not None:
            comment.append('Lattice="' + " ".join(_fmt(v) for v in fr.cell.ravel()) + '"')
        comment.append(f"Properties={props}")
        for k, v in fr.info.items():
            v = str(v)
            comment.append(f'{k}="{v}"' if " " in v else f"{k}={v}")
        rows = [str(len(fr.species)), " ".join(comment)]
        for a, sym in enumerate(fr.species):
            cols = [sym] + [_fmt(x) for x in fr.positions[a]]
            if fr.forces is not None:
                cols += [_fmt(x) for x in fr.forces[a]]
            rows.append(" ".join(cols))
        chunks.append("\n".join(rows))
    return "\n".join(chunks) + "\n"


def read_extxyz_file(path) -> list[Frame]:
    return parse_extxyz(Path(path).read_text())


def write_extxyz_file(frames: list[Frame], path) -> None:
    Path(path).write_text(write_extxyz(frames))


# ---------------------------------------------------------------------------
# Surrogate water potential


@dataclass(frozen=True)
class SurrogateParams:
    r0: float = 0.969  # Angstrom
    theta0: float = 104.88  # degrees
    k_bond: float = 48.0  # eV/A^2
    k_angle: float = 3.6  # eV/rad^2

    def __post_init__(self):
        if min(self.r0, self.theta0, self.k_bond, self.k_angle) <= 0:
            raise ValueError("surrogate parameters must be positive")


_COINCIDENT_TOL = 1e-8


def surrogate_water(positions: np.ndarray, params: SurrogateParams = SurrogateParams()):
    """Energy (eV) and analytic forces (eV/A) for an O,H,H geometry."""
    pos = np.asarray(positions, dtype=float)
    if pos.shape != (3, 3):
        raise ValueError("expected positions of shape (3, 3), atoms ordered O,H,H")
    d1 = pos[1] - pos[0]
    d2 = pos[2] - pos[0]
    r1 = float(np.linalg.norm(d1))
    r2 = float(np.linalg.norm(d2))
    if r1 < _COINCIDENT_TOL or r2 < _COINCIDENT_TOL:
        raise ValueError("coincident O/H positions: bond direction undefined")
    u1 = d1 / r1
    u2 = d2 / r2
    c = float(np.clip(u1 @ u2, -1.0, 1.0))
    s = math.sqrt(max(1.0 - c * c, 0.0))
    if s < 1e-12:
        raise ValueError("collinear O-H-H geometry: angle gradient undefined")
    theta = math.acos(c)
    theta0 = math.radians(params.theta0)

    energy = params.k_bond * ((r1 - params.r0) ** 2 + (r2 - params.r0) ** 2)
    energy += params.k_angle * (theta - theta0) ** 2

    # bond gradients
    g1 = 2.0 * params.k_bond * (r1 - params.r0) * u1
    g2 = 2.0 * params.k_bond * (r2 - params.r0) * u2
    # angle gradient: dtheta/dH1 = (c*u1 - u2) / (r1 * sin(theta))
    pref = 2.0 * params.k_angle * (theta - theta0)
    g1 = g1 + pref * (c * u1 - u2) / (r1 * s)
    g2 = g2 + pref * (c * u2 - u1) / (r2 * s)

    forces = np.empty((3, 3))
    forces[1] = -g1
    forces[2] = -g2
    forces[0] = -(forces[1] + forces[2])  # translation invariance, exact
    return energy, forces


# ---------------------------------------------------------------------------
# Dataset generation


@dataclass
class Dataset:
    frames: list[Frame]
    train_indices: list[int]
    test_indices: list[int]
    params: SurrogateParams
    seed: int
    amplitude: float

    @property
    def train_frames(self) -> list[Frame]:
        return [self.frames[i] for i in self.train_indices]

    @property
    def test_frames(self) -> list[Frame]:
        return [self.frames[i] for i in self.test_indices]

    def manifest(self) -> dict:
        return {
            "n_frames": len(self.frames),
            "seed": self.seed,
            "amplitude": self.amplitude,
            "params": {
                "r0": self.params.r0,
                "theta0": self.params.theta0,
                "k_bond": self.params.k_bond,
                "k_angle": self.params.k_angle,
            },
            "train_indices": list(self.train_indices),
            "test_indices": list(self.test_indices),
        }


def water_geometry(r1: float, r2: float, theta_rad: float) -> np.ndarray:
    """Canonical O,H,H coordinates: O at origin, molecule in the xy plane."""
    half = theta_rad / 2.0
    return np.array(
        [
            [0.0, 0.0, 0.0],
            [r1 * math.sin(half), r1 * math.cos(half), 0.0],
            [-r2 * math.sin(half), r2 * math.cos(half), 0.0],
        ]
    )


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def generate_dataset(
    params: SurrogateParams = SurrogateParams(),
    n: int = 1000,
    amplitude: float = 0.1,
    seed: int = 0,
) -> Dataset:
    """Sample n labeled frames around equilibrium and split them 80/20.

    Bond lengths are jittered uniformly by +-amplitude (Angstrom) and the
    angle by the arc-equivalent +-amplitude/r0 (radians); each molecule is
    then posed with a random rigid rotation and translation. Randomness is
    per-frame counter-based, so generation is deterministic given the seed
    regardless of evaluation order.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    theta0 = math.radians(params.theta0)
    dtheta = amplitude / params.r0
    frames = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        r1 = params.r0 + rng.uniform(-amplitude, amplitude)
        r2 = params.r0 + rng.uniform(-amplitude, amplitude)
        th = theta0 + rng.uniform(-dtheta, dtheta)
        pos = water_geometry(r1, r2, th)
        rot = _random_rotation(rng)
        shift = rng.uniform(-5.0, 5.0, size=3)
        pos = pos @ rot.T + shift
        energy, forces = surrogate_water(pos, params)
        frames.append(
            Frame(["O", "H", "H"], pos, forces, info={"energy": _fmt(energy)})
        )
    n_test = n // 5
    train_idx = list(range(n - n_test))
    test_idx = list(range(n - n_test, n))
    return Dataset(frames, train_idx, test_idx, params, seed, amplitude)


def write_dataset(ds: Dataset, outdir) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_extxyz_file(ds.train_frames, outdir / "train.extxyz")
    write_extxyz_file(ds.test_frames, outdir / "test.extxyz")
    (outdir / "manifest.json").write_text(json.dumps(ds.manifest(), indent=1, sort_keys=True))


def load_dataset(datadir) -> Dataset:
    """Rehydrate a dataset written by write_dataset."""
    datadir = Path(datadir)
    manifest = json.loads((datadir / "manifest.json").read_text())
    train = read_extxyz_file(datadir / "train.extxyz")
    test = read_extxyz_file(datadir / "test.extxyz")
    params = SurrogateParams(**manifest["params"])
    frames = train + test
    return Dataset(
        frames=frames,
        train_indices=list(range(len(train))),
        test_indices=list(range(len(train), len(frames))),
        params=params,
        seed=manifest["seed"],
        amplitude=manifest["amplitude"],
    )
