"""Procedural synthetic motion generation and benchmark manifests.

Motions are built from smooth sinusoid-driven local joint angles composed
down the joint tree, at a fixed 60 Hz frame rate.  The vocabulary covers
upper-body-informative motions (arm-swing, reach) and lower-body-heavy
ones (walk, squat).  'reach' deliberately decouples the measured wrist
orientation from the elbow flexion (the flexion amount is a per-sequence
latent), so the wrist *location* is the only disambiguating signal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import rot6d
from .measurement import MeasurementSet, extract_measurements
from .skeleton import PoseSequence, Skeleton, scale_skeleton

FRAME_HZ = 60.0
MOTION_KINDS = ("idle-sway", "walk", "arm-swing", "squat", "reach")
MAX_AMPLITUDE = 1.5

# Bone index groups for body-variation presets.
ARM_BONES = (13, 14, 16, 17, 18, 19, 20, 21)
TORSO_BONES = (3, 6, 9, 12, 15)
UPPER_BONES = tuple(sorted(ARM_BONES + TORSO_BONES))
LOWER_BONES = (1, 2, 4, 5, 7, 8, 10, 11)


class PresetError(ValueError):
    """Malformed or inconsistent body-variation preset."""


@dataclass
class MotionSpec:
    kind: str
    frames: int
    hz: float = FRAME_HZ
    amplitude: float = 1.0
    frequency: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MOTION_KINDS:
            raise ValueError(f"unknown motion kind {self.kind!r}")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if not 0.0 <= self.amplitude <= MAX_AMPLITUDE:
            raise ValueError(f"amplitude out of safe range [0, {MAX_AMPLITUDE}]")


def _rot(axis: str, angle):
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    out = np.zeros(angle.shape + (3, 3))
    i = "xyz".index(axis)
    j, k = (i + 1) % 3, (i + 2) % 3
    out[..., i, i] = 1.0
    out[..., j, j] = c
    out[..., k, k] = c
    out[..., j, k] = -s
    out[..., k, j] = s
    return out


def generate_motion(spec: MotionSpec, skeleton: Skeleton) -> PoseSequence:
    """Deterministic smooth pose sequence for a motion spec."""
    rng = np.random.default_rng(spec.seed)
    F = spec.frames
    tau = np.arange(F) / spec.hz
    phi = 2.0 * np.pi * spec.frequency * tau
    a = spec.amplitude
    n = skeleton.joint_count

    local = np.broadcast_to(np.eye(3), (F, n, 3, 3)).copy()
    root = np.zeros((F, 3))
    root[:, 1] = 0.95

    def set_local(j, axis, angle):
        local[:, j] = _rot(axis, angle)

    if spec.kind == "idle-sway":
        set_local(9, "z", 0.12 * a * np.sin(phi))
        set_local(12, "x", 0.08 * a * np.sin(phi + 0.5))
        set_local(16, "z", -0.10 * a * np.sin(phi + 0.2))
        set_local(17, "z", 0.10 * a * np.sin(phi + 0.2))
    elif spec.kind == "walk":
        swing = 0.5 * a * np.sin(phi)
        set_local(1, "x", swing)
        set_local(2, "x", -swing)
        set_local(4, "x", 0.35 * a * (1.0 - np.cos(phi - np.pi / 2)))
        set_local(5, "x", 0.35 * a * (1.0 - np.cos(phi + np.pi / 2)))
        set_local(16, "x", -0.35 * a * np.sin(phi))
        set_local(17, "x", 0.35 * a * np.sin(phi))
        set_local(18, "z", -0.15 * a * (1.0 + np.sin(phi)))
        set_local(19, "z", 0.15 * a * (1.0 + np.sin(phi)))
        set_local(3, "y", 0.08 * a * np.sin(phi))
        root[:, 0] = 0.9 * tau
        root[:, 1] += 0.02 * a * np.cos(2.0 * phi)
    elif spec.kind == "arm-swing":
        set_local(16, "x", 0.7 * a * np.sin(phi))
        set_local(17, "x", 0.7 * a * np.sin(phi + np.pi))
        set_local(18, "z", -0.4 * a * (1.0 - np.cos(phi)) / 2.0)
        set_local(19, "z", 0.4 * a * (1.0 - np.cos(phi)) / 2.0)
        set_local(12, "y", 0.06 * a * np.sin(phi))
    elif spec.kind == "squat":
        dip = (1.0 - np.cos(phi)) / 2.0
        set_local(1, "x", -0.8 * a * dip)
        set_local(2, "x", -0.8 * a * dip)
        set_local(4, "x", 1.2 * a * dip)
        set_local(5, "x", 1.2 * a * dip)
        set_local(7, "x", -0.4 * a * dip)
        set_local(8, "x", -0.4 * a * dip)
        set_local(3, "x", 0.25 * a * dip)
        root[:, 1] -= 0.25 * a * dip
    elif spec.kind == "reach":
        # Latent flexion follows a smooth per-frame random walk; the wrist
        # orientation is pinned to a constant below, so only the wrist
        # location reveals it, and it cannot be read off a long time average.
        rho = np.exp(-1.0 / 12.0)
        z = np.empty(F)
        z[0] = rng.standard_normal()
        xi = rng.standard_normal(F)
        for k in range(1, F):
            z[k] = rho * z[k - 1] + np.sqrt(1.0 - rho**2) * xi[k]
        flex = a * (0.55 + 0.35 * np.tanh(z))
        sh = 0.9 * flex
        local[:, 16] = _rot("z", np.full(F, -0.25 * a)) @ _rot("x", -sh)
        local[:, 17] = _rot("z", np.full(F, 0.25 * a)) @ _rot("x", -sh)
        set_local(18, "z", -1.2 * flex)
        set_local(19, "z", 1.2 * flex)
        set_local(9, "y", 0.05 * a * np.sin(phi))

    # compose local angles into global rotations down the tree
    R = np.empty_like(local)
    R[:, 0] = local[:, 0]
    for j in range(1, n):
        R[:, j] = R[:, skeleton.parents[j]] @ local[:, j]

    if spec.kind == "reach":
        # leaf joints: overwriting their global rotation changes no location
        wiggle = _rot("y", 0.1 * np.sin(phi + 1.0))
        for leaf in (15, 20, 21):
            R[:, leaf] = wiggle
    return PoseSequence(rot6d.to_sixdof(R), root)


def parse_preset(preset: str) -> tuple[np.ndarray, bool]:
    """Preset string -> (per-bone factors, is_uniform).

    Vocabulary: ``uniform:<s>``, ``upper:<s>``, ``arms:<s>``, ``torso:<s>``,
    and comma-combinations such as ``arms:1.4,torso:0.7``.
    """
    factors = np.ones(22)
    uniform = False
    for part in preset.split(","):
        name, _, value = part.strip().partition(":")
        try:
            s = float(value)
        except ValueError:
            raise PresetError(f"bad preset component {part!r}")
        if s <= 0.0:
            raise PresetError("scale factors must be positive")
        if name == "uniform":
            factors[:] = s
            uniform = True
        elif name == "upper":
            factors[list(UPPER_BONES)] = s
        elif name == "arms":
            factors[list(ARM_BONES)] = s
        elif name == "torso":
            factors[list(TORSO_BONES)] = s
        else:
            raise PresetError(f"unknown preset part {name!r}")
    return factors, uniform


def scale_ground_truth(poses: PoseSequence, skeleton: Skeleton, preset: str):
    """Rebuild ground truth for a body-variation preset.

    Rotations are scale-free and never change.  Uniform presets scale both
    the bones and the root translation; upper-body presets keep the lower
    body and the root translation fixed.
    """
    factors, uniform = parse_preset(preset)
    if not uniform and np.any(factors[list(LOWER_BONES)] != 1.0):
        raise PresetError(
            "non-uniform preset must leave the lower body unchanged (root translation is kept)"
        )
    new_skel = scale_skeleton(skeleton, factors)
    if uniform:
        root = poses.root_translation * factors[1]
    else:
        root = poses.root_translation.copy()
    return PoseSequence(poses.rotations.copy(), root), new_skel


# -- pose sequence serialization -------------------------------------------

_MAGIC = b"PGSEQ"
_VERSION = 1


def save_sequence(path, obj) -> None:
    """Lossless store of a PoseSequence (binary) or MeasurementSet (JSON lines)."""
    if isinstance(obj, MeasurementSet):
        obj.save(path)
        return
    header = json.dumps({"version": _VERSION, "frames": obj.frames, "joints": obj.joint_count})
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(header).to_bytes(4, "little"))
        fh.write(header.encode())
        fh.write(np.ascontiguousarray(obj.rotations, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(obj.root_translation, dtype="<f8").tobytes())


def load_sequence(path):
    """Load whatever :func:`save_sequence` wrote at ``path``."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            return MeasurementSet.load(path)
        hlen = int.from_bytes(fh.read(4), "little")
        header = json.loads(fh.read(hlen).decode())
        if header["version"] != _VERSION:
            raise ValueError(f"unsupported sequence version {header['version']}")
        F, J = header["frames"], header["joints"]
        if F < 1:
            raise ValueError("empty sequence")
        body = fh.read()
    need = F * J * 6 * 8 + F * 3 * 8
    if len(body) != need:
        raise ValueError(f"truncated file: {len(body)} bytes, expected {need}")
    rot = np.frombuffer(body[: F * J * 6 * 8], dtype="<f8").reshape(F, J, 6)
    root = np.frombuffer(body[F * J * 6 * 8 :], dtype="<f8").reshape(F, 3)
    bad = np.argwhere(~np.isfinite(rot))
    if len(bad):
        f, j = bad[0][0], bad[0][1]
        raise ValueError(f"non-finite rotation at frame {f}, joint {j}")
    if not np.isfinite(root).all():
        f = int(np.argwhere(~np.isfinite(root))[0][0])
        raise ValueError(f"non-finite root translation at frame {f}")
    return PoseSequence(rot.copy(), root.copy())


# -- benchmark manifests ----------------------------------------------------

@dataclass
class BenchmarkCell:
    motion: MotionSpec
    preset: str = "uniform:1.0"
    sigma_l: float = 0.0
    sigma_r: float = 0.0
    seed: int = 0

    def name(self) -> str:
        preset = self.preset.replace(":", "").replace(",", "_").replace(".", "p")
        return (
            f"{self.motion.kind}_f{self.motion.frames}_m{self.motion.seed}"
            f"_{preset}_sl{self.sigma_l:g}_sr{self.sigma_r:g}_s{self.seed}"
        )


@dataclass
class BenchmarkManifest:
    cells: list

    @staticmethod
    def from_json(text: str) -> "BenchmarkManifest":
        doc = json.loads(text)
        cells = []
        for c in doc["cells"]:
            cells.append(
                BenchmarkCell(
                    motion=MotionSpec(**c["motion"]),
                    preset=c.get("preset", "uniform:1.0"),
                    sigma_l=c.get("sigma_l", 0.0),
                    sigma_r=c.get("sigma_r", 0.0),
                    seed=c.get("seed", 0),
                )
            )
        return BenchmarkManifest(cells)

    def to_json(self) -> str:
        return json.dumps(
            {"cells": [{"motion": asdict(c.motion), "preset": c.preset, "sigma_l": c.sigma_l,
                        "sigma_r": c.sigma_r, "seed": c.seed} for c in self.cells]},
            indent=2,
        )

    @staticmethod
    def load(path) -> "BenchmarkManifest":
        with open(path) as fh:
            return BenchmarkManifest.from_json(fh.read())


def expand_cell(cell: BenchmarkCell, skeleton: Skeleton):
    """Materialize one manifest cell: (truth poses, cell skeleton, measurements)."""
    poses = generate_motion(cell.motion, skeleton)
    poses, cell_skel = scale_ground_truth(poses, skeleton, cell.preset)
    meas = extract_measurements(poses, cell_skel, cell.sigma_l, cell.sigma_r, seed=cell.seed)
    return poses, cell_skel, meas


def write_cells(manifest: BenchmarkManifest, skeleton: Skeleton, out_dir) -> dict:
    """Expand every cell into files under ``out_dir``; returns the manifest lock."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lock = {"cells": []}
    for cell in manifest.cells:
        cell_dir = out / cell.name()
        cell_dir.mkdir(exist_ok=True)
        poses, cell_skel, meas = expand_cell(cell, skeleton)
        save_sequence(cell_dir / "truth.pgseq", poses)
        save_sequence(cell_dir / "measurements.jsonl", meas)
        cell_skel.save(cell_dir / "skeleton.json")
        lock["cells"].append(
            {"name": cell.name(), "preset": cell.preset, "sigma_l": cell.sigma_l,
             "sigma_r": cell.sigma_r, "seed": cell.seed, "motion": asdict(cell.motion)}
        )
    with open(out / "manifest-lock.json", "w") as fh:
        json.dump(lock, fh, indent=2)
    return lock
