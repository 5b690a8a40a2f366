"""Grid/field data model shared by the solver, the models, and the metrics.

A field sample is a two-channel 2-D image of the melt-track cross-section:
temperature in kelvin and condensed-phase fluid fraction in [0, 1], on a
uniform square mesh. This module owns the mesh geometry, the cell-wise
normalization statistics used for model training, the bicubic resampling
baseline, and the on-disk field container format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

CHANNELS = ("temperature", "fluid_fraction")

AMBIENT_K = 298.0


class FieldFormatError(Exception):
    """Raised when a field file is truncated, corrupt, or inconsistent."""


@dataclass(frozen=True)
class MeshSpec:
    """Uniform square mesh for a cross-section window.

    ``element_size_um`` is the cell edge length; the window spans exactly
    ``element_size_um * width_cells`` by ``element_size_um * height_cells``
    micrometers. ``origin_um`` is the physical coordinate of the top-left
    cell center (x along laser travel, z downward from the substrate
    surface).
    """

    element_size_um: float
    width_cells: int
    height_cells: int
    origin_um: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.element_size_um > 0:
            raise ValueError(f"element_size_um must be > 0, got {self.element_size_um}")
        if self.width_cells < 2 or self.height_cells < 2:
            raise ValueError(
                f"mesh needs at least 2x2 cells, got {self.width_cells}x{self.height_cells}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        """(rows, cols) = (height_cells, width_cells)."""
        return (self.height_cells, self.width_cells)

    @property
    def width_um(self) -> float:
        return self.element_size_um * self.width_cells

    @property
    def height_um(self) -> float:
        return self.element_size_um * self.height_cells

    def refined(self, factor: int) -> "MeshSpec":
        """Mesh covering the same window with ``factor``x smaller cells."""
        if factor < 1 or int(factor) != factor:
            raise ValueError(f"refinement factor must be a positive integer, got {factor}")
        return replace(
            self,
            element_size_um=self.element_size_um / factor,
            width_cells=self.width_cells * factor,
            height_cells=self.height_cells * factor,
        )


def _as_grid(arr, mesh: MeshSpec, name: str) -> np.ndarray:
    a = np.ascontiguousarray(arr, dtype=np.float32)
    if a.shape != mesh.shape:
        raise ValueError(f"{name} grid shape {a.shape} does not match mesh {mesh.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FieldSample:
    """One cross-section snapshot: temperature (K) and fluid fraction grids.

    Grids are float32, row-major, row 0 at the undisturbed substrate surface
    and depth increasing downward. Instances are immutable and safe to share
    across threads.
    """

    mesh: MeshSpec
    temperature: np.ndarray
    fluid_fraction: np.ndarray
    time_us: float = 0.0
    process: "object | None" = None  # solver.ProcessParams when attached

    def __post_init__(self):
        object.__setattr__(self, "temperature", _as_grid(self.temperature, self.mesh, "temperature"))
        object.__setattr__(
            self, "fluid_fraction", _as_grid(self.fluid_fraction, self.mesh, "fluid_fraction")
        )
        if np.any(self.temperature < 0):
            raise ValueError("temperature grid has negative entries")
        ff = self.fluid_fraction
        if np.any(ff < 0) or np.any(ff > 1):
            raise ValueError("fluid_fraction grid must lie in [0, 1]")

    def channel(self, name: str) -> np.ndarray:
        if name not in CHANNELS:
            raise KeyError(f"unknown channel {name!r}, expected one of {CHANNELS}")
        return getattr(self, name)

    def with_grids(self, temperature=None, fluid_fraction=None) -> "FieldSample":
        return replace(
            self,
            temperature=self.temperature if temperature is None else temperature,
            fluid_fraction=self.fluid_fraction if fluid_fraction is None else fluid_fraction,
        )


@dataclass(frozen=True)
class SamplePair:
    """A coarse/fine pair of the same physical window at the same time."""

    lf: FieldSample
    hf: FieldSample

    def __post_init__(self):
        f = self.factor
        if self.hf.mesh.element_size_um * f != self.lf.mesh.element_size_um:
            raise ValueError("hf element size times upscale factor must equal lf element size")
        if (
            abs(self.lf.mesh.width_um - self.hf.mesh.width_um) > 1e-6
            or abs(self.lf.mesh.height_um - self.hf.mesh.height_um) > 1e-6
        ):
            raise ValueError("lf and hf windows must cover the identical physical region")

    @property
    def factor(self) -> int:
        f = self.lf.mesh.element_size_um / self.hf.mesh.element_size_um
        fi = int(round(f))
        if fi < 1 or abs(f - fi) > 1e-9:
            raise ValueError(f"lf/hf element size ratio {f} is not an integer upscale factor")
        return fi


@dataclass(frozen=True)
class NormalizationStats:
    """Cell-wise mean/std for one channel, computed over a training set.

    The std grid is clamped from below by ``epsilon`` so that far-field cells
    that never vary do not blow up the normalized values.
    """

    mean: np.ndarray
    std: np.ndarray
    epsilon: float
    channel: str

    def __post_init__(self):
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        std = np.ascontiguousarray(self.std, dtype=np.float64)
        if mean.shape != std.shape:
            raise ValueError("mean and std grids must share a shape")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if np.any(std < self.epsilon):
            raise ValueError("std grid must be clamped at epsilon")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


def compute_norm_stats(
    samples: Sequence[FieldSample], channel: str, epsilon: float = 1.0
) -> NormalizationStats:
    """Cell-wise population mean/std of one channel over ``samples``.

    All samples must share one mesh and there must be at least two of them;
    the std grid is clamped from below by ``epsilon``.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError(f"need at least 2 samples for statistics, got {len(samples)}")
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    mesh = samples[0].mesh
    for s in samples[1:]:
        if s.mesh != mesh:
            raise ValueError(f"mesh mismatch among samples: {s.mesh} vs {mesh}")
    stack = np.stack([s.channel(channel) for s in samples]).astype(np.float64)
    mean = stack.mean(axis=0)
    std = stack.std(axis=0)  # population convention (ddof=0)
    std = np.maximum(std, epsilon)
    return NormalizationStats(mean=mean, std=std, epsilon=epsilon, channel=channel)


def normalize(sample: FieldSample, stats: NormalizationStats) -> np.ndarray:
    """(value - mean) / std, cell-wise, for the stats' channel."""
    grid = sample.channel(stats.channel)
    if grid.shape != stats.mean.shape:
        raise ValueError(f"field shape {grid.shape} does not match stats {stats.mean.shape}")
    return ((grid - stats.mean) / stats.std).astype(np.float32)


def denormalize(grid: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """Inverse of :func:`normalize`: value * std + mean."""
    grid = np.asarray(grid)
    if grid.shape != stats.mean.shape:
        raise ValueError(f"grid shape {grid.shape} does not match stats {stats.mean.shape}")
    return (grid.astype(np.float64) * stats.std + stats.mean).astype(np.float32)


# --- bicubic resampling ----------------------------------------------------

def _catmull_rom_weights(t: np.ndarray) -> np.ndarray:
    """Weights of the 4 taps (-1, 0, 1, 2) of the Keys a=-1/2 cubic kernel."""
    t2 = t * t
    t3 = t2 * t
    w0 = 0.5 * (-t3 + 2.0 * t2 - t)
    w1 = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0)
    w2 = 0.5 * (-3.0 * t3 + 4.0 * t2 + t)
    w3 = 0.5 * (t3 - t2)
    return np.stack([w0, w1, w2, w3], axis=-1)


def _cubic_axis_interp(grid: np.ndarray, n_out: int, factor: int) -> np.ndarray:
    """Catmull-Rom interpolation along the last axis, clamp-to-edge."""
    n_in = grid.shape[-1]
    # cell-centered alignment: output center j maps to input coordinate
    x = (np.arange(n_out) + 0.5) / factor - 0.5
    base = np.floor(x).astype(int)
    t = x - base
    w = _catmull_rom_weights(t)  # (n_out, 4)
    idx = np.clip(base[:, None] + np.arange(-1, 3)[None, :], 0, n_in - 1)  # (n_out, 4)
    taps = np.take(grid, idx, axis=-1)  # (..., n_out, 4)
    return np.einsum("...ok,ok->...o", taps.astype(np.float64), w)


def bicubic_upsample(sample: FieldSample, factor: int) -> FieldSample:
    """Catmull-Rom bicubic upsampling of both channels to a ``factor``x
    finer mesh over the same physical window. Edges are clamped; the fluid
    fraction is re-clipped to [0, 1] after interpolation (the cubic kernel
    overshoots at sharp steps).
    """
    if factor < 2:
        raise ValueError(f"upsampling factor must be >= 2, got {factor}")
    if int(factor) != factor:
        raise ValueError(f"upsampling factor must be an integer, got {factor}")
    mesh_out = sample.mesh.refined(int(factor))

    def up(grid):
        g = _cubic_axis_interp(grid, mesh_out.width_cells, factor)
        g = _cubic_axis_interp(np.swapaxes(g, 0, 1), mesh_out.height_cells, factor)
        return np.swapaxes(g, 0, 1)

    temp = np.maximum(up(sample.temperature), 0.0).astype(np.float32)
    ff = np.clip(up(sample.fluid_fraction), 0.0, 1.0).astype(np.float32)
    return FieldSample(
        mesh=mesh_out,
        temperature=temp,
        fluid_fraction=ff,
        time_us=sample.time_us,
        process=sample.process,
    )


# --- on-disk container -----------------------------------------------------
#
# Layout: one UTF-8 JSON header line (mesh, time, process, channel list,
# payload byte count) terminated by '\n', followed by the raw row-major
# little-endian float32 payloads concatenated in header channel order.

_MAGIC = "meltpool-field-v1"


def write_field(path, sample: FieldSample) -> None:
    header = {
        "format": _MAGIC,
        "mesh": {
            "element_size_um": sample.mesh.element_size_um,
            "width_cells": sample.mesh.width_cells,
            "height_cells": sample.mesh.height_cells,
            "origin_um": list(sample.mesh.origin_um),
        },
        "time_us": sample.time_us,
        "process": _process_to_dict(sample.process),
        "channels": list(CHANNELS),
        "payload_bytes": 4 * len(CHANNELS) * sample.mesh.width_cells * sample.mesh.height_cells,
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode("utf-8"))
        f.write(b"\n")
        for name in CHANNELS:
            grid = np.ascontiguousarray(sample.channel(name), dtype="<f4")
            f.write(grid.tobytes())


def read_field(path) -> FieldSample:
    with open(path, "rb") as f:
        header_line = f.readline()
        if not header_line.endswith(b"\n"):
            raise FieldFormatError(f"{path}: missing header terminator")
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FieldFormatError(f"{path}: bad JSON header: {e}") from e
        if header.get("format") != _MAGIC:
            raise FieldFormatError(f"{path}: not a {_MAGIC} file")
        try:
            m = header["mesh"]
            mesh = MeshSpec(
                element_size_um=m["element_size_um"],
                width_cells=m["width_cells"],
                height_cells=m["height_cells"],
                origin_um=tuple(m["origin_um"]),
            )
            channels = header["channels"]
            payload_bytes = header["payload_bytes"]
        except (KeyError, TypeError, ValueError) as e:
            raise FieldFormatError(f"{path}: malformed header: {e}") from e
        if list(channels) != list(CHANNELS):
            raise FieldFormatError(f"{path}: unsupported channel list {channels}")
        expected = 4 * len(CHANNELS) * mesh.width_cells * mesh.height_cells
        if payload_bytes != expected:
            raise FieldFormatError(
                f"{path}: header payload_bytes {payload_bytes} != mesh size {expected}"
            )
        payload = f.read(payload_bytes + 1)
        if len(payload) != payload_bytes:
            raise FieldFormatError(
                f"{path}: payload length {len(payload)} != declared {payload_bytes}"
            )
    n = mesh.width_cells * mesh.height_cells
    grids = {}
    for i, name in enumerate(CHANNELS):
        flat = np.frombuffer(payload, dtype="<f4", count=n, offset=4 * n * i)
        grids[name] = flat.reshape(mesh.shape)
    return FieldSample(
        mesh=mesh,
        temperature=grids["temperature"],
        fluid_fraction=grids["fluid_fraction"],
        time_us=header["time_us"],
        process=_process_from_dict(header.get("process")),
    )


def _process_to_dict(process) -> dict | None:
    if process is None:
        return None
    return {
        "power_w": process.power_w,
        "velocity_mm_s": process.velocity_mm_s,
        "radius_um": process.radius_um,
        "duration_us": process.duration_us,
        "interval_us": process.interval_us,
    }


def _process_from_dict(d):
    if d is None:
        return None
    from .solver import ProcessParams  # lazy: solver imports this module

    return ProcessParams(
        power_w=d["power_w"],
        velocity_mm_s=d["velocity_mm_s"],
        radius_um=d["radius_um"],
        duration_us=d["duration_us"],
        interval_us=d["interval_us"],
    )
