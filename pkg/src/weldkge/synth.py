"""Synthetic welding tables with planted, recoverable structure.

Every carbody owns a contiguous block of spots and a distinct
(machine, program) pair, so carbody is predictable from context.  The
diameter class is read off the realised mean welding current: the mean is
binned on fixed equal-width edges and optionally shifted by a per-program
offset.  Dropping the current literals therefore removes the signal.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DataError
from .ingest import ColumnSpec, TableDataset, write_schema, write_table

# stage levels of the current signal relative to the spot's current level
STAGE_FACTORS = (0.6, 1.0, 0.8)


@dataclass(frozen=True)
class SynthConfig:
    n_rows: int = 2000
    n_machines: int = 18
    n_programs: int = 181
    n_carbodies: int = 613
    n_diameter_classes: int = 5
    n_components: int = 12
    noise_rate: float = 0.0
    seed: int = 0
    series_length: int = 12
    current_low: float = 6.0
    current_high: float = 12.0
    jitter: float = 0.05
    # share of programs that push the diameter one class up (0 = current only)
    program_shift_rate: float = 0.0
    diameter_base: float = 4.0
    diameter_step: float = 0.5

    def __post_init__(self):
        for name in ("n_rows", "n_machines", "n_programs", "n_carbodies", "n_components"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be positive")
        if self.n_diameter_classes < 2:
            raise DataError("need at least 2 diameter classes")
        if not 0.0 <= self.noise_rate < 1.0:
            raise DataError("noise_rate must lie in [0, 1)")
        if not 0.0 <= self.program_shift_rate <= 1.0:
            raise DataError("program_shift_rate must lie in [0, 1]")
        if self.series_length < len(STAGE_FACTORS):
            raise DataError(f"series_length must be >= {len(STAGE_FACTORS)}")
        if self.n_carbodies > self.n_rows:
            raise DataError("more carbodies than rows")
        if self.n_carbodies > self.n_machines * self.n_programs:
            raise DataError("not enough (machine, program) pairs for distinct carbody contexts")
        if not 0 < self.current_low < self.current_high:
            raise DataError("need 0 < current_low < current_high")
        if self.jitter < 0 or self.diameter_step <= 0:
            raise DataError("jitter must be >= 0 and diameter_step > 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def parse_synth_config(lines: Iterable[str]) -> SynthConfig:
    """Flat ``key = value`` lines; unknown keys are an error."""
    types = {f.name: type(f.default) for f in dataclasses.fields(SynthConfig)}
    values = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = (s.strip() for s in line.partition("="))
        if not sep or key not in types:
            raise DataError(f"synth config line {lineno}: bad entry {line!r}")
        try:
            values[key] = types[key](val)
        except ValueError:
            raise DataError(f"synth config line {lineno}: bad value {val!r} for {key}") from None
    return SynthConfig(**values)


def load_synth_config(path: str | Path) -> SynthConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_synth_config(fh)
    except OSError as exc:
        raise DataError(f"cannot read synth config {path}: {exc}") from exc


@dataclass
class GroundTruth:
    """Planted labels plus the rule that produced them."""

    config: SynthConfig
    current_edges: np.ndarray
    program_shift: np.ndarray
    spots: list[str]
    planted_class: np.ndarray
    observed_class: np.ndarray
    carbody: list[str]

    def current_bin(self, mean_current: float) -> int:
        i = int(np.searchsorted(self.current_edges, mean_current, side="right")) - 1
        return min(max(i, 0), len(self.current_edges) - 2)

    def rule(self, machine: int, program: int, current_bin: int) -> int:
        """Planted diameter class; machine is part of the signature but unused."""
        del machine
        return min(self.config.n_diameter_classes - 1, current_bin + int(self.program_shift[program]))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for s, c, b in zip(self.spots, self.planted_class.tolist(), self.carbody):
                fh.write(f"{s}\t{c}\t{b}\n")


SCHEMA = (
    ColumnSpec("spot_id", "row_id"),
    ColumnSpec("machine", "categorical"),
    ColumnSpec("program", "categorical"),
    ColumnSpec("component", "categorical"),
    ColumnSpec("current", "sensor_series", "kA"),
    ColumnSpec("voltage", "sensor_series", "V"),
    ColumnSpec("resistance", "sensor_series", "mOhm"),
    ColumnSpec("force", "numeric", "kN"),
    ColumnSpec("diameter", "target_diameter", "mm"),
    ColumnSpec("carbody", "target_carbody"),
)


def _stage_sizes(length: int, n: int) -> list[int]:
    base, extra = divmod(length, n)
    return [base + (i < extra) for i in range(n)]


def generate(config: SynthConfig) -> tuple[TableDataset, GroundTruth]:
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    K, L = cfg.n_diameter_classes, cfg.series_length
    sizes = _stage_sizes(L, len(STAGE_FACTORS))
    mean_factor = float(np.dot(sizes, STAGE_FACTORS)) / L

    # carbody contexts: distinct (machine, program) pairs and a component each
    pairs = rng.choice(cfg.n_machines * cfg.n_programs, size=cfg.n_carbodies, replace=False)
    cb_machine, cb_program = np.divmod(pairs, cfg.n_programs)
    cb_component = rng.integers(cfg.n_components, size=cfg.n_carbodies)
    block = np.repeat(np.arange(cfg.n_carbodies), _stage_sizes(cfg.n_rows, cfg.n_carbodies))

    # per (machine, program) base levels of the context sensors
    volt_base = rng.uniform(20.0, 40.0, cfg.n_machines)[:, None] + rng.uniform(-2.0, 2.0, (1, cfg.n_programs))
    res_base = rng.uniform(50.0, 150.0, cfg.n_programs)[None, :] + rng.uniform(-5.0, 5.0, (cfg.n_machines, 1))
    force_base = rng.uniform(2.0, 5.0, (cfg.n_machines, cfg.n_programs))
    program_shift = (rng.random(cfg.n_programs) < cfg.program_shift_rate).astype(np.int64)

    edges = np.linspace(cfg.current_low, cfg.current_high, K + 1) * mean_factor
    level = rng.uniform(cfg.current_low, cfg.current_high, cfg.n_rows)
    stage_profile = np.repeat(STAGE_FACTORS, sizes)
    current = level[:, None] * stage_profile[None, :] + rng.normal(0.0, cfg.jitter, (cfg.n_rows, L))
    current = np.round(current, 6)

    truth = GroundTruth(cfg, edges, program_shift, [], np.zeros(cfg.n_rows, np.int64),
                        np.zeros(cfg.n_rows, np.int64), [])
    width = len(str(cfg.n_rows - 1))
    rows = []
    for i in range(cfg.n_rows):
        cb = int(block[i])
        m, p = int(cb_machine[cb]), int(cb_program[cb])
        planted = truth.rule(m, p, truth.current_bin(float(np.mean(current[i]))))
        observed = planted
        if cfg.noise_rate and rng.random() < cfg.noise_rate:
            observed = int((planted + rng.integers(1, K)) % K)
        spot = f"s{i:0{width}d}"
        volt = volt_base[m, p] + rng.normal(0.0, cfg.jitter, L)
        res = res_base[m, p] * np.repeat([1.1, 1.0, 0.95], sizes) + rng.normal(0.0, cfg.jitter, L)
        rows.append({
            "spot_id": spot,
            "machine": f"M{m:02d}",
            "program": f"P{p:03d}",
            "component": f"C{int(cb_component[cb]):02d}",
            "current": tuple(current[i].tolist()),
            "voltage": tuple(np.round(volt, 6).tolist()),
            "resistance": tuple(np.round(res, 6).tolist()),
            "force": round(float(force_base[m, p] + rng.normal(0.0, cfg.jitter)), 6),
            "diameter": round(cfg.diameter_base + cfg.diameter_step * observed + rng.uniform(-0.02, 0.02), 6),
            "carbody": f"B{cb:03d}",
        })
        truth.spots.append(spot)
        truth.planted_class[i] = planted
        truth.observed_class[i] = observed
        truth.carbody.append(f"B{cb:03d}")
    return TableDataset(SCHEMA, tuple(rows)), truth


def write_dataset(ds: TableDataset, truth: GroundTruth, out_dir: str | Path) -> dict[str, Path]:
    """Write ``welds.csv``, ``schema.csv`` and ``truth.tsv`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"table": out / "welds.csv", "schema": out / "schema.csv", "truth": out / "truth.tsv"}
    write_table(ds, paths["table"])
    write_schema(ds.columns, paths["schema"])
    truth.save(paths["truth"])
    return paths
