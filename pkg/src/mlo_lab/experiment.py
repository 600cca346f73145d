"""Experiment sweeps: trace sourcing, calibration, paired runs and CSV output."""

from __future__ import annotations

import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .access import MODES, SLO, parse_mode
from .dcf import DEFAULT_CW
from .engine import (DEFAULT_QUEUE_CAPACITY, DELIVERY_THRESHOLD, SimConfig, compare_modes, derive_seed,
                     full_buffer_throughput, gen_poisson_arrivals, load_to_rate)
from .phy import McsConfig, PhyParams
from .stats import DelaySummary, summarize
from .traces import (DEFAULT_THRESHOLD_DBM, SAMPLES_PER_RECORD, OccupancyTrace, SynthTraceParams, bin_traces,
                     load_occupancy_traces, synthesize_onoff)

log = logging.getLogger(__name__)

CSV_HEADER = ("mode,primary_bin,secondary_bin,load,runs_retained,runs_discarded,"
              "n_packets,mean_delay_us,p95_delay_us,throughput_mbps")

# symmetric and asymmetric occupancy pairs of the latency figures
FIGURE_BIN_PAIRS = ((10, 10), (40, 40), (70, 70), (10, 40), (10, 70), (40, 70))
DEFAULT_LOADS = (0.2, 0.4, 0.6, 0.8)

# seed namespaces under the master seed
_SYNTH, _CALIB, _PAIR, _ARRIVALS, _BACKOFF, _TIEBREAK = range(6)


class SpecError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    modes: tuple = MODES
    bin_pairs: tuple = ((10, 10),)
    loads: tuple = DEFAULT_LOADS
    runs_per_point: int = 100
    master_seed: int = 0
    output: str = "results.csv"
    # trace source: dataset paths, or synthetic bins when primary_traces is unset
    primary_traces: Optional[str] = None
    secondary_traces: Optional[str] = None
    threshold_dbm: float = DEFAULT_THRESHOLD_DBM
    samples_per_record: Optional[int] = SAMPLES_PER_RECORD
    synth_mean_busy_us: float = 2000.0
    synth_traces_per_bin: int = 20
    synth_duration_us: int = 1_000_000
    synth_distribution: str = "exponential"
    calibration_traces: int = 0
    cw: int = DEFAULT_CW
    queue_capacity: Optional[int] = DEFAULT_QUEUE_CAPACITY
    str_allocation: str = "random"
    coupled: bool = True
    saturation_filter: str = "joint"
    phy: PhyParams = field(default_factory=PhyParams)
    mcs: McsConfig = field(default_factory=McsConfig)

    def __post_init__(self):
        self.modes = tuple(parse_mode(m) for m in self.modes)
        if not self.modes:
            raise SpecError("at least one mode is required")
        if self.runs_per_point < 1:
            raise SpecError("runs_per_point must be at least 1")
        for load in self.loads:
            if not 0 < load <= 1:
                raise SpecError(f"load {load} outside (0, 1]")
        for pb, sb in self.bin_pairs:
            if sb is None and any(m != SLO for m in self.modes):
                raise SpecError(f"bin pair {pb} has no secondary bin but MLO modes were requested")
        if self.saturation_filter not in ("joint", "per-mode"):
            raise SpecError("saturation_filter must be 'joint' or 'per-mode'")

    @property
    def synthetic(self) -> bool:
        return self.primary_traces is None


_PHY_KEYS = {f.name for f in fields(PhyParams)}
_MCS_KEYS = {f.name for f in fields(McsConfig)}


def _parse_pair(text: str):
    parts = [p.strip() for p in text.split(":")]
    if len(parts) == 1:
        return int(parts[0]), None
    if len(parts) == 2:
        return int(parts[0]), int(parts[1])
    raise SpecError(f"bad bin pair {text!r}")


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise SpecError(f"bad boolean {text!r}")


def _optional_int(text: str):
    return None if text.lower() in ("", "none", "unlimited", "any") else int(text)


_CONVERTERS = {
    "modes": lambda v: tuple(m.strip() for m in v.split(",") if m.strip()),
    "bin_pairs": lambda v: tuple(_parse_pair(p) for p in v.split(",") if p.strip()),
    "loads": lambda v: tuple(float(x) for x in v.split(",") if x.strip()),
    "runs_per_point": int,
    "master_seed": int,
    "output": str,
    "primary_traces": str,
    "secondary_traces": str,
    "threshold_dbm": float,
    "samples_per_record": _optional_int,
    "synth_mean_busy_us": float,
    "synth_traces_per_bin": int,
    "synth_duration_us": int,
    "synth_distribution": str,
    "calibration_traces": int,
    "cw": int,
    "queue_capacity": _optional_int,
    "str_allocation": str,
    "coupled": _parse_bool,
    "saturation_filter": str,
}


def parse_spec(text: str, base_dir: Optional[Path] = None) -> ExperimentSpec:
    """Parse a ``key = value`` experiment file. Lists are comma separated.

    Relative trace and output paths resolve against ``base_dir``.
    """
    values, phy, mcs = {}, {}, {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"line {line_no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key in _PHY_KEYS:
                phy[key] = int(value)
            elif key in _MCS_KEYS:
                mcs[key] = int(value)
            elif key in _CONVERTERS:
                values[key] = _CONVERTERS[key](value)
            else:
                raise SpecError(f"unknown key {key!r}")
        except ValueError as exc:
            raise SpecError(f"line {line_no}: {exc}") from None
    if base_dir is not None:
        for key in ("primary_traces", "secondary_traces", "output"):
            if key in values and not Path(values[key]).is_absolute():
                values[key] = str(Path(base_dir) / values[key])
    try:
        return ExperimentSpec(phy=PhyParams(**phy), mcs=McsConfig(**mcs), **values)
    except ValueError as exc:
        raise SpecError(str(exc)) from None


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    return parse_spec(path.read_text(), base_dir=path.parent)


class TraceSource:
    """Binned traces per channel role (0 = primary, 1 = secondary)."""

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self._bins: dict[tuple[int, int], list[OccupancyTrace]] = {}
        self._dataset = None

    def members(self, role: int, label: int) -> list[OccupancyTrace]:
        key = (role, label)
        if key not in self._bins:
            self._bins[key] = self._synth(role, label) if self.spec.synthetic else self._from_dataset(role, label)
        members = self._bins[key]
        if not members:
            raise SpecError(f"bin {label}% is empty on the {'primary' if role == 0 else 'secondary'} channel")
        return members

    def _synth(self, role: int, label: int) -> list[OccupancyTrace]:
        spec = self.spec
        params = SynthTraceParams(label / 100, spec.synth_mean_busy_us, spec.synth_duration_us,
                                  spec.synth_distribution, match_occupancy=True)
        return [synthesize_onoff(params, derive_seed(spec.master_seed, _SYNTH, role, label, j),
                                 label=f"synth-{role}-{label}-{j}")
                for j in range(spec.synth_traces_per_bin)]

    def _from_dataset(self, role: int, label: int) -> list[OccupancyTrace]:
        if self._dataset is None:
            spec = self.spec
            paths = [spec.primary_traces, spec.secondary_traces or spec.primary_traces]
            self._dataset = []
            for p in paths:
                traces = load_occupancy_traces(p, spec.threshold_dbm, spec.samples_per_record)
                bins, _ = bin_traces(traces)
                self._dataset.append({k: b.members for k, b in bins.items()})
        return self._dataset[role].get(label, [])


def _threads() -> int:
    raw = os.environ.get("MLO_LAB_THREADS", "1").strip() or "1"
    n = int(raw)
    if n < 0:
        raise ValueError("MLO_LAB_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def _run_point(task):
    """One run attempt: a trace pair, one arrival schedule, every mode."""
    spec, primary, secondary, rate, seeds = task
    arrivals = gen_poisson_arrivals(rate, primary.duration_us, seeds["arrivals"], spec.phy.l_frame_bits)
    results = compare_modes(primary, secondary, arrivals, spec.modes,
                            backoff_seed=seeds["backoff"], tiebreak_seed=seeds["tiebreak"],
                            coupled=spec.coupled, phy=spec.phy, mcs=spec.mcs, cw=spec.cw,
                            queue_capacity=spec.queue_capacity, str_allocation=spec.str_allocation)
    return {m: (r.delivered_fraction, r.delays_us, r.payload_bits, r.duration_us) for m, r in results.items()}


class Experiment:
    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.source = TraceSource(spec)
        self._calibration: dict[int, float] = {}

    def calibrate(self, label: int) -> float:
        """SLO full-buffer throughput (bits/s) averaged over a primary bin."""
        if label not in self._calibration:
            spec = self.spec
            members = self.source.members(0, label)
            if spec.calibration_traces > 0:
                members = members[:spec.calibration_traces]
            cfg = SimConfig(SLO, members[0], phy=spec.phy, mcs=spec.mcs, cw=spec.cw,
                            backoff_seed=derive_seed(spec.master_seed, _CALIB, label),
                            tiebreak_seed=derive_seed(spec.master_seed, _CALIB, label, 1))
            self._calibration[label] = full_buffer_throughput(SLO, cfg, members)
            log.info("bin %d%%: SLO full-buffer %.3f Mbps over %d traces",
                     label, self._calibration[label] / 1e6, len(members))
        return self._calibration[label]

    def tasks(self):
        spec = self.spec
        for pi, (pb, sb) in enumerate(spec.bin_pairs):
            prim = self.source.members(0, pb)
            sec = self.source.members(1, sb) if sb is not None else None
            throughput = self.calibrate(pb)
            for li, load in enumerate(spec.loads):
                rate = load_to_rate(load, throughput, spec.phy.l_frame_bits)
                for r in range(spec.runs_per_point):
                    rng = np.random.default_rng(derive_seed(spec.master_seed, _PAIR, pi, li, r))
                    p_trace = prim[int(rng.integers(len(prim)))]
                    s_trace = sec[int(rng.integers(len(sec)))] if sec is not None else None
                    seeds = {
                        "arrivals": derive_seed(spec.master_seed, _ARRIVALS, pi, li, r),
                        "backoff": derive_seed(spec.master_seed, _BACKOFF, pi, li, r),
                        "tiebreak": derive_seed(spec.master_seed, _TIEBREAK, pi, li, r),
                    }
                    yield (pi, li, r), (spec, p_trace, s_trace, rate, seeds)

    def run(self) -> list[DelaySummary]:
        spec = self.spec
        keyed = list(self.tasks())
        threads = _threads()
        if threads > 1 and len(keyed) > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                outcomes = list(pool.map(_run_point, [t for _, t in keyed], chunksize=4))
        else:
            outcomes = [_run_point(t) for _, t in keyed]
        by_key = {key: out for (key, _), out in zip(keyed, outcomes)}

        rows = []
        for pi, (pb, sb) in enumerate(spec.bin_pairs):
            for li, load in enumerate(spec.loads):
                runs = [by_key[(pi, li, r)] for r in range(spec.runs_per_point)]
                rows.extend(self._summarize_point(runs, pb, sb, load))
        return rows

    def _summarize_point(self, runs, pb, sb, load) -> list[DelaySummary]:
        spec = self.spec
        if spec.saturation_filter == "joint":
            keep = [all(out[m][0] >= DELIVERY_THRESHOLD for m in spec.modes) for out in runs]
        rows = []
        for mode in spec.modes:
            if spec.saturation_filter == "per-mode":
                keep = [out[mode][0] >= DELIVERY_THRESHOLD for out in runs]
            kept = [out[mode] for out, k in zip(runs, keep) if k]
            pool = [d for _, delays, _, _ in kept for d in delays]
            retained = len(kept)
            row = DelaySummary(mode, pb, sb, load, len(pool), None, None, retained, len(runs) - retained)
            if pool:
                s = summarize(pool)
                row.mean_delay_us, row.p95_delay_us = s.mean_delay_us, s.p95_delay_us
            if retained:
                bits = sum(b for _, _, b, _ in kept)
                seconds = sum(d for _, _, _, d in kept) * 1e-6
                row.throughput_mbps = bits / seconds / 1e6
            if row.warning:
                log.warning("%s bins %s/%s load %g: no delivered packets in retained runs", mode, pb, sb, load)
            rows.append(row)
        return rows


def run_experiment(spec: ExperimentSpec) -> list[DelaySummary]:
    return Experiment(spec).run()


def _fmt(value, spec: str) -> str:
    return "" if value is None else format(value, spec)


def format_rows(rows: list[DelaySummary]) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(",".join((
            r.mode,
            str(r.primary_bin_pct),
            "" if r.secondary_bin_pct is None else str(r.secondary_bin_pct),
            format(r.load_fraction, "g"),
            str(r.runs_retained),
            str(r.runs_discarded),
            str(r.n_packets),
            _fmt(r.mean_delay_us, ".3f"),
            _fmt(r.p95_delay_us, "d"),
            _fmt(r.throughput_mbps, ".4f"),
        )))
    return "\n".join(lines) + "\n"


def write_atomic(path, text: str):
    """Write via a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def sweep_spec(spec: ExperimentSpec) -> ExperimentSpec:
    """Expand a spec to the full figure grid: all modes, six bin pairs, four loads."""
    return replace(spec, modes=MODES, bin_pairs=FIGURE_BIN_PAIRS, loads=DEFAULT_LOADS)
