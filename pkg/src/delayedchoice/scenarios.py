"""Named experiments that regenerate the data behind each figure.

A :class:`ScenarioSpec` fixes a base configuration, one swept parameter and
the engine(s) to run.  :func:`run_scenario` returns every series plus a
provenance block from which the run can be repeated exactly, and
:func:`emit` writes them as CSV files with a JSON sidecar.
"""

from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, montecarlo as mc
from .analysis import (
    FitError,
    fit_exponential_decay,
    fit_sinusoid,
    visibility_from_fringe,
    write_series,
)
from .evolution import FringeScan, detection_probability, fringe, mode_overlap, visibility_analytic
from .model import (
    InterferometerConfig,
    MemoryBeamSplitter,
    QrngMode,
    QrngSpec,
    as_dict,
    config_from_flat,
    flatten,
    parameter_names,
    set_parameter,
    validate,
)
from .model import DEFAULT_PACKET_1, DEFAULT_PACKET_2

__all__ = [
    "ScenarioName",
    "Engine",
    "Sweep",
    "ScenarioSpec",
    "PointResult",
    "Series",
    "ScenarioResult",
    "ScenarioError",
    "default_spec",
    "run_scenario",
    "emit",
    "spec_from_provenance",
]

# Reference parameters of each scenario.
FIG2_N = 611
FIG2_ETA1, FIG2_ETA1_CON, FIG2_ETA2 = 0.133, 0.850, 0.24
FIG2_XI_NOMINAL = (0.0, 0.25, 0.5, 0.75, 1.0)
FIG2_XI_FITTED = (0.01, 0.24, 0.53, 0.74, 0.96)
FIG3_N = 568
FIG3_ETA1, FIG3_ETA1_CON = 0.122, 0.850
FIG3_ETA2 = (0.331, 0.259, 0.114, 0.015, 0.0)
FIG4_STORAGE_TIMES = tuple(float(t) for t in range(160, 281, 20))
FIG5_ETA1, FIG5_ETA1_CON = 0.132, 0.88
FIG5B_TARGETS = {
    # reference (A, T, g0) decay parameters
    "mbs1": (503.0, 420.0, 58.0),
    "mbs2": (457.0, 893.0, 51.0),
    "interferometer": (304.0, 691.0, 32.0),
}
FIG5B_STORAGE_TIMES = tuple(float(t) for t in range(0, 3001, 200))
FIG5C_OD = tuple(float(x) for x in range(0, 41, 5))
PANELS = "abcdefghijklmnopqrstuvwxyz"


class ScenarioError(ValueError):
    """Unknown scenario name or invalid sweep."""


class ScenarioName(str, enum.Enum):
    FIG1D = "fig1d"
    FIG2 = "fig2"
    FIG3 = "fig3"
    FIG4 = "fig4"
    FIG5A = "fig5a"
    FIG5B = "fig5b"
    FIG5C = "fig5c"


class Engine(str, enum.Enum):
    ANALYTIC = "analytic"
    MONTECARLO = "montecarlo"
    BOTH = "both"

    @property
    def analytic(self) -> bool:
        return self is not Engine.MONTECARLO

    @property
    def montecarlo(self) -> bool:
        return self is not Engine.ANALYTIC


def default_phase_grid() -> tuple[float, ...]:
    return tuple(k * math.pi / 4 for k in range(9))


@dataclass(frozen=True)
class Sweep:
    parameter: str
    values: tuple[float, ...]
    labels: tuple[str, ...] = ()

    def label(self, k: int) -> str:
        return self.labels[k] if self.labels else PANELS[k] if k < len(PANELS) else f"p{k}"


@dataclass(frozen=True)
class ScenarioSpec:
    name: ScenarioName
    base_config: InterferometerConfig
    sweep: Sweep
    engine: Engine = Engine.ANALYTIC
    trials_per_point: int = 100_000
    seed: int = 2019
    phase_grid: tuple[float, ...] = field(default_factory=default_phase_grid)
    N: float = FIG2_N
    zeta: complex | None = 1.0  # None: quadrature overlap of the configured packets
    workers: int = 1
    bin_width: float = 2.0


@dataclass
class PointResult:
    label: str
    value: float
    analytic: FringeScan | None = None
    montecarlo: FringeScan | None = None
    expected: np.ndarray | None = None
    summary: dict = field(default_factory=dict)


@dataclass
class Series:
    name: str
    columns: dict
    comment: str = ""


@dataclass
class ScenarioResult:
    spec: ScenarioSpec
    points: list
    series: list
    summary: dict
    provenance: dict


def _figure_config(eta1: float, eta1_con: float, eta2: float, xi: float = 1.0,
                   mode: QrngMode = QrngMode.AMPLITUDE, **kwargs) -> InterferometerConfig:
    return InterferometerConfig(
        mbs1=MemoryBeamSplitter.from_total(eta1_con, eta1, retrieved_packet=DEFAULT_PACKET_1),
        mbs2=MemoryBeamSplitter.from_total(0.5, eta2, retrieved_packet=DEFAULT_PACKET_2),
        qrng=QrngSpec(xi, mode),
        **kwargs,
    )


def default_spec(name, engine: Engine | str = Engine.ANALYTIC, *, trials: int = 100_000,
                 seed: int = 2019, qrng_mode: QrngMode | str | None = None, workers: int = 1,
                 xi_set: str = "fitted") -> ScenarioSpec:
    """Scenario with the reference parameters for figure ``name``.

    ``xi_set`` chooses whether the QRNG sweep uses the fitted or the nominal
    duty-cycle values; both are recorded in the sidecar.
    """
    try:
        name = ScenarioName(str(getattr(name, "value", name)).lower())
    except ValueError:
        raise ScenarioError(f"unknown scenario {name!r}") from None
    engine = Engine(getattr(engine, "value", engine))
    mode = QrngMode(getattr(qrng_mode, "value", qrng_mode)) if qrng_mode else QrngMode.AMPLITUDE
    common = dict(engine=engine, trials_per_point=trials, seed=seed, workers=workers)

    if name is ScenarioName.FIG1D:
        cfg = _figure_config(FIG2_ETA1, FIG2_ETA1_CON, FIG2_ETA2, mode=mode)
        return ScenarioSpec(name, cfg, Sweep("qrng.xi", (1.0, 0.0), ("inserted", "removed")), **common)
    if name is ScenarioName.FIG2:
        if xi_set not in ("fitted", "nominal"):
            raise ScenarioError(f"xi_set must be 'fitted' or 'nominal', not {xi_set!r}")
        values = FIG2_XI_FITTED if xi_set == "fitted" else FIG2_XI_NOMINAL
        cfg = _figure_config(FIG2_ETA1, FIG2_ETA1_CON, FIG2_ETA2, mode=mode)
        return ScenarioSpec(name, cfg, Sweep("qrng.xi", values), **common)
    if name is ScenarioName.FIG3:
        cfg = _figure_config(FIG3_ETA1, FIG3_ETA1_CON, FIG3_ETA2[0], mode=mode)
        return ScenarioSpec(name, cfg, Sweep("mbs2.eta_total", FIG3_ETA2), N=FIG3_N, **common)
    if name is ScenarioName.FIG4:
        cfg = _figure_config(FIG2_ETA1, FIG2_ETA1_CON, FIG2_ETA2, mode=mode)
        return ScenarioSpec(name, cfg, Sweep("mbs2.storage_time", FIG4_STORAGE_TIMES),
                            zeta=None, **common)
    if name is ScenarioName.FIG5A:
        cfg = _figure_config(FIG5_ETA1, FIG5_ETA1_CON, FIG3_ETA2[0], mode=mode)
        return ScenarioSpec(name, cfg, Sweep("eom_phase", (0.0, math.pi), ("0", "pi")), **common)
    if name is ScenarioName.FIG5B:
        cfg = _figure_config(FIG5_ETA1, FIG5_ETA1_CON, FIG3_ETA2[0], mode=mode)
        cfg = replace(cfg, mbs1=replace(cfg.mbs1, coherence_time_T1=FIG5B_TARGETS["mbs1"][1]),
                      mbs2=replace(cfg.mbs2, coherence_time_T1=FIG5B_TARGETS["mbs2"][1]))
        return ScenarioSpec(name, cfg, Sweep("mbs1.storage_time", FIG5B_STORAGE_TIMES), **common)
    cfg = _figure_config(FIG5_ETA1, FIG5_ETA1_CON, 0.0, mode=mode)
    return ScenarioSpec(name, cfg, Sweep("od", FIG5C_OD), **common)


def _kind(name: ScenarioName) -> str:
    return {ScenarioName.FIG5A: "timing", ScenarioName.FIG5B: "decay"}.get(name, "fringe")


def check_spec(spec: ScenarioSpec) -> ScenarioSpec:
    if not isinstance(spec.name, ScenarioName):
        raise ScenarioError(f"unknown scenario {spec.name!r}")
    validate(spec.base_config)
    if spec.sweep.parameter not in parameter_names(spec.base_config):
        raise ScenarioError(f"sweep parameter {spec.sweep.parameter!r} does not exist in the config")
    if not spec.sweep.values:
        raise ScenarioError("sweep has no values")
    if spec.sweep.labels and len(spec.sweep.labels) != len(spec.sweep.values):
        raise ScenarioError("sweep labels and values differ in length")
    if spec.engine.montecarlo and spec.trials_per_point <= 0:
        raise ScenarioError("trials_per_point must be positive for Monte Carlo runs")
    if _kind(spec.name) == "fringe":
        grid = np.asarray(spec.phase_grid, dtype=float)
        if grid.size == 0 or np.any(np.diff(grid) <= 0):
            raise ScenarioError("phase grid must be nonempty and strictly increasing")
    if _kind(spec.name) == "decay" and spec.sweep.parameter != "mbs1.storage_time":
        raise ScenarioError("decay scenarios sweep mbs1.storage_time")
    for v in spec.sweep.values:
        try:
            validate(set_parameter(spec.base_config, spec.sweep.parameter, v))
        except (ValueError, KeyError) as exc:
            raise ScenarioError(f"invalid sweep value {v!r}: {exc}") from exc
    return spec


def _fit_summary(scan: FringeScan, prefix: str) -> dict:
    out = {}
    try:
        fit = fit_sinusoid(scan)
    except FitError as exc:
        return {f"{prefix}_fit_error": str(exc)}
    out[f"{prefix}_fit"] = {
        "amplitude": fit.amplitude, "phase0": fit.phase0, "offset": fit.offset,
        "residual_norm": fit.residual_norm, "uncertainties": fit.parameter_uncertainties,
    }
    if np.any(scan.values > 0):
        out[f"{prefix}_visibility_fit"] = visibility_from_fringe(scan, fit)
    return out


def _fringe_point(spec: ScenarioSpec, k: int) -> PointResult:
    value = spec.sweep.values[k]
    cfg = set_parameter(spec.base_config, spec.sweep.parameter, value)
    zeta = mode_overlap(cfg) if spec.zeta is None else complex(spec.zeta)
    phases = np.asarray(spec.phase_grid, dtype=float)
    pt = PointResult(spec.sweep.label(k), float(value))
    pt.summary = {
        "label": pt.label, "value": pt.value, "zeta": [zeta.real, zeta.imag],
        "visibility_analytic": visibility_analytic(cfg, zeta=zeta),
    }
    if spec.sweep.parameter == "od":
        pt.summary["eta2"] = cfg.mbs2.eta_total
    if spec.engine.analytic:
        pt.analytic = fringe(cfg, phases, spec.N, zeta=zeta)
        pt.summary.update(_fit_summary(pt.analytic, "analytic"))
    if spec.engine.montecarlo:
        seed = mc.SeedSpec(spec.seed).derive(spec.name.value, k)
        res = mc.run_experiment(cfg, phases, spec.trials_per_point, seed, zeta=zeta,
                                bin_width=spec.bin_width)
        pt.montecarlo = res.scan
        pt.expected = res.expected
        sigma = np.sqrt(res.expected * (1.0 - res.expected / spec.trials_per_point))
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(sigma > 0, (res.scan.values - res.expected) / sigma, 0.0)
        ens = replace(cfg, qrng=replace(cfg.qrng, mode=QrngMode.ENSEMBLE))
        pt.summary.update(_fit_summary(res.scan, "montecarlo"))
        pt.summary["visibility_ensemble"] = visibility_analytic(ens, zeta=zeta)
        pt.summary["montecarlo_max_abs_z"] = float(np.max(np.abs(z)))
        pt.summary["montecarlo_signal_counts"] = res.signal_counts.tolist()
        pt.summary["montecarlo_dark_counts"] = res.dark_counts.tolist()
    return pt


def _timing_point(spec: ScenarioSpec, k: int):
    value = spec.sweep.values[k]
    cfg = set_parameter(spec.base_config, spec.sweep.parameter, value)
    zeta = mode_overlap(cfg) if spec.zeta is None else complex(spec.zeta)
    label = spec.sweep.label(k)
    series = []
    summary = {"label": label, "value": float(value),
               "detection_probability": float(detection_probability(cfg, value, zeta))}
    if spec.engine.analytic:
        edges, expected = mc.expected_histogram(cfg, value, spec.trials_per_point,
                                                spec.bin_width, zeta=zeta)
        series.append(Series(f"phi{label}_analytic", {
            "time_ns": 0.5 * (edges[1:] + edges[:-1]), "expected_counts": expected}))
        summary["analytic_total"] = float(expected.sum())
    if spec.engine.montecarlo:
        seed = mc.SeedSpec(spec.seed).derive(spec.name.value, k)
        res = mc.run_experiment(cfg, [value], spec.trials_per_point, seed, zeta=zeta,
                                bin_width=spec.bin_width)
        h = res.phase_histograms[0]
        series.append(Series(f"phi{label}_montecarlo", {
            "time_ns": 0.5 * (h.bin_edges[1:] + h.bin_edges[:-1]), "counts": h.counts}))
        summary["montecarlo_total"] = int(h.counts.sum())
    return series, summary


def _decay_fit_summary(t, y, target) -> dict:
    out = {"reference": dict(zip(("A", "T", "g0"), FIG5B_TARGETS[target]))}
    try:
        f = fit_exponential_decay(list(zip(t, y)))
        out["fit"] = {"A": f.A, "T": f.T, "g0": f.g0, "residual_norm": f.residual_norm,
                      "uncertainties": f.parameter_uncertainties}
    except FitError as exc:
        out["fit_error"] = str(exc)
    return out


def _decay_target(spec: ScenarioSpec, k: int):
    target = list(FIG5B_TARGETS)[k]
    t = np.asarray(spec.sweep.values, dtype=float)
    series = []
    summary = {"target": target}
    if spec.engine.analytic:
        y = np.array([spec.trials_per_point * mc.expected_detection_fraction(
            mc.decoherence_config(spec.base_config, ti, target), 0.0, spec.zeta) for ti in t])
        series.append(Series(f"{target}_analytic", {"storage_time_ns": t, "expected_counts": y}))
        summary["analytic"] = _decay_fit_summary(t, y, target)
    if spec.engine.montecarlo:
        seed = mc.SeedSpec(spec.seed).derive(spec.name.value)
        pts = mc.decoherence_scan(spec.base_config, t, spec.trials_per_point, seed,
                                  target=target, zeta=spec.zeta)
        y = np.array([c for _, c in pts], dtype=np.int64)
        series.append(Series(f"{target}_montecarlo", {"storage_time_ns": t, "counts": y}))
        summary["montecarlo"] = _decay_fit_summary(t, y, target)
    return series, summary


def _map(spec: ScenarioSpec, fn, n: int) -> list:
    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            return list(pool.map(lambda k: fn(spec, k), range(n)))
    return [fn(spec, k) for k in range(n)]


def _fringe_series(spec: ScenarioSpec, points: list) -> list:
    if spec.name is ScenarioName.FIG4:
        cols = {
            "storage_time_ns": [p.value for p in points],
            "overlap_abs": [math.hypot(*p.summary["zeta"]) for p in points],
            "visibility_analytic": [p.summary["visibility_analytic"] for p in points],
        }
    elif spec.name is ScenarioName.FIG5C:
        cols = {
            "od": [p.value for p in points],
            "eta2": [p.summary["eta2"] for p in points],
            "visibility_analytic": [p.summary["visibility_analytic"] for p in points],
        }
    else:
        return []
    if spec.engine.montecarlo:
        cols["visibility_montecarlo"] = [p.summary.get("montecarlo_visibility_fit", math.nan)
                                         for p in points]
    return [Series("profile" if spec.name is ScenarioName.FIG4 else "visibility", cols)]


def provenance(spec: ScenarioSpec) -> dict:
    z = spec.zeta
    return {
        "scenario": spec.name.value,
        "engine": spec.engine.value,
        "seed": spec.seed,
        "trials_per_point": spec.trials_per_point,
        "phase_grid_rad": list(spec.phase_grid),
        "sweep": {"parameter": spec.sweep.parameter, "values": list(spec.sweep.values),
                  "labels": list(spec.sweep.labels)},
        "N": float(spec.N),
        "zeta": None if z is None else [complex(z).real, complex(z).imag],
        "bin_width_ns": spec.bin_width,
        "config": as_dict(spec.base_config),
        "package_version": __version__,
    }


def spec_from_provenance(prov: dict, workers: int = 1) -> ScenarioSpec:
    """Rebuild the exact :class:`ScenarioSpec` recorded in a sidecar."""
    z = prov.get("zeta")
    return ScenarioSpec(
        name=ScenarioName(prov["scenario"]),
        base_config=config_from_flat(flatten(prov["config"])),
        sweep=Sweep(prov["sweep"]["parameter"], tuple(prov["sweep"]["values"]),
                    tuple(prov["sweep"].get("labels", ()))),
        engine=Engine(prov["engine"]),
        trials_per_point=int(prov["trials_per_point"]),
        seed=int(prov["seed"]),
        phase_grid=tuple(prov["phase_grid_rad"]),
        N=float(prov["N"]),
        zeta=None if z is None else complex(z[0], z[1]),
        workers=workers,
        bin_width=float(prov.get("bin_width_ns", 2.0)),
    )


def run_scenario(spec: ScenarioSpec) -> ScenarioResult:
    check_spec(spec)
    kind = _kind(spec.name)
    points, series = [], []
    summary: dict = {"points": []}
    if kind == "fringe":
        points = _map(spec, _fringe_point, len(spec.sweep.values))
        summary["points"] = [p.summary for p in points]
        series = _fringe_series(spec, points)
    elif kind == "timing":
        for s, summ in _map(spec, _timing_point, len(spec.sweep.values)):
            series.extend(s)
            summary["points"].append(summ)
    else:
        for s, summ in _map(spec, _decay_target, len(FIG5B_TARGETS)):
            series.extend(s)
            summary["points"].append(summ)
    if spec.name is ScenarioName.FIG2:
        summary["xi_nominal"] = list(FIG2_XI_NOMINAL)
        summary["xi_fitted"] = list(FIG2_XI_FITTED)
    if spec.name is ScenarioName.FIG5C:
        summary["note"] = "V(OD) uses the saturating od_to_efficiency map, a modeling choice"
    return ScenarioResult(spec, points, series, summary, provenance(spec))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


FRINGE_COMMENT = "phase_rad: EOM phase in radians; counts: detections per phase point"


def emit(result: ScenarioResult, path, fmt: str = "csv") -> list[Path]:
    """Write every series as CSV plus ``<name>_provenance.json``.

    Returns the written paths, data files first.
    """
    if fmt != "csv":
        raise ValueError(f"unsupported format {fmt!r}")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    name = result.spec.name.value
    written = []
    for p in result.points:
        if p.analytic is not None:
            f = out / f"{name}_{p.label}_analytic.csv"
            write_series(f, {"phase_rad": p.analytic.phases, "expected_counts": p.analytic.values},
                         comment=f"{FRINGE_COMMENT}\n{result.spec.sweep.parameter} = {p.value!r}")
            written.append(f)
        if p.montecarlo is not None:
            f = out / f"{name}_{p.label}_montecarlo.csv"
            write_series(f, {"phase_rad": p.montecarlo.phases,
                             "counts": p.montecarlo.values.astype(np.int64),
                             "expected_counts": p.expected},
                         comment=f"{FRINGE_COMMENT}\n{result.spec.sweep.parameter} = {p.value!r}")
            written.append(f)
    for s in result.series:
        f = out / f"{name}_{s.name}.csv"
        write_series(f, s.columns, comment=s.comment or None)
        written.append(f)
    if not written:
        f = out / f"{name}_empty.csv"
        write_series(f, {"x": [], "y": []})
        written.append(f)
    sidecar = out / f"{name}_provenance.json"
    doc = {"provenance": result.provenance, "results": result.summary,
           "files": [p.name for p in written],
           "kernel_backend": mc.BACKEND}
    sidecar.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(sidecar)
    return written
