"""Experiment configuration, orchestration and output emission.

Configurations are YAML (or JSON) documents::

    name: fig2
    kind: sweep1d            # trace | sweep1d | sweep2d | ellipse | compare
    system:                  # quoted laboratory numbers
      omega0_hz: 29.4e3
      gamma_ba_hz: 1300
      gamma_th_hz: 66.2
      gamma_hz: 0.31e-6
      q_effort: 1.08e-6      # seconds
      g0_rel: 0.2            # g0 / Omega0
      g1_over_abs_g0: 0.25   # or g1_rel = g1 / Omega0
      eta: 0.5
      omega_c_rel: 2.0       # Omega_c / Omega_minus
      theta_epr: pi
      rate_convention: angular
    integrator: {samples_per_period: 256}
    sweep:
      axes:
        - {name: eta, min: 0.1, max: 1.0, count: 19}
    quantities: [cond_numeric, uncond_numeric, cond_analytic, uncond_analytic]
    outputs: {directory: out, formats: [csv], plot: true}
    workers: 1
    seed: 0

Sweep axes name keys of the ``system`` section.  For ``sweep1d`` every axis
is an independent one-dimensional sweep (one table per axis); ``sweep2d``
takes exactly two axes, the first along x.
"""

from __future__ import annotations

import json
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .analytics import (
    OutsideWindow,
    analytic_conditional_negativity,
    analytic_excess_noise,
    axis_angle,
    closed_form_negativity,
    common_mode_approx,
    conditional_cov_approx,
    cross_correlation_lag,
    determinant_fixed_point,
    floquet_monodromy,
    lambda2_closed_form,
    mathieu_model,
    mode_vectors,
    noise_ellipse,
    resonance_window,
    static_differential_approx,
)
from .conditional import IntegratorConfig, find_periodic_steady_state, mean_trajectory
from .control import lqr_cost_eval, periodic_excess_noise, solve_are_gain
from .entanglement import InconsistentBlocks, log_negativity_series, period_average
from .linalg import RiccatiError
from .ode import IntegrationError
from .params import CovBlock, ParameterError, SystemParams
from .timeseries import fmt

KINDS = ("trace", "sweep1d", "sweep2d", "ellipse", "compare")
QUANTITIES = ("cond_numeric", "uncond_numeric", "cond_analytic", "uncond_analytic")
FORMATS = ("csv", "json")
OUT_ENV = "PARAMENT_OUT"

_SYSTEM_REQUIRED = ("omega0_hz", "gamma_ba_hz", "gamma_th_hz", "gamma_hz", "q_effort", "g0_rel", "eta")
_SYSTEM_OPTIONAL = {
    "g1_rel": None,
    "g1_over_abs_g0": None,
    "omega_c_rel": 2.0,
    "theta_epr": math.pi,
    "rate_convention": "angular",
}
_TOP_KEYS = {
    "name", "kind", "system", "integrator", "sweep", "quantities", "excess_drift",
    "outputs", "workers", "seed", "monte_carlo",
}


class ConfigError(ValueError):
    """Schema violation; ``path`` names the offending key."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


# -- schema ---------------------------------------------------------------------


@dataclass(frozen=True)
class SweepAxis:
    name: str
    min: float
    max: float
    count: int
    scale: str = "linear"

    def values(self):
        if self.scale == "log":
            return np.geomspace(self.min, self.max, self.count)
        return np.linspace(self.min, self.max, self.count)


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    formats: tuple = ("csv",)
    plot: bool = False


@dataclass(frozen=True)
class MonteCarloConfig:
    trajectories: int = 0
    periods: int = 20


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    kind: str
    system_spec: dict
    system: SystemParams
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    axes: tuple = ()
    quantities: tuple = QUANTITIES
    excess_drift: str = "full"
    outputs: OutputConfig = field(default_factory=OutputConfig)
    workers: int = 1
    seed: int = 0
    monte_carlo: MonteCarloConfig = field(default_factory=MonteCarloConfig)

    def with_overrides(self, **changes):
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return ExperimentConfig(**data)

    def output_dir(self):
        return Path(self.outputs.directory)


_PI_RE = re.compile(r"^\s*([-+]?\d*\.?\d*(?:[eE][-+]?\d+)?)\s*\*?\s*pi\s*$")


def _number(value, path):
    if isinstance(value, bool):
        raise ConfigError(path, "expected a number")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _PI_RE.match(value)
        if m:
            coef = m.group(1)
            coef = 1.0 if coef in ("", "+") else -1.0 if coef == "-" else float(coef)
            return coef * math.pi
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigError(path, f"expected a number, got {value!r}")


def _mapping(value, path):
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(path, "expected a mapping")
    return value


def _reject_unknown(d, allowed, path):
    for k in d:
        if k not in allowed:
            where = f"{path}.{k}" if path else str(k)
            raise ConfigError(where, "unknown key")


def normalize_system(spec) -> dict:
    """Validate a ``system`` section and fill defaults (numbers as floats)."""
    spec = _mapping(spec, "system")
    _reject_unknown(spec, set(_SYSTEM_REQUIRED) | set(_SYSTEM_OPTIONAL), "system")
    out = {}
    for k in _SYSTEM_REQUIRED:
        if k not in spec:
            raise ConfigError(f"system.{k}", "missing required key")
        out[k] = _number(spec[k], f"system.{k}")
    for k, default in _SYSTEM_OPTIONAL.items():
        v = spec.get(k, default)
        if k == "rate_convention":
            if v not in ("angular", "bare"):
                raise ConfigError("system.rate_convention", "must be 'angular' or 'bare'")
            out[k] = v
        elif v is not None:
            out[k] = _number(v, f"system.{k}")
    if "g1_rel" in out and "g1_over_abs_g0" in out:
        raise ConfigError("system.g1_rel", "give either g1_rel or g1_over_abs_g0, not both")
    if "g1_rel" not in out and "g1_over_abs_g0" not in out:
        out["g1_rel"] = 0.0
    if not 0 < out["eta"] <= 1:
        raise ConfigError("system.eta", f"must satisfy 0 < eta <= 1, got {out['eta']}")
    for k in ("gamma_ba_hz", "gamma_th_hz", "gamma_hz", "g1_rel", "g1_over_abs_g0"):
        if k in out and out[k] < 0:
            raise ConfigError(f"system.{k}", "must be non-negative")
    for k in ("omega0_hz", "q_effort", "omega_c_rel"):
        if not out[k] > 0:
            raise ConfigError(f"system.{k}", "must be positive")
    if not 1 + 4 * out["g0_rel"] > 0:
        raise ConfigError("system.g0_rel", "differential mode unstable (1 + 4 g0/Omega0 <= 0)")
    return out


def build_system(spec: dict) -> SystemParams:
    """SystemParams from a normalized ``system`` section."""
    g1 = spec.get("g1_rel")
    if g1 is None:
        g1 = spec["g1_over_abs_g0"] * abs(spec["g0_rel"])
    try:
        return SystemParams.from_lab(
            omega0_hz=spec["omega0_hz"],
            gamma_ba_hz=spec["gamma_ba_hz"],
            gamma_th_hz=spec["gamma_th_hz"],
            gamma_hz=spec["gamma_hz"],
            q_effort=spec["q_effort"],
            g0_rel=spec["g0_rel"],
            g1_rel=g1,
            eta=spec["eta"],
            omega_c_rel=spec["omega_c_rel"],
            theta_epr=spec["theta_epr"],
            rate_convention=spec["rate_convention"],
        )
    except ParameterError as exc:
        raise ConfigError("system", str(exc)) from exc


def with_axis_value(spec: dict, name, value) -> dict:
    """Copy of a system section with one swept key replaced."""
    out = dict(spec)
    if name == "g1_rel":
        out.pop("g1_over_abs_g0", None)
    elif name == "g1_over_abs_g0":
        out.pop("g1_rel", None)
    out[name] = float(value)
    return normalize_system(out)


def _integrator(d):
    d = _mapping(d, "integrator")
    allowed = {f.name for f in fields(IntegratorConfig)}
    _reject_unknown(d, allowed, "integrator")
    kw = {}
    for k, v in d.items():
        if k in ("samples_per_period", "max_periods"):
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"integrator.{k}", "expected an integer")
            kw[k] = v
        else:
            kw[k] = _number(v, f"integrator.{k}")
    try:
        return IntegratorConfig(**kw)
    except ValueError as exc:
        raise ConfigError("integrator", str(exc)) from exc


def _axes(d, kind, system_spec):
    d = _mapping(d, "sweep")
    _reject_unknown(d, {"axes"}, "sweep")
    raw = d.get("axes", [])
    if not isinstance(raw, list):
        raise ConfigError("sweep.axes", "expected a list")
    axes = []
    for i, a in enumerate(raw):
        path = f"sweep.axes[{i}]"
        a = _mapping(a, path)
        _reject_unknown(a, {"name", "min", "max", "count", "scale"}, path)
        for k in ("name", "min", "max", "count"):
            if k not in a:
                raise ConfigError(f"{path}.{k}", "missing required key")
        name = a["name"]
        if name not in _SYSTEM_REQUIRED and name not in _SYSTEM_OPTIONAL or name == "rate_convention":
            raise ConfigError(f"{path}.name", f"{name!r} is not a numeric system parameter")
        count = a["count"]
        if isinstance(count, bool) or not isinstance(count, int) or count < 2:
            raise ConfigError(f"{path}.count", "sweep counts must be integers >= 2")
        scale = a.get("scale", "linear")
        if scale not in ("linear", "log"):
            raise ConfigError(f"{path}.scale", "must be 'linear' or 'log'")
        lo, hi = _number(a["min"], f"{path}.min"), _number(a["max"], f"{path}.max")
        if scale == "log" and not (lo > 0 and hi > 0):
            raise ConfigError(path, "log axes need positive bounds")
        axis = SweepAxis(name, lo, hi, count, scale)
        for edge in (lo, hi):
            try:
                with_axis_value(system_spec, name, edge)
            except ConfigError as exc:
                raise ConfigError(path, f"bound {edge} gives invalid parameters ({exc})") from exc
        axes.append(axis)
    if kind == "sweep1d" and not axes:
        raise ConfigError("sweep.axes", "sweep1d needs at least one axis")
    if kind == "sweep2d" and len(axes) != 2:
        raise ConfigError("sweep.axes", "sweep2d needs exactly two axes")
    return tuple(axes)


def _outputs(d):
    d = _mapping(d, "outputs")
    _reject_unknown(d, {"directory", "formats", "plot"}, "outputs")
    directory = d.get("directory", "out")
    if not isinstance(directory, str) or not directory:
        raise ConfigError("outputs.directory", "expected a path")
    formats = d.get("formats", ["csv"])
    if isinstance(formats, str):
        formats = [formats]
    for f in formats:
        if f not in FORMATS:
            raise ConfigError("outputs.formats", f"unknown format {f!r}")
    plot = d.get("plot", False)
    if not isinstance(plot, bool):
        raise ConfigError("outputs.plot", "expected true or false")
    return OutputConfig(directory, tuple(formats), plot)


def parse_config(data, source="<config>") -> ExperimentConfig:
    data = _mapping(data, "")
    _reject_unknown(data, _TOP_KEYS, "")
    for k in ("kind", "system"):
        if k not in data:
            raise ConfigError(k, "missing required key")
    kind = data["kind"]
    if kind not in KINDS:
        raise ConfigError("kind", f"must be one of {', '.join(KINDS)}")
    name = data.get("name", Path(source).stem)
    if not isinstance(name, str) or not re.fullmatch(r"[A-Za-z0-9_.-]+", name):
        raise ConfigError("name", "use letters, digits, '.', '_' or '-'")
    spec = normalize_system(data["system"])
    system = build_system(spec)
    quantities = data.get("quantities", list(QUANTITIES))
    if not isinstance(quantities, list):
        raise ConfigError("quantities", "expected a list")
    for q in quantities:
        if q not in QUANTITIES:
            raise ConfigError("quantities", f"unknown quantity {q!r}")
    drift = data.get("excess_drift", "full")
    if drift not in ("full", "static"):
        raise ConfigError("excess_drift", "must be 'full' or 'static'")
    workers = data.get("workers", 1)
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers", "expected an integer >= 1")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed", "expected an unsigned 64-bit integer")
    mc = _mapping(data.get("monte_carlo"), "monte_carlo")
    _reject_unknown(mc, {"trajectories", "periods"}, "monte_carlo")
    for k, v in mc.items():
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise ConfigError(f"monte_carlo.{k}", "expected a non-negative integer")
    return ExperimentConfig(
        name=name,
        kind=kind,
        system_spec=spec,
        system=system,
        integrator=_integrator(data.get("integrator")),
        axes=_axes(data.get("sweep"), kind, spec),
        quantities=tuple(quantities),
        excess_drift=drift,
        outputs=_outputs(data.get("outputs")),
        workers=workers,
        seed=seed,
        monte_carlo=MonteCarloConfig(**mc),
    )


def preset_names():
    base = resources.files("parament") / "presets"
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".yaml"))


def preset_text(name):
    path = resources.files("parament") / "presets" / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError("", f"unknown preset {name!r} (available: {', '.join(preset_names())})")
    return path.read_text()


def load_config(path_or_preset) -> ExperimentConfig:
    """Load a YAML/JSON file, or a built-in preset when no such file exists."""
    path = Path(path_or_preset)
    if path.is_file():
        text = path.read_text()
        source = str(path)
    else:
        text = preset_text(str(path_or_preset))
        source = str(path_or_preset)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"cannot parse {source}: {exc}") from exc
    return parse_config(data, source)


# -- single point evaluation -------------------------------------------------------


@dataclass
class PointEvaluation:
    """Everything computed for one parameter set over one drive period."""

    params: SystemParams
    t: np.ndarray
    periodic: object = None
    gain: object = None
    excess: object = None
    model: object = None
    blocks: dict = field(default_factory=dict)
    en: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.flags

    def status(self):
        return "ok" if self.ok else ";".join(self.flags)


def _exact_resonance(p, rtol=1e-9):
    return p.g1 > 0 and abs(p.omega_c - 2 * p.omega_minus) <= rtol * p.omega_minus


def evaluate_point(p: SystemParams, icfg=None, quantities=QUANTITIES, drift="full") -> PointEvaluation:
    """Numeric and analytic covariances and E_N(t) over one period.

    Failures are recorded in ``flags``; quantities that could not be formed
    are NaN.
    """
    icfg = icfg or IntegratorConfig()
    quantities = set(quantities)
    n = icfg.samples_per_period + 1
    nan = np.full(n, np.nan)
    ev = PointEvaluation(p, p.period * np.linspace(0.0, 1.0, n))
    for key in ("cond_numeric", "uncond_numeric", "cond_analytic", "uncond_analytic", "closed_form"):
        ev.en[key] = nan.copy()
    try:
        sol = find_periodic_steady_state(p, icfg)
    except (IntegrationError, RiccatiError) as exc:
        ev.flags.append(f"conditional failed: {exc}")
        return ev
    ev.periodic = sol
    ev.t = sol.samples.t
    if not sol.converged:
        ev.flags.append("conditional not converged")
    s = sol.samples
    ev.blocks["cond"] = (s.plus, s.minus)
    ev.en["cond_numeric"] = log_negativity_series(s.plus, s.minus)

    need_gain = "uncond_numeric" in quantities or "uncond_analytic" in quantities
    if need_gain:
        try:
            ev.gain = solve_are_gain(p)
            if not ev.gain.is_stabilizing(p):
                ev.flags.append("gain not stabilizing")
        except RiccatiError as exc:
            ev.flags.append(f"gain failed: {exc}")

    if "uncond_numeric" in quantities and ev.gain is not None:
        try:
            ex = periodic_excess_noise(p, sol, ev.gain, icfg, drift)
            ev.excess = ex
            if not ex.converged:
                ev.flags.append("excess noise not converged")
            u = ex.unconditional
            ev.blocks["uncond"] = (u.plus, u.minus)
            ev.en["uncond_numeric"] = log_negativity_series(u.plus, u.minus)
        except (IntegrationError, InconsistentBlocks) as exc:
            ev.flags.append(f"excess noise failed: {exc}")

    model = mathieu_model(p)
    ev.model = model
    analytic = "cond_analytic" in quantities or "uncond_analytic" in quantities
    if analytic and (model.in_window or p.g1 == 0):
        plus = common_mode_approx(p).as_array()
        if p.g1 == 0:
            minus_const = static_differential_approx(p).as_array()

            def source(tt):
                tt = np.atleast_1d(tt)
                return np.broadcast_to(plus, (len(tt), 3)), np.broadcast_to(minus_const, (len(tt), 3))

        else:

            def source(tt):
                minus = conditional_cov_approx(p, model, np.atleast_1d(tt))
                return np.broadcast_to(plus, minus.shape), minus

        try:
            ap, am = source(ev.t)
            ap, am = np.array(ap), np.array(am)
            ev.blocks["ana_cond"] = (ap, am)
            ev.en["cond_analytic"] = log_negativity_series(ap, am)
            if "uncond_analytic" in quantities and ev.gain is not None:
                xp, xm = analytic_excess_noise(p, ev.gain, ev.t, source=source)
                ev.blocks["ana_uncond"] = (ap + xp, am + xm)
                ev.en["uncond_analytic"] = log_negativity_series(ap + xp, am + xm)
        except (InconsistentBlocks, OutsideWindow, ValueError) as exc:
            ev.flags.append(f"analytic failed: {exc}")
    if _exact_resonance(p):
        ev.en["closed_form"] = np.asarray(closed_form_negativity(p, ev.t), dtype=float)
    return ev


def applicable(ev: PointEvaluation):
    return bool(ev.model is not None and (ev.model.applicable or ev.params.g1 == 0))


def _avg(values, t, T):
    values = np.asarray(values, dtype=float)
    if not np.isfinite(values).all():
        return math.nan
    return period_average(values, t, T)


def summarize_point(ev: PointEvaluation) -> dict:
    """Scalar row for sweep tables."""
    T = ev.params.period
    row = {}
    for key in ("cond_numeric", "uncond_numeric", "cond_analytic", "uncond_analytic", "closed_form"):
        vals = ev.en[key]
        ok = len(vals) == len(ev.t) and len(ev.t) > 1
        row[f"avg_{key}"] = _avg(vals, ev.t, T) if ok else math.nan
        row[f"max_{key}"] = float(np.max(vals)) if ok and np.isfinite(vals).all() else math.nan
    row["in_window"] = int(bool(ev.model is not None and ev.model.in_window))
    row["applicable"] = int(applicable(ev))
    row["h"] = ev.model.h if ev.model is not None else math.nan
    row["mu"] = ev.model.mu if ev.model is not None else math.nan
    row["periods"] = ev.periodic.periods_to_converge if ev.periodic is not None else -1
    row["status"] = ev.status()
    return row


def _point_task(args):
    index, spec, icfg, quantities, drift = args
    try:
        p = build_system(spec)
        row = summarize_point(evaluate_point(p, icfg, quantities, drift))
    except Exception as exc:  # record-and-continue
        row = {"status": f"error: {type(exc).__name__}: {exc}"}
    return index, row


def map_points(specs, icfg, quantities, drift, workers=1):
    """Evaluate parameter points, serially or with a bounded process pool.

    Results come back in input order regardless of completion order.
    """
    tasks = [(i, s, icfg, tuple(quantities), drift) for i, s in enumerate(specs)]
    rows = [None] * len(tasks)
    if workers <= 1 or len(tasks) <= 1:
        for t in tasks:
            i, row = _point_task(t)
            rows[i] = row
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, row in pool.map(_point_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))):
                rows[i] = row
    return rows


# -- output writing ----------------------------------------------------------------


@dataclass
class RunReport:
    kind: str
    files: list
    partial: bool
    summary: dict = field(default_factory=dict)

    @property
    def exit_code(self):
        return 2 if self.partial else 0


def _cell(x):
    if isinstance(x, str):
        return x.replace(",", ";").replace("\n", " ")
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return fmt(float(x))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def write_table(path: Path, columns, rows, header_lines=(), fmt_="csv"):
    """Write a table as CSV with a ``#`` header, or as JSON."""
    path = Path(path)
    if fmt_ == "json":
        doc = {"header": list(header_lines), "columns": list(columns), "rows": _jsonable(rows)}
        path.write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n")
        return path
    lines = [f"# {h}" for h in header_lines]
    lines.append("# columns: " + " ".join(columns))
    lines.append(",".join(columns))
    for r in rows:
        lines.append(",".join(_cell(x) for x in r))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_table(path):
    """Read a table written by :func:`write_table` into (columns, list of rows)."""
    if str(path).endswith(".json"):
        doc = json.loads(Path(path).read_text())
        rows = [[math.nan if c is None else c for c in r] for r in doc["rows"]]
        return doc["columns"], rows
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    columns = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        cells = []
        for c in ln.split(","):
            try:
                cells.append(float(c))
            except ValueError:
                cells.append(c)
        rows.append(cells)
    return columns, rows


def _header(cfg: ExperimentConfig, extra=()):
    lines = [f"experiment: {cfg.name} ({cfg.kind})"]
    sys_items = ", ".join(f"{k}={cfg.system_spec[k]!r}" for k in sorted(cfg.system_spec))
    lines.append(f"system: {sys_items}")
    lines.append("units: time in seconds, rates in rad/s")
    lines.extend(extra)
    return lines


def _prepare_dir(cfg):
    d = cfg.output_dir()
    d.mkdir(parents=True, exist_ok=True)
    if not os.access(d, os.W_OK):
        raise ConfigError("outputs.directory", f"{d} is not writable")
    return d


def _emit(cfg, stem, columns, rows, header):
    d = _prepare_dir(cfg)
    files = []
    for f in cfg.outputs.formats:
        files.append(write_table(d / f"{stem}.{f}", columns, rows, header, f))
    return files


# -- experiments -------------------------------------------------------------------

_EN_KEYS = ("cond_numeric", "uncond_numeric", "cond_analytic", "uncond_analytic", "closed_form")
_BLOCK_GROUPS = ("cond", "uncond", "ana_cond", "ana_uncond")


def trace_columns():
    cols = ["t", "phase"] + [f"en_{k}" for k in _EN_KEYS]
    for g in _BLOCK_GROUPS:
        for mode in ("plus", "minus"):
            cols += [f"{g}_{mode}_{c}" for c in ("s11", "s12", "s22")]
    return cols


def run_trace(cfg: ExperimentConfig) -> RunReport:
    """One-period E_N(t) and covariance entries for a single parameter set."""
    p = cfg.system
    ev = evaluate_point(p, cfg.integrator, cfg.quantities, cfg.excess_drift)
    n = len(ev.t)
    rows = []
    nan3 = np.full((n, 3), np.nan)
    for i in range(n):
        r = [ev.t[i], ev.t[i] / p.period]
        r += [ev.en[k][i] if len(ev.en[k]) == n else math.nan for k in _EN_KEYS]
        for g in _BLOCK_GROUPS:
            plus, minus = ev.blocks.get(g, (nan3, nan3))
            r += list(plus[i]) + list(minus[i])
        rows.append(r)
    summary = {k: v for k, v in summarize_point(ev).items()}
    header = _header(
        cfg,
        [
            f"status: {ev.status()}",
            f"period: {fmt(p.period)}",
            "en_* columns are -ln(2 nu) of the matching covariance columns except en_closed_form",
        ],
    )
    files = _emit(cfg, f"{cfg.name}_trace", trace_columns(), rows, header)
    if cfg.outputs.plot:
        from .plotting import plot_trace

        path = cfg.output_dir() / f"{cfg.name}_trace.svg"
        curves = {k: ev.en[k] for k in _EN_KEYS if k != "closed_form" or _exact_resonance(p)}
        files.append(plot_trace(path, ev.t / p.period, curves, title=cfg.name))
    return RunReport("trace", files, not ev.ok, summary)


SWEEP_COLUMNS = (
    [f"avg_{k}" for k in _EN_KEYS]
    + [f"max_{k}" for k in _EN_KEYS]
    + ["in_window", "applicable", "h", "mu", "periods", "status"]
)


def _row_values(row):
    out = []
    for c in SWEEP_COLUMNS:
        v = row.get(c, "" if c == "status" else math.nan)
        if c in ("in_window", "applicable", "periods") and isinstance(v, float) and math.isnan(v):
            v = -1
        out.append(v)
    return out


def sweep_points(cfg: ExperimentConfig, axes):
    """Parameter sections for the Cartesian product of ``axes`` (last fastest)."""
    grids = [a.values() for a in axes]
    specs, coords = [], []
    for idx in np.ndindex(*[len(g) for g in grids]):
        spec = cfg.system_spec
        vals = []
        for a, g, i in zip(axes, grids, idx):
            spec = with_axis_value(spec, a.name, g[i])
            vals.append(float(g[i]))
        specs.append(spec)
        coords.append(vals)
    return specs, coords


def run_sweep1d(cfg: ExperimentConfig) -> RunReport:
    """Period-averaged E_N along each configured axis (one table per axis)."""
    files = []
    partial = False
    summary = {}
    for axis in cfg.axes:
        specs, coords = sweep_points(cfg, (axis,))
        rows = map_points(specs, cfg.integrator, cfg.quantities, cfg.excess_drift, cfg.workers)
        table = [[c[0], *_row_values(r)] for c, r in zip(coords, rows)]
        bad = sum(r.get("status") != "ok" for r in rows)
        partial |= bad > 0
        summary[axis.name] = {"points": len(rows), "flagged": bad}
        header = _header(cfg, [f"axis: {axis.name} {axis.scale} [{axis.min}, {axis.max}] x {axis.count}"])
        stem = f"{cfg.name}_sweep1d_{axis.name}"
        files += _emit(cfg, stem, [axis.name, *SWEEP_COLUMNS], table, header)
        if cfg.outputs.plot:
            from .plotting import plot_sweep1d

            x = [c[0] for c in coords]
            curves = {}
            for k in ("cond_numeric", "cond_analytic", "uncond_numeric", "uncond_analytic", "closed_form"):
                curves[k] = [r.get(f"avg_{k}", math.nan) for r in rows]
            files.append(plot_sweep1d(cfg.output_dir() / f"{stem}.svg", x, curves, axis.name, cfg.name))
    return RunReport("sweep1d", files, partial, summary)


def static_baseline(cfg: ExperimentConfig):
    """Period-averaged numeric conditional E_N of the unmodulated system."""
    spec = with_axis_value(cfg.system_spec, "g1_rel", 0.0)
    ev = evaluate_point(build_system(spec), cfg.integrator, ("cond_numeric",))
    return summarize_point(ev)["avg_cond_numeric"]


def wedge_localization(coords, rows, specs, baseline, threshold=0.05):
    """Fraction of enhanced points (numeric conditional above baseline + threshold)
    whose drive frequency lies inside the resonance window."""
    inside = enhanced = 0
    for spec, row in zip(specs, rows):
        v = row.get("avg_cond_numeric", math.nan)
        if not (isinstance(v, float) and math.isfinite(v)) or v <= baseline + threshold:
            continue
        enhanced += 1
        p = build_system(spec)
        lo, hi = resonance_window(p)
        inside += lo < p.omega_c < hi
    return (inside / enhanced if enhanced else math.nan), enhanced, inside


def run_sweep2d(cfg: ExperimentConfig) -> RunReport:
    """Period-averaged E_N on a 2-D grid with the resonance window overlaid."""
    ax, ay = cfg.axes
    specs, coords = sweep_points(cfg, (ay, ax))  # x varies fastest
    rows = map_points(specs, cfg.integrator, cfg.quantities, cfg.excess_drift, cfg.workers)
    table = [[c[1], c[0], *_row_values(r)] for c, r in zip(coords, rows)]
    bad = sum(r.get("status") != "ok" for r in rows)
    baseline = static_baseline(cfg)
    frac, n_enh, n_in = wedge_localization(coords, rows, specs, baseline)
    summary = {
        "points": len(rows),
        "flagged": bad,
        "baseline": baseline,
        "enhanced": n_enh,
        "enhanced_inside_window": n_in,
        "inside_fraction": frac,
    }
    header = _header(
        cfg,
        [
            f"x axis: {ax.name} {ax.scale} [{ax.min}, {ax.max}] x {ax.count}",
            f"y axis: {ay.name} {ay.scale} [{ay.min}, {ay.max}] x {ay.count}",
            f"static baseline (g1 = 0) conditional E_N: {fmt(baseline)}",
            f"enhanced points (> baseline + 0.05): {n_enh}, inside window: {n_in}",
        ],
    )
    stem = f"{cfg.name}_sweep2d"
    files = _emit(cfg, stem, [ax.name, ay.name, *SWEEP_COLUMNS], table, header)
    if cfg.outputs.plot:
        files.append(_heatmap(cfg, ax, ay, specs, rows, stem))
    return RunReport("sweep2d", files, bad > 0, summary)


def _heatmap(cfg, ax, ay, specs, rows, stem):
    from .plotting import plot_heatmaps

    x, y = ax.values(), ay.values()
    shape = (len(y), len(x))

    def grid(key):
        return np.array([r.get(key, math.nan) for r in rows], dtype=float).reshape(shape)

    mask = grid("applicable") != 1
    panels = []
    for key, label, m in (
        ("avg_cond_numeric", "conditional, numeric", None),
        ("avg_cond_analytic", "conditional, analytic", mask),
        ("avg_uncond_numeric", "unconditional, numeric", None),
        ("avg_uncond_analytic", "unconditional, analytic", mask),
    ):
        if key.replace("avg_", "") in cfg.quantities:
            panels.append((label, grid(key), m))
    window = None
    if {ax.name, ay.name} == {"omega_c_rel", "g1_rel"} and ax.name == "omega_c_rel":
        lo, hi = [], []
        for yv in y:
            p = build_system(with_axis_value(cfg.system_spec, "g1_rel", yv))
            a, b = resonance_window(p)
            lo.append(a / p.omega_minus)
            hi.append(b / p.omega_minus)
        window = (np.array(lo), np.array(hi))
    labels = {"omega_c_rel": "drive frequency / differential frequency", "g1_rel": "g1 / omega0"}
    return plot_heatmaps(
        cfg.output_dir() / f"{stem}.svg",
        x,
        y,
        panels,
        labels.get(ax.name, ax.name),
        labels.get(ay.name, ay.name),
        window=window,
        title=cfg.name,
    )


ELLIPSE_COLUMNS = (
    "source", "major", "minor", "angle_deg", "major_x", "major_p", "minor_x", "minor_p",
)


def ellipse_analysis(p: SystemParams, icfg=None) -> dict:
    """Numeric and analytic differential-mode ellipses at the end of a period."""
    icfg = icfg or IntegratorConfig()
    sol = find_periodic_steady_state(p, icfg)
    num_block = CovBlock.from_array(sol.samples.minus[-1])
    t_end = sol.samples.t[-1]
    out = {"converged": sol.converged, "t": t_end, "numeric": noise_ellipse(num_block)}
    model = mathieu_model(p)
    out["model"] = model
    if model.in_window:
        ana = conditional_cov_approx(p, model, t_end)
        out["analytic"] = noise_ellipse(ana)
        xd, xc = mode_vectors(model, p, t_end)
        out["x_div"], out["x_dec"] = np.asarray(xd), np.asarray(xc)
        e = out["numeric"]
        out["major_vs_div_deg"] = axis_angle(e.major_axis, xd)
        out["minor_vs_dec_deg"] = axis_angle(e.minor_axis, xc)
        out["div_dec_angle_deg"] = axis_angle(xd, xc)
        out["major_ratio"] = out["analytic"].major / e.major
        out["minor_ratio"] = out["analytic"].minor / e.minor
    return out


def run_ellipse(cfg: ExperimentConfig) -> RunReport:
    p = cfg.system
    res = ellipse_analysis(p, cfg.integrator)
    rows = []
    for src in ("numeric", "analytic"):
        e = res.get(src)
        if e is None:
            continue
        rows.append([src, e.major, e.minor, math.degrees(e.angle), *e.major_axis, *e.minor_axis])
    summary = {k: res[k] for k in ("major_vs_div_deg", "minor_vs_dec_deg", "major_ratio", "minor_ratio") if k in res}
    extra = [f"converged: {res['converged']}", f"t: {fmt(res['t'])}"]
    if "x_div" in res:
        extra.append("x_div: " + " ".join(fmt(v) for v in res["x_div"]))
        extra.append("x_dec: " + " ".join(fmt(v) for v in res["x_dec"]))
    extra += [f"{k}: {fmt(v)}" for k, v in summary.items()]
    stem = f"{cfg.name}_ellipse"
    files = _emit(cfg, stem, ELLIPSE_COLUMNS, rows, _header(cfg, extra))
    if cfg.outputs.plot:
        from .plotting import plot_ellipse

        vectors = None
        if "x_div" in res:
            e = res["numeric"]
            vectors = {"diverging mode": (res["x_div"], e.major), "decaying mode": (res["x_dec"], e.major / 2)}
        files.append(
            plot_ellipse(cfg.output_dir() / f"{stem}.svg", res["numeric"], res.get("analytic"), vectors, cfg.name)
        )
    partial = not res["converged"] or "analytic" not in res
    return RunReport("ellipse", files, partial, summary)


def _rel(a, b):
    return abs(a - b) / abs(b) if b != 0 else math.inf


def compare_report(cfg: ExperimentConfig) -> dict:
    """Analytic-versus-numeric comparison as a JSON-ready dict."""
    p = cfg.system
    ev = evaluate_point(p, cfg.integrator, cfg.quantities, cfg.excess_drift)
    T = p.period
    rep = {"name": cfg.name, "status": ev.status(), "params": ev.params.to_dict()}
    model = ev.model
    rep["mathieu"] = {"h": model.h, "eps": model.eps, "mu": model.mu, "in_window": model.in_window,
                      "applicable": applicable(ev)}
    if p.g1 > 0:
        fl = floquet_monodromy(p, cfg.integrator)
        rep["mathieu"]["mu_numeric"] = fl.mu_numeric
        rep["mathieu"]["mu_rel_error"] = _rel(model.mu, fl.mu_numeric) if model.mu > 0 else None
    if ev.periodic is not None:
        s = ev.periodic.samples
        D = determinant_fixed_point(p)
        dets = np.concatenate([s.plus[:, 0] * s.plus[:, 2] - s.plus[:, 1] ** 2,
                               s.minus[:, 0] * s.minus[:, 2] - s.minus[:, 1] ** 2])
        rep["determinant"] = {"predicted": D, "max_rel_error": float(np.max(np.abs(dets - D)) / D)}
    quantities = {}
    for num, ana in (("cond_numeric", "cond_analytic"), ("uncond_numeric", "uncond_analytic"),
                     ("cond_numeric", "closed_form")):
        a, b = ev.en[ana], ev.en[num]
        if not (np.isfinite(a).all() and np.isfinite(b).all()):
            continue
        avg_a, avg_b = period_average(a, ev.t, T), period_average(b, ev.t, T)
        quantities[f"{ana}_vs_{num}"] = {
            "avg_numeric": avg_b,
            "avg_analytic": avg_a,
            "avg_rel_error": _rel(avg_a, avg_b),
            "max_abs_gap": float(np.max(np.abs(a - b))),
            "phase_lag": cross_correlation_lag(b, a, T),
        }
    rep["negativity"] = quantities
    if _exact_resonance(p) and "ana_cond" in ev.blocks and ev.periodic is not None:
        l2 = lambda2_closed_form(p, ev.t)
        am = ev.blocks["ana_cond"][1]
        nm = ev.periodic.samples.minus

        def lo(b):
            tr = b[:, 0] + b[:, 2]
            det = b[:, 0] * b[:, 2] - b[:, 1] ** 2
            return 0.5 * tr - np.sqrt(np.maximum(0.25 * tr * tr - det, 0.0))

        rep["lambda2"] = {
            "closed_vs_approx_max_rel": float(np.max(np.abs(l2 - lo(am)) / lo(am))),
            "closed_vs_numeric_max_rel": float(np.max(np.abs(l2 - lo(nm)) / lo(nm))),
        }
    if model.in_window and ev.periodic is not None:
        el = ellipse_analysis(p, cfg.integrator)
        rep["ellipse"] = {k: el[k] for k in ("major_ratio", "minor_ratio", "major_vs_div_deg", "minor_vs_dec_deg")}
    if cfg.monte_carlo.trajectories > 0 and ev.periodic is not None and ev.gain is not None:
        rep["monte_carlo"] = _monte_carlo(cfg, ev)
    return _jsonable(rep)


def _monte_carlo(cfg, ev):
    p = cfg.system
    mc = cfg.monte_carlo
    kw = dict(n_traj=mc.trajectories, n_periods=mc.periods, seed=cfg.seed)
    fb = mean_trajectory(p, ev.periodic, ev.gain, feedback=True, **kw)
    free = mean_trajectory(p, ev.periodic, ev.gain, feedback=False, **kw)
    out = {"seed": cfg.seed, "trajectories": mc.trajectories, "periods": mc.periods,
           "cost_feedback": lqr_cost_eval(fb, p), "cost_no_feedback": lqr_cost_eval(free, p)}
    if ev.excess is not None:
        # compare the last-period ensemble second moment with the integrated Xi
        m2 = fb.second_moment()
        xi = ev.excess.samples
        n = len(xi) - 1
        last = m2[-n - 1:]
        est = np.stack([last[:, 0, 0], last[:, 0, 1], last[:, 1, 1]], axis=-1)
        ref = xi.plus
        out["xi_plus_s11_rel_error"] = float(abs(est[:, 0].mean() - ref[:, 0].mean()) / ref[:, 0].mean())
        est_m = np.stack([last[:, 2, 2], last[:, 2, 3], last[:, 3, 3]], axis=-1)
        out["xi_minus_s11_rel_error"] = float(abs(est_m[:, 0].mean() - xi.minus[:, 0].mean()) / xi.minus[:, 0].mean())
    return out


def run_compare(cfg: ExperimentConfig) -> RunReport:
    rep = compare_report(cfg)
    d = _prepare_dir(cfg)
    path = d / f"{cfg.name}_compare.json"
    path.write_text(json.dumps(rep, indent=1, sort_keys=True) + "\n")
    return RunReport("compare", [path], rep["status"] != "ok", rep)


RUNNERS = {
    "trace": run_trace,
    "sweep1d": run_sweep1d,
    "sweep2d": run_sweep2d,
    "ellipse": run_ellipse,
    "compare": run_compare,
}


def run(cfg: ExperimentConfig) -> RunReport:
    return RUNNERS[cfg.kind](cfg)
