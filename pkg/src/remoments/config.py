"""Experiment configuration files.

The format is flat ``key = value`` text with dotted section prefixes::

    # nonlinear case
    oscillator.mu1 = -1.0
    oscillator.mu3 = -0.7
    kernel.family = OU
    kernel.tau_corr = 1.0
    sweep.values = 0, -0.1, -0.7

Values are numbers, booleans (``true``/``false``), bare strings, or
comma-separated lists of those. ``#`` starts a comment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .causal_solver import GridSpec, SolverConfig
from .errors import ConfigError, MomentError
from .excitation import Family, KernelSpec, kernel_for_correlation_time, make_kernel
from .oscillator import InitialMoments, OscillatorParams

__all__ = ["ExperimentConfig", "parse_text", "load_config", "build_config", "SWEEP_AXES"]

SWEEP_AXES = ("mu3", "kappa3", "tau_corr", "omega0", "family")

# every accepted key with its type; lists are marked with a trailing "[]"
SCHEMA = {
    "oscillator.mu1": "float", "oscillator.mu3": "float",
    "oscillator.kappa1": "float", "oscillator.kappa3": "float",
    "kernel.family": "str", "kernel.sigma2": "float", "kernel.a": "float",
    "kernel.tau_corr": "float", "kernel.omega0": "float", "kernel.mean": "float",
    "initial.m_x0": "float", "initial.c_x0x0": "float",
    "grid.t0": "float", "grid.t_end": "float", "grid.coarse_step": "float",
    "grid.fine_per_coarse": "int",
    "solver.eps1": "float", "solver.eps2": "float", "solver.max_cycles": "int",
    "solver.ode_rel_tol": "float", "solver.ode_abs_tol": "float",
    "mc.n_samples": "int", "mc.n_components": "int", "mc.seed": "int",
    "mc.dt_out": "float", "mc.x0_law": "str", "mc.max_step": "float",
    "mc.mass_fraction": "float", "mc.chunk_size": "int",
    "output.field_method": "str", "output.slices": "float[]",
    "output.ratio_time": "float", "output.histogram_time": "float",
    "output.histogram_bins": "int", "output.histogram_range": "float[]",
    "sweep.axis": "str", "sweep.values": "str[]", "sweep.mc": "bool",
    "table1.kappa3": "float[]", "table1.seeds": "int", "table1.t_end": "float",
    "table1.window": "float",
    "fig12.tau_values": "float[]", "fig12.mu3_values": "float[]",
    "fig12.kappa3": "float", "fig12.mc": "bool", "fig12.t_end": "float",
}


def _scalar(text, kind, path):
    try:
        if kind == "float":
            value = float(text)
            if not math.isfinite(value):
                raise ValueError
            return value
        if kind == "int":
            return int(text)
        if kind == "bool":
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError
            return low == "true"
        return text
    except ValueError:
        raise ConfigError(path, f"expected {kind}, got {text!r}") from None


def parse_text(text, source="<config>"):
    """Parse config text into ``{dotted key: typed value}``."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
        if key in values:
            raise ConfigError(key, "given more than once")
        kind = SCHEMA[key]
        if kind.endswith("[]"):
            items = [v.strip() for v in value.split(",") if v.strip()]
            if not items:
                raise ConfigError(key, "empty list")
            values[key] = [_scalar(v, kind[:-2], key) for v in items]
        else:
            if not value:
                raise ConfigError(key, "missing value")
            values[key] = _scalar(value, kind, key)
    return values


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    return build_config(parse_text(text, str(path)))


@dataclass(frozen=True)
class ExperimentConfig:
    params: OscillatorParams
    kernel_spec: dict
    initial: InitialMoments
    grid: GridSpec
    solver: SolverConfig
    mc: dict
    output: dict
    sweep: dict
    table1: dict
    fig12: dict
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def kernel(self):
        return kernel_from(self.kernel_spec)

    def with_axis(self, axis, value):
        """Copy with one sweep axis replaced."""
        params, kspec = self.params, dict(self.kernel_spec)
        if axis == "mu3":
            params = OscillatorParams(params.mu1, float(value), params.kappa1, params.kappa3)
        elif axis == "kappa3":
            params = OscillatorParams(params.mu1, params.mu3, params.kappa1, float(value))
        elif axis == "tau_corr":
            kspec["tau_corr"], kspec["a"] = float(value), None
        elif axis == "omega0":
            kspec["omega0"] = float(value)
            fam = Family.parse(kspec["family"])
            if not fam.shifted and float(value) != 0.0:
                kspec["family"] = (Family.SHIFTED_OU if fam.exponential
                                   else Family.SHIFTED_GAUSSIAN_FILTER).value
        elif axis == "family":
            kspec["family"] = Family.parse(value).value
        else:
            raise ConfigError("sweep.axis", f"must be one of {', '.join(SWEEP_AXES)}")
        kernel_from(kspec)
        return ExperimentConfig(params, kspec, self.initial, self.grid, self.solver, self.mc,
                                self.output, self.sweep, self.table1, self.fig12, self.raw)


def kernel_from(kspec):
    """Kernel from a spec dict; ``tau_corr`` takes precedence over ``a`` when set."""
    if kspec.get("tau_corr") is not None:
        return kernel_for_correlation_time(kspec["family"], kspec["tau_corr"], kspec["sigma2"],
                                           kspec["omega0"], kspec["mean"])
    return make_kernel(KernelSpec(kspec["family"], kspec["sigma2"], kspec["a"],
                                  kspec["omega0"], kspec["mean"]))


def _section(values, prefix):
    n = len(prefix) + 1
    return {k[n:]: v for k, v in values.items() if k.startswith(prefix + ".")}


def _guard(path, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except MomentError as exc:
        raise ConfigError(path, str(exc)) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def build_config(values) -> ExperimentConfig:
    """Validate parsed values and assemble an :class:`ExperimentConfig`."""
    osc = _section(values, "oscillator")
    for name in ("mu1", "mu3", "kappa1", "kappa3"):
        if name not in osc:
            raise ConfigError(f"oscillator.{name}", "required")
    params = _guard("oscillator", OscillatorParams, osc["mu1"], osc["mu3"],
                    osc["kappa1"], osc["kappa3"])

    ker = _section(values, "kernel")
    if "family" not in ker:
        raise ConfigError("kernel.family", "required")
    if ("a" in ker) == ("tau_corr" in ker):
        raise ConfigError("kernel.a", "give exactly one of kernel.a and kernel.tau_corr")
    kspec = {"family": _guard("kernel.family", Family.parse, ker["family"]).value,
             "sigma2": ker.get("sigma2", 1.0), "a": ker.get("a"),
             "tau_corr": ker.get("tau_corr"), "omega0": ker.get("omega0", 0.0),
             "mean": ker.get("mean", 0.0)}
    _guard("kernel", kernel_from, kspec)

    ini = _section(values, "initial")
    initial = _guard("initial", InitialMoments, ini.get("m_x0", 2.0), ini.get("c_x0x0", 1.0))
    g = _section(values, "grid")
    grid = _guard("grid", GridSpec, g.get("t0", 0.0), g.get("t_end", 3.0),
                  g.get("coarse_step"), g.get("fine_per_coarse", 20))
    s = _section(values, "solver")
    solver = _guard("solver", SolverConfig, s.get("eps1", 1e-8), s.get("eps2", 1e-8),
                    s.get("max_cycles", 25), s.get("ode_rel_tol", 1e-8), s.get("ode_abs_tol", 1e-10))

    mc = {"n_samples": 10_000, "n_components": 1024, "seed": 0, "dt_out": 0.05,
          "x0_law": "gaussian", "max_step": 0.01, "mass_fraction": 0.999, "chunk_size": 256}
    mc.update(_section(values, "mc"))
    if mc["dt_out"] <= 0:
        raise ConfigError("mc.dt_out", "must be > 0")

    output = {"field_method": "integral", "slices": [], "ratio_time": None,
              "histogram_time": None, "histogram_bins": 40, "histogram_range": None}
    output.update(_section(values, "output"))
    if output["field_method"].lower() not in ("integral", "ode", "both"):
        raise ConfigError("output.field_method", "must be integral, ode or both")
    if output["histogram_range"] is not None and len(output["histogram_range"]) != 4:
        raise ConfigError("output.histogram_range", "needs x_lo, x_hi, y_lo, y_hi")
    if output["histogram_bins"] < 1:
        raise ConfigError("output.histogram_bins", "must be >= 1")

    sweep = {"axis": None, "values": [], "mc": False}
    sweep.update(_section(values, "sweep"))
    if sweep["axis"] is not None and sweep["axis"] not in SWEEP_AXES:
        raise ConfigError("sweep.axis", f"must be one of {', '.join(SWEEP_AXES)}")

    table1 = {"kappa3": [0.4, 0.0, -0.4], "seeds": 5, "t_end": 4.0, "window": 1.0}
    table1.update(_section(values, "table1"))
    if table1["seeds"] < 1:
        raise ConfigError("table1.seeds", "must be >= 1")
    if not 0 <= table1["window"] < table1["t_end"]:
        raise ConfigError("table1.window", "must lie in [0, table1.t_end)")

    fig12 = {"tau_values": [0.25, 0.5, 1.0, 2.0, 3.0, 4.0], "mu3_values": [-0.4, -0.7],
             "kappa3": 0.4, "mc": False, "t_end": 10.0}
    fig12.update(_section(values, "fig12"))
    if any(t <= 0 for t in fig12["tau_values"]):
        raise ConfigError("fig12.tau_values", "correlation times must be > 0")

    return ExperimentConfig(params, kspec, initial, grid, solver, mc, output, sweep,
                            table1, fig12, dict(values))


def uniform_times(t0, t_end, dt):
    n = max(1, int(round((t_end - t0) / dt)))
    return tuple(np.linspace(t0, t_end, n + 1))
