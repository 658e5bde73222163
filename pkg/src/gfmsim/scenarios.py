"""Declarative scenarios: defaults, built-in library, config documents.

A scenario document is a line-oriented ``key = value`` format with
``[section]`` headers and ``#`` comments.  An empty document resolves to
the base study defaults (the published system table); every override
names an existing key and unknown keys are all reported together with
the nearest valid spelling.

Two scenario families ship as built-ins: the 80 V / 60 Hz weak-grid
study (load step, frequency staircase, unbalanced sag) and the
100 V / 50 Hz grid-emulator rig (dispatch, sag and frequency-dip
trends).  The emulator internals are not published, so those runs are
trend-level reproductions; their notes say so.
"""

from __future__ import annotations

import difflib
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .circuit import CircuitParams, GridSource, LoadBranch, solve_phasor
from .engine import (EventSchedule, GainChange, GridAmplitudeStep,
                     GridFrequencyStep, LoadConnect, ReferenceStep, RunSetup,
                     SimConfig, TimeSeriesLog, compute_metrics, measure_sag)
from .errors import ScenarioError
from .loops import LoopGains, design_gains, table_gains
from .oscillator import OscillatorParams
from .vim import VimParams

TWO_PI = 2.0 * math.pi


@dataclass
class ScenarioSpec:
    name: str
    circuit: CircuitParams
    grid: GridSource
    osc: OscillatorParams
    gains: LoopGains
    vim: VimParams
    sim: SimConfig
    schedule: EventSchedule
    inverter_enabled: bool = True
    current_loop_variant: str = "standard"
    gain_preset: str = "table"
    windows: dict = field(default_factory=dict)
    sag_baseline: str = "run"      # 'run' or 'unsupported'
    notes: str = ""

    def to_setup(self) -> RunSetup:
        return RunSetup(circuit=self.circuit, grid=self.grid, osc=self.osc,
                        gains=self.gains, vim=self.vim, sim=self.sim,
                        schedule=self.schedule,
                        inverter_enabled=self.inverter_enabled,
                        current_loop_variant=self.current_loop_variant)


def base_defaults(name: str = "default") -> ScenarioSpec:
    """The published-table study system: weak 60 Hz grid, 80 V nominal."""
    return ScenarioSpec(
        name=name,
        circuit=CircuitParams(loads=[LoadBranch(2.5, 10e-3, 0.0)]),
        grid=GridSource(amplitude=80.0, omega=TWO_PI * 60.0),
        osc=OscillatorParams(),
        gains=table_gains(i_max=15.0),
        vim=VimParams(),
        sim=SimConfig(t_end=10.0),
        schedule=EventSchedule(),
        windows={"pre": (4.0, 4.95), "post": (9.0, 10.0)},
    )


def _emulator_defaults(name: str, p_ref_phase: float, k: float,
                       t_end: float = 5.0) -> ScenarioSpec:
    """100 V / 50 Hz grid-emulator rig behind its branch inductance."""
    osc = OscillatorParams(k_v=300.0, v_nominal=100.0, omega_n=TWO_PI * 50.0,
                           p_ref=p_ref_phase)
    return ScenarioSpec(
        name=name,
        circuit=CircuitParams(r_g=0.5, l_g=6e-3, loads=[]),
        grid=GridSource(amplitude=100.0, omega=TWO_PI * 50.0),
        osc=osc,
        gains=table_gains(i_max=25.0),
        vim=VimParams(m=k, n=k),
        sim=SimConfig(t_end=t_end),
        schedule=EventSchedule(),
        windows={"pre": (1.2, 1.95), "post": (t_end - 1.0, t_end)},
        notes=("trend-level reproduction: the grid-emulator internals are "
               "not published; branch values are package defaults"),
    )


def builtin(name: str) -> ScenarioSpec:
    """Fully specified library scenario; raises with the list if unknown."""
    makers = _BUILTIN_MAKERS
    if name not in makers:
        known = ", ".join(sorted(makers))
        raise ScenarioError([f"unknown scenario '{name}'; built-ins: {known}"])
    return makers[name]()


def builtin_names() -> list:
    return sorted(_BUILTIN_MAKERS)


def _sag_open() -> ScenarioSpec:
    spec = base_defaults("sag-open")
    spec.inverter_enabled = False
    spec.schedule = EventSchedule([LoadConnect(5.0, 2.5, 2e-3)])
    spec.windows = {"pre": (4.0, 4.95), "post": (9.0, 10.0)}
    spec.notes = "load step with the inverter branch open (no support)"
    return spec


def _sag_no_vim() -> ScenarioSpec:
    spec = base_defaults("sag-no-vim")
    spec.schedule = EventSchedule([LoadConnect(5.0, 2.5, 2e-3)])
    spec.windows = {"pre": (4.0, 4.95), "post": (9.0, 10.0),
                    "onset": (5.0, 5.5), "trailing": (8.0, 10.0)}
    spec.sag_baseline = "unsupported"
    return spec


def _sag_vim_007() -> ScenarioSpec:
    spec = _sag_no_vim()
    spec.name = "sag-vim-007"
    spec.vim = VimParams(m=0.07, n=0.07)
    return spec


def _freq_droop_steps() -> ScenarioSpec:
    spec = base_defaults("freq-droop-steps")
    spec.name = "freq-droop-steps"
    spec.circuit = CircuitParams(r_g=0.5, l_g=3e-3, loads=[])
    spec.gains = table_gains(i_max=60.0)
    spec.vim = VimParams(m=0.07, n=0.07)
    events = [GridFrequencyStep(2.0 + 2.0 * i, TWO_PI * (60.0 - 0.2 * (i + 1)))
              for i in range(5)]
    spec.schedule = EventSchedule(events)
    spec.sim = SimConfig(t_end=12.0)
    spec.windows = {f"plateau{i}": (2.0 * i + 1.2, 2.0 * i + 1.95)
                    for i in range(6)}
    return spec


def _unbalanced_sag() -> ScenarioSpec:
    spec = base_defaults("unbalanced-sag")
    spec.vim = VimParams(m=0.07, n=0.07)
    spec.schedule = EventSchedule(
        [GridAmplitudeStep(5.0, scale=(0.8, 1.0, 1.0))])
    spec.windows = {"pre": (4.0, 4.95), "post": (9.0, 10.0)}
    return spec


def _dispatch() -> ScenarioSpec:
    spec = _emulator_defaults("dispatch", p_ref_phase=500.0, k=0.1)
    spec.schedule = EventSchedule([ReferenceStep(2.5, p_ref=800.0)])
    spec.windows = {"step1": (1.5, 2.45), "step2": (4.0, 5.0)}
    return spec


def _sag_trend(name: str, scale: float, k: float) -> ScenarioSpec:
    spec = _emulator_defaults(name, p_ref_phase=0.0, k=k)
    spec.schedule = EventSchedule([GridAmplitudeStep(2.0, scale=scale)])
    spec.windows = {"pre": (1.2, 1.95), "post": (4.0, 5.0)}
    return spec


def _fdip(name: str, hz: float, k: float) -> ScenarioSpec:
    spec = _emulator_defaults(name, p_ref_phase=500.0, k=k)
    spec.schedule = EventSchedule([GridFrequencyStep(2.0, TWO_PI * hz)])
    spec.windows = {"pre": (1.2, 1.95), "post": (4.0, 5.0)}
    return spec


_BUILTIN_MAKERS = {
    "sag-open": _sag_open,
    "sag-no-vim": _sag_no_vim,
    "sag-vim-007": _sag_vim_007,
    "freq-droop-steps": _freq_droop_steps,
    "unbalanced-sag": _unbalanced_sag,
    "dispatch": _dispatch,
    "sag5-k005": lambda: _sag_trend("sag5-k005", 0.95, 0.05),
    "sag5-k015": lambda: _sag_trend("sag5-k015", 0.95, 0.15),
    "sag25-k005": lambda: _sag_trend("sag25-k005", 0.75, 0.05),
    "sag25-k015": lambda: _sag_trend("sag25-k015", 0.75, 0.15),
    "fdip-4985-k005": lambda: _fdip("fdip-4985-k005", 49.85, 0.05),
    "fdip-4985-k015": lambda: _fdip("fdip-4985-k015", 49.85, 0.15),
    "fdip-497-k005": lambda: _fdip("fdip-497-k005", 49.7, 0.05),
    "fdip-497-k015": lambda: _fdip("fdip-497-k015", 49.7, 0.15),
}


# ---------------------------------------------------------------------------
# document format

_SCALAR_KEYS = {
    ("", "name"): str,
    ("", "notes"): str,
    ("circuit", "r_f"): float, ("circuit", "l_f"): float,
    ("circuit", "c_f"): float, ("circuit", "r_g"): float,
    ("circuit", "l_g"): float,
    ("grid", "amplitude"): float, ("grid", "frequency_hz"): float,
    ("oscillator", "k_i"): float, ("oscillator", "k_v"): float,
    ("oscillator", "xi"): float, ("oscillator", "v_nominal"): float,
    ("oscillator", "frequency_hz"): float,
    ("oscillator", "p_ref"): float, ("oscillator", "q_ref"): float,
    ("oscillator", "c_osc"): str,   # number or 'auto'
    ("gains", "preset"): str,
    ("gains", "k_pv"): float, ("gains", "k_iv"): float,
    ("gains", "k_pi"): float, ("gains", "k_ii"): float,
    ("gains", "omega_v"): float, ("gains", "omega_i"): float,
    ("gains", "i_max"): float, ("gains", "feedforward_gain"): float,
    ("vim", "k"): float, ("vim", "m"): float, ("vim", "n"): float,
    ("vim", "r_v0"): float, ("vim", "x_v0"): float,
    ("vim", "omega_f_hz"): float, ("vim", "clamp"): bool,
    ("vim", "filter_numerator"): str,
    ("control", "inverter_enabled"): bool,
    ("control", "current_loop_variant"): str,
    ("control", "sag_baseline"): str,
    ("sim", "t_end"): float, ("sim", "dt_plant"): float,
    ("sim", "t_s"): float, ("sim", "log_every"): int,
}
_LIST_KEYS = {("circuit", "load"), ("events", "event"), ("metrics", "window")}
_SECTIONS = {"", "circuit", "grid", "oscillator", "gains", "vim", "control",
             "sim", "events", "metrics"}


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes", "on"):
        return True
    if s.lower() in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_kvline(rest: str) -> dict:
    out = {}
    for tok in rest.split():
        if "=" not in tok:
            raise ValueError(f"expected key=value tokens, got {tok!r}")
        k, v = tok.split("=", 1)
        out[k] = v
    return out


def parse_scenario(text: str) -> ScenarioSpec:
    """Resolve a scenario document against the base defaults.

    Collects every problem (syntax, unknown keys, invariant violations)
    before raising, so a bad file reports all its issues at once.
    """
    problems = []
    section = ""
    scalars = {}
    lists = {key: [] for key in _LIST_KEYS}
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                problems.append(f"line {lineno}: unterminated section header")
                continue
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                hint = difflib.get_close_matches(section, _SECTIONS, n=1)
                extra = f" (did you mean [{hint[0]}]?)" if hint else ""
                problems.append(f"line {lineno}: unknown section "
                                f"[{section}]{extra}")
                section = None
            continue
        if "=" not in line:
            col = len(raw) - len(raw.lstrip()) + 1
            problems.append(f"line {lineno}, col {col}: expected 'key = value'")
            continue
        if section is None:
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        full = (section, key)
        if full in _LIST_KEYS:
            lists[full].append((lineno, value))
        elif full in _SCALAR_KEYS:
            typ = _SCALAR_KEYS[full]
            try:
                scalars[full] = (_parse_bool(value) if typ is bool
                                 else typ(value))
            except ValueError as exc:
                problems.append(f"line {lineno}: bad value for {key}: {exc}")
        else:
            valid = [k for (s, k) in list(_SCALAR_KEYS) + list(_LIST_KEYS)
                     if s == section]
            hint = difflib.get_close_matches(key, valid, n=1)
            extra = f" (nearest valid key: {hint[0]})" if hint else ""
            problems.append(f"line {lineno}: unknown key '{key}' in "
                            f"[{section}]{extra}")
    if problems:
        raise ScenarioError(problems)
    return _resolve(scalars, lists)


def _resolve(scalars: dict, lists: dict) -> ScenarioSpec:
    problems = []
    spec = base_defaults(scalars.get(("", "name"), "custom"))
    spec.notes = scalars.get(("", "notes"), spec.notes)

    g = scalars.get
    circuit = dict(r_f=g(("circuit", "r_f"), spec.circuit.r_f),
                   l_f=g(("circuit", "l_f"), spec.circuit.l_f),
                   c_f=g(("circuit", "c_f"), spec.circuit.c_f),
                   r_g=g(("circuit", "r_g"), spec.circuit.r_g),
                   l_g=g(("circuit", "l_g"), spec.circuit.l_g))
    loads = list(spec.circuit.loads)
    if lists[("circuit", "load")]:
        loads = []
        for lineno, value in lists[("circuit", "load")]:
            try:
                kv = _parse_kvline(value)
                loads.append(LoadBranch(float(kv.pop("r")),
                                        float(kv.pop("l")),
                                        float(kv.pop("t", "0"))))
                if kv:
                    raise ValueError(f"unknown load fields {sorted(kv)}")
            except (ValueError, KeyError) as exc:
                problems.append(f"line {lineno}: bad load spec: {exc}")
    try:
        spec.circuit = CircuitParams(loads=loads, **circuit)
    except ValueError as exc:
        problems.append(f"circuit: {exc}")

    freq = g(("grid", "frequency_hz"))
    try:
        spec.grid = GridSource(
            amplitude=g(("grid", "amplitude"), spec.grid.amplitude),
            omega=TWO_PI * freq if freq is not None else spec.grid.omega)
    except ValueError as exc:
        problems.append(f"grid: {exc}")

    osc_kw = dict(k_i=g(("oscillator", "k_i"), spec.osc.k_i),
                  k_v=g(("oscillator", "k_v"), spec.osc.k_v),
                  xi=g(("oscillator", "xi"), spec.osc.xi),
                  v_nominal=g(("oscillator", "v_nominal"), spec.osc.v_nominal),
                  p_ref=g(("oscillator", "p_ref"), spec.osc.p_ref),
                  q_ref=g(("oscillator", "q_ref"), spec.osc.q_ref))
    ofreq = g(("oscillator", "frequency_hz"))
    osc_kw["omega_n"] = TWO_PI * ofreq if ofreq is not None else spec.osc.omega_n
    c_osc = g(("oscillator", "c_osc"), "auto")
    if c_osc != "auto":
        try:
            osc_kw["c_osc"] = float(c_osc)
        except ValueError:
            problems.append(f"oscillator: c_osc must be a number or 'auto', "
                            f"got {c_osc!r}")
    try:
        spec.osc = OscillatorParams(**osc_kw)
    except ValueError as exc:
        problems.append(f"oscillator: {exc}")

    preset = g(("gains", "preset"), "table")
    spec.gain_preset = preset
    overrides = {}
    for key in ("k_pv", "k_iv", "k_pi", "k_ii", "omega_v", "omega_i",
                "i_max", "feedforward_gain"):
        val = g(("gains", key))
        if val is not None:
            overrides[key] = val
    overrides.setdefault("i_max", spec.gains.i_max)
    try:
        if preset == "table":
            spec.gains = table_gains(**overrides)
        elif preset == "designed":
            spec.gains = design_gains(spec.circuit.l_f, spec.circuit.r_f,
                                      spec.circuit.c_f, **overrides)
        else:
            problems.append(f"gains: unknown preset {preset!r} "
                            f"(table or designed)")
    except ValueError as exc:
        problems.append(f"gains: {exc}")

    k = g(("vim", "k"))
    vim_kw = dict(
        m=g(("vim", "m"), k if k is not None else spec.vim.m),
        n=g(("vim", "n"), k if k is not None else spec.vim.n),
        r_v0=g(("vim", "r_v0"), spec.vim.r_v0),
        x_v0=g(("vim", "x_v0"), spec.vim.x_v0),
        clamp_non_negative=g(("vim", "clamp"), spec.vim.clamp_non_negative),
        filter_numerator=g(("vim", "filter_numerator"),
                           spec.vim.filter_numerator))
    wf = g(("vim", "omega_f_hz"))
    vim_kw["omega_f"] = TWO_PI * wf if wf is not None else spec.vim.omega_f
    vim_kw["feedforward_gain"] = spec.gains.feedforward_gain
    try:
        spec.vim = VimParams(**vim_kw)
    except ValueError as exc:
        problems.append(f"vim: {exc}")

    spec.inverter_enabled = g(("control", "inverter_enabled"),
                              spec.inverter_enabled)
    spec.current_loop_variant = g(("control", "current_loop_variant"),
                                  spec.current_loop_variant)
    if spec.current_loop_variant not in ("standard", "verbatim"):
        problems.append(f"control: unknown current_loop_variant "
                        f"{spec.current_loop_variant!r}")
    spec.sag_baseline = g(("control", "sag_baseline"), spec.sag_baseline)
    if spec.sag_baseline not in ("run", "unsupported"):
        problems.append(f"control: sag_baseline must be 'run' or "
                        f"'unsupported', got {spec.sag_baseline!r}")

    try:
        spec.sim = SimConfig(t_end=g(("sim", "t_end"), spec.sim.t_end),
                             dt_plant=g(("sim", "dt_plant"), spec.sim.dt_plant),
                             t_s=g(("sim", "t_s"), spec.sim.t_s),
                             log_every=g(("sim", "log_every"),
                                         spec.sim.log_every))
    except ValueError as exc:
        problems.append(f"sim: {exc}")

    events = []
    for lineno, value in lists[("events", "event")]:
        try:
            events.append(_parse_event(value))
        except (ValueError, KeyError) as exc:
            problems.append(f"line {lineno}: bad event: {exc}")
    if events:
        try:
            spec.schedule = EventSchedule(sorted(events, key=lambda e: e.t))
        except ValueError as exc:
            problems.append(f"events: {exc}")

    if lists[("metrics", "window")]:
        spec.windows = {}
        for lineno, value in lists[("metrics", "window")]:
            parts = value.split()
            if len(parts) != 3:
                problems.append(f"line {lineno}: window needs 'name t0 t1'")
                continue
            try:
                spec.windows[parts[0]] = (float(parts[1]), float(parts[2]))
            except ValueError as exc:
                problems.append(f"line {lineno}: bad window: {exc}")

    if problems:
        raise ScenarioError(problems)
    return spec


def _parse_event(value: str):
    kind, _, rest = value.partition(" ")
    kv = _parse_kvline(rest)
    t = float(kv.pop("t"))
    if kind == "load_connect":
        ev = LoadConnect(t, float(kv.pop("r")), float(kv.pop("l")))
    elif kind == "grid_amplitude":
        if "scale" in kv:
            scales = kv.pop("scale").split(",")
            scale = (tuple(float(s) for s in scales) if len(scales) == 3
                     else float(scales[0]))
            ev = GridAmplitudeStep(t, scale=scale)
        else:
            ev = GridAmplitudeStep(t, amplitude=float(kv.pop("amplitude")))
    elif kind == "grid_frequency":
        ev = GridFrequencyStep(t, TWO_PI * float(kv.pop("hz")))
    elif kind == "reference":
        p = kv.pop("p", None)
        q = kv.pop("q", None)
        if p is None and q is None:
            raise ValueError("reference event needs p= and/or q=")
        ev = ReferenceStep(t, p_ref=None if p is None else float(p),
                           q_ref=None if q is None else float(q))
    elif kind == "set_k":
        ev = GainChange(t, float(kv.pop("k")))
    else:
        known = "load_connect, grid_amplitude, grid_frequency, reference, set_k"
        raise ValueError(f"unknown event kind {kind!r} (one of: {known})")
    if kv:
        raise ValueError(f"unknown event fields {sorted(kv)}")
    return ev


def serialize(spec: ScenarioSpec) -> str:
    """Write a spec back into the document format (round-trips exactly)."""
    out = [f"name = {spec.name}"]
    if spec.notes:
        out.append(f"notes = {spec.notes}")
    c = spec.circuit
    out.append("\n[circuit]")
    for key in ("r_f", "l_f", "c_f", "r_g", "l_g"):
        out.append(f"{key} = {getattr(c, key)!r}")
    for ld in c.loads:
        out.append(f"load = r={ld.r!r} l={ld.l!r} t={ld.t_connect!r}")
    out.append("\n[grid]")
    out.append(f"amplitude = {spec.grid.amplitude!r}")
    out.append(f"frequency_hz = {spec.grid.omega / TWO_PI!r}")
    o = spec.osc
    out.append("\n[oscillator]")
    out.append(f"k_i = {o.k_i!r}")
    out.append(f"k_v = {o.k_v!r}")
    out.append(f"xi = {o.xi!r}")
    out.append(f"v_nominal = {o.v_nominal!r}")
    out.append(f"frequency_hz = {o.omega_n / TWO_PI!r}")
    out.append(f"p_ref = {o.p_ref!r}")
    out.append(f"q_ref = {o.q_ref!r}")
    out.append(f"c_osc = {o.c_osc!r}")
    gn = spec.gains
    out.append("\n[gains]")
    out.append(f"preset = {spec.gain_preset}")
    for key in ("k_pv", "k_iv", "k_pi", "k_ii", "i_max", "feedforward_gain"):
        out.append(f"{key} = {getattr(gn, key)!r}")
    v = spec.vim
    out.append("\n[vim]")
    out.append(f"m = {v.m!r}")
    out.append(f"n = {v.n!r}")
    out.append(f"r_v0 = {v.r_v0!r}")
    out.append(f"x_v0 = {v.x_v0!r}")
    out.append(f"omega_f_hz = {v.omega_f / TWO_PI!r}")
    out.append(f"clamp = {str(v.clamp_non_negative).lower()}")
    out.append(f"filter_numerator = {v.filter_numerator}")
    out.append("\n[control]")
    out.append(f"inverter_enabled = {str(spec.inverter_enabled).lower()}")
    out.append(f"current_loop_variant = {spec.current_loop_variant}")
    out.append(f"sag_baseline = {spec.sag_baseline}")
    s = spec.sim
    out.append("\n[sim]")
    out.append(f"t_end = {s.t_end!r}")
    out.append(f"dt_plant = {s.dt_plant!r}")
    out.append(f"t_s = {s.t_s!r}")
    out.append(f"log_every = {s.log_every!r}")
    if spec.schedule.events:
        out.append("\n[events]")
        for ev in spec.schedule.events:
            out.append("event = " + _event_text(ev))
    if spec.windows:
        out.append("\n[metrics]")
        for name, (t0, t1) in spec.windows.items():
            out.append(f"window = {name} {t0!r} {t1!r}")
    return "\n".join(out) + "\n"


def _event_text(ev) -> str:
    if isinstance(ev, LoadConnect):
        return f"load_connect t={ev.t!r} r={ev.r!r} l={ev.l!r}"
    if isinstance(ev, GridAmplitudeStep):
        if ev.amplitude is not None:
            return f"grid_amplitude t={ev.t!r} amplitude={ev.amplitude!r}"
        sc = ev.scales()
        return (f"grid_amplitude t={ev.t!r} scale={sc[0]!r},{sc[1]!r},{sc[2]!r}")
    if isinstance(ev, GridFrequencyStep):
        return f"grid_frequency t={ev.t!r} hz={ev.omega / TWO_PI!r}"
    if isinstance(ev, ReferenceStep):
        parts = [f"reference t={ev.t!r}"]
        if ev.p_ref is not None:
            parts.append(f"p={ev.p_ref!r}")
        if ev.q_ref is not None:
            parts.append(f"q={ev.q_ref!r}")
        return " ".join(parts)
    if isinstance(ev, GainChange):
        return f"set_k t={ev.t!r} k={ev.k!r}"
    raise TypeError(f"unknown event type {type(ev)!r}")


def unsupported_baseline(spec: ScenarioSpec) -> float:
    """Pre-event PCC amplitude with the inverter branch open (oracle)."""
    sol = solve_phasor(spec.grid, spec.circuit, inverter_branch=None, t=0.0)
    return float(np.abs(sol["v_pcc"][0]))


def scenario_metrics(spec: ScenarioSpec, log: TimeSeriesLog) -> dict:
    """Windowed metrics plus the scenario-level sag bookkeeping."""
    f0 = spec.grid.omega / TWO_PI
    out = compute_metrics(log, spec.windows, f0=f0)
    if spec.sag_baseline == "unsupported" and "post" in spec.windows:
        base = unsupported_baseline(spec)
        out["unsupported_baseline_v"] = base
        out["sag_vs_unsupported_pct"] = measure_sag(base, out["amp_post"])
    out["scenario"] = spec.name
    if spec.notes:
        out["notes"] = spec.notes
    return out


def metrics_text(metrics: dict) -> str:
    lines = []
    for key, val in metrics.items():
        if isinstance(val, float):
            lines.append(f"{key}: {val:.6g}")
        else:
            lines.append(f"{key}: {val}")
    return "\n".join(lines) + "\n"
