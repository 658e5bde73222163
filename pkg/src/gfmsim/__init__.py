"""Grid-forming inverter simulation and analysis toolkit.

Per-phase virtual-oscillator control with an adaptive virtual-impedance
voltage-stiffness controller: time-domain co-simulation, small-signal
stability analysis over the impedance gain, droop analytics, and a
scenario command line.
"""

from .circuit import (CircuitParams, GridSource, LoadBranch, PlantState,
                      measure_sag, solve_phasor, step_plant)
from .droop import (active_droop, reactive_droop_plain, reactive_droop_vim,
                    select_k)
from .engine import (EventSchedule, RunSetup, SimConfig, TimeSeriesLog,
                     compute_metrics, run_simulation)
from .loops import LoopGains, PiState, design_gains, table_gains
from .oscillator import OscillatorParams, OscillatorState, abc_to_dq, dq_to_abc
from .scenarios import ScenarioSpec, builtin, builtin_names, parse_scenario
from .smallsignal import (LtiStateSpace, ModelContext, OperatingPoint,
                          assemble_model, compute_operating_point,
                          critical_gain, eigenvalues, sweep_gain)
from .vim import VimParams, VimState, compute_vim, feedforward_voltage

__version__ = "0.1.0"
