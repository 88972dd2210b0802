"""Energy-tank passivation of port-Hamiltonian systems.

Library layout:

- ph_core: plants, dynamics/output evaluation, power balance, structure checks
- tank: energy laws, the lossless tank coupling, valve logic and extensions
- closed_loop: loop assembly, passivity audit, escape detection
- sim_engine: fixed-step simulation, traces, tank refill
- scenarios: reproducible built-in scenarios and fuzz batches
- trace_io: trace CSV contract and run manifests
- cli: `etank simulate | audit | compare-tanks`
"""

from .closed_loop import (ActionPolicy, AuditReport, ClosedLoopSystem,
                          EnvironmentModel, EscapeEvent, EscapeReason,
                          StepControls, StepRecord, TraceAuditError,
                          assemble_dynamics, constant_action,
                          default_audit_tolerance, detect_escape, open_port,
                          passivity_audit, spring_damper, zero_action)
from .ph_core import (DimensionError, NumericError, PhPlant, PortSample,
                      StructureError, check_gradient, check_structure,
                      dirac_apply, eval_dynamics, eval_output,
                      finite_difference_gradient, power_balance)
from .scenarios import (LawComparison, compare_energy_laws, escape_time,
                        example1, mass_spring_damper_plant,
                        negative_damping_case, point_mass_plant,
                        random_passive_env)
from .sim_engine import (SimConfig, TerminationReason, Trace, config_hash,
                         refill_tank, simulate)
from .tank import (EnergyLaw, SingularTankError, Tank, ValveConfig,
                   interconnect, overflow_valve, power_limit,
                   refill_from_dissipation, valve_alpha)
from .trace_io import (RunManifest, TraceFormatError, manifest_path_for,
                       read_manifest, read_trace_csv, write_manifest,
                       write_trace_csv)

__version__ = "0.1.0"

__all__ = [
    "ActionPolicy", "AuditReport", "ClosedLoopSystem", "DimensionError",
    "EnergyLaw", "EnvironmentModel", "EscapeEvent", "EscapeReason",
    "LawComparison", "NumericError", "PhPlant", "PortSample", "RunManifest",
    "SimConfig", "SingularTankError", "StepControls", "StepRecord",
    "StructureError", "Tank", "TerminationReason", "Trace", "TraceAuditError",
    "TraceFormatError", "ValveConfig", "assemble_dynamics", "check_gradient",
    "check_structure", "compare_energy_laws", "config_hash", "constant_action",
    "default_audit_tolerance", "detect_escape", "dirac_apply", "escape_time",
    "eval_dynamics", "eval_output", "example1", "finite_difference_gradient",
    "interconnect", "manifest_path_for", "mass_spring_damper_plant",
    "negative_damping_case", "open_port", "overflow_valve", "passivity_audit",
    "point_mass_plant", "power_balance", "power_limit", "random_passive_env",
    "read_manifest", "read_trace_csv", "refill_from_dissipation",
    "refill_tank", "simulate", "spring_damper", "valve_alpha",
    "write_manifest", "write_trace_csv", "zero_action",
]
