"""Backup safe controller toolkit: multi-rate synthesis with recovery and
safety certificates, plus a resource-aware activation policy and simulator."""

from .benchmarks import BenchmarkDef, builtin_benchmark
from .decay import (DeadlineInfeasible, DecayTarget, RecoverySpec,
                    alpha_ref, alpha_to_gamma, gamma_to_alpha)
from .scap import (POC_ID, BarrierDomainError, ControllerTuple, GlobalBarrier,
                   PocTask, ScapDecision, ScapState, SchedulabilityError,
                   SwitchEvent, UnrecoverableState, UtilizationBudget, glbf,
                   make_controller_tuples, policy_pi, scap_step, utilization)
from .simkit import (BatchSummary, DecayAuditReport, ScapContext, SimConfig,
                     SimOutcome, SimTrace, batch_recovery, check_decay_trace,
                     make_rejection_sampler, simulate)
from .sysmodel import (DiscreteLoop, Ellipsoid, GeometryError, LinearPlant,
                       NumericFailure, Polytope, boundary_norm_extrema,
                       contains, discretize, ellipsoid_contains,
                       spectral_radius)
from .synth import (BackupController, CertificateReport, PeriodAttempt,
                    RiccatiError, SdpProblem, SolverFailure, SolverReport,
                    SweepResult, SynthesisInfeasible, build_recovery_lmi,
                    build_safety_constraints, calibrate_level_set,
                    decay_residual, solve_bsc, sweep_periods, synth_kalman,
                    synth_poc, verify_certificate)

__version__ = "0.1.0"
