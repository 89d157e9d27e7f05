"""Simulation laboratory for join-shortest-of-d (supermarket) queues."""

from .model import (ARRIVAL, DEPARTURE, Arrival, Departure, Event,
                    EventStream, ModelParams, Observables, QueueState,
                    StreamHorizonError, apply_arrival, apply_departure,
                    apply_event, choose_queue, derive_seed, dump_events,
                    evolve, make_stream, observables, parse_events)
from .simulate import (BalanceReport, SamplingPlan, Snapshot, SurvivalRecord,
                       TailEstimate, default_plan, default_warmup,
                       estimate_tail, max_interval_extremes,
                       merge_tail_estimates, replicate_final_states,
                       run_trajectory, snapshot_of, survival_time,
                       verify_balance)
from .coupling import (CoalescenceResult, DecayFit, MixingProfile, PairAudit,
                       PathCoalescence, audit_pair, coalescence_time,
                       coupled_evolve, fit_exponential_decay,
                       mixing_bound_lower, mixing_profile, path_coalescence)
from .meanfield import (MeanFieldState, Trajectory, check_monotone,
                        default_truncation, derivative, fixed_point,
                        integrate, mass_rate, step_halving_error)
from .oracle import (CappedChainSpec, TailSummary, build_generator,
                     choice_probabilities, empirical_distribution, exact_tv,
                     max_length_cdf, stationary, stationary_power,
                     tail_expectations, transient)
from .theory import (PredictionReport, bound_max_tail, bound_survival,
                     chernoff_2x, chernoff_lower, chernoff_upper,
                     compute_i_d, compute_m_d, d1_equilibrium_sample,
                     d1_max_cdf, loglog_scale, poisson_tail, pre_asymptotic,
                     predict, predicted_mode, predicted_tail, survival_rate,
                     tail_exponent)

__version__ = "0.1.0"
