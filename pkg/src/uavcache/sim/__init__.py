"""Simulation of anchor and ferry UAV caching over repeated epochs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..bandit import Strategy
from ..model import (CommunityProfile, ContentCatalog, SystemConfig, assign_tads,
                     generate_profiles, zipf_pmf)
from ..preload import Policy, PreloadPlan, make_plan
from .core import (AnchorState, BaseSimulation, EventKind, FerryState, Outcome, Simulation,
                   SimulationResult, Visit, ferry_fill, write_event_log)
from .events import EventSimulation

__all__ = [
    "AnchorState", "BaseSimulation", "EventKind", "EventSimulation", "FerryState", "Outcome",
    "Simulation", "SimulationResult", "Visit", "World", "build_world", "ferry_fill",
    "run_simulation", "write_event_log",
]


@dataclass
class World:
    """Everything drawn once per replication, shared by every strategy."""

    config: SystemConfig
    profiles: list[CommunityProfile]
    catalog: ContentCatalog
    benchmark: PreloadPlan


def build_world(config: SystemConfig, benchmark: Policy | str = Policy.VBC) -> World:
    """Profiles, TADs and the benchmark plan for ``config.rng_seed``."""
    seed = config.rng_seed
    pmf = zipf_pmf(config.zipf_alpha, config.total_contents)
    profiles = generate_profiles(pmf, config.num_anchor_uavs, config.swap_probability,
                                 np.random.default_rng(np.random.SeedSequence([seed, 0, 0])),
                                 config.profile_mode)
    catalog = assign_tads(config.total_contents, config.tad_values,
                          np.random.default_rng(np.random.SeedSequence([seed, 0, 1])))
    plan = make_plan(benchmark, profiles, catalog, config.segmentation_factor,
                     config.anchor_cache_capacity, config.kappa)
    return World(config, profiles, catalog, plan)


def run_simulation(config: SystemConfig, epochs: int, strategy: Strategy | str | None = None,
                   freeze: Policy | str | None = None, world: World | None = None,
                   log_events: bool = False, engine: str = "batch") -> SimulationResult:
    """Run ``epochs`` epochs with learning agents (``strategy``) or with
    caches frozen to a pre-loading plan (``freeze``)."""
    world = world if world is not None else build_world(config)
    plan = None
    if freeze is not None:
        policy = Policy(freeze)
        plan = world.benchmark if policy is world.benchmark.policy else make_plan(
            policy, world.profiles, world.catalog, config.segmentation_factor,
            config.anchor_cache_capacity, config.kappa)
    cls = {"batch": Simulation, "event": EventSimulation}[engine]
    sim = cls(config, world.profiles, world.catalog, strategy=strategy, plan=plan,
              benchmark=world.benchmark, log_events=log_events)
    return sim.run(epochs)
