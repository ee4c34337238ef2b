"""Trace-driven cache replacement simulator.

Baselines (LRU, LFU, LeCaR, Belady OPT) and a learned policy that scores
each access with a DDPG actor and files the block into a circular array of
FIFO bins.
"""
from .agent import AgentConfig, DDPGAgent, PhoebePolicy
from .baselines import LFU, LRU, OPT, LeCaR
from .bincache import BinCache, CacheConfig
from .features import FeatureConfig, FeatureState
from .sim import POLICIES, RunResult, SweepSpec, relative_miss_rate, run, sweep
from .trace import AccessRecord, open_trace, synth_cyclic, synth_uniform, synth_zipf

__version__ = "0.1.0"

__all__ = [
    "AccessRecord", "AgentConfig", "BinCache", "CacheConfig", "DDPGAgent",
    "FeatureConfig", "FeatureState", "LFU", "LRU", "LeCaR", "OPT", "POLICIES",
    "PhoebePolicy", "RunResult", "SweepSpec", "open_trace", "relative_miss_rate",
    "run", "sweep", "synth_cyclic", "synth_uniform", "synth_zipf",
]
