"""UAV content caching with Top-k bandit agents: simulator, baselines, metrics."""
__version__ = "0.1.0"
