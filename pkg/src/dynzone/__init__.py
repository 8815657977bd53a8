"""Zone-based multi-robot part delivery: decentralized dynamic zoning,
centralized SA/GA baselines, and a deterministic discrete-event simulator."""

__version__ = "0.1.0"
