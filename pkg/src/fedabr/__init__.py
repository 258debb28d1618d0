"""Trace-driven training laboratory for real-time streaming bitrate adaptation.

Implements grouped federated transfer learning for online actor-critic
training, plus its offline-only, online-from-scratch, and transfer-only
baselines, over a deterministic bandwidth-trace simulator.
"""

__version__ = "0.1.0"
