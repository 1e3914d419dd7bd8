"""Reference external backend for the colorizer job-file protocol.

Demonstrates how a real neural colorizer (text-guided generator or
exemplar-guided propagator) plugs into the pipeline engine: read
job.json, write output PNGs, exit 0. Ships with a deterministic mock
model so the protocol runs without any weights.
"""

from backend_adapter.adapter import AdapterConfig, main, run_job

__all__ = ["AdapterConfig", "main", "run_job"]
