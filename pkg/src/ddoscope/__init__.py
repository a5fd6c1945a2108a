"""ddoscope: multi-observatory DDoS measurement toolkit.

Attack inference for network telescopes, reflection honeypots, and flow
monitors; carpet-bombing prefix aggregation; weekly trend, correlation,
and target-overlap analysis; plus a seeded synthetic scenario generator
for end-to-end validation against ground truth.
"""

__version__ = "0.1.0"
