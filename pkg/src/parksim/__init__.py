"""Per-block, per-hour estimation of on-street vs off-street parking time.

The package combines a road-graph model of the city, an availability
predictor trained from partial meter payments, Monte Carlo simulators for
curbside search and for queueing inside a parking lot, and a CLI pipeline
that renders the results as CSV tables and GeoJSON maps.
"""

__version__ = "0.1.0"
