"""Multi-service dispatch of a grid-forming battery.

Library plus CLI covering the full pipeline: prosumption and frequency-energy
forecasting, robust day-ahead scheduling of the dispatch plan and frequency
droop, 10-second shrinking-horizon MPC tracking, 1-second grid-forming
reference generation, a deterministic closed-loop day simulator, and
evaluation metrics.
"""

__version__ = "0.1.0"
