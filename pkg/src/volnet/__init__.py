"""Dynamic-graph realized-volatility forecasting across stock markets.

Ships a masked panel data model on a union trading calendar, rolling
spillover-graph estimation (VAR / generalized FEVD), a diffusion-convolutional
recurrent forecaster with hand-rolled exact gradients, HAR-family baselines,
and a statistical evaluation harness (masked MAFE, Diebold-Mariano, model
confidence sets, ADF).
"""

__version__ = "0.1.0"
