"""Ensemble data assimilation on adaptive nonuniform 1D meshes.

Meshes for the ensemble forecasts and the analysis are generated from SPD
mesh density functions; densities from different sources (ensemble members
over time, observation locations) are combined by metric intersection, and a
single robust look-ahead mesh is fixed per forecast/analysis cycle.
"""

__version__ = "0.1.0"
