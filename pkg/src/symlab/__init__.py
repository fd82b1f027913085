"""symlab: symbolic-numeric verification of homogeneous-spacetime
electromagnetic fields that preserve the spacetime's motion integrals.

The package bundles a small exact expression engine, Lie-algebra and metric
machinery for the nine three-dimensional homogeneous geometries, residual
checks for the field admissibility conditions, a closed-form solver for the
solvable types, a trajectory integrator that monitors the conserved
quantities, and a command-line front end emitting structured reports.
"""

from . import expr, geometry, emfield, catalog, solver, dynamics, cli

__version__ = "0.1.0"

__all__ = ["expr", "geometry", "emfield", "catalog", "solver", "dynamics", "cli", "__version__"]
