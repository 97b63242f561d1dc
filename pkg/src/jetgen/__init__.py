"""jetgen: numerical singularity analysis of linearly perturbed smooth maps.

Submodules:

* ``jets``     -- truncated multivariate Taylor (jet) arithmetic
* ``dsl``      -- the map-definition language and compiled programs
* ``maps``     -- perturbations, graph embeddings, re-coordinatizations
* ``singular`` -- detection, Thom-Boardman symbols, classification,
                  double points, infinitesimal stability
* ``gdsm``     -- generalized distance-squared mappings and experiments
* ``harness``  -- seeded Monte Carlo experiments, reports, persistence
* ``cli``      -- the ``jetgen`` command
"""

from . import dsl, errors, gdsm, harness, jets, maps, singular

__all__ = ["dsl", "errors", "gdsm", "harness", "jets", "maps", "singular"]
__version__ = "0.1.0"
