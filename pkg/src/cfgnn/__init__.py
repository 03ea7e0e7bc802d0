"""Cell-free massive MIMO toolkit: channel simulation, WMMSE, and sparsified GNNs.

The package is organised in three tiers:

* numerical core: ``autodiff``, ``linalg``, ``rng``, ``channel``, ``datasets``,
  ``metrics``, ``wmmse``, ``model``, ``training``, ``bench``
* HTTP service: ``cfgnn.service`` (FastAPI app wrapping the core)
* command line: ``cfgnn.cli`` (a thin client that talks to the service,
  in-process by default)
"""

__version__ = "0.1.0"
