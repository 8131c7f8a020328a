"""Cross-gramian model order reduction for linear MIMO systems.

Empirical controllability, observability and cross gramians (including
the non-symmetric cross gramian for non-symmetric and non-square
systems), balanced truncation and Galerkin reduction, on top of small
from-scratch dense linear algebra.
"""

from .gramians import (GramianSet, compute_gramians, hankel_values, sylvester_residual, wc_empirical,
                       wo_empirical, wx_embedding, wx_empirical, wz_nonsymmetric)
from .ltisys import (LtiSystem, SimGrid, averaged_siso, embed_symmetric, is_stable, lehmer_system,
                     random_system, siso_subsystem, stability_certificate)
from .reduce import (Projection, RomReport, apply_projection, balanced_truncation, error_sweep,
                     galerkin_from_gramian)
from .sim import impulse_response, l2_rel_error, simulate_free

__version__ = "0.1.0"

__all__ = [
    "GramianSet", "LtiSystem", "Projection", "RomReport", "SimGrid",
    "apply_projection", "averaged_siso", "balanced_truncation", "compute_gramians",
    "embed_symmetric", "error_sweep", "galerkin_from_gramian", "hankel_values",
    "impulse_response", "is_stable", "l2_rel_error", "lehmer_system", "random_system",
    "simulate_free", "siso_subsystem", "stability_certificate", "sylvester_residual",
    "wc_empirical", "wo_empirical", "wx_embedding", "wx_empirical", "wz_nonsymmetric",
]
