"""MMM collapse-model effects on two-mode BEC Mach-Zehnder interferometry."""
from .core import (
    AMU,
    HBAR,
    M_E,
    DualFockState,
    Interferometer,
    MmmParams,
    PhaseAveragedState,
    ProductState,
    dephasing_factor,
    depletion_factor,
    macroscopicity,
    macroscopicity_from_visibility,
)
from .correlations import SecondOrderTriple, first_order_counts, kth_order_depletion, second_order
from .counts import (
    CountDistribution,
    bernoulli_depletion,
    dfs_bernoulli_depletion,
    dfs_counts,
    dfs_counts_general,
    hom_model,
    hom_parity_observable,
    paps_counts,
    ps_counts,
    ps_variance,
)

__version__ = "0.1.0"
