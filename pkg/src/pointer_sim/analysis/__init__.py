from .density import (ObservableParts, decoherence_factor, observable_decomposition, purity,
                      reduced_density_matrix, zurek_decoherence_factor)
from .diagnostics import DiagnosticsSeries, run_diagnostics, time_grid
from .interference import (InterferenceReport, branch_matrix, interference_filter,
                           random_local_probe, transition_row_sums)
from .pointers import (Plateau, PointerSet, find_pointer_states, hypercube_extrema,
                       track_pointer_states)
from .scaling import ScalingReport, equal_law, fluctuation_scaling, matrix_elements

__all__ = [
    "DiagnosticsSeries", "InterferenceReport", "ObservableParts", "Plateau", "PointerSet",
    "ScalingReport", "branch_matrix", "decoherence_factor", "equal_law", "find_pointer_states",
    "fluctuation_scaling", "hypercube_extrema", "interference_filter", "matrix_elements",
    "observable_decomposition", "purity", "random_local_probe", "reduced_density_matrix",
    "run_diagnostics", "time_grid", "track_pointer_states", "transition_row_sums",
    "zurek_decoherence_factor",
]
