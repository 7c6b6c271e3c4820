"""Contact processes between users and small cells."""

from .mobility import (MobilityConfig, UserPath, default_communities, generate_tvcm_trace,
                       home_time_fraction, place_cells, tvcm_paths)
from .poisson import exponential_trace
from .trace import (ENTER, EXIT, ContactTrace, estimate_lambda, first_encounters, load_trace,
                    save_trace)

__all__ = [
    'ContactTrace', 'ENTER', 'EXIT', 'first_encounters', 'estimate_lambda',
    'save_trace', 'load_trace', 'exponential_trace',
    'MobilityConfig', 'UserPath', 'default_communities', 'place_cells', 'tvcm_paths',
    'generate_tvcm_trace', 'home_time_fraction',
]
