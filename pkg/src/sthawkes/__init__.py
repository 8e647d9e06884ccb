"""Spatiotemporal self-exciting point process toolkit.

Pipeline: ingest an event catalog, estimate a separable kernel background,
infer the excitation parameters by gradient-based MCMC, decompose events
into endemic and triggered components, and run Knox / space-time K
interaction tests.  See the CLI (``sthawkes --help``) for the end-to-end
workflow.
"""

from ._kernels import backend_name
from .background import (BackgroundModel, epanechnikov, eval_background,
                         fit_background)
from .catalog import (Event, EventCatalog, FilterReport, IngestConfig, Region,
                      load_catalog, merge_duplicates, remove_holidays,
                      save_catalog)
from .errors import CatalogError, NumericalError, SimulationError
from .hawkes import (HawkesParams, IntensityDecomposition, classify_triggered,
                     conditional_intensity, decompose_events,
                     expected_offspring_cascade, log_likelihood,
                     log_likelihood_grad, predict_grid, spatial_kernel)
from .inference import (ChainDiagnostics, PosteriorSamples, PriorSpec,
                        SamplerConfig, export_traceplots, log_posterior,
                        sample_posterior, summarize)
from .simulate import LabeledCatalog, SimConfig, simulate, simulate_ogata, snap
from .stattests import KFunctionResult, KnoxResult, knox_test, st_kfunction

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
