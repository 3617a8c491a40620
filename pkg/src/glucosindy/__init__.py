"""Sparse identification of blood-glucose dynamics from CGM, insulin and meal data."""

__version__ = "0.1.0"

from .absorption import BergerParams, absorption_input, bergerize, cumulative_absorption, t50
from .ingest import EventList, IngestError, PatientDataset, dataset_to_csv, parse_events_csv, parse_ohio_xml
from .metrics import MetricsRecord, compute_metrics
from .pipeline import (EvaluationReport, GridSearchRecord, PipelineError, Settings, ShiftSelection,
                       absorb_day, evaluate_test, grid_search_shifts, select_best_model)
from .simulate import REFERENCE_MODEL, SimulationResult, constant_model, evaluate_rhs, simulate_day, simulate_many
from .sindy import (EmptyModelError, LibraryMatrix, SindyHyper, SparseModel, TermDescriptor, build_library,
                    fit_day, library_terms, stlsq)
from .synthetic import DEFAULT_TRUE_MODEL, GroundTruth, SynthSpec, synthesize_dataset
from .timeseries import (DaySegment, ShiftConfig, UniformSeries, differentiate, resample_to_grid, segment_days,
                         shift_grid, shift_series)
