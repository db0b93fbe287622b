"""Plot-model DBN toolkit: libraries, filtering, interventions, learning."""

from .core import (CategoryProfile, Channel, CptCollection, IntensityCpt,
                   IntensitySpec, ParentRef, PhaseSpace, PlotModel, TaskCpt,
                   TaskGraph, TransitionParams, ValidationReport, Violation,
                   build_transition_matrix, slice_graph, unroll, validate_model)
from .errors import (ConfigurationError, DimensionMismatchError,
                     InconsistentEvidenceError, InvalidRecordError,
                     LibraryError, ModelLoadError, ModelValidationError,
                     NonAncestralDataError, PlotDbnError, SecureTableError,
                     StateSpaceCapError, UnknownVertexError)
from .inference import (BeliefState, FilterStep, MixtureStep, SmoothResult,
                        filter_log, filter_mixture, filter_step, init_belief,
                        predict, smooth)
from .interventions import (AttributeSpec, Decision, UtilitySpec, UtilityTerm,
                            apply_intervention, rank_decisions, seu)
from .learning import (CompletedIncident, CountTables, DesignedSample,
                       DirichletCpt, check_ancestral, harvest_counts,
                       update_from_designed_samples, update_from_incidents)
from .library import (DiffReport, Library, NoveltyReport, SharedStructure,
                      add_entry, diff, harmonise, sanitize_export, seed_entry,
                      shared_structure)
from .model_io import load_model, model_from_doc, model_to_doc, save_model
from .records import MISSING, ObservationRecord, read_log, write_log
from .simulate import (BatchResult, IncidentResult, SimulationConfig,
                       simulate_batch, simulate_incident, write_archive)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
