"""Arbitrated matching-adjusted indirect comparison.

Classic MAIC, overlap-weight arbitration between two trials, weighted
effect estimation with sandwich standard errors, and the two sponsor /
arbitrator protocols.
"""

__version__ = "0.1.0"

from .arbitration import (ArbitrationConfig, ResultsPackage, WeightsPackage, arbitrate_ipd,
                          arbitrator_combine, sponsor_run, sponsor_run_selfservice)
from .covgen import CovGenModel, build_model, generate
from .data_model import (AgdSummary, CovariateSpec, IpdTrial, SubjectRecord, load_worked_example,
                         read_agd_json, read_ipd_csv, summarize_ipd, worked_example_trials, validate_trial)
from .errors import (ArbiterError, DegenerateCellError, InfeasibleTargetError, ProtocolError,
                     SchemaError, SeparationError)
from .estimators import (EffectEstimate, anchored_combine, classic_maic, published_effect,
                         weighted_contrast, weighted_logodds)
from .propensity import PropensityModel, exact_discrete_propensity, fit_logistic, predict
from .simharness import ScenarioSpec, run_study, simulate_pair, paradox_scenario, true_effects
from .weighting import (EstimandKind, WeightVector, ess, maic_weights, overlap_weights, tilt,
                        weighted_covariate_summary)
