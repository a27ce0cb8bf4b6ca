"""Estimating treatment effects when the outcome is only seen in a selected sample.

Graphs and identification criteria live in :mod:`selbias.graph` and
:mod:`selbias.criteria`; estimation in :mod:`selbias.estimators`,
:mod:`selbias.glm` and :mod:`selbias.inference`; simulation in
:mod:`selbias.sim`.
"""

from .criteria import (
    CriterionVerdict,
    check_gact3,
    check_gformula_conditions,
    check_ipw_conditions,
    check_mathur_shpitser,
    check_selection_backdoor,
)
from .data import Dataset, Roles, read_csv, write_csv
from .estimators import KnownProbability, FittedPropensity, crude, g_computation, hajek, ht
from .formula import ModelSpec, parse_formula
from .glm import LogisticFit, fit_logistic
from .graph import CausalGraph, build_graph, d_separated, parse_graph, to_swig
from .inference import AteEstimate, bootstrap_gcomp, crude_hc0, sandwich, wald
from .sim import CASE1, CASE2, Dgp, SimConfig, run_study, true_ate

__all__ = [
    "CriterionVerdict", "check_gact3", "check_gformula_conditions", "check_ipw_conditions",
    "check_mathur_shpitser", "check_selection_backdoor",
    "Dataset", "Roles", "read_csv", "write_csv",
    "KnownProbability", "FittedPropensity", "crude", "g_computation", "hajek", "ht",
    "ModelSpec", "parse_formula",
    "LogisticFit", "fit_logistic",
    "CausalGraph", "build_graph", "d_separated", "parse_graph", "to_swig",
    "AteEstimate", "bootstrap_gcomp", "crude_hc0", "sandwich", "wald",
    "CASE1", "CASE2", "Dgp", "SimConfig", "run_study", "true_ate",
]

__version__ = "0.1.0"
