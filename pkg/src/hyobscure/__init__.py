"""Hybrid obfuscation and generalization of user data against attribute inference."""

from ._kernels import BACKEND
from .dataset import CsvSchema, Dataset, DatasetError, load_csv, synth_population
from .initgen import (
    GenConstraints,
    GeneralizationFn,
    InfeasibleConstraintsError,
    feasibility_check,
    init_generalization,
)
from .obfopt import ClusterModel, ObfuscationMatrix, SolverWarning, cluster_users, solve_obfuscation
from .pipeline import ObscureReport, PipelineConfig, PublishedDataset, publish, run, verify_theorems

__version__ = "0.1.0"
