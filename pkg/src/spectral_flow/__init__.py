"""Counting eigenvalues that a strong impurity pushes through a spectral gap
of a periodic discrete Schrödinger operator on the lattice."""

__version__ = "0.1.0"

from .asymptotics import (
    ExperimentReport,
    FlowRecord,
    SandwichResult,
    SplitCounts,
    TheoreticalIntegral,
    admissible_eps2,
    convergence_study,
    eps2_bound,
    flow_count,
    region_split_counts,
    riemann_sandwich,
    theoretical_integral,
)
from .birman_schwinger import BSOperator, BSRecord, build_bs, verify_bs_principle
from .bloch import BandStructure, band_structure, bloch_matrix, find_gap, ids_bloch
from .domain import (
    Annulus,
    Ball,
    Box,
    CubeCell,
    LatticeDomain,
    RegionSplit,
    boundary_links,
    cut_links,
    enumerate_sites,
    scale,
)
from .dos import DosTable, FiniteVolumeEstimate, bloch_dos_table, ids_finite_volume
from .eigencount import InertiaResult, SpectrumCounter, count_below, eigenvalues_in_window, inertia, n_plus
from .errors import (
    ConfigError,
    DomainError,
    FactorizationError,
    ModelError,
    NotInGap,
    NumericalError,
    ResolventSingular,
    SpectralFlowError,
    ThresholdHitsSpectrum,
)
from .model import ConstantPsi, ModelSpec, QuadraticPsi, TabulatedPsi
from .operators import SparseSymmetricOperator, assemble, assemble_perturbed

__all__ = [name for name in dir() if not name.startswith("_")]
