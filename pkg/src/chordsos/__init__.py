"""Chordal decomposition and completion of sparse SOS polynomial matrices."""

from .chordal import (CliqueSet, CliqueTree, EliminationOrder, SparsityGraph, chordal_cliques, chordal_extension,
                      clique_tree, is_chordal, maximal_cliques)
from .conic import Cone, ConicProblem, SolveResult, SolverSettings, Status, psd_project, solve
from .poly import Monomial, Polynomial, PolyMatrix, monomial_basis, variables
from .psdchordal import NotChordalError, NotPSDError, PartialSymMatrix, SparseSymMatrix, complete_psd, decompose_psd
from .sdpa import export_sdpa, parse_sdpa
from .sosdc import (PartialPolyMatrix, SosCompletion, SosDecomposition, check_consistency, complete_sos,
                    decompose_sos, verify_decomposition)
from .sosgram import GramCertificate, find_gram, is_sos, reconstruct
from .sosprog import (SosProgram, SosProgramResult, arrow_benchmark, conservatism_example, eig_bound_program,
                      solve_decomposed, solve_dense)

__all__ = ["CliqueSet", "CliqueTree", "EliminationOrder", "SparsityGraph", "chordal_cliques",
           "chordal_extension", "clique_tree", "is_chordal", "maximal_cliques", "Cone", "ConicProblem",
           "SolveResult", "SolverSettings", "Status", "psd_project", "solve", "Monomial", "Polynomial",
           "PolyMatrix", "monomial_basis", "variables", "NotChordalError", "NotPSDError", "PartialSymMatrix",
           "SparseSymMatrix", "complete_psd", "decompose_psd", "export_sdpa", "parse_sdpa",
           "PartialPolyMatrix", "SosCompletion", "SosDecomposition", "check_consistency", "complete_sos",
           "decompose_sos", "verify_decomposition", "GramCertificate", "find_gram", "is_sos", "reconstruct",
           "SosProgram", "SosProgramResult", "arrow_benchmark", "conservatism_example", "eig_bound_program",
           "solve_decomposed", "solve_dense"]

__version__ = "0.1.0"
