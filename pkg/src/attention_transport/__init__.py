"""Attention and the Transformer encoder as transport of discrete probability measures."""
from .attention import (AttentionSpec, FFNLayer, Head, TransformerSpec, attention_classical,
                        attention_kernel_apply, attention_via_kernel, discrete_recovery_check,
                        particle_flow, self_attention_step, transformer_classical, transformer_step)
from .entropy import (MaxEntProblem, entropy_functional, expfam_project, kl, maxent_solve,
                      maxent_verify, smoothed_projection_experiment)
from .kernels import (Constant, ExpDot, Gaussian, Identity, Linear, Scale, ScaledDotProjected, Table,
                      boltzmann_gibbs, potential_constants)
from .measures import Box, DiscreteMeasure, bounding_box, dirac, empirical, mixture, moment
from .regularity import (BoundReport, bound_attention, bound_corollary_query, bound_gaussian_unbounded,
                         bound_psi_measure, bound_psi_query, empirical_ratio, ratio_lemma_max)
from .applications import fixed_point_iterate, neighborhood_gap, sequence_perturbation
from .transport import TransportPlan, check_tensorization, w1, w1_assignment, w1_exact

__version__ = "0.1.0"
