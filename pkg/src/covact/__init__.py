"""Covariance descriptors of video clips and sparse-representation classifiers over them."""

from .classify import EvalReport, evaluate, majority_vote, nn_classify_clip
from .covariance import CovarianceDescriptor, IntegralStats, covariance_direct, covariance_integral, regularize
from .features import FeatureSetMask, FeatureStack, assemble_stack, depth_mask, kinematic_vector
from .flow import FlowField, FlowParams, estimate_flow, flow_derivatives
from .omp import SparseCode, VectorDictionary, batch_omp, build_dictionary, class_residuals
from .spd import LogDescriptor, logdet_divergence, matrix_exp, matrix_log, vectorize, whiten
from .tsc import MaxdetSolution, TensorDictionary, build_tensor_dictionary, maxdet_solve, tsc_classify_clip

__version__ = "0.1.0"
