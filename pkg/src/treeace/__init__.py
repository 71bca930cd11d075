"""Process-tensor MPOs for open quantum systems with many environment modes."""
from .contraction import CompressionPolicy, ContractionPlan, contract
from .propagation import SystemPropagator, Trajectory, propagate
from .ptmpo import PTMPO, combine, combine_preselect, sv_spectrum, sweep_compress, tensor_distance

__version__ = "0.1.0"

__all__ = ["PTMPO", "CompressionPolicy", "ContractionPlan", "SystemPropagator", "Trajectory",
           "combine", "combine_preselect", "contract", "propagate", "sv_spectrum", "sweep_compress",
           "tensor_distance"]
