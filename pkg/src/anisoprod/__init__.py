"""Anisotropic product harmonic analysis on grids: expansive dilations and
quasi-norms, Muckenhoupt weights, Calderon filter pairs, Littlewood-Paley
transforms, bump decompositions, product singular integrals, dyadic cubes
and rectangular atoms."""

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .grid import Grid, GridFunction, read_agf, write_agf  # noqa: E402
from .dilation import Dilation, make_dilation, quasi_norm, continuous_quasi_norm  # noqa: E402
from .weights import WeightField, ap_constant_estimate, weight_from_spec  # noqa: E402
from .calderon import CalderonPair, build_calderon_pair  # noqa: E402
from .transforms import decompose, area_function, g_function, g_function_product, lebesgue_norm  # noqa: E402
from .bump import decompose_bump  # noqa: E402
from .pasio import KernelModel, make_tensor_cz_kernel, kernel_from_spec, apply_pasio  # noqa: E402
from .atoms import christ_cubes, make_rectangular_atom, certify_atom, Rect  # noqa: E402
from .config import ExperimentConfig, load_config, default_config  # noqa: E402
