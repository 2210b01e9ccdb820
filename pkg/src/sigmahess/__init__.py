"""Elementary symmetric functions, Garding cones, form certificates and a
finite-difference solver for ``sigma_{n-1}`` Hessian and curvature equations."""
from .cone import ConeSpec, gamma_margin, in_gamma_k, min_eig_ratio_bound, sample_gamma_k
from .errors import SigmaHessError, SolverError
from .geometry import GraphJet, curvatures
from .kernels import BACKEND
from .symfunc import CurvatureVector, sigma, sigma_all, sigma_excl, sigma_grad, sigma_hess

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConeSpec", "CurvatureVector", "GraphJet", "SigmaHessError", "SolverError",
    "curvatures", "gamma_margin", "in_gamma_k", "min_eig_ratio_bound", "sample_gamma_k",
    "sigma", "sigma_all", "sigma_excl", "sigma_grad", "sigma_hess",
]
