"""Equilibrated stress reconstruction and guaranteed error estimation.

2D P2 finite elements for small-strain hyperelasticity with weakly
symmetric H(div) stress reconstructions, guaranteed energy-error bounds
split into discretization, linearization, quadrature and oscillation
estimators, and the adaptive algorithm that balances them.

Submodules and the names listed in ``_API`` are imported lazily so the
command line driver can pin BLAS thread counts before numpy loads.
"""

from importlib import import_module

__version__ = "0.1.0"

_SUBMODULES = ("adaptivity", "cases", "cli", "constitutive", "errors",
               "estimators", "fe", "io", "mesh", "quadrature",
               "reconstruction", "solver")

_API = {
    "AdaptiveConfig": "adaptivity",
    "RunLog": "adaptivity",
    "run_adaptive": "adaptivity",
    "uniform_study": "adaptivity",
    "compare_stopping": "adaptivity",
    "make_case": "cases",
    "make_law": "constitutive",
    "build_geometry": "mesh",
    "Mesh": "mesh",
    "P2Space": "fe",
    "make_quadrature": "quadrature",
    "NewtonSolver": "solver",
    "Reconstructor": "reconstruction",
    "local_estimators": "estimators",
    "total_bound": "estimators",
    "basic_bound": "estimators",
    "energy_error": "estimators",
    "write_run_csv": "io",
    "read_run_csv": "io",
    "ConfigurationError": "errors",
    "SolverError": "errors",
    "ReconstructionError": "errors",
    "InternalError": "errors",
}

__all__ = sorted((*_SUBMODULES, *_API))


def __getattr__(name):
    if name in _SUBMODULES:
        return import_module(f".{name}", __name__)
    if name in _API:
        return getattr(import_module(f".{_API[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return __all__
