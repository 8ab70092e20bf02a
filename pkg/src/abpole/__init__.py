"""Numerical laboratory for the eigenvalue shift of a half-flux pole
approaching the rim of the half-disk, together with the slit half-plane
problem that governs the limit.

Submodules are imported lazily so the command-line front end can pin the
thread environment before the numeric stack loads.
"""

__version__ = "0.1.0"

_EXPORTS = {
    "mesh": ["PlanarMesh", "SlitTopology", "MeshError", "build_half_disk_mesh",
             "insert_slit", "locate_point", "save_mesh", "load_mesh",
             "DIRICHLET_ARC", "DIAMETER", "SLIT_PLUS", "SLIT_MINUS"],
    "assembly": ["ANTIPERIODIC", "CONTINUOUS", "MagneticPotential", "WeightField",
                 "OperatorAssembly", "assemble", "stiffness_mass", "edge_load",
                 "boundary_integral", "build_reduction", "psi_j_eval", "psi_j_grad",
                 "hardy_ratio", "poincare_check"],
    "eigen": ["EigenPair", "SpectrumSlice", "solve_lowest", "align_sign",
              "simplicity_guard"],
    "oracles": ["HalfDiskMode", "half_disk_modes", "mode_field", "mode_gradient"],
    "almgren": ["FieldSampler", "boundary_average_H", "energy_E", "frequency",
                "frequency_profile", "logH_derivative_check",
                "vanishing_order_and_beta", "blowup_modulus_compare"],
    "crack": ["CrackProblemSpec", "CrackSolveResult", "CrackProfileResult",
              "slit_load_strength", "build_crack_domain", "solve_crack_fixed_radius",
              "solve_limit_profile", "omega_fourier", "special_angle_classification",
              "special_angle_identity", "scan_directions"],
    "rays": ["ModelProblem", "ReferenceSolution", "RaySample", "RayStudyResult",
             "PowerLawFit", "default_ray_schedule", "default_cut", "dogleg_cut",
             "pole_slit_mesh", "reference_solution", "solve_at_pole", "run_ray",
             "fit_power_law", "extrapolate_coefficient", "verify_theorem"],
    "config": ["Config", "ConfigError", "SCHEMA", "parse_config",
               "parse_config_text", "default_config_text"],
}

_ATTR_TO_MODULE = {name: mod for mod, names in _EXPORTS.items() for name in names}

__all__ = ["__version__", *_ATTR_TO_MODULE]


def __getattr__(name):
    mod = _ATTR_TO_MODULE.get(name)
    if mod is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    import importlib

    value = getattr(importlib.import_module(f".{mod}", __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(__all__)
