"""Robust safety toolkit for small perturbed dynamical systems.

Core pieces: an expression language with automatic differentiation and
interval evaluation, perturbed simulation, grid-based reachable sets,
trajectory steering, empirical robust stability checks, numerical Lyapunov
synthesis, and barrier certificate construction, all driven either as a
library or through scenario files via the ``robustcert`` command.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "Interval": "intervals",
    "IntervalBox": "intervals",
    "Expr": "exprlang",
    "ExprSyntaxError": "exprlang",
    "DomainError": "exprlang",
    "NonDifferentiableError": "exprlang",
    "parse": "exprlang",
    "eval_expr": "exprlang",
    "grad": "exprlang",
    "eval_interval": "exprlang",
    "to_string": "exprlang",
    "RegionSpec": "regions",
    "SystemSpec": "dynamics",
    "DisturbancePolicy": "dynamics",
    "Trajectory": "dynamics",
    "simulate": "dynamics",
    "estimate_lipschitz": "dynamics",
    "GridSet": "grids",
    "reach_over": "reachability",
    "reach_under": "reachability",
    "check_safety": "reachability",
    "check_assumption1": "reachability",
    "check_invariance": "reachability",
    "SafetyReport": "reachability",
    "Assumption1Report": "reachability",
    "SteeringParams": "steering",
    "SteeringResult": "steering",
    "MembershipReport": "steering",
    "steering_radius": "steering",
    "make_steering_params": "steering",
    "construct_steering": "steering",
    "verify_membership": "steering",
    "ClassKFn": "lyapunov",
    "LyapunovCertificate": "lyapunov",
    "VerifyResult": "lyapunov",
    "RuasReport": "lyapunov",
    "SynthesisError": "lyapunov",
    "check_ruas_empirical": "lyapunov",
    "synthesize_V": "lyapunov",
    "verify_V": "lyapunov",
    "BarrierCertificate": "barrier",
    "ExtendedClassKFn": "barrier",
    "LevelChoice": "barrier",
    "ReplayReport": "barrier",
    "CertificationError": "barrier",
    "construct_negV": "barrier",
    "choose_level_c": "barrier",
    "construct_levelled": "barrier",
    "construct_reciprocal": "barrier",
    "certify": "barrier",
    "replay_invariance": "barrier",
    "Scenario": "scenario",
    "ScenarioError": "scenario",
    "load_scenario": "scenario",
    "main": "cli",
}

__all__ = ["__version__", *_EXPORTS]


def __getattr__(name):
    module = _EXPORTS.get(name)
    if module is None:
        raise AttributeError(f"module 'robustcert' has no attribute {name!r}")
    return getattr(importlib.import_module(f".{module}", __name__), name)


def __dir__():
    return sorted(__all__)
