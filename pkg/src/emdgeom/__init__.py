"""Earth mover's distance between points, segments, triangles and simplices.

Submodules load on first attribute access so that the command line tool
can configure thread counts before numpy is imported.
"""
import importlib

_EXPORTS = {
    "MassScene": "scene", "MassSide": "scene", "SceneError": "scene",
    "load_scene": "scene", "parse_scene": "scene", "normalize": "scene",
    "PipelineConfig": "pipeline", "Guarantee": "pipeline", "run": "pipeline",
    "delta_for": "pipeline",
    "TransportPlan": "lift", "validate_plan": "lift", "dump_plan": "lift",
    "plan_to_dict": "lift", "plan_from_dict": "lift",
    "oracle_emd": "oracle", "OracleResult": "oracle",
    "build_l1_program": "l1exact", "solve_l1_program": "l1exact", "solve_scene": "l1exact",
    "solve_transportation": "flowsolve",
    "plan_svg": "svg", "write_svg": "svg",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    if name in _EXPORTS:
        return getattr(importlib.import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(f"module 'emdgeom' has no attribute {name!r}")
