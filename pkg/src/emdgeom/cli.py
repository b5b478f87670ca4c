"""``emd`` command line tool.

    emd approx    -i scene.json --epsilon 0.2 -o plan.json [--svg out.svg]
    emd exact-l1  -i scene.json --tol 1e-7 [-o plan.json] [--l1-length]
    emd oracle    -i scene.json --resolution 500
    emd validate  -i scene.json -p plan.json

Exit codes: 0 success, 1 bad input, 2 a guarantee or check failed.
Set EMD_LOG=error|info|debug for log output on stderr.
"""
import argparse
import json
import logging
import os
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field

log = logging.getLogger("emdgeom")

EXIT_OK, EXIT_INPUT, EXIT_CHECK = 0, 1, 2
VIOLATION_LIMIT = 1e-6


@dataclass
class RunManifest:
    """What was run, with which inputs, and what came out."""
    input: str
    command: str
    epsilon: float = None
    metric: str = None
    seed: int = 0
    versions: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    costs: dict = field(default_factory=dict)
    guarantee: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def dump(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(_plain(self.to_dict()), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _plain(obj):
    """Recursively turn numpy scalars and tuples into JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return obj.item()
    return obj


def versions():
    import numpy
    import scipy
    from importlib import metadata
    from . import _kernels
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"emdgeom": own, "numpy": numpy.__version__, "scipy": scipy.__version__,
            "python": sys.version.split()[0], "kernels": _kernels.BACKEND}


def manifest_path(output):
    root, _ = os.path.splitext(output)
    return root + ".manifest.json"


def _load(args):
    from .scene import load_scene
    from dataclasses import replace
    scene = load_scene(args.input, rebalance=args.rebalance)
    if getattr(args, "metric", None):
        scene = replace(scene, metric=args.metric)
    return scene


def _write_outputs(args, plan, scene, manifest):
    from .lift import dump_plan
    if args.output:
        dump_plan(plan, args.output)
        manifest.dump(manifest_path(args.output))
        print(f"plan written to {args.output}")
    if args.svg:
        from .svg import write_svg
        write_svg(plan, args.svg, scene)
        print(f"svg written to {args.svg}")


def cmd_approx(args):
    from .pipeline import PipelineConfig, run
    scene = _load(args)
    cfg = PipelineConfig(epsilon=args.epsilon, seed=args.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        plan = run(scene, cfg)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    g = plan.meta["guarantee"]
    lower, est, upper = plan.costs()
    print(f"cost lower {lower:.12g} estimate {est:.12g} upper {upper:.12g}")
    print(f"guarantee {g.pair_kind} delta {g.delta:.6g} ratio {g.ratio:.6g} "
          f"additive {g.sandwich_additive:.6g} certified {g.certified}")
    manifest = RunManifest(str(args.input), "approx", args.epsilon, scene.metric, args.seed,
                           versions(), _plain(plan.meta["timings"]),
                           {"lower": lower, "estimate": est, "upper": upper},
                           _plain(g.as_dict()))
    _write_outputs(args, plan, scene, manifest)
    return EXIT_OK if g.certified else EXIT_CHECK


def cmd_exact_l1(args):
    from .l1exact import solve_scene
    scene = _load(args)
    t = time.perf_counter()
    plan, gap, _ = solve_scene(scene, tol=args.tol, l1_length=args.l1_length)
    elapsed = time.perf_counter() - t
    obj = plan.meta["objective"]
    print(f"cost {obj:.12g} gap {gap:.3g} iterations {plan.meta['iterations']}")
    manifest = RunManifest(str(args.input), "exact-l1", None, scene.metric, args.seed,
                           versions(), {"total": elapsed},
                           {"lower": obj - gap, "estimate": obj, "upper": obj},
                           {"gap": gap, "tol": args.tol, "converged": plan.meta["converged"],
                            "l1_length": args.l1_length})
    _write_outputs(args, plan, scene, manifest)
    return EXIT_OK if plan.meta["converged"] else EXIT_CHECK


def cmd_oracle(args):
    from .oracle import oracle_emd
    scene = _load(args)
    t = time.perf_counter()
    res = oracle_emd(scene, args.resolution, seed=args.seed)
    print(f"cost {res.cost:.12g} +- {res.error_bound:.6g} (resolution {res.resolution}, "
          f"nodes {res.nodes[0]}x{res.nodes[1]})")
    if args.output:
        manifest = RunManifest(str(args.input), "oracle", None, scene.metric, args.seed,
                               versions(), {"total": time.perf_counter() - t},
                               {"lower": res.cost - res.error_bound, "estimate": res.cost,
                                "upper": res.cost + res.error_bound},
                               {"resolution": res.resolution, "certified": res.certified})
        manifest.dump(args.output)
    return EXIT_OK if res.certified else EXIT_CHECK


def cmd_validate(args):
    from .lift import plan_from_dict, validate_plan
    from .scene import normalize
    scene = _load(args)
    with open(args.plan, encoding="utf-8") as fh:
        data = json.load(fh)
    plan = plan_from_dict(data, scene)
    if data.get("normalized"):
        scene = normalize(scene)
    report = validate_plan(plan, scene)
    worst = report["max_violation"]
    print(f"max violation {worst:.3g} (worst object {report['worst_object'][0]}"
          f"{report['worst_object'][1]}), assignments {len(plan)}")
    if args.svg:
        from .svg import write_svg
        write_svg(plan, args.svg, scene)
    return EXIT_OK if worst <= VIOLATION_LIMIT else EXIT_CHECK


def build_parser():
    parser = argparse.ArgumentParser(prog="emd", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, output=True):
        p.add_argument("-i", "--input", required=True, help="scene JSON file")
        if output:
            p.add_argument("-o", "--output", help="write the plan (JSON) here")
        p.add_argument("--metric", choices=("l1", "l2"), help="override the scene metric")
        p.add_argument("--seed", type=int, default=0, help="seed for Monte Carlo clipping")
        p.add_argument("--threads", type=int, help="threads for numeric libraries")
        p.add_argument("--rebalance", action="store_true",
                       help="rescale point weights to the other side's mass")
        p.add_argument("--svg", help="write an SVG rendering (planar scenes)")

    p = sub.add_parser("approx", help="(1+epsilon)-approximate transport plan")
    common(p)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("exact-l1", help="exact points-to-segments plan under L1")
    common(p)
    p.add_argument("--tol", type=float, default=1e-7, help="relative Frank-Wolfe gap")
    p.add_argument("--l1-length", action="store_true",
                   help="measure segment length in L1 as well")
    p.set_defaults(func=cmd_exact_l1)

    p = sub.add_parser("oracle", help="brute-force reference cost")
    common(p)
    p.add_argument("--resolution", type=int, default=500, help="pieces per unit length")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("validate", help="check a plan's mass balance against a scene")
    common(p, output=False)
    p.add_argument("-p", "--plan", required=True, help="plan JSON file")
    p.set_defaults(func=cmd_validate)
    return parser


def _setup_logging():
    level = os.environ.get("EMD_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads:
        # must happen before numpy is first imported
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    _setup_logging()
    from .flowsolve import FlowError
    from .l1exact import L1Error
    from .oracle import OracleError
    from .pipeline import PipelineError
    from .scene import SceneError
    try:
        return args.func(args)
    except (SceneError, L1Error, OracleError, PipelineError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
