"""Command-line interface.

Exit codes: 0 success, 2 validation error, 3 numeric error.
"""

import argparse
import json
import logging
import sys

import numpy as np

from . import io
from .element import DEFAULT_MASS_SAMPLES, estimate_mass_mc
from .errors import DomainError, NumericError
from .mixture import (
    EmConfig,
    compose_mixtures,
    em_fit,
    fuse_mixtures,
    init_mixture,
    l2_distance_sq,
    prune,
    reduce_by_merging,
    sample_mixture,
    seed_centers,
)
from .pipeline import (
    SAMPLE_KINDS,
    GraspCriterion,
    Observation,
    PipelineConfig,
    SampleSpec,
    demo_observations,
    grasp_check,
    make_samples,
    run_pipeline,
)

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3


def _inputs(args, count):
    paths = args.inputs or []
    if len(paths) != count:
        raise DomainError(f"{args.command} expects {count} --in file(s), got {len(paths)}")
    return paths


def _mixture(path):
    return io.mixture_from_dict(io.load_json(path))


def _emit(args, payload=None, text=None):
    if text is None:
        text = io.dump_json(payload)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _format(args, default):
    # shared parent actions make per-subcommand defaults leak, so resolve here
    return args.format or default


def _floats(text):
    return [float(v) for v in text.replace(",", " ").split()]


def cmd_make_samples(args):
    spec = SampleSpec(args.kind, _floats(args.params))
    X = make_samples(args.n or 1000, spec, args.seed)
    if _format(args, "csv") == "json":
        _emit(args, {"samples": X.tolist()})
    else:
        _emit(args, text=io.write_samples_csv(X))


def cmd_sample(args):
    (path,) = _inputs(args, 1)
    X, idx = sample_mixture(_mixture(path), args.n or 1000, args.seed)
    if _format(args, "csv") == "json":
        _emit(args, {"samples": X.tolist(), "component": idx.tolist()})
    else:
        _emit(args, text=io.write_samples_csv(X, idx))


def cmd_fit(args):
    (path,) = _inputs(args, 1)
    X, _ = io.read_samples_csv(path)
    if len(X) == 0:
        raise DomainError("sample file is empty")
    init = init_mixture(X[seed_centers(X, args.k, args.seed)], trans_var=args.init_trans_var)
    cfg = EmConfig(max_iterations=args.max_iter, min_increment=args.tolerance or 1e-8, seed=args.seed)
    m, trace = em_fit(init, X, cfg)
    out = io.mixture_to_dict(m)
    out["log_likelihood"] = trace
    _emit(args, out)


def cmd_fuse(args):
    a, b = _inputs(args, 2)
    _emit(args, io.mixture_to_dict(fuse_mixtures(_mixture(a), _mixture(b), args.alpha_form)))


def cmd_compose(args):
    pose, motion = _inputs(args, 2)
    _emit(args, io.mixture_to_dict(compose_mixtures(_mixture(pose), _mixture(motion))))


def cmd_prune(args):
    (path,) = _inputs(args, 1)
    m, dropped = prune(_mixture(path), threshold=args.threshold, count=args.count, budget=args.budget)
    out = io.mixture_to_dict(m)
    out["dropped_weight"] = dropped
    out["bound"] = 2.0 * dropped
    _emit(args, out)


def cmd_merge(args):
    (path,) = _inputs(args, 1)
    m, bounds = reduce_by_merging(_mixture(path), args.target, return_bounds=True)
    out = io.mixture_to_dict(m)
    out["bounds"] = bounds
    _emit(args, out)


def cmd_density(args):
    mpath, spath = _inputs(args, 2)
    m = _mixture(mpath)
    X, _ = io.read_samples_csv(spath)
    d = m.density(X) if len(X) else np.empty(0)
    if _format(args, "json") == "csv":
        _emit(args, text="density\n" + "".join(f"{float(v)!r}\n" for v in d))
    else:
        _emit(args, {"density": d.tolist()})


def cmd_mass(args):
    (path,) = _inputs(args, 1)
    m = _mixture(path)
    n = args.n or DEFAULT_MASS_SAMPLES
    est = [estimate_mass_mc(e, n, args.seed, args.method).to_dict() for e in m.elements]
    _emit(args, {"mass": est})


def cmd_distance(args):
    a, b = _inputs(args, 2)
    _emit(args, l2_distance_sq(_mixture(a), _mixture(b), args.n or 20000, args.seed).to_dict())


def cmd_grasp_check(args):
    g, o = _inputs(args, 2)
    crit = GraspCriterion(args.G, args.epsilon, args.n or 20000, args.seed)
    ok, est = grasp_check(_mixture(g), _mixture(o), crit)
    _emit(args, {"pass": ok, "distance": est.to_dict()})


def _observations(data):
    obs = []
    for item in data["observations"]:
        obs.append(
            Observation(
                io.mixture_from_dict(item["feature_model"]),
                io.element_from_dict(item["camera_to_feature"]),
                io.element_from_dict(item["feature_to_object"]),
            )
        )
    return obs


def cmd_pipeline(args):
    if args.demo:
        obs, _ = demo_observations(args.seed)
    else:
        (path,) = _inputs(args, 1)
        try:
            obs = _observations(io.load_json(path))
        except (KeyError, TypeError) as exc:
            raise DomainError(f"malformed observations file ({exc})") from exc
    cfg = PipelineConfig(
        prune_budget=args.budget,
        merge_target=args.target,
        prune_max_drop=args.max_drop,
        prune_threshold=args.threshold,
        seed=args.seed,
        integral_samples=args.n or 20000,
    )
    belief, report = run_pipeline(obs, cfg)
    _emit(args, {"belief": io.mixture_to_dict(belief), "report": report})


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (u64)")
    common.add_argument("--n", type=int, default=None, help="sample count")
    common.add_argument("--in", dest="inputs", action="append", metavar="PATH", help="input file (repeatable)")
    common.add_argument("--out", default=None, metavar="PATH", help="output file (default stdout)")
    common.add_argument("--format", choices=["json", "csv"], default=None, help="output format (csv for samples, json otherwise)")
    common.add_argument("--tolerance", type=float, default=None, help="relative convergence tolerance")
    common.add_argument("--max-iter", type=int, default=100)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mopg", description="Mixtures of projected Gaussians over 6-DOF poses.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("make-samples", parents=[common], help="draw synthetic pose samples")
    s.add_argument("--kind", required=True, choices=sorted(SAMPLE_KINDS))
    s.add_argument("--params", required=True, help="comma-separated parameters")
    s.set_defaults(func=cmd_make_samples)

    s = sub.add_parser("sample", parents=[common], help="draw samples from a mixture")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("fit", parents=[common], help="fit a mixture to samples by EM")
    s.add_argument("--k", type=int, default=3, help="number of components")
    s.add_argument("--init-trans-var", type=float, default=1e-6)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("fuse", parents=[common], help="fuse two mixtures")
    s.add_argument("--alpha-form", choices=["text", "code"], default="text")
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("compose", parents=[common], help="apply a motion mixture to a pose mixture")
    s.set_defaults(func=cmd_compose)

    s = sub.add_parser("prune", parents=[common], help="drop low-weight elements")
    s.add_argument("--threshold", type=float, default=None)
    s.add_argument("--count", type=int, default=None)
    s.add_argument("--budget", type=float, default=None)
    s.set_defaults(func=cmd_prune)

    s = sub.add_parser("merge", parents=[common], help="reduce a mixture by greedy merging")
    s.add_argument("--target", type=int, required=True)
    s.set_defaults(func=cmd_merge)

    s = sub.add_parser("density", parents=[common], help="evaluate mixture density at samples")
    s.set_defaults(func=cmd_density)

    s = sub.add_parser("mass", parents=[common], help="estimate element masses")
    s.add_argument("--method", choices=["qmc", "iid"], default="qmc")
    s.set_defaults(func=cmd_mass)

    s = sub.add_parser("distance", parents=[common], help="squared L2 distance of two mixtures")
    s.set_defaults(func=cmd_distance)

    s = sub.add_parser("grasp-check", parents=[common], help="grasp criterion on gripper and object beliefs")
    s.add_argument("--G", type=float, required=True)
    s.add_argument("--epsilon", type=float, default=0.05)
    s.set_defaults(func=cmd_grasp_check)

    s = sub.add_parser("pipeline", parents=[common], help="run the fuse, prune and merge loop")
    s.add_argument("--demo", action="store_true", help="use the built-in three-feature scenario")
    s.add_argument("--budget", type=float, default=0.2, help="total prune budget")
    s.add_argument("--target", type=int, default=10, help="merge target count")
    s.add_argument("--max-drop", type=int, default=10, help="elements dropped per prune stage")
    s.add_argument("--threshold", type=float, default=None)
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
