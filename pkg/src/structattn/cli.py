"""Command-line entry point.

Exit codes: 0 success, 1 a gradient check failed, 2 bad input, 3 degenerate
computation (every structure has zero weight).
"""

import argparse
import json
import os
import sys

import numpy as np

from . import oracle
from .attention import categorical_weights, segmentation_weights, sigmoid_weights, weights_to_csv
from .chain_crf import ChainPotentials, chain_backprop, forward_backward, top_k_sequences
from .exceptions import DegenerateDistributionError, InfeasibleTargetError, InstanceTooLargeError
from .toy import generate_formula, losses_to_csv, train_to_marginals, write_corpus
from .tree_crf import (TreePotentials, eisner_viterbi, inside_outside, inside_outside_backprop,
                       validate_projective_tree)

EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_DEGENERATE = 0, 1, 2, 3


class InputError(Exception):
    pass


def _load_json(path):
    if path is None:
        raise InputError("--input is required")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as e:
        raise InputError("cannot read %s: %s" % (path, e))
    except json.JSONDecodeError as e:
        raise InputError("malformed JSON in %s: %s" % (path, e))


def _load_potentials(path, kind):
    d = _load_json(path)
    try:
        if kind == "chain":
            return ChainPotentials.from_dict(d)
        return TreePotentials.from_dict(d)
    except (KeyError, TypeError, ValueError) as e:
        raise InputError("invalid %s potentials: %s" % (kind, e))


def _check_out(path):
    if path is None:
        return
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise InputError("output directory does not exist: %s" % parent)


def _sibling(path, ext):
    return os.path.splitext(path)[0] + ext


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _dumps(obj):
    return json.dumps(obj, indent=2) + "\n"


def chain_heatmap_csv(marg):
    rows = ["position,state,prob"]
    for i, row in enumerate(marg.unary, start=1):
        rows += ["%d,%d,%.17g" % (i, c, v) for c, v in enumerate(row)]
    return "\n".join(rows) + "\n"


def tree_heatmap_csv(marg):
    n = marg.p.shape[0]
    rows = ["parent,child,prob"]
    for i in range(n):
        for j in range(1, n):
            if i != j:
                rows.append("%d,%d,%.17g" % (i + 1, j + 1, marg.p[i, j]))
    return "\n".join(rows) + "\n"


def cmd_marginals(args):
    _check_out(args.out)
    pot = _load_potentials(args.input, args.kind)
    if args.kind == "chain":
        _, marg = forward_backward(pot)
        csv = chain_heatmap_csv(marg)
    else:
        _, marg = inside_outside(pot)
        csv = tree_heatmap_csv(marg)
    _emit(_dumps(marg.to_dict()), args.out)
    if args.out is not None:
        _emit(csv, _sibling(args.out, ".csv"))
    return EXIT_OK


def run_gradcheck(kind, n, num_states, seeds, abs_tol=1e-4, rel_tol=1e-3, seed=0, step=1e-5,
                  backprop=None):
    """Compare backward kernels with finite differences and forward kernels
    with enumeration on ``seeds`` random instances.

    ``backprop`` replaces the backward kernel (used for negative controls).
    """
    if kind == "chain":
        if num_states ** n > oracle.MAX_CHAIN_SEQUENCES:
            raise InstanceTooLargeError("chain too large for the enumeration oracle")
        backprop = backprop or chain_backprop
    else:
        if n > oracle.MAX_TREE_LENGTH:
            raise InstanceTooLargeError("tree too large for the enumeration oracle")
        backprop = backprop or inside_outside_backprop
    rng = np.random.default_rng(seed)
    results = []
    for k in range(seeds):
        if kind == "chain":
            theta = rng.uniform(-1, 1, (n + 1, num_states, num_states))
            g = rng.uniform(-1, 1, (n, num_states))
            pot = ChainPotentials(theta)
            tables, marg = forward_backward(pot)
            enum = oracle.enumerate_chain(pot)
            fwd_err = max(np.abs(marg.unary - enum.unary).max(),
                          np.abs(marg.pairwise - enum.pairwise).max(initial=0.0),
                          abs(marg.log_partition - enum.log_partition))

            def f(th):
                return float(np.sum(forward_backward(ChainPotentials(th))[1].unary * g))
        else:
            theta = rng.uniform(-1, 1, (n, n))
            g = rng.uniform(-1, 1, (n, n))
            np.fill_diagonal(g, 0.0)
            g[:, 0] = 0.0
            pot = TreePotentials(theta)
            tables, marg = inside_outside(pot)
            enum = oracle.enumerate_projective_trees(pot)
            fwd_err = max(np.abs(marg.p - enum.p).max(), abs(marg.log_partition - enum.log_partition))

            def f(th):
                return float(np.sum(inside_outside(TreePotentials(th))[1].p * g))
        analytic = backprop(pot, tables, marg, g)
        numeric = oracle.finite_diff_grad(f, theta, step)
        if kind == "tree":
            np.fill_diagonal(numeric, 0.0)
        report = oracle.compare_gradients(analytic, numeric, abs_tol, rel_tol)
        entry = report.to_dict()
        entry["instance"] = k
        entry["forward_max_err"] = float(fwd_err)
        entry["passed"] = bool(report.passed and fwd_err <= 1e-9)
        results.append(entry)
    return {
        "kind": kind,
        "n": n,
        "num_states": num_states if kind == "chain" else None,
        "seed": seed,
        "abs_tol": abs_tol,
        "rel_tol": rel_tol,
        "instances": results,
        "passed": all(r["passed"] for r in results),
    }


def cmd_checkgrad(args):
    _check_out(args.out)
    report = run_gradcheck(args.kind, args.n, args.num_states, args.seeds,
                           args.tolerance_abs, args.tolerance_rel, args.seed)
    _emit(_dumps(report), args.out)
    return EXIT_OK if report["passed"] else EXIT_FAILED


def cmd_generate(args):
    if args.out is None:
        raise InputError("--out is required")
    _check_out(args.out)
    try:
        pairs = generate_formula(args.seed, (args.depth_min, args.depth_max), args.count)
    except ValueError as e:
        raise InputError(str(e))
    write_corpus(pairs, args.out)
    return EXIT_OK


def cmd_train_toy(args):
    _check_out(args.out)
    d = _load_json(args.targets)
    targets = d.get("targets") if isinstance(d, dict) else d
    if targets is None:
        raise InputError("targets file must hold a table or {\"targets\": table}")
    pot, losses = train_to_marginals(args.kind, np.asarray(targets, dtype=np.float64),
                                     init_seed=args.seed, steps=args.steps, learning_rate=args.lr)
    pot_json = pot.to_dict()
    if args.out is None:
        sys.stdout.write(losses_to_csv(losses))
    else:
        _emit(_dumps(pot_json), args.out)
        _emit(losses_to_csv(losses), _sibling(args.out, ".csv"))
    return EXIT_OK


def cmd_parse(args):
    _check_out(args.out)
    pot = _load_potentials(args.input, "tree")
    heads, score = eisner_viterbi(pot)
    assert validate_projective_tree(heads, pot.n)
    _emit(_dumps({"heads": heads, "log_score": score}), args.out)
    return EXIT_OK


def cmd_topk(args):
    _check_out(args.out)
    pot = _load_potentials(args.input, "chain")
    best = top_k_sequences(pot, args.k)
    _emit(_dumps([{"states": s, "probability": p} for s, p in best]), args.out)
    return EXIT_OK


def cmd_weights(args):
    _check_out(args.out)
    if args.layer in ("categorical", "sigmoid"):
        d = _load_json(args.input)
        scores = d.get("scores") if isinstance(d, dict) else d
        try:
            scores = np.asarray(scores, dtype=np.float64).reshape(-1)
        except (TypeError, ValueError) as e:
            raise InputError("scores must be a list of numbers: %s" % e)
        w = categorical_weights(scores) if args.layer == "categorical" else sigmoid_weights(scores)
    else:
        pot = _load_potentials(args.input, "chain")
        if pot.num_states != 2:
            raise InputError("segmentation attention needs a two-state chain")
        _, marg = forward_backward(pot)
        w = segmentation_weights(marg, normalize=args.normalize, lam=args.lam)
    _emit(weights_to_csv(w), args.out)
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output path (stdout if omitted)")
    common.add_argument("--tolerance-abs", type=float, default=1e-4)
    common.add_argument("--tolerance-rel", type=float, default=1e-3)

    parser = argparse.ArgumentParser(prog="structattn", description="Structured attention kernels: marginals, gradient checks, parsing, toy data.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("marginals", parents=[common], help="chain or tree marginals (+ heatmap CSV)")
    p.add_argument("--input", required=True)
    p.add_argument("--kind", choices=("chain", "tree"), required=True)
    p.set_defaults(func=cmd_marginals)

    p = sub.add_parser("checkgrad", parents=[common], help="backward kernels vs finite differences")
    p.add_argument("--kind", choices=("chain", "tree"), required=True)
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--num-states", type=int, default=3)
    p.add_argument("--seeds", type=int, default=20, help="number of random instances")
    p.set_defaults(func=cmd_checkgrad)

    p = sub.add_parser("generate", parents=[common], help="prefix/infix formula corpus")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--depth-min", type=int, default=2)
    p.add_argument("--depth-max", type=int, default=4)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train-toy", parents=[common], help="fit potentials to target marginals")
    p.add_argument("--kind", choices=("chain", "tree"), required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=0.5)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("parse", parents=[common], help="Viterbi projective parse")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("topk", parents=[common], help="k most probable chain sequences")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, default=3)
    p.set_defaults(func=cmd_topk)

    p = sub.add_parser("weights", parents=[common], help="per-position attention weights as CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--layer", choices=("categorical", "sigmoid", "segmentation"), required=True)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--lam", type=float, default=2.0)
    p.set_defaults(func=cmd_weights)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, InfeasibleTargetError, InstanceTooLargeError) as e:
        print("error: %s" % e, file=sys.stderr)
        return EXIT_INPUT
    except DegenerateDistributionError as e:
        print("error: %s" % e, file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
