"""Command-line interface: ``tncond <command> ...``.

Exit codes: 0 success, 2 invalid input (including missing files), 3 an
iterative routine failed to converge. Errors are one line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .conditioning import condition_numbers, worst_case_bound, worst_case_solve
from .errors import ConvergenceError, TnCondError, ValidationError
from .mps import (
    Mps,
    all_site_bound_canonical,
    all_site_bound_general,
    canonicalize,
    is_canonical_mps,
    single_site_bound,
)
from .network import contract_network, environment_matrix, is_canonical, network_from_dict, verify_matvec_identity
from .peps import Peps, peps_bound_canonical, peps_bound_general
from .tensor import DEFAULT_CAP, DEFAULT_TOL

COMMANDS = ("contract", "cond", "bound", "solve-worst", "canonicalize", "verify", "experiment")
GLOBAL_FLAGS = ("--seed", "--tol", "--cap", "--out", "--format")

EPILOG = f"""commands: {', '.join(COMMANDS)}
  bound kinds: general, canonical, single-site, peps
  verify kinds: canonical, matvec
  experiment studies: {', '.join(ex.STUDIES)}
global flags (accepted by every command): --seed INT, --tol FLOAT, --cap INT,
  --out PATH, --format {{csv,json,svg}}
--seed is required by solve-worst and experiment.
"""


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global flags")
    g.add_argument("--seed", type=int, default=None, help="root random seed")
    g.add_argument("--tol", type=float, default=DEFAULT_TOL, help="numerical tolerance")
    g.add_argument("--cap", type=int, default=DEFAULT_CAP, help="largest dense intermediate, in entries")
    g.add_argument("--out", default=None, help="write the result here instead of stdout")
    g.add_argument("--format", choices=("csv", "json", "svg"), default=None, help="output format")
    return common


def _csv_list(kind):
    def parse(text):
        try:
            return tuple(kind(x) for x in text.split(",") if x.strip())
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a comma-separated list: {text!r}") from None

    return parse


def _d_item(x: str):
    return None if x.strip().lower() in ("0", "none", "inf", "uncapped") else int(x)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="tncond",
        description="Conditioning and perturbation bounds for tensor networks.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("contract", parents=[common], help="contract a network to a dense tensor")
    p.add_argument("network")

    p = sub.add_parser("cond", parents=[common], help="absolute and relative condition numbers")
    p.add_argument("network")

    p = sub.add_parser("bound", parents=[common], help="worst-case relative error bounds")
    p.add_argument("kind", choices=("general", "canonical", "single-site", "peps"))
    p.add_argument("network")
    p.add_argument("--eps", type=float, default=None, help="relative per-site budget")
    p.add_argument("--site", default=None, help="site index (MPS) or vertex id, for single-site")
    p.add_argument("--eps1", type=float, default=None, help="columnwise budget (peps)")
    p.add_argument("--eps2", type=float, default=None, help="center-column sitewise budget (peps)")
    p.add_argument("--canonical", action="store_true", help="canonical PEPS bound (peps)")

    p = sub.add_parser("solve-worst", parents=[common], help="first-order worst-case error by block ascent")
    p.add_argument("network")
    p.add_argument("--eps", type=float, required=True, help="absolute per-site budget")
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=10_000)

    p = sub.add_parser("canonicalize", parents=[common], help="canonicalize an MPS document")
    p.add_argument("network")
    p.add_argument("--center", type=int, required=True, help="0-based center site")

    p = sub.add_parser("verify", parents=[common], help="check canonicality or the environment identity")
    p.add_argument("kind", choices=("canonical", "matvec"))
    p.add_argument("network")
    p.add_argument("--center", default=None, help="vertex id (or MPS site index) of the center")
    p.add_argument("--subset", default=None, help="comma-separated vertex ids (matvec)")

    p = sub.add_parser("experiment", parents=[common], help="run a randomized study")
    p.add_argument("study", choices=ex.STUDIES)
    p.add_argument("--config", default=None, help="JSON config file; flags override it")
    p.add_argument("--N", type=_csv_list(int), default=None, help="comma-separated chain lengths")
    p.add_argument("--D", type=_csv_list(_d_item), default=None, help="comma-separated bond caps (0 = uncapped)")
    p.add_argument("--p", type=int, default=None, help="physical dimension")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--perturbations", type=int, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--center", choices=("middle", "second"), default=None)
    p.add_argument("--paper-scale", action="store_true", help="use the published (long-running) grid")
    return parser


# -- helpers -----------------------------------------------------------------

def _load_doc(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise CliError(2, f"file not found: {path}") from None
    except OSError as exc:
        raise CliError(2, f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(2, f"invalid JSON in {path}: {exc.msg} at line {exc.lineno}") from None


def _topology(doc: dict) -> str | None:
    return (doc.get("topology") or {}).get("type")


def _write(args, payload: str) -> None:
    if args.out:
        try:
            Path(args.out).write_text(payload)
        except OSError as exc:
            raise CliError(2, f"cannot write {args.out}: {exc.strerror}") from None
    else:
        sys.stdout.write(payload)


def _emit_json(args, obj) -> None:
    if args.format not in (None, "json"):
        raise CliError(2, f"command {args.command} only produces json")
    _write(args, json.dumps(obj, indent=1, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _need(value, flag):
    if value is None:
        raise CliError(2, f"{flag} is required")
    return value


# -- commands ----------------------------------------------------------------

def cmd_contract(args):
    tn = network_from_dict(_load_doc(args.network))
    t = contract_network(tn, args.cap)
    _emit_json(args, {"legs": list(t.legs), "shape": list(t.dims), "data": t.flat(), "norm": float(np.linalg.norm(t.data))})


def cmd_cond(args):
    tn = network_from_dict(_load_doc(args.network))
    _emit_json(args, condition_numbers(tn, args.cap, args.tol).to_dict())


def cmd_bound(args):
    doc = _load_doc(args.network)
    topo = _topology(doc)
    if args.kind == "peps":
        if topo != "peps":
            raise CliError(2, "bound peps needs a document with a PEPS topology block")
        pe = Peps.from_dict(doc)
        e1, e2 = _need(args.eps1, "--eps1"), _need(args.eps2, "--eps2")
        if args.canonical:
            exact, simple = peps_bound_canonical(pe, e1, e2, args.cap)
            out = {"exact_sum": exact, "simple": simple}
        else:
            out = {"bound": peps_bound_general(pe, e1, e2, args.cap)}
        _emit_json(args, out)
        return
    eps = _need(args.eps, "--eps")
    if args.kind == "canonical":
        if topo != "mps":
            raise CliError(2, "bound canonical needs a document with an MPS topology block")
        m = Mps.from_dict(doc)
        exact, simple = all_site_bound_canonical(m, eps)
        _emit_json(args, {"exact_sum": exact, "simple": simple})
    elif args.kind == "general":
        if topo == "mps":
            out = {"bound": all_site_bound_general(Mps.from_dict(doc), eps)}
        else:
            tn = network_from_dict(doc)
            ref = float(np.linalg.norm(contract_network(tn, args.cap).data))
            rel = {v: eps * float(np.linalg.norm(t.data)) for v, t in tn.vertices.items()}
            out = {"bound": worst_case_bound(tn, rel, cap=args.cap) / ref}
        _emit_json(args, out)
    else:
        site = _need(args.site, "--site")
        if topo == "mps":
            m = Mps.from_dict(doc)
            try:
                j = int(site)
            except ValueError:
                raise CliError(2, f"--site must be an integer for an MPS, got {site!r}") from None
            out = {"bound": single_site_bound(m, j, eps)}
        else:
            tn = network_from_dict(doc)
            env = environment_matrix(tn, {site}, args.cap)
            ref = float(np.linalg.norm(contract_network(tn, args.cap).data))
            out = {"bound": eps * env.spectral_norm(args.tol) * float(np.linalg.norm(tn.tensor(site).data)) / ref}
        _emit_json(args, out)


def cmd_solve_worst(args):
    seed = _need(args.seed, "--seed")
    tn = network_from_dict(_load_doc(args.network))
    rep = worst_case_solve(tn, args.eps, tol=args.tol, max_iter=args.max_iter, restarts=args.restarts, seed=seed, cap=args.cap)
    _emit_json(args, rep.to_dict())


def cmd_canonicalize(args):
    doc = _load_doc(args.network)
    if _topology(doc) != "mps":
        raise CliError(2, "canonicalize needs a document with an MPS topology block")
    m = canonicalize(Mps.from_dict(doc), args.center)
    _emit_json(args, m.to_dict())


def cmd_verify(args):
    doc = _load_doc(args.network)
    if args.kind == "canonical":
        center = _need(args.center, "--center")
        if _topology(doc) == "mps":
            try:
                ok = is_canonical_mps(Mps.from_dict(doc), int(center), args.tol)
            except ValueError:
                raise CliError(2, f"--center must be an integer for an MPS, got {center!r}") from None
        else:
            ok = is_canonical(network_from_dict(doc), center, args.tol, args.cap)
        _emit_json(args, {"canonical": ok})
    else:
        subset = [s for s in _need(args.subset, "--subset").split(",") if s]
        chk = verify_matvec_identity(network_from_dict(doc), subset, args.tol, cap=args.cap)
        _emit_json(args, {"ok": chk.ok, "max_deviation": chk.max_deviation})


def cmd_experiment(args):
    seed = _need(args.seed, "--seed")
    overrides = dict(
        N=args.N, D=args.D, p=args.p, samples=args.samples, perturbations=args.perturbations,
        eps=args.eps, sigma=args.sigma, center=args.center, seed=seed,
    )
    if args.config:
        base = ex.ExperimentConfig.from_dict({**_load_doc(args.config), "study": args.study}).to_dict()
        base.update({k: v for k, v in overrides.items() if v is not None})
        cfg = ex.ExperimentConfig.from_dict(base)
    else:
        cfg = ex.default_config(args.study, args.paper_scale, **overrides)
    result = ex.run(cfg)
    fmt = args.format or "csv"
    if fmt == "csv":
        _write(args, ex.csv_text(result))
    elif fmt == "json":
        _write(args, json.dumps(ex.result_to_dict(result), indent=1) + "\n")
    else:
        if not args.out:
            raise CliError(2, "--format svg needs --out")
        ex.emit_svg(result, args.out)


HANDLERS = {
    "contract": cmd_contract,
    "cond": cmd_cond,
    "bound": cmd_bound,
    "solve-worst": cmd_solve_worst,
    "canonicalize": cmd_canonicalize,
    "verify": cmd_verify,
    "experiment": cmd_experiment,
}


def _fail(code: int, kind: str, message: str) -> int:
    text = " ".join(str(message).split())
    print(f"tncond: error: {kind}: {text}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        HANDLERS[args.command](args)
    except CliError as exc:
        return _fail(exc.code, "input", exc)
    except ConvergenceError as exc:
        return _fail(3, "convergence", exc)
    except ValidationError as exc:
        return _fail(2, type(exc).__name__, exc)
    except TnCondError as exc:
        return _fail(2, type(exc).__name__, exc)
    except (KeyError, ValueError, OSError) as exc:
        return _fail(2, type(exc).__name__, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
