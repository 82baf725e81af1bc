"""Seeded randomized studies on MPS stability, with CSV and SVG output.

Every sample draws its randomness from ``SeedSequence(seed, spawn_key=...)``
keyed by the study, ``N``, ``D`` and the sample index, so results do not
depend on thread scheduling or on which other grid points are run.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .conditioning import average_case_error
from .errors import ConvergenceError, ValidationError
from .mps import (
    Mps,
    all_site_bound_canonical,
    all_site_bound_general,
    canonicalize,
    random_mps,
    single_site_bound,
    truncate_all_with_canonicalization,
)
from .network import Edge, TensorNetwork, contract_network
from .perturb import apply, sample_variance_perturbation
from .tensor import DenseTensor, Uniform

STUDIES = (
    "center-perturb",
    "center-perturb-uncapped",
    "all-site",
    "all-site-uncapped",
    "average-case",
    "truncation",
    "energy-quadratic",
)
_STUDY_CODE = {s: k for k, s in enumerate(STUDIES)}
QUANTILES = (("q2.5", 0.025), ("q10", 0.10), ("q90", 0.90), ("q97.5", 0.975))
# measured errors may exceed a first-order bound by SLACK * eps**2 * bound
SLACK = 10.0


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one study.

    ``D=None`` means the bond dimension is left uncapped. For
    ``average-case`` ``samples`` is the number of perturbations per network;
    for ``energy-quadratic`` ``N`` lists Hamiltonian dimensions.
    """

    study: str
    N: tuple = (16,)
    D: tuple = (8,)
    p: int = 2
    samples: int = 50
    perturbations: int = 100
    eps: float = 1e-4
    sigma: float = 1e-3
    seed: int = 0
    center: str | None = None
    t_values: tuple = (1e-2, 1e-3, 1e-4)
    keep_raw: bool = False
    threads: int | None = None

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ValidationError(f"unknown study {self.study!r}; expected one of {', '.join(STUDIES)}")
        object.__setattr__(self, "N", tuple(int(n) for n in self.N))
        object.__setattr__(self, "D", tuple(None if d in (None, 0) else int(d) for d in self.D))
        object.__setattr__(self, "t_values", tuple(float(t) for t in self.t_values))
        if self.samples < 1 or self.perturbations < 1:
            raise ValidationError("samples and perturbations must be >= 1")
        if self.p < 1 or any(n < 1 for n in self.N) or any(d is not None and d < 1 for d in self.D):
            raise ValidationError("dimensions must be positive")
        if self.eps < 0 or self.sigma < 0 or any(t <= 0 for t in self.t_values):
            raise ValidationError("magnitudes must be nonnegative (t values positive)")
        if self.center not in (None, "middle", "second"):
            raise ValidationError("center must be 'middle' or 'second'")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


_DESK = {
    "center-perturb": dict(N=(16,), D=(8, 16, 32), samples=50),
    "center-perturb-uncapped": dict(N=(4, 6, 8, 10, 12), D=(None,), samples=50),
    "all-site": dict(N=(8, 12), D=(4, 8), samples=30, perturbations=100),
    "all-site-uncapped": dict(N=(4, 6, 8, 10, 12), D=(None,), samples=30, perturbations=100),
    "average-case": dict(N=(3,), D=(2, 4, 8, 16), samples=2000),
    "truncation": dict(N=(8,), D=(16,), samples=20),
    "energy-quadratic": dict(N=(32,), D=(None,), samples=100, perturbations=100),
}

_PAPER = {
    "center-perturb": dict(N=(32, 48, 64, 80), D=(8, 16, 32, 64, 128), samples=300),
    "center-perturb-uncapped": dict(N=(4, 6, 8, 10, 12, 14, 16), D=(None,), samples=200),
    "all-site": dict(N=(8, 12, 16), D=(8, 16, 32, 64), samples=100, perturbations=200),
    "all-site-uncapped": dict(N=(4, 6, 8, 10, 12, 14, 16), D=(None,), samples=100, perturbations=200),
}


def default_config(study: str, paper_scale: bool = False, **overrides) -> ExperimentConfig:
    """Desk-scale defaults, or the published grid with ``paper_scale``."""
    if study not in STUDIES:
        raise ValidationError(f"unknown study {study!r}")
    base = dict(_DESK[study])
    if paper_scale:
        base.update(_PAPER.get(study, {}))
    base.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(study=study, **base)


class Row(NamedTuple):
    N: int
    D: int | None
    stat: str
    value: float


@dataclass
class StudyResult:
    study: str
    rows: list = field(default_factory=list)
    raw: dict = field(default_factory=dict)

    def get(self, N, D, stat) -> float:
        for r in self.rows:
            if r.N == N and r.D == D and r.stat == stat:
                return r.value
        raise KeyError((N, D, stat))

    def table(self) -> dict:
        """``{(N, D): {stat: value}}`` in row order."""
        out: dict = {}
        for r in self.rows:
            out.setdefault((r.N, r.D), {})[r.stat] = r.value
        return out

    def total(self, stat) -> float:
        return float(sum(r.value for r in self.rows if r.stat == stat))


def summarize(values, dropped: int = 0, violations: int | None = None) -> dict:
    """Mean, 80%/95% quantile brackets and counts of one sample set."""
    v = np.asarray(values, dtype=float)
    out = {"mean": float(v.mean()) if v.size else float("nan")}
    for name, q in QUANTILES:
        out[name] = float(np.quantile(v, q)) if v.size else float("nan")
    out["count"] = float(v.size)
    out["dropped"] = float(dropped)
    if violations is not None:
        out["violations"] = float(violations)
    return out


def _threads(cfg: ExperimentConfig) -> int:
    env = os.environ.get("TNCOND_THREADS")
    n = os.cpu_count() or 1
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise ValidationError(f"TNCOND_THREADS must be an integer, got {env!r}") from None
    if cfg.threads is not None:
        n = min(n, max(1, cfg.threads))
    return n


def _seed(cfg: ExperimentConfig, N: int, D, s: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(cfg.seed, spawn_key=(_STUDY_CODE[cfg.study], N, D or 0, s))


def _pmap(cfg, fn, items) -> list:
    items = list(items)
    workers = _threads(cfg)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _grid(cfg, per_sample, stats_of):
    """Run ``per_sample(N, D, seedseq)`` over the grid and aggregate."""
    result = StudyResult(cfg.study)
    for N in cfg.N:
        for D in cfg.D:
            outs = _pmap(cfg, lambda s: _guard(per_sample, N, D, _seed(cfg, N, D, s)), range(cfg.samples))
            kept = [o for o in outs if o is not None]
            stats = stats_of(kept, len(outs) - len(kept))
            for k, v in stats.items():
                result.rows.append(Row(N, D, k, float(v)))
            if cfg.keep_raw:
                result.raw[(N, D)] = kept
    return result


def _guard(fn, *args):
    try:
        return fn(*args)
    except ConvergenceError:
        return None


def _center(cfg: ExperimentConfig, N: int) -> int:
    mode = cfg.center or ("second" if cfg.study == "center-perturb-uncapped" else "middle")
    c = 1 if mode == "second" else N // 2 - 1
    return min(max(c, 0), N - 1)


def _sample_mps(cfg, N, D, ss) -> Mps:
    m = random_mps(N, D, cfg.p, np.random.default_rng(ss))
    return m.scaled(1.0 / m.norm())


def _rel_err(base_dense, ref, m: Mps, entries) -> float:
    return float(np.linalg.norm((m.perturbed(entries).to_dense() - base_dense).reshape(-1)) / ref)


def _unit_dirs(rng, sites, which) -> dict:
    out = {}
    for j in which:
        d = rng.uniform(-1.0, 1.0, sites[j].shape)
        out[j] = d / np.linalg.norm(d)
    return out


def _scaled(m: Mps, dirs: dict, eps: float) -> dict:
    return {j: eps * np.linalg.norm(m.sites[j]) * d for j, d in dirs.items()}


# -- studies -----------------------------------------------------------------

def run_center_perturb(cfg: ExperimentConfig) -> StudyResult:
    """Ratio ``R`` of the one-site worst-case bound of a general MPS to ``ε``.

    Alongside ``R`` each sample applies one saturated ``ε`` perturbation at
    the center of both forms and counts bound violations.
    """

    def one(N, D, ss):
        rng = np.random.default_rng(ss)
        m = _sample_mps(cfg, N, D, rng)
        c = _center(cfg, N)
        can = canonicalize(m, c)
        r = single_site_bound(m, c, 1.0)
        viol = 0
        if cfg.eps > 0 and m.size <= 2**22:
            for form, bound in ((m, r * cfg.eps), (can, single_site_bound(can, c, cfg.eps))):
                dense = form.to_dense()
                ref = float(np.linalg.norm(dense.reshape(-1)))
                dirs = _unit_dirs(rng, form.sites, [c])
                e = _rel_err(dense, ref, form, _scaled(form, dirs, cfg.eps))
                viol += e > bound * (1 + SLACK * cfg.eps**2)
        return r, viol

    return _grid(cfg, one, _stats_with_violations)


def _stats_with_violations(kept, dropped):
    vals = [k[0] for k in kept]
    return summarize(vals, dropped, int(sum(k[1] for k in kept)))


def run_all_site(cfg: ExperimentConfig) -> StudyResult:
    """Largest general/canonical error ratio over random all-site ``ε`` perturbations."""

    def one(N, D, ss):
        rng = np.random.default_rng(ss)
        m = _sample_mps(cfg, N, D, rng)
        c = _center(cfg, N)
        can = canonicalize(m, c)
        dm, dc = m.to_dense(), can.to_dense()
        rm = float(np.linalg.norm(dm.reshape(-1)))
        rc = float(np.linalg.norm(dc.reshape(-1)))
        bound_g = all_site_bound_general(m, cfg.eps)
        bound_c = all_site_bound_canonical(can, cfg.eps)[0]
        same_shapes = all(a.shape == b.shape for a, b in zip(m.sites, can.sites))
        best, viol = -np.inf, 0
        for _ in range(cfg.perturbations):
            # one perturbation for both forms, rescaled per form
            dirs_m = _unit_dirs(rng, m.sites, range(N))
            dirs_c = dirs_m if same_shapes else _unit_dirs(rng, can.sites, range(N))
            eg = _rel_err(dm, rm, m, _scaled(m, dirs_m, cfg.eps))
            ec = _rel_err(dc, rc, can, _scaled(can, dirs_c, cfg.eps))
            viol += eg > bound_g * (1 + SLACK * cfg.eps**2)
            viol += ec > bound_c * (1 + SLACK * cfg.eps**2)
            best = max(best, eg / ec)
        return best, viol

    return _grid(cfg, one, _stats_with_violations)


def triangle_network(D: int, rng, lo: float = 0.0, hi: float = 1.0) -> TensorNetwork:
    """Three ``D × D`` matrices on a cycle, no open legs."""
    dist = Uniform(lo, hi)
    verts = {
        "A": DenseTensor(("x", "y"), dist.sample(rng, (D, D))),
        "B": DenseTensor(("x", "y"), dist.sample(rng, (D, D))),
        "C": DenseTensor(("x", "y"), dist.sample(rng, (D, D))),
    }
    edges = [Edge("ab", ("A", "y"), ("B", "x")), Edge("bc", ("B", "y"), ("C", "x")), Edge("ca", ("C", "y"), ("A", "x"))]
    return TensorNetwork(verts, edges)


def run_average_case(cfg: ExperimentConfig) -> StudyResult:
    """Monte-Carlo mean of ``ℰ_r²`` against the leading-order prediction.

    One triangle network per ``D``; ``samples`` variance perturbations of it.
    """
    result = StudyResult(cfg.study)
    code = _STUDY_CODE[cfg.study]
    for D in cfg.D:
        if D is None:
            raise ValidationError("average-case needs finite D values")
        net_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(code, 3, D, 0)))
        tn = triangle_network(D, net_rng)
        theory = average_case_error(tn, sigma=cfg.sigma)
        t0 = float(contract_network(tn).data)

        def one(s, tn=tn, D=D):
            ss = np.random.SeedSequence(cfg.seed, spawn_key=(code, 3, D, s + 1))
            ps = sample_variance_perturbation(tn, cfg.sigma, np.random.default_rng(ss))
            return ((float(contract_network(apply(tn, ps)).data) - t0) / t0) ** 2

        vals = _pmap(cfg, one, range(cfg.samples))
        stats = summarize(vals)
        stats["theory"] = theory
        stats["rel_dev"] = abs(stats["mean"] - theory) / theory if theory > 0 else 0.0
        for k, v in stats.items():
            result.rows.append(Row(3, D, k, float(v)))
        if cfg.keep_raw:
            result.raw[(3, D)] = vals
    return result


def run_truncation(cfg: ExperimentConfig) -> StudyResult:
    """Achieved error of sweep truncation relative to ``nε``.

    ``violations`` counts errors above ``nε + 1e-6``; ``strict_violations``
    those above ``nε (1 + SLACK ε²)``.
    """

    def one(N, D, ss):
        m = random_mps(N, D, cfg.p, np.random.default_rng(ss))
        _, err = truncate_all_with_canonicalization(m, cfg.eps)
        budget = N * cfg.eps
        ratio = err / budget if budget > 0 else 0.0
        return ratio, int(err > budget + 1e-6), int(err > budget * (1 + SLACK * cfg.eps**2))

    def stats(kept, dropped):
        out = _stats_with_violations(kept, dropped)
        out["strict_violations"] = float(sum(k[2] for k in kept))
        return out

    return _grid(cfg, one, stats)


def energy_trial(H: np.ndarray, x: np.ndarray, E: float, h_norm: float, delta: np.ndarray) -> tuple:
    """``(|Ê − E|, bound)`` for the renormalized state ``x + δ``.

    The bound is ``‖δ'‖²(|E| + ‖H‖₂)`` with ``δ' = x̂ − x`` the actual change
    of the normalized vector.
    """
    xh = x + delta
    xh = xh / np.linalg.norm(xh)
    if xh @ x < 0:
        xh = -xh
    err = abs(float(xh @ H @ xh) - E)
    dp = xh - x
    return err, float(dp @ dp) * (abs(E) + h_norm)


def run_energy_quadratic(cfg: ExperimentConfig) -> StudyResult:
    """Quadratic scaling of the eigenvalue error in the eigenvector error.

    Per ``N`` (matrix dimension) the statistics are the log-log ``slope``
    of the mean error against ``t``, its per-Hamiltonian quantiles, the
    number of ``trials`` and of bound ``violations``, and ``err@t`` means.
    """
    result = StudyResult(cfg.study)
    ts = np.array(cfg.t_values)
    for N in cfg.N:
        if N < 2:
            raise ValidationError("energy-quadratic needs N >= 2")

        def one(s, N=N):
            rng = np.random.default_rng(_seed(cfg, N, None, s))
            a = rng.uniform(-1.0, 1.0, (N, N))
            H = (a + a.T) / 2
            w, V = np.linalg.eigh(H)
            x, E = V[:, 0], float(w[0])
            h_norm = float(np.max(np.abs(w)))
            errs = np.zeros((len(ts), cfg.perturbations))
            viol = 0
            for k in range(cfg.perturbations):
                d = rng.standard_normal(N)
                d /= np.linalg.norm(d)
                for i, t in enumerate(ts):
                    e, b = energy_trial(H, x, E, h_norm, t * d)
                    errs[i, k] = e
                    viol += e > b * (1 + 1e-9) + 1e-15
            return errs.mean(axis=1), viol

        outs = _pmap(cfg, one, range(cfg.samples))
        means = np.array([o[0] for o in outs])
        per_sample_slopes = [np.polyfit(np.log(ts), np.log(m), 1)[0] for m in means] if len(ts) > 1 else []
        overall = means.mean(axis=0)
        slope = float(np.polyfit(np.log(ts), np.log(overall), 1)[0]) if len(ts) > 1 else float("nan")
        stats = summarize(per_sample_slopes) if per_sample_slopes else {}
        stats["slope"] = slope
        stats["trials"] = float(cfg.samples * cfg.perturbations * len(ts))
        stats["violations"] = float(sum(o[1] for o in outs))
        for t, v in zip(ts, overall):
            stats[f"err@{t:g}"] = float(v)
        for k, v in stats.items():
            result.rows.append(Row(N, None, k, float(v)))
    return result


RUNNERS = {
    "center-perturb": run_center_perturb,
    "center-perturb-uncapped": run_center_perturb,
    "all-site": run_all_site,
    "all-site-uncapped": run_all_site,
    "average-case": run_average_case,
    "truncation": run_truncation,
    "energy-quadratic": run_energy_quadratic,
}


def run(cfg: ExperimentConfig) -> StudyResult:
    return RUNNERS[cfg.study](cfg)


# -- output ------------------------------------------------------------------

CSV_HEADER = ("study", "N", "D", "stat", "value")


def csv_text(result: StudyResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in result.rows:
        w.writerow((result.study, r.N, 0 if r.D is None else r.D, r.stat, repr(float(r.value))))
    return buf.getvalue()


def emit_csv(result: StudyResult, path) -> None:
    path = Path(path)
    try:
        path.write_text(csv_text(result))
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc.strerror}") from exc


def parse_csv(source) -> StudyResult:
    """Inverse of :func:`emit_csv`; ``source`` is a path or the CSV text."""
    text = source if isinstance(source, str) and "\n" in source else Path(source).read_text()
    reader = csv.reader(io.StringIO(text))
    header = tuple(next(reader, ()))
    if header != CSV_HEADER:
        raise ValidationError(f"unexpected CSV header {header}")
    study, rows = None, []
    for rec in reader:
        if not rec:
            continue
        study = rec[0]
        d = int(rec[2])
        rows.append(Row(int(rec[1]), None if d == 0 else d, rec[3], float(rec[4])))
    return StudyResult(study or "", rows)


_YLABEL = {
    "center-perturb": "R",
    "center-perturb-uncapped": "R",
    "all-site": "max ratio R",
    "all-site-uncapped": "max ratio R",
    "average-case": "E[relative error²]",
    "truncation": "error / (nε)",
    "energy-quadratic": "|Ê − E|",
}


def _errorbars(ax, x, stats, label, marker="o"):
    mean = np.array([s["mean"] for s in stats])
    for lo, hi, lw in (("q2.5", "q97.5", 0.8), ("q10", "q90", 2.2)):
        yerr = np.vstack([mean - [s[lo] for s in stats], [s[hi] for s in stats] - mean])
        ax.errorbar(x, mean, yerr=np.clip(yerr, 0, None), fmt="none", ecolor="0.4", elinewidth=lw, capsize=2)
    ax.plot(x, mean, marker=marker, label=label)


def emit_svg(result: StudyResult, path) -> None:
    """One line chart: mean with 80%/95% quantile bars, one series per ``N``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    table = result.table()
    with matplotlib.rc_context({"svg.hashsalt": "tncond", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6, 4.5))
        study = result.study
        if study == "energy-quadratic":
            for (N, _), s in table.items():
                pts = sorted((float(k[4:]), v) for k, v in s.items() if k.startswith("err@"))
                ax.loglog([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"dim {N}")
            ax.set_xlabel("‖δ‖")
        elif study.endswith("uncapped"):
            keys = sorted(table)
            if keys:
                _errorbars(ax, [k[0] for k in keys], [table[k] for k in keys], "uncapped D")
            ax.set_xlabel("N")
        else:
            for N in sorted({k[0] for k in table}):
                keys = sorted((k for k in table if k[0] == N), key=lambda k: k[1] or 0)
                xs = [k[1] for k in keys]
                _errorbars(ax, xs, [table[k] for k in keys], f"N = {N}")
                if study == "average-case":
                    ax.plot(xs, [table[k]["theory"] for k in keys], "x", markersize=9, label="theory")
            if table:
                ax.set_xscale("log", base=2)
            ax.set_xlabel("D")
        ax.set_ylabel(_YLABEL.get(study, "value"))
        ax.set_title(study)
        if table:
            ax.legend()
        fig.tight_layout()
        path = Path(path)
        try:
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as exc:
            raise OSError(f"cannot write SVG to {path}: {exc.strerror}") from exc
        finally:
            plt.close(fig)


def result_to_dict(result: StudyResult) -> dict:
    return {
        "study": result.study,
        "rows": [{"N": r.N, "D": r.D, "stat": r.stat, "value": r.value} for r in result.rows],
    }


__all__ = [
    "STUDIES",
    "ExperimentConfig",
    "Row",
    "StudyResult",
    "default_config",
    "summarize",
    "run",
    "run_center_perturb",
    "run_all_site",
    "run_average_case",
    "run_truncation",
    "run_energy_quadratic",
    "triangle_network",
    "energy_trial",
    "csv_text",
    "emit_csv",
    "parse_csv",
    "emit_svg",
    "result_to_dict",
]
