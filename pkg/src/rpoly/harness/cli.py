"""Command line entry point: one experiment per invocation.

Exit status is 0 on success, 2 on a negative verdict and 1 on errors.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .document import DocumentError, Polyhedron, load_polyhedron
from .report import Result, csv_text, emit_report, fmt, write_artifacts

EXIT_OK, EXIT_ERROR, EXIT_NEGATIVE = 0, 1, 2
COMMANDS = ("validate", "spectrum", "bsd-compare", "beam-trace", "echo", "dtn")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run depends on; equal configs give identical artifacts."""

    command: str
    inputs: tuple[str, ...]
    out: str = "."
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        for k, v in self.params.items():
            if (k.startswith("tol") or k in ("h", "eps", "T", "dt", "pitch", "sigma", "resolution")) and v is not None:
                if not v > 0:
                    raise ConfigError(f"{k} must be positive, got {v}")

    def get(self, key, default=None):
        v = self.params.get(key)
        return default if v is None else v


@dataclass
class Outcome:
    status: int
    results: list
    artifacts: dict


def _structure(results: list, poly: Polyhedron) -> bool:
    for ch in poly.checks:
        results.append(Result(ch.name, ch.passed, ch.detail))
    return poly.valid


def _gamma(poly: Polyhedron, name: str | None):
    if not poly.subsets:
        raise ConfigError("document defines no gamma subsets")
    if name is None:
        if len(poly.subsets) != 1:
            raise ConfigError(f"choose --gamma from {sorted(poly.subsets)}")
        name = next(iter(poly.subsets))
    if name not in poly.subsets:
        raise ConfigError(f"unknown gamma {name!r}; document defines {sorted(poly.subsets)}")
    return poly.subsets[name]


def _spectrum(poly: Polyhedron, cfg: ExperimentConfig):
    from ..spectral import compute_spectrum, refine

    mesh = refine(poly.complex, cfg.get("h", 0.05))
    names = cfg.get("dirichlet", [])
    dirichlet = [tuple(sorted(_gamma(poly, n).facet)) for n in names] if names else False
    es = compute_spectrum(mesh, poly.metric, int(cfg.get("count", 10)), dirichlet, seed=cfg.seed, tol_eig=cfg.get("tol_eig", 1e-6))
    return es


def cmd_validate(cfg: ExperimentConfig) -> Outcome:
    from ..charts import chambers
    from ..metric import check_admissibility_metric

    poly = load_polyhedron(cfg.inputs[0])
    results = [Result("document", None, cfg.inputs[0])]
    ok = _structure(results, poly)
    if ok:
        res = cfg.get("resolution", 0.05)
        v = check_admissibility_metric(poly.metric, res, int(cfg.get("pairs", 12)), seed=cfg.seed)
        results.append(Result("admissible metric", v.admissible, f"worst distance gap {fmt(v.worst_gap)} over {v.pairs_checked} pairs"))
        ok = v.admissible
        ch = chambers(poly.metric)
        results.append(Result("chambers", None, f"{len(ch)}: " + " ".join(str(sorted(g)) for g in ch)))
    return Outcome(EXIT_OK if ok else EXIT_NEGATIVE, results, {})


def cmd_spectrum(cfg: ExperimentConfig) -> Outcome:
    poly = load_polyhedron(cfg.inputs[0])
    results = []
    if not _structure(results, poly):
        return Outcome(EXIT_NEGATIVE, results, {})
    es = _spectrum(poly, cfg)
    results.append(Result("mesh", None, f"{es.mesh.n_nodes} nodes, h={fmt(es.mesh.h)}"))
    results.append(Result("eigen residuals", True, f"max {fmt(float(es.residuals.max()))}"))
    gram = float(np.abs(es.gram() - np.eye(es.count)).max())
    results.append(Result("mass orthonormality", gram <= 1e-8, f"max |V^T M V - I| = {fmt(gram)}"))
    rows = [(k + 1, lam, r) for k, (lam, r) in enumerate(zip(es.eigenvalues, es.residuals))]
    return Outcome(EXIT_OK, results, {"eigenvalues.csv": csv_text(("index", "eigenvalue", "residual"), rows)})


def cmd_bsd_compare(cfg: ExperimentConfig) -> Outcome:
    from ..spectral import bsd_bytes, bsd_equivalent, extract_bsd

    if len(cfg.inputs) != 2:
        raise ConfigError("bsd-compare needs two documents")
    polys = [load_polyhedron(p) for p in cfg.inputs]
    results = []
    ok = all([_structure(results, p) for p in polys])
    if not ok:
        return Outcome(EXIT_NEGATIVE, results, {})
    names = [cfg.get("gamma"), cfg.get("gamma_b", cfg.get("gamma"))]
    data = []
    for poly, name in zip(polys, names):
        g = _gamma(poly, name)
        es = _spectrum(poly, cfg)
        data.append(extract_bsd(es, g.facet, cfg.get("pitch", 0.02), g.interval))
    v = bsd_equivalent(data[0], data[1], tol_lambda=cfg.get("tol_lambda", 1e-6), tol_trace=cfg.get("tol_trace", 1e-3))
    results.append(Result("eigenvalue gap", None, fmt(v.max_eigen_gap)))
    results.append(Result("boundary spectral data", v.equivalent, "equivalent" if v.equivalent else f"not equivalent: {v.reason}"))
    rows = [
        (k, int(idx[0]) + 1, len(idx), float(data[0].eigenvalues[idx[0]]), float(res))
        for k, (idx, res) in enumerate(zip(v.clusters, v.residuals))
    ]
    arts = {
        "clusters.csv": csv_text(("cluster", "first_index", "size", "eigenvalue", "residual"), rows),
        "bsd_a.bin": bsd_bytes(data[0]),
        "bsd_b.bin": bsd_bytes(data[1]),
    }
    return Outcome(EXIT_OK if v.equivalent else EXIT_NEGATIVE, results, arts)


def _boundary(poly: Polyhedron, cfg: ExperimentConfig):
    names = cfg.get("dirichlet", [])
    if not names:
        return "neumann"
    return {tuple(sorted(_gamma(poly, n).facet)): "dirichlet" for n in names}


def cmd_beam_trace(cfg: ExperimentConfig) -> Outcome:
    from ..beams import build_beam_tree, launch_state

    poly = load_polyhedron(cfg.inputs[0])
    results = []
    if not _structure(results, poly):
        return Outcome(EXIT_NEGATIVE, results, {})
    b0 = launch_state(poly.metric, cfg.get("p0"), cfg.get("direction"), width=cfg.get("width", 1.0))
    tree = build_beam_tree(b0, poly.metric, cfg.get("T", 1.0), cfg.get("dt", 0.01), _boundary(poly, cfg))
    rows = []
    for br in tree.branches:
        for t, z, s in zip(br.times, br.Z, br.simplices):
            if br.birth - 1e-12 <= t <= br.death + 1e-12:
                u = np.exp(z[8])
                G = z[4:8].reshape(2, 2).imag
                rows.append((br.id, -1 if br.parent is None else br.parent, br.kind, float(t), int(s),
                             float(z[0].real), float(z[1].real), float(z[2].real), float(z[3].real),
                             float(u.real), float(u.imag), float(np.linalg.eigvalsh(0.5 * (G + G.T)).min())))
    ev_rows = []
    for ev in tree.events:
        tc = complex(ev.t_coef) if ev.t_coef is not None else complex("nan")
        ev_rows.append((float(ev.t), "-".join(map(str, ev.facet)), ev.kind, float(ev.point[0]), float(ev.point[1]),
                        complex(ev.r).real, complex(ev.r).imag, tc.real, tc.imag, int(ev.critical)))
    spd = min((r[-1] for r in rows), default=np.inf) > 0
    results.append(Result("branches", None, f"{len(tree.branches)} branches, {len(tree.events)} events"))
    results.append(Result("Im H positive definite", spd, f"min eigenvalue {fmt(min(r[-1] for r in rows))}"))
    arts = {
        "beams.csv": csv_text(("branch", "parent", "kind", "t", "simplex", "x", "y", "xi_1", "xi_2", "u_re", "u_im", "min_eig_im_gamma"), rows),
        "events.csv": csv_text(("t", "facet", "kind", "x", "y", "r_re", "r_im", "t_re", "t_im", "critical"), ev_rows),
    }
    return Outcome(EXIT_OK if spd else EXIT_NEGATIVE, results, arts)


def cmd_echo(cfg: ExperimentConfig) -> Outcome:
    from ..beams import beam_echo_experiment

    poly = load_polyhedron(cfg.inputs[0])
    results = []
    if not _structure(results, poly):
        return Outcome(EXIT_NEGATIVE, results, {})
    facet = cfg.get("facet")
    if facet is None:
        facet = _gamma(poly, cfg.get("gamma")).facet
    elif tuple(sorted(facet)) not in poly.complex.cofaces:
        raise ConfigError(f"{tuple(facet)} is not an (n-1)-simplex")
    es = _spectrum(poly, cfg)
    rep = beam_echo_experiment(
        poly.metric, tuple(facet), cfg.get("p0"), cfg.get("sigma", 0.3), cfg.get("direction"), cfg.get("eps", 0.05), es,
        boundary=_boundary(poly, cfg), width=cfg.get("width", 4.0), n_times=int(cfg.get("n_times", 41)),
        threshold=cfg.get("threshold", 1e-2), max_truncation=cfg.get("max_truncation", 0.1),
    )
    results.append(Result("facet distance", None, fmt(rep.d)))
    results.append(Result("echo window", None, f"[{fmt(rep.window[0])}, {fmt(rep.window[1])}]"))
    results.append(Result("initial ball energy", None, fmt(rep.initial_energy)))
    results.append(Result("modal truncation", None, fmt(rep.truncation)))
    if rep.predicted_r is not None:
        r = complex(rep.predicted_r)
        results.append(Result("predicted reflection coefficient", None, f"{fmt(r.real)}{'+' if r.imag >= 0 else '-'}{fmt(abs(r.imag))}i"))
        results.append(Result("echo sign correlation", None, fmt(rep.correlation)))
    results.append(Result("echo", rep.detected, f"verdict {rep.verdict}, energy ratio {fmt(rep.ratio)} (threshold {fmt(rep.threshold)})"))
    arts = {"echo.csv": csv_text(("t", "ball_energy", "ratio"), zip(rep.times, rep.energy, rep.energy / rep.initial_energy))}
    return Outcome(EXIT_OK if rep.detected else EXIT_NEGATIVE, results, arts)


def cmd_dtn(cfg: ExperimentConfig) -> Outcome:
    from ..spectral import dtn_map

    poly = load_polyhedron(cfg.inputs[0])
    results = []
    if not _structure(results, poly):
        return Outcome(EXIT_NEGATIVE, results, {})
    g = _gamma(poly, cfg.get("gamma"))
    es = _spectrum(poly, replace(cfg, params={**cfg.params, "count": 1}))  # only K, M and the mesh are used
    flip = tuple(g.facet) != tuple(sorted(g.facet))
    s0, s1 = g.interval
    interval = (1.0 - s1, 1.0 - s0) if flip else (s0, s1)
    omega, T = cfg.get("omega", 2 * np.pi), cfg.get("T", 1.0)

    def f(t, s):
        s = 1.0 - s if flip else s
        u = np.clip((s - s0) / (s1 - s0), 0.0, 1.0)
        return np.sin(np.pi * u) ** 2 * np.sin(0.5 * omega * t) ** 2

    res = dtn_map(es, tuple(sorted(g.facet)), f, T, interval=interval, steps=int(cfg.get("steps", 1024)))
    s = 1.0 - res.s if flip else res.s
    order = np.argsort(s, kind="stable")
    rows = [(t, s[j], res.flux[i, j]) for i, t in enumerate(res.times) for j in order]
    results.append(Result("courant number", None, fmt(res.courant)))
    results.append(Result("samples", None, f"{len(res.times)} times x {len(s)} points"))
    return Outcome(EXIT_OK, results, {"dtn.csv": csv_text(("t", "s", "flux"), rows)})


HANDLERS = {
    "validate": cmd_validate,
    "spectrum": cmd_spectrum,
    "bsd-compare": cmd_bsd_compare,
    "beam-trace": cmd_beam_trace,
    "echo": cmd_echo,
    "dtn": cmd_dtn,
}


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run one command and write its artifacts atomically into ``cfg.out``.

    Artifacts are produced in memory first, so a failing run leaves no
    partial output.  Returns the exit status.
    """
    for p in cfg.inputs:
        if not Path(p).is_file():
            raise FileNotFoundError(f"input {p} does not exist")
    outcome = HANDLERS[cfg.command](cfg)
    arts = dict(outcome.artifacts)
    arts.update(emit_report(outcome.results, f"rpoly {cfg.command}"))
    write_artifacts(Path(cfg.out), arts)
    return outcome.status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rpoly", description="Experiments on piecewise Riemannian polyhedra (n = 2).")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, n_docs=1):
        p.add_argument("documents", nargs=n_docs, help="polyhedron document(s)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=0)

    def spectral(p, count=10):
        p.add_argument("--h", type=float, default=0.05, help="mesh size")
        p.add_argument("--count", type=int, default=count, help="number of eigenpairs")
        p.add_argument("--tol-eig", type=float, default=1e-6)
        p.add_argument("--dirichlet", action="append", default=[], metavar="GAMMA", help="gamma with Dirichlet condition")

    def launch(p):
        p.add_argument("--p0", type=float, nargs=2, required=True, metavar=("X", "Y"))
        p.add_argument("--direction", type=float, nargs=2, required=True, metavar=("DX", "DY"))
        p.add_argument("--width", type=float, default=None)

    p = sub.add_parser("validate", help="structural and admissibility checks")
    common(p)
    p.add_argument("--resolution", type=float, default=0.05)
    p.add_argument("--pairs", type=int, default=12)

    p = sub.add_parser("spectrum", help="Neumann eigenpairs")
    common(p)
    spectral(p)

    p = sub.add_parser("bsd-compare", help="compare boundary spectral data of two documents")
    common(p, 2)
    spectral(p, 40)
    p.add_argument("--gamma")
    p.add_argument("--gamma-b")
    p.add_argument("--pitch", type=float, default=0.02)
    p.add_argument("--tol-lambda", type=float, default=1e-6)
    p.add_argument("--tol-trace", type=float, default=1e-3)

    p = sub.add_parser("beam-trace", help="beam tree with interface splitting")
    common(p)
    launch(p)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--dirichlet", action="append", default=[], metavar="GAMMA", help="gamma with Dirichlet condition")

    p = sub.add_parser("echo", help="beam echo experiment at a facet")
    common(p)
    spectral(p, 400)
    launch(p)
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--gamma", help="boundary subset to probe")
    target.add_argument("--facet", type=int, nargs=2, metavar=("V1", "V2"), help="facet to probe, by vertex ids")
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--sigma", type=float, default=0.3)
    p.add_argument("--threshold", type=float, default=1e-2)
    p.add_argument("--n-times", type=int, default=41)
    p.add_argument("--max-truncation", type=float, default=0.1)

    p = sub.add_parser("dtn", help="Dirichlet-to-Neumann samples on a gamma")
    common(p)
    p.add_argument("--h", type=float, default=0.05)
    p.add_argument("--gamma")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=1024)
    p.add_argument("--omega", type=float, default=2 * np.pi)
    return ap


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    skip = {"command", "documents", "out", "seed"}
    params = {k: v for k, v in vars(ns).items() if k not in skip}
    for k in ("p0", "direction", "facet"):
        if params.get(k) is not None:
            params[k] = tuple(params[k])
    return ExperimentConfig(ns.command, tuple(ns.documents), ns.out, ns.seed, params)


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return run_experiment(config_from_args(ns))
    except DocumentError as exc:
        print(f"rpoly {ns.command}: {exc}", file=sys.stderr)
    except Exception as exc:  # noqa: BLE001
        print(f"rpoly {ns.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
