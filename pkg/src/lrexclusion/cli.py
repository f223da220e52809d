"""Command-line driver: ``lrex <subcommand> --config run.yaml``.

Subcommands: validate-kernel, simulate, check-lemmas, bg-principle, sbe, compare.
The config is YAML with blocks ``kernel``, ``sim``, ``fields``, ``run``,
``sbe`` and ``lemmas`` (see README).  Every run writes CSV tables and a JSON
summary; the exit status is 1 iff some enabled criterion failed, 2 for a
config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import suites
from .dynamics import SimParams, replica_rng, run_kmc
from .farm import run_replicas
from .fields import test_function_from_config
from .kernel import KernelError, build_pn, gamma_sequence, kernel_from_config, moments, nearest_neighbor
from .lattice import sample_bernoulli

log = logging.getLogger("lrexclusion")

CSV_COLUMNS = ["replica", "function", "t", "Y", "drift_int", "A", "A_hat", "R", "M", "QV"]


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class MismatchedTestFunctions(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kernel: dict
    sim: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    sbe: dict = field(default_factory=dict)
    lemmas: dict = field(default_factory=dict)
    suite: list = field(default_factory=list)

    # -- derived views --
    @property
    def L(self) -> int:
        return int(self.sim.get("L", 4))

    @property
    def n(self) -> int:
        return int(self.sim.get("n", self.n_list[-1] if self.n_list else 64))

    @property
    def n_list(self) -> list:
        return [int(v) for v in self.sim.get("n_list", [])]

    def functions(self):
        specs = self.fields.get("functions") or [{"name": "f", "family": "gaussian", "width": 0.4}]
        return [test_function_from_config(s, self.L) for s in specs]

    def bg_function(self):
        """Test function for the block-length sweep: ``fields.bg_function`` by name, else a
        gaussian of width L/4 centred on the torus."""
        name = self.fields.get("bg_function")
        if name is None:
            return test_function_from_config({"name": "bg", "family": "gaussian", "center": self.L / 2,
                                              "width": self.L / 4}, self.L)
        return next(f for f in self.functions() if f.name == name)

    def build_kernel(self):
        try:
            return kernel_from_config(self.kernel)
        except KernelError as e:
            raise ConfigError("kernel", str(e)) from e
        except KeyError as e:
            raise ConfigError(f"kernel.{e.args[0]}", "missing key") from e


def _require_block(raw: dict, key: str, required: bool = False) -> dict:
    v = raw.get(key)
    if v is None:
        if required:
            raise ConfigError(key, "missing block")
        return {}
    if not isinstance(v, dict):
        raise ConfigError(key, f"expected a mapping, got {type(v).__name__}")
    return v


def parse_config(raw: dict | None) -> ExperimentConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    known = {"kernel", "sim", "fields", "run", "sbe", "lemmas", "suite"}
    for k in raw:
        if k not in known:
            raise ConfigError(str(k), "unknown block")
    cfg = ExperimentConfig(
        kernel=_require_block(raw, "kernel", required=True),
        sim=_require_block(raw, "sim"), fields=_require_block(raw, "fields"),
        run=_require_block(raw, "run"), sbe=_require_block(raw, "sbe"),
        lemmas=_require_block(raw, "lemmas"),
        suite=list(raw.get("suite") or []) if not isinstance(raw.get("suite"), str) else [raw["suite"]],
    )
    nl = cfg.sim.get("n_list")
    if nl is not None:
        if not isinstance(nl, list) or not nl:
            raise ConfigError("sim.n_list", "expected a nonempty list")
        if any(b <= a for a, b in zip(nl, nl[1:])):
            raise ConfigError("sim.n_list", "must be sorted ascending")
    reps = cfg.run.get("replicas", 1)
    if not isinstance(reps, int) or reps < 1:
        raise ConfigError("run.replicas", "must be an integer >= 1")
    names = [s.get("name") for s in cfg.fields.get("functions", []) if isinstance(s, dict)]
    for i, s in enumerate(cfg.fields.get("functions", [])):
        if not isinstance(s, dict):
            raise ConfigError(f"fields.functions[{i}]", "expected a mapping")
        try:
            test_function_from_config(s, cfg.L)
        except (KeyError, ValueError) as e:
            raise ConfigError(f"fields.functions[{i}]", str(e)) from e
    for ref in cfg.fields.get("compare", []):
        if ref not in names:
            raise ConfigError("fields.compare", f"unknown test function {ref!r}")
    bgf = cfg.fields.get("bg_function")
    if bgf is not None and bgf not in names:
        raise ConfigError("fields.bg_function", f"unknown test function {bgf!r}")
    for e in cfg.fields.get("ell_list", []):
        if int(e) < 2:
            raise ConfigError("fields.ell_list", f"block length {e} < 2")
    return cfg


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return parse_config({"kernel": {"family": "power_law", "beta": 3, "zmax": 8}})
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as e:
            raise ConfigError("<file>", str(e)) from e
    return parse_config(raw)


# -- output helpers ----------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating, float)):
        v = float(o)
        return v if math.isfinite(v) else str(v)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    return o


def emit(criteria, out_dir: Path, name: str, json_summary: str | None, extra: dict | None = None) -> int:
    for c in criteria:
        print(c.line())
    summary = {"suite": name, "criteria": [c.as_dict() for c in criteria],
               "pass": all(c.passed for c in criteria)}
    if extra:
        summary["details"] = _jsonable(extra)
    text = json.dumps(_jsonable(summary), indent=2)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{name}_summary.json").write_text(text + "\n")
    if json_summary:
        Path(json_summary).parent.mkdir(parents=True, exist_ok=True)
        Path(json_summary).write_text(text + "\n")
    return 0 if summary["pass"] else 1


def record_rows(res, eps_list):
    for ri, recs in zip(res.replica_ids, res.records):
        for fi, f in enumerate(res.functions):
            for rec in recs[fi]:
                yield [ri, f.name, rec.t, rec.Y, rec.drift_int, rec.A, rec.A_hat, rec.R, rec.M, rec.QV] + \
                      [rec.A_eps[e] for e in eps_list]


# -- subcommands -------------------------------------------------------------------

def cmd_validate_kernel(cfg: ExperimentConfig, args) -> int:
    k = cfg.build_kernel()
    mom = moments(k)
    b = float(cfg.sim.get("b", 1.0))
    n_list = cfg.n_list or [cfg.n]
    crit = suites.exact_identities([k], n_list=n_list, seed=args.seed)[1:2]
    details = {"support_radius": k.support_radius, "s": k.s_values, "a": k.a_values,
               "tail_mass_s": k.tail_mass_s, "sigma2": mom.sigma2, "m": mom.m, "c1": mom.c1, "c2": mom.c2,
               "path_to_one": mom.path_to_one, "gamma_n": {n: gamma_sequence(n, b, k.domination_C) for n in n_list}}
    return emit(crit, Path(args.out), "validate_kernel", args.json_summary, details)


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    k = cfg.build_kernel()
    fs = cfg.functions()
    t_max = float(cfg.sim.get("t_max", 1.0))
    cps = tuple(cfg.sim.get("checkpoints", [t_max]))
    params = SimParams(cfg.n, cfg.L, float(cfg.sim.get("b", 1.0)), t_max, args.seed, cps)
    replicas = args.replicas or int(cfg.run.get("replicas", 1))
    eps_list = [float(e) for e in cfg.fields.get("eps_list", [])]
    res = run_replicas(params, k, fs, replicas, args.seed, args.threads, eps_list=eps_list)
    out = Path(args.out)
    write_csv(out / "simulate.csv", CSV_COLUMNS + [f"A_eps_{e:g}" for e in eps_list], record_rows(res, eps_list))
    if args.dump_events:
        rng = replica_rng(args.seed, 0)
        init = sample_bernoulli(params.N, 0.5, rng)
        traj = run_kmc(init, build_pn(k, params.n, params.b), params.n, params.t_max, rng)
        with open(args.dump_events, "w") as fh:
            for t, x, y in zip(traj.times, traj.origins, traj.targets):
                fh.write(json.dumps({"t": float(t), "x": int(x), "y": int(y)}) + "\n")
    crit = []
    if params.checkpoint_times and replicas > 1:
        for fi, f in enumerate(fs):
            for c in suites.stationary_criteria(res, k, f, fi=fi):
                c.name = f"{c.name}[{f.name}]"
                crit.append(c)
    details = {"n": params.n, "N": params.N, "replicas": replicas,
               "events_per_replica": float(res.events.mean())}
    return emit(crit, out, "simulate", args.json_summary, details)


def cmd_check_lemmas(cfg: ExperimentConfig, args) -> int:
    k = cfg.build_kernel()
    nn = nearest_neighbor()
    lem = cfg.lemmas
    fs = cfg.functions()
    crit = suites.exact_identities([k, nn], seed=args.seed)
    N = int(lem.get("N", 12))
    kernels = [kk for kk in (k, nn) if kk.support_radius <= N // 2]
    c2, raw = suites.enumeration(kernels, nn, N=N, trials=int(lem.get("trials", 1000)),
                                 z_max=int(lem.get("z_max", 5)), seed=args.seed)
    crit += c2
    c3, raw3 = suites.appendix(fs[0], [nn, k], tuple(lem.get("n_list", (32, 64, 128, 256))))
    crit += c3
    out = Path(args.out)
    rows = []
    for name, rep in raw3.items():
        for key, seq in rep["errors"].items():
            for n, v in zip(rep["grid"], seq):
                rows.append([name, key, n, v])
    write_csv(out / "appendix_errors.csv", ["kernel", "quantity", "n", "error"], rows)
    mp = raw["moving_particle"]["minimal_factor"]
    write_csv(out / "moving_particle.csv", ["z", "stated_factor", "max_observed_ratio"],
              [[z, 4 * z - 3, v] for z, v in sorted(mp.items())])
    return emit(crit, out, "check_lemmas", args.json_summary,
                {"minimal_factor": mp, "dirichlet": {kk: v for kk, v in raw.items() if kk != "moving_particle"}})


def cmd_bg_principle(cfg: ExperimentConfig, args) -> int:
    k = cfg.build_kernel()
    f = cfg.functions()[0]
    replicas = int(cfg.run.get("replicas", 400))
    crit, raw = suites.scalings(
        k, f, n_list=tuple(cfg.n_list or (16, 32, 64)), bg_n=cfg.n,
        ell_list=tuple(int(e) for e in cfg.fields.get("ell_list", (4, 8, 16, 32))),
        replicas=replicas, t=float(cfg.sim.get("t_max", 0.25)), b=float(cfg.sim.get("b", 1.0)),
        master_seed=args.seed, threads=args.threads, bg_f=cfg.bg_function())
    out = Path(args.out)
    bg = raw["bg"]
    write_csv(out / "bg_errors.csv", ["ell", "bg", "bg_se", "gap", "gap_se"],
              zip(bg["grid"], bg["errors"]["bg"], bg["errors"]["bg_se"], bg["errors"]["gap"], bg["errors"]["gap_se"]))
    ibp = raw["ibp"]
    write_csv(out / "ibp_errors.csv", ["n", "E_R2", "se"], zip(ibp["grid"], ibp["errors"]["E_R2"], ibp["errors"]["se"]))
    return emit(crit, out, "bg_principle", args.json_summary, raw)


def _sbe_settings(cfg: ExperimentConfig):
    k = cfg.build_kernel()
    mom = moments(k)
    s = cfg.sbe
    return dict(M=int(s.get("M", 256)), dt=float(s.get("dt", 1e-4)), t_max=float(s.get("t_max", 1.0)),
                b=float(s.get("b", cfg.sim.get("b", 1.0))), sigma2=float(s.get("sigma2", mom.sigma2)),
                m=float(s.get("m", mom.m)), eps_list=[float(e) for e in s.get("eps_list", [])],
                replicas=int(s.get("replicas", cfg.run.get("replicas", 100))),
                scheme=s.get("scheme", "exponential"), dealias=bool(s.get("dealias", True)))


def cmd_sbe(cfg: ExperimentConfig, args) -> int:
    from . import sbe

    st = _sbe_settings(cfg)
    fs = cfg.functions()
    params = sbe.SolverParams(st["dt"], st["t_max"], args.seed, st["scheme"], st["dealias"])
    r = sbe.solve(st["M"], params, fs, L=cfg.L, sigma2=st["sigma2"], b=st["b"], m=st["m"],
                  replicas=st["replicas"], eps_list=st["eps_list"])
    out = Path(args.out)
    header = ["t", "function", "mean_Y", "var_Y", "var_martingale", "mean_nonlinear_int"] + \
             [f"mean_B_{e:g}" for e in st["eps_list"]]
    Mart = r.martingale()
    rows = []
    for c, t in enumerate(r.times):
        for fi, f in enumerate(fs):
            rows.append([t, f.name, r.Y[:, fi, c].mean(), r.Y[:, fi, c].var(), np.mean(Mart[:, fi, c] ** 2),
                         r.nonlinear_int[:, fi, c].mean()] + [r.B[e][:, fi, c].mean() for e in st["eps_list"]])
    write_csv(out / "sbe.csv", header, rows)
    write_csv(out / "sbe_modes.csv", ["k", "power_ratio", "se"],
              [[i + 1, v, s] for i, (v, s) in enumerate(zip(r.mode_ratio(), r.mode_ratio_se()))])
    crit = suites.spde_criteria(r, fs[0])
    return emit(crit, out, "sbe", args.json_summary, {k: v for k, v in st.items()})


def cmd_compare(cfg: ExperimentConfig, args) -> int:
    from . import sbe

    k = cfg.build_kernel()
    fs = cfg.functions()
    names = cfg.fields.get("compare") or [fs[0].name]
    chosen = [f for f in fs if f.name in names]
    if len(chosen) != len(names):
        raise MismatchedTestFunctions(f"compare lists {names}, config defines {[f.name for f in fs]}")
    f = chosen[0]
    b = float(cfg.sim.get("b", 0.0))
    times = tuple(float(t) for t in cfg.sim.get("checkpoints", (0.1, 0.5, 1.0)))
    replicas = int(cfg.run.get("replicas", 200))
    sig2 = moments(k).sigma2
    out = Path(args.out)
    rows, crit = [], []
    n_values = cfg.n_list or [cfg.n]
    for n in n_values:
        params = SimParams(n, cfg.L, b, max(times), args.seed, (0.0,) + times)
        res = run_replicas(params, k, [f], replicas, args.seed, args.threads, fields_only=True)
        Y = res.Y[:, 0]
        rows += _cov_rows(f"particle_n={n}", Y[:, 0], Y[:, 1:], times, f, sig2)
        if b == 0:
            crit += [_rename(c, f"particle_n={n}") for c in suites.covariance_rows(Y[:, 0], Y[:, 1:], f, sig2, times)]
    st = _sbe_settings(cfg)
    params = sbe.SolverParams(st["dt"], max(times), args.seed)
    r = sbe.solve(st["M"], params, [f], L=cfg.L, sigma2=sig2, b=b, m=moments(k).m,
                  replicas=st["replicas"], record_every=min(times))
    idx = [int(np.argmin(np.abs(r.times - t))) for t in times]
    rows += _cov_rows("sbe", r.Y[:, 0, 0], r.Y[:, 0, idx], times, f, sig2)
    if b == 0:
        crit += [_rename(c, "sbe") for c in suites.covariance_rows(r.Y[:, 0, 0], r.Y[:, 0, idx], f, sig2, times)]
    write_csv(out / "compare.csv", ["system", "t", "cov", "se", "ou_closed_form", "z"], rows)
    return emit(crit, out, "compare", args.json_summary, {"b": b, "n": n_values})


def _rename(c, tag):
    c.name = f"{c.name}[{tag}]"
    return c


def _cov_rows(system, Y0, Yt, times, f, sig2):
    from .sbe import ou_covariance
    from .stats import mean_se

    rows = []
    for c, t in enumerate(times):
        m, s = mean_se(Y0 * Yt[:, c])
        ref = ou_covariance(f, f, t, sig2, f.L)
        rows.append([system, t, m, s, ref, (m - ref) / s if s > 0 else 0.0])
    return rows


COMMANDS = {
    "validate-kernel": cmd_validate_kernel,
    "simulate": cmd_simulate,
    "check-lemmas": cmd_check_lemmas,
    "bg-principle": cmd_bg_principle,
    "sbe": cmd_sbe,
    "compare": cmd_compare,
}


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands accept the global flags too; SUPPRESS keeps their defaults
    # from overwriting values given before the subcommand name
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--config", default=d(None), help="YAML experiment config")
    g.add_argument("--seed", type=int, default=d(0), help="master seed (default 0)")
    g.add_argument("--threads", type=int, default=d(1))
    g.add_argument("--out", default=d("results"), help="output directory")
    g.add_argument("--json-summary", default=d(None), help="also write the JSON summary here")
    g.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return g


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lrex", description=__doc__.splitlines()[0], parents=[_global_flags(False)])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[_global_flags(True)])
        if name == "simulate":
            sp.add_argument("--replicas", type=int, help="override run.replicas")
            sp.add_argument("--dump-events", metavar="PATH", help="NDJSON {t,x,y} of replica 0")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
