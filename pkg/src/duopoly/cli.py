"""Command-line front end.

Every command builds its artifacts as ``{filename: text}`` in memory and
writes them afterwards, so output bytes depend only on (config, seed).

    duopoly simulate-bass --config bass.toml --out out/
    duopoly simulate-abm  --config abm.toml --seed 7 --replicates 20
    duopoly equilibrium   --config eq.toml
    duopoly sweep         --config sweep.toml
    duopoly fit           --config fit.toml
    duopoly reproduce fig4 --out out/fig4
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import abm, equilibrium as eqm, fitting
from .bass_core import PARAM_NAMES, BassParams, MarketState, SingleBrandParams, Trajectory, \
    closed_form_single, integrate
from .errors import DuopolyError, InvalidConfigError

log = logging.getLogger("duopoly")

MODES = ("bass", "abm", "equilibrium", "sweep-fig1", "sweep-fig2", "fit", "reproduce")
FIGURES = ("fig1", "fig2", "fig3", "fig4", "table-eq")

# published monopoly fits and duopoly ABM split, used by table-eq
PUBLISHED_MONOPOLY = BassParams(p1=0.0109, p2=0.0239, q11=0.3536, q22=0.3513)
PUBLISHED_ABM_SPLIT = eqm.EquilibriumPoint(0.40125, 0.59875)
FIG2_BASE = BassParams(p1=0.03, p2=0.06, q11=0.38, q22=0.68)
DEFAULT_REPLICATES = 20
NEG_INF = float("-inf")


class NotConverged(DuopolyError):
    """Artifacts were written but a numerical routine did not converge."""


@dataclass
class ScenarioConfig:
    mode: str
    sections: dict = field(default_factory=dict)
    output_dir: Path = Path("out")
    rng_seed: int = 0

    def section(self, name: str) -> dict:
        if name not in self.sections:
            raise InvalidConfigError(f"mode {self.mode!r} needs a [{name}] section")
        return dict(self.sections[name])


def load_config(path: str | None, mode: str) -> ScenarioConfig:
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise InvalidConfigError(f"cannot read config {path}: {exc}") from exc
    declared = data.pop("mode", mode)
    if declared not in MODES and declared != "sweep":
        raise InvalidConfigError(f"unknown mode {declared!r}; choose from {MODES}")
    if declared != mode and not (mode == "sweep" and declared.startswith("sweep-")):
        raise InvalidConfigError(f"config declares mode {declared!r} but command is {mode!r}")
    if declared.startswith("sweep-"):
        data.setdefault("sweep", {}).setdefault("kind", declared.removeprefix("sweep-"))
        mode = declared
    out = Path(data.pop("output_dir", "out"))
    seed = int(data.pop("rng_seed", 0))
    return ScenarioConfig(mode, data, out, seed)


def bass_from_section(sec: dict) -> BassParams:
    unknown = set(sec) - set(PARAM_NAMES) - {"m"}
    if unknown:
        raise InvalidConfigError(f"unknown [bass] keys: {sorted(unknown)}")
    missing = [n for n in ("p1", "p2", "q11", "q22") if n not in sec]
    if missing:
        raise InvalidConfigError(f"[bass] is missing {missing}")
    return BassParams(**{k: float(v) for k, v in sec.items()})


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


# --- commands ------------------------------------------------------------------

def cmd_simulate_bass(cfg: ScenarioConfig) -> tuple[dict[str, str], str]:
    params = bass_from_section(cfg.section("bass"))
    integ = cfg.sections.get("integration", {})
    dt = float(integ.get("dt", 0.01))
    t_end = float(integ.get("t_end", 100.0))
    init = MarketState(0.0, float(integ.get("n1", 0.0)), float(integ.get("n2", 0.0)))
    traj = integrate(params, init, t_end, dt, record_every=int(integ.get("record_every", 1)),
                     stop_at_saturation=bool(integ.get("stop_at_saturation", False)))
    f = traj.final
    msg = (f"final t={f.t:.6g} n1={f.n1:.10f} n2={f.n2:.10f} "
           f"({'saturated' if traj.saturated else 'not saturated'})")
    return {"bass_trajectory.csv": traj.to_csv()}, msg


def _abm_config(cfg: ScenarioConfig, seed: int | None) -> abm.AbmConfig:
    sec = cfg.section("abm")
    sec.pop("replicates", None)
    if seed is not None:
        sec["rng_seed"] = seed
    elif "rng_seed" not in sec:
        sec["rng_seed"] = cfg.rng_seed
    return abm.AbmConfig.from_dict(sec)


def cmd_simulate_abm(cfg: ScenarioConfig, seed: int | None = None,
                     replicates: int | None = None) -> tuple[dict[str, str], str]:
    conf = _abm_config(cfg, seed)
    reps = replicates if replicates is not None else int(cfg.sections["abm"].get("replicates", 1))
    traj = abm.run(conf) if reps == 1 else abm.ensemble(conf, reps)
    n1, n2 = traj.final
    msg = f"ticks={len(traj) - 1} final n1={n1:.6f} n2={n2:.6f} replicates={reps}"
    return {"abm_trajectory.csv": traj.to_csv()}, msg


def cmd_equilibrium(cfg: ScenarioConfig) -> tuple[dict[str, str], str]:
    params = bass_from_section(cfg.section("bass"))
    report: dict = {"params": params.to_dict()}
    if params.q12 == 0 and params.q21 == 0:
        root = eqm.solve_within_brand_equilibrium(params.p1, params.p2, params.q11, params.q22)
        report["within_brand_root"] = {"n1": root.n1, "n2": root.n2}
    land = eqm.landing_point(params)
    report["integrated_landing"] = {"n1": land.n1, "n2": land.n2}
    if "perturbation" in cfg.sections:
        sec = cfg.sections["perturbation"]
        pa = eqm.analyze_perturbation(params, float(sec["n1_star"]), float(sec["dn1"]),
                                      float(sec["dn2"]))
        report["perturbation"] = {"n1_star": pa.n1_star, "a": pa.a, "b": pa.b, "c1": pa.c1,
                                  "c2": pa.c2, "limit": list(pa.limit_point)}
    return {"equilibrium.json": _json(report)}, f"landing n1={land.n1:.8f} n2={land.n2:.8f}"


def _fig1_files(base_imitation: BassParams, base_innovation: BassParams) -> dict[str, str]:
    rows_q = eqm.sweep_fig1(base_imitation, eqm.fig1_deltas("imitation"), "imitation")
    rows_p = eqm.sweep_fig1(base_innovation, eqm.fig1_deltas("innovation"), "innovation")
    return {"fig1_imitation.csv": eqm.sweep_table_csv(rows_q),
            "fig1_innovation.csv": eqm.sweep_table_csv(rows_p),
            "fig1.gp": GNUPLOT_FIG1}


def _fig2_files(params: BassParams, t_end: float = 40.0, dt: float = 0.01) -> dict[str, str]:
    trajs = eqm.sweep_fig2(params, t_end=t_end, dt=dt, record_every=10)
    return {"fig2.csv": eqm.fig2_table_csv(trajs), "fig2.gp": GNUPLOT_FIG2}


def cmd_sweep(cfg: ScenarioConfig) -> tuple[dict[str, str], str]:
    sec = cfg.sections.get("sweep", {})
    kind = sec.get("kind", "fig1")
    if kind == "fig1":
        imit = BassParams(**sec.get("imitation_base", {"p1": 0.03, "p2": 0.03, "q11": 0.2, "q22": 0.2}))
        innov = BassParams(**sec.get("innovation_base", {"p1": 0.01, "p2": 0.01, "q11": 0.4, "q22": 0.4}))
        return _fig1_files(imit, innov), "fig1 sweeps written"
    if kind == "fig2":
        params = bass_from_section(cfg.section("bass")) if "bass" in cfg.sections else FIG2_BASE
        return _fig2_files(params, float(sec.get("t_end", 40.0))), "fig2 cases written"
    raise InvalidConfigError(f"[sweep] kind must be 'fig1' or 'fig2', got {kind!r}")


def _monopoly_configs(base: abm.AbmConfig) -> tuple[abm.AbmConfig, abm.AbmConfig]:
    u_b = base.u[0] if math.isfinite(base.u[0]) else base.u[1]
    one = replace(base, gamma2=0, u=(u_b, NEG_INF, base.u[2]))
    two = replace(base, gamma1=0, u=(NEG_INF, u_b, base.u[2]))
    return one, two


def monopoly_fits(base: abm.AbmConfig, replicates: int):
    """Monopoly ABM ensembles for each brand's seeding rate and their single-brand fits."""
    c1, c2 = _monopoly_configs(base)
    m1 = abm.ensemble(c1, replicates)
    m2 = abm.ensemble(c2, replicates)
    f1 = fitting.fit_single_brand(m1.t, m1.n1)
    f2 = fitting.fit_single_brand(m2.t, m2.n2)
    return m1, m2, f1, f2


def _fig3_files(base: abm.AbmConfig, replicates: int):
    m1, m2, f1, f2 = monopoly_fits(base, replicates)
    files = {}
    for label, traj, share, fit in (("1", m1, m1.n1, f1), ("2", m2, m2.n2, f2)):
        bass = closed_form_single(fit.params, traj.t)
        lines = ["t,abm,bass"] + [f"{t:.17g},{a:.17g},{b:.17g}" for t, a, b in
                                  zip(traj.t, share, bass)]
        files[f"fig3_brand{label}.csv"] = "\n".join(lines) + "\n"
    files["fig3_fits.json"] = _json({
        "abm": base.to_dict() | {"replicates": replicates},
        "brand1": f1.to_json_dict() | {"gamma": base.gamma1},
        "brand2": f2.to_json_dict() | {"gamma": base.gamma2},
    })
    files["fig3.gp"] = GNUPLOT_FIG3
    converged = f1.converged and f2.converged
    params = BassParams(f1.params.p, f2.params.p, f1.params.q, f2.params.q)
    return files, params, converged


def _experiment_files(target: abm.AbmTrajectory, base: BassParams, results) -> dict[str, str]:
    files = {}
    for r in results:
        files[f"fit_exp{r.experiment}.json"] = r.to_json()
    header = "t,abm_n1,abm_n2," + ",".join(f"exp{r.experiment}_n1,exp{r.experiment}_n2"
                                           for r in results)
    lines = [header]
    for i, t in enumerate(target.t):
        cells = [f"{t:.17g}", f"{target.n1[i]:.17g}", f"{target.n2[i]:.17g}"]
        for r in results:
            cells += [f"{r.model.n1[i]:.17g}", f"{r.model.n2[i]:.17g}"]
        lines.append(",".join(cells))
    files["fig4_curves.csv"] = "\n".join(lines) + "\n"
    files["fig4_base.json"] = _json(base.to_dict())
    return files


def _fig4_files(base_abm: abm.AbmConfig, replicates: int):
    f3, params, conv3 = _fig3_files(base_abm, replicates)
    target = abm.ensemble(base_abm, replicates)
    results = fitting.run_experiments(target, params)
    files = _experiment_files(target, params, results)
    files["fig3_fits.json"] = f3["fig3_fits.json"]
    files["abm_duopoly.csv"] = target.to_csv()
    files["fig4.gp"] = GNUPLOT_FIG4
    return files, conv3 and all(r.converged for r in results)


def _table_eq_files() -> dict[str, str]:
    a = eqm.landing_point(PUBLISHED_MONOPOLY)
    root = eqm.solve_within_brand_equilibrium(PUBLISHED_MONOPOLY.p1, PUBLISHED_MONOPOLY.p2,
                                              PUBLISHED_MONOPOLY.q11, PUBLISHED_MONOPOLY.q22)
    c = fitting.match_final_proportions(PUBLISHED_MONOPOLY, PUBLISHED_ABM_SPLIT)
    b = eqm.landing_point(replace(PUBLISHED_MONOPOLY, q12=c, q21=c))
    return {"table_eq.json": _json({
        "params": PUBLISHED_MONOPOLY.to_dict(),
        "case_a": {"q12": 0.0, "q21": 0.0, "n1": a.n1, "n2": a.n2,
                   "within_brand_root": {"n1": root.n1, "n2": root.n2}},
        "case_b": {"target": {"n1": PUBLISHED_ABM_SPLIT.n1, "n2": PUBLISHED_ABM_SPLIT.n2},
                   "tied_cross": c, "n1": b.n1, "n2": b.n2},
    })}


def default_abm(seed: int) -> abm.AbmConfig:
    return abm.AbmConfig(rng_seed=seed)


def cmd_fit(cfg: ScenarioConfig, seed: int | None = None,
            replicates: int | None = None) -> tuple[dict[str, str], str, bool]:
    sec = cfg.sections.get("fit", {})
    reps = replicates if replicates is not None else int(sec.get("replicates", DEFAULT_REPLICATES))
    files: dict[str, str] = {}
    converged = True
    abm_conf = None
    if "abm" in cfg.sections or "target" not in sec:
        abm_conf = _abm_config(cfg, seed) if "abm" in cfg.sections else default_abm(
            seed if seed is not None else cfg.rng_seed)
    if "target" in sec:
        t = Trajectory.from_csv(sec["target"])
        target = abm.AbmTrajectory(t.t, t.n1, t.n2)
    else:
        target = abm.ensemble(abm_conf, reps)
        files["abm_duopoly.csv"] = target.to_csv()
    if "bass" in cfg.sections:
        base = bass_from_section(cfg.section("bass"))
    else:
        if abm_conf is None:
            raise InvalidConfigError("[fit] with a target file needs a [bass] base or an [abm] section")
        f3, base, conv = _fig3_files(abm_conf, reps)
        files.update({k: v for k, v in f3.items() if k.endswith(".json")})
        converged &= conv
    results = fitting.run_experiments(target, base)
    files.update(_experiment_files(target, base, results))
    converged &= all(r.converged for r in results)
    msg = "; ".join(f"exp{r.experiment}: area={r.area_diff_pct:.3f}% "
                    f"r2=({r.r2[0]:.4f},{r.r2[1]:.4f})" for r in results)
    return files, msg, converged


def cmd_reproduce(figure_id: str, seed: int = 0,
                  replicates: int = DEFAULT_REPLICATES) -> tuple[dict[str, str], str, bool]:
    if figure_id == "fig1":
        return _fig1_files(BassParams(0.03, 0.03, 0.2, 0.2),
                           BassParams(0.01, 0.01, 0.4, 0.4)), "fig1 written", True
    if figure_id == "fig2":
        return _fig2_files(FIG2_BASE), "fig2 written", True
    if figure_id == "fig3":
        files, params, conv = _fig3_files(default_abm(seed), replicates)
        return files, f"monopoly fits p=({params.p1:.4f},{params.p2:.4f}) " \
                      f"q=({params.q11:.4f},{params.q22:.4f})", conv
    if figure_id == "fig4":
        files, conv = _fig4_files(default_abm(seed), replicates)
        areas = [json.loads(files[f"fit_exp{i}.json"])["area_diff_pct"] for i in range(1, 5)]
        return files, "area_diff % " + ", ".join(f"{a:.3f}" for a in areas), conv
    if figure_id == "table-eq":
        files = _table_eq_files()
        c = json.loads(files["table_eq.json"])["case_b"]["tied_cross"]
        return files, f"tied cross coefficient {c:.6f}", True
    raise InvalidConfigError(f"unknown figure id {figure_id!r}; choose from {FIGURES}")


# --- gnuplot templates -----------------------------------------------------------

GNUPLOT_FIG1 = """set datafile separator ','
set key autotitle columnhead
set multiplot layout 1,2
set xlabel 'delta q'; set ylabel 'share'
plot 'fig1_imitation.csv' using 1:2 with linespoints title 'n1', '' using 1:3 with linespoints title 'n2'
set xlabel 'delta p'
plot 'fig1_innovation.csv' using 1:2 with linespoints title 'n1', '' using 1:3 with linespoints title 'n2'
unset multiplot
"""

GNUPLOT_FIG2 = """set datafile separator ','
set xlabel 't'; set ylabel 'share'
set multiplot layout 2,2
do for [c in "A B C D"] {
  set title 'case '.c
  plot 'fig2.csv' using ($1 eq c ? $2 : 1/0):3 with lines dt 2 title 'n1', \\
       '' using ($1 eq c ? $2 : 1/0):4 with lines title 'n2'
}
unset multiplot
"""

GNUPLOT_FIG3 = """set datafile separator ','
set key autotitle columnhead
set xlabel 'tick'; set ylabel 'share'
set multiplot layout 1,2
plot 'fig3_brand1.csv' using 1:2 with points title 'ABM', '' using 1:3 with lines title 'Bass'
plot 'fig3_brand2.csv' using 1:2 with points title 'ABM', '' using 1:3 with lines title 'Bass'
unset multiplot
"""

GNUPLOT_FIG4 = """set datafile separator ','
set key autotitle columnhead
set xlabel 'tick'; set ylabel 'share'
set multiplot layout 2,2
do for [e=1:4] {
  set title 'experiment '.e
  plot 'fig4_curves.csv' using 1:2 with points title 'ABM n1', '' using 1:3 with points title 'ABM n2', \\
       '' using 1:(column(2+2*e)) with lines dt 2 title 'Bass n1', '' using 1:(column(3+2*e)) with lines title 'Bass n2'
}
unset multiplot
"""


# --- entry point -------------------------------------------------------------------

def write_files(out_dir: Path, files: dict[str, str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in sorted(files):
        with open(out_dir / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(files[name])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="duopoly", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False, reps=False, config=True):
        if config:
            p.add_argument("--config", help="TOML scenario file")
        p.add_argument("--out", type=Path, help="output directory")
        if seed:
            p.add_argument("--seed", type=int, help="base RNG seed (u64)")
        if reps:
            p.add_argument("--replicates", type=int, help="ABM ensemble size")
        return p

    common(sub.add_parser("simulate-bass", help="integrate the coupled Bass system"))
    common(sub.add_parser("simulate-abm", help="run the agent-based model"), seed=True, reps=True)
    common(sub.add_parser("equilibrium", help="landing point and perturbation analysis"))
    common(sub.add_parser("sweep", help="figure-1 or figure-2 parameter sweeps"))
    common(sub.add_parser("fit", help="fit the Bass system to an ABM target"), seed=True, reps=True)
    rep = common(sub.add_parser("reproduce", help="regenerate a figure's data"), seed=True,
                 reps=True, config=False)
    rep.add_argument("figure", choices=FIGURES)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("DUOPOLY_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    converged = True
    try:
        if args.command == "reproduce":
            files, msg, converged = cmd_reproduce(
                args.figure, args.seed or 0, args.replicates or DEFAULT_REPLICATES)
            out = args.out or Path("out") / args.figure
        else:
            mode = {"simulate-bass": "bass", "simulate-abm": "abm", "equilibrium": "equilibrium",
                    "sweep": "sweep", "fit": "fit"}[args.command]
            cfg = load_config(args.config, mode)
            out = args.out or cfg.output_dir
            if args.command == "simulate-bass":
                files, msg = cmd_simulate_bass(cfg)
            elif args.command == "simulate-abm":
                files, msg = cmd_simulate_abm(cfg, args.seed, args.replicates)
            elif args.command == "equilibrium":
                files, msg = cmd_equilibrium(cfg)
            elif args.command == "sweep":
                files, msg = cmd_sweep(cfg)
            else:
                files, msg, converged = cmd_fit(cfg, args.seed, args.replicates)
        write_files(out, files)
    except (DuopolyError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(msg)
    for name in sorted(files):
        print(f"wrote {out / name}")
    if not converged:
        print("error: a numerical routine did not converge", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
