"""Command-line entry point: one `sptm` command with subcommands wiring
training, exploration, graph building, navigation, evaluation, ablations,
sweeps, the service, plotting, and gradient checking.

Every subcommand prints a final machine-readable `RESULT {json}` line on
success. Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import io as sio
from . import mazes
from .baselines import PixelSimilarityModel, auto_explore
from .evaluate import (
    ABLATION_ROWS,
    MazeBundle,
    ablation_table,
    curves_to_csv,
    goal_observation,
    graph_stats,
    localize_goal_vertex,
    reports_to_csv,
    reports_to_json,
    run_protocol,
    sweep_grid,
    wrong_shortcut_fraction,
)
from .memory import GraphParams, build_graph
from .nav import navigate_episode, write_trajectory_csv
from .nets import LocomotionPolicy, SimilarityModel, grad_check, obs_batch_to_mat, perturb_params
from .recording import coverage_fraction
from .seeding import rng_for
from .sim import spawn_state
from .training import RolloutEnv, train_locomotion, train_similarity


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _result(payload: dict) -> None:
    print("RESULT " + json.dumps(payload))


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file")
    p.add_argument("--set", action="append", default=[], metavar="SEC.KEY=VAL",
                   help="override one config value (repeatable)")
    p.add_argument("--seed", type=int, help="run seed (overrides run.seed)")
    p.add_argument("--threads", type=int, help="worker processes for trials")
    p.add_argument("--data-dir", help="artifact root (default $SPTM_DATA_DIR or ./sptm-data)")


def _load_cfg(args) -> cfgmod.Config:
    cfg = cfgmod.load(args.config, args.set)
    if args.seed is not None:
        cfg.run.seed = args.seed
    if args.threads is not None:
        cfg.run.threads = args.threads
    if args.data_dir is not None:
        cfg.run.data_dir = args.data_dir
    return cfgmod.validate(cfg)


def _data(cfg: cfgmod.Config, *parts: str) -> Path:
    p = Path(cfg.data_dir()).joinpath(*parts)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _load_maze(cfg: cfgmod.Config, name: str, palette: str | None = None):
    text = mazes.load_layout(name)
    if palette:
        text = text.replace("palette=diverse", f"palette={palette}")
    tex_seed = int(rng_for(cfg.run.seed, "maze-textures", name).integers(2**31))
    return mazes.make_maze(text, tex_seed, name=name)


def _similarity_for(cfg, variant: str, model_path: Path | None):
    if variant == "learned":
        if model_path is None or not model_path.exists():
            raise UsageError(f"similarity weights not found at {model_path}; train with `sptm train-r` "
                             "or pass --model")
        return sio.load_weights(model_path)
    return PixelSimilarityModel(frame_width=cfg.sim.frame_width,
                                frame_height=cfg.sim.frame_height,
                                normalize=(variant == "pixel-norm"))


# ---------------------------------------------------------------------------
# Subcommands

def cmd_train_r(args):
    cfg = _load_cfg(args)
    env = RolloutEnv(layout=cfg.eval.train_layout, seed=cfg.run.seed, params=cfg.sim_params(),
                     texture_variants=cfg.nets.texture_variants)
    sch = cfg.schedule(args.iterations if args.iterations is not None else cfg.nets.r_iterations)
    t0 = time.time()

    def prog(it, loss, acc):
        print(f"iter {it}: loss {loss:.4f} heldout {acc:.3f} ({time.time() - t0:.0f}s)",
              file=sys.stderr)

    model = SimilarityModel(frame_width=cfg.sim.frame_width, frame_height=cfg.sim.frame_height,
                            embed_dim=cfg.nets.embed_dim, enc_hidden=cfg.nets.enc_hidden,
                            head_hidden=cfg.nets.head_hidden, head_layers=cfg.nets.head_layers,
                            encoder=cfg.nets.encoder, patch=cfg.nets.patch,
                            patch_units=cfg.nets.patch_units,
                            seed=int(rng_for(cfg.run.seed, "init-r").integers(2**31)))
    model, log = train_similarity(env, sch, seed=cfg.run.seed, model=model, progress=prog)
    out = Path(args.out) if args.out else _data(cfg, "models", "r.weights")
    out.parent.mkdir(parents=True, exist_ok=True)
    sio.save_weights(model, out)
    log_path = out.with_suffix(".log.csv")
    log.to_csv(log_path)
    _result({"model": str(out), "log": str(log_path), "iterations": sch.total_iterations,
             "first_loss": log.first_loss() if log.rows else None,
             "heldout_accuracy": log.final_accuracy() if log.rows else None})


def cmd_train_l(args):
    cfg = _load_cfg(args)
    env = RolloutEnv(layout=cfg.eval.train_layout, seed=cfg.run.seed, params=cfg.sim_params(),
                     texture_variants=cfg.nets.texture_variants)
    sch = cfg.schedule(args.iterations if args.iterations is not None else cfg.nets.l_iterations)
    t0 = time.time()

    def prog(it, loss, acc):
        print(f"iter {it}: loss {loss:.4f} heldout {acc:.3f} ({time.time() - t0:.0f}s)",
              file=sys.stderr)

    policy = LocomotionPolicy(frame_width=cfg.sim.frame_width, frame_height=cfg.sim.frame_height,
                              hidden=cfg.pol_hidden(),
                              encoder=cfg.nets.encoder, patch=cfg.nets.patch,
                              patch_units=cfg.nets.patch_units,
                              seed=int(rng_for(cfg.run.seed, "init-l").integers(2**31)))
    policy, log = train_locomotion(env, sch, seed=cfg.run.seed, policy=policy, progress=prog)
    out = Path(args.out) if args.out else _data(cfg, "models", "l.weights")
    out.parent.mkdir(parents=True, exist_ok=True)
    sio.save_weights(policy, out)
    log_path = out.with_suffix(".log.csv")
    log.to_csv(log_path)
    _result({"model": str(out), "log": str(log_path), "iterations": sch.total_iterations,
             "first_loss": log.first_loss() if log.rows else None,
             "heldout_accuracy": log.final_accuracy() if log.rows else None})


def cmd_explore(args):
    cfg = _load_cfg(args)
    maze = _load_maze(cfg, args.maze, args.palette)
    steps = args.steps if args.steps is not None else cfg.eval.exploration_steps
    rec = auto_explore(maze, steps=steps,
                       seed=int(rng_for(cfg.run.seed, "explore", args.maze).integers(2**31)),
                       params=cfg.sim_params())
    out = Path(args.out) if args.out else _data(cfg, "recordings", f"{args.maze}.rec")
    out.parent.mkdir(parents=True, exist_ok=True)
    sio.save_recording(rec, out)
    cov = coverage_fraction(rec, maze)
    if cov < 0.95:
        print(f"warning: coverage {cov:.2f} below 0.95; consider more steps", file=sys.stderr)
    _result({"recording": str(out), "steps": rec.duration, "coverage": round(cov, 4)})


def cmd_build_graph(args):
    cfg = _load_cfg(args)
    rec_path = Path(args.recording) if args.recording else _data(cfg, "recordings", f"{args.maze}.rec")
    if not rec_path.exists():
        raise UsageError(f"recording not found: {rec_path}")
    rec = sio.load_recording(rec_path)
    model_path = Path(args.model) if args.model else _data(cfg, "models", "r.weights")
    model = _similarity_for(cfg, args.similarity, model_path)
    params = cfg.graph_params()
    if args.shortcuts is not None:
        params.shortcut_count = args.shortcuts
    graph = build_graph(rec, model, params)
    suffix = {"learned": "", "pixel": "-pixel", "pixel-norm": "-pixel-norm"}[args.similarity]
    if params.shortcut_count == 0:
        suffix += "-chain"
    out = Path(args.out) if args.out else _data(cfg, "graphs", f"{args.maze}{suffix}.graph")
    out.parent.mkdir(parents=True, exist_ok=True)
    sio.save_graph(graph, out)
    _result({"graph": str(out), "vertices": graph.n_vertices,
             "shortcuts": graph.n_shortcuts, "edges": int(len(graph.edges_u))})


def cmd_navigate(args):
    cfg = _load_cfg(args)
    maze = _load_maze(cfg, args.maze, None)
    graph = sio.load_graph(Path(args.graph) if args.graph
                           else _data(cfg, "graphs", f"{args.maze}.graph"))
    model_path = Path(args.model) if args.model else _data(cfg, "models", "r.weights")
    model = _similarity_for(cfg, args.similarity, model_path)
    pol_path = Path(args.policy) if args.policy else _data(cfg, "models", "l.weights")
    if not pol_path.exists():
        raise UsageError(f"locomotion weights not found at {pol_path}")
    policy = sio.load_weights(pol_path)
    start = spawn_state(maze, args.start, heading_octant=0)
    goal_obs = goal_observation(maze, args.goal, cfg.sim_params())
    res = navigate_episode(maze, start, graph, model, policy, goal_obs,
                           maze.goal_position(args.goal), budget=cfg.eval.budget,
                           seed=cfg.run.seed, nav_params=cfg.nav_params(),
                           sim_params=cfg.sim_params(),
                           success_radius=cfg.eval.success_radius)
    payload = {"maze": args.maze, "start": args.start, "goal": args.goal,
               "success": res.success, "steps": res.steps, "goal_vertex": res.goal_vertex}
    if args.trajectory:
        write_trajectory_csv(res, args.trajectory)
        payload["trajectory"] = args.trajectory
    _result(payload)


def _bundle_for(cfg, maze_name: str, agents: list[str], model, policy) -> MazeBundle:
    """Load (or build on the fly) everything the protocol needs for one maze."""
    maze = _load_maze(cfg, maze_name, None)
    rec_path = _data(cfg, "recordings", f"{maze_name}.rec")
    if rec_path.exists():
        rec = sio.load_recording(rec_path)
    else:
        rec = auto_explore(maze, steps=cfg.eval.exploration_steps,
                           seed=int(rng_for(cfg.run.seed, "explore", maze_name).integers(2**31)),
                           params=cfg.sim_params())
        sio.save_recording(rec, rec_path)

    needed_graphs = {k for a in agents for k in [_graph_key(a)] if k}
    graphs = {}
    gp = cfg.graph_params()
    for key in needed_graphs:
        params = GraphParams(subsample=gp.subsample, shortcut_count=gp.shortcut_count,
                             min_shortcut_gap=gp.min_shortcut_gap, window=gp.window)
        sim_model = model
        if key.startswith("pixel"):
            sim_model = PixelSimilarityModel(frame_width=cfg.sim.frame_width,
                                             frame_height=cfg.sim.frame_height,
                                             normalize=(key == "pixel-norm"))
        if key.endswith("chain"):
            params.shortcut_count = 0
        path = _data(cfg, "graphs", f"{maze_name}-{key}-s{params.subsample}-k{params.shortcut_count}.graph")
        if path.exists():
            graphs[key] = sio.load_graph(path)
        else:
            graphs[key] = build_graph(rec, sim_model, params)
            sio.save_graph(graphs[key], path)
    models = {
        "learned": model,
        "pixel": PixelSimilarityModel(frame_width=cfg.sim.frame_width,
                                      frame_height=cfg.sim.frame_height, normalize=False),
        "pixel-norm": PixelSimilarityModel(frame_width=cfg.sim.frame_width,
                                           frame_height=cfg.sim.frame_height, normalize=True),
    }
    return MazeBundle(maze=maze, recording=rec, graphs=graphs, models=models, policy=policy)


def _graph_key(agent: str) -> str:
    from .evaluate import _graph_key_for_agent
    return _graph_key_for_agent(agent)


def _load_models(cfg, args):
    model_path = Path(getattr(args, "model", None) or _data(cfg, "models", "r.weights"))
    pol_path = Path(getattr(args, "policy", None) or _data(cfg, "models", "l.weights"))
    if not model_path.exists():
        raise UsageError(f"similarity weights missing: {model_path} (run `sptm train-r`)")
    if not pol_path.exists():
        raise UsageError(f"locomotion weights missing: {pol_path} (run `sptm train-l`)")
    return sio.load_weights(model_path), sio.load_weights(pol_path)


def cmd_evaluate(args):
    cfg = _load_cfg(args)
    model, policy = _load_models(cfg, args)
    maze_names = args.maze or cfg.test_layout_list()
    agents = args.agent or ["sptm", "random"]
    bundles = {m: _bundle_for(cfg, m, agents, model, policy) for m in maze_names}

    def prog(maze, agent, done, total):
        if done % 16 == 0 or done == total:
            print(f"{maze}/{agent}: {done}/{total}", file=sys.stderr)

    reports = run_protocol(bundles, agents, cfg.eval.budget, cfg.run.seed,
                           repeats=cfg.eval.repeats, nav_params=cfg.nav_params(),
                           sim_params=cfg.sim_params(),
                           success_radius=cfg.eval.success_radius, progress=prog)
    out_json = _data(cfg, "reports", f"eval-{'-'.join(maze_names)}.json")
    out_json.write_text(reports_to_json(reports))
    out_csv = out_json.with_suffix(".csv")
    out_csv.write_text(reports_to_csv(reports))
    for r in reports:
        _data(cfg, "reports", f"curve-{r.maze}-{r.agent}.csv").write_text(
            curves_to_csv(r, cfg.eval.budget))
    _result({"reports": str(out_json), "csv": str(out_csv),
             "summary": {f"{r.maze}/{r.agent}": round(r.success_rate, 4) for r in reports}})


def cmd_ablate(args):
    cfg = _load_cfg(args)
    model, policy = _load_models(cfg, args)
    maze_names = args.maze or cfg.val_layout_list()
    agents = list(ABLATION_ROWS)
    bundles = {m: _bundle_for(cfg, m, agents, model, policy) for m in maze_names}

    def prog(maze, agent, done, total):
        if done == total:
            print(f"{maze}/{agent} done", file=sys.stderr)

    reports = run_protocol(bundles, agents, cfg.eval.budget, cfg.run.seed,
                           repeats=cfg.eval.repeats, nav_params=cfg.nav_params(),
                           sim_params=cfg.sim_params(),
                           success_radius=cfg.eval.success_radius, progress=prog)
    table = ablation_table(reports)
    out = _data(cfg, "reports", "ablation.json")
    out.write_text(json.dumps(table, indent=2))
    csv_lines = ["agent,success_rate," + ",".join(f"success_{m}" for m in maze_names)]
    for row in table:
        csv_lines.append(",".join([row["agent"], f"{row['success_rate']:.4f}"] +
                                  [f"{row.get(f'success_{m}', float('nan')):.4f}" for m in maze_names]))
    out_csv = out.with_suffix(".csv")
    out_csv.write_text("\n".join(csv_lines) + "\n")
    _result({"table": str(out), "csv": str(out_csv),
             "rows": {r["agent"]: round(r["success_rate"], 4) for r in table}})


def cmd_sweep(args):
    cfg = _load_cfg(args)
    rows = sweep_grid(args.grid)
    if args.limit:
        rows = rows[: args.limit]
    model, policy = _load_models(cfg, args)
    maze_names = args.maze or cfg.val_layout_list()
    out = _data(cfg, "reports", f"sweep-{args.grid}.csv")
    cols = ["local_window", "shortcut_count", "subsample", "s_local", "s_reach"]
    lines = [",".join(cols + [f"success_{m}" for m in maze_names] + ["mean_success"])]
    for idx, row in enumerate(rows):
        cfg_row = cfgmod.load(args.config, args.set)
        cfg_row.run = cfg.run
        cfg_row.memory.subsample = row["subsample"]
        cfg_row.memory.shortcut_count = row["shortcut_count"]
        cfg_row.nav.local_window = row["local_window"]
        cfg_row.nav.s_local = row["s_local"]
        cfg_row.nav.s_reach = row["s_reach"]
        cfgmod.validate(cfg_row)
        bundles = {m: _bundle_for(cfg_row, m, ["sptm"], model, policy) for m in maze_names}
        reports = run_protocol(bundles, ["sptm"], cfg_row.eval.budget, cfg_row.run.seed,
                               repeats=cfg_row.eval.repeats, nav_params=cfg_row.nav_params(),
                               sim_params=cfg_row.sim_params(),
                               success_radius=cfg_row.eval.success_radius)
        per = [r.success_rate for r in reports]
        lines.append(",".join([str(row[c]) for c in cols] +
                              [f"{v:.4f}" for v in per] + [f"{np.mean(per):.4f}"]))
        print(f"sweep row {idx + 1}/{len(rows)} done", file=sys.stderr)
    out.write_text("\n".join(lines) + "\n")
    _result({"sweep": str(out), "rows": len(rows)})


def cmd_grad_check(args):
    cfg = _load_cfg(args)
    rng = np.random.default_rng(cfg.run.seed)
    reports = {}
    for kind in ("similarity", "locomotion"):
        if kind == "similarity":
            model = SimilarityModel(frame_width=cfg.sim.frame_width,
                                    frame_height=cfg.sim.frame_height,
                                    embed_dim=cfg.nets.embed_dim,
                                    enc_hidden=cfg.nets.enc_hidden,
                                    head_hidden=cfg.nets.head_hidden,
                                    head_layers=cfg.nets.head_layers,
                                    encoder=cfg.nets.encoder, patch=cfg.nets.patch,
                                    patch_units=cfg.nets.patch_units, seed=cfg.run.seed)
            batch = (rng.random((4, model.obs_dim)), rng.random((4, model.obs_dim)),
                     rng.integers(0, 2, 4))
        else:
            model = LocomotionPolicy(frame_width=cfg.sim.frame_width,
                                     frame_height=cfg.sim.frame_height,
                                     hidden=cfg.pol_hidden(),
                                     encoder=cfg.nets.encoder, patch=cfg.nets.patch,
                                     patch_units=cfg.nets.patch_units, seed=cfg.run.seed)
            batch = (rng.random((4, model.obs_dim)), rng.random((4, model.obs_dim)),
                     rng.integers(0, 7, 4))
        perturb_params(model, seed=cfg.run.seed)
        rep = grad_check(model, batch, tolerance=args.tolerance,
                         entries_per_group=args.entries, seed=cfg.run.seed)
        reports[kind] = {"max_rel_err": rep["max_rel_err"], "passed": rep["passed"]}
        print(f"{kind}: max rel err {rep['max_rel_err']:.3e} "
              f"({'PASS' if rep['passed'] else 'FAIL'})", file=sys.stderr)
    ok = all(r["passed"] for r in reports.values())
    _result({"passed": ok, "reports": reports, "tolerance": args.tolerance})
    if not ok:
        raise RuntimeError("gradient check failed")


def cmd_plot(args):
    cfg = _load_cfg(args)
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for path in args.curves:
        rows = [l.split(",") for l in Path(path).read_text().strip().splitlines()[1:]]
        ts = [int(r[0]) for r in rows]
        fs = [float(r[1]) * 100 for r in rows]
        ax.plot(ts, fs, label=Path(path).stem)
    ax.set_xlabel("trial duration (steps)")
    ax.set_ylabel("success (%)")
    ax.set_ylim(0, 105)
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    out = args.out or str(_data(cfg, "reports", "curves.svg"))
    fig.savefig(out, format="svg", bbox_inches="tight")
    _result({"plot": out, "curves": len(args.curves)})


def cmd_serve(args):
    cfg = _load_cfg(args)
    from .server import run_server
    run_server(cfg, host=args.host, port=args.port)
    _result({"served": True})


def cmd_config_dump(args):
    cfg = _load_cfg(args)
    text = cfgmod.dump(cfg)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    _result({"dumped": args.out or "stdout"})


# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    p = _Parser(prog="sptm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, configure=None, **kw):
        sp = sub.add_parser(name, **kw)
        _add_common(sp)
        if configure:
            configure(sp)
        sp.set_defaults(fn=fn)
        return sp

    add("train-r", cmd_train_r,
        lambda sp: (sp.add_argument("--iterations", type=int),
                    sp.add_argument("--out")),
        help="train the similarity network")
    add("train-l", cmd_train_l,
        lambda sp: (sp.add_argument("--iterations", type=int),
                    sp.add_argument("--out")),
        help="train the locomotion network")
    add("explore", cmd_explore,
        lambda sp: (sp.add_argument("--maze", required=True),
                    sp.add_argument("--steps", type=int),
                    sp.add_argument("--palette", choices=["diverse", "homogeneous"]),
                    sp.add_argument("--out")),
        help="record an automated walkthrough")
    add("build-graph", cmd_build_graph,
        lambda sp: (sp.add_argument("--maze", required=True),
                    sp.add_argument("--recording"),
                    sp.add_argument("--model"),
                    sp.add_argument("--similarity", choices=["learned", "pixel", "pixel-norm"],
                                    default="learned"),
                    sp.add_argument("--shortcuts", type=int),
                    sp.add_argument("--out")),
        help="build the memory graph from a recording")
    add("navigate", cmd_navigate,
        lambda sp: (sp.add_argument("--maze", required=True),
                    sp.add_argument("--start", type=int, default=0),
                    sp.add_argument("--goal", type=int, default=0),
                    sp.add_argument("--graph"),
                    sp.add_argument("--model"),
                    sp.add_argument("--policy"),
                    sp.add_argument("--similarity", choices=["learned", "pixel", "pixel-norm"],
                                    default="learned"),
                    sp.add_argument("--trajectory", help="write per-step CSV here")),
        help="run one goal-directed episode")
    add("evaluate", cmd_evaluate,
        lambda sp: (sp.add_argument("--maze", action="append"),
                    sp.add_argument("--agent", action="append",
                                    help="agent kind (repeatable); default sptm+random"),
                    sp.add_argument("--model"), sp.add_argument("--policy")),
        help="run the trial protocol")
    add("ablate", cmd_ablate,
        lambda sp: (sp.add_argument("--maze", action="append"),
                    sp.add_argument("--model"), sp.add_argument("--policy")),
        help="run the ablation table")
    add("sweep", cmd_sweep,
        lambda sp: (sp.add_argument("--grid", choices=["default", "full"], default="default"),
                    sp.add_argument("--limit", type=int),
                    sp.add_argument("--maze", action="append"),
                    sp.add_argument("--model"), sp.add_argument("--policy")),
        help="hyperparameter sweep")
    add("grad-check", cmd_grad_check,
        lambda sp: (sp.add_argument("--tolerance", type=float, default=1e-4),
                    sp.add_argument("--entries", type=int, default=32,
                                    help="entries probed per parameter group")),
        help="finite-difference gradient check")
    add("plot", cmd_plot,
        lambda sp: (sp.add_argument("curves", nargs="+"),
                    sp.add_argument("--out")),
        help="plot success curves to SVG")
    add("serve", cmd_serve,
        lambda sp: (sp.add_argument("--host", default="127.0.0.1"),
                    sp.add_argument("--port", type=int, default=8741)),
        help="start the HTTP/WebSocket service")
    add("config-dump", cmd_config_dump,
        lambda sp: sp.add_argument("--out"),
        help="print the effective configuration")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    try:
        args.fn(args)
        return 0
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (cfgmod.ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
