"""Command line entry point: `doprd gen|simulate|ub|bench`."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .harness import load_config, run_benchmark, write_reports
from .instance import generate_instance, load_instance, load_solomon, save_instance
from .mdp import SimConfig, simulate
from .optkernel import solve_oprd_perfect, ub_trips
from .policies import PolicyConfig, make_policy


@click.group()
@click.option("-v", "--verbose", count=True, help="Increase log verbosity.")
def main(verbose: int) -> None:
    """Orienteering with stochastic and dynamic release dates."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--solomon", required=True, help="Solomon-layout file, or builtin:<name>.")
@click.option("--n", "n", type=int, default=None, help="Use the first N customers.")
@click.option("--beta", type=float, required=True)
@click.option("--delta", type=float, required=True)
@click.option("--c", "c", type=float, required=True)
@click.option("--seed", type=click.IntRange(min=0), required=True)
@click.option("--horizon", type=float, default=None, help="Override the nominal release horizon H.")
@click.option("--rounding", type=click.Choice(["ceil", "floor"]), default="ceil")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def gen(solomon, n, beta, delta, c, seed, horizon, rounding, out):
    """Generate an instance file with release dates and a deadline."""
    data = load_solomon(solomon, n)
    inst = generate_instance(data, beta, delta, c, seed, horizon=horizon, rounding=rounding)
    save_instance(inst, out)
    click.echo(f"{inst.name}: {inst.n} customers, deadline {inst.deadline:g}, t_standard {inst.meta.t_standard:.3f}")


def _policy_options(f):
    opts = [
        click.option("--rho", type=int, default=15, show_default=True),
        click.option("--scenarios", type=int, default=30, show_default=True),
        click.option("--gamma", type=float, default=0.9, show_default=True),
        click.option("--phi", type=float, default=10.0, show_default=True),
        click.option("--det-tl", type=float, default=300.0, show_default=True),
        click.option("--sto-tl", type=float, default=600.0, show_default=True),
        click.option("--pc/--no-pc", default=True, show_default=True),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


@main.command("simulate")
@click.option("--instance", "path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--policy", type=click.Choice(["pfa", "vfa", "me", "mh"]), required=True)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@_policy_options
def simulate_cmd(path, policy, seed, rho, scenarios, gamma, phi, det_tl, sto_tl, pc):
    """Run one day and print the trajectory as JSON lines plus a summary row."""
    inst = load_instance(path)
    cfg = PolicyConfig(rho=rho, n_scenarios=scenarios, gamma=gamma, phi=phi,
                       det_time_limit=det_tl, sto_time_limit=sto_tl, pc_enabled=pc)
    res = simulate(inst, make_policy(policy, cfg), seed, SimConfig(phi=phi))
    for s in res.trajectory:
        click.echo(json.dumps({"epoch": s.epoch, "t": s.t_e, "action": s.action, "reward": s.reward,
                               "ms": round(s.wall_ms, 3), "pc": s.pc_fired}))
    click.echo(json.dumps({"summary": True, "instance": res.instance_id, "policy": res.policy_id, "seed": seed,
                           "served": res.total_served, "status": res.status, "runtime_s": round(res.runtime_s, 3)}))
    if res.status != "ok":
        click.echo(res.diagnostic, err=True)
        sys.exit(1)


@main.command()
@click.option("--instance", "path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--time-limit", type=float, default=60.0, show_default=True)
def ub(path, time_limit):
    """Perfect-information bounds on the realized release dates."""
    inst = load_instance(path)
    rel, tr = inst.releases(), inst.id_travel()
    trips = ub_trips(rel, tr, inst.deadline)
    res = solve_oprd_perfect(rel, tr, inst.deadline, max(trips.value, 1), time_limit, warm_start=trips.trips)
    click.echo(f"ub_trips {trips.value}")
    click.echo(f"perfect_value {res.value}")
    click.echo(f"perfect_bound {res.bound}")
    click.echo(f"status {res.status}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--jobs", type=int, default=None, help="Worker processes (default: config value).")
@click.option("--normalize-time", is_flag=True, help="Zero the wall-clock columns.")
def bench(config_path, out, jobs, normalize_time):
    """Run a benchmark grid and write details and summary CSVs."""
    cfg = load_config(config_path)
    res = run_benchmark(cfg, jobs)
    for p in write_reports(res, out, normalize_time):
        click.echo(str(p))
    if not res.ok:
        click.echo(f"{res.failures} failed runs", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
