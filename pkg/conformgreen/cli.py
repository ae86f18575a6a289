"""Command line front-end: ``conformgreen <subcommand> --config experiment.yaml ...``

Every CSV output starts with two comment lines: a timestamp, then the run
parameters (seed, h_max and tolerances). JSON outputs carry ``schema_version``
and the same parameters. Apart from the timestamp, outputs are reproducible.
"""
import csv
import datetime
import io
import json
import logging
import sys

import click
import numpy as np

from . import oracle
from .config import ExperimentConfig, build_curve
from .critical import PATHS, blowup_probe, find_critical
from .errors import USER_ERRORS, ConformGreenError, UsageError
from .fem import manufactured_disk_study
from .green import GreenFunction, singularity_strength
from .interaction import InteractionEnergy
from .mesh import build_domain
from .perturb import PerturbationDirection, dpsi_H_fd, dpsi_H_integral, dpsi_H_pde, genericity_study
from .values import COMPAT_RTOL, HESSIAN_STEP_FACTOR, ROBIN_STEP_FACTOR, SCHEMA_VERSION


logger = logging.getLogger(__name__)

#: Exit status for bad input: usage, configuration, geometry or domain errors
EXIT_USER = 2
#: Exit status for numerical failures
EXIT_NUMERICAL = 3

#: Accepted L2 error reduction per refinement of the manufactured study (second order)
L2_RATIO_WINDOW = (3.5, 4.5)


def _timestamp():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


class Experiment:
    """Loaded experiment with its mesh, metric and run parameters"""

    def __init__(self, path):
        self.config = ExperimentConfig.load(path)
        self.mesh, self.metric, self.configuration = self.config.build()
        run = self.config.run
        self.seed = int(run["seed"])
        self.hessian_step = run["hessian_step"] or HESSIAN_STEP_FACTOR
        self.robin_step_factor = run["robin_step_factor"] or ROBIN_STEP_FACTOR
        if int(run["workers"]) != 1:
            logger.info("Runs are sequential; ignoring workers=%s", run["workers"])
        logger.info("Mesh with %d vertices, h_max %.4g", self.mesh.n_vertices, self.mesh.h_max)

    def energy(self, metric=None):
        return InteractionEnergy(metric or self.metric, self.robin_step_factor, self.hessian_step)

    def require_configuration(self):
        if self.configuration is None:
            raise UsageError("This command needs a [configuration] section")
        return self.configuration

    def header(self, **extra):
        params = {
            "seed": self.seed,
            "h_max": round(self.mesh.h_max, 12),
            "n_vertices": self.mesh.n_vertices,
            "compat_rtol": COMPAT_RTOL,
            "hessian_step": self.hessian_step,
            "robin_step_factor": self.robin_step_factor,
        }
        params.update(self.config.header())
        params.update(extra)
        return params


def write_csv(path, header, columns, rows):
    lines = io.StringIO()
    lines.write(f"# created: {_timestamp()}\n")
    lines.write("# " + " ".join(f"{key}={value}" for key, value in sorted(header.items())) + "\n")
    writer = csv.writer(lines, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])
    with click.open_file(path, "w") as stream:
        stream.write(lines.getvalue())


def write_json(path, header, payload):
    document = {"schema_version": SCHEMA_VERSION, "created": _timestamp(), "header": header, **payload}
    with click.open_file(path, "w") as stream:
        stream.write(json.dumps(document, indent=2, sort_keys=True) + "\n")


config_option = click.option(
    "config_path", "--config", "-c", required=True, type=click.Path(exists=True, dir_okay=False),
    help="Experiment file (YAML with domain, metric, configuration and run sections).",
)
out_option = click.option("out", "--out", "-o", default="-", help="Output file; '-' for standard output.")


@click.group()
@click.option("verbose", "--verbose", "-v", count=True, help="More logging; repeat for debug output.")
@click.option("quiet", "--quiet", "-q", is_flag=True, help="Only log errors.")
def cli(verbose=0, quiet=False):
    """Neumann Green and Robin functions of conformal metrics on planar domains."""
    level = logging.ERROR if quiet else (logging.WARNING, logging.INFO, logging.DEBUG)[min(verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


@cli.command("mesh")
@click.option("config_path", "--config", "-c", type=click.Path(exists=True, dir_okay=False), help="Experiment file.")
@click.option("curve", "--curve", default="disk", help="Domain name when no experiment file is given.")
@click.option("target_h", "--h", type=float, default=0.1, help="Target mesh size when no experiment file is given.")
@out_option
def mesh_command(config_path=None, curve="disk", target_h=0.1, out="-"):
    """Build a mesh and write it in the "nv nt nb" exchange format."""
    if config_path:
        mesh = Experiment(config_path).mesh
    else:
        mesh = build_domain(build_curve(curve), target_h)
    if out == "-":
        click.echo(f"{mesh!r}")
        return
    mesh.write(out)
    click.echo(f"Wrote {mesh.n_vertices} vertices and {mesh.n_triangles} triangles to {out}")


def _source(green, point, param):
    if (point is None) == (param is None):
        raise UsageError("Give exactly one of --xi and --xi-param")
    return green.source(point=point, param=param)


@cli.command("green")
@config_option
@click.option("point", "--xi", nargs=2, type=float, default=None, help="Interior source point X Y.")
@click.option("param", "--xi-param", type=float, default=None, help="Curve parameter of a boundary source.")
@out_option
def green_command(config_path, point=None, param=None, out="-"):
    """Write G, H and the singular part at every vertex.

    CSV columns: vertex, G, H, singular. The JSON record of the source
    (kappa, delta, Robin value, fitted log coefficient) goes to the log.
    """
    experiment = Experiment(config_path)
    green = GreenFunction(experiment.metric)
    bundle = green.bundle(_source(green, point, param))
    g, h, singular = bundle.vertex_values()
    rows = [(index, *(float(v) for v in values)) for index, values in enumerate(zip(g, h, singular))]
    write_csv(out, experiment.header(), ["vertex", "G", "H", "singular"], rows)
    record = bundle.record()
    try:
        record["log_coefficient"] = singularity_strength(bundle)
    except UsageError:
        pass
    logger.info("Source record: %s", json.dumps(record, sort_keys=True))


@cli.command("robin")
@config_option
@click.option("line", "--line", type=click.Choice(["radial", "boundary"]), default="radial", help="Sampling line.")
@click.option("samples", "--samples", "-n", type=int, default=16, help="Number of sample points.")
@click.option("param", "--param", type=float, default=0.0, help="Curve parameter the radial line points to.")
@out_option
def robin_command(config_path, line="radial", samples=16, param=0.0, out="-"):
    """Tabulate the Robin function.

    Radial CSV columns: s, x, y, r, robin, oracle (the flat unit disk closed
    form, empty otherwise). Boundary CSV columns: t, x, y, robin.
    """
    experiment = Experiment(config_path)
    curve = experiment.mesh.curve
    green = GreenFunction(experiment.metric)
    unit_disk = (
        experiment.metric.is_flat
        and len(curve.fourier_coeffs) == 1
        and np.allclose(curve.fourier_coeffs[0], [[1, 0], [0, 1]])
        and np.allclose(curve.center, 0)
    )
    rows = []
    if line == "radial":
        center = np.asarray(curve.center)
        end = curve.position(param)[0]
        for s in np.linspace(0, 0.9, samples):
            point = center + s * (end - center)
            value = green.robin(green.source(point=point))
            exact = float(oracle.disk_robin_exact(point)[0]) if unit_disk else ""
            rows.append((float(s), *map(float, point), float(np.linalg.norm(point - center)), value, exact))
        columns = ["s", "x", "y", "r", "robin", "oracle"]
    else:
        for t in curve.period * np.arange(samples) / samples:
            point = curve.position(t)[0]
            rows.append((float(t), *map(float, point), green.robin(green.source(param=t))))
        columns = ["t", "x", "y", "robin"]
    write_csv(out, experiment.header(line=line), columns, rows)


@cli.command("fmap")
@config_option
@click.option("grid", "--grid", "-g", type=int, default=64, help="Grid cells per side.")
@out_option
def fmap_command(config_path, grid=64, out="-"):
    """Sample f on a grid, moving the first interior point of the configuration.

    CSV columns: i, j, x, y, masked, f. Cells outside the domain or too
    close to another point are masked and carry an empty f.
    """
    experiment = Experiment(config_path)
    config = experiment.require_configuration()
    if not config.l:
        raise UsageError("fmap moves the first interior point; the configuration has none")
    energy = experiment.energy()
    low = experiment.mesh.vertices.min(axis=0)
    high = experiment.mesh.vertices.max(axis=0)
    step = (high - low) / grid
    rows = []
    for j in range(grid):
        for i in range(grid):
            point = low + (np.array([i, j]) + 0.5) * step
            moved = config.interior_points.copy()
            moved[0] = point
            candidate = config.with_coordinates(np.concatenate([moved.ravel(), config.boundary_params]))
            try:
                value = energy.value(candidate)
            except ConformGreenError:
                rows.append((i, j, float(point[0]), float(point[1]), 1, ""))
                continue
            rows.append((i, j, float(point[0]), float(point[1]), 0, value))
    write_csv(out, experiment.header(grid=grid), ["i", "j", "x", "y", "masked", "f"], rows)


@cli.command("crit")
@config_option
@click.option("starts", "--starts", "-n", type=int, default=None, help="Random starts (default from the run section).")
@click.option("seed", "--seed", "-s", type=int, default=None, help="Start generator seed (default from the run section).")
@out_option
def crit_command(config_path, starts=None, seed=None, out="-"):
    """Search critical points of f and report their Hessians as JSON."""
    experiment = Experiment(config_path)
    config = experiment.require_configuration()
    run = experiment.config.run
    seed = experiment.seed if seed is None else seed
    starts = int(run["starts"]) if starts is None else starts
    experiment.seed = seed
    energy = experiment.energy()
    results = find_critical(
        experiment.metric, config, starts=starts, seed=seed,
        gtol=run["gtol"], dedup_radius=run["dedup_radius"], energy=energy,
    )
    payload = {
        "critical_points": [
            {"config": found.to_dict(), "value": energy.value(found), "hessian": report.to_dict()}
            for found, report in results
        ]
    }
    write_json(out, experiment.header(starts=starts), payload)


@cli.command("blowup")
@config_option
@click.option("path", "--path", "-p", type=click.Choice(sorted(PATHS)), default="boundary", help="Probe path.")
@click.option("samples", "--samples", "-n", type=click.IntRange(min=4), default=8, help="Number of distances (at least four).")
@click.option("param", "--param", type=float, default=0.0, help="Boundary parameter of the boundary path.")
@out_option
def blowup_command(config_path, path="boundary", samples=8, param=0.0, out="-"):
    """Tabulate the gradient blow-up along a path.

    CSV columns: rho, measure. The fitted slope and prefactor of
    ``a rho**(-p) + b`` are written to the header line.
    """
    experiment = Experiment(config_path)
    probe = PATHS[path](param=param) if path == "boundary" else PATHS[path]()
    result = blowup_probe(probe, experiment.metric, samples=samples, energy=experiment.energy())
    fit = {key: round(value, 10) for key, value in result.to_dict().items() if key != "path"}
    write_csv(out, experiment.header(path=path, **fit), ["rho", "measure"], result.rows())


def _theta(experiment, expression, absolute):
    return PerturbationDirection.from_expression(experiment.mesh, expression, relative=not absolute)


@cli.command("dpsih")
@config_option
@click.option("x", "--x", nargs=2, type=float, required=True, help="Evaluation point X Y.")
@click.option("point", "--xi", nargs=2, type=float, default=None, help="Interior source point X Y.")
@click.option("param", "--xi-param", type=float, default=None, help="Curve parameter of a boundary source.")
@click.option("theta", "--theta", required=True, help="Direction as an expression in x and y.")
@click.option("absolute", "--absolute", is_flag=True, help="Perturb psi + t theta instead of psi (1 + t theta).")
@click.option("method", "--method", type=click.Choice(["integral", "split", "pde", "fd"]), default="integral",
              help="integral: discrete Green kernel; split: singular part integrated analytically.")
@click.option("step", "--t", type=float, default=1e-4, help="Finite difference step.")
@out_option
def dpsih_command(config_path, x, theta, point=None, param=None, absolute=False, method="integral", step=1e-4, out="-"):
    """Derivative of H(x, xi) in the direction theta of the conformal factor."""
    experiment = Experiment(config_path)
    green = GreenFunction(experiment.metric)
    xi = _source(green, point, param)
    direction = _theta(experiment, theta, absolute)
    if method in ("integral", "split"):
        rule = "kernel" if method == "integral" else "split"
        value = dpsi_H_integral(green.source(point=x), xi, direction, experiment.metric, green, rule)
    elif method == "pde":
        value = float(dpsi_H_pde(xi, direction, experiment.metric, green).recover([x])[0])
    else:
        value = dpsi_H_fd(x, xi, direction, experiment.metric, step, green)
    payload = {"x": list(x), "xi": xi.to_dict(), "theta": theta, "method": method, "value": value}
    write_json(out, experiment.header(absolute=absolute, t=step), payload)


@cli.command("generic")
@config_option
@click.option("amplitude", "--amplitude", "-a", type=float, default=0.05, help="Sup norm of the random direction.")
@click.option("trials", "--trials", "-n", type=int, default=20, help="Number of seeded trials.")
@click.option("seed", "--seed", "-s", type=int, default=None, help="First trial seed.")
@out_option
def generic_command(config_path, amplitude=0.05, trials=20, seed=None, out="-"):
    """Perturb psi randomly around a degenerate critical point and report the Hessian spectra."""
    experiment = Experiment(config_path)
    config = experiment.require_configuration()
    seed = experiment.seed if seed is None else seed
    experiment.seed = seed
    results, summary = genericity_study(config, experiment.metric, amplitude, trials, seed)
    payload = {"summary": summary, "trials": [trial.to_dict() for trial in results]}
    write_json(out, experiment.header(amplitude=amplitude, trials=trials), payload)


@cli.command("validate")
@click.option("target_h", "--h", type=float, default=0.1, help="Coarsest mesh size of the manufactured study.")
def validate_command(target_h=0.1):
    """Run the closed-form self check and the manufactured solution study; exit 3 on failure."""
    rows = []
    for name, residual in oracle.self_check().items():
        tolerance = oracle.SELF_CHECK_TOLERANCES[name]
        rows.append((f"oracle.{name}", residual, tolerance, residual <= tolerance))
    study = manufactured_disk_study(target_h, levels=2)
    ratio = study[0]["l2"] / study[1]["l2"]
    low, high = L2_RATIO_WINDOW
    rows.append(("fem.l2_ratio", ratio, low, low <= ratio <= high))
    width = max(len(row[0]) for row in rows)
    for name, value, tolerance, ok in rows:
        click.echo(f"{name:<{width}}  {value:12.4e}  {tolerance:10.2e}  {'pass' if ok else 'FAIL'}")
    if not all(row[3] for row in rows):
        raise click.exceptions.Exit(EXIT_NUMERICAL)


def run(argv=None) -> int:
    """Run the command line with `argv`; returns the exit status"""
    try:
        cli.main(args=argv, prog_name="conformgreen", standalone_mode=False)
    except click.exceptions.Exit as exit:
        return exit.exit_code
    except click.ClickException as error:
        error.show()
        return EXIT_USER
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except USER_ERRORS as error:
        click.echo(f"Error: {error}", err=True)
        return EXIT_USER
    except (ConformGreenError, np.linalg.LinAlgError, ArithmeticError, RuntimeError) as error:
        click.echo(f"Numerical failure: {error}", err=True)
        return EXIT_NUMERICAL
    return 0


def main():
    sys.exit(run())
