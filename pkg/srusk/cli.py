"""
Command-line interface for the srusk package.
"""

import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import typer
from rich.console import Console
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from srusk.config import RunConfig, apply_overrides, load_config, parse_assignment
from srusk.constraints import ConstraintAlgorithm, ConstraintChain, TerminationKind
from srusk.exceptions import (
    ConfigError,
    ProjectionFailedError,
    UnknownModelError,
)
from srusk.integrator import Integrator, Trajectory
from srusk.lagrangian import (
    LagrangianSystem,
    Regularity,
    hamiltonian,
    lagrangian_energy,
    legendre_extended,
    regularity,
)
from srusk.models import WaveModelParams, builtin, semidiscrete_wave, standing_wave_state
from srusk.unified import UnifiedPoint, point_on_w1
from srusk.utils import export_chain_report, export_trajectory_csv
from srusk.verification import InvariantSuite

# Set up typer app
app = typer.Typer(help="Unified Lagrangian-Hamiltonian analysis and integration of non-autonomous systems")

# Set up rich console for pretty output
console = Console()

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCONSISTENT = 2
EXIT_MAX_LEVELS = 3
EXIT_PROJECTION_FAILED = 4
EXIT_VERIFY_FAILED = 5

TERMINATION_EXIT_CODES = {
    TerminationKind.ALL_DETERMINED: EXIT_OK,
    TerminationKind.GAUGE_FREEDOM: EXIT_OK,
    TerminationKind.INCONSISTENT: EXIT_INCONSISTENT,
    TerminationKind.MAX_LEVELS_REACHED: EXIT_MAX_LEVELS,
}


def setup_logging(debug: bool = False) -> None:
    """
    Configure logging level based on debug flag.

    Args:
        debug: Enable debug logging
    """
    log_level = logging.DEBUG if debug else logging.INFO
    logging.basicConfig(
        level=log_level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    logging.getLogger("srusk").setLevel(log_level)


@dataclass
class Pipeline:
    """Everything built from one run configuration."""

    config: RunConfig
    system: LagrangianSystem
    wave_params: Optional[WaveModelParams] = None

    @classmethod
    def from_config(cls, config: RunConfig) -> "Pipeline":
        params = dict(config.model.params)
        try:
            if config.model.name == "wave":
                wave_params = WaveModelParams.from_names(**params)
                return cls(config, semidiscrete_wave(wave_params), wave_params)
            return cls(config, builtin(config.model.name, **params))
        except TypeError as e:
            raise ConfigError(f"invalid parameters for model '{config.model.name}': {e}") from e
        except UnknownModelError as e:
            raise ConfigError(str(e)) from e

    def initial_point(self) -> UnifiedPoint:
        """Initial data from the config; the wave model defaults to a standing wave."""
        state = self.config.initial_state
        n = self.system.n
        if state.q is None and state.v is None and self.wave_params is not None:
            return standing_wave_state(self.system, self.wave_params, state.t0)
        q = np.ones(n) if state.q is None else np.asarray(state.q, dtype=float)
        v = np.zeros(n) if state.v is None else np.asarray(state.v, dtype=float)
        for name, values in (("q", q), ("v", v)):
            if values.shape != (n,):
                raise ConfigError(f"initial_state.{name} must have {n} entries, got {values.size}")
        if state.p is None:
            return point_on_w1(self.system, state.t0, q, v)
        p = np.asarray(state.p, dtype=float)
        if p.shape != (n,):
            raise ConfigError(f"initial_state.p must have {n} entries, got {p.size}")
        return UnifiedPoint(state.t0, q, v, p)

    def analyze(self, debug: bool = False) -> ConstraintChain:
        analysis = self.config.analysis
        algorithm = ConstraintAlgorithm(
            self.system,
            rank_tol=analysis.rank_tol,
            max_levels=analysis.max_levels,
            sample_count=analysis.sample_count,
            sample_box=analysis.sample_box,
            seed=self.config.seed,
            debug=debug,
        )
        return algorithm.run()

    def integrate(self, chain: ConstraintChain, debug: bool = False) -> Trajectory:
        integrator = Integrator(self.system, chain, self.config.integrator.to_options(), debug=debug)
        return integrator.run(self.initial_point())


def build_config(config_path: Optional[str], overrides: Dict[str, Any], assignments: Optional[List[str]]) -> RunConfig:
    """
    Load the config file and apply dedicated flags, then ``--set`` assignments.

    Args:
        config_path: TOML or JSON file (defaults when None)
        overrides: Dotted keys from dedicated flags; None values are ignored
        assignments: ``section.key=value`` strings

    Returns:
        The validated configuration
    """
    config = load_config(config_path)
    config = apply_overrides(config, overrides)
    if assignments:
        config = apply_overrides(config, dict(parse_assignment(a) for a in assignments))
    return config


def sweep_workers(count: int) -> int:
    """Worker count for a sweep: SRUSK_THREADS when set, else one per config up to the CPU count."""
    env = os.environ.get("SRUSK_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"SRUSK_THREADS must be an integer, got '{env}'") from None
    return max(1, min(count, os.cpu_count() or 1))


def run_sweep(paths: List[str], worker: Callable[[RunConfig], int], overrides: Optional[Dict[str, Any]] = None,
              assignments: Optional[List[str]] = None) -> int:
    """
    Run independent configs concurrently.

    Dedicated flags and ``--set`` assignments apply to every config, except
    output-path flags: each run writes where its own config file says.

    Args:
        paths: Config files
        worker: Runs one configuration and returns its exit code
        overrides: Dotted keys from dedicated flags; None values are ignored
        assignments: ``section.key=value`` strings

    Returns:
        The largest exit code of the runs
    """
    overrides = dict(overrides or {})
    outputs = [key for key in overrides if key.startswith("outputs.")]
    if any(overrides[key] is not None for key in outputs):
        console.print("[yellow]Output path flags are ignored with --sweep[/yellow]")
    for key in outputs:
        del overrides[key]

    def run_one(path: str) -> Tuple[str, int]:
        try:
            return path, worker(build_config(path, overrides, assignments))
        except ProjectionFailedError as e:
            console.print(f"[bold red]{path}: Error: {str(e)}[/bold red]")
            return path, EXIT_PROJECTION_FAILED
        except Exception as e:
            console.print(f"[bold red]{path}: Error: {str(e)}[/bold red]")
            return path, EXIT_ERROR

    with ThreadPoolExecutor(max_workers=sweep_workers(len(paths))) as pool:
        results = list(pool.map(run_one, paths))
    for path, code in results:
        colour = "green" if code == EXIT_OK else "red"
        console.print(f"[{colour}]{path}: exit {code}[/{colour}]")
    return max(code for _, code in results)


def print_chain_summary(system: LagrangianSystem, chain: ConstraintChain) -> None:
    table = Table(title=f"Constraint chain: {system.name}")
    table.add_column("Level", justify="right")
    table.add_column("Constraints", justify="right")
    table.add_column("Ids")
    for index, level in enumerate(chain.levels):
        table.add_row(str(index + 1), str(len(level)), ", ".join(c.id for c in level))
    console.print(table)
    termination = chain.termination
    detail = f" (dim {termination.gauge_dimension})" if termination.kind == TerminationKind.GAUGE_FREEDOM else ""
    console.print(f"[bold]Termination:[/bold] {termination.kind.value}{detail}")
    console.print(f"Level sizes: {chain.level_sizes}; kernel dimension {chain.kernel_dimension}, "
                  f"{chain.determined_directions} determined")
    for message in chain.diagnostics:
        console.print(f"[yellow]Diagnostic: {message}[/yellow]")


def print_trajectory_summary(trajectory: Trajectory) -> None:
    final = trajectory.points[-1]
    console.print(f"[bold]Final t:[/bold] {final.t:.17g}")
    console.print(f"[bold]Final q:[/bold] {np.array2string(final.q, precision=12)}")
    console.print(f"Max constraint residual: {trajectory.max_constraint_residual:.3e}")
    console.print(f"Max Euler-Lagrange residual: {trajectory.max_el_residual:.3e}")
    console.print(f"Energy drift: {trajectory.energy_drift:.3e}")
    console.print(f"Projection: {trajectory.projection} (discrete constraint enforcement)")
    if trajectory.initial_q_correction > 0.0:
        console.print(f"[yellow]Initial projection moved q by {trajectory.initial_q_correction:.3e}[/yellow]")


def analyze_config(config: RunConfig, debug: bool = False) -> int:
    pipeline = Pipeline.from_config(config)
    chain = pipeline.analyze(debug)
    export_chain_report(chain.to_report(pipeline.system), config.outputs.chain_report_json)
    print_chain_summary(pipeline.system, chain)
    return TERMINATION_EXIT_CODES[chain.termination.kind]


def integrate_config(config: RunConfig, debug: bool = False) -> int:
    pipeline = Pipeline.from_config(config)
    chain = pipeline.analyze(debug)
    code = TERMINATION_EXIT_CODES[chain.termination.kind]
    if code != EXIT_OK:
        print_chain_summary(pipeline.system, chain)
        return code
    if config.outputs.chain_report_json:
        export_chain_report(chain.to_report(pipeline.system), config.outputs.chain_report_json)
    trajectory = pipeline.integrate(chain, debug)
    export_trajectory_csv(trajectory, config.outputs.trajectory_csv)
    print_trajectory_summary(trajectory)
    return EXIT_OK


ConfigOption = typer.Option(None, "-c", "--config", help="Run configuration (.toml or .json)")
SetOption = typer.Option(None, "--set", help="Override any config key: section.key=value (repeatable)")
DebugOption = typer.Option(False, "-d", "--debug", help="Enable debug mode with verbose logging")
ModelOption = typer.Option(None, "-m", "--model", help="Model name (free_particle, harmonic, singular_toy, wave)")
SeedOption = typer.Option(None, "--seed", help="Seed for sample-point generation")
MaxLevelsOption = typer.Option(None, "--max-levels", help="Level cap of the constraint algorithm")
RankTolOption = typer.Option(None, "--rank-tol", help="Relative rank tolerance")
SampleCountOption = typer.Option(None, "--sample-count", help="Number of sample points")
SampleBoxOption = typer.Option(None, "--sample-box", help="Half-width of the sampling box")
SweepOption = typer.Option(None, "--sweep", help="Run these config files concurrently (repeatable)")


def _analysis_overrides(model: Optional[str], seed: Optional[int], max_levels: Optional[int],
                        rank_tol: Optional[float], sample_count: Optional[int],
                        sample_box: Optional[float]) -> Dict[str, Any]:
    return {
        "model.name": model,
        "seed": seed,
        "analysis.max_levels": max_levels,
        "analysis.rank_tol": rank_tol,
        "analysis.sample_count": sample_count,
        "analysis.sample_box": sample_box,
    }


def _fail(error: Exception, code: int, debug: bool) -> None:
    console.print(f"[bold red]Error: {str(error)}[/bold red]")
    if debug:
        raise error
    sys.exit(code)


@app.command()
def analyze(
        config: Optional[str] = ConfigOption,
        set_: Optional[List[str]] = SetOption,
        model: Optional[str] = ModelOption,
        seed: Optional[int] = SeedOption,
        max_levels: Optional[int] = MaxLevelsOption,
        rank_tol: Optional[float] = RankTolOption,
        sample_count: Optional[int] = SampleCountOption,
        sample_box: Optional[float] = SampleBoxOption,
        report: Optional[str] = typer.Option(None, "-o", "--chain-report-json", help="Chain report JSON path"),
        sweep: Optional[List[str]] = SweepOption,
        debug: bool = DebugOption,
) -> None:
    """
    Run the constraint algorithm and write the chain report.

    Exit code 0 on AllDetermined or GaugeFreedom, 2 on Inconsistent, 3 on MaxLevelsReached.
    """
    # Set up logging
    setup_logging(debug)

    overrides = _analysis_overrides(model, seed, max_levels, rank_tol, sample_count, sample_box)
    overrides["outputs.chain_report_json"] = report
    if sweep:
        sys.exit(run_sweep(sweep, lambda cfg: analyze_config(cfg, debug), overrides, set_))

    try:
        run_config = build_config(config, overrides, set_)
        with Progress(
                SpinnerColumn(),
                TextColumn("[progress.description]{task.description}"),
                console=console
        ) as progress:
            task = progress.add_task(f"Analyzing {run_config.model.name}", total=1)
            code = analyze_config(run_config, debug)
            progress.update(task, completed=1)
    except Exception as e:
        _fail(e, EXIT_ERROR, debug)
    sys.exit(code)


@app.command()
def integrate(
        config: Optional[str] = ConfigOption,
        set_: Optional[List[str]] = SetOption,
        model: Optional[str] = ModelOption,
        seed: Optional[int] = SeedOption,
        max_levels: Optional[int] = MaxLevelsOption,
        rank_tol: Optional[float] = RankTolOption,
        sample_count: Optional[int] = SampleCountOption,
        sample_box: Optional[float] = SampleBoxOption,
        step: Optional[float] = typer.Option(None, "--step", help="Step size"),
        t_end: Optional[float] = typer.Option(None, "--t-end", help="Final time"),
        scheme: Optional[str] = typer.Option(None, "--scheme", help="rk4 or euler"),
        projection: Optional[str] = typer.Option(None, "--projection", help="newton or off"),
        projection_tol: Optional[float] = typer.Option(None, "--projection-tol", help="Newton projection tolerance"),
        trajectory_csv: Optional[str] = typer.Option(None, "-o", "--trajectory-csv", help="Trajectory CSV path"),
        sweep: Optional[List[str]] = SweepOption,
        debug: bool = DebugOption,
) -> None:
    """
    Analyze the model, then integrate X0 on the final constraint set.

    Exit code 4 when a point cannot be projected onto the constraint set.
    """
    # Set up logging
    setup_logging(debug)

    overrides = _analysis_overrides(model, seed, max_levels, rank_tol, sample_count, sample_box)
    overrides.update({
        "integrator.step": step,
        "integrator.t_end": t_end,
        "integrator.scheme": scheme,
        "integrator.projection": projection,
        "integrator.projection_tol": projection_tol,
        "outputs.trajectory_csv": trajectory_csv,
    })
    if sweep:
        sys.exit(run_sweep(sweep, lambda cfg: integrate_config(cfg, debug), overrides, set_))

    try:
        run_config = build_config(config, overrides, set_)
        with Progress(
                SpinnerColumn(),
                TextColumn("[progress.description]{task.description}"),
                console=console
        ) as progress:
            task = progress.add_task(f"Integrating {run_config.model.name} to t={run_config.integrator.t_end}",
                                     total=1)
            code = integrate_config(run_config, debug)
            progress.update(task, completed=1)
    except ProjectionFailedError as e:
        _fail(e, EXIT_PROJECTION_FAILED, debug)
    except Exception as e:
        _fail(e, EXIT_ERROR, debug)
    sys.exit(code)


@app.command()
def verify(
        config: Optional[str] = ConfigOption,
        set_: Optional[List[str]] = SetOption,
        model: Optional[str] = ModelOption,
        seed: Optional[int] = SeedOption,
        max_levels: Optional[int] = MaxLevelsOption,
        rank_tol: Optional[float] = RankTolOption,
        sample_count: Optional[int] = SampleCountOption,
        sample_box: Optional[float] = SampleBoxOption,
        points: int = typer.Option(20, "--points", help="Random points per check"),
        debug: bool = DebugOption,
) -> None:
    """
    Run the invariant suite on the configured model; exit code 5 names the failing checks.
    """
    # Set up logging
    setup_logging(debug)

    try:
        overrides = _analysis_overrides(model, seed, max_levels, rank_tol, sample_count, sample_box)
        run_config = build_config(config, overrides, set_)
        pipeline = Pipeline.from_config(run_config)
        analysis = run_config.analysis
        suite = InvariantSuite(
            pipeline.system,
            rank_tol=analysis.rank_tol,
            seed=run_config.seed,
            point_count=points,
            sample_box=analysis.sample_box,
            sample_count=analysis.sample_count,
            max_levels=analysis.max_levels,
            wave_params=pipeline.wave_params,
            debug=debug,
        )
        with Progress(
                SpinnerColumn(),
                TextColumn("[progress.description]{task.description}"),
                console=console
        ) as progress:
            task = progress.add_task(f"Verifying {pipeline.system.name}", total=1)
            results = suite.run()
            progress.update(task, completed=1)
    except Exception as e:
        _fail(e, EXIT_ERROR, debug)

    table = Table(title=f"Invariants: {pipeline.system.name}")
    table.add_column("Check")
    table.add_column("Result")
    table.add_column("Value", justify="right")
    table.add_column("Threshold", justify="right")
    table.add_column("Detail")
    for result in results:
        status = "[green]pass[/green]" if result.passed else "[bold red]FAIL[/bold red]"
        table.add_row(result.name, status, f"{result.value:.3e}", f"{result.threshold:.1e}", result.detail)
    console.print(table)

    failed = [result.name for result in results if not result.passed]
    if failed:
        console.print(f"[bold red]Failed invariants: {', '.join(failed)}[/bold red]")
        sys.exit(EXIT_VERIFY_FAILED)
    console.print(f"[bold green]All {len(results)} invariants passed[/bold green]")


@app.command()
def legendre(
        config: Optional[str] = ConfigOption,
        set_: Optional[List[str]] = SetOption,
        model: Optional[str] = ModelOption,
        t: Optional[float] = typer.Option(None, "--t", help="Time (initial_state.t0 by default)"),
        q: Optional[str] = typer.Option(None, "--q", help="Comma-separated positions"),
        v: Optional[str] = typer.Option(None, "--v", help="Comma-separated velocities"),
        rank_tol: Optional[float] = RankTolOption,
        debug: bool = DebugOption,
) -> None:
    """
    Print the Legendre maps, the energy and the regularity of L at a point.
    """
    # Set up logging
    setup_logging(debug)

    try:
        overrides = {
            "model.name": model,
            "analysis.rank_tol": rank_tol,
            "initial_state.t0": t,
            "initial_state.q": _parse_vector(q),
            "initial_state.v": _parse_vector(v),
        }
        run_config = build_config(config, overrides, set_)
        pipeline = Pipeline.from_config(run_config)
        pt = pipeline.initial_point()
        system = pipeline.system
        p_energy, p = legendre_extended(system, pt.t, pt.q, pt.v)
        report = regularity(system, pt.t, pt.q, pt.v, run_config.analysis.rank_tol)

        console.print(f"[bold]{system.name}[/bold] at t={pt.t:.6g}")
        console.print(f"q = {np.array2string(pt.q, precision=10)}")
        console.print(f"v = {np.array2string(pt.v, precision=10)}")
        console.print(f"L = {system.evaluate(pt.t, pt.q, pt.v):.17g}")
        console.print(f"p = dL/dv = {np.array2string(p, precision=17)}")
        console.print(f"p_energy = L - p.v = {p_energy:.17g}")
        console.print(f"E_L = {lagrangian_energy(system, pt.t, pt.q, pt.v):.17g}")
        console.print(f"Regularity: {report.classification.value} "
                      f"(kernel dimension {report.kernel_dimension}, tolerance {report.tolerance_used:g})")
        console.print(f"Singular values of W: {np.array2string(report.singular_values, precision=6)}")
        for vector in report.kernel_basis:
            console.print(f"Kernel direction: {np.array2string(vector, precision=10)}")
        if report.classification == Regularity.REGULAR:
            console.print(f"H(t, q, p) = {hamiltonian(system, pt.t, pt.q, p, v_guess=pt.v):.17g}")
    except Exception as e:
        _fail(e, EXIT_ERROR, debug)


def _parse_vector(text: Optional[str]) -> Optional[List[float]]:
    if text is None:
        return None
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise typer.BadParameter(f"expected comma-separated numbers, got '{text}'") from e


if __name__ == "__main__":
    app()
