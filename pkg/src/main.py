#!/usr/bin/env python3

import csv
import io
import json
import logging
import os
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import click
import numpy as np
from rich.console import Console
from rich.logging import RichHandler

from .errors import ConfigError, ParseError, PlaneWaveError
from .geodesic import GeodesicInitialData, sample_trajectory
from .instances import SUITES, InstanceSpec, load_instance
from .invariant import (
    build_isometry, classify, isometry_decision, parse_grid, weyl_invariants, weyl_value_vanishes,
)
from .manifold import covariant_derivative_oracle, nabla_R_closed, random_point
from .model import certify
from .settings import DEFAULT_SETTINGS, Settings
from .suites import SuiteOptions, run_suites
from .tensor import json_number, sup_difference
from .ui import ReportUI

logger = logging.getLogger(__name__)


def configure_logging(verbose: bool):
    """One RichHandler on the root logger; library modules only create loggers"""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False, markup=False)],
        force=True,
    )


def _markdown_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, dict)):
        return f"`{json.dumps(value)}`" if len(json.dumps(value)) <= 80 else "(see JSON report)"
    return str(value)


def render_markdown(command: str, payload: Dict[str, Any]) -> str:
    lines = [f"# {command}", ""]
    for key, value in payload.items():
        if isinstance(value, list) and value and all(isinstance(v, dict) for v in value):
            columns = [k for k, v in value[0].items() if not isinstance(v, (list, dict))]
            lines += ["", f"## {key}", ""]
            if columns:
                lines.append("| " + " | ".join(columns) + " |")
                lines.append("|" + "---|" * len(columns))
                for row in value:
                    lines.append("| " + " | ".join(_markdown_value(row.get(c)) for c in columns) + " |")
            else:
                lines.append(f"{len(value)} entries (see JSON report)")
            lines.append("")
        else:
            lines.append(f"- **{key}**: {_markdown_value(value)}")
    return "\n".join(lines).rstrip() + "\n"


class PlaneWaveCLI:
    def __init__(self, out: Optional[str] = None, settings: Settings = DEFAULT_SETTINGS,
                 ui: Optional[ReportUI] = None):
        self.out = out
        self.settings = settings
        self.ui = ui or ReportUI()

    def write_reports(self, command: str, payload: Dict[str, Any]) -> List[str]:
        """<out>/<command>.json and <out>/<command>.md; nothing without --out"""
        if not self.out:
            return []
        os.makedirs(self.out, exist_ok=True)
        json_path = os.path.join(self.out, f'{command}.json')
        with open(json_path, 'w', encoding='utf-8') as handle:
            json.dump(payload, handle, indent=2)
            handle.write('\n')
        md_path = os.path.join(self.out, f'{command}.md')
        with open(md_path, 'w', encoding='utf-8') as handle:
            handle.write(render_markdown(command, payload))
        self.ui.show_reports_written([json_path, md_path])
        return [json_path, md_path]

    def points_for(self, spec: InstanceSpec, count: int, seed: int) -> List[Tuple]:
        """The instance's own points first, then seeded rational points"""
        points = list(spec.points[:count])
        rng = np.random.default_rng(seed)
        while len(points) < count:
            points.append(random_point(spec.config, rng))
        return points

    # subcommands

    def describe(self, spec: InstanceSpec) -> int:
        config = spec.config
        shape = config.shape
        payload = {
            'name': spec.name,
            'p': config.p,
            'dimension': config.dimension,
            'signature': list(config.signature),
            'f': config.f.to_sexpr(),
            'F': config.F.to_sexpr(),
            'shape': None if shape is None else {'m': shape.m, 'psi': shape.psi.to_sexpr()},
            'coordinates': list(config.chart.names),
        }
        self.ui.show_header('describe', spec.name)
        self.ui.show_description({**payload, 'signature': tuple(config.signature),
                                  'shape': '-' if shape is None else f"m={shape.m}, psi={shape.psi}"})
        self.write_reports('describe', payload)
        return 0

    def curvature(self, spec: InstanceSpec, order: int, count: int, seed: int, check_oracle: bool) -> int:
        config = spec.config
        self.ui.show_header('curvature', spec.name)
        entries = []
        tensors = []
        status = 0
        for point in self.points_for(spec, count, seed):
            tensor = nabla_R_closed(config, point, order).numeric()
            tensors.append(tensor)
            entry = {'point': [json_number(v) for v in point], 'order': order, 'tensor': tensor.to_json()}
            if check_oracle:
                oracle = covariant_derivative_oracle(config, point, order).numeric()
                entry['oracle_difference'] = sup_difference(tensor, oracle)
                if entry['oracle_difference'] > self.settings.certificate_tol:
                    status = 1
            entries.append(entry)
        if tensors:
            title = 'R' if order == 0 else f'nabla^{order} R'
            self.ui.show_components(f"{title} at point 0 (stored entries)", config.chart.names, tensors[0].raw_items())
        self.write_reports('curvature', {'instance': spec.name, 'order': order, 'points': entries})
        return status

    def geodesic(self, spec: InstanceSpec, samples: int, seed: int, t_max: float) -> int:
        config = spec.config
        rng = np.random.default_rng(seed)
        point = spec.points[0] if spec.points else tuple(rng.uniform(-1, 1, size=config.dimension))
        velocity = tuple(rng.uniform(-1, 1, size=config.dimension))
        data = GeodesicInitialData.from_vectors(config, point, velocity)
        times = [t_max * i / max(1, samples - 1) for i in range(samples)]
        rows = sample_trajectory(config, data, times, self.settings)

        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(['t'] + list(config.chart.names))
        for row in rows:
            writer.writerow([repr(v) for v in row])
        if self.out:
            os.makedirs(self.out, exist_ok=True)
            path = os.path.join(self.out, 'geodesic.csv')
            with open(path, 'w', encoding='utf-8') as handle:
                handle.write(buffer.getvalue())
            self.ui.show_reports_written([path])
        else:
            click.echo(buffer.getvalue(), nl=False)
        return 0

    def weyl(self, spec: InstanceSpec, max_slots: int, count: int, seed: int) -> int:
        self.ui.show_header('weyl', spec.name)
        entries = []
        rows = []
        all_vanish = True
        for point in self.points_for(spec, count, seed):
            values = weyl_invariants(spec.config, point, max_slots, self.settings)
            vanish = [weyl_value_vanishes(v, self.settings) for _, v in values]
            all_vanish = all_vanish and all(vanish)
            entries.append({
                'point': [json_number(v) for v in point],
                'values': [{'scheme': s.label(), 'value': json_number(v)} for s, v in values],
                'all_vanish': all(vanish),
            })
            if not rows:
                rows = [(s.label(), v, ok) for (s, v), ok in zip(values, vanish)]
        self.ui.show_weyl(rows)
        payload = {'instance': spec.name, 'max_slots': max_slots, 'all_vanish': all_vanish, 'points': entries}
        self.write_reports('weyl', payload)
        if all_vanish:
            self.ui.show_success("every scalar Weyl invariant vanishes")
            return 0
        self.ui.show_failure("non-vanishing scalar Weyl invariant")
        return 1

    def certify(self, spec: InstanceSpec, order: int, count: int, seed: int) -> int:
        self.ui.show_header('certify', spec.name)
        reports = [certify(spec.config, point, order, self.settings).to_json()
                   for point in self.points_for(spec, count, seed)]
        self.ui.show_certificates(reports)
        passed = all(r['passed'] for r in reports)
        self.write_reports('certify', {'instance': spec.name, 'order': order, 'passed': passed, 'reports': reports})
        if passed:
            self.ui.show_success(f"order-{order} model certified at {len(reports)} points")
            return 0
        self.ui.show_failure(f"order-{order} certificate failed")
        return 1

    def classify(self, spec: InstanceSpec, grid: str) -> int:
        self.ui.show_header('classify', spec.name)
        result = classify(spec.config, parse_grid(grid), self.settings)
        payload = {'instance': spec.name, 'grid': grid, **result.to_json()}
        self.ui.show_mapping('CLASSIFICATION', payload)
        self.write_reports('classify', payload)
        return 0

    def isometry(self, spec: InstanceSpec, other: InstanceSpec, seed: int, k_max: int, build: bool) -> int:
        self.ui.show_header('isometry', f"{spec.name} / {other.name}")
        P1 = self.points_for(spec, 1, seed)[0]
        P2 = other.points[0] if other.points else random_point(other.config, np.random.default_rng(seed + 1))
        verdict = isometry_decision(spec.config, P1, other.config, P2, k_max, self.settings)
        payload = {
            'first': spec.name,
            'second': other.name,
            'P1': [json_number(v) for v in P1],
            'P2': [json_number(v) for v in P2],
            **verdict.to_json(),
        }
        self.ui.show_mapping('ISOMETRY DECISION', payload, 'bright_magenta')
        status = 0
        if build:
            if spec.config != other.config:
                raise ConfigError("--build needs both points on the same manifold")
            report = build_isometry(spec.config, P1, P2, seed=seed, settings=self.settings)
            payload['construction'] = report.to_json()
            self.ui.show_mapping('CONSTRUCTED ISOMETRY', payload['construction'])
            if not report.passed:
                self.ui.show_failure(f"phi^* g = g check failed, worst residual {report.worst:.3e}")
                status = 1
        self.write_reports('isometry', payload)
        return status

    def verify_all(self, options: SuiteOptions, names: Sequence[str]) -> int:
        self.ui.show_header('verify-all')
        results = [r.to_json() for r in run_suites(names, options)]
        self.ui.show_suites(results)
        passed = all(r['passed'] for r in results)
        payload = {'p': list(options.p_values), 'seed': options.seed, 'passed': passed, 'suites': results}
        if options.instance is not None:
            payload = {'instance': options.instance.name, **payload}
        self.write_reports('verify-all', payload)
        if passed:
            self.ui.show_success("all acceptance suites passed")
            return 0
        self.ui.show_failure("acceptance suites failed")
        return 1


def run(ctx: click.Context, action: Callable[[PlaneWaveCLI], int]):
    """Runs a subcommand, turning library errors into an error panel, a JSON payload on stderr and an exit code"""
    app: PlaneWaveCLI = ctx.obj
    try:
        code = action(app)
    except PlaneWaveError as e:
        app.ui.show_error(e.message)
        click.echo(json.dumps(e.to_dict()), err=True)
        code = 2 if isinstance(e, (ParseError, ConfigError)) else 1
    ctx.exit(code)


def _instance(ctx, param, value):
    if value is None:
        return None
    try:
        return load_instance(value)
    except PlaneWaveError as e:
        ctx.obj.ui.show_error(e.message)
        click.echo(json.dumps(e.to_dict()), err=True)
        ctx.exit(2)


instance_option = click.option('--instance', '-i', required=True, callback=_instance,
                               help='Instance JSON file or preset name (S_10, H_10_1, N_10_exp, ...)')
points_option = click.option('--points', '-n', default=1, show_default=True, help='Number of points')
seed_option = click.option('--seed', '-s', default=DEFAULT_SETTINGS.seed, show_default=True, help='Random seed')


@click.group()
@click.option('--out', '-o', type=click.Path(file_okay=False), help='Directory for JSON and Markdown reports')
@click.option('--verbose', '-v', is_flag=True, help='Debug logging')
@click.option('--quiet', '-q', is_flag=True, help='No banner')
@click.pass_context
def main(ctx, out, verbose, quiet):
    """Curvature, geodesics and isometry invariants of the plane-wave manifolds M_{6+4p,f}"""
    configure_logging(verbose)
    ctx.obj = PlaneWaveCLI(out=out, ui=ReportUI(quiet=quiet))


@main.command()
@instance_option
@click.pass_context
def describe(ctx, instance):
    """Dimension, signature, F and the plane-wave shape of f"""
    run(ctx, lambda app: app.describe(instance))


@main.command()
@instance_option
@click.option('--order', '-k', default=0, show_default=True, help='Covariant derivative order')
@points_option
@seed_option
@click.option('--check-oracle', is_flag=True, help='Compare with the generic Levi-Civita computation')
@click.pass_context
def curvature(ctx, instance, order, points, seed, check_oracle):
    """nabla^k R at points"""
    run(ctx, lambda app: app.curvature(instance, order, points, seed, check_oracle))


@main.command()
@instance_option
@click.option('--points', '-n', default=11, show_default=True, help='Number of samples along the geodesic')
@seed_option
@click.option('--t-max', default=1.0, show_default=True, help='Final parameter value')
@click.pass_context
def geodesic(ctx, instance, points, seed, t_max):
    """Sample a geodesic as CSV (t, coordinates)"""
    run(ctx, lambda app: app.geodesic(instance, points, seed, t_max))


@main.command()
@instance_option
@click.option('--max-slots', '-m', default=8, show_default=True, help='Largest total slot count')
@points_option
@seed_option
@click.pass_context
def weyl(ctx, instance, max_slots, points, seed):
    """Evaluate every scalar Weyl invariant up to max-slots"""
    run(ctx, lambda app: app.weyl(instance, max_slots, points, seed))


@main.command(name='certify')
@instance_option
@click.option('--order', '-k', default=0, show_default=True, help='Model order')
@points_option
@seed_option
@click.pass_context
def certify_command(ctx, instance, order, points, seed):
    """Normalize frames and check them against the order-k model"""
    run(ctx, lambda app: app.certify(instance, order, points, seed))


@main.command(name='classify')
@instance_option
@click.option('--grid', '-g', default=DEFAULT_SETTINGS.grid, show_default=True, help='z0 grid a:b:n')
@click.pass_context
def classify_command(ctx, instance, grid):
    """Symmetric? Homogeneous? Curvature homogeneity order"""
    run(ctx, lambda app: app.classify(instance, grid))


@main.command()
@instance_option
@click.option('--other', callback=_instance, help='Second instance (defaults to the first)')
@seed_option
@click.option('--k-max', default=DEFAULT_SETTINGS.alpha_k_max, show_default=True, help='Largest alpha^k compared')
@click.option('--build', is_flag=True, help='Construct the isometry and check it')
@click.pass_context
def isometry(ctx, instance, other, seed, k_max, build):
    """Compare alpha^k at two points, optionally building the isometry"""
    run(ctx, lambda app: app.isometry(instance, other or instance, seed, k_max, build))


@main.command(name='verify-all')
@click.option('--instance', '-i', callback=_instance,
              help='Also check this instance; its suite selection and p become the defaults')
@click.option('--p', 'p_values', multiple=True, type=int, help='Values of p (default 1)')
@click.option('--suite', 'suites', multiple=True, type=click.Choice(SUITES), help='Run only these suites')
@click.option('--points', '-n', default=5, show_default=True, help='Points per instance')
@seed_option
@click.option('--max-slots', '-m', default=DEFAULT_SETTINGS.weyl_slot_cap, show_default=True, help='Weyl slot limit')
@click.option('--grid', '-g', default=DEFAULT_SETTINGS.grid, show_default=True, help='z0 grid a:b:n')
@click.pass_context
def verify_all(ctx, instance, p_values, suites, points, seed, max_slots, grid):
    """Run the acceptance suites; non-zero exit on any failure"""
    default_p = instance.p if instance else DEFAULT_SETTINGS.default_p
    p_values = tuple(p_values) or (default_p,)
    if any(not 1 <= p <= DEFAULT_SETTINGS.max_p for p in p_values):
        raise click.BadParameter(f"p must lie in 1..{DEFAULT_SETTINGS.max_p}", param_hint='--p')
    options = SuiteOptions(p_values=p_values, points=points, seed=seed, max_slots=max_slots, grid=grid,
                           instance=instance)
    run(ctx, lambda app: app.verify_all(options, suites or (instance.suites if instance else SUITES)))


if __name__ == "__main__":
    main()
