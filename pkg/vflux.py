#!/usr/bin/env python
'''entrypoint to vortexflux, written with click'''
import os
import sys
import logging

import click
import numpy as np

from vortexflux import __version__
from vortexflux import storage
from vortexflux.configuration import SimConfig, config_hash, resolved_dict
from vortexflux.coupling import Simulation, eps_continuation, estimate_R_star, grid_refinement_study, refinement_table
from vortexflux.data import BoundarySamples
from vortexflux.diagnostics import modulus_of_continuity, validate_trajectory
from vortexflux.display import Display
from vortexflux.elliptic import dump_operator
from vortexflux.exceptions import CheckFailure, VortexFluxException
from vortexflux.extension import build_extension

VERBOSITY = [logging.WARNING, logging.INFO, logging.DEBUG]
EXTENSION_SNAPSHOTS = 21


class Session:
    '''state shared by every subcommand; the configuration is only parsed when a command needs it'''

    def __init__(self, config_path=None, seed=None, color=True):
        self.config_path = config_path
        self.seed = seed
        self.color = color
        self._config = None

    @property
    def config(self):
        if self._config is None:
            config = SimConfig.from_file(self.config_path)
            if self.seed is not None:
                config = config.replace(seed=self.seed, defaults=[d for d in config.defaults if d != 'seed'])
            self._config = config
        return self._config

    @property
    def display(self):
        return Display(self.color)


pass_session = click.make_pass_decorator(Session)


def json_option(f):
    return click.option('-j', '--json', 'use_json', is_flag=True, default=False, help='Output as JSON')(f)


def out_option(f):
    return click.option('-o', '--out', default=None, help='Output directory (default: runs/<run id>)')(f)


def strict_option(f):
    return click.option('--strict', is_flag=True, default=False, help='Exit nonzero if a fatal check fails')(f)


@click.group(context_settings={'help_option_names': ['-h', '--help']})
@click.version_option(__version__)
@click.option('-c', '--config', 'config_path', default=None, type=click.Path(), help='YAML configuration file')
@click.option('--seed', default=None, type=int, help='Override the configured seed')
@click.option('--no-color', is_flag=True, default=False, help='Disable ANSI terminal color?')
@click.option('-v', '--verbose', count=True, help='More logging (repeat for debug output)')
@click.pass_context
def cli(ctx, config_path, seed, no_color, verbose):
    '''vortexflux: vortex density transport coupled to the average magnetic field'''
    logging.basicConfig(
        level=VERBOSITY[min(verbose, len(VERBOSITY) - 1)], format='%(asctime)s %(name)s %(levelname)s %(message)s'
    )
    ctx.color = not no_color
    ctx.obj = Session(config_path, seed, color=not no_color)


def _run_dir(out, manifest):
    run_dir = out or os.path.join('runs', manifest.run_id)
    os.makedirs(run_dir, exist_ok=True)
    return run_dir


def _write_run(run_dir, simulation, traj, family=None):
    '''config, fields, diagnostics and plot files of one finished run; returns (report, outputs)'''
    outputs = storage.write_config(run_dir, simulation.config)
    outputs += storage.write_trajectory(run_dir, traj)
    report = validate_trajectory(traj, simulation, family)
    report.to_csv(os.path.join(run_dir, 'diagnostics.csv'))
    outputs.append('diagnostics.csv')
    outputs.append(storage.write_table(os.path.join(run_dir, 'modulus.csv'), modulus_of_continuity(traj)))
    outputs.append(storage.write_plot_file(os.path.join(run_dir, 'l1.dat'), traj.times, traj.l1_series(), 't l1'))
    max_omega = [float(o.max()) for o in traj.omegas]
    outputs.append(storage.write_plot_file(os.path.join(run_dir, 'max_omega.dat'), traj.times, max_omega, 't max_omega'))
    return report, outputs


@cli.command()
@out_option
@strict_option
@json_option
@click.option('--lagged', is_flag=True, default=False, help='One fixed-point sweep per step instead of iterating')
@pass_session
def run(session, out, strict, use_json, lagged):
    '''Run one simulation and check it'''
    config = session.config
    simulation = Simulation(config)
    manifest = storage.RunManifest.start(config, extra={'mollifier': simulation.extension.mollifier, 'lagged': lagged})
    traj = simulation.run(lagged=lagged)
    run_dir = _run_dir(out, manifest)
    report, outputs = _write_run(run_dir, simulation, traj)
    manifest.finish(outputs + [storage.MANIFEST])
    manifest.to_file(run_dir)
    display = session.display
    if use_json:
        display.show_raw({'run_dir': run_dir, 'summary': traj.summary(), 'passed': report.passed}, use_json=True)
    else:
        display.show_summary('Run {0} -> {1}'.format(manifest.run_id, run_dir), traj.summary())
        display.show_report(report)
    if strict and report.failed():
        raise CheckFailure(report.failed())


@cli.command()
@out_option
@strict_option
@json_option
@click.option('-e', '--eps', 'eps_list', multiple=True, type=float, help='Viscosity values, largest first (repeatable)')
@click.option('-w', '--workers', default=1, type=int, help='Member runs executed concurrently')
@click.option('--rstar', is_flag=True, default=False, help='Also estimate the cut-off threshold R*')
@click.option('--refine', is_flag=True, default=False, help='Also rerun the base config on a grid with halved spacing')
@pass_session
def sweep(session, out, strict, use_json, eps_list, workers, rstar, refine):
    '''Viscosity continuation family (optionally with the R* search and a grid refinement check)'''
    config = session.config
    if not eps_list:
        eps_list = [config.epsilon / 2 ** k for k in range(4)]
    manifest = storage.RunManifest.start(config, extra={'eps': list(eps_list), 'workers': workers})
    sweep_dir = out or os.path.join('sweeps', manifest.run_id)
    os.makedirs(sweep_dir, exist_ok=True)
    result = eps_continuation(config, eps_list, workers=workers)
    family = list(result.trajectories.values())
    outputs, failed = [], []
    for k, eps in enumerate(result.epsilons):
        member_dir = 'eps_{0:02d}'.format(k)
        os.makedirs(os.path.join(sweep_dir, member_dir), exist_ok=True)
        simulation = Simulation(result.config.replace(epsilon=eps))
        report, written = _write_run(os.path.join(sweep_dir, member_dir), simulation, result.trajectories[eps], family)
        outputs += [os.path.join(member_dir, w) for w in written]
        failed += ['{0}:{1}'.format(member_dir, name) for name in report.failed()]
    outputs.append(storage.write_table(os.path.join(sweep_dir, 'family.csv'), result.table))
    outputs.append(storage.write_table(os.path.join(sweep_dir, 'cauchy_table.csv'), result.cauchy))
    outputs.append(
        storage.write_plot_file(
            os.path.join(sweep_dir, 'gradient_energy.dat'), result.table['epsilon'], result.table['gradient_energy'],
            'epsilon sqrt(eps)|grad omega|',
        )
    )
    outputs.append(
        storage.write_plot_file(
            os.path.join(sweep_dir, 'cauchy.dat'), result.cauchy['eps_j'], result.cauchy['distance'],
            'epsilon dual_distance',
        )
    )
    summary = {
        'members': len(result.epsilons),
        'failures': result.failures,
        'l1_ratio': result.ratio('max_l1'),
        'max_omega_ratio': result.ratio('max_omega'),
        'gradient_energy_ratio': result.ratio('gradient_energy'),
        'distances_decreasing': result.distances_decreasing(),
    }
    if rstar:
        estimate = estimate_R_star(config, workers=workers)
        outputs.append(storage.write_table(os.path.join(sweep_dir, 'rstar.csv'), estimate.table()))
        summary['R_star'] = estimate.R
        summary['certificate'] = list(estimate.certificate)
    if refine:
        study = grid_refinement_study(config)
        outputs.append(storage.write_table(os.path.join(sweep_dir, 'refinement.csv'), refinement_table(study)))
        summary['refinement_sup_difference'] = study['sup_difference']
    manifest.finish(outputs + [storage.MANIFEST])
    manifest.to_file(sweep_dir)
    display = session.display
    if use_json:
        display.show_raw({'sweep_dir': sweep_dir, 'summary': summary}, use_json=True)
    else:
        display.show_table(result.table, title='Family ({0})'.format(sweep_dir))
        display.show_table(result.cauchy, title='Dual-norm distances between consecutive members')
        display.show_summary('Sweep summary', summary)
    if strict and (failed or result.failures):
        raise CheckFailure(failed + ['eps={0}'.format(f['epsilon']) for f in result.failures])


@cli.command()
@out_option
@json_option
@pass_session
def extend(session, out, use_json):
    '''Build the data extension and its mollified version without running the coupled problem'''
    config = session.config
    extension = build_extension(config)
    manifest = storage.RunManifest.start(config, extra={'mollifier': extension.mollifier})
    run_dir = _run_dir(out, manifest)
    os.makedirs(os.path.join(run_dir, storage.FIELDS_DIR), exist_ok=True)
    outputs = storage.write_config(run_dir, config)
    picks = np.unique(np.linspace(0, len(extension.times) - 1, EXTENSION_SNAPSHOTS).round().astype(int))
    for n, k in enumerate(picks):
        t = extension.times[k]
        for kind, values in (('omega_breve', extension.omega_breve[k]), ('omega_breve_eps', extension.omega_breve_eps[k])):
            name = os.path.join(storage.FIELDS_DIR, '{0}_{1:04d}.csv'.format(kind, n))
            storage.write_field(os.path.join(run_dir, name), config.grid, values, t)
            outputs.append(name)
    a_eps = BoundarySamples(extension.times[picks], extension.a_eps[picks]).to_frame(config.grid)
    outputs.append(storage.write_table(os.path.join(run_dir, 'a_eps.csv'), a_eps))
    manifest.finish(outputs + [storage.MANIFEST])
    manifest.to_file(run_dir)
    session.display.show_summary('Extension -> {0}'.format(run_dir), extension.summary(), use_json=use_json)


@cli.command()
@click.argument('run_dir', type=click.Path(exists=True, file_okay=False))
@json_option
@pass_session
def validate(session, run_dir, use_json):
    '''Re-check a run directory from its stored fields'''
    config = storage.read_config(run_dir)
    simulation = Simulation(config)
    traj = storage.read_trajectory(run_dir, config.epsilon, config.R)
    report = validate_trajectory(traj, simulation)
    try:
        manifest = storage.RunManifest.from_file(run_dir)
    except VortexFluxException:
        manifest = None
    if manifest is not None and manifest.config_hash != config_hash(config):
        click.secho('Configuration in {0} does not match its manifest hash'.format(run_dir), fg='yellow')
    session.display.show_report(report, use_json=use_json)
    if report.failed():
        raise CheckFailure(report.failed())


@cli.command()
@json_option
@click.option('--operator', default=None, type=click.Path(), help='Also write the field operator as (row, col, value) text')
@pass_session
def config(session, use_json, operator):
    '''Show the resolved configuration'''
    config = session.config
    if use_json:
        session.display.show_raw(resolved_dict(config), use_json=True)
    else:
        click.echo(config)
    if operator:
        count = dump_operator(config.grid, operator, config.boundary_mode, config.robin_coefficient)
        click.secho('Wrote {0} operator entries to {1}'.format(count, operator), fg='green', err=True)


def main():
    try:
        cli()
    except VortexFluxException as e:
        if e.errno == 0:
            sys.exit(0)
        click.secho('[{0}] {1}'.format(type(e).__name__, e), fg='red', err=True)
        sys.exit(e.errno)


if __name__ == '__main__':
    main()
