#!/usr/bin/env python3
"""
bohmflux - Bohmian trajectories of evanescent light in coupled waveguides.

Command-line front end over the services package:
1. Transverse double-well modes, calibrated to the configured coupling
2. Stationary 2D field, velocity field and continuity diagnostics
3. Evanescent wave packet, trajectories and speed scales
4. Trajectory ensembles and the operational energy-speed curve
5. Self-validation against brute-force oracles

Usage:
    bohmflux <subcommand> --config configs/defaults.json --out <path> [--seed N]

Exit codes: 0 success, 1 validation failure, 2 usage, config or output error.

Requirements:
- Python 3.9+
- See requirements.txt for dependencies
- Optional environment variables (BOHMFLUX_THREADS, BOHMFLUX_LOG_LEVEL, BOHMFLUX_LOG_FILE)
"""

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np
from dotenv import load_dotenv

from services.eigenmodes_service import ModeError, PotentialError, modes_for
from services.logging_service import configure_logging, logger
from services.oracle_service import PropagationError, SingularPointError
from services.opspeed_service import FitWindowError, parse_delta_range, speed_curve
from services.params_service import (
    CavityParams,
    ConfigError,
    PerturbativeRangeError,
    RegimeError,
    config_fingerprint,
    load_config,
)
from services.report_service import (
    RunManifest,
    manifest_path,
    sidecar_path,
    write_csv_atomic,
    write_json_atomic,
)
from services.stationary_service import build_field, density_grid, field, leakage_velocity_estimate, velocity
from services.trajectory_service import (
    StepSizeError,
    TrajectoryConfig,
    default_config,
    ensemble,
    figure1_panels,
)
from services.validation_service import SUITES, run_suite
from services.wavepacket_service import (
    PacketError,
    PacketSpec,
    characteristic_speed,
    packet_trajectory,
    penetration_distance,
)

load_dotenv()

DEFAULT_CONFIG = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'configs', 'defaults.json')

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2

USAGE_ERRORS = (
    ConfigError,
    PotentialError,
    PacketError,
    RegimeError,
    PerturbativeRangeError,
    FitWindowError,
    StepSizeError,
    SingularPointError,
    ValueError,
    OSError,
)


class Config:
    """Configuration from environment variables."""
    def __init__(self):
        self.threads = max(1, int(os.getenv('BOHMFLUX_THREADS', '1')))
        self.log_level = os.getenv('BOHMFLUX_LOG_LEVEL', 'INFO')
        self.log_file = os.getenv('BOHMFLUX_LOG_FILE') or None


class UsageError(Exception):
    """Raised by the argument parser instead of exiting the process."""


class CliParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _trajectory_rows(runs, units):
    for index, tr in enumerate(runs.trajectories):
        x_um = units.length_to_um(tr.x)
        y_um = units.length_to_um(tr.y)
        t_ns = units.time_to_ns(tr.t)
        for k in range(tr.t.size):
            yield [index, tr.t[k], tr.x[k], tr.y[k], t_ns[k], x_um[k], y_um[k], tr.weight[k]]


TRAJECTORY_HEADER = ['id', 't', 'x', 'y', 't_ns', 'x_um', 'y_um', 'weight']
DENSITY_HEADER = ['x', 'y', 'x_um', 'y_um', 'psi2']
BACKGROUND_GRID = (200, 161)

# options whose values may start with '-' but do not parse as numbers
DASHED_VALUE_OPTIONS = ('--deltas',)


def _density_rows(xs, ys, rho, units):
    X, Y = np.meshgrid(xs, ys)
    return zip(X.ravel(), Y.ravel(), units.length_to_um(X.ravel()), units.length_to_um(Y.ravel()), rho.ravel())


def _join_dashed_values(argv: List[str]) -> List[str]:
    """Rewrite '--deltas -1.5:-20:0.5' as '--deltas=-1.5:-20:0.5' so argparse keeps the value."""
    joined: List[str] = []
    i = 0
    while i < len(argv):
        token = argv[i]
        if token in DASHED_VALUE_OPTIONS and i + 1 < len(argv):
            joined.append(f"{token}={argv[i + 1]}")
            i += 2
            continue
        joined.append(token)
        i += 1
    return joined


def _summary(runs) -> dict:
    return {
        'n': len(runs),
        'fraction_reaching_aux': runs.fraction_reaching_aux,
        'mean_max_depth': runs.mean_max_depth,
        'terminations': runs.terminations(),
        'metadata': runs.metadata,
    }


def cmd_modes(args, params: CavityParams, config: Config, manifest: RunManifest) -> int:
    geometry, basis = modes_for(params)
    u = params.units
    rows = zip(basis.y, u.length_to_um(basis.y), basis.V, basis.Phi_minus, basis.Phi_plus, basis.Phi_m, basis.Phi_a)
    manifest.add_output(write_csv_atomic(
        args.out, ['y', 'y_um', 'V', 'Phi_minus', 'Phi_plus', 'Phi_m', 'Phi_a'], rows))
    summary = {
        'E_minus': basis.E_minus,
        'E_plus': basis.E_plus,
        'J0_eff': basis.J0_eff,
        'J0_target': params.J0,
        'J0_eff_eV': u.energy_to_eV(basis.J0_eff),
        'well_depth': geometry.well_depth,
        'well_depth_eV': u.energy_to_eV(geometry.well_depth),
        'L_y': basis.L_y,
    }
    manifest.add_output(write_json_atomic(sidecar_path(args.out), summary))
    logger.info(f"🧭 Modes: J0_eff={basis.J0_eff:.6g} (target {params.J0:.6g})")
    return EXIT_OK


def cmd_field(args, params: CavityParams, config: Config, manifest: RunManifest) -> int:
    _, basis = modes_for(params)
    fld = build_field(params, basis, delta_over_J0=args.delta)
    nx, ny = args.grid
    if nx < 2 or ny < 2:
        raise ValueError("--grid needs at least 2 x 2 points")
    xs = np.linspace(0.0, args.x_max * fld.length_scale, nx)
    ys = np.linspace(-fld.L_y, fld.L_y, ny)
    X, Y = np.meshgrid(xs, ys)
    psi = field(fld, X, Y)
    vx, vy = velocity(fld, X, Y)
    u = params.units
    rows = zip(X.ravel(), Y.ravel(), u.length_to_um(X.ravel()), u.length_to_um(Y.ravel()),
               psi.real.ravel(), psi.imag.ravel(), (np.abs(psi) ** 2).ravel(), vx.ravel(), vy.ravel())
    manifest.add_output(write_csv_atomic(
        args.out, ['x', 'y', 'x_um', 'y_um', 're_psi', 'im_psi', 'psi2', 'v_x', 'v_y'], rows))
    manifest.add_output(write_json_atomic(sidecar_path(args.out), {
        'delta_over_J0': fld.params.delta_over_J0,
        'regime': fld.regime.value,
        'k1': fld.waves.k1,
        'k2': fld.waves.k2,
        'length_scale': fld.length_scale,
        'length_scale_um': u.length_to_um(fld.length_scale),
    }))
    return EXIT_OK


def cmd_packet(args, params: CavityParams, config: Config, manifest: RunManifest) -> int:
    spec = PacketSpec.from_params(params)
    t0, t1 = args.tspan
    path = packet_trajectory(args.x0 * spec.L, (t0 * spec.tau, t1 * spec.tau), spec,
                             samples=args.samples, method=args.method)
    u = params.units
    rows = zip(path.t, path.x, path.v, path.density, u.time_to_ns(path.t), u.length_to_um(path.x),
               u.speed_to_km_s(path.v))
    manifest.add_output(write_csv_atomic(args.out, ['t', 'x', 'v', 'psi2', 't_ns', 'x_um', 'v_km_s'], rows))

    speed = characteristic_speed(spec)
    summary = {
        'k0': spec.k0,
        'L': spec.L,
        'L_um': u.length_to_um(spec.L),
        'tau': spec.tau,
        'tau_ns': u.time_to_ns(spec.tau),
        'penetration_distance': penetration_distance(spec),
        'penetration_distance_um': u.length_to_um(penetration_distance(spec)),
        'characteristic_speed': speed,
        'characteristic_speed_km_s': u.speed_to_km_s(speed),
    }
    if params.Gamma > 0 and params.delta < -params.J0:
        leak = leakage_velocity_estimate(params.delta, params)
        summary.update({
            'leakage_velocity': leak,
            'leakage_velocity_km_s': u.speed_to_km_s(leak),
            'leakage_over_packet_speed': leak / speed,
        })
    manifest.add_output(write_json_atomic(sidecar_path(args.out), summary))
    return EXIT_OK


def cmd_trajectories(args, params: CavityParams, config: Config, manifest: RunManifest) -> int:
    _, basis = modes_for(params)
    fld = build_field(params, basis, delta_over_J0=args.delta_over_j0)
    cfg = default_config(fld)
    if args.dt is not None or args.t_max is not None:
        cfg = TrajectoryConfig(
            dt=args.dt if args.dt is not None else cfg.dt,
            t_max=args.t_max if args.t_max is not None else cfg.t_max,
            weight_floor=cfg.weight_floor,
            x_max=cfg.x_max,
            record_every=1 if args.dt is not None else cfg.record_every,
        )
    runs = ensemble(fld, args.n, cfg, rng_seed=args.seed, threads=config.threads, show_progress=args.progress)
    manifest.add_output(write_csv_atomic(args.out, TRAJECTORY_HEADER, _trajectory_rows(runs, params.units)))
    manifest.add_output(write_json_atomic(sidecar_path(args.out), _summary(runs)))

    if args.background_grid is not None:
        if len(args.background_grid) not in (0, 2):
            raise ValueError("--background-grid takes no value or NX NY")
        nx, ny = args.background_grid or BACKGROUND_GRID
        if nx < 2 or ny < 2:
            raise ValueError("--background-grid needs at least 2 x 2 points")
        reach = max((float(np.max(tr.x)) for tr in runs.trajectories), default=0.0)
        xs = np.linspace(0.0, max(reach, fld.length_scale), nx)
        ys = np.linspace(-fld.L_y, fld.L_y, ny)
        manifest.add_output(write_csv_atomic(sidecar_path(args.out, 'background', 'csv'), DENSITY_HEADER,
                                             _density_rows(xs, ys, density_grid(fld, xs, ys), params.units)))
    return EXIT_OK


def cmd_speed_curve(args, params: CavityParams, config: Config, manifest: RunManifest) -> int:
    _, basis = modes_for(params)
    adopted = params.with_J0(basis.J0_eff)
    deltas = [d * adopted.J0 for d in parse_delta_range(args.deltas)]
    rows = speed_curve(deltas, adopted, threads=config.threads)
    header = ['delta_over_J0', 'v_closed', 'v_closed_km_s', 'v_fit', 'v_fit_km_s', 'v_bohm_leak', 'v_bohm_leak_km_s']
    manifest.add_output(write_csv_atomic(args.out, header, (
        [r.delta_over_J0, r.v_closed, r.v_closed_km_s, r.v_fit, r.v_fit_km_s, r.v_bohm_leak, r.v_bohm_leak_km_s]
        for r in rows
    )))
    return EXIT_OK


def cmd_validate(args, params: CavityParams, config: Config, manifest: RunManifest) -> int:
    report = run_suite(args.suite, params)
    for suite, result in report['suites'].items():
        for check in result['checks']:
            status = '✅' if check['passed'] else '❌'
            print(f"{status} {suite}.{check['name']}: {check['value']:.3e} (tolerance {check['tolerance']:.1e})")
    if args.out:
        manifest.add_output(write_json_atomic(args.out, report))
    if not report['passed']:
        logger.error("❌ Validation failed")
        return EXIT_VALIDATION
    logger.info("✅ All validation checks passed")
    return EXIT_OK


def cmd_figure1(args, params: CavityParams, config: Config, manifest: RunManifest) -> int:
    os.makedirs(args.out, exist_ok=True)
    _, basis = modes_for(params)
    panels = figure1_panels(params, basis, n=args.n, rng_seed=args.seed, threads=config.threads,
                            show_progress=args.progress)
    u = params.units
    summary = {}
    for name, panel in panels.items():
        runs = panel['trajectories']
        target = os.path.join(args.out, f"figure1_{name}_trajectories.csv")
        manifest.add_output(write_csv_atomic(target, TRAJECTORY_HEADER, _trajectory_rows(runs, u)))
        target = os.path.join(args.out, f"figure1_{name}_density.csv")
        manifest.add_output(write_csv_atomic(target, DENSITY_HEADER,
                                             _density_rows(panel['xs'], panel['ys'], panel['density'], u)))
        summary[name] = _summary(runs)
        summary[name]['guide_centers_um'] = [u.length_to_um(-basis.main_center), u.length_to_um(basis.main_center)]
    manifest.add_output(write_json_atomic(os.path.join(args.out, 'figure1_summary.json'), summary))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = CliParser(add_help=False)
    common.add_argument('--config', default=DEFAULT_CONFIG, help='JSON cavity configuration (SI units)')
    common.add_argument('--seed', type=int, default=0, help='RNG seed for ensembles')
    common.add_argument('--log-level', default=None, help='Override BOHMFLUX_LOG_LEVEL')

    parser = CliParser(prog='bohmflux', description='Bohmian trajectories of evanescent light in coupled guides')
    sub = parser.add_subparsers(dest='subcommand', parser_class=CliParser)
    sub.required = True

    p = sub.add_parser('modes', parents=[common], help='Calibrated transverse modes')
    p.add_argument('--out', default='modes.csv')
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser('field', parents=[common], help='Stationary field and velocity on a grid')
    p.add_argument('--delta', type=float, default=None, help='Delta in units of J0 (default from config)')
    p.add_argument('--grid', type=int, nargs=2, default=(120, 81), metavar=('NX', 'NY'))
    p.add_argument('--x-max', type=float, default=6.0, help='Grid extent in units of the field length scale')
    p.add_argument('--out', default='field.csv')
    p.set_defaults(func=cmd_field)

    p = sub.add_parser('packet', parents=[common], help='Evanescent wave-packet trajectory')
    p.add_argument('--x0', type=float, default=1.0, help='Start position in units of L = 1/k0')
    p.add_argument('--tspan', type=float, nargs=2, default=(-1.0, 1.0), metavar=('T0', 'T1'),
                   help='Time span in units of tau = 1/sigma')
    p.add_argument('--samples', type=int, default=201)
    p.add_argument('--method', choices=('closed', 'rk4'), default='closed')
    p.add_argument('--out', default='packet.csv')
    p.set_defaults(func=cmd_packet)

    p = sub.add_parser('trajectories', parents=[common], help='Bohmian trajectory ensemble')
    p.add_argument('--delta-over-j0', type=float, default=None)
    p.add_argument('-n', '--n', dest='n', type=int, default=200, help='Number of trajectories')
    p.add_argument('--dt', type=float, default=None, help='Time step (natural units)')
    p.add_argument('--t-max', type=float, default=None, help='Integration horizon (natural units)')
    p.add_argument('--background-grid', type=int, nargs='*', default=None, metavar='N',
                   help='Also write |Psi|^2 on an NX x NY grid to <out>.background.csv (default 200 161)')
    p.add_argument('--progress', action='store_true')
    p.add_argument('--out', default='trajectories.csv')
    p.set_defaults(func=cmd_trajectories)

    p = sub.add_parser('speed-curve', parents=[common], help='Closed-form, fitted and leakage speeds')
    p.add_argument('--deltas', default='-1.5:-20:0.5', help='start:stop:step in units of J0')
    p.add_argument('--out', default='speed_curve.csv')
    p.set_defaults(func=cmd_speed_curve)

    p = sub.add_parser('validate', parents=[common], help='Run self-checks against the oracles')
    p.add_argument('--suite', choices=('all',) + SUITES, default='all')
    p.add_argument('--out', default=None, help='Optional JSON report path')
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser('figure1', parents=[common], help='Propagative and evanescent trajectory panels')
    p.add_argument('-n', '--n', dest='n', type=int, default=200, help='Number of trajectories')
    p.add_argument('--progress', action='store_true')
    p.add_argument('--out', default='figure1')
    p.set_defaults(func=cmd_figure1)
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """Parse argv, run one subcommand and return the process exit code."""
    config = Config()
    configure_logging(config.log_level, config.log_file)
    parser = build_parser()
    try:
        args = parser.parse_args(_join_dashed_values(sys.argv[1:] if argv is None else list(argv)))
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"bohmflux: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    try:
        if args.log_level:
            configure_logging(args.log_level, config.log_file)
        params = load_config(args.config)
        with open(args.config, 'r', encoding='utf-8') as handle:
            config_hash = config_fingerprint(json.load(handle))
        overrides = {k: v for k, v in vars(args).items() if k not in ('func', 'config', 'subcommand')}
        manifest = RunManifest(subcommand=args.subcommand, config_hash=config_hash, overrides=overrides,
                               rng_seed=args.seed)
        logger.info(f"🚀 bohmflux {args.subcommand} (config {os.path.basename(args.config)})")
        code = args.func(args, params, config, manifest)
        out = getattr(args, 'out', None)
        target = manifest_path(out) if out else f"{args.subcommand}.manifest.json"
        manifest.finish().write(target)
        return code
    except (ModeError, PropagationError) as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_VALIDATION
    except USAGE_ERRORS as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_USAGE


def main():
    try:
        sys.exit(run(sys.argv[1:]))
    except KeyboardInterrupt:
        logger.info("🛑 Interrupted")
        print("\n👋 bohmflux stopped.")
        sys.exit(130)


if __name__ == "__main__":
    main()
