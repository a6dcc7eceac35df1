"""Command-line front end: ioncat {simulate,herald,fit,wigner,report} --config run.json."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .fock import CA40_MASS_U, TruncationError, cat_state, physical_units, r_min, squeezed_mean_occupation
from .open_system import DimensionError
from .spin import HeraldError

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _json_default(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _run_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1)[0])


# -- subcommands ----------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, out: Path, threads: int) -> list[Path]:
    from .io import write_trace
    from .synth import SequenceConfig, revival_times, run_full_sequence

    ph = cfg.physics
    written = []
    for i, run in enumerate(cfg.runs):
        basis = (run.basis or cfg.basis).build(ph.alpha)
        sc = SequenceConfig(alpha=ph.alpha, branch=run.branch, basis=basis, omega_probe=ph.omega_probe,
                            eta=ph.eta, decay=ph.decay, times=cfg.sampling.times, sequences=cfg.sampling.sequences,
                            herald=cfg.herald, decoherence=ph.decoherence, sdf_omega=2 * math.pi * ph.sdf_omega_hz,
                            probe=run.probe, seed=_run_seed(cfg.seed, i), threads=threads)
        res = run_full_sequence(sc)
        p = res.populations.p
        n_bar = float(np.dot(np.arange(p.size), p))
        rt = revival_times(n_bar, ph.omega_probe)
        meta = dict(res.metadata)
        meta.update({"run": run.name, "basis": basis.kind, "n_bar_basis": n_bar,
                     "t_mix_us": rt["t_mix"] * 1e6, "t_cat_us": rt["t_cat"] * 1e6,
                     "omega_probe_rad_s": ph.omega_probe})
        tp = out / f"{run.name}.csv"
        write_trace(res.trace, tp)
        _dump(meta, out / f"{run.name}.meta.json")
        written += [tp, out / f"{run.name}.meta.json"]
        print(f"{run.name}: {len(res.trace)} points, acceptance {meta['acceptance_rate']:.3f}, "
              f"true parity {meta['true_parity']:+.3f}, t_mix {rt['t_mix'] * 1e6:.1f} us, "
              f"t_cat {rt['t_cat'] * 1e6:.1f} us")
    return written


def cmd_herald(cfg: RunConfig, out: Path, threads: int) -> list[Path]:
    from .synth import calibrate_herald, point_rng

    h = cfg.herald or calibrate_herald()
    n = 5_000_000
    rng = point_rng(cfg.seed, 0)
    up_bad = float(np.mean(rng.poisson(h.dark_mean, n) > h.threshold))
    down_bad = float(np.mean(rng.poisson(h.bright_mean, n) <= h.threshold))
    text = (f"bright_mean: {h.bright_mean:.6g}\ndark_mean: {h.dark_mean:.6g}\nthreshold: {h.threshold}\n"
            f"detect_time_us: {h.detect_time * 1e6:.6g}\n"
            f"p_down_declared_up: {h.p_down_as_up:.6g}\np_up_declared_down: {h.p_up_as_down:.6g}\n"
            f"mc_p_down_declared_up: {down_bad:.6g}\nmc_p_up_declared_down: {up_bad:.6g}\nmc_shots: {n}\n")
    path = out / "herald.txt"
    path.write_text(text)
    print(text, end="")
    return [path]


def _resolve(p: str, cfg: RunConfig, out: Path) -> Path:
    q = Path(p)
    if q.is_absolute():
        return q
    for base in (out, cfg.source_path.parent if cfg.source_path else None, Path.cwd()):
        if base is not None and (base / q).exists():
            return base / q
    return q


def cmd_fit(cfg: RunConfig, out: Path, threads: int, traces: list[str] | None = None) -> list[Path]:
    from .fit import FitOptions, cat_prior, fit_mixture, fit_populations, parity_report, revival_cycles
    from .io import read_trace, write_estimate

    fc = cfg.fit
    paths = [_resolve(p, cfg, out) for p in (traces or fc.traces)]
    if not paths:
        raise ConfigError("fit needs at least one trace (fit.traces or positional paths)")
    written = []
    for k, path in enumerate(paths):
        trace = read_trace(path)
        variant = "blue" if trace.metadata.get("branch") == "mixture" else "red"
        opts = FitOptions(eta=float(trace.metadata.get("eta", cfg.physics.eta)), omega_span=fc.omega_span,
                          gamma=fc.gamma, strict_sum=fc.strict_sum, bootstrap=fc.bootstrap,
                          seed=_run_seed(cfg.seed, k), threads=threads, variant=variant)
        prior = None
        if fc.n_levels is None:
            prior = cat_prior(fc.prior_alpha if fc.prior_alpha is not None else cfg.physics.alpha, trace.basis)
        est = fit_populations(trace, fc.decay_kind, fc.n_levels, opts, prior=prior)
        stem = path.stem
        summary = out / f"{stem}.summary.txt"
        write_estimate(est, out / f"{stem}.populations.csv", summary)
        extra = revival_cycles(trace, est)
        line = parity_report(est)
        if fc.mixture_alpha is not None:
            mix = fit_mixture(trace, fc.mixture_alpha, fc.decay_kind, options=opts)
            extra.update({"xi_mix": mix.xi_mix, "xi_mix_sem": mix.xi_sem, "mixture_parity": mix.parity,
                          "mixture_parity_sem": mix.parity_sem})
            line += "\n  " + parity_report(mix)
        with open(summary, "a") as fh:
            for key, v in extra.items():
                fh.write(f"{key}: {v:.10g}\n")
        written += [out / f"{stem}.populations.csv", summary]
        cyc = f", revival at {extra['revival_cycles']:.1f} Rabi cycles" if "revival_cycles" in extra else ""
        print(f"{stem}: {line}{cyc}")
    return written


def cmd_wigner(cfg: RunConfig, out: Path, threads: int) -> list[Path]:
    from .fock import aligned_squeeze_phase
    from .io import write_pgm, write_wigner
    from .wigner import fringe_fit, grid_points, reconstruct_grid

    wc = cfg.wigner
    alpha = cfg.physics.alpha
    if wc.state == "mixture":
        a = cat_state(alpha, +1)
        b = cat_state(alpha, -1)
        state = 0.5 * (np.outer(a.amps, a.amps.conj()) + np.outer(b.amps, b.amps.conj()))
    else:
        state = cat_state(alpha, -1 if wc.state == "minus" else +1)
    phi = aligned_squeeze_phase(alpha) if wc.phi_s == "aligned" else float(wc.phi_s)
    fit_cfg = {"omega": cfg.physics.omega_probe, "gamma": wc.gamma, "decay_kind": cfg.physics.decay.kind,
               "times": np.linspace(0, wc.t_max_us * 1e-6, wc.n_points), "shots": wc.shots, "seed": cfg.seed,
               "eta": cfg.physics.eta, "bootstrap": cfg.fit.bootstrap}
    written = []
    if wc.re is not None:
        pts, shape = grid_points(wc.re.values, wc.im.values)
        grid = reconstruct_grid(state, pts, wc.r, phi, wc.source, fit_cfg, threads, shape)
        write_wigner(grid, out / "wigner_grid.csv")
        write_pgm(grid.as_image(), out / "wigner_grid.pgm")
        written += [out / "wigner_grid.csv", out / "wigner_grid.pgm"]
        centre = grid.W[int(np.argmin(np.abs(grid.points)))]
        print(f"grid {shape[0]}x{shape[1]} ({wc.source}): W near origin {centre:+.4f}, "
              f"min {np.nanmin(grid.W):+.4f}, max {np.nanmax(grid.W):+.4f}, holes {grid.holes.size}")
    if wc.cut is not None:
        cut = reconstruct_grid(state, 1j * wc.cut.values, wc.r, phi, wc.source, fit_cfg, threads)
        write_wigner(cut, out / "wigner_cut.csv")
        written.append(out / "wigner_cut.csv")
        guess = wc.alpha_guess or abs(alpha)
        ff = fringe_fit(cut, guess)
        (out / "fringe_fit.txt").write_text(ff.summary())
        written.append(out / "fringe_fit.txt")
        print(ff.summary(), end="")
    return written


def cmd_report(cfg: RunConfig, out: Path, threads: int) -> list[Path]:
    from .synth import revival_times

    ph = cfg.physics
    a = ph.alpha
    n_bar = abs(a) ** 2
    rt = revival_times(n_bar, ph.omega_probe)
    basis = cfg.basis.build(a)
    units = physical_units(2 * math.pi * 2.08e6, CA40_MASS_U, a)
    lines = {
        "alpha_abs": abs(a),
        "n_bar": n_bar,
        "omega_probe_rad_s": ph.omega_probe,
        "t_mix_us": rt["t_mix"] * 1e6,
        "t_cat_us": rt["t_cat"] * 1e6,
        "r_min": r_min(a),
        "squeeze_r": basis.r,
        "n_s_mean": squeezed_mean_occupation(a, basis.r),
        "z0_nm_ca40_2p08MHz": units["z0"] * 1e9,
        "separation_nm_ca40_2p08MHz": units["separation"] * 1e9,
    }
    text = "".join(f"{k}: {v:.8g}\n" for k, v in lines.items())
    path = out / "report.txt"
    path.write_text(text)
    print(text, end="")
    return [path]


COMMANDS = {"simulate": cmd_simulate, "herald": cmd_herald, "fit": cmd_fit, "wigner": cmd_wigner,
            "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ioncat", description="Cat-state synthesis, fitting and Wigner reconstruction.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, help="worker threads (default: available cores)")
        p.add_argument("--out-dir", default=".", help="directory for all outputs")
        if name == "fit":
            p.add_argument("traces", nargs="*", help="trace CSV files (override fit.traces)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be >= 0")
            cfg.seed = args.seed
        if cfg.experiment != args.command:
            print(f"note: config experiment is {cfg.experiment!r}, running {args.command!r}", file=sys.stderr)
        threads = args.threads or cfg.threads or os.cpu_count() or 1
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.command == "wigner" and cfg.wigner is None:
            raise ConfigError("wigner needs a wigner section")
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "fit":
            cmd_fit(cfg, out, threads, args.traces)
        else:
            COMMANDS[args.command](cfg, out, threads)
    except (TruncationError, DimensionError, HeraldError, ArithmeticError, np.linalg.LinAlgError,
            RuntimeError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, TypeError) as e:
        print(f"invalid configuration: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
