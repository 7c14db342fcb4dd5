"""Batch driver: configured solve/estimate/adapt runs with artifacts.

Reads an INI run configuration, executes one of four pipeline modes and
writes run.csv, per-mesh VTK snapshots and summary.txt into the output
directory.  Exit codes: 0 success, 2 configuration error, 3 solver
non-convergence, 4 internal invariant violation.

Config grammar (full reference in the README):

    [run]
    mode = adaptive_study   ; single_solve | uniform_study |
                            ; adaptive_study | compare_stopping
    out = runs/example      ; output directory, created on demand
    deterministic = false   ; single BLAS thread, fixed summation order

    [case]
    name = l_shape          ; l_shape | notched_plate
    target_h = 0.5          ; initial mesh size
    ; any case parameter as a float key: mu, lam, alpha, amp,
    ; sigma_c, e_res, pull

    [law]
    name = hencky_mises     ; linear | hencky_mises | damage
    ; without further keys the case calibrates the law; explicit
    ; float keys (a, b, kappa, rho0, a_f, s0, ...) construct it
    ; directly instead

    [adaptive]
    gamma_lin = 0.1
    gamma_quad = 0.1
    theta = 0.3
    max_loops = 12
    nu_max = 12
    mode = global           ; global | local
    target =                ; optional eta_disc + eta_osc threshold

    [output]
    vtk = true              ; per-mesh VTK snapshots
    summary = true          ; summary.txt

Environment variables override file values with the prefix
EQUISTRESS_<SECTION>_<KEY>, e.g. EQUISTRESS_ADAPTIVE_GAMMA_LIN=0.2;
the --out, --threads and --deterministic flags override both.
"""

import argparse
import configparser
import os
import sys
import traceback
from pathlib import Path

ENV_PREFIX = "EQUISTRESS_"
MODES = ("single_solve", "uniform_study", "adaptive_study",
         "compare_stopping")
_SECTIONS = ("run", "case", "law", "adaptive", "output")
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")
_ADAPTIVE_FLOAT = ("gamma_lin", "gamma_quad", "theta")
_ADAPTIVE_INT = ("max_loops", "nu_max")


def _parse_args(argv):
    parser = argparse.ArgumentParser(
        prog="equistress",
        description="adaptive equilibrated-stress error estimation runs")
    parser.add_argument("--config", required=True,
                        help="INI run configuration file")
    parser.add_argument("--out", default=None,
                        help="output directory (overrides [run] out)")
    parser.add_argument("--threads", type=int, default=None,
                        help="BLAS/OpenMP thread count")
    parser.add_argument("--deterministic", action="store_true",
                        help="single thread and fixed summation order")
    return parser.parse_args(argv)


def _apply_env_overrides(parser):
    """Fold EQUISTRESS_<SECTION>_<KEY> environment values into the config."""
    for name, value in os.environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        section, _, key = name[len(ENV_PREFIX):].lower().partition("_")
        if section in _SECTIONS and key:
            if not parser.has_section(section):
                parser.add_section(section)
            parser[section][key] = value


def _section_dict(parser, name):
    return dict(parser[name]) if parser.has_section(name) else {}


def _parse_float(section, key, value):
    from .errors import ConfigurationError
    try:
        return float(value)
    except ValueError:
        raise ConfigurationError(
            f"[{section}] {key} = {value!r} is not a number") from None


def _parse_bool(section, key, value):
    from .errors import ConfigurationError
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(
        f"[{section}] {key} = {value!r} is not a boolean")


class RunConfig:
    """Validated run configuration.

    Construction builds the case, the law and the adaptive parameters,
    so every user input is checked before any output file exists.
    """

    def __init__(self, path, out_override=None, deterministic=False):
        from .adaptivity import AdaptiveConfig
        from .cases import make_case
        from .constitutive import make_law
        from .errors import ConfigurationError

        parser = configparser.ConfigParser(
            inline_comment_prefixes=(";", "#"))
        if not Path(path).is_file():
            raise ConfigurationError(f"config file not found: {path}")
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (configparser.Error, UnicodeDecodeError) as exc:
            raise ConfigurationError(f"malformed config: {exc}") from None
        _apply_env_overrides(parser)
        unknown = set(parser.sections()) - set(_SECTIONS)
        if unknown:
            raise ConfigurationError(
                f"unknown config sections: {', '.join(sorted(unknown))}")

        run = _section_dict(parser, "run")
        self.mode = run.pop("mode", None)
        if self.mode not in MODES:
            raise ConfigurationError(
                f"[run] mode must be one of {', '.join(MODES)}, "
                f"got {self.mode!r}")
        out = run.pop("out", None)
        if out_override:
            out = out_override
        if not out:
            raise ConfigurationError(
                "no output directory: set [run] out or pass --out")
        self.out_dir = Path(out)
        self.deterministic = deterministic or _parse_bool(
            "run", "deterministic", run.pop("deterministic", "false"))
        if run:
            raise ConfigurationError(
                f"unknown [run] keys: {', '.join(sorted(run))}")

        case_params = _section_dict(parser, "case")
        self.case_name = case_params.pop("name", None)
        if self.case_name is None:
            raise ConfigurationError("[case] name is required")
        default_h = {"l_shape": "0.5", "notched_plate": "2.0"}.get(
            self.case_name, "0.5")
        self.target_h = _parse_float(
            "case", "target_h", case_params.pop("target_h", default_h))
        overrides = {k: _parse_float("case", k, v)
                     for k, v in case_params.items()}
        self.case = make_case(self.case_name, **overrides)
        self.case_params = overrides

        law_params = _section_dict(parser, "law")
        self.law_name = law_params.pop("name", None)
        if self.law_name is None:
            raise ConfigurationError("[law] name is required")
        self.law_params = {k: _parse_float("law", k, v)
                           for k, v in law_params.items()}
        if self.law_params:
            self.law = make_law(self.law_name, **self.law_params)
        else:
            self.law = self.case.make_law(self.law_name)

        adaptive = _section_dict(parser, "adaptive")
        kwargs = {}
        for key in _ADAPTIVE_FLOAT:
            if key in adaptive:
                kwargs[key] = _parse_float("adaptive", key,
                                           adaptive.pop(key))
        for key in _ADAPTIVE_INT:
            if key in adaptive:
                value = adaptive.pop(key)
                try:
                    kwargs[key] = int(value)
                except ValueError:
                    raise ConfigurationError(
                        f"[adaptive] {key} = {value!r} is not an integer"
                    ) from None
        if "mode" in adaptive:
            kwargs["mode"] = adaptive.pop("mode")
        target = adaptive.pop("target", "")
        if target.strip():
            kwargs["target"] = _parse_float("adaptive", "target", target)
        if adaptive:
            raise ConfigurationError(
                f"unknown [adaptive] keys: {', '.join(sorted(adaptive))}")
        if self.mode == "single_solve":
            kwargs["max_loops"] = 1
        self.adaptive = AdaptiveConfig(**kwargs)

        output = _section_dict(parser, "output")
        self.write_vtk = _parse_bool(
            "output", "vtk", output.pop("vtk", "true"))
        self.write_summary = _parse_bool(
            "output", "summary", output.pop("summary", "true"))
        if output:
            raise ConfigurationError(
                f"unknown [output] keys: {', '.join(sorted(output))}")

        try:
            self.mesh = self.case.make_mesh(self.target_h)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None

    def echo(self):
        """Resolved settings as (key, value) pairs for the summary."""
        items = [("mode", self.mode), ("case", self.case_name),
                 ("target_h", repr(self.target_h)),
                 ("law", self.law_name)]
        items += [(f"case.{k}", repr(v))
                  for k, v in sorted(self.case_params.items())]
        items += [(f"law.{k}", repr(v))
                  for k, v in sorted(self.law_params.items())]
        a = self.adaptive
        items += [("gamma_lin", repr(a.gamma_lin)),
                  ("gamma_quad", repr(a.gamma_quad)),
                  ("theta", repr(a.theta)),
                  ("max_loops", str(a.max_loops)),
                  ("nu_max", str(a.nu_max)),
                  ("criteria mode", a.mode),
                  ("target", repr(a.target)),
                  ("deterministic", str(self.deterministic).lower())]
        return items


def _execute(config):
    """Run the configured mode; returns (title, logs to write, state)."""
    from .adaptivity import compare_stopping, run_adaptive, uniform_study
    from .io import write_vtk

    out_dir = config.out_dir
    holder = {}

    def snapshot(loop, solve, state):
        holder["state"] = state
        mesh = state["mesh"]
        print(f"loop {loop}: {mesh.nc} cells, "
              f"eta_disc {state['glob'].eta_disc:.4e}, "
              f"bound {state['bound']:.4e}")
        if config.write_vtk:
            u = state["u"]
            displacement = u.reshape(-1, 2)[:mesh.nv]
            local = state["local"]
            fields = state["fields"]
            cell_fields = {
                "tr_strain": fields["tr_strain"],
                "eta_disc": local.disc,
                "eta_lin": local.lin,
                "eta_quad": local.quad,
                "eta_osc": local.osc,
                "sigma_xx": fields["stress"][:, 0],
                "sigma_yy": fields["stress"][:, 1],
                "sigma_xy": fields["stress"][:, 2],
            }
            write_vtk(out_dir / f"mesh_{loop:03d}.vtk", mesh,
                      displacement, cell_fields)

    case, law, adaptive, mesh = (config.case, config.law,
                                 config.adaptive, config.mesh)
    if config.mode in ("single_solve", "adaptive_study"):
        log, state = run_adaptive(case, law, adaptive, mesh,
                                  callback=snapshot)
        return {"run.csv": log}, state
    if config.mode == "uniform_study":
        log, state = uniform_study(case, law, adaptive, mesh,
                                   callback=snapshot)
        return {"run.csv": log}, state
    log_norm, log_adap = compare_stopping(case, law, adaptive, mesh,
                                          callback=snapshot)
    return {"run.csv": log_adap, "run_normal.csv": log_norm}, \
        holder["state"]


def main(argv=None):
    args = _parse_args(argv)
    threads = 1 if args.deterministic else args.threads
    if threads is not None:
        for var in _THREAD_VARS:
            os.environ[var] = str(threads)

    from .errors import ConfigurationError, SolverError
    try:
        config = RunConfig(args.config, out_override=args.out,
                           deterministic=args.deterministic)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    from .io import write_run_csv, write_summary
    config.out_dir.mkdir(parents=True, exist_ok=True)
    try:
        logs, state = _execute(config)
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        for record in exc.history[-5:]:
            print(f"  loop={record.loop} k={record.k} nu={record.nu} "
                  f"residual={record.newton_residual:.3e}",
                  file=sys.stderr)
        return 3
    except Exception:
        dump = config.out_dir / "diagnostic.txt"
        with open(dump, "w") as fh:
            fh.write(traceback.format_exc())
        print(f"internal error, diagnostic dump in {dump}",
              file=sys.stderr)
        traceback.print_exc()
        return 4

    for name, log in logs.items():
        write_run_csv(config.out_dir / name, log)
    if config.write_summary:
        title = (f"{config.mode}: {config.case_name} / {config.law_name} "
                 f"({state['mesh'].nc} cells final)")
        write_summary(config.out_dir / "summary.txt", title,
                      config.echo(), logs["run.csv"], state)
    print(f"wrote {', '.join(sorted(logs))} to {config.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
