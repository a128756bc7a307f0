"""Command-line driver: ``ivrepr <command> --config <file> [--out <dir>]``.

Exit codes: 0 success, 2 invalid config, 3 numerical failure, 4 a ``verify``
check exceeded its tolerance.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
from pathlib import Path
import sys
import warnings

from . import __version__
from .bs import implied_vol
from .config import ScenarioConfig, canonical_json, load_config, sha256_hex
from .density import SpaceTimeGrid, call_price_from_density, solve_forward_density
from .errors import ConfigError, ImpliedVolDomainError, NumericalError
from .forward_vol import build_curve, write_columns
from .mlp import MlpReport, extract_path, mlp_implied_variance
from .representation import verify_representation
from .switching import SwitchSpec, forward_implied_vol_mc, price_switched_call, switch_sample

log = logging.getLogger("ivrepr")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_TOLERANCE = 0, 2, 3, 4
COMMANDS = ("price", "curve", "verify", "mlp", "switch")


class _Run:
    """Shared state for one invocation: config, output root and density cache."""

    def __init__(self, command: str, cfg: ScenarioConfig, out: Path):
        self.command = command
        self.cfg = cfg
        self.out = out
        self._densities = {}
        self.embedded = {k: v for k, v in cfg.resolved.items() if k != "output_dir"}

    def header_lines(self):
        return [f"ivrepr {__version__} {self.command}",
                f"config_sha256: {self.cfg.hash}",
                f"config: {canonical_json(self.embedded)}"]

    def call_dir(self, call) -> Path:
        if len(self.cfg.calls) == 1:
            d = self.out
        else:
            d = self.out / f"K{call.strike:g}_T{call.maturity:g}"
        d.mkdir(parents=True, exist_ok=True)
        return d

    def density(self, maturity: float):
        if maturity not in self._densities:
            g = self.cfg.grid
            grid = SpaceTimeGrid.for_surface(self.cfg.surface, self.cfg.spot, maturity,
                                             g["time_steps"], g["space_nodes"], g["width"])
            log.info("solving density to T=%g on %dx%d grid", maturity, g["time_steps"],
                     g["space_nodes"])
            self._densities[maturity] = solve_forward_density(
                self.cfg.surface, self.cfg.spot, grid, max_leak=g["max_leak"])
        return self._densities[maturity]

    def report(self, call):
        return verify_representation(self.cfg.surface, self.cfg.spot, call,
                                     density=self.density(call.maturity),
                                     tolerances=self.cfg.tolerances)

    def write_json(self, path: Path, results):
        payload = {
            "ivrepr_version": __version__,
            "command": self.command,
            "config_sha256": self.cfg.hash,
            "config": self.embedded,
            "results": results,
        }
        payload["results_sha256"] = sha256_hex(canonical_json(results))
        path.write_text(json.dumps(payload, indent=2, allow_nan=False) + "\n")


def _cmd_price(run: _Run) -> int:
    strikes, maturities, prices, vols = [], [], [], []
    for call in run.cfg.calls:
        price = call_price_from_density(run.density(call.maturity), call.maturity, call)
        try:
            iv = implied_vol(price, run.cfg.spot, call.maturity, call.strike)
        except ImpliedVolDomainError as exc:
            log.warning("K=%g T=%g: %s", call.strike, call.maturity, exc)
            iv = math.nan
        strikes.append(call.strike)
        maturities.append(call.maturity)
        prices.append(price)
        vols.append(iv)
    run.out.mkdir(parents=True, exist_ok=True)
    write_columns(run.out / "prices.csv", {"strike": strikes, "maturity": maturities,
                                           "price": prices, "implied_vol": vols},
                  run.header_lines())
    return EXIT_OK


def _cmd_curve(run: _Run) -> int:
    for call in run.cfg.calls:
        rep = run.report(call)
        d = run.call_dir(call)
        rep.curve.to_csv(d / "curve.csv", run.header_lines())
        write_columns(d / "variance.csv", {"t": rep.times, "v_fd": rep.v_fd, "v_gt": rep.v_gt},
                      run.header_lines())
    return EXIT_OK


def _cmd_verify(run: _Run) -> int:
    ok = True
    for call in run.cfg.calls:
        rep = run.report(call)
        d = run.call_dir(call)
        rep.to_csv(d / "representation.csv", run.header_lines())
        run.write_json(d / "report.json", rep.to_dict())
        for name, c in rep.checks.items():
            if not c.passed:
                log.error("K=%g T=%g: check %s failed (%.3e > %.3e)", call.strike,
                          call.maturity, name, c.value, c.tolerance)
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_TOLERANCE


def _cmd_mlp(run: _Run) -> int:
    for call in run.cfg.calls:
        rep = run.report(call)
        path = extract_path(rep.weights)
        mlp = MlpReport(rep.sigma2_imp, mlp_implied_variance(path, run.cfg.surface))
        log.info("K=%g T=%g: most-likely-path variance %.8g vs exact %.8g (rel %.3e)",
                 call.strike, call.maturity, mlp.sigma2_mlp, mlp.sigma2_exact, mlp.rel_error)
        d = run.call_dir(call)
        path.to_csv(d / "mlp.csv", run.header_lines())
        run.write_json(d / "report.json", {"strike": call.strike, "maturity": call.maturity,
                                           **mlp.to_dict()})
    return EXIT_OK


def _cmd_switch(run: _Run) -> int:
    mc = run.cfg.mc
    samples = {}  # calls with the same maturity share one simulation
    for call in run.cfg.calls:
        density = run.density(call.maturity)
        curve = build_curve(density, call)
        m_steps = density.grid.time_steps
        idx = [round(f * m_steps) for f in run.cfg.tau_fractions]
        taus = [float(curve.times[i]) for i in idx]
        if call.maturity not in samples:
            samples[call.maturity] = switch_sample(run.cfg.surface, run.cfg.spot, taus,
                                                   mc["paths"], mc["steps"], mc["seed"],
                                                   workers=mc["workers"])
        sample = samples[call.maturity]
        rows = []
        for i, tau in zip(idx, taus):
            sig = float(curve.sigma_bar[i])
            price, se = price_switched_call(SwitchSpec(tau, sig, run.cfg.surface), run.cfg.spot,
                                            call, sample=sample)
            fv = forward_implied_vol_mc(run.cfg.surface, run.cfg.spot, call, tau, curve.target,
                                        sample=sample)
            z = (price - curve.target) / se if se > 0 else 0.0
            rows.append({"tau": tau, "sigma_bar_pde": sig, "switched_price": price,
                         "price_stderr": se, "z_score": z, "within_3_stderr": bool(abs(z) <= 3.0),
                         "sigma_bar_mc": fv.sigma, "sigma_bar_mc_stderr": fv.stderr})
            log.info("K=%g tau=%g: z=%.3f sigma_bar pde %.8f mc %.8f +/- %.1e", call.strike,
                     tau, z, sig, fv.sigma, fv.stderr)
        d = run.call_dir(call)
        run.write_json(d / "report.json", {"strike": call.strike, "maturity": call.maturity,
                                           "target_price": curve.target, "paths": mc["paths"],
                                           "steps": mc["steps"], "seed": mc["seed"],
                                           "switches": rows})
    return EXIT_OK


_HANDLERS = {"price": _cmd_price, "curve": _cmd_curve, "verify": _cmd_verify,
             "mlp": _cmd_mlp, "switch": _cmd_switch}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ivrepr", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="scenario JSON file")
    p.add_argument("--out", help="output directory (overrides output_dir in the config)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"ivrepr: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.output_dir or "ivrepr-out")
    run = _Run(args.command, cfg, out)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            logging.captureWarnings(True)
            return _HANDLERS[args.command](run)
    except NumericalError as exc:
        print(f"ivrepr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    finally:
        logging.captureWarnings(False)


if __name__ == "__main__":
    sys.exit(main())
