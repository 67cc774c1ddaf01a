"""Command-line entry point.

Exit codes: 0 PASS or success, 1 FAIL, 2 INCONCLUSIVE, 3 usage, config or I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from . import certify as cert_mod
from . import chainrec as cr
from . import config as K
from . import geometry as geo
from . import plotting
from .dynamics import CascadeDef, unforced_outer
from .equilibria import cascade_block_structure, find_equilibria
from .errors import CascadeCertError, DivergenceError, InputError, NumericError, ResourceError
from .integrate import flow
from .systems import EXAMPLES
from .verdicts import Verdict, jsonable

log = logging.getLogger("cascadecert")

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 3
VERDICT_EXIT = {Verdict.PASS: EXIT_PASS, Verdict.FAIL: EXIT_FAIL, Verdict.INCONCLUSIVE: EXIT_INCONCLUSIVE}
COMMANDS = ("simulate", "equilibria", "chainrec", "basin", "certify")


class UsageError(CascadeCertError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _value(text: str):
    """Override value: JSON if it parses, else a comma-separated list of numbers, else a string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if "," in text:
        try:
            return [float(v) for v in text.split(",")]
        except ValueError:
            raise argparse.ArgumentTypeError(f"cannot parse {text!r}") from None
    return text


def _point(text: str) -> list:
    v = _value(text)
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list):
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cascadecert", allow_abbrev=False,
                description="Numerical evidence for almost-global stability of cascade systems.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd, allow_abbrev=False, help=f"run {cmd}")
        sp.add_argument("system", nargs="?", help="built-in example name (see list-examples)")
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="64-bit seed for all random streams")
        for key in K.block_keys(K.BLOCKS[cmd]):
            if key == "from":
                sp.add_argument("--from", dest="ov_from", action="append", type=_point, metavar="X1,X2,...",
                                help="initial condition (repeatable)")
                continue
            flags = ["--" + key.replace("_", "-")]
            if key == "epsilon":
                flags.append("--eps")
            sp.add_argument(*flags, dest="ov_" + key, type=_value, metavar="VALUE",
                            help=f"override {cmd}.{key}")
    sub.add_parser("list-examples", help="list built-in systems")
    return p


def write_atomic(path: Path, data) -> None:
    """Write via a temporary file in the same directory and rename into place."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    rows = np.asarray(rows, dtype=float).reshape(-1, len(header))
    np.savetxt(buf, rows, fmt="%.17g", delimiter=",", header=",".join(header), comments="")
    return buf.getvalue()


def trajectory_csv(times, points) -> str:
    points = np.asarray(points)
    header = ["t"] + [f"coord_{i}" for i in range(points.shape[-1])]
    return csv_text(header, np.column_stack([times, points]) if len(points) else [])


class Runner:
    def __init__(self, cfg: K.RunConfig, out: Path, stdout=None):
        self.cfg = cfg
        self.out = out
        self.stdout = stdout or sys.stdout
        self.system = K.build_system(cfg)
        self.names = K.variable_names(cfg)

    def say(self, msg: str):
        print(msg, file=self.stdout)

    def write(self, name: str, data):
        write_atomic(self.out / name, data)

    @property
    def full(self):
        return self.system.full if isinstance(self.system, CascadeDef) else self.system

    def run(self, cmd: str) -> int:
        axes = getattr(getattr(self.cfg, cmd), "axes", None)
        if axes is not None:
            space = self.full.space
            if cmd == "chainrec" and isinstance(self.system, CascadeDef):
                space = self.system.outer_space
            elif cmd == "certify" and not isinstance(self.system, CascadeDef):
                raise InputError("certify needs a cascade system")
            plotting.check_axes(space, axes, allow_time=cmd != "chainrec")
        self.write("config.json", K.serialize(self.cfg) + "\n")
        return getattr(self, cmd)()

    def simulate(self) -> int:
        c = self.cfg.simulate
        sys_ = self.full
        starts = c.from_
        if starts is None:
            raise InputError("no initial condition: pass --from or set simulate.from")
        trajs = []
        status = EXIT_PASS
        for i, p in enumerate(starts):
            try:
                tr = flow(sys_, p, c.t, c.tol, n_samples=c.samples)
            except DivergenceError as exc:
                self.say(f"trajectory_{i}: diverged at t={exc.last_time:.6g}")
                status = EXIT_FAIL
                continue
            self.write(f"trajectory_{i}.csv", trajectory_csv(tr.times, tr.points))
            trajs.append((tr.times, tr.points))
            final = ",".join(f"{v:.6g}" for v in tr.final)
            self.say(f"trajectory_{i}.csv: t_end={c.t:g} steps={tr.steps} final=[{final}]")
        target = np.zeros(sys_.space.dim)
        self.write("trajectory.svg", plotting.trajectory_svg(sys_.space, trajs, c.axes, self.names,
                                                             "trajectories", target))
        return status

    def equilibria(self) -> int:
        c = self.cfg.equilibria
        sys_ = self.full
        region = K.region(c.region, sys_.space)
        eqs = find_equilibria(sys_, region, c.grid_per_dim, c.newton_tol, c.hyp_tol)
        doc = {"system": sys_.name, "region": region.to_json(), "parameters": dataclasses.asdict(c),
               "equilibria": [r.to_json() for r in eqs]}
        if isinstance(self.system, CascadeDef):
            cas = self.system
            on_slice = [r for r in eqs
                        if geo.dist(cas.inner_space, cas.split(r.point)[1], cas.inner_equilibrium) < 1e-8]
            doc["block_structure"] = [cascade_block_structure(cas, r.point, c.hyp_tol).to_json()
                                      for r in on_slice]
        self.write("equilibria.json", dump_json(doc))
        for r in eqs:
            pt = ",".join(f"{v:.10g}" for v in r.point)
            self.say(f"[{pt}]  {r.classification}  residual={r.residual:.2e}")
        self.say(f"{len(eqs)} equilibria")
        return EXIT_PASS

    def chainrec(self) -> int:
        c = self.cfg.chainrec
        sys_ = self.system
        V = K.build_lyapunov(self.cfg)
        if isinstance(sys_, CascadeDef):
            self.say("cascade selected: analysing the unforced outer loop")
            sys_ = unforced_outer(sys_)
            names = self.names[:sys_.space.dim]
        else:
            names = self.names
        region = K.region(c.region, sys_.space)
        eqs = find_equilibria(sys_, region)
        run = cr.subdivide(sys_, region, c.depth, c.rounds, c.T, c.epsilon, c.samples_per_box, c.tol, eqs)
        chk = cr.check_R_equals_E(run.approx, run.cover, eqs)
        doc = {"system": sys_.name, "region": region.to_json(), "parameters": dataclasses.asdict(c),
               "rounds": [{"depth": cov.depth, "boxes": len(cov), "recurrent": len(a), "eps": a.eps, "T": a.T,
                           "edges": int(len(g.src))}
                          for cov, a, g in zip(run.covers, run.approxes, run.graphs)],
               "equilibria": [r.to_json() for r in eqs], "R_equals_E": chk.to_json()}
        if V is not None:
            doc["localization"] = cr.localization_check(run.approx, run.cover, V, eqs).to_json()
        self.write("chainrec.json", dump_json(doc))
        cov, approx = run.cover, run.approx
        ids = approx.recurrent
        rows = np.column_stack([ids, np.full(len(ids), cov.depth), cov.centers[ids],
                                np.broadcast_to(cov.half_widths, (len(ids), cov.space.dim)),
                                approx.component[ids] if len(ids) else np.empty(0)])
        header = (["box", "depth"] + [f"center_{i}" for i in range(cov.space.dim)]
                  + [f"half_width_{i}" for i in range(cov.space.dim)] + ["component"])
        self.write("recurrent_boxes.csv", csv_text(header, rows))
        self.write("recurrent_boxes.svg", plotting.boxes_svg(
            cov.space, cov.centers[ids], cov.half_widths, c.axes, names, "recurrent boxes",
            [r.point for r in eqs]))
        self.say(f"{len(ids)} recurrent boxes at depth {cov.depth} (T={approx.T:g}, eps={approx.eps:.4g}); "
                 f"R = E check: {chk.verdict.value}")
        return VERDICT_EXIT[chk.verdict]

    def basin(self) -> int:
        c = self.cfg.basin
        sys_ = self.full
        region = K.region(c.region, sys_.space)
        target = np.zeros(sys_.space.dim) if c.target is None else np.asarray(c.target, dtype=float)
        est = cert_mod.monte_carlo_basin(sys_, target, region, c.n, c.horizon, c.conv_tol,
                                         self.cfg.seed, c.tol)
        verdict = Verdict.PASS if est.fraction >= c.threshold else Verdict.FAIL
        doc = {"system": sys_.name, "region": region.to_json(), "seed": self.cfg.seed,
               "parameters": dataclasses.asdict(c), "estimate": est.to_json(), "verdict": verdict.value}
        self.write("basin.json", dump_json(doc))
        self.write("basin.svg", plotting.basin_svg(sys_.space, est.starts, est.labels == cert_mod.CONVERGED,
                                                   c.axes, self.names, "basin samples", target))
        self.say(f"fraction={est.fraction:.6f} wilson_lower_95={est.wilson_lower:.6f} "
                 f"n={est.n_samples} threshold={c.threshold:g}: {verdict.value}")
        return VERDICT_EXIT[verdict]

    def certify(self) -> int:
        cas = self.system
        if not isinstance(cas, CascadeDef):
            raise InputError("certify needs a cascade system")
        cert = K.build_certificate(self.cfg, cas)
        if cert is None:
            raise InputError("certify needs a growth certificate: set the certificate block")
        V = K.build_lyapunov(self.cfg) or cert.W
        c = self.cfg.certify
        params = dataclasses.replace(c.params, seed=self.cfg.seed)
        report = cert_mod.certify_cascade(
            cas, V, cert,
            inner_region=K.region(c.inner_region, cas.inner_space),
            outer_region=K.region(c.outer_region, cas.outer_space),
            outer_equilibrium_region=K.region(c.outer_equilibrium_region, cas.outer_space),
            chain_region=K.region(c.chain_region, cas.outer_space),
            cascade_region=K.region(c.cascade_region, cas.space),
            params=params, outer_target=c.outer_target)
        self.write("report.json", dump_json(report.to_json()))
        rows = report.witness_rows()
        width = max([len(r[2]) for r in rows], default=0)
        lines = [",".join(["condition", "kind"] + [f"coord_{i}" for i in range(width)])]
        for cond, kind, coords in rows:
            lines.append(",".join([cond, kind] + [f"{float(v):.17g}" for v in coords]))
        self.write("witnesses.csv", "\n".join(lines) + "\n")
        if params.extra_initial_conditions:
            trajs = []
            for p in params.extra_initial_conditions:
                try:
                    tr = flow(cas.full, p, params.comparison_horizon, params.comparison_tol)
                    trajs.append((tr.times, tr.points))
                except NumericError:
                    continue
            axes = c.axes or [0, cas.outer_space.dim]
            self.write("certify_trajectories.svg", plotting.trajectory_svg(
                cas.space, trajs, axes, self.names, "reference trajectories", np.zeros(cas.space.dim)))
        for e in report.entries:
            self.say(f"{e.condition}: {e.verdict.value}")
        self.say(f"overall: {report.overall.value}")
        return VERDICT_EXIT[report.overall]


def list_examples(stdout) -> int:
    for name, ex in EXAMPLES.items():
        kind = "cascade" if ex.certificate is not None else "system"
        print(f"{name}\t{kind}\t{ex.description}", file=stdout)
    return EXIT_PASS


def raw_config(args) -> dict:
    raw: dict = {}
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise K.ConfigError("$", f"invalid JSON in {args.config}: {exc}") from None
        if not isinstance(raw, dict):
            raise K.ConfigError("$", "top level must be an object")
    if args.system:
        raw["system"] = args.system
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out:
        raw["output"] = args.out
    block = dict(raw.get(args.command) or {})
    for key, value in vars(args).items():
        if key.startswith("ov_") and value is not None:
            block[key[3:]] = value
    if block:
        raw[args.command] = block
    return raw


def main(argv: Optional[list] = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-examples":
        return list_examples(stdout)
    try:
        cfg = K.parse_config(raw_config(args))
        runner = Runner(cfg, Path(cfg.output), stdout)
        return runner.run(args.command)
    except (InputError, ResourceError, NumericError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
