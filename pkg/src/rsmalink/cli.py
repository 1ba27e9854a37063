"""Command-line entry point: ``rsmalink {run, calibrate, bounds, selftest}``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from .amc import BackoffTable
from .precoder import SCHEMES
from .sim import CampaignConfig, calibrate_backoff, run_campaign, shannon_bounds

logger = logging.getLogger("rsmalink")

SEED_ENV = "RSMALINK_SEED"
COLUMNS = (
    "scheme", "snr_db", "throughput_bps_hz", "esr_bound", "tp_common", "tp_private1",
    "tp_private2", "bler_common", "bler_p1", "bler_p2", "infeasible_count",
)
BOUND_COLUMNS = ("scheme", "snr_db", "esr_bound", "esr_se")
DEFAULTS = {
    "scheme": "rsma",
    "snr": "5:5:35",
    "alpha": 0.6,
    "qos": 0.0,
    "S": 256,
    "trials": 200,
    "saa_samples": 200,
    "beta": 0.9,
    "seed": 0,
    "list_size": 8,
    "backoff": None,
}


class ConfigError(ValueError):
    pass


def parse_snr_grid(text):
    """``"start:step:stop"`` (inclusive), a single value, or a comma list."""
    text = str(text).strip()
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise ValueError
            start, step, stop = parts
            if step <= 0 or stop < start:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return tuple(float(np.round(start + i * step, 10)) for i in range(n))
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"snr: expected 'start:step:stop' or a comma list, got {text!r}") from None


def parse_schemes(text):
    names = [s.strip().lower() for s in str(text).split(",") if s.strip()]
    if names == ["all"]:
        return SCHEMES
    bad = [s for s in names if s not in SCHEMES]
    if bad or not names:
        raise ConfigError(f"scheme: {', '.join(bad) or text!r} is not valid; valid schemes are {', '.join(SCHEMES)}")
    return tuple(names)


@dataclass
class RunSpec:
    """Fully resolved command settings."""

    schemes: tuple
    snr_db: tuple
    alpha: float
    qos: float
    S: int
    trials: int
    saa_samples: int
    beta: float
    seed: int
    list_size: int
    backoff: str
    output: str = None
    fmt: str = "csv"
    verbosity: int = 0
    jobs: int = 1

    def config(self, scheme, table=None, **overrides):
        kwargs = dict(
            scheme=scheme, snr_db=self.snr_db, alpha=self.alpha, qos_rate=self.qos, S=self.S,
            trials=self.trials, saa_samples=self.saa_samples, beta=self.beta, seed=self.seed,
            list_size=self.list_size, backoff=table,
        )
        kwargs.update(overrides)
        return CampaignConfig(**kwargs)


def _load_config_file(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be an object")
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"config: unknown key(s) {', '.join(unknown)}; allowed: {', '.join(DEFAULTS)}")
    return data


def parse_config(args):
    """Merge defaults, the optional config file, the seed variable and flags."""
    values = dict(DEFAULTS)
    if os.environ.get(SEED_ENV):
        values["seed"] = os.environ[SEED_ENV]
    if getattr(args, "config", None):
        values.update(_load_config_file(args.config))
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag

    def number(key, cast, check, what):
        try:
            v = cast(values[key])
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected {what}, got {values[key]!r}") from None
        if not check(v):
            raise ConfigError(f"{key}: expected {what}, got {values[key]!r}")
        return v

    def integer(v):
        if isinstance(v, float) and not v.is_integer():
            raise ValueError
        return int(v)

    return RunSpec(
        schemes=parse_schemes(values["scheme"]),
        snr_db=parse_snr_grid(values["snr"]) if not isinstance(values["snr"], list)
        else tuple(float(v) for v in values["snr"]),
        alpha=number("alpha", float, lambda v: v >= 0, "a number >= 0 (inf for perfect CSIT)"),
        qos=number("qos", float, lambda v: math.isfinite(v) and v >= 0, "a rate >= 0"),
        S=number("S", integer, lambda v: v > 0, "a positive integer"),
        trials=number("trials", integer, lambda v: v > 0, "a positive integer"),
        saa_samples=number("saa_samples", integer, lambda v: v > 0, "a positive integer"),
        beta=number("beta", float, lambda v: 0 < v <= 1, "a code rate in (0, 1]"),
        seed=number("seed", integer, lambda v: v >= 0, "a non-negative integer"),
        list_size=number("list_size", integer, lambda v: v > 0, "a positive integer"),
        backoff=values["backoff"],
        output=getattr(args, "output", None),
        fmt=getattr(args, "format", "csv") or "csv",
        verbosity=getattr(args, "verbose", 0) or 0,
        jobs=getattr(args, "jobs", 1) or 1,
    )


def _load_table(spec):
    if spec.backoff is None:
        return BackoffTable.default()
    try:
        return BackoffTable.from_csv(spec.backoff)
    except OSError as exc:
        raise ConfigError(f"backoff: cannot read {spec.backoff}: {exc.strerror}") from None
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"backoff: {exc}") from None


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, np.generic):
        return v.item()
    return v


def emit_rows(rows, columns, path=None, fmt="csv"):
    """Write rows as CSV or JSON to ``path`` (stdout when ``None``)."""
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format: expected csv or json, got {fmt!r}")
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        if fmt == "csv":
            writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({c: (repr(float(row[c])) if isinstance(row[c], float) else row[c]) for c in columns})
        else:
            json.dump([{c: _json_value(row[c]) for c in columns} for row in rows], fh, indent=2)
            fh.write("\n")
    finally:
        if fh is not sys.stdout:
            fh.close()


def read_rows(path, fmt="csv"):
    """Parse a file written by :func:`emit_rows` back into typed rows."""
    with open(path, newline="") as fh:
        if fmt == "json":
            rows = json.load(fh)
            return [{k: (float("nan") if v is None else v) for k, v in r.items()} for r in rows]
        out = []
        for r in csv.DictReader(fh):
            row = {}
            for k, v in r.items():
                if k == "scheme":
                    row[k] = v
                elif k == "infeasible_count":
                    row[k] = int(v)
                else:
                    row[k] = float(v)
            out.append(row)
        return out


def cmd_run(spec):
    table = _load_table(spec)
    rows = []
    for scheme in spec.schemes:
        res = run_campaign(spec.config(scheme, table), n_jobs=spec.jobs)
        rows.extend(res.rows())
    emit_rows(rows, COLUMNS, spec.output, spec.fmt)
    return 0


def cmd_bounds(spec):
    rows = []
    for scheme in spec.schemes:
        cfg = spec.config(scheme, BackoffTable())
        esr, se = shannon_bounds(cfg)
        for snr, e, s in zip(cfg.snr_db, esr, se):
            rows.append({"scheme": scheme, "snr_db": snr, "esr_bound": float(e), "esr_se": float(s)})
    emit_rows(rows, BOUND_COLUMNS, spec.output, spec.fmt)
    return 0


def cmd_calibrate(spec, grid, target):
    table = BackoffTable()
    if spec.backoff is not None and os.path.exists(spec.backoff):
        table = _load_table(spec)
    for scheme in spec.schemes:
        _, summary = calibrate_backoff(spec.config(scheme, table), grid=grid, target=target, table=table)
        for cp in summary:
            logger.info("%s %.1f dB: common %.1f dB, private %.1f dB, BLER %s%s", scheme, cp.snr_db,
                        cp.backoff_common_db, cp.backoff_private_db,
                        ", ".join(f"{b:.3f}" for b in cp.bler), " (flagged)" if cp.flagged else "")
    if spec.output in (None, "-"):
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(["scheme", "snr_db", "stream", "backoff_db"])
        for r in table.rows():
            writer.writerow([r["scheme"], r["snr_db"], r["stream"], r["backoff_db"]])
    else:
        table.to_csv(spec.output)
    return 0


def selftest(list_size=8):
    """Noiseless round-trips for every scheme and alphabet; returns failures."""
    from .amc import select_mcs, McsDecision
    from .transceiver import merge_messages, receive_sic, split_payload, stream_chains, transmit

    failures = []
    rng = np.random.default_rng(0)
    H = np.eye(2, dtype=np.complex128)
    # strong common stream on top of two orthogonal private beams
    P = np.array([[1e4, 1e2, 0], [1e4, 0, 1e2]], dtype=np.complex128)
    for scheme in SCHEMES:
        for rate in (1.5, 3.0, 5.0, 7.2):
            mcs = select_mcs(rate, 0.9, 256)
            off = select_mcs(0, 0.9, 256)
            streams = {"rsma": (mcs, mcs, mcs), "sdma": (off, mcs, mcs), "noma": (mcs, off, mcs)}[scheme]
            decision = McsDecision(*streams)
            chains = stream_chains(decision, [1, 2, 3])
            shares = (0.0, 1.0) if scheme == "noma" else (1.0, 1.0)
            msg = split_payload(shares, chains, rng)
            block = transmit(msg, P, chains)
            for k in range(2):
                res = receive_sic(np.conj(H[:, k]) @ block.x, H[:, k], P, chains, k, list_size)
                want = sum(len(w) for w, ch in ((msg.w_c1 if k == 0 else msg.w_c2, chains[0]),
                                                 (msg.w_p1 if k == 0 else msg.w_p2, chains[1 + k])) if ch.enabled)
                if merge_messages(res, msg, k) != want:
                    failures.append((scheme, mcs.order, k))
    return failures


def cmd_selftest(spec):
    failures = selftest(spec.list_size)
    for f in failures:
        print(f"FAIL {f[0]} {f[1]}-QAM user {f[2] + 1}")
    print("selftest " + ("passed" if not failures else f"failed ({len(failures)})"))
    return 0 if not failures else 2


def build_parser():
    parser = argparse.ArgumentParser(prog="rsmalink", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with default settings")
        p.add_argument("--scheme", help="rsma, sdma, noma, a comma list, or all")
        p.add_argument("--snr", help="SNR grid in dB, start:step:stop")
        p.add_argument("--alpha", help="CSIT exponent (inf = perfect CSIT)")
        p.add_argument("--qos", help="minimum rate per user in bps/Hz")
        p.add_argument("--S", dest="S", help="symbols per block")
        p.add_argument("--trials", help="trials per SNR point")
        p.add_argument("--saa-samples", dest="saa_samples", help="SAA realizations per estimate")
        p.add_argument("--beta", help="maximum code rate")
        p.add_argument("--seed", help=f"master seed (default from ${SEED_ENV} or 0)")
        p.add_argument("--list-size", dest="list_size", help="SCL list size")
        p.add_argument("--backoff", help="back-off table CSV")
        p.add_argument("-o", "--output", help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("-v", "--verbose", action="count", default=0)

    for name, text in (("run", "full link-level campaign"), ("calibrate", "back-off table generation"),
                       ("bounds", "ergodic sum-rate bounds only"), ("selftest", "noiseless round-trips")):
        p = sub.add_parser(name, help=text)
        common(p)
        if name == "calibrate":
            p.add_argument("--grid", default="0:0.5:20", help="candidate back-offs in dB, start:step:stop")
            p.add_argument("--target", type=float, default=0.1, help="BLER target")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    for noisy in ("numba",):
        logging.getLogger(noisy).setLevel(logging.WARNING)
    try:
        spec = parse_config(args)
        if args.command == "run":
            return cmd_run(spec)
        if args.command == "bounds":
            return cmd_bounds(spec)
        if args.command == "calibrate":
            return cmd_calibrate(spec, parse_snr_grid(args.grid), args.target)
        return cmd_selftest(spec)
    except ConfigError as exc:
        print(f"rsmalink: configuration error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # runtime failures map to exit code 2
        logger.debug("runtime failure", exc_info=True)
        print(f"rsmalink: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
