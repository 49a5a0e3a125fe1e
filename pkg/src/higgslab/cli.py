"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import sys

from .config import parse_config
from .errors import ConfigError, HiggsLabError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="higgslab", description="Lattice experiments for Higgs bundles and their limits.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve for the metric of one Higgs pair")
    s.add_argument("--config", required=True, help="run configuration (JSON)")
    s.add_argument("--out", required=True, help="run directory to create or overwrite")

    s = sub.add_parser("sweep", help="scaling sweep t*phi with decay fits")
    s.add_argument("--config", required=True, help="run configuration (JSON)")
    s.add_argument("--out", required=True, help="run directory to create or overwrite")

    s = sub.add_parser("extract-z2", help="Z2 one-form from the endpoint of a solve or sweep run")
    s.add_argument("--run", required=True, help="directory of a finished solve or sweep run")
    s.add_argument("--out", required=True, help="directory for the Z2 report and v.fld")

    s = sub.add_parser("check-identities", help="lattice, curvature and gauge identity suite; prints JSON")
    s.add_argument("--config", required=True, help="run configuration (JSON); only domain and seed are used")
    s.add_argument("--out", help="also write report.json and manifest.json here")

    s = sub.add_parser("matrix-lemmas", help="random-matrix lemma suite against the frozen constants; prints JSON")
    s.add_argument("--samples", type=int, default=1_000_000, help="random samples per rank (default 1e6)")
    s.add_argument("--rank", type=int, choices=(2, 3), action="append", help="rank to test; repeatable (default 2 and 3)")
    s.add_argument("--seed", type=int, default=0, help="seed of the sample stream (default 0)")
    s.add_argument("--out", help="also write report.json and manifest.json here")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    from . import runner
    try:
        if args.command == "solve":
            report, _ = runner.run_solve(parse_config(args.config), args.out)
            print(runner.dumps(report["solve"]), end="")
            return EXIT_OK if report["solve"]["converged"] else EXIT_NUMERICAL
        if args.command == "sweep":
            report, _ = runner.run_sweep(parse_config(args.config), args.out)
            print(runner.dumps(report["checks"]), end="")
            return EXIT_OK
        if args.command == "extract-z2":
            report, _ = runner.run_extract_z2(args.run, args.out)
            keys = ("degenerate", "z2", "harmonicity", "p2_defect", "monodromy")
            print(runner.dumps({k: report[k] for k in keys if k in report}), end="")
            return EXIT_OK
        if args.command == "check-identities":
            report = runner.run_check_identities(parse_config(args.config), args.out)
            print(runner.dumps(report), end="")
            return EXIT_OK if report["pass"] else EXIT_NUMERICAL
        if args.command == "matrix-lemmas":
            if args.samples < 1:
                raise ConfigError("--samples", "must be positive")
            ranks = args.rank or [2, 3]
            reports = [runner.run_matrix_lemmas(args.samples, r, args.seed) for r in ranks]
            if args.out:
                run = runner.Run(args.out, "matrix-lemmas")
                run.write_json("report.json", {"results": reports})
                run.write_manifest()
            print(runner.dumps({"results": reports}), end="")
            return EXIT_OK if all(r["pass"] for r in reports) else EXIT_NUMERICAL
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HiggsLabError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
