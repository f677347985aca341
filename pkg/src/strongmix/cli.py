"""``strongmix build | sample | verify``.

Exit codes: 0 all pass, 1 any fail, 2 inconclusive without fail, 64 usage or
config error.  Reports are JSON documents; curves and samples are CSV.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import rng as rngmod
from .config import ConfigError, ExperimentConfig, resolve
from .construction import EXACT, BuildError, MeasureModel, phi_batch
from .symbolic import k_measure_lower_bound
from .verify import (
    FAIL, INCONCLUSIVE, PASS, ModeMismatch, random_ball_events, test_full_support, test_invariance,
    test_mixing, test_visit_density, check_exactness_structure, worst_verdict,
)

EXIT = {PASS: 0, FAIL: 1, INCONCLUSIVE: 2}
EXIT_USAGE = 64
TESTS = ("invariance", "mixing", "support", "density", "exactness")
HEAD = 8


class UsageError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


# ---------------------------------------------------------------------------
# commands (pure: return documents, never touch the filesystem)


def cmd_build(cfg: ExperimentConfig) -> tuple[MeasureModel, dict]:
    model = cfg.build()
    k = k_measure_lower_bound(model.weights, model.profile, model.depth)
    doc = {
        "config": cfg.to_dict(),
        "fingerprint": model.fingerprint,
        "model": model.summary(),
        "k_measure_lower_bound": {"partial": k.partial, "tail_factor": k.tail_factor, "bound": k.lower_bound},
        "truncation_error": {str(L): model.truncation_error(L) for L in range(1, model.depth + 1)},
        "tail_admissible_probability": model.tail_admissible_probability(cfg.level),
    }
    return model, doc


def sample_table(model: MeasureModel, cfg: ExperimentConfig, count: int) -> str:
    L = cfg.level
    lo_head = 1 if model.side == "unilateral" else -(HEAD // 2 - 1)
    head = list(range(lo_head, lo_head + HEAD))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index"] + [f"x_{k}" for k in head] + ["f_norm", "truncation_error"])
    if count > 0:
        g = rngmod.stream(cfg.seed, "sample")
        lo, hi = model.required_window(L)
        block = model.weights.draw(g, (count, hi - lo + 1))
        coords, vals = phi_batch(model, block, lo, L, extra_coords=tuple(head))
        norms = model.space.norm_rows(vals, coords)
        cols = [k - coords[0] for k in head]
        err = model.truncation_error(L)
        for i in range(count):
            w.writerow([i] + [repr(float(vals[i, c])) for c in cols] + [repr(float(norms[i])), repr(err)])
    return buf.getvalue()


def cmd_verify(cfg: ExperimentConfig, tests) -> tuple[dict, dict]:
    """Returns ``(documents by file name, combined summary)``."""
    tests = list(tests)
    bad = [t for t in tests if t not in TESTS]
    if bad:
        raise UsageError(f"unknown tests {bad}; choose from {list(TESTS)}")
    model = cfg.build()
    if "exactness" in tests and model.mode != EXACT:
        raise UsageError("mode mismatch: 'exactness' needs the one-sided exact model (mode 'exact')")
    L, seed, n, d = cfg.level, cfg.seed, cfg.samples, cfg.delta
    base = {"config": cfg.to_dict(), "config_fingerprint": cfg.fingerprint(), "model_fingerprint": model.fingerprint,
            "seed": seed}
    docs: dict[str, object] = {}
    verdicts = {}
    events = None
    if any(t in tests for t in ("invariance", "mixing", "density")):
        events = random_ball_events(model, cfg.events, seed, L)
    for t in tests:
        if t == "invariance":
            reps = [test_invariance(model, e, n, d, seed, L) for e in events]
        elif t == "mixing":
            reps = [test_mixing(model, events[0], events[0], cfg.lags, n, d, seed, L)]
            docs["mixing_curve.csv"] = _curve_csv(reps[0].details["curve"])
        elif t == "support":
            reps = [test_full_support(model, m, n, d, seed, L) for m in cfg.support_levels]
        elif t == "density":
            reps = [test_visit_density(model, e, cfg.horizon, samples=n, seed=seed, L=L) for e in events]
        else:
            reps = [check_exactness_structure(model, n, seed=seed, L=L)]
        verdict = worst_verdict([r.verdict for r in reps])
        verdicts[t] = verdict
        docs[f"report_{t}.json"] = {**base, "test": t, "verdict": verdict, "reports": [r.to_dict() for r in reps]}
    overall = worst_verdict(list(verdicts.values()))
    summary = {**base, "verdict": overall, "tests": verdicts}
    docs["verdict.json"] = summary
    return docs, summary


def _curve_csv(curve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lag", "joint", "product", "correlation", "band", "uncertain"])
    for c in curve:
        w.writerow([c["lag"]] + [repr(float(c[k])) for k in ("joint", "product", "correlation", "band", "uncertain")])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    """``0,1,5`` or ``a:b`` (inclusive) or a mix of both."""
    out: list[int] = []
    try:
        for part in text.split(","):
            if ":" in part:
                a, b = part.split(":")
                out.extend(range(int(a), int(b) + 1))
            elif part.strip():
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None
    return out


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH",
                        help="JSON config file or preset name (l2-doubling, l2-bilateral, omega-any)")
    common.add_argument("--seed", type=_u64)
    common.add_argument("--out", metavar="DIR")
    common.add_argument("--samples", type=int)
    common.add_argument("--lags", type=_int_list, metavar="LIST")
    common.add_argument("--level", type=int)
    common.add_argument("--depth", type=int)
    p = _Parser(prog="strongmix", description="Invariant strongly mixing measures for weighted backward shifts.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("build", parents=[common], help="build the model and write its summary")
    s = sub.add_parser("sample", parents=[common], help="write a table of sampled vectors")
    s.add_argument("--count", type=int, help="number of samples (default from config)")
    v = sub.add_parser("verify", parents=[common], help="run verification tests")
    v.add_argument("--tests", default=",".join(TESTS[:4]), help=f"comma list from {','.join(TESTS)}")
    return p


def _config(args) -> ExperimentConfig:
    cfg = resolve(args.config)
    return cfg.replace(seed=args.seed, out=args.out, samples=args.samples, lags=args.lags,
                       level=args.level, depth=args.depth)


def _write(out: Path, docs: dict):
    out.mkdir(parents=True, exist_ok=True)
    for name, doc in docs.items():
        (out / name).write_text(doc if isinstance(doc, str) else _dump(doc))


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = _config(args)
        out = Path(cfg.out)
        if args.command == "build":
            _, doc = cmd_build(cfg)
            _write(out, {"model.json": doc})
            print(f"fingerprint {doc['fingerprint']}  schedule {doc['model']['schedule']}")
            return 0
        if args.command == "sample":
            count = cfg.sample_count if args.count is None else args.count
            if count < 0:
                raise UsageError("--count must be >= 0")
            model = cfg.build()
            _write(out, {"samples.csv": sample_table(model, cfg, count)})
            print(f"wrote {count} samples to {out / 'samples.csv'}")
            return 0
        tests = [t.strip() for t in args.tests.split(",") if t.strip()]
        docs, summary = cmd_verify(cfg, tests)
        _write(out, docs)
        for t, v in summary["tests"].items():
            print(f"{t:<12} {v}")
        print(f"overall      {summary['verdict']}")
        return EXIT[summary["verdict"]]
    except (ConfigError, UsageError, ModeMismatch) as exc:
        print(f"strongmix: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BuildError as exc:
        print(f"strongmix: build failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
