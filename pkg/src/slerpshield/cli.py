"""Command-line front end: enroll, verify, identify, attack, eval.

Exit codes: 0 success, 2 usage or data error, 3 degenerate key at enrollment,
4 an evaluation acceptance check failed. Every command is deterministic given
--seed (SLERPSHIELD_SEED serves as fallback), so reruns produce byte-identical
stores and CSV reports.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .attacks import NRConfig, delta_theta_experiment, full_template_attack, write_delta_theta_csv
from .errors import DegenerateAngle, SlerpShieldError
from .evaluation import (
    SyntheticPopulation,
    accuracy_sweep,
    alpha_ablation,
    eer_from_scores,
    generate_population,
    revocability_study,
    sswl,
    unprotected_scores,
    write_ablation_csv,
    write_revocability_csv,
    write_roc_csv,
    write_sswl_csv,
)
from .matching import EnrollmentRecord, identify, verify
from .protection import ProtectionParams, protect
from .store import TemplateStore, load_store, save_store
from .templates import GroupLayout, GroupWeights, group_normalize

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEGENERATE = 3
EXIT_ACCEPTANCE = 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _default_seed() -> int:
    env = os.environ.get("SLERPSHIELD_SEED")
    return int(env) if env else 0


def _default_timestamp() -> int:
    env = os.environ.get("SOURCE_DATE_EPOCH")
    return int(env) if env else 0


def _read_templates(path: str, d: int) -> np.ndarray:
    """One template per line, whitespace-separated reals."""
    rows = []
    try:
        with open(path) as fh:
            for ln, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                vals = np.array(line.split(), dtype=np.float64)
                if vals.size != d:
                    raise CliError(f"{path}:{ln}: expected {d} values, got {vals.size}")
                rows.append(vals)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise CliError(f"{path}: bad number: {exc}") from exc
    if not rows:
        raise CliError(f"{path}: no templates found")
    return np.vstack(rows)


def _read_labels(path: str, n: int) -> list[str]:
    labels = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(labels) != n:
        raise CliError(f"{path}: {len(labels)} labels for {n} templates")
    return labels


def _parse_kv(pairs: list[str], what: str) -> dict[str, str]:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise CliError(f"{what}: expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k] = v
    return out


def _params_from_args(args) -> ProtectionParams:
    try:
        layout = GroupLayout(args.d, args.m)
        return ProtectionParams(args.alpha, args.beta, layout, args.dropout_mode)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _load_store_or_die(path: str) -> TemplateStore:
    if not Path(path).exists():
        raise CliError(f"store not found: {path}")
    try:
        return load_store(path)
    except SlerpShieldError as exc:
        raise CliError(f"cannot load store {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# enroll


def cmd_enroll(args) -> int:
    params = _params_from_args(args)
    layout = params.layout
    weights = None
    if args.weights:
        w = np.array(Path(args.weights).read_text().split(), dtype=np.float64)
        try:
            weights = GroupWeights(w)
        except ValueError as exc:
            raise CliError(f"bad weights file: {exc}") from exc
        if weights.m != layout.m:
            raise CliError(f"weights cover {weights.m} groups, layout has {layout.m}")

    if args.synthetic:
        kv = _parse_kv(args.synthetic, "--synthetic")
        try:
            cfg = SyntheticPopulation(
                identities=int(kv.get("identities", 50)),
                samples_per_identity=int(kv.get("samples", 4)),
                d=layout.d,
                intra_angle=np.radians(float(kv.get("intra_deg", 25.0))),
                seed=args.seed,
                m=layout.m,
            )
        except ValueError as exc:
            raise CliError(f"--synthetic: {exc}") from exc
        pop = generate_population(cfg)
        templates = [
            (pop.label(i), pop.template(i, j))
            for i in range(pop.n_identities)
            for j in range(pop.n_samples)
        ]
    elif args.templates:
        rows = _read_templates(args.templates, layout.d)
        labels = (
            _read_labels(args.labels, rows.shape[0])
            if args.labels
            else [f"t{n:04d}" for n in range(rows.shape[0])]
        )
        try:
            templates = [
                (label, group_normalize(row, layout)) for label, row in zip(labels, rows)
            ]
        except SlerpShieldError as exc:
            raise CliError(f"bad template: {exc}") from exc
    else:
        raise CliError("enroll needs --templates FILE or --synthetic key=value ...")

    store_path = Path(args.store)
    if store_path.exists():
        store = _load_store_or_die(args.store)
        if store.params.fingerprint() != params.fingerprint():
            raise CliError("store was created with different parameters")
    else:
        store = TemplateStore(params, args.timestamp, [])

    seeds = np.random.SeedSequence(args.seed).spawn(len(templates))
    for (label, template), seed in zip(templates, seeds):
        try:
            protected, key = protect(template, params, weights, rng_seed=seed)
        except DegenerateAngle as exc:
            raise CliError(f"enrolling {label!r}: {exc}", EXIT_DEGENERATE) from exc
        store.records.append(EnrollmentRecord(label, protected, key))
    save_store(store, args.store)
    print(f"enrolled {len(templates)} templates into {args.store} "
          f"({len(store.records)} records total)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify / identify


def cmd_verify(args) -> int:
    store = _load_store_or_die(args.store)
    if not store.records:
        raise CliError("store is empty")
    matching = [r for r in store.records if r.identity_label == args.label]
    if not matching:
        raise CliError(f"no record with label {args.label!r}")
    queries = _read_templates(args.queries, store.layout.d)
    for row in queries:
        template = group_normalize(row, store.layout)
        best = None
        for rec in matching:
            res = verify(template, rec, args.threshold, store.params)
            if best is None or res.score > best.score:
                best = res
        flag = "ACCEPT" if best.accepted else "REJECT"
        suffix = f" ({best.error})" if best.error else ""
        print(f"{best.identity_label} {best.score:.6f} {flag}{suffix}")
    return EXIT_OK


def cmd_identify(args) -> int:
    store = _load_store_or_die(args.store)
    if not store.records:
        raise CliError("store is empty")
    queries = _read_templates(args.queries, store.layout.d)
    for qi, row in enumerate(queries):
        template = group_normalize(row, store.layout)
        ranked = identify(template, store.records, store.params, args.threshold)
        print(f"query {qi}:")
        for rank, res in enumerate(ranked[: args.top], 1):
            flag = "ACCEPT" if res.accepted else "REJECT"
            suffix = f" ({res.error})" if res.error else ""
            print(f"  {rank}. {res.identity_label} {res.score:.6f} {flag}{suffix}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# attack


def cmd_attack(args) -> int:
    if args.mode == "delta-theta":
        try:
            d_values = [int(x) for x in args.d.split(",")]
        except ValueError as exc:
            raise CliError(f"--d: {exc}") from exc
        try:
            study = delta_theta_experiment(
                d_values, args.beta, args.trials, seed=args.seed,
                alpha=args.alpha, rerun_cap=args.rerun_cap, jobs=args.jobs,
            )
        except ValueError as exc:
            raise CliError(str(exc)) from exc
        write_delta_theta_csv(args.out, study)
        print(f"wrote {args.out}")
        for s in study.summaries:
            print(
                f"d={s.d} beta={s.beta:g} converged={s.converged}/{s.trials} "
                f"delta_theta deg: min={np.degrees(s.min_delta):.3f} "
                f"median={np.degrees(s.median_delta):.3f} max={np.degrees(s.max_delta):.3f}"
            )
        return EXIT_OK

    # nr mode: attack the store's records, then a synthetic no-dropout
    # baseline with matching geometry for the rerun inflation factor.
    if not args.store:
        raise CliError("--mode nr requires --store")
    store = _load_store_or_die(args.store)
    if not store.records:
        raise CliError("store is empty")
    params = store.params
    layout = store.layout
    records = store.records[: args.limit]
    cfg = NRConfig(max_reruns=args.max_reruns, init_seed=args.seed)

    mean_reruns = []
    residuals = []
    import csv as _csv

    with open(args.out, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["record", "group", "reruns", "converged", "kept_residual"])
        for ri, rec in enumerate(records):
            rep = full_template_attack(rec, params.alpha, cfg)
            p_rows = layout.split(rec.protected.values)
            k_rows = layout.split(rec.key.values)
            kept_rows = rec.protected.mask.kept.reshape(layout.m, layout.group_dim)
            for gi, group_rep in enumerate(rep.group_reports):
                res = ""
                if group_rep.converged:
                    # How well the estimate reproduces the kept equations:
                    # compare the reconstruction direction with the stored one.
                    kept = kept_rows[gi]
                    theta = group_rep.theta_estimate
                    a = np.sin((1 - params.alpha) * theta) / np.sin(theta)
                    b = np.sin(params.alpha * theta) / np.sin(theta)
                    recon = a * group_rep.recovered[kept] + b * k_rows[gi][kept]
                    recon /= np.linalg.norm(recon)
                    stored = p_rows[gi][kept] / np.linalg.norm(p_rows[gi][kept])
                    resid = float(np.max(np.abs(recon - stored)))
                    residuals.append(resid)
                    res = f"{resid:.9g}"
                writer.writerow([ri, gi, group_rep.reruns_used, int(group_rep.converged), res])
                mean_reruns.append(group_rep.reruns_used)

    r = float(np.mean(mean_reruns))
    print(f"wrote {args.out}")
    print(f"mean reruns per group: {r:.3f}")
    print(f"estimated per-template cost r^m: {r ** layout.m:.3e}")
    if residuals:
        print(f"mean kept-coordinate reconstruction residual: {np.mean(residuals):.3e}")

    base_trials = max(len(mean_reruns), 32)
    baseline = delta_theta_experiment(
        [layout.group_dim], beta=0.0, trials=base_trials,
        seed=args.seed, alpha=params.alpha, rerun_cap=args.max_reruns,
    )
    base_mean = float(np.mean([t.reruns for t in baseline.trials]))
    print(f"no-dropout baseline mean reruns: {base_mean:.3f}")
    if params.beta > 0:
        print(f"dropout rerun inflation factor: {r / base_mean:.2f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _eval_population(args):
    cfg = SyntheticPopulation(
        identities=args.identities,
        samples_per_identity=args.samples,
        d=args.d,
        intra_angle=np.radians(args.intra_deg),
        seed=args.seed,
        m=args.m,
    )
    return generate_population(cfg)


def cmd_eval(args) -> int:
    params = _params_from_args(args)
    pop = _eval_population(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    checks: list[tuple[str, bool, str]] = []

    def run_roc():
        sweep = accuracy_sweep(pop, params, seed=args.seed, impostors_per_query=10)
        g0, i0 = unprotected_scores(pop, impostors_per_query=10, seed=args.seed)
        eer0, _ = eer_from_scores(g0, i0)
        write_roc_csv(out / "roc.csv", sweep)
        ok = abs(sweep.eer - eer0) <= 0.03
        checks.append(
            ("roc", ok, f"EER protected={sweep.eer:.4f} unprotected={eer0:.4f} (gap <= 0.03)")
        )

    def run_ablation():
        rows = alpha_ablation(
            pop, [0.0, 0.25, 0.5, 0.75, 0.9, 0.99], params, seed=args.seed
        )
        write_ablation_csv(out / "ablation.csv", rows)
        gaps = [r.gap for r in rows]
        ok = all(gaps[i] > gaps[i + 1] for i in range(len(gaps) - 1))
        checks.append(("ablation", ok, "genuine-impostor gap strictly decreasing in alpha"))

    def run_sswl():
        rep_u = sswl(pop, params, "unprotected", n_pairs=args.pairs, seed=args.seed)
        rep_p = sswl(pop, params, "protected", n_pairs=args.pairs, seed=args.seed)
        write_sswl_csv(out / "sswl.csv", [rep_u, rep_p])
        ok = rep_u.d_sys > 0.8 and rep_p.d_sys < 0.1
        checks.append(
            ("sswl", ok, f"d_sys unprotected={rep_u.d_sys:.3f} (>0.8) protected={rep_p.d_sys:.3f} (<0.1)")
        )

    def run_revocability():
        study = revocability_study(pop, params, n_templates=args.pairs // 2, seed=args.seed)
        write_revocability_csv(out / "revocability.csv", study)
        ok = study.ks_pvalue > 0.01 and study.genuine_accept_rate >= 0.95
        checks.append(
            (
                "revocability",
                ok,
                f"KS p={study.ks_pvalue:.4f} (>0.01) genuine accept={study.genuine_accept_rate:.3f} (>=0.95)",
            )
        )

    suites = {
        "roc": [run_roc],
        "ablation": [run_ablation],
        "sswl": [run_sswl],
        "revocability": [run_revocability],
        "all": [run_roc, run_ablation, run_sswl, run_revocability],
    }
    for fn in suites[args.suite]:
        fn()

    failed = False
    for name, ok, detail in checks:
        status = "PASS" if ok else "FAIL"
        print(f"{name}: {status} - {detail}")
        failed = failed or not ok
    return EXIT_ACCEPTANCE if failed else EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_params_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d", type=int, default=784, help="template dimension")
    p.add_argument("--m", type=int, default=49, help="group count")
    p.add_argument("--alpha", type=float, default=0.9, help="rotation degree in [0,1)")
    p.add_argument("--beta", type=float, default=0.5, help="dropout ratio in [0,1)")
    p.add_argument(
        "--dropout-mode", choices=["random", "weighted"], default="random"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slerpshield",
        description="Group-wise spherical-rotation template protection with "
        "matching, attack, and evaluation tooling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enroll", help="protect templates into a store")
    p.add_argument("--store", required=True)
    p.add_argument("--templates", help="file with one template per line")
    p.add_argument("--labels", help="file with one identity label per line")
    p.add_argument(
        "--synthetic", nargs="+", metavar="KEY=VALUE",
        help="generate a synthetic population, e.g. identities=50 samples=4",
    )
    _add_params_flags(p)
    p.add_argument("--weights", help="file with m group weights summing to 1")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--timestamp", type=int, default=_default_timestamp(),
                   help="created_utc epoch seconds (deterministic default)")
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("verify", help="1:1 verification against a claimed label")
    p.add_argument("--store", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--label", required=True, help="claimed identity")
    p.add_argument("--threshold", type=float, required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("identify", help="1:N ranking against the whole store")
    p.add_argument("--store", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--threshold", type=float, default=-1.0)
    p.add_argument("--top", type=int, default=5)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("attack", help="template inversion studies")
    p.add_argument("--mode", choices=["nr", "delta-theta"], required=True)
    p.add_argument("--store")
    p.add_argument("--d", default="16,64,256,512", help="comma list of dimensions")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--rerun-cap", type=int, default=200)
    p.add_argument("--max-reruns", type=int, default=200)
    p.add_argument("--limit", type=int, default=5, help="records to attack in nr mode")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for trials")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out", default="attack.csv")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("eval", help="security evaluation suites")
    p.add_argument(
        "--suite", choices=["roc", "ablation", "sswl", "revocability", "all"], required=True
    )
    p.add_argument("--identities", type=int, default=50)
    p.add_argument("--samples", type=int, default=4)
    p.add_argument("--intra-deg", type=float, default=25.0)
    p.add_argument("--pairs", type=int, default=1000)
    _add_params_flags(p)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except SlerpShieldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
