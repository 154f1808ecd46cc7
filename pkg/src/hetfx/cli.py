"""Batch command-line front end: ``hetfx <command> --config FILE [flags]``.

Commands
--------
``gen-dgp``
    Generate synthetic distributions per (interaction order, treatment
    interaction) combination; writes one CSV + JSON sidecar per distribution
    and a manifest listing ids, heterogeneity labels, and attempt counts.
``simulate``
    Run a Monte Carlo plan over generated distributions; writes the
    long-format metrics CSV with an append-only progress log so interrupted
    runs resume without recomputation.
``summarize``
    Aggregate a metrics CSV into x1000 median/IQR tables per stratum and
    reliability-curve CSVs.
``verify``
    Run the exact-enumeration verification probes; exit status is nonzero if
    any probe fails.

Configuration files are flat ``KEY = VALUE`` text (``#`` comments allowed).
Unknown keys are rejected.  ``--seed`` and ``--out`` override the ``seed``
and ``out`` config keys; ``--jobs`` selects worker processes for
``simulate``; ``--resume`` continues an interrupted simulation.

All outputs are deterministic given config + seed: manifests embed a digest
of the resolved configuration, contain no timestamps, and reruns are
byte-identical.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
from typing import Sequence

import numpy as np

from . import dgp, harness, oracle
from .effects import TargetParameter
from .metalearners import standard_estimators

__all__ = ["main", "parse_config"]

_BOOL_VALUES = {"TRUE": True, "FALSE": False}

_KEYS = {
    "gen-dgp": {
        "count",
        "inter_orders",
        "tx_inter",
        "seed",
        "out",
        "npoints",
        "max_restarts",
        "hte_param",
    },
    "simulate": {
        "distributions",
        "estimators",
        "sizes",
        "b_reps",
        "seed",
        "out",
        "hte_param",
        "folds",
    },
    "summarize": {
        "metrics",
        "out",
        "include_tx_inter",
        "reliability_metrics",
    },
    "verify": {"seed", "out"},
}

_DEFAULT_ESTIMATORS = "LR,LR-T,SL,SL-T,DR-P,DR-CATE,DR-LOR,DR-LRR,R-CATE,R-LOR,R-LRR"


# ---------------------------------------------------------------------------
# Configuration parsing
# ---------------------------------------------------------------------------


def parse_config(path: str) -> dict[str, str]:
    """Parse a flat KEY = VALUE config file; comments start with ``#``."""
    settings: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}: line {lineno}: expected KEY = VALUE")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if not key:
                raise ValueError(f"{path}: line {lineno}: empty key")
            if key in settings:
                raise ValueError(f"{path}: line {lineno}: duplicate key {key!r}")
            settings[key] = value
    return settings


def _resolve_settings(args: argparse.Namespace, command: str) -> dict[str, str]:
    settings = parse_config(args.config) if args.config else {}
    unknown = sorted(set(settings) - _KEYS[command])
    if unknown:
        raise ValueError(
            f"unknown config keys for {command}: {', '.join(unknown)} "
            f"(valid: {', '.join(sorted(_KEYS[command]))})"
        )
    if args.seed is not None:
        settings["seed"] = str(args.seed)
    if args.out is not None:
        settings["out"] = args.out
    return settings


def _require(settings: dict[str, str], key: str, command: str) -> str:
    if key not in settings or not settings[key]:
        raise ValueError(f"{command} requires the {key!r} setting")
    return settings[key]


def _parse_int(settings: dict[str, str], key: str, default: int | None = None) -> int:
    if key not in settings:
        if default is None:
            raise ValueError(f"missing integer setting {key!r}")
        return default
    try:
        return int(settings[key])
    except ValueError:
        raise ValueError(f"setting {key!r} must be an integer, got {settings[key]!r}")


def _parse_bool(settings: dict[str, str], key: str, default: bool) -> bool:
    if key not in settings:
        return default
    value = settings[key].upper()
    if value not in _BOOL_VALUES:
        raise ValueError(f"setting {key!r} must be TRUE or FALSE, got {settings[key]!r}")
    return _BOOL_VALUES[value]


def _parse_list(settings: dict[str, str], key: str, default: str) -> list[str]:
    raw = settings.get(key, default)
    items = [item.strip() for item in raw.split(",") if item.strip()]
    if not items:
        raise ValueError(f"setting {key!r} must list at least one item")
    return items


def _parse_param(settings: dict[str, str], key: str, default: str) -> TargetParameter:
    raw = settings.get(key, default)
    try:
        return TargetParameter(raw)
    except ValueError:
        valid = ", ".join(p.value for p in TargetParameter)
        raise ValueError(f"setting {key!r} must be one of {valid}, got {raw!r}")


def _config_digest(resolved: dict) -> str:
    return hashlib.sha256(
        json.dumps(resolved, sort_keys=True).encode("utf-8")
    ).hexdigest()


def _write_json(payload: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, sort_keys=True, indent=2)
        handle.write("\n")


# ---------------------------------------------------------------------------
# gen-dgp
# ---------------------------------------------------------------------------


def _hte_summary(dist: dgp.SyntheticDistribution) -> dict:
    summary = {}
    for param in TargetParameter:
        stats = dgp.hte_stats(dist, param)
        summary[param.value] = {
            "label": stats.label.value,
            "mean": stats.mean,
            "sd": stats.sd,
            "cv": stats.cv,
            "degenerate_mean": stats.degenerate_mean,
        }
    return summary


def cmd_gen_dgp(args: argparse.Namespace) -> int:
    settings = _resolve_settings(args, "gen-dgp")
    count = _parse_int(settings, "count")
    seed = _parse_int(settings, "seed")
    out_dir = _require(settings, "out", "gen-dgp")
    npoints = _parse_int(settings, "npoints", 100)
    max_restarts = _parse_int(settings, "max_restarts", 200)
    hte_param = _parse_param(settings, "hte_param", "LogOR")
    orders = [int(v) for v in _parse_list(settings, "inter_orders", "1,2,3")]
    tx_values = []
    for item in _parse_list(settings, "tx_inter", "TRUE,FALSE"):
        if item.upper() not in _BOOL_VALUES:
            raise ValueError(f"tx_inter entries must be TRUE or FALSE, got {item!r}")
        tx_values.append(_BOOL_VALUES[item.upper()])

    os.makedirs(out_dir, exist_ok=True)
    resolved = {
        "command": "gen-dgp",
        "count": count,
        "seed": seed,
        "npoints": npoints,
        "max_restarts": max_restarts,
        "hte_param": hte_param.value,
        "inter_orders": orders,
        "tx_inter": tx_values,
    }
    combos = []
    for order in orders:
        for tx in tx_values:
            tag = f"o{order}_tx{'T' if tx else 'F'}"
            entries = []
            failures = 0
            for index in range(count):
                seq = harness.derive_seed_sequence(
                    seed, "gen-dgp", order, "TRUE" if tx else "FALSE", index
                )
                dist_seed = int(seq.generate_state(1, np.uint64)[0] >> 1)
                config = dgp.DGPConfig(
                    inter_order=order, tx_inter=tx, seed=dist_seed, npoints=npoints
                )
                dist_id = f"dgp_{tag}_{index:03d}"
                try:
                    dist = dgp.generate(config, max_restarts=max_restarts)
                except dgp.InfeasibleDrawError:
                    failures += 1
                    print(f"gen-dgp: {dist_id}: draw budget exhausted", file=sys.stderr)
                    continue
                csv_name = f"{dist_id}.csv"
                dgp.save_csv(dist, os.path.join(out_dir, csv_name))
                provenance = dist.provenance or {}
                sidecar = {
                    "id": dist_id,
                    "file": csv_name,
                    "config": config.to_dict(),
                    "target_bias": provenance.get("target_bias"),
                    "bias": provenance.get("bias"),
                    "eta": provenance.get("eta"),
                    "rho": provenance.get("rho"),
                    "attempts": provenance.get("attempts"),
                    "hte": _hte_summary(dist),
                }
                _write_json(sidecar, os.path.join(out_dir, f"{dist_id}.json"))
                entries.append(
                    {
                        "id": dist_id,
                        "file": csv_name,
                        "hte_label": sidecar["hte"][hte_param.value]["label"],
                        "attempts": provenance.get("attempts"),
                    }
                )
            combos.append(
                {
                    "inter_order": order,
                    "tx_inter": tx,
                    "requested": count,
                    "generated": len(entries),
                    "failures": failures,
                    "distributions": entries,
                }
            )
            print(f"gen-dgp: {tag}: generated {len(entries)}/{count}")
    manifest = {
        "command": "gen-dgp",
        "config_digest": _config_digest(resolved),
        "config": resolved,
        "hte_param": hte_param.value,
        "combos": combos,
    }
    _write_json(manifest, os.path.join(out_dir, "manifest.json"))
    print(f"gen-dgp: wrote manifest to {os.path.join(out_dir, 'manifest.json')}")
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _resolve_distribution_files(setting: str) -> list[tuple[str, str]]:
    """Resolve the ``distributions`` setting to (id, csv path) pairs."""
    if setting.endswith(".json"):
        with open(setting, encoding="utf-8") as handle:
            manifest = json.load(handle)
        base = os.path.dirname(os.path.abspath(setting))
        pairs = []
        for combo in manifest.get("combos", []):
            for entry in combo.get("distributions", []):
                pairs.append((entry["id"], os.path.join(base, entry["file"])))
        if not pairs:
            raise ValueError(f"{setting}: manifest lists no distributions")
        return pairs
    if os.path.isdir(setting):
        names = sorted(
            name
            for name in os.listdir(setting)
            if name.endswith(".csv") and not name.startswith("metrics")
        )
        if not names:
            raise ValueError(f"{setting}: no distribution CSVs found")
        return [(name[:-4], os.path.join(setting, name)) for name in names]
    pairs = []
    for item in setting.split(","):
        path = item.strip()
        if path:
            pairs.append((os.path.splitext(os.path.basename(path))[0], path))
    if not pairs:
        raise ValueError("no distribution files given")
    return pairs


def _progress_key(dist_id: str, estimator: str, n: int) -> str:
    return f"{dist_id}\t{estimator}\t{n}"


def _read_progress(path: str) -> set[tuple[str, str, int]]:
    completed = set()
    if not os.path.exists(path):
        return completed
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line:
                continue
            dist_id, estimator, n = line.split("\t")
            completed.add((dist_id, estimator, int(n)))
    return completed


def _reconcile_metrics(metrics_path: str, completed: set) -> None:
    """Drop metrics rows from cells not marked complete (crash remnants)."""
    if not os.path.exists(metrics_path):
        return
    records = harness.read_metrics_csv(metrics_path)
    kept = [
        record
        for record in records
        if (record.distribution_id, record.estimator, record.n) in completed
    ]
    if len(kept) != len(records):
        harness.write_metrics_csv(kept, metrics_path)


def _load_distribution(csv_path: str) -> dgp.SyntheticDistribution:
    """Load a distribution CSV, restoring provenance from its JSON sidecar."""
    dist = dgp.load_csv(csv_path)
    sidecar_path = os.path.splitext(csv_path)[0] + ".json"
    if os.path.exists(sidecar_path):
        with open(sidecar_path, encoding="utf-8") as handle:
            sidecar = json.load(handle)
        dist.provenance = {
            key: sidecar.get(key)
            for key in ("config", "target_bias", "bias", "eta", "rho", "attempts")
        }
    return dist


def _simulate_task(payload: tuple) -> tuple[tuple[str, str, int], list]:
    """Worker entry: evaluate one (distribution, estimator, n) cell."""
    (dist_id, csv_path, label, n, b_reps, master_seed, hte_param, folds) = payload
    dist = _load_distribution(csv_path)
    spec = standard_estimators(include_ratio_scale=True)[label]
    records = harness.evaluate(
        dist,
        label,
        spec,
        distribution_id=dist_id,
        n=n,
        b_reps=b_reps,
        master_seed=master_seed,
        hte_param=TargetParameter(hte_param),
        folds=folds,
    )
    return (dist_id, label, n), records


def cmd_simulate(args: argparse.Namespace) -> int:
    settings = _resolve_settings(args, "simulate")
    seed = _parse_int(settings, "seed")
    out_dir = _require(settings, "out", "simulate")
    b_reps = _parse_int(settings, "b_reps", 100)
    folds = _parse_int(settings, "folds", 5)
    hte_param = _parse_param(settings, "hte_param", "LogOR")
    sizes = [int(v) for v in _parse_list(settings, "sizes", "200,500,1000,2000")]
    labels = _parse_list(settings, "estimators", _DEFAULT_ESTIMATORS)
    known = standard_estimators(include_ratio_scale=True)
    bad = sorted(set(labels) - set(known))
    if bad:
        raise ValueError(
            f"unknown estimators: {', '.join(bad)} "
            f"(valid: {', '.join(known)})"
        )
    pairs = _resolve_distribution_files(_require(settings, "distributions", "simulate"))
    missing = [path for _, path in pairs if not os.path.exists(path)]
    if missing:
        raise ValueError(
            "missing distribution files:\n  " + "\n  ".join(missing)
        )
    for size in sizes:
        if size not in harness.ALLOWED_PLAN_SIZES:
            raise ValueError(
                f"sample size {size} not in {harness.ALLOWED_PLAN_SIZES}"
            )

    os.makedirs(out_dir, exist_ok=True)
    metrics_path = os.path.join(out_dir, "metrics.csv")
    progress_path = os.path.join(out_dir, "progress.log")
    if args.resume:
        completed = _read_progress(progress_path)
        _reconcile_metrics(metrics_path, completed)
    else:
        if os.path.exists(metrics_path) and os.path.getsize(metrics_path) > 0:
            raise ValueError(
                f"{metrics_path} already exists; pass --resume to continue "
                "or remove the output directory"
            )
        completed = set()
        open(metrics_path, "w", encoding="utf-8").close()
        open(progress_path, "w", encoding="utf-8").close()

    resolved = {
        "command": "simulate",
        "seed": seed,
        "b_reps": b_reps,
        "folds": folds,
        "hte_param": hte_param.value,
        "sizes": sizes,
        "estimators": labels,
        "distributions": [dist_id for dist_id, _ in pairs],
    }
    _write_json(
        {"command": "simulate", "config_digest": _config_digest(resolved),
         "config": resolved},
        os.path.join(out_dir, "simulate_manifest.json"),
    )

    tasks = [
        (dist_id, path, label, size)
        for dist_id, path in pairs
        for label in labels
        for size in sizes
    ]
    pending = [
        task for task in tasks if (task[0], task[2], task[3]) not in completed
    ]
    print(
        f"simulate: {len(tasks)} cells total, {len(tasks) - len(pending)} done, "
        f"{len(pending)} to run"
    )

    def commit(key: tuple[str, str, int], records) -> None:
        harness.write_metrics_csv(records, metrics_path, append=True)
        with open(progress_path, "a", encoding="utf-8") as handle:
            handle.write(_progress_key(*key) + "\n")
        print(f"simulate: done {key[0]} {key[1]} n={key[2]} "
              f"({len(records)} rows)")

    payloads = [
        (dist_id, path, label, size, b_reps, seed, hte_param.value, folds)
        for dist_id, path, label, size in pending
    ]
    if args.jobs > 1 and payloads:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_simulate_task, payload) for payload in payloads]
            for future in futures:
                key, records = future.result()
                commit(key, records)
    else:
        for payload in payloads:
            key, records = _simulate_task(payload)
            commit(key, records)
    print(f"simulate: metrics at {metrics_path}")
    return 0


# ---------------------------------------------------------------------------
# summarize
# ---------------------------------------------------------------------------

_RELIABILITY_METRICS = {
    "iBias2": "i_bias2",
    "iVariance": "i_variance",
    "iMSE": "i_mse",
}


def cmd_summarize(args: argparse.Namespace) -> int:
    settings = _resolve_settings(args, "summarize")
    metrics_path = _require(settings, "metrics", "summarize")
    out_dir = _require(settings, "out", "summarize")
    include_tx = _parse_bool(settings, "include_tx_inter", False)
    metric_names = _parse_list(settings, "reliability_metrics", "iMSE")
    for name in metric_names:
        if name not in _RELIABILITY_METRICS:
            raise ValueError(
                f"unknown reliability metric {name!r} "
                f"(valid: {', '.join(_RELIABILITY_METRICS)})"
            )
    records = harness.read_metrics_csv(metrics_path)
    if not records:
        raise ValueError(f"{metrics_path}: no metrics rows to summarize")
    os.makedirs(out_dir, exist_ok=True)

    rows = harness.aggregate(records, include_tx_inter=include_tx)
    summary_path = os.path.join(out_dir, "summary.csv")
    harness.write_summary_csv(rows, summary_path, include_tx_inter=include_tx)
    print(f"summarize: wrote {len(rows)} strata to {summary_path}")

    for name in metric_names:
        attr = _RELIABILITY_METRICS[name]
        strata: dict[tuple, dict[str, list[float]]] = {}
        for record in records:
            stratum = (record.inter_order, record.n, record.hte_label, record.param)
            strata.setdefault(stratum, {}).setdefault(record.estimator, []).append(
                getattr(record, attr)
            )
        path = os.path.join(out_dir, f"reliability_{name}.csv")
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write("inter_order,n,hte_label,param,estimator,t,survival\n")
            for stratum in sorted(strata):
                for estimator in sorted(strata[stratum]):
                    curve = harness.reliability_curve(strata[stratum][estimator])
                    for threshold, survival in curve.steps():
                        prefix = ",".join(str(part) for part in stratum)
                        handle.write(
                            f"{prefix},{estimator},{threshold!r},{survival!r}\n"
                        )
        print(f"summarize: wrote reliability curves to {path}")
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(args: argparse.Namespace) -> int:
    settings = _resolve_settings(args, "verify")
    seed = _parse_int(settings, "seed", oracle.DEFAULT_VERIFY_SEED)
    results = oracle.run_verification(seed)
    failures = 0
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        failures += 0 if result.passed else 1
        print(
            f"{status}  {result.parameter:6s} {result.probe:24s} "
            f"value={result.value:.6e} threshold={result.threshold:.6e}"
        )
    if settings.get("out"):
        with open(settings["out"], "w", encoding="utf-8", newline="") as handle:
            handle.write("parameter,probe,value,threshold,passed\n")
            for result in results:
                handle.write(
                    f"{result.parameter},{result.probe},{result.value!r},"
                    f"{result.threshold!r},{'TRUE' if result.passed else 'FALSE'}\n"
                )
        print(f"verify: report at {settings['out']}")
    print(f"verify: {len(results) - failures}/{len(results)} probes passed")
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetfx",
        description="Synthetic-truth benchmarking of heterogeneous effect "
        "estimators: generation, simulation, summaries, verification probes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler in (
        ("gen-dgp", cmd_gen_dgp),
        ("simulate", cmd_simulate),
        ("summarize", cmd_summarize),
        ("verify", cmd_verify),
    ):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", help="flat KEY = VALUE settings file")
        cmd.add_argument("--seed", type=int, help="override the seed setting")
        cmd.add_argument("--out", help="override the out setting")
        cmd.add_argument(
            "--jobs",
            type=int,
            default=os.cpu_count() or 1,
            help="worker processes for simulate (default: machine parallelism)",
        )
        cmd.add_argument(
            "--resume",
            action="store_true",
            help="continue an interrupted simulate run",
        )
        cmd.set_defaults(handler=handler)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"hetfx {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
