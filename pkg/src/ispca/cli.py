"""``ispca`` command line: detect, pla, ispca, simulate, biplot-data.

Every option may also come from a JSON file given with ``--config``; keys are
the long option names with dashes or underscores. Flags on the command line
win over the file. Exit codes: 0 success, 2 usage, 3 data, 4 numerical.
"""
from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from . import io
from .blocks import (ORACLE, SPARSE_SPLIT, STRATEGIES, BlockPartition, DetectorConfig,
                     detect)
from .errors import IspcaError, NumericalError, UsageError
from .model import FULL, POLICIES, TOP_K, IsPcaModel, fit, loading_correlations, scores
from .pla import explained_variance_trace, select_principal
from .simulation import PROFILES, SimConfig, run_simulation
from .spectra import EXACT, METHODS, estimate

COMMANDS = ("detect", "pla", "ispca", "simulate", "biplot-data")

DEFAULTS = {
    "detector": SPARSE_SPLIT,
    "svd": EXACT,
    "policy": TOP_K,
    "cdm_threshold_ratio": 1.0,
    "profile": "desk",
    "seed": 20240601,
    "delimiter": ",",
    "header": False,
    "no_center": False,
    "transpose": False,
    "log2": False,
    "compare_dense": False,
    "strict": False,
}


def _add_input(p):
    p.add_argument("--input", help="CSV file, observations as rows")
    p.add_argument("--header", action="store_true", default=None,
                   help="first row holds column labels")
    p.add_argument("--delimiter")
    p.add_argument("--no-center", action="store_true", default=None,
                   help="data are already centered; do not subtract column means")
    p.add_argument("--transpose", action="store_true", default=None,
                   help="file stores variables as rows")
    p.add_argument("--log2", action="store_true", default=None,
                   help="apply log2 to every cell before centering")


def _add_detector(p):
    p.add_argument("--detector", choices=STRATEGIES)
    p.add_argument("--threshold", type=float, help="|correlation| cut for the threshold detector")
    p.add_argument("--hbic-scale", type=float, help="HBIC penalty scale for sparse-split")
    p.add_argument("--blocks-file", help="JSON partition; skips detection")


def _add_fit(p):
    p.add_argument("--svd", choices=METHODS)
    p.add_argument("--k", type=int, help="number of components")
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--cdm-threshold-ratio", type=float,
                   help="with --svd cdm, blocks with at most ratio*n columns use exact SVD")
    p.add_argument("--min-share", type=float, help="report blocks with at least this variance share")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ispca", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option values")
    common.add_argument("--output-dir", help="directory for result files")
    common.add_argument("--seed", type=int)

    p = sub.add_parser("detect", parents=[common], help="find column blocks")
    _add_input(p)
    _add_detector(p)

    p = sub.add_parser("pla", parents=[common], help="variance share of each block")
    _add_input(p)
    _add_detector(p)
    p.add_argument("--min-share", type=float)

    p = sub.add_parser("ispca", parents=[common], help="fit inherently sparse PCA")
    _add_input(p)
    _add_detector(p)
    _add_fit(p)
    p.add_argument("--compare-dense", action="store_true", default=None,
                   help="also write correlations with the dense loadings")

    p = sub.add_parser("simulate", parents=[common], help="run the simulation study")
    p.add_argument("--profile", choices=sorted(PROFILES))
    p.add_argument("--replicates", type=int)
    p.add_argument("--hbic-scale", type=float)
    p.add_argument("--strict", action="store_true", default=None,
                   help="exit nonzero if any replicate failed")

    p = sub.add_parser("biplot-data", parents=[common], help="score pairs for biplots")
    _add_input(p)
    _add_detector(p)
    _add_fit(p)
    p.add_argument("--model", help="model.json from a previous ispca run")
    p.add_argument("--components", action="append",
                   help="1-based pair i,j; repeatable (default 1,2)")
    p.add_argument("--labels", help="file with one group label per observation")
    return parser


def _merge_config(args, parser):
    """Fill options left unset on the command line from --config, then defaults."""
    given = vars(args)
    file_cfg = {}
    if args.config:
        raw = io.read_json(args.config)
        if not isinstance(raw, dict):
            raise UsageError("config file must hold a JSON object")
        file_cfg = {k.replace("-", "_"): v for k, v in raw.items()}
        unknown = set(file_cfg) - set(given) - {"sim", "penalty_grid", "n_grid"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for key, value in file_cfg.items():
        if key in given and given[key] is None:
            given[key] = value
    for key, value in DEFAULTS.items():
        if key in given and given[key] is None:
            given[key] = value
    args.extra = {k: v for k, v in file_cfg.items() if k not in given}
    return args


def _need(args, *names):
    for name in names:
        if getattr(args, name, None) in (None, ""):
            raise UsageError(f"--{name.replace('_', '-')} is required for {args.command}")


def _read(args):
    _need(args, "input")
    return io.read_matrix_csv(args.input, has_header=args.header, delimiter=args.delimiter,
                              center=not args.no_center, transpose=args.transpose,
                              log2=args.log2)


def _detector_config(args) -> DetectorConfig:
    kw = {"strategy": args.detector, "threshold": args.threshold}
    if getattr(args, "hbic_scale", None) is not None:
        kw["hbic_scale"] = args.hbic_scale
    for key in ("penalty_grid", "n_grid"):
        if key in args.extra:
            kw[key] = args.extra[key]
    return DetectorConfig(**{k: v for k, v in kw.items() if v is not None})


def _partition(args, X) -> BlockPartition:
    if args.blocks_file:
        part = BlockPartition.from_dict(io.read_json(args.blocks_file))
        if part.p != X.p:
            raise UsageError(f"blocks file covers {part.p} columns, data has {X.p}")
        return part
    cfg = _detector_config(args)
    if cfg.strategy == ORACLE:
        raise UsageError("--detector oracle needs --blocks-file")
    return detect(X, cfg)


def _partition_doc(part: BlockPartition, X) -> dict:
    doc = part.to_dict()
    doc["b"] = part.b
    doc["sizes"] = part.sizes
    if X.col_labels is not None:
        doc["block_labels"] = [[X.col_labels[j] for j in blk] for blk in part.blocks]
    return doc


def _fit(args, X, part):
    if args.policy != FULL:
        _need(args, "k")
    return fit(X, part, args.svd, k=args.k, policy=args.policy,
               cdm_ratio=args.cdm_threshold_ratio)


def _variance_doc(model: IsPcaModel, X, part, min_share) -> dict:
    report = explained_variance_trace(X, part)
    total = report.total_variance
    doc = {
        "total_variance": total,
        "components": [
            {"component": j + 1, "block": int(model.component_block[j]),
             "eigenvalue": float(model.eigenvalues[j]),
             "share": float(model.eigenvalues[j]) / total,
             "method": model.component_method[j]}
            for j in range(model.k)
        ],
        "blocks": report.to_dict()["blocks"],
    }
    if min_share is not None:
        doc["selected_blocks"] = select_principal(report, min_share)
    return doc


def _write_scores(path, Z):
    header = ["observation"] + [f"PC{j + 1}" for j in range(Z.shape[1])]
    io.write_csv(path, header, ([i + 1] + row for i, row in enumerate(Z.tolist())))


def _write_loadings(path, model: IsPcaModel):
    rows, cols = np.nonzero(model.loadings)
    order = np.lexsort((rows, cols))
    labels = model.col_labels
    header = ["row", "component", "value"] + (["label"] if labels else [])
    out = []
    for r, c in zip(rows[order], cols[order]):
        line = [int(r), int(c) + 1, float(model.loadings[r, c])]
        if labels:
            line.append(labels[r])
        out.append(line)
    io.write_csv(path, header, out)


def cmd_detect(args):
    X = _read(args)
    part = _partition(args, X)
    with io.staged_outputs(args.output_dir) as out:
        io.write_json(out / "partition.json", _partition_doc(part, X))
    return 0


def cmd_pla(args):
    X = _read(args)
    part = _partition(args, X)
    report = explained_variance_trace(X, part)
    doc = report.to_dict()
    if args.min_share is not None:
        doc["selected_blocks"] = select_principal(report, args.min_share)
    with io.staged_outputs(args.output_dir) as out:
        io.write_json(out / "partition.json", _partition_doc(part, X))
        io.write_json(out / "variance.json", doc)
    return 0


def cmd_ispca(args):
    X = _read(args)
    part = _partition(args, X)
    model = _fit(args, X, part)
    Z = scores(model, X)
    corr = None
    if args.compare_dense:
        dense = estimate(X, min(model.k, X.n // 2 if args.svd != EXACT else min(X.shape)),
                         args.svd)
        corr = loading_correlations(model, dense)
    with io.staged_outputs(args.output_dir) as out:
        io.write_json(out / "partition.json", _partition_doc(part, X))
        io.write_json(out / "model.json", model.to_dict())
        _write_scores(out / "scores.csv", Z)
        _write_loadings(out / "loadings.csv", model)
        io.write_json(out / "variance.json", _variance_doc(model, X, part, args.min_share))
        if corr is not None:
            io.write_matrix_csv(out / "loading_correlations.csv", corr,
                                [f"dense{j + 1}" for j in range(corr.shape[1])])
    return 0


def cmd_simulate(args):
    sim = dict(args.extra.get("sim", {}))
    if args.replicates is not None:
        sim["replicates"] = args.replicates
    sim["seed"] = args.seed
    det = dict(sim.pop("detector", {}) or {})
    if args.hbic_scale is not None:
        det["hbic_scale"] = args.hbic_scale
    try:
        cfg = SimConfig.from_profile(args.profile, detector=DetectorConfig.from_dict(det), **sim)
    except TypeError as exc:
        raise UsageError(f"bad sim config: {exc}") from None
    result = run_simulation(cfg)
    with io.staged_outputs(args.output_dir) as out:
        header = ["replicate", "approach", "block", "omega", "cosine", "ratio"]
        io.write_csv(out / "sim_results.csv", header,
                     ([r[h] for h in header] for r in result.rows))
        io.write_json(out / "sim_summary.json", result.summary())
    if args.strict and result.failures:
        raise NumericalError(f"{len(result.failures)} replicate/approach runs failed")
    return 0


def _pairs(specs, k):
    pairs = []
    for spec in specs or ["1,2"]:
        try:
            i, j = (int(s) for s in str(spec).split(","))
        except ValueError:
            raise UsageError(f"--components expects i,j, got {spec!r}") from None
        for c in (i, j):
            if not 1 <= c <= k:
                raise UsageError(f"component {c} outside 1..{k}")
        pairs.append((i, j))
    return pairs


def cmd_biplot_data(args):
    X = _read(args)
    if args.model:
        model = IsPcaModel.from_dict(io.read_json(args.model))
    else:
        model = _fit(args, X, _partition(args, X))
    Z = scores(model, X)
    labels = io.read_labels(args.labels, X.n) if args.labels else None
    pairs = _pairs(args.components, model.k)
    with io.staged_outputs(args.output_dir) as out:
        for i, j in pairs:
            header = ["observation", f"score_{i}", f"score_{j}"] + (["group"] if labels else [])
            rows = []
            for a in range(X.n):
                row = [a + 1, float(Z[a, i - 1]), float(Z[a, j - 1])]
                if labels:
                    row.append(labels[a])
                rows.append(row)
            io.write_csv(out / f"biplot_{i}_{j}.csv", header, rows)
    return 0


HANDLERS = {
    "detect": cmd_detect,
    "pla": cmd_pla,
    "ispca": cmd_ispca,
    "simulate": cmd_simulate,
    "biplot-data": cmd_biplot_data,
}


def _report_error(exc, code, output_dir):
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(doc), file=sys.stderr)
    if output_dir:
        try:
            Path(output_dir).mkdir(parents=True, exist_ok=True)
            io.write_json(Path(output_dir) / "error.json", doc)
        except OSError:
            pass


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    output_dir = getattr(args, "output_dir", None)
    try:
        args = _merge_config(args, parser)
        output_dir = args.output_dir
        _need(args, "output_dir")
        code = HANDLERS[args.command](args)
        (Path(output_dir) / "error.json").unlink(missing_ok=True)
        return code
    except IspcaError as exc:
        _report_error(exc, exc.exit_code, output_dir)
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        _report_error(exc, NumericalError.exit_code, output_dir)
        return NumericalError.exit_code
    except OSError as exc:
        _report_error(exc, 3, output_dir)
        return 3
    except Exception as exc:  # pragma: no cover
        traceback.print_exc()
        _report_error(exc, 1, output_dir)
        return 1


if __name__ == "__main__":
    sys.exit(main())
