"""Command-line pipeline: convert, mix, predict, calibrate, decode,
evaluate, report, and the all-in-one pipeline command.

Exit codes: 0 success, 1 data/validation error, 2 usage error. Logs are
JSON lines on stderr; data goes to files only.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import decoding, evaluation, predictors, reduction, schema as schema_mod
from .errors import SpanrelError
from .io_utils import atomic_write_bytes, atomic_write_json, log_event, sha256_bytes

DEFAULT_SEED = 13


def _read_bytes(path: str, what: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise SpanrelError(f"cannot read {what} {path}: {e}") from e


def _sidecar_default(out: str) -> str:
    p = Path(out)
    return str(p.with_name(p.stem + ".provenance.json"))


def _load_finalized_schema(args, rc_instances):
    sch = schema_mod.load_schema(args.schema)
    if args.derive_types:
        sch = schema_mod.derive_compatibility(rc_instances, sch)
    sch.require_finalized()
    return sch


def _load_sp_with_provenance(sp_path: str, sidecar_path: str):
    ds = reduction.parse_squad(_read_bytes(sp_path, "sp dataset"))
    _, records = reduction.parse_provenance(_read_bytes(sidecar_path, "provenance sidecar"))
    return reduction.attach_provenance(ds, records), records


def _write_sp_outputs(ds, summary, args) -> None:
    sidecar_path = args.sidecar or _sidecar_default(args.out)
    atomic_write_bytes(args.out, reduction.serialize_squad(ds))
    atomic_write_json(
        sidecar_path,
        {
            "meta": {
                "variant": ds.variant,
                "source": ds.source,
                "seed": args.seed,
            },
            "records": reduction.provenance_records(ds),
        },
    )
    log_event(
        "convert.done",
        out=args.out,
        sidecar=sidecar_path,
        seed=args.seed,
        **summary.as_dict(),
    )


def cmd_convert(args) -> int:
    rc = reduction.parse_rc_dataset(_read_bytes(args.input, "rc input"))
    sch = _load_finalized_schema(args, rc)
    ds, summary = reduction.reduce_dataset(
        rc, sch, args.variant, source=args.source, workers=args.workers
    )
    _write_sp_outputs(ds, summary, args)
    return 0


def _manifest_stage(name: str, path: str, payload: bytes, instances: int) -> dict:
    return {
        "stage": name,
        "path": str(path),
        "sha256": sha256_bytes(payload),
        "instances": instances,
    }


def cmd_mix(args) -> int:
    a = reduction.parse_squad(_read_bytes(args.a, "sp dataset"))
    b = reduction.parse_squad(_read_bytes(args.b, "sp dataset"))
    if args.mode == "unified":
        mixed = reduction.mix_unified(a, b, args.seed)
        payload = reduction.serialize_squad(mixed)
        atomic_write_bytes(args.out, payload)
        manifest = {
            "meta": {"mode": "unified", "seed": args.seed},
            "stages": [_manifest_stage("unified", args.out, payload, len(mixed))],
        }
    else:
        out_dir = Path(args.out_dir)
        stages = []
        for name, ds in (("stage1", a), ("stage2", b)):
            payload = reduction.serialize_squad(ds)
            path = out_dir / f"{name}.json"
            atomic_write_bytes(path, payload)
            stages.append(_manifest_stage(name, path, payload, len(ds)))
            if not len(ds):
                log_event("mix.warning", stage=name, message="stage dataset is empty")
        manifest = {"meta": {"mode": "serial", "seed": args.seed}, "stages": stages}
    atomic_write_json(args.manifest, manifest)
    log_event("mix.done", mode=args.mode, manifest=args.manifest, seed=args.seed)
    return 0


def _run_predictor(spec: str, ds, args) -> predictors.PredictionSet:
    if spec == "oracle":
        return predictors.oracle_predict(ds)
    if spec == "lexical":
        return predictors.lexical_predict(ds)
    if spec.startswith("file:"):
        pset = predictors.parse_predictions(_read_bytes(spec[5:], "prediction file"))
        pset.validate_total(ds.qids())
        return pset
    if spec.startswith("remote:"):
        return predictors.remote_predict(
            spec[7:],
            ds,
            batch_size=args.batch_size,
            max_in_flight=args.max_in_flight,
            max_retries=args.retries,
        )
    raise SpanrelError(
        f"unknown predictor {spec!r}; use oracle | lexical | file:PATH | remote:URL"
    )


def cmd_predict(args) -> int:
    sidecar = args.sidecar or _sidecar_default(args.sp)
    if args.predictor in ("oracle", "lexical") or Path(sidecar).exists():
        ds, _ = _load_sp_with_provenance(args.sp, sidecar)
    else:
        ds = reduction.parse_squad(_read_bytes(args.sp, "sp dataset"))
    pset = _run_predictor(args.predictor, ds, args)
    atomic_write_bytes(args.out, predictors.serialize_predictions(pset))
    log_event(
        "predict.done",
        out=args.out,
        predictor=args.predictor,
        predictions=len(pset),
        seed=args.seed,
    )
    return 0


def cmd_calibrate(args) -> int:
    _, records = reduction.parse_provenance(
        _read_bytes(args.sidecar, "provenance sidecar")
    )
    preds = predictors.parse_predictions(_read_bytes(args.predictions, "prediction file"))
    observations = decoding.observations_from_records(records, preds)
    table = decoding.calibrate_observations(observations)
    atomic_write_bytes(args.out, decoding.serialize_thresholds(table))
    log_event(
        "calibrate.done",
        out=args.out,
        templates=len(table.by_template),
        global_fallback=table.global_fallback,
        seed=args.seed,
    )
    return 0


def _verdict_row(v: decoding.RelationVerdict) -> dict:
    return {
        "relation": v.relation,
        "present": v.present,
        "hit_fwd": v.hit_fwd,
        "hit_rev": v.hit_rev,
        "combined_margin": None if math.isinf(v.combined_margin) else v.combined_margin,
        "score": None if math.isinf(v.score) else v.score,
    }


def _decode_once(args, config: decoding.DecodingConfig):
    rc = reduction.parse_rc_dataset(_read_bytes(args.rc, "rc input"))
    sch = _load_finalized_schema(args, rc)
    _, records = reduction.parse_provenance(
        _read_bytes(args.sidecar, "provenance sidecar")
    )
    index = decoding.ProvenanceIndex.from_records(records)
    preds = predictors.parse_predictions(_read_bytes(args.predictions, "prediction file"))
    if config.forced_choice is False and sch.forced_choice:
        config = decoding.DecodingConfig(
            mode=config.mode, directions=config.directions, forced_choice=True
        )
    result = decoding.decode_dataset(
        rc,
        sch,
        index,
        preds,
        decoding.parse_thresholds(_read_bytes(args.thresholds, "threshold file")),
        config,
        workers=args.workers,
        allow_missing=args.allow_missing,
    )
    return rc, sch, index, preds, result


def cmd_decode(args) -> int:
    config = decoding.DecodingConfig(
        mode=args.mode, directions=args.directions, forced_choice=args.forced_choice
    )
    rc, sch, _, _, result = _decode_once(args, config)
    report = {
        "meta": {
            "mode": config.mode,
            "directions": config.directions,
            "forced_choice": config.forced_choice or sch.forced_choice,
            "null_label": sch.null_label,
            "seed": args.seed,
        },
        "labels": dict(sorted(result.labels.items())),
        "verdicts": {
            rc_id: [_verdict_row(v) for v in verdicts]
            for rc_id, verdicts in sorted(result.verdicts.items())
        },
        "counters": {
            "instances": len(result.labels),
            "multi_present": result.multi_present,
            "multi_present_rate": result.multi_present_rate,
            "missing_predictions": result.missing_predictions,
        },
    }
    atomic_write_json(args.out, report)
    log_event("decode.done", out=args.out, **report["counters"])
    return 0


def cmd_evaluate(args) -> int:
    rc = reduction.parse_rc_dataset(_read_bytes(args.rc, "rc input"))
    report = json.loads(_read_bytes(args.decode_report, "decode report"))
    if not isinstance(report, dict) or "labels" not in report:
        raise SpanrelError(f"decode report {args.decode_report}: missing labels")
    null_label = report.get("meta", {}).get("null_label", "no_relation")

    if args.task == "rc":
        gold = evaluation.gold_labels(rc, null_label)
        metrics = evaluation.evaluate_rc(gold, report["labels"], null_label)
        payload = {"task": "rc", "seed": args.seed, "metrics": metrics.as_dict()}
    else:
        gold_flags: dict[str, bool] = {}
        pred_flags: dict[str, bool] = {}
        verdicts = report.get("verdicts", {})
        for inst in rc:
            if inst.gold is None:
                raise SpanrelError(
                    f"rc {inst.id}: cre evaluation needs a boolean gold field"
                )
            gold_flags[inst.id] = inst.gold
            pred_flags[inst.id] = any(
                v.get("relation") == inst.relation and v.get("present")
                for v in verdicts.get(inst.id, [])
            )
        metrics = evaluation.evaluate_cre(gold_flags, pred_flags)
        payload = {"task": "cre", "seed": args.seed, "metrics": metrics.as_dict()}

    atomic_write_json(args.out, payload)
    log_event("evaluate.done", out=args.out, **payload["metrics"])
    return 0


def cmd_report(args) -> int:
    rc = reduction.parse_rc_dataset(_read_bytes(args.rc, "rc input"))
    sch = _load_finalized_schema(args, rc)
    _, records = reduction.parse_provenance(
        _read_bytes(args.sidecar, "provenance sidecar")
    )
    index = decoding.ProvenanceIndex.from_records(records)
    preds = predictors.parse_predictions(_read_bytes(args.predictions, "prediction file"))
    thresholds = decoding.parse_thresholds(_read_bytes(args.thresholds, "threshold file"))
    report = evaluation.ablation_report(
        rc, sch, index, preds, thresholds,
        forced_choice=args.forced_choice or sch.forced_choice,
        workers=args.workers,
    )
    atomic_write_json(args.out, {"seed": args.seed, **report.as_dict()})
    table_path = args.table or str(Path(args.out).with_suffix(".txt"))
    atomic_write_bytes(table_path, (report.render_text() + "\n").encode("utf-8"))
    log_event("report.done", out=args.out, table=table_path)
    return 0


def cmd_pipeline(args) -> int:
    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    ns = argparse.Namespace(**vars(args))
    ns.input = args.rc
    ns.out = str(workdir / "dataset.sp.json")
    ns.sidecar = str(workdir / "dataset.sp.provenance.json")
    ns.source = args.source
    cmd_convert(ns)

    ns.sp = str(workdir / "dataset.sp.json")
    ns.out = str(workdir / "predictions.json")
    cmd_predict(ns)

    ns.predictions = str(workdir / "predictions.json")
    ns.out = str(workdir / "thresholds.json")
    cmd_calibrate(ns)

    ns.thresholds = str(workdir / "thresholds.json")
    ns.out = str(workdir / "decode.json")
    cmd_decode(ns)

    ns.decode_report = str(workdir / "decode.json")
    ns.task = "rc"
    ns.out = args.out
    cmd_evaluate(ns)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spanrel",
        description="Reduce relation classification to bidirectional span prediction,"
        " run predictors, and decode spans back into relation labels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, schema=False, workers=False):
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        if schema:
            p.add_argument("--schema", required=True, help="relation schema file")
            p.add_argument(
                "--no-derive-types",
                dest="derive_types",
                action="store_false",
                help="do not fill empty type signatures from the rc data",
            )
        if workers:
            p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("convert", help="reduce an RC corpus to an SP dataset")
    p.add_argument("--input", required=True, help="rc corpus (TACRED-convention json)")
    p.add_argument("--variant", choices=schema_mod.VARIANTS, default="question")
    p.add_argument("--out", required=True, help="SQuAD 2.0 output file")
    p.add_argument("--sidecar", help="provenance sidecar path (default: <out-stem>.provenance.json)")
    p.add_argument("--source", default="rc", help="dataset title for the squad payload")
    common(p, schema=True, workers=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("mix", help="combine two SP datasets (unified shuffle or serial stages)")
    p.add_argument("--mode", choices=("unified", "serial"), required=True)
    p.add_argument("--a", required=True, help="first sp dataset")
    p.add_argument("--b", required=True, help="second sp dataset")
    p.add_argument("--out", help="output file (unified mode)")
    p.add_argument("--out-dir", help="output directory (serial mode)")
    p.add_argument("--manifest", help="manifest path (default: alongside output)")
    common(p)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("predict", help="produce predictions for an SP dataset")
    p.add_argument("--sp", required=True, help="sp dataset (squad format)")
    p.add_argument("--sidecar", help="provenance sidecar (needed by oracle/lexical)")
    p.add_argument(
        "--predictor", required=True, help="oracle | lexical | file:PATH | remote:URL"
    )
    p.add_argument("--out", required=True, help="prediction file to write")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--max-in-flight", type=int, default=4)
    p.add_argument("--retries", type=int, default=2)
    common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("calibrate", help="fit per-template margin thresholds on dev data")
    p.add_argument("--sidecar", required=True, help="dev provenance sidecar")
    p.add_argument("--predictions", required=True, help="dev prediction file")
    p.add_argument("--out", required=True, help="threshold table to write")
    common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("decode", help="decode predictions into relation labels")
    p.add_argument("--rc", required=True, help="rc corpus the dataset was reduced from")
    p.add_argument("--sidecar", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--thresholds", required=True)
    p.add_argument("--mode", choices=decoding.MODES, default="OR")
    p.add_argument("--directions", choices=decoding.DIRECTION_POLICIES, default="both")
    p.add_argument("--forced-choice", action="store_true")
    p.add_argument("--allow-missing", action="store_true",
                   help="treat missing predictions as no-hit instead of failing")
    p.add_argument("--out", required=True, help="decode report to write")
    common(p, schema=True, workers=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("evaluate", help="score a decode report against gold labels")
    p.add_argument("--task", choices=("rc", "cre"), default="rc")
    p.add_argument("--rc", required=True, help="gold rc corpus")
    p.add_argument("--decode-report", required=True)
    p.add_argument("--out", required=True, help="metrics file to write")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="OR / AND / Single Question ablation report")
    p.add_argument("--rc", required=True)
    p.add_argument("--sidecar", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--thresholds", required=True)
    p.add_argument("--forced-choice", action="store_true")
    p.add_argument("--out", required=True, help="machine-readable report (json)")
    p.add_argument("--table", help="plain-text table path (default: <out>.txt)")
    common(p, schema=True, workers=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser(
        "pipeline", help="convert + predict + calibrate + decode + evaluate in one run"
    )
    p.add_argument("--rc", required=True)
    p.add_argument("--variant", choices=schema_mod.VARIANTS, default="question")
    p.add_argument("--predictor", required=True)
    p.add_argument("--mode", choices=decoding.MODES, default="OR")
    p.add_argument("--directions", choices=decoding.DIRECTION_POLICIES, default="both")
    p.add_argument("--forced-choice", action="store_true")
    p.add_argument("--allow-missing", action="store_true")
    p.add_argument("--workdir", required=True, help="directory for intermediate files")
    p.add_argument("--out", required=True, help="final metrics file")
    p.add_argument("--source", default="rc")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--max-in-flight", type=int, default=4)
    p.add_argument("--retries", type=int, default=2)
    common(p, schema=True, workers=True)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "mix":
        if args.mode == "unified" and not args.out:
            parser.error("mix --mode unified requires --out")
        if args.mode == "serial" and not args.out_dir:
            parser.error("mix --mode serial requires --out-dir")
        if not args.manifest:
            base = args.out if args.mode == "unified" else str(Path(args.out_dir) / "mix")
            args.manifest = str(Path(base).with_suffix("")) + ".manifest.json"
    try:
        return args.func(args)
    except SpanrelError as e:
        log_event("error", type=type(e).__name__, message=str(e))
        return 1


if __name__ == "__main__":
    sys.exit(main())
