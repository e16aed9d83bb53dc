"""Command-line interface: ``tuckerlm {decompose,analyze,space,eval,search}``.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 I/O or
checkpoint-format failure, 4 numerical failure.  Every failure writes one
line to stderr of the form::

    error: code=2 kind=InvalidConfigError rules=rank-positive message="..."

Floats are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .checkpoint import (CheckpointError, apply_decomposition, load_checkpoint,
                         predicted_params, random_checkpoint, save_checkpoint)
from .compress import (CompressionStats, a100_like, load_hardware, model_compression,
                       model_cost_profile)
from .config import DecompConfig, InvalidConfigError, from_document, require_valid, to_document
from .models import get_spec
from .space import (describe_space, enumerate_configs, heuristic_prune,
                    roofline_cost_provider, search, write_ranked_csv)
from .svd import SvdConvergenceError
from .toy import logit_divergence, proxy_accuracy

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
PRECISIONS = {"f16": 2, "f32": 4}


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "0+unknown"


@dataclass
class RunManifest:
    command: str
    inputs: dict
    config_digest: str
    version: str
    timestamp: str
    seed: int
    outputs: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the timestamp for reproducible manifests
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return now.strftime("%Y-%m-%dT%H:%M:%SZ")


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_digest(cfg: DecompConfig, spec) -> str:
    doc = {"model": spec.name, "config": to_document(cfg, spec)}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


# -- argument helpers ----------------------------------------------------------

def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _tensor_ids(text: str, spec) -> list[int]:
    if text.strip() == "all":
        return list(range(spec.n_tensors))
    out = []
    for tok in text.replace(" ", "").split(","):
        out.append(int(tok) if tok.isdigit() else spec.role_index(tok))
    return out


def _read_json(path):
    return json.loads(Path(path).read_text())


def _config_from_args(args, spec) -> DecompConfig:
    if args.config:
        if args.pr is not None or args.layers is not None:
            raise ValueError("give either --config or --pr/--layers/--tensors, not both")
        cfg = from_document(_read_json(args.config), spec)
    else:
        if args.pr is None or args.layers is None:
            raise ValueError("--pr and --layers are required without --config")
        layers = args.layers
        tensors = _tensor_ids(args.tensors, spec)
        cfg = DecompConfig(frozenset((l, k, args.pr) for l in layers for k in tensors),
                           tuple(layers), tuple(tensors))
    require_valid(cfg, spec)
    return cfg


def _hardware(args):
    return load_hardware(args.hw) if args.hw else a100_like()


def _emit(row: dict, fmt: str, out) -> None:
    if fmt == "json":
        out.write(json.dumps(row, indent=2) + "\n")
    elif fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(row.keys())
        w.writerow([repr(v) if isinstance(v, float) else v for v in row.values()])
    else:
        width = max(len(k) for k in row)
        for k, v in row.items():
            out.write(f"{k:<{width}}  {v!r}\n" if isinstance(v, float) else f"{k:<{width}}  {v}\n")


# -- subcommands ---------------------------------------------------------------

def cmd_decompose(args, out) -> int:
    spec = get_spec(args.model)
    cfg = _config_from_args(args, spec)
    if args.checkpoint:
        ckpt = load_checkpoint(args.checkpoint, spec)
        if ckpt.spec_name != spec.name:
            raise ValueError(f"checkpoint binds {ckpt.spec_name!r}, not {spec.name!r}")
    else:
        ckpt = random_checkpoint(spec, seed=args.seed)
    dec = apply_decomposition(ckpt, cfg, spec, workers=args.workers)
    stats = CompressionStats(ckpt.n_params, dec.n_params)
    row = {
        "model": spec.name,
        "config": json.dumps(to_document(cfg, spec), sort_keys=True),
        "params_before": stats.params_before,
        "params_after": stats.params_after,
        "predicted_params_after": predicted_params(ckpt.n_params, spec, cfg),
        "compression_ratio": stats.compression_ratio,
        "reduction_fraction": stats.reduction_fraction,
    }
    if args.out:
        save_checkpoint(dec, args.out, spec)
        inputs = {"model": args.model}
        if args.checkpoint:
            inputs["checkpoint"] = {"path": str(args.checkpoint),
                                    "sha256": _sha256_file(args.checkpoint)}
        if args.config:
            inputs["config"] = {"path": str(args.config), "sha256": _sha256_file(args.config)}
        manifest = RunManifest("decompose", inputs, config_digest(cfg, spec), _version(),
                               _timestamp(), args.seed,
                               {"checkpoint": {"path": str(args.out),
                                               "sha256": _sha256_file(args.out)}})
        Path(str(args.out) + ".manifest.json").write_text(manifest.to_json())
        row["out"] = str(args.out)
    _emit(row, args.format, out)
    return EXIT_OK


def analyze_row(spec, cfg: DecompConfig | None, batch: int, seq_len: int, precision: str,
                hw, style: str) -> dict:
    nbytes = PRECISIONS[precision]
    prof = model_cost_profile(spec, cfg, batch, seq_len, nbytes, hw, style)
    row = {
        "model": spec.name,
        "batch": batch,
        "seq_len": seq_len,
        "precision": precision,
        "style": style,
        "params": prof.params,
        "model_bytes": prof.model_bytes,
        "model_size_mb": prof.model_bytes / 1e6,
        "macs": prof.macs,
        "compute_to_model_ratio": prof.compute_to_model_ratio,
        "oi": prof.oi,
        "roofline_latency_s": prof.roofline_latency_s,
        "roofline_energy_j": prof.roofline_energy_j,
        "bound": prof.bound,
    }
    if cfg is not None:
        base = model_cost_profile(spec, None, batch, seq_len, nbytes, hw, style)
        row["parameter_reduction"] = model_compression(spec, cfg).reduction_fraction
        row["baseline_macs"] = base.macs
        row["baseline_oi"] = base.oi
        row["ops_increase"] = prof.macs / base.macs - 1.0
        row["oi_uplift"] = prof.oi / base.oi
        for other in ("reconstruct", "factored"):
            p = model_cost_profile(spec, cfg, batch, seq_len, nbytes, hw, other)
            row[f"ops_increase_{other}"] = p.macs / base.macs - 1.0
            row[f"oi_uplift_{other}"] = p.oi / base.oi
    return row


def cmd_analyze(args, out) -> int:
    spec = get_spec(args.model)
    cfg = None
    if args.config:
        cfg = from_document(_read_json(args.config), spec)
        require_valid(cfg, spec)
    row = analyze_row(spec, cfg, args.batch, args.seq, args.precision, _hardware(args), args.style)
    _emit(row, args.format, out)
    return EXIT_OK


def cmd_space(args, out) -> int:
    spec = get_spec(args.model)
    modes = sum([args.count_only, args.enumerate, args.heuristic])
    if modes != 1:
        raise ValueError("choose exactly one of --count-only, --enumerate, --heuristic")
    if args.count_only:
        d = describe_space(spec, args.rank)
        _emit({"model": spec.name, "n_layers": d.n_layers, "n_tensors": d.n_tensors,
               "rank_term": d.rank, "count": d.size, "log2_count": d.log2_size,
               "log2_count_single_rank": d.log2_size_fixed_rank,
               "big_o": f"O(2^{d.big_o_exponent})"}, args.format, out)
    elif args.enumerate:
        ranks = args.rank if args.rank is not None else 1
        for i, cfg in enumerate(enumerate_configs(spec, ranks)):
            if args.max is not None and i >= args.max:
                break
            out.write(json.dumps(to_document(cfg, spec)) + "\n")
    else:
        if args.target_reduction is None:
            raise ValueError("--heuristic needs --target-reduction")
        cfg = heuristic_prune(spec, args.target_reduction)
        red = model_compression(spec, cfg).reduction_fraction
        if args.out:
            Path(args.out).write_text(json.dumps(to_document(cfg, spec), indent=2) + "\n")
        out.write("parameter_reduction_pct | decomposed_layers\n")
        out.write(f"{100 * red:.2f} | {', '.join(str(l + 1) for l in cfg.layers)}\n")
    return EXIT_OK


def cmd_eval(args, out) -> int:
    spec = get_spec(args.model) if args.model else None
    a = load_checkpoint(args.original, spec)
    b = load_checkpoint(args.decomposed, spec)
    spec = spec or get_spec(a.spec_name)
    report = logit_divergence(a, b, args.n_inputs, args.seed, args.seq_len, spec)
    doc = report.to_dict()
    doc["accuracy_proxy"] = proxy_accuracy(report, spec.vocab)
    out.write(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def _load_candidates(path, spec) -> list[DecompConfig]:
    text = Path(path).read_text()
    try:
        docs = json.loads(text)
    except json.JSONDecodeError:
        docs = [json.loads(line) for line in text.splitlines() if line.strip()]
    if isinstance(docs, dict):
        docs = [docs]
    cands = [from_document(d, spec) for d in docs]
    for c in cands:
        require_valid(c, spec)
    return cands


def cmd_search(args, out) -> int:
    from .toy import divergence_accuracy_provider

    spec = get_spec(args.model)
    cands = _load_candidates(args.candidates, spec)
    cost = roofline_cost_provider(spec, _hardware(args), args.batch, args.seq,
                                  PRECISIONS[args.precision], args.style)
    if args.accuracy == "divergence":
        ckpt = (load_checkpoint(args.checkpoint, spec) if args.checkpoint
                else random_checkpoint(spec, seed=args.seed))
        acc = divergence_accuracy_provider(ckpt, args.n_inputs, args.seed, spec=spec)
    else:
        def acc(cfg):
            return 1.0
    result = search(cands, cost, acc, args.tau, workers=args.workers)
    buf = io.StringIO()
    write_ranked_csv(result, spec, buf)
    if args.out_csv:
        Path(args.out_csv).write_text(buf.getvalue())
    else:
        out.write(buf.getvalue())
    best = to_document(result.best.config, spec)
    if args.best_out:
        Path(args.best_out).write_text(json.dumps(best, indent=2) + "\n")
    if args.out_csv:
        out.write(json.dumps({"feasible": result.feasible, "best": best}) + "\n")
    if not result.feasible:
        sys.stderr.write("warning: no candidate meets the accuracy threshold\n")
    return EXIT_OK


# -- parser & dispatch -----------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: code={EXIT_CONFIG} kind=UsageError rules=- "
                         f"message={json.dumps(message)}\n")
        sys.exit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tuckerlm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=_version())
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("decompose", help="factor selected weights of a checkpoint")
    d.add_argument("--model", required=True, help="built-in spec name or spec JSON file")
    d.add_argument("--checkpoint", help="LRDK input; default is seeded random weights")
    d.add_argument("--config", help="config document (JSON, 1-based layers)")
    d.add_argument("--pr", type=int, help="uniform pruned rank")
    d.add_argument("--layers", type=_int_list, help="0-based layer ids, e.g. 1,3")
    d.add_argument("--tensors", default="all", help="'all' or role names / ids")
    d.add_argument("--out", help="output LRDK path; a .manifest.json is written beside it")
    d.add_argument("--seed", type=int, default=42)
    d.add_argument("--workers", type=int, default=None)
    d.add_argument("--format", choices=("table", "json"), default="table")
    d.set_defaults(func=cmd_decompose)

    a = sub.add_parser("analyze", help="size, MACs, OI and roofline estimates")
    a.add_argument("--model", required=True)
    a.add_argument("--config")
    a.add_argument("--batch", type=int, default=1)
    a.add_argument("--seq", type=int, default=128)
    a.add_argument("--precision", choices=tuple(PRECISIONS), default="f16")
    a.add_argument("--hw", help="hardware key=value file; default A100-like")
    a.add_argument("--format", choices=("table", "csv", "json"), default="table")
    a.add_argument("--style", choices=("reconstruct", "factored"), default="reconstruct")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("space", help="design-space size, enumeration, heuristic pruning")
    s.add_argument("--model", required=True)
    s.add_argument("--count-only", action="store_true")
    s.add_argument("--enumerate", action="store_true")
    s.add_argument("--heuristic", action="store_true")
    s.add_argument("--rank", type=int, help="rank term / uniform pruned rank")
    s.add_argument("--max", type=int, help="stop after this many configs")
    s.add_argument("--target-reduction", type=float, help="fraction, e.g. 0.15")
    s.add_argument("--out", help="write the heuristic config document here")
    s.add_argument("--format", choices=("table", "csv", "json"), default="table")
    s.set_defaults(func=cmd_space)

    e = sub.add_parser("eval", help="logit divergence between two checkpoints")
    e.add_argument("--original", required=True)
    e.add_argument("--decomposed", required=True)
    e.add_argument("--model", help="spec, if not a built-in named in the checkpoint")
    e.add_argument("--n-inputs", type=int, default=8)
    e.add_argument("--seq-len", type=int, default=16)
    e.add_argument("--seed", type=int, default=42)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("search", help="rank candidate configs by energy-delay product")
    r.add_argument("--model", required=True)
    r.add_argument("--hw")
    r.add_argument("--tau", type=float, required=True, help="maximum accuracy drop")
    r.add_argument("--candidates", required=True, help="JSON list (or JSON lines) of configs")
    r.add_argument("--checkpoint")
    r.add_argument("--accuracy", choices=("divergence", "none"), default="divergence")
    r.add_argument("--n-inputs", type=int, default=8)
    r.add_argument("--seed", type=int, default=42)
    r.add_argument("--batch", type=int, default=1)
    r.add_argument("--seq", type=int, default=128)
    r.add_argument("--precision", choices=tuple(PRECISIONS), default="f16")
    r.add_argument("--style", choices=("reconstruct", "factored"), default="factored")
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--out-csv")
    r.add_argument("--best-out")
    r.set_defaults(func=cmd_search)
    return p


def _classify(exc: BaseException) -> int:
    if isinstance(exc, (SvdConvergenceError, ArithmeticError, np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    if isinstance(exc, (CheckpointError, OSError)):
        return EXIT_IO
    return EXIT_CONFIG


def _error_line(code: int, exc: BaseException) -> str:
    rules = (",".join(dict.fromkeys(v.rule for v in exc.violations))
             if isinstance(exc, InvalidConfigError) else "-")
    msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
    return f"error: code={code} kind={type(exc).__name__} rules={rules} message={json.dumps(str(msg))}"


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except (InvalidConfigError, ValueError, KeyError, CheckpointError, OSError,
            ArithmeticError, np.linalg.LinAlgError) as exc:
        code = _classify(exc)
        sys.stderr.write(_error_line(code, exc) + "\n")
        return code


if __name__ == "__main__":
    sys.exit(main())
