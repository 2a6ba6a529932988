"""Command-line interface.

Every data-touching command is a thin client over the HTTP service; by
default the service runs in process, and --server points the same commands at
a remote instance.  The complexity command computes its closed forms locally
so it stays fast enough for shell loops.

Exit codes: 0 success, 2 configuration problem, 3 numeric failure, 4 bad or
missing data file.
"""

from __future__ import annotations

import argparse
import sys


def _parse_q_values(text: str) -> list:
    """Accept "18", "8,12,16" or "8..28" (inclusive range)."""
    from .errors import ConfigurationError

    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError
            values = list(range(lo, hi + 1))
        else:
            values = [int(part) for part in text.split(",") if part.strip()]
        if not values or any(q < 2 or q > 32 for q in values):
            raise ValueError
    except ValueError:
        raise ConfigurationError(
            f"bad bit-width list {text!r}, use N, N,M,... or LO..HI with 2 <= N <= 32"
        )
    return values


def _parse_model_args(pairs) -> dict:
    """label=path entries; a bare path labels itself by its file stem."""
    import os

    from .errors import ConfigurationError

    models = {}
    for item in pairs:
        if "=" in item:
            label, path = item.split("=", 1)
        else:
            label = os.path.splitext(os.path.basename(item))[0]
            path = item
        label = label.strip()
        if label in models:
            raise ConfigurationError(f"model label {label!r} given twice")
        models[label] = path.strip()
    return models


def _width_args(args):
    """Resolve --fx / --q into (total_bits, frac_bits) service arguments."""
    from .errors import ConfigurationError
    from .fixed_point import FxFormat

    fx = getattr(args, "fx", None)
    q = getattr(args, "q", None)
    if fx is not None:
        fmt = FxFormat.parse(fx)
        return fmt.total_bits, fmt.frac_bits
    if q is not None:
        return q, None
    raise ConfigurationError("pick a width with --q BITS or --fx Q<bits>.<frac>")


def _client(args):
    from .client import ServiceClient

    return ServiceClient(base_url=args.server)


def _config_text(args) -> str:
    parts = []
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as f:
            parts.append(f.read())
    if getattr(args, "seed", None) is not None:
        parts.append(f"seed = {args.seed}")
    for item in getattr(args, "set", None) or []:
        parts.append(item)
    return "\n".join(parts)


def cmd_gen(args) -> int:
    with _client(args) as client:
        result = client.generate(args.out, config_text=_config_text(args))
    if args.print_config:
        sys.stdout.write(result["config_text"])
    print(
        f"wrote {result['path']}: {result['num_samples']} samples at "
        f"{result['sample_rate_hz'] / 1e6:g} MHz, received power "
        f"{result['si_power_db']:.2f} dB"
    )
    return 0


def cmd_fit(args) -> int:
    options = {
        "memory_len": args.memory_len,
        "max_order": args.max_order,
        "n_hidden": args.n_hidden,
        "ridge": args.ridge,
    }
    train = {}
    for key in ("epochs", "batch_size", "learning_rate", "optimizer", "seed"):
        value = getattr(args, key)
        if value is not None:
            train[key] = value
    if train:
        options["train"] = train
    with _client(args) as client:
        result = client.fit(args.dataset, args.kind, args.out, **options)
    print(
        f"fit {result['kind']} -> {result['model']}: {result['coefficients']} "
        f"coefficients, train {result['train_db']:.2f} dB, "
        f"eval {result['eval_db']:.2f} dB ({result['fit_seconds']:.1f} s)"
    )
    report = result.get("train_report")
    if report:
        print(
            f"  best val mse {report['best_val_mse']:.3e} at epoch "
            f"{report['best_epoch']}/{report['epochs_run']}, "
            f"denorm shift {report['denorm_shift']}"
        )
    return 0


def cmd_eval(args) -> int:
    total_bits = frac_bits = None
    if args.fx is not None or args.q is not None:
        total_bits, frac_bits = _width_args(args)
    with _client(args) as client:
        result = client.evaluate(
            args.dataset, args.model,
            total_bits=total_bits, frac_bits=frac_bits, split=args.split,
        )
    fmt = f" ({result['fx_format']})" if result["fx_format"] else ""
    print(
        f"{result['kind']}{fmt} on {result['split']} split "
        f"({result['num_samples']} samples): {result['cancellation_db']:.2f} dB"
    )
    return 0


def cmd_sweep_q(args) -> int:
    models = _parse_model_args(args.models)
    with _client(args) as client:
        result = client.sweep(
            args.dataset, models, _parse_q_values(args.q), out_csv=args.out
        )
    print(f"{'q':>3}  {'canceller':<12} {'frac':>4}  cancellation_db")
    for row in result["rows"]:
        print(
            f"{row['q']:>3}  {row['canceller']:<12} {row['frac_bits']:>4}  "
            f"{row['cancellation_db']:.2f}"
        )
    if result.get("csv"):
        print(f"wrote {result['csv']}")
    return 0


def cmd_complexity(args) -> int:
    # local on purpose: closed forms only, no service startup cost
    from .complexity import comparison_table

    sys.stdout.write(comparison_table(args.memory_len, args.max_order, args.n_hidden))
    return 0


def cmd_simulate(args) -> int:
    total_bits, frac_bits = _width_args(args)
    options = {
        "frac_bits": frac_bits,
        "num_samples": args.samples,
        "n_pe_hidden": args.pe_hidden,
        "n_pe_out": args.pe_out,
        "n_pe_fir": args.pe_fir,
        "n_pe": args.pe,
        "trace": args.trace is not None,
    }
    with _client(args) as client:
        result = client.simulate(args.dataset, args.model, total_bits, **options)
    if result["kind"] != args.kind:
        from .errors import ConfigurationError

        raise ConfigurationError(
            f"model {args.model} holds a {result['kind']} canceller, not {args.kind}"
        )
    print(
        f"{result['kind']} ({result['fx_format']}) over {result['num_samples']} samples: "
        f"latency {result['latency_cycles']} cycles, "
        f"{result['cycles_per_sample']:g} cycles/sample, "
        f"{result['stall_cycles']} stall cycles"
    )
    print(
        f"matches reference: {'yes' if result['matches_reference'] else 'NO'}; "
        f"cancellation {result['cancellation_db']:.2f} dB"
    )
    for stage, stalls in result["per_stage_stalls"].items():
        print(f"  stage {stage}: {stalls} stall cycles")
    if args.out:
        _write_report_csv(args.out, result)
        print(f"wrote {args.out}")
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as f:
            for line in result["trace"]:
                f.write(line + "\n")
        print(f"wrote {args.trace} ({len(result['trace'])} records)")
    return 0 if result["matches_reference"] else 3


def _write_report_csv(path: str, result: dict) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["metric", "value"])
        for key in (
            "kind", "fx_format", "num_samples", "matches_reference",
            "cancellation_db", "latency_cycles", "first_output_cycle",
            "cycles_per_sample", "stall_cycles", "total_cycles",
        ):
            w.writerow([key, result[key]])
        for stage, stalls in result["per_stage_stalls"].items():
            w.writerow([f"stall_cycles[{stage}]", stalls])


def cmd_compare(args) -> int:
    models = _parse_model_args(args.models) if args.models else {}
    with _client(args) as client:
        result = client.compare(args.dataset, models)
    header = (
        f"{'label':<12} {'kind':<7} {'mults':>6} {'adds':>6} {'params':>7} "
        f"{'cyc/smp':>8} {'dB':>8}"
    )
    print(header)
    print("-" * len(header))
    for row in result["rows"]:
        print(
            f"{row['label']:<12} {row['kind']:<7} {row['real_mults']:>6} "
            f"{row['real_adds']:>6} {row['params']:>7} {row['cycles_per_sample']:>8} "
            f"{row['cancellation_db']:>8.2f}"
        )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("sicancel.service:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sicancel",
        description="Self-interference canceller toolkit",
    )
    parser.add_argument(
        "--server", default=None, metavar="URL",
        help="service base URL (default: run the service in process)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate an aligned transmit/receive dataset")
    p.add_argument("--out", required=True, help="output dataset path")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, default=None, help="override the dataset seed")
    p.add_argument(
        "--set", action="append", metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    p.add_argument("--print-config", action="store_true", help="echo the effective config")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", help="fit a canceller on the training split")
    p.add_argument("kind", choices=("linear", "poly", "nn"))
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="output model path (json)")
    p.add_argument("--L", "--memory-len", dest="memory_len", type=int, default=13,
                   help="delay-line length")
    p.add_argument("--P", "--max-order", dest="max_order", type=int, default=7,
                   help="highest odd polynomial order")
    p.add_argument("--Nh", "--n-hidden", dest="n_hidden", type=int, default=18,
                   help="hidden layer width")
    p.add_argument("--ridge", type=float, default=0.0)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default=None)
    p.add_argument("--seed", type=int, default=None, help="training seed")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="measure cancellation on a split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--fx", default=None, metavar="Qn.f",
                   help='evaluate quantized in this exact format, e.g. "Q17.12"')
    p.add_argument("--q", type=int, default=None,
                   help="evaluate quantized at this width, fraction split calibrated")
    p.add_argument("--split", choices=("train", "eval", "all"), default="eval")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-q", help="cancellation versus fixed-point width")
    p.add_argument("--dataset", required=True)
    p.add_argument("--models", nargs="+", required=True, metavar="LABEL=MODEL")
    p.add_argument("--q", required=True, help='widths: "18", "8,12,16" or "8..28"')
    p.add_argument("--out", help="also write rows to this CSV file")
    p.set_defaults(func=cmd_sweep_q)

    p = sub.add_parser("complexity", help="per-sample operation and parameter counts")
    p.add_argument("--L", "--memory-len", dest="memory_len", type=int, default=13,
                   help="delay-line length")
    p.add_argument("--P", "--max-order", dest="max_order", type=int, default=7,
                   help="highest odd polynomial order")
    p.add_argument("--Nh", "--n-hidden", dest="n_hidden", type=int, default=18,
                   help="hidden layer width")
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("simulate", help="cycle-accurate PE-array run of a model")
    p.add_argument("kind", choices=("nn", "poly", "linear"))
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--fx", default=None, metavar="Qn.f",
                   help='exact fixed-point format, e.g. "Q17.12"')
    p.add_argument("--q", type=int, default=None,
                   help="fixed-point width, fraction split calibrated")
    p.add_argument("--samples", type=int, default=256, help="eval samples (0 = all)")
    p.add_argument("--npe-h", "--pe-hidden", dest="pe_hidden", type=int, default=52,
                   help="hidden-stage processing elements")
    p.add_argument("--npe-o", "--pe-out", dest="pe_out", type=int, default=4,
                   help="output-stage processing elements")
    p.add_argument("--pe-fir", type=int, default=2, help="FIR-stage complex MAC lanes")
    p.add_argument("--pe", type=int, default=20, help="MAC lanes for linear/poly")
    p.add_argument("--out", help="write the cycle report to this CSV file")
    p.add_argument("--trace", default=None, metavar="FILE",
                   help="write per-cycle trace records to this file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="side-by-side ops, params, cycles and dB")
    p.add_argument("--dataset", required=True)
    p.add_argument(
        "--models", nargs="+", default=None, metavar="LABEL=MODEL",
        help="saved models to compare (default: fit linear, poly and nn now)",
    )
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("serve", help="run the service over HTTP")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    from .errors import ConfigurationError, DataFormatError, NumericError

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error[configuration]: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error[numeric]: {exc}", file=sys.stderr)
        return 3
    except (DataFormatError, FileNotFoundError) as exc:
        print(f"error[data]: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
