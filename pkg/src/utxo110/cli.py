"""Command-line driver.

Subcommands::

    run      build a genesis state and advance the automaton by sweeps
    verify   replay a chain file and report the first failure
    render   draw a verified chain as ASCII or PBM
    analyze  print the canonical form and generation rules of a script

Exit codes: 0 success, 1 domain failure (invalid chain, stuck builder),
2 usage or parse failure.  The default width cap honours the
RULE110_MAX_WIDTH environment variable.  All output is deterministic.
"""

from __future__ import annotations

import argparse
import os
import sys

from .builder import BuildRules, NotBuildable, derive_build_rules, sweep
from .canonical import CanonicalForm, FieldRule, NotCanonical, \
    SCRIPT_FIELD, analyze_canonical
from .chainio import ChainFormatError, dump_chain, load_chain
from .interp import WidthExceeded
from .lang import Bits, script_source
from .ledger import ChainLog, FirstFailure, UtxoSet, apply_transaction, verify_chain
from .model import ChainParams
from .parser import ParseError, parse
from .render import render_chain
from .rule110 import GridRow, genesis_grid, genesis_layer

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


def _default_max_width() -> int:
    raw = os.environ.get("RULE110_MAX_WIDTH")
    if raw is None:
        return 256
    try:
        return int(raw)
    except ValueError:
        return 256


def _params(args) -> ChainParams:
    return ChainParams(
        max_width=args.max_width,
        cost_limit_per_input=args.cost_limit,
        block_budget=args.block_budget,
    )


def _add_limit_flags(sub):
    sub.add_argument("--max-width", type=int, default=_default_max_width(),
                     help="bit-string width cap (default %(default)s)")
    sub.add_argument("--cost-limit", type=int, default=10_000,
                     help="evaluation budget per input script (default %(default)s)")
    sub.add_argument("--block-budget", type=int, default=1_000_000,
                     help="total cost budget per block (default %(default)s)")


def cmd_run(args) -> int:
    params = _params(args)
    try:
        bits = Bits.from_text(args.initial)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.steps < 0:
        print("error: --steps must be nonnegative", file=sys.stderr)
        return EXIT_USAGE
    if not 1 <= len(bits) <= params.max_width:
        print(f"error: initial width {len(bits)} outside [1, {params.max_width}]",
              file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.mode == "layer":
            genesis = genesis_layer(bits, params)
        else:
            genesis = genesis_grid(GridRow.from_bits(bits), params)
    except WidthExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    utxo = UtxoSet(params.indexed_fields)
    log = ChainLog(params.block_budget)
    apply_transaction(genesis, utxo, log, params)
    retired: set = set()
    for step in range(args.steps):
        built = sweep(utxo, log, params, retired)
        if not built:
            print(f"error: no transaction could be built at step {step + 1}",
                  file=sys.stderr)
            return EXIT_DOMAIN
        if args.mode == "layer" and len(built) != 1:
            print(f"error: layer step {step + 1} built {len(built)} transactions",
                  file=sys.stderr)
            return EXIT_DOMAIN

    transactions = list(log.transactions())
    dump_chain(transactions, args.chain, params.digest_name)
    total_cost = sum(block.cost_used for block in log.blocks)
    print(f"transactions: {len(transactions)}")
    print(f"blocks: {len(log.blocks)}")
    print(f"total cost: {total_cost}")
    print(f"utxo size: {len(utxo)}")
    if args.render is not None:
        text = render_chain(transactions, args.format)
        with open(args.render, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"render written to {args.render}")
    return EXIT_OK


def _load_records(path):
    try:
        return load_chain(path)
    except FileNotFoundError:
        print(f"error: no such file: {path}", file=sys.stderr)
        return None
    except ChainFormatError as exc:
        print(f"error: cannot parse chain: {exc}", file=sys.stderr)
        return None


def cmd_verify(args) -> int:
    records = _load_records(args.chain)
    if records is None:
        return EXIT_USAGE
    params = _params(args)
    result = verify_chain([r.tx for r in records], params,
                          stored_ids=[r.stored_id for r in records])
    if isinstance(result, FirstFailure):
        print(f"verification failed at {result}")
        return EXIT_DOMAIN
    print(f"ok: {result.transactions} transactions, total cost {result.total_cost}")
    return EXIT_OK


def cmd_render(args) -> int:
    records = _load_records(args.chain)
    if records is None:
        return EXIT_USAGE
    params = _params(args)
    result = verify_chain([r.tx for r in records], params,
                          stored_ids=[r.stored_id for r in records])
    if isinstance(result, FirstFailure):
        print(f"error: chain does not verify: {result}", file=sys.stderr)
        return EXIT_DOMAIN
    try:
        text = render_chain([r.tx for r in records], args.format)
    except (ChainFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    if args.render is None:
        sys.stdout.write(text)
    else:
        with open(args.render, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


def _print_form(form: CanonicalForm) -> None:
    print(f"out rules: {len(form.out_rules)}")
    for rule in form.out_rules:
        if isinstance(rule, FieldRule):
            slot = f"out[{rule.out_index}].{rule.field}" \
                if rule.field != SCRIPT_FIELD else f"out[{rule.out_index}].script"
            print(f"  {slot} <- {script_source(rule.expr)}")
        else:
            overrides = ", ".join(f"{n} <- {script_source(x)}"
                                  for n, x in rule.overrides)
            print(f"  out[{rule.out_index}] <- copy(out[{rule.source}]"
                  + (f", {overrides})" if overrides else ")"))
    print(f"lookup rules: {len(form.in_rules)}")
    for rule in form.in_rules:
        print(f"  in[{rule.in_index}].{rule.field} = {script_source(rule.expr)}")
    print(f"residual checks: {len(form.residual)}")
    for expr in form.residual:
        print(f"  {script_source(expr)}")


def _print_cases(rules: BuildRules) -> None:
    print(f"generation cases: {len(rules.cases)}")
    for num, case in enumerate(rules.cases, start=1):
        print(f"case {num}: {case.input_count} input(s), "
              f"{len(case.out_rules)} output(s)")
        for check in case.seed_checks:
            print(f"  seed: {script_source(check)}")
        for k, per_input in case.lookups:
            keys = ", ".join(f"{r.field} = {script_source(r.expr)}"
                             for r in per_input)
            print(f"  in[{k}] <- lookup({keys})")


def cmd_analyze(args) -> int:
    try:
        with open(args.script, "r", encoding="utf-8") as fh:
            source = fh.read()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        script = parse(source)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    form = analyze_canonical(script)
    if isinstance(form, NotCanonical):
        print(f"not canonical: {form.reason}")
        return EXIT_OK
    print("canonical form")
    _print_form(form)
    rules = derive_build_rules(script)
    if isinstance(rules, NotBuildable):
        print(str(rules))
    else:
        _print_cases(rules)
    return EXIT_OK


def build_arg_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="utxo110",
        description="UTXO ledger simulator running Rule 110 in guarding scripts")
    subs = top.add_subparsers(dest="command", required=True)

    run = subs.add_parser("run", help="build a chain by sweeping the builder")
    run.add_argument("--mode", choices=("layer", "grid"), required=True)
    run.add_argument("--initial", required=True,
                     help="initial bits, e.g. 0001 or ...#")
    run.add_argument("--steps", type=int, default=0)
    run.add_argument("--chain", required=True, help="chain file to write")
    run.add_argument("--render", help="optional render file")
    run.add_argument("--format", choices=("ascii", "pbm"), default="ascii")
    _add_limit_flags(run)
    run.set_defaults(func=cmd_run)

    verify = subs.add_parser("verify", help="replay and check a chain file")
    verify.add_argument("--chain", required=True)
    _add_limit_flags(verify)
    verify.set_defaults(func=cmd_verify)

    render = subs.add_parser("render", help="draw a verified chain")
    render.add_argument("--chain", required=True)
    render.add_argument("--render", help="output file (default stdout)")
    render.add_argument("--format", choices=("ascii", "pbm"), default="ascii")
    _add_limit_flags(render)
    render.set_defaults(func=cmd_render)

    analyze = subs.add_parser("analyze", help="canonical form of a script file")
    analyze.add_argument("--script", required=True, help="script source file")
    _add_limit_flags(analyze)
    analyze.set_defaults(func=cmd_analyze)

    return top


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
