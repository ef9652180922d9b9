"""Transaction synthesis from canonical-form guarding scripts.

``derive_build_rules`` turns a script into executable per-branch rules:
which constraints the seed input must satisfy, how to look up every
further input, and how to compute each output.  ``build_next`` drives
those rules for one seed; ``sweep`` runs every unspent output as a seed
once, applying successes immediately so later lookups see fresh state.

Two policies matter beyond the raw rules:

* Lookups that match several references pick the smallest one, but only
  when all matches carry identical content; content that actually
  differs is reported as ambiguous.  Interchangeable duplicate copies
  are a designed feature of the grid encoding, so refusing them would
  wedge the automaton.
* A transaction whose outputs all duplicate currently unspent content
  (ignoring what it spends) makes no progress and is not emitted; sweep
  permanently retires such seeds.  Without this, the redundant third
  copy of a one-cell row would re-derive old rows forever.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .canonical import (
    AnalysisError, CanonicalForm, CopyRule, DeadCase, FieldRule,
    NotCanonical, SCRIPT_FIELD, analyze_canonical, classify_conjuncts,
    flatten_and, inline_lets, normalize_conjunct, reduce_case, scan_refs,
    split_cases,
)
from .interp import EvalContext, EvalError, evaluate
from .lang import Cmp, CtxRef, Expr, Lit, ScriptRef, Size, serialize_script
from .ledger import (
    ChainLog, UnindexedFieldError, UtxoSet, Valid, apply_transaction,
    validate_transaction,
)
from .model import (
    ChainParams, Output, OutputRef, OversizeOutputError, Payload, Transaction,
    check_output_limits,
)


@dataclass(frozen=True)
class NotBuildable:
    reason: str

    def __str__(self):
        return f"not buildable: {self.reason}"


@dataclass(frozen=True)
class LookupMiss:
    input_index: int
    constraints: tuple

    def __str__(self):
        keys = ", ".join(f"{n}={v!r}" for n, v in self.constraints)
        return f"no unspent output matches in[{self.input_index}] ({keys})"


@dataclass(frozen=True)
class LookupAmbiguous:
    input_index: int
    constraints: tuple

    def __str__(self):
        keys = ", ".join(f"{n}={v!r}" for n, v in self.constraints)
        return f"several distinct outputs match in[{self.input_index}] ({keys})"


@dataclass(frozen=True)
class ConsistencyCheckFailed:
    detail: str

    def __str__(self):
        return f"consistency check failed: {self.detail}"


@dataclass(frozen=True)
class NoProgress:
    def __str__(self):
        return "transaction would only recreate existing unspent outputs"


@dataclass(frozen=True)
class CannotBuild:
    reason: object

    def __str__(self):
        return str(self.reason)


@dataclass(frozen=True)
class BuildCase:
    """One branch of a script, compiled to generation rules."""

    guards: tuple       # conjuncts that selected this branch
    input_count: int
    seed_checks: tuple  # conjuncts decidable from in[0] alone
    lookups: tuple      # of (input index, tuple of LookupRule)
    out_rules: tuple    # of (out index, 'fields'|'copy', payload rule data)
    residual: tuple


@dataclass(frozen=True)
class BuildRules:
    flat: CanonicalForm
    cases: tuple


def _size_equality(e: Expr):
    if isinstance(e, Cmp) and e.op == "=":
        for a, b in ((e.left, e.right), (e.right, e.left)):
            if isinstance(a, Size) and isinstance(a.obj, CtxRef) and a.obj.kind == "in" \
                    and isinstance(b, Lit) and isinstance(b.value, int) \
                    and not isinstance(b.value, bool):
                return b.value
    return None


def _max_in_ref(exprs) -> int:
    top = -1
    for e in exprs:
        top = max(top, scan_refs(e).max_in_index)
    return top


def _is_seed_check(e: Expr) -> bool:
    refs = scan_refs(e)
    return (not refs.uses_out and not refs.bare_in and not refs.in_size
            and not refs.free_vars and refs.max_in_index <= 0)


def _compile_case(guards, body):
    """BuildCase for one branch, or None when the branch can never hold."""
    norm_guards = []
    for g in guards:
        norm_guards.extend(normalize_conjunct(g))
    in_size = None
    for g in norm_guards:
        s = _size_equality(g)
        if s is not None:
            in_size = s
            break
    try:
        reduced = reduce_case(body, in_size)
    except DeadCase:
        return None

    conjuncts = []
    for conj in flatten_and(reduced):
        conjuncts.extend(normalize_conjunct(conj))
    form = classify_conjuncts(conjuncts)
    if isinstance(form, NotCanonical):
        raise AnalysisError(form.reason)

    all_exprs = list(norm_guards) + conjuncts
    if in_size is None:
        for conj in conjuncts:
            s = _size_equality(conj)
            if s is not None:
                in_size = s
                break
    max_ref = _max_in_ref(all_exprs)
    if in_size is None:
        in_size = max(1, max_ref + 1)
    if in_size < 1 or max_ref >= in_size:
        return None  # branch contradicts its own input count

    # group lookups per input index; every non-seed input needs a rule
    per_index = {}
    for rule in form.in_rules:
        per_index.setdefault(rule.in_index, []).append(rule)
    lookups = []
    for k in range(1, in_size):
        if k not in per_index:
            raise AnalysisError(f"in[{k}] has no lookup rule")
        lookups.append((k, tuple(per_index[k])))
    extra = [k for k in per_index if k >= in_size]
    if extra:
        return None

    # group output rules; each output is either fully assigned or a copy
    by_out = {}
    order = []
    for rule in form.out_rules:
        i = rule.out_index
        if i not in by_out:
            by_out[i] = []
            order.append(i)
        by_out[i].append(rule)
    if sorted(by_out) != list(range(len(by_out))):
        raise AnalysisError("output assignments are not contiguous from out[0]")
    out_rules = []
    for i in sorted(by_out):
        rules = by_out[i]
        copies = [r for r in rules if isinstance(r, CopyRule)]
        fields = [r for r in rules if isinstance(r, FieldRule)]
        if copies and fields:
            raise AnalysisError(f"out[{i}] is both copied and assigned")
        if copies:
            if len(copies) > 1:
                raise AnalysisError(f"out[{i}] has several copy rules")
            if copies[0].source >= i:
                raise AnalysisError(
                    f"out[{i}] copies a later output out[{copies[0].source}]")
            out_rules.append((i, "copy", copies[0]))
        else:
            seen = set()
            script_rule = None
            payload_rules = []
            for r in fields:
                if r.field in seen:
                    raise AnalysisError(
                        f"out[{i}].{r.field} is assigned more than once")
                seen.add(r.field)
                if r.field == SCRIPT_FIELD:
                    script_rule = r
                else:
                    payload_rules.append(r)
            if script_rule is None:
                raise AnalysisError(f"out[{i}] has no script assignment")
            out_rules.append((i, "fields", (tuple(payload_rules), script_rule)))

    seed_checks = tuple(e for e in norm_guards + list(form.residual)
                        if _is_seed_check(e))
    return BuildCase(
        guards=tuple(norm_guards),
        input_count=in_size,
        seed_checks=seed_checks,
        lookups=tuple(lookups),
        out_rules=tuple(out_rules),
        residual=form.residual,
    )


_RULES_CACHE: dict[bytes, object] = {}


def derive_build_rules(script: Expr):
    """Compile a script into branch build rules, or explain why not."""
    key = serialize_script(script)
    cached = _RULES_CACHE.get(key)
    if cached is not None:
        return cached
    result = _derive(script)
    _RULES_CACHE[key] = result
    return result


def _derive(script: Expr):
    flat = analyze_canonical(script)
    if isinstance(flat, NotCanonical):
        return NotBuildable(flat.reason)
    try:
        inlined = inline_lets(script)
        raw_cases = split_cases(inlined)
        cases = []
        for guards, body in raw_cases:
            case = _compile_case(guards, body)
            if case is not None:
                cases.append(case)
    except AnalysisError as exc:
        return NotBuildable(str(exc))
    if not cases:
        return NotBuildable("no branch admits a transaction")
    cases.sort(key=lambda c: -c.input_count)  # stable: script order on ties
    return BuildRules(flat=flat, cases=tuple(cases))


# ---------------------------------------------------------------------------
# Driving the rules

class _CaseFailure(Exception):
    def __init__(self, reason, seed_stage=False):
        self.reason = reason
        self.seed_stage = seed_stage


# Rule expressions come from let-inlined scripts, which duplicates shared
# subexpressions, so generation may cost a small factor more than running
# the original script.  The built transaction is still validated under
# the real per-input limit, so nothing over budget ever leaves here.
_RULE_BUDGET_FACTOR = 4


def _eval_rule(expr, resolved, params):
    ctx = EvalContext(self_input=resolved[0], inputs=resolved, outputs=())
    value, _ = evaluate(expr, ctx,
                        _RULE_BUDGET_FACTOR * params.cost_limit_per_input,
                        max_width=params.max_width)
    return value


def _run_case(case: BuildCase, utxo: UtxoSet, seed: OutputRef,
              seed_output: Output, params: ChainParams):
    for check in case.seed_checks:
        try:
            ok = _eval_rule(check, [seed_output], params)
        except EvalError as exc:
            raise _CaseFailure(ConsistencyCheckFailed(str(exc)), seed_stage=True)
        if ok is not True:
            raise _CaseFailure(
                ConsistencyCheckFailed("seed does not fit this input role"),
                seed_stage=True)

    resolved_refs = [seed]
    resolved = [seed_output]
    for k, rules in case.lookups:
        constraints = []
        for rule in rules:
            try:
                value = _eval_rule(rule.expr, resolved, params)
            except EvalError as exc:
                raise _CaseFailure(ConsistencyCheckFailed(str(exc)))
            constraints.append((rule.field, value))
        try:
            found = utxo.lookup(constraints)
        except UnindexedFieldError as exc:
            raise _CaseFailure(NotBuildable(
                f"lookup key field {exc.args[0]!r} is not indexed"))
        matches = [r for r in found if r not in resolved_refs]
        if not matches:
            raise _CaseFailure(LookupMiss(k, tuple(constraints)))
        if len(matches) > 1:
            contents = {utxo.resolve(r).content_key() for r in matches}
            if len(contents) > 1:
                raise _CaseFailure(LookupAmbiguous(k, tuple(constraints)))
        chosen = matches[0]
        resolved_refs.append(chosen)
        resolved.append(utxo.resolve(chosen))

    outputs = []
    for i, kind, data in case.out_rules:
        try:
            if kind == "copy":
                base = outputs[data.source]
                payload = base.payload
                for name, expr in data.overrides:
                    payload = payload.replace(name, _eval_rule(expr, resolved, params))
                out = Output(base.script, payload)
            else:
                payload_rules, script_rule = data
                pairs = []
                for rule in payload_rules:
                    pairs.append((rule.field, _eval_rule(rule.expr, resolved, params)))
                ref = _eval_rule(script_rule.expr, resolved, params)
                if not isinstance(ref, ScriptRef):
                    raise _CaseFailure(ConsistencyCheckFailed(
                        f"out[{i}] script rule did not produce a script"))
                out = Output(ref.expr, Payload(pairs))
            check_output_limits(out, params)
        except (EvalError, KeyError, ValueError, OversizeOutputError) as exc:
            raise _CaseFailure(ConsistencyCheckFailed(str(exc)))
        outputs.append(out)

    tx = Transaction(inputs=resolved_refs, outputs=outputs)

    # no-progress guard: every output already exists unspent elsewhere
    needed = Counter(o.content_key() for o in outputs)
    available = Counter()
    spent = set(resolved_refs)
    for ref, out in utxo.items():
        if ref in spent:
            continue
        ck = out.content_key()
        if ck in needed:
            available[ck] += 1
    if all(available[k] >= c for k, c in needed.items()):
        raise _CaseFailure(NoProgress())

    result = validate_transaction(tx, utxo, params)
    if not isinstance(result, Valid):
        raise _CaseFailure(ConsistencyCheckFailed(str(result.reason)))
    return tx


def build_next(utxo: UtxoSet, script: Expr, seed: OutputRef,
               params: ChainParams = ChainParams()):
    """Build the transaction spending ``seed`` under ``script``'s rules.

    Returns a validated Transaction or CannotBuild.  Branches are tried
    in decreasing input count, so a seed takes the most specific role
    still open given the current unspent set.
    """
    seed_output = utxo.get(seed)
    if seed_output is None:
        raise KeyError(f"seed not in the unspent set: {seed}")
    if seed_output.script_bytes != serialize_script(script):
        raise ValueError("seed output carries a different script")

    rules = derive_build_rules(script)
    if isinstance(rules, NotBuildable):
        return CannotBuild(rules)

    failures = []
    for case in rules.cases:
        try:
            return _run_case(case, utxo, seed, seed_output, params)
        except _CaseFailure as exc:
            failures.append(exc)

    for exc in failures:
        if isinstance(exc.reason, NoProgress):
            return CannotBuild(exc.reason)
    for exc in failures:
        if not exc.seed_stage:
            return CannotBuild(exc.reason)
    return CannotBuild(ConsistencyCheckFailed(
        "seed does not match any input role of the script"))


def sweep(utxo: UtxoSet, log: ChainLog, params: ChainParams = ChainParams(),
          retired: set | None = None) -> list:
    """One builder pass over the current unspent set.

    Seeds are the references unspent when the pass starts, visited in
    deterministic order; every built transaction is validated and applied
    before the next seed is considered.  Seeds whose only buildable
    transaction makes no progress are added to ``retired`` and skipped by
    later sweeps.
    """
    if retired is None:
        retired = set()
    built = []
    for seed in utxo.refs():
        if seed not in utxo or seed in retired:
            continue
        result = build_next(utxo, utxo.resolve(seed).script, seed, params)
        if isinstance(result, Transaction):
            apply_transaction(result, utxo, log, params)
            built.append(result)
        elif isinstance(result.reason, NoProgress):
            retired.add(seed)
    return built
