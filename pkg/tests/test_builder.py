import random

import pytest

from conftest import drive_grid, drive_layer
from utxo110.builder import (
    BuildRules, CannotBuild, ConsistencyCheckFailed, LookupMiss, NoProgress,
    NotBuildable, build_next, derive_build_rules, sweep,
)
from utxo110.lang import Bits
from utxo110.ledger import ChainLog, UtxoSet, Valid, apply_transaction, \
    validate_transaction
from utxo110.model import ChainParams, Output, Payload, Transaction
from utxo110.parser import parse
from utxo110.rule110 import (
    GridRow, build_bit_script, build_layer_script, evolve_cyclic, evolve_grid,
    genesis_grid, genesis_layer,
)


class TestDeriveRules:
    def test_layer_rules(self):
        rules = derive_build_rules(build_layer_script())
        assert isinstance(rules, BuildRules)
        assert len(rules.cases) == 1
        case = rules.cases[0]
        assert case.input_count == 1
        assert case.lookups == ()
        kinds = [(i, kind) for i, kind, _ in case.out_rules]
        assert kinds == [(0, "fields")]

    def test_bit_rules_cases(self):
        rules = derive_build_rules(build_bit_script())
        assert isinstance(rules, BuildRules)
        assert [c.input_count for c in rules.cases] == [3, 2, 2, 1, 1, 1]
        normal = rules.cases[0]
        assert [k for k, _ in normal.lookups] == [1, 2]
        in1 = {r.field: r.expr for r in dict(normal.lookups)[1]}
        assert in1["x"] == parse("in[0].x + 1")
        assert in1["n"] == parse("in[0].n")
        assert in1["mid"] == parse("true")
        in2 = {r.field: r.expr for r in dict(normal.lookups)[2]}
        assert in2["x"] == parse("in[1].x + 1")
        assert in2["mid"] == parse("false")

    def test_discrete_log_not_buildable(self):
        result = derive_build_rules(parse("5 pow out[0].x mod 23 = 13"))
        assert isinstance(result, NotBuildable)

    def test_missing_lookup_rule(self):
        # two inputs but nothing pins in[1]
        result = derive_build_rules(parse("(in.size = 2) & (out[0].x = in[1].x)"))
        assert isinstance(result, NotBuildable)
        assert "lookup" in result.reason

    def test_missing_script_assignment(self):
        result = derive_build_rules(parse("out[0].x = in[0].x"))
        assert isinstance(result, NotBuildable)
        assert "script" in result.reason


class TestBuildNext:
    def test_layer_step_matches_hand_built(self, params):
        genesis = genesis_layer(Bits.from_text("01101"), params)
        utxo = UtxoSet(params.indexed_fields)
        apply_transaction(genesis, utxo, ChainLog(params.block_budget), params)
        built = build_next(utxo, build_layer_script(), genesis.ref(0), params)
        assert isinstance(built, Transaction)

        nxt = evolve_cyclic(Bits.from_text("01101"), 1)[0]
        by_hand = Transaction(
            inputs=(genesis.ref(0),),
            outputs=(Output(build_layer_script(), Payload((("layer", nxt),))),))
        from utxo110.model import transaction_bytes
        assert transaction_bytes(built) == transaction_bytes(by_hand)

    def test_grid_interior_from_two_row_fixture(self, params):
        gen = genesis_grid(GridRow.from_bits([0, 1, 1, 1, 0]), params)
        utxo = UtxoSet(params.indexed_fields)
        apply_transaction(gen, utxo, ChainLog(params.block_budget), params)
        # seed: a left-neighbor copy of the cell at x = -3 (mid false)
        seeds = utxo.lookup([("x", -3), ("mid", False)])
        built = build_next(utxo, build_bit_script(), seeds[0], params)
        assert isinstance(built, Transaction)
        assert built.inputs[0] == seeds[0]  # the seed is always in[0]
        assert len(built.inputs) == 3 and len(built.outputs) == 3
        assert isinstance(validate_transaction(built, utxo, params), Valid)
        assert built.outputs[0].payload.get("x") == -2

    def test_lookup_miss_when_neighbor_spent(self, params):
        gen = genesis_grid(GridRow.from_bits([0, 1, 1, 1, 0]), params)
        utxo = UtxoSet(params.indexed_fields)
        apply_transaction(gen, utxo, ChainLog(params.block_budget), params)
        # remove the unique mid copy the interior case must look up
        (mid_ref,) = utxo.lookup([("x", -2), ("mid", True)])
        utxo.spend(mid_ref)
        seeds = utxo.lookup([("x", -3), ("mid", False)])
        result = build_next(utxo, build_bit_script(), seeds[0], params)
        assert isinstance(result, CannotBuild)
        assert isinstance(result.reason, LookupMiss)

    def test_seed_with_wrong_script_rejected(self, params):
        genesis = genesis_layer(Bits.from_text("01"), params)
        utxo = UtxoSet(params.indexed_fields)
        apply_transaction(genesis, utxo, ChainLog(params.block_budget), params)
        with pytest.raises(ValueError):
            build_next(utxo, build_bit_script(), genesis.ref(0), params)

    def test_misrole_seed_fails_consistency(self, params):
        gen = genesis_grid(GridRow.from_bits([1, 1]), params)
        utxo = UtxoSet(params.indexed_fields)
        apply_transaction(gen, utxo, ChainLog(params.block_budget), params)
        # the mid copy of column 0 in a width-2 row seeds nothing
        (seed,) = utxo.lookup([("x", 0), ("mid", True)])
        result = build_next(utxo, build_bit_script(), seed, params)
        assert isinstance(result, CannotBuild)

    def test_unindexed_lookup_key_not_buildable(self, params):
        gen = genesis_grid(GridRow.from_bits([1, 1, 1]), params)
        utxo = UtxoSet(indexed_fields=())
        apply_transaction(gen, utxo, ChainLog(params.block_budget), params)
        # a middle-cell left copy can only be built through lookups
        (seed,) = [r for r, out in utxo.items()
                   if out.payload.get("x") == -1
                   and out.payload.get("mid") is False][:1]
        result = build_next(utxo, build_bit_script(), seed, params)
        assert isinstance(result, CannotBuild)
        assert isinstance(result.reason, NotBuildable)
        assert "indexed" in result.reason.reason

    def test_script_size_cap_blocks_building(self):
        small = ChainParams(max_script_bytes=64)
        genesis = genesis_layer(Bits.from_text("01"), ChainParams())
        utxo = UtxoSet()
        apply_transaction(genesis, utxo, ChainLog(small.block_budget), ChainParams())
        result = build_next(utxo, build_layer_script(), genesis.ref(0), small)
        assert isinstance(result, CannotBuild)
        assert isinstance(result.reason, ConsistencyCheckFailed)


class TestSweep:
    def test_layer_one_transaction_per_sweep(self, params):
        genesis = genesis_layer(Bits.from_text("1011"), params)
        utxo = UtxoSet(params.indexed_fields)
        log = ChainLog(params.block_budget)
        apply_transaction(genesis, utxo, log, params)
        for _ in range(5):
            assert len(sweep(utxo, log, params)) == 1

    def test_grid_full_row_builds_width_plus_one(self, params):
        gen = genesis_grid(GridRow.from_bits([1, 0, 1]), params)
        utxo = UtxoSet(params.indexed_fields)
        log = ChainLog(params.block_budget)
        apply_transaction(gen, utxo, log, params)
        built = sweep(utxo, log, params)
        assert len(built) == 4

    def test_empty_utxo(self, params):
        assert sweep(UtxoSet(params.indexed_fields),
                     ChainLog(params.block_budget), params) == []

    def test_every_swept_transaction_validates(self, params):
        from utxo110.ledger import VerifyOk, verify_chain
        txs, _ = drive_grid([1, 1, 0, 1], 6, params)
        assert isinstance(verify_chain(txs, params), VerifyOk)

    def test_determinism_byte_identical(self, params):
        def run():
            txs, _ = drive_grid([1, 0, 1], 8, params)
            from utxo110.model import transaction_bytes
            return [transaction_bytes(t) for t in txs]
        assert run() == run()

    def test_width_one_retires_redundant_copy(self, params):
        gen = genesis_grid(GridRow.from_bits([1]), params)
        utxo = UtxoSet(params.indexed_fields)
        log = ChainLog(params.block_budget)
        apply_transaction(gen, utxo, log, params)
        retired = set()
        built = sweep(utxo, log, params, retired)
        assert len(built) == 2  # new left column and column 0
        assert len(retired) == 1
        leftover = utxo.resolve(next(iter(retired)))
        assert leftover.payload.get("mid") is False
        assert leftover.payload.get("x") == 0
        # the retired copy stays inert on later sweeps
        built = sweep(utxo, log, params, retired)
        rows = {out.payload.get("n") for t in built for out in t.outputs}
        assert rows == {-2}

    def test_leak_is_one_per_row_for_any_width(self, params):
        # every fully evolved row leaves exactly one unspent output: the
        # column-0 left-neighbor copy
        for bits in ([1, 1], [0, 1, 0, 1, 1]):
            leftovers = []

            def inspect(row, built, utxo, n0=GridRow.from_bits(bits).n):
                prev_n = n0 - (row - 1)
                remaining = [out for _, out in utxo.items()
                             if out.payload.get("n") == prev_n]
                leftovers.append(remaining)

            drive_grid(bits, 6, params, per_row=inspect)
            for remaining in leftovers:
                assert len(remaining) == 1
                assert remaining[0].payload.get("x") == 0
                assert remaining[0].payload.get("mid") is False

    def test_no_progress_reported_for_duplicate_seed(self, params):
        gen = genesis_grid(GridRow.from_bits([1]), params)
        utxo = UtxoSet(params.indexed_fields)
        log = ChainLog(params.block_budget)
        apply_transaction(gen, utxo, log, params)
        fr = utxo.lookup([("mid", False)])
        assert len(fr) == 2
        first = build_next(utxo, build_bit_script(), fr[0], params)
        apply_transaction(first, utxo, log, params)
        second = build_next(utxo, build_bit_script(), fr[1], params)
        assert isinstance(second, CannotBuild)
        assert isinstance(second.reason, NoProgress)


class TestOrderIndependence:
    def test_any_admissible_seed_order_gives_same_row(self, params):
        rng = random.Random(9)
        for trial in range(6):
            width = rng.randint(1, 6)
            bits = [rng.randint(0, 1) for _ in range(width)]
            reference = None
            for perm in range(4):
                utxo = UtxoSet(params.indexed_fields)
                log = ChainLog(params.block_budget)
                apply_transaction(genesis_grid(GridRow.from_bits(bits), params),
                                  utxo, log, params)
                retired = set()
                order = utxo.refs()
                rng.shuffle(order)
                for seed in order:
                    if seed not in utxo or seed in retired:
                        continue
                    result = build_next(utxo, utxo.resolve(seed).script, seed, params)
                    if isinstance(result, Transaction):
                        apply_transaction(result, utxo, log, params)
                    elif isinstance(result.reason, NoProgress):
                        retired.add(seed)
                n_next = GridRow.from_bits(bits).n - 1
                row = sorted(
                    {(out.payload.get("x"), out.payload.get("val"))
                     for tx in log.transactions() for out in tx.outputs
                     if out.payload.get("n") == n_next})
                if reference is None:
                    reference = row
                else:
                    assert row == reference
            oracle = evolve_grid(GridRow.from_bits(bits), 1)[0]
            assert reference == [(x, bool(v)) for x, v in oracle.cells()]


class TestChainAgainstOracles:
    def test_layer_chain_equals_oracle(self, params):
        bits = Bits.from_text("01011001")
        txs, _ = drive_layer(bits, 40, params)
        rows = [t.outputs[0].payload.get("layer") for t in txs[1:]]
        assert rows == evolve_cyclic(bits, 40)

    def test_layer_chain_at_maximum_width(self, params):
        # the full width cap still fits the default per-input budget
        rng = random.Random(256)
        bits = Bits(rng.randint(0, 1) for _ in range(params.max_width))
        txs, _ = drive_layer(bits, 2, params)
        rows = [t.outputs[0].payload.get("layer") for t in txs[1:]]
        assert rows == evolve_cyclic(bits, 2)

    def test_grid_chain_equals_oracle(self, params):
        from utxo110.render import grid_rows
        for bits in ([1], [1, 1], [0, 1, 0, 1, 1]):
            txs, _ = drive_grid(bits, 10, params)
            rows = grid_rows(txs)
            oracle = [list(r.bits) for r in evolve_grid(GridRow.from_bits(bits), 10)]
            assert rows[0] == list(bits)
            assert rows[1:] == oracle
