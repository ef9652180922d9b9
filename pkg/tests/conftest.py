import pytest

from utxo110.builder import sweep
from utxo110.ledger import ChainLog, UtxoSet, apply_transaction
from utxo110.model import ChainParams
from utxo110.rule110 import GridRow, genesis_grid, genesis_layer


@pytest.fixture
def params():
    return ChainParams()


def drive_layer(bits, steps, params=ChainParams()):
    """Genesis plus ``steps`` sweeps in layer mode; (transactions, utxo)."""
    utxo = UtxoSet(params.indexed_fields)
    log = ChainLog(params.block_budget)
    apply_transaction(genesis_layer(bits, params), utxo, log, params)
    for _ in range(steps):
        built = sweep(utxo, log, params)
        assert len(built) == 1, f"layer sweep built {len(built)} transactions"
    return list(log.transactions()), utxo


def drive_grid(bits, rows, params=ChainParams(), per_row=None):
    """Genesis plus ``rows`` sweeps in grid mode; (transactions, utxo).

    ``per_row`` (when given) receives (row_number, built, utxo) after
    every sweep.
    """
    utxo = UtxoSet(params.indexed_fields)
    log = ChainLog(params.block_budget)
    apply_transaction(genesis_grid(GridRow.from_bits(bits), params),
                      utxo, log, params)
    retired = set()
    for row in range(1, rows + 1):
        built = sweep(utxo, log, params, retired)
        assert built, f"grid sweep {row} built nothing"
        if per_row is not None:
            per_row(row, built, utxo)
    return list(log.transactions()), utxo
