"""Rule 110 oracles and the validator scripts that enforce them on-chain.

Two encodings of the automaton state:

* layer mode: one output holds a whole row in its ``layer`` field and
  the transition is cyclic (left/right neighbors wrap around);
* grid mode: one output holds a single cell (``val``, column ``x``,
  leftmost column ``n``, ``mid`` flag), the background is zero, the
  right edge is pinned at column 0 and the grid grows one column to the
  left per row, so ``-n`` doubles as the row number.

``evolve_cyclic`` and ``evolve_grid`` are direct implementations used as
oracles for the chain; they share nothing with the script VM.
"""

from __future__ import annotations

from dataclasses import dataclass

from .interp import WidthExceeded
from .lang import Bits, Expr
from .model import ChainParams, Output, Payload, Transaction, check_output_limits
from .parser import parse

LAYER_FIELD = "layer"
VAL_FIELD = "val"
X_FIELD = "x"
N_FIELD = "n"
MID_FIELD = "mid"


def calc_bit(left: int, center: int, right: int) -> int:
    """One cell update: (l & c & r) ^ (c & r) ^ c ^ r."""
    l, c, r = int(left), int(center), int(right)
    return ((l & c & r) ^ (c & r) ^ c ^ r) & 1


def evolve_cyclic(layer, steps: int) -> list:
    """Rows after each of ``steps`` cyclic updates (initial row excluded)."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    row = Bits(layer)
    if len(row) < 1:
        raise ValueError("layer must have at least one bit")
    rows = []
    w = len(row)
    for _ in range(steps):
        row = Bits(calc_bit(row[(i - 1) % w], row[i], row[(i + 1) % w])
                   for i in range(w))
        rows.append(row)
    return rows


@dataclass(frozen=True)
class GridRow:
    """One row of the left-growing grid: bits over columns [n, 0]."""

    n: int
    bits: tuple

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("bits must be 0 or 1")
        if self.n > 0 or len(self.bits) != 1 - self.n:
            raise ValueError("row must cover exactly the columns [n, 0]")

    @classmethod
    def from_bits(cls, bits) -> "GridRow":
        bits = tuple(int(b) for b in bits)
        return cls(n=1 - len(bits), bits=bits)

    def bit(self, x: int) -> int:
        if self.n <= x <= 0:
            return self.bits[x - self.n]
        return 0

    def cells(self):
        return [(self.n + i, b) for i, b in enumerate(self.bits)]


def evolve_grid(initial: GridRow, steps: int) -> list:
    """Rows after each step; row t+1 covers [initial.n - t - 1, 0]."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    rows = []
    row = initial
    for _ in range(steps):
        n = row.n - 1
        row = GridRow(n, tuple(calc_bit(row.bit(x - 1), row.bit(x), row.bit(x + 1))
                               for x in range(n, 1)))
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Validator scripts

# Checks that out[0] carries the cyclic update of the spender's layer and
# reproduces the guarding script byte for byte.
LAYER_SCRIPT_SOURCE = """\
let w = self.layer.size in
(out[0].layer = map(w, i ->
    let l = self.layer[(i - 1) mod w] in
    let c = self.layer[i] in
    let r = self.layer[(i + 1) mod w] in
    ((l & c & r) ^ (c & r) ^ c ^ r)))
& (out[0].script = self.script)
"""

# Single-cell validator.  The spent inputs are the (left, mid, right)
# copies of the three neighbor cells; boundary transactions synthesize
# the zero-background cells they cannot spend.  Branches, by trigger:
#   1. only cell of a one-cell row, mid copy      -> new left column
#   2. only cell of a one-cell row, left copy     -> new column 0
#   3. leftmost cell spent alone                  -> new left column
#   4. leftmost cell's mid copy plus its right    -> second column
#   5. column -1 copy plus the mid copy of col 0  -> column 0
#   6. anything else: three real neighbor copies  -> interior column
# Branches 1-2 exist because a one-cell row at column 0 offers no second
# input to spend; both neighbors are synthesized around the carried value
# and the mid flag of the single input decides which column it fuels.
BIT_SCRIPT_SOURCE = """\
let realIn =
  if (in.size = 1) & (in[0].x = 0) & (in[0].n = 0) & in[0].mid then
    output(val <- false, x <- -2, n <- 0, mid <- false, script <- in[0].script)
    ++ output(val <- false, x <- -1, n <- 0, mid <- true, script <- in[0].script)
    ++ output(val <- in[0].val, x <- 0, n <- 0, mid <- false, script <- in[0].script)
  elif (in.size = 1) & (in[0].x = 0) & (in[0].n = 0) & !in[0].mid then
    output(val <- false, x <- -1, n <- 0, mid <- false, script <- in[0].script)
    ++ output(val <- in[0].val, x <- 0, n <- 0, mid <- true, script <- in[0].script)
    ++ output(val <- false, x <- 1, n <- 0, mid <- false, script <- in[0].script)
  elif (in[0].x = in[0].n) & (in.size = 1) then
    output(val <- false, x <- in[0].n - 2, n <- in[0].n, mid <- false, script <- in[0].script)
    ++ output(val <- false, x <- in[0].n - 1, n <- in[0].n, mid <- true, script <- in[0].script)
    ++ in
  elif (in[0].x = in[0].n) & (in.size = 2) & in[0].mid then
    output(val <- false, x <- in[0].n - 1, n <- in[0].n, mid <- false, script <- in[0].script)
    ++ in
  elif (in[0].x = -1) & (in.size = 2) & !in[0].mid then
    in ++ output(val <- false, x <- 1, n <- in[0].n, mid <- false, script <- in[0].script)
  else in
in
let lv = realIn[0].val in
let cv = realIn[1].val in
let rv = realIn[2].val in
  (out[0].val = ((lv & cv & rv) ^ (cv & rv) ^ cv ^ rv))
& (realIn[1].x = realIn[0].x + 1)
& (realIn[2].x = realIn[1].x + 1)
& (realIn[1].n = realIn[0].n)
& (realIn[2].n = realIn[0].n)
& (realIn[1].mid & !(realIn[0].mid | realIn[2].mid))
& (out[0].x = realIn[1].x)
& (out[0].n = realIn[0].n - 1)
& (realIn.size = 3)
& (out.size = 3)
& !out[0].mid
& (out[0].script = in[0].script)
& copyEq(out[1], out[0], mid <- true)
& copyEq(out[2], out[0], mid <- false)
"""

_layer_script = None
_bit_script = None


def build_layer_script() -> Expr:
    global _layer_script
    if _layer_script is None:
        _layer_script = parse(LAYER_SCRIPT_SOURCE)
    return _layer_script


def build_bit_script() -> Expr:
    global _bit_script
    if _bit_script is None:
        _bit_script = parse(BIT_SCRIPT_SOURCE)
    return _bit_script


# ---------------------------------------------------------------------------
# Genesis constructors

def genesis_layer(layer, params: ChainParams = ChainParams()) -> Transaction:
    """Genesis transaction holding one whole-row output."""
    bits = Bits(layer)
    if not 1 <= len(bits) <= params.max_width:
        raise WidthExceeded(
            f"layer width {len(bits)} outside [1, {params.max_width}]")
    output = Output(build_layer_script(), Payload(((LAYER_FIELD, bits),)))
    check_output_limits(output, params)
    return Transaction(inputs=(), outputs=(output,), is_genesis=True)


def cell_output(val: int, x: int, n: int, mid: bool,
                script: Expr | None = None) -> Output:
    payload = Payload(((VAL_FIELD, bool(val)), (X_FIELD, x),
                       (N_FIELD, n), (MID_FIELD, bool(mid))))
    return Output(script if script is not None else build_bit_script(), payload)


def genesis_grid(row: GridRow, params: ChainParams = ChainParams()) -> Transaction:
    """Genesis transaction carrying three copies of every cell.

    Copy order per cell is (left-neighbor, mid, right-neighbor), i.e.
    mid flags (false, true, false), matching what the validator enforces
    for every later row.
    """
    if len(row.bits) > params.max_width:
        raise WidthExceeded(
            f"row width {len(row.bits)} exceeds {params.max_width}")
    script = build_bit_script()
    outputs = []
    for x, val in row.cells():
        outputs.append(cell_output(val, x, row.n, False, script))
        outputs.append(cell_output(val, x, row.n, True, script))
        outputs.append(cell_output(val, x, row.n, False, script))
    for out in outputs:
        check_output_limits(out, params)
    return Transaction(inputs=(), outputs=tuple(outputs), is_genesis=True)
