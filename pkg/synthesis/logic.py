"""
Boolean side of CSK demodulation: thermometer truth tables, sum-of-products
expressions and the inverted logic formulation (ILF), which rewrites every
product as a negated sum so that only ID and NOT cell blocks are needed.

Variables are thresholding outputs B_j; B_j = 1 iff the received level lies
above the j-th threshold. For symbol s, B_j = 1 exactly for j < s.
"""

from dataclasses import dataclass
from itertools import product

from model.errors import DomainError

MAX_ORDER = 8


@dataclass(frozen=True)
class Var:
    index: int

    def __str__(self):
        return f"B{self.index}"


@dataclass(frozen=True)
class Not:
    term: object

    def __str__(self):
        return f"NOT({self.term})" if isinstance(self.term, (Or, And)) else f"NOT {self.term}"


@dataclass(frozen=True)
class Or:
    terms: tuple

    def __str__(self):
        return " + ".join(str(t) for t in self.terms)


@dataclass(frozen=True)
class And:
    terms: tuple

    def __str__(self):
        return "".join(f"({t})" if isinstance(t, Or) else str(t) for t in self.terms)


def any_of(terms):
    terms = tuple(terms)
    return terms[0] if len(terms) == 1 else Or(terms)


def all_of(terms):
    terms = tuple(terms)
    return terms[0] if len(terms) == 1 else And(terms)


def evaluate(expr, bits) -> int:
    """Evaluate an expression; `bits[j]` is the value of B_j."""
    if isinstance(expr, Var):
        return int(bool(bits[expr.index]))
    if isinstance(expr, Not):
        return 1 - evaluate(expr.term, bits)
    if isinstance(expr, Or):
        return int(any(evaluate(t, bits) for t in expr.terms))
    if isinstance(expr, And):
        return int(all(evaluate(t, bits) for t in expr.terms))
    raise TypeError(f"not a Boolean expression: {expr!r}")


def contains_and(expr) -> bool:
    if isinstance(expr, And):
        return True
    if isinstance(expr, Not):
        return contains_and(expr.term)
    if isinstance(expr, Or):
        return any(contains_and(t) for t in expr.terms)
    return False


def not_depth(expr) -> int:
    """Deepest chain of nested NOT nodes."""
    if isinstance(expr, Var):
        return 0
    if isinstance(expr, Not):
        return 1 + not_depth(expr.term)
    return max((not_depth(t) for t in expr.terms), default=0)


def variables(expr) -> set:
    if isinstance(expr, Var):
        return {expr.index}
    if isinstance(expr, Not):
        return variables(expr.term)
    return set().union(*(variables(t) for t in expr.terms))


def _check_order(m):
    if not isinstance(m, int) or not 1 <= m <= MAX_ORDER:
        raise DomainError(f"CSK order m must be an integer in [1, {MAX_ORDER}], got {m!r}")


def thermometer_code(m: int, s: int) -> tuple:
    """(B_{2^m-2}, ..., B_0) for symbol s."""
    _check_order(m)
    if not 0 <= s < 2**m:
        raise DomainError(f"symbol {s} out of range for m={m}")
    return tuple(int(j < s) for j in range(2**m - 2, -1, -1))


def binary_code(m: int, s: int) -> tuple:
    """(Y_{m-1}, ..., Y_0) for symbol s."""
    return tuple((s >> i) & 1 for i in range(m - 1, -1, -1))


def as_bit_vector(code: tuple) -> list:
    """Reverse a most-significant-first code so that index j holds B_j."""
    return list(reversed(code))


def thermometer_decode_table(m: int) -> dict:
    """
    Demodulator back-end truth table.

    Returns:
        dict: (B_{2^m-2}, ..., B_0) -> (Y_{m-1}, ..., Y_0), one row per symbol.
    """
    _check_order(m)
    return {thermometer_code(m, s): binary_code(m, s) for s in range(2**m)}


def ilf_top_index(m: int, i: int) -> int:
    """q = 2^(m-1) - 1 + sum_{j=0}^{m-i-2} 2^(m-j-2)."""
    return 2 ** (m - 1) - 1 + sum(2 ** (m - j - 2) for j in range(m - i - 1))


def ilf_pairs(m: int, i: int) -> list:
    """(a, b) index pairs of the NOT(B_a + NOT B_b) summands of Y_i."""
    q = ilf_top_index(m, i)
    pairs = []
    l = 1
    while q - 2 * l * 2**i >= 0:
        pairs.append((q - (2 * l - 1) * 2**i, q - 2 * l * 2**i))
        l += 1
    return pairs


def ilf_backend(m: int) -> list:
    """
    ILF expressions, index i holding Y_i:
    Y_i = B_q + sum_l NOT(B_{q-(2l-1)2^i} + NOT B_{q-2l 2^i}).
    """
    _check_order(m)
    out = []
    for i in range(m):
        terms = [Var(ilf_top_index(m, i))]
        terms += [Not(Or((Var(a), Not(Var(b))))) for a, b in ilf_pairs(m, i)]
        out.append(any_of(terms))
    return out


def _minterm(code: tuple):
    """AND of literals fixing every variable of a most-significant-first code."""
    n = len(code)
    literals = [Var(n - 1 - k) if bit else Not(Var(n - 1 - k)) for k, bit in enumerate(code)]
    return all_of(literals)


def sop_from_table(table: dict) -> list:
    """
    Sum-of-products over the listed rows only (absent rows are don't-cares).

    Args:
        table (dict): input tuple (x_{n-1}..x_0) -> output tuple (y_{k-1}..y_0).

    Returns:
        list: Expressions indexed by output bit (index i holds y_i); an output
        that is never 1 is the empty Or.
    """
    if not table:
        raise DomainError("truth table is empty")
    width = {len(o) for o in table.values()}
    if len(width) != 1:
        raise DomainError("truth table rows have different output widths")
    k = width.pop()
    out = []
    for i in range(k):
        rows = [inputs for inputs, outputs in table.items() if outputs[k - 1 - i]]
        out.append(any_of(_minterm(r) for r in rows) if rows else Or(()))
    return out


def sop_backend(m: int) -> list:
    """Minterm expansion of the thermometer table over valid codes only."""
    return sop_from_table(thermometer_decode_table(m))


def evaluate_expressions(expressions: list, code: tuple) -> tuple:
    """Evaluate per-output expressions (index i = output i) on a most-significant-first code."""
    bits = as_bit_vector(code)
    return tuple(evaluate(expressions[i], bits) for i in range(len(expressions) - 1, -1, -1))


def all_input_codes(n: int):
    """Every n-bit input, most significant first."""
    return product((0, 1), repeat=n)
