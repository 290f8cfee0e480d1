"""Exact certification of a sequence-space construction with unbounded multiscale iterates.

The construction lives on weighted sequence spaces: either l1 with the norm
``sum_j j*|gamma_j|`` ("first" variant) or l2 with ``sum_j sqrt(j)*|gamma_j|``
("second" variant).  A linear operator maps basis vectors onto short profiles
built from the units ``eta_m = sqrt(c0 / M**m)``.  Every certified quantity is
a rational multiple of ``c0`` because the operator columns only ever meet each
other quadratically, so the whole verification runs in `fractions.Fraction`
arithmetic: no floats, no truncated tails (infinite geometric pieces are
summed in closed form).

Floating point appears in exactly one place, the independent proximal-gradient
cross-check (:func:`ista_oracle`), which is deliberately a different algorithm
on a truncated problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

RationalLike = Union[int, str, Fraction]

VARIANTS = ("first", "second")

ZERO = Fraction(0)
ONE = Fraction(1)


def _frac(x: RationalLike) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


class OracleNonConvergence(RuntimeError):
    """Raised when the proximal-gradient cross-check exhausts its iteration cap."""


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class SequenceParams:
    """Exact constants of the construction.

    ``A`` holds (A_1, ..., A_k) with A_1 = 1 - k*delta, A_2..A_{k-1} = delta
    and A_k = 2*delta; ``C`` holds the partial sums C_m = A_1 + ... + A_m,
    so C_k == 1 exactly.
    """

    M: Fraction
    alpha0: Fraction
    k: int
    delta: Fraction
    A1: Fraction
    A: Tuple[Fraction, ...]
    C: Tuple[Fraction, ...]
    b: Fraction
    K: Fraction
    c0: Fraction
    variant: str = "first"


def weight_float(j: int, variant: str) -> float:
    """Norm weight of coordinate j: j for the l1 variant, sqrt(j) for l2."""
    return float(j) if variant == "first" else math.sqrt(j)


def params_from(M: RationalLike, alpha0: RationalLike, variant: str = "first",
                k: int = 5, allow_experimental_k: bool = False) -> SequenceParams:
    """Derive the full constant set from (M, alpha0).

    Requires M >= 2.  k = 5 is the certified configuration; other k are
    accepted only with ``allow_experimental_k`` and carry no correctness
    promise.
    """
    M = _frac(M)
    alpha0 = _frac(alpha0)
    if M < 2:
        raise ValueError(f"M must be >= 2, got {M}")
    if alpha0 <= 0:
        raise ValueError(f"alpha0 must be positive, got {alpha0}")
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if k != 5 and not allow_experimental_k:
        raise ValueError("k != 5 is experimental; pass allow_experimental_k=True")
    if k < 3:
        raise ValueError("k must be >= 3")

    A1 = (1 + 1 / M**k) / (2 * (k + 1))
    delta = (1 - A1) / k
    if not (0 < delta < Fraction(1, k)):
        raise ValueError(f"derived delta={delta} leaves (0, 1/{k})")
    A = (A1,) + (delta,) * (k - 2) + (2 * delta,)
    C: List[Fraction] = []
    acc = ZERO
    for a in A:
        acc += a
        C.append(acc)
    if C[-1] != 1:
        raise AssertionError("partial sums must close at 1")
    b = (M - 1) * delta * A1 / (2 * M**k)
    K = sum(C[m - 1] / M ** (m - 1) for m in range(1, k)) + (1 - delta) / M ** (k - 1)
    c0 = b * M**2 / (2 * alpha0 * delta * K)
    return SequenceParams(M=M, alpha0=alpha0, k=k, delta=delta, A1=A1,
                          A=tuple(A), C=tuple(C), b=b, K=K, c0=c0, variant=variant)


def tampered_delta(params: SequenceParams, new_delta: RationalLike) -> SequenceParams:
    """Test hook: replace delta (and its dependents A, C, K) while keeping the
    originally derived b and c0, producing an inconsistent constant set."""
    d = _frac(new_delta)
    k = params.k
    A1 = 1 - k * d
    A = (A1,) + (d,) * (k - 2) + (2 * d,)
    C: List[Fraction] = []
    acc = ZERO
    for a in A:
        acc += a
        C.append(acc)
    K = sum(C[m - 1] / params.M ** (m - 1) for m in range(1, k)) \
        + (1 - d) / params.M ** (k - 1)
    return replace(params, delta=d, A1=A1, A=tuple(A), C=tuple(C), K=K)


def lambda_n(params: SequenceParams, n: int) -> Fraction:
    """Penalty parameter of step n: alpha0 * M**n."""
    return params.alpha0 * params.M**n


# ---------------------------------------------------------------------------
# sparse vectors


@dataclass
class SparseSeqVec:
    """Sparse sequence vector with an optional geometric tail.

    ``entries`` maps coordinate index (>= 1) to a rational coefficient.  In
    the "standard" basis the coefficient is the literal entry; in the "eta"
    basis the entry at m is ``coeff * eta_m`` with eta_m = sqrt(c0/M**m).
    A tail means: coefficient ``tail_coeff`` at every m >= tail_start (used
    for the distinguished first operator column, whose profile never ends).
    """

    entries: Dict[int, Fraction]
    basis: str = "standard"
    weight_kind: str = "index"
    tail_start: Optional[int] = None
    tail_coeff: Fraction = ZERO

    def __post_init__(self) -> None:
        # floats are tolerated for iterates whose magnitudes are irrational
        self.entries = {m: (v if isinstance(v, float) else _frac(v))
                        for m, v in self.entries.items() if v != 0}
        if any(m < 1 for m in self.entries):
            raise ValueError("coordinate indices start at 1")
        if self.tail_start is not None and self.entries and \
                max(self.entries) >= self.tail_start:
            raise ValueError("head entries must end before the tail starts")

    def coeff(self, m: int) -> Fraction:
        if self.tail_start is not None and m >= self.tail_start:
            return self.tail_coeff
        return self.entries.get(m, ZERO)

    def is_zero(self) -> bool:
        return not self.entries and (self.tail_start is None or self.tail_coeff == 0)

    def support(self) -> List[int]:
        return sorted(self.entries)


def eta_inner(u: SparseSeqVec, v: SparseSeqVec, params: SequenceParams) -> Fraction:
    """Exact l2 inner product of two eta-basis vectors.

    Head x head and head x tail products are finite sums of c0/M**m terms;
    the tail x tail part is a geometric series summed in closed form.
    """
    if u.basis != "eta" or v.basis != "eta":
        raise ValueError("eta_inner expects eta-basis vectors")
    M, c0 = params.M, params.c0
    ms = set(u.entries) | set(v.entries)
    total = ZERO
    for m in ms:
        p = u.coeff(m) * v.coeff(m)
        if p:
            total += p / M**m
    if u.tail_start is not None and v.tail_start is not None:
        start = max(u.tail_start, v.tail_start)
        # sum_{m >= start} M**-m  ==  1 / ((M-1) * M**(start-1))
        total += u.tail_coeff * v.tail_coeff / ((M - 1) * M ** (start - 1))
    return c0 * total


# ---------------------------------------------------------------------------
# the operator


def _bracket(j: int, params: SequenceParams) -> Dict[int, Fraction]:
    """eta-coefficients of (b / w_j) * Lambda(e_j) for j >= 2.

    Support is {j-1, ..., j+k-1}: the profile (A_1, ..., A_k) shifted to start
    at j-1, with the -delta/+delta correction on its last two slots.
    """
    k, delta = params.k, params.delta
    coeffs: Dict[int, Fraction] = {}
    for i in range(1, k + 1):
        coeffs[j + i - 2] = coeffs.get(j + i - 2, ZERO) + params.A[i - 1]
    coeffs[j + k - 2] -= delta
    coeffs[j + k - 1] = coeffs.get(j + k - 1, ZERO) + delta
    return coeffs


def _bracket_vec(j: int, params: SequenceParams) -> SparseSeqVec:
    return SparseSeqVec(_bracket(j, params), basis="eta")


def operator_column(j: int, params: SequenceParams, variant: Optional[str] = None,
                    trunc: Optional[int] = None) -> SparseSeqVec:
    """Exact image of the j-th basis vector, in eta coordinates.

    For j == 1 the column is a finite head plus an infinite geometric tail
    (coefficient 1 at every m > k), kept symbolic so downstream inner products
    can sum it in closed form.  For the "second" variant the stored rationals
    are the coefficients of ``sqrt(j) * eta_m``: the irrational sqrt(j) is
    carried implicitly and cancels in every certified quantity.

    ``trunc`` materialises the head up to that index; it must not cut into the
    structural support.
    """
    variant = variant or params.variant
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if j < 1:
        raise ValueError("column index must be >= 1")
    weight_kind = "index" if variant == "first" else "sqrt-index"
    k = params.k
    if j == 1:
        head = {m: params.C[m - 1] for m in range(1, k + 1)}
        head[k] = head[k] - params.delta  # == 1 - delta
        tail_start, tail_coeff = k + 1, ONE
        if trunc is not None:
            if trunc < k + 1:
                raise ValueError(f"trunc={trunc} cuts into the structural support")
            for m in range(k + 1, trunc + 1):
                head[m] = ONE
            tail_start = trunc + 1
        return SparseSeqVec(head, basis="eta", weight_kind=weight_kind,
                            tail_start=tail_start, tail_coeff=tail_coeff)
    if trunc is not None and trunc < j + k - 1:
        raise ValueError(f"trunc={trunc} cuts into the structural support of column {j}")
    scale = Fraction(j) / params.b if variant == "first" else 1 / params.b
    coeffs = {m: scale * c for m, c in _bracket(j, params).items()}
    return SparseSeqVec(coeffs, basis="eta", weight_kind=weight_kind)


def apply_operator_exact(gamma: Mapping[int, RationalLike],
                         params: SequenceParams) -> SparseSeqVec:
    """Exact image of a finitely supported vector under the l1-variant operator."""
    gamma = {int(jj): _frac(v) for jj, v in gamma.items() if v != 0}
    if any(jj < 1 for jj in gamma):
        raise ValueError("coordinate indices start at 1")
    k, b = params.k, params.b
    reach = max((jj + k - 1 for jj in gamma), default=0)
    head: Dict[int, Fraction] = {}
    tail_start: Optional[int] = None
    tail_coeff = ZERO
    g1 = gamma.pop(1, ZERO)
    if g1:
        col1 = operator_column(1, params, variant="first")
        for m, c in col1.entries.items():
            head[m] = head.get(m, ZERO) + g1 * c
        tail_start = max(k + 1, reach + 1)
        for m in range(k + 1, tail_start):
            head[m] = head.get(m, ZERO) + g1
        tail_coeff = g1
    for jj, g in gamma.items():
        scale = g * jj / b
        for m, c in _bracket(jj, params).items():
            head[m] = head.get(m, ZERO) + scale * c
    return SparseSeqVec(head, basis="eta",
                        tail_start=tail_start, tail_coeff=tail_coeff)


# ---------------------------------------------------------------------------
# closed-form iterates and residuals


def closed_form_iterate(n: int, params: SequenceParams,
                        variant: Optional[str] = None) -> SparseSeqVec:
    """The single-entry increment of step n: magnitude b/(n+2) at coordinate
    n+2 (first variant) or b/sqrt(n+2) (second variant, stored as a float)."""
    if n < 0:
        raise ValueError("step index must be >= 0")
    variant = variant or params.variant
    j = n + 2
    if variant == "first":
        return SparseSeqVec({j: params.b / j}, weight_kind="index")
    return SparseSeqVec({j: float(params.b) / math.sqrt(j)}, weight_kind="sqrt-index")


def harmonic(n: int) -> Fraction:
    """H(n) = 1 + 1/2 + ... + 1/n, exact."""
    return sum((Fraction(1, i) for i in range(1, n + 1)), ZERO)


def sigma_l1_norm(params: SequenceParams, n: int) -> Fraction:
    """l1-variant ambient norm of the n-th partial sum: b*(H(n+2) - 1)."""
    return params.b * (harmonic(n + 2) - 1)


def sigma_l2_norm_squared(params: SequenceParams, n: int) -> Fraction:
    """Squared l2 norm of the n-th partial sum in the second variant."""
    return params.b**2 * (harmonic(n + 2) - 1)


def increment_f_norm(params: SequenceParams) -> Fraction:
    """F-norm of every increment; the weight cancels the magnitude, giving b."""
    return params.b


def residual_vector(params: SequenceParams, n: int) -> SparseSeqVec:
    """Exact data-minus-image vector after steps 0..n, in eta coordinates.

    Built by actually subtracting the accumulated columns from the first one
    (not from the simplified closed form), so it can serve as one side of a
    dual-path check.
    """
    if n < 0:
        raise ValueError("step index must be >= 0")
    n1 = n + 2
    k = params.k
    col1 = operator_column(1, params, variant="first")
    head = dict(col1.entries)
    for m in range(k + 1, n1 + k):
        head[m] = ONE
    for jj in range(2, n1 + 1):
        for m, c in _bracket(jj, params).items():
            head[m] = head.get(m, ZERO) - c
    return SparseSeqVec(head, basis="eta", tail_start=n1 + k, tail_coeff=ONE)


# ---------------------------------------------------------------------------
# the coefficient table


def _geom_sum(params: SequenceParams, start: int) -> Fraction:
    """sum_{m >= start} M**-m."""
    M = params.M
    return 1 / ((M - 1) * M ** (start - 1))


def tail_constant(params: SequenceParams) -> Fraction:
    """T with A(j, n1) = T * M**-(j - n1) / M**n1 for all j >= n1 + k + 1."""
    M, delta, k = params.M, params.delta, params.k
    s = sum(M ** Fraction(-i) for i in range(k))
    return (params.c0 / params.b) * (params.A1 * M + delta * s)


def coefficient_A(j: int, n1: int, params: SequenceParams) -> Fraction:
    """Closed-form weighted inner product of the step residual with column j.

    The values do not depend on the variant: the column weight cancels
    against the 1/w_j normalisation.
    """
    if n1 < 2:
        raise ValueError("n1 must be >= 2")
    if j < 1:
        raise ValueError("j must be >= 1")
    M, k, delta, A1 = params.M, params.k, params.delta, params.A1
    C, c0, b = params.C, params.c0, params.b
    pref = c0 / (b * M**n1)

    if j == 1:
        if n1 < k:
            total = sum(C[m - n1] * C[m - 1] / M**m for m in range(n1, k))
            total += C[k - n1] * (1 - delta) / M**k
            total += sum(C[m - n1] / M**m for m in range(k + 1, n1 + k - 1))
            total += (1 - delta) / M ** (n1 + k - 1)
        elif n1 == k:
            total = C[0] * (1 - delta) / M**k
            total += sum(C[m - k] / M**m for m in range(k + 1, 2 * k - 1))
            total += (1 - delta) / M ** (2 * k - 1)
        else:
            total = sum(C[m - n1] / M**m for m in range(n1, n1 + k - 1))
            total += (1 - delta) / M ** (n1 + k - 1)
        total += _geom_sum(params, n1 + k)
        return c0 * total

    if j <= n1 - k:
        return ZERO

    if j <= n1 - 1:  # j = n1 + s - k with 1 <= s <= k - 1
        s = j - n1 + k
        return pref * delta * sum(C[m - 1] / M ** (m - 1) for m in range(1, s + 1))

    if j == n1:
        return pref * delta * params.K

    if j <= n1 + k - 1:  # j = n1 + s with 1 <= s <= k - 1
        s = j - n1
        total = A1 * C[s - 1] / M ** (s - 1)
        total += delta * sum(C[m] / M**m for m in range(s, k - 1))
        total += delta * (1 - delta) / M ** (k - 1)
        total += delta * sum(M ** Fraction(-m) for m in range(k, k + s))
        return pref * total

    if j == n1 + k:
        total = A1 * (1 - delta) / M ** (k - 1)
        total += delta * sum(M ** Fraction(-m) for m in range(k, 2 * k))
        return pref * total

    # geometric regime: exact ratio M between consecutive values
    return tail_constant(params) / M ** (j - n1) / M**n1


def inner_product_A(j: int, n1: int, params: SequenceParams) -> Fraction:
    """The same quantity as :func:`coefficient_A`, computed the slow honest
    way: accumulate the residual from the columns, then take the exact inner
    product (geometric tails in closed form).  Transcription-error detector.
    """
    res = residual_vector(params, n1 - 2)
    if j == 1:
        return eta_inner(res, operator_column(1, params, variant="first"), params)
    return eta_inner(res, _bracket_vec(j, params), params) / params.b


# ---------------------------------------------------------------------------
# dual norms and minimizer certificates


@dataclass
class DualNormResult:
    value: Fraction
    attained_index: Optional[int]
    tail_certified: bool = False
    value_is_exact: bool = True


@dataclass
class ResidualFunctional:
    """Marker for the functional u -> <residual_n, Lambda(u)> on the weighted space."""
    params: SequenceParams
    n: int


def residual_dual_norm(params: SequenceParams, n: int) -> DualNormResult:
    """Exact dual norm sup_j |A(j, n1)| of the step-n residual functional.

    The head j <= n1+k+1 is enumerated; beyond that the values decay by an
    exact factor M per index, so the first tail value bounds the rest.
    """
    n1 = n + 2
    best: Fraction = ZERO
    best_j: Optional[int] = None
    for j in range(1, n1 + params.k + 2):
        v = abs(coefficient_A(j, n1, params))
        if v > best:
            best, best_j = v, j
    return DualNormResult(value=best, attained_index=best_j, tail_certified=True)


def dual_norm(kappa: Union[SparseSeqVec, ResidualFunctional],
              weight_kind: Optional[str] = None) -> DualNormResult:
    """sup_j |kappa_j| / w_j with weights w_j = j ("index") or sqrt(j).

    Finitely supported functionals are maximised by enumeration; the
    composed-residual functional carries its own geometric tail certificate.
    For sqrt weights the supremum is located by exact squared comparisons and
    reported as a float value (the index and certificate stay exact).
    """
    if isinstance(kappa, ResidualFunctional):
        return residual_dual_norm(kappa.params, kappa.n)
    weight_kind = weight_kind or kappa.weight_kind
    if kappa.tail_start is not None and kappa.tail_coeff != 0:
        raise ValueError("unbounded support: supply a functional with a certified tail")
    if not kappa.entries:
        return DualNormResult(value=ZERO, attained_index=None)
    if weight_kind == "index":
        best_j = max(kappa.entries, key=lambda m: (abs(_frac(kappa.entries[m])) / m, -m))
        return DualNormResult(value=abs(_frac(kappa.entries[best_j])) / best_j,
                              attained_index=best_j)
    if weight_kind == "sqrt-index":
        best_j = max(kappa.entries,
                     key=lambda m: (_frac(kappa.entries[m]) ** 2 / m, -m))
        sq = _frac(kappa.entries[best_j]) ** 2 / best_j
        return DualNormResult(value=math.sqrt(float(sq)),  # type: ignore[arg-type]
                              attained_index=best_j, value_is_exact=False)
    raise ValueError(f"unknown weight kind {weight_kind!r}")


@dataclass
class MinimizerCertificate:
    n: int
    dual_norm_value: Fraction
    dual_bound: Fraction          # 1 / (2 lambda_n)
    attained_index: int
    pairing: Fraction             # <v_n, Lambda(u_n)>
    pairing_target: Fraction      # ||u_n||_F / (2 lambda_n)
    certified: bool


def certify_step_minimizer(params: SequenceParams, n: int) -> MinimizerCertificate:
    """Exact optimality certificate for the step-n increment: the residual's
    dual norm equals 1/(2 lambda_n) and the pairing equality holds."""
    lam = lambda_n(params, n)
    bound = 1 / (2 * lam)
    dn = residual_dual_norm(params, n)
    res = residual_vector(params, n)
    pairing = eta_inner(res, _bracket_vec(n + 2, params), params)
    target = increment_f_norm(params) / (2 * lam)
    certified = (dn.value == bound and dn.attained_index == n + 2
                 and pairing == target)
    return MinimizerCertificate(n=n, dual_norm_value=dn.value, dual_bound=bound,
                                attained_index=dn.attained_index or 0,
                                pairing=pairing, pairing_target=target,
                                certified=certified)


# ---------------------------------------------------------------------------
# claim verification


@dataclass
class ClaimRow:
    n1: int
    j: int
    value: Fraction
    ok: bool


@dataclass
class ClaimViolation:
    n1: int
    j: Optional[int]
    relation: str
    detail: str


@dataclass
class ClaimReport:
    n1_max: int
    j_extra: int
    rows: List[ClaimRow] = field(default_factory=list)
    violations: List[ClaimViolation] = field(default_factory=list)
    all_pass: bool = True


def verify_claim(params: SequenceParams, n1_max: int, j_extra: int) -> ClaimReport:
    """Exact verification of the coefficient-table inequalities.

    For every n1 in [2, n1_max] and j in [1, n1 + j_extra] the following are
    checked as rational comparisons (no tolerances anywhere):

    * |A(j, n1)| <= A(n1, n1), with A(n1, n1) * 2*alpha0*M**n1 == M**2;
    * A(j, n1) == 0 exactly for 2 <= j <= n1 - k, and the first nonzero
      index at or after 2 is max(2, n1 - k + 1);
    * the strictly increasing chain up to j = n1, including the head
      conditions 0 < A(1, n1) < A(jn, n1) and, when jn < n1,
      A(1, n1) + A(jn, n1) < A(jn + 1, n1);
    * the strictly decreasing positive chain for j >= n1;
    * the tail certificate: beyond j = n1 + k the values follow an exact
      geometric law with ratio 1/M, so the enumerated boundary checks
      certify the whole infinite family.
    """
    if n1_max < 2:
        raise ValueError("n1_max must be >= 2")
    k = params.k
    if j_extra < k + 2:
        raise ValueError(f"j_extra must be >= {k + 2}")
    report = ClaimReport(n1_max=n1_max, j_extra=j_extra)

    def fail(n1: int, j: Optional[int], relation: str, detail: str) -> None:
        report.violations.append(ClaimViolation(n1, j, relation, detail))
        report.all_pass = False

    M, alpha0 = params.M, params.alpha0
    for n1 in range(2, n1_max + 1):
        jmax = n1 + j_extra
        values: Dict[int, Fraction] = {}
        for j in range(1, n1 + k + 2):
            values[j] = coefficient_A(j, n1, params)
        v = values[n1 + k + 1]
        for j in range(n1 + k + 2, jmax + 1):
            v = v / M
            values[j] = v

        bound = values[n1]
        row_ok = {j: True for j in values}

        if bound * 2 * alpha0 * M**n1 != M**2:
            fail(n1, n1, "normalization",
                 f"A(n1,n1)*2*alpha0*M^n1 = {bound * 2 * alpha0 * M**n1} != M^2")
            row_ok[n1] = False

        jn = max(2, n1 - k + 1)
        for j in range(2, n1 - k + 1):
            if values[j] != 0:
                fail(n1, j, "zero-region", f"A({j},{n1}) = {values[j]} != 0")
                row_ok[j] = False
        first_nonzero = next((j for j in range(2, n1 + 1) if values[j] != 0), None)
        if first_nonzero != jn:
            fail(n1, first_nonzero, "first-nonzero-index",
                 f"min nonzero index {first_nonzero} != {jn}")

        if not values[1] > 0:
            fail(n1, 1, "head-positive", f"A(1,{n1}) = {values[1]} <= 0")
            row_ok[1] = False
        if not values[1] < values[jn]:
            fail(n1, 1, "head-below-chain",
                 f"A(1,{n1}) = {values[1]} >= A({jn},{n1}) = {values[jn]}")
            row_ok[1] = False
        for j in range(jn, n1):
            if not values[j] < values[j + 1]:
                fail(n1, j, "increasing-chain",
                     f"A({j},{n1}) = {values[j]} >= A({j + 1},{n1}) = {values[j + 1]}")
                row_ok[j] = False
        if jn < n1 and not values[1] + values[jn] < values[jn + 1]:
            fail(n1, jn, "head-pair-bound",
                 f"A(1,{n1}) + A({jn},{n1}) = {values[1] + values[jn]} "
                 f">= A({jn + 1},{n1}) = {values[jn + 1]}")
            row_ok[jn] = False

        for j in range(n1, jmax):
            if not (values[j + 1] > 0 and values[j + 1] < values[j]):
                fail(n1, j, "decreasing-chain",
                     f"A({j},{n1}) = {values[j]}, A({j + 1},{n1}) = {values[j + 1]}")
                row_ok[j] = False

        for j in range(1, jmax + 1):
            if abs(values[j]) > bound:
                fail(n1, j, "bound", f"|A({j},{n1})| = {abs(values[j])} > {bound}")
                row_ok[j] = False

        t1 = values[n1 + k + 1]
        if not t1 > 0:
            fail(n1, n1 + k + 1, "tail-positive", f"tail start {t1} <= 0")
        if values[n1 + k + 2] * M != t1:
            fail(n1, n1 + k + 2, "tail-ratio",
                 f"A({n1 + k + 1},{n1}) != M * A({n1 + k + 2},{n1})")
        if tail_constant(params) / M ** (k + 1) / M**n1 != t1:
            fail(n1, n1 + k + 1, "tail-constant", "closed form disagrees")

        for j in range(1, jmax + 1):
            report.rows.append(ClaimRow(n1=n1, j=j, value=values[j], ok=row_ok[j]))
    return report


# ---------------------------------------------------------------------------
# injectivity recursion


@dataclass
class InjectivityReport:
    image_is_zero: bool
    nonzero_coords: List[int]
    tail_nonzero: bool
    recursion_residuals: Dict[int, Fraction]
    recursion_holds: bool
    forced_zero: bool


def injectivity_check(gamma: Mapping[int, RationalLike],
                      params: SequenceParams) -> InjectivityReport:
    """Check the kernel recursion for a finitely supported vector.

    The image vanishes on every tested coordinate exactly when
    ``gamma_j * j / b == -gamma_1`` for all j >= 2; since the formal solution
    of that recursion is not summable, a finitely supported gamma with zero
    image must be zero.  The report carries exact residuals of the recursion
    and the exact nonzero coordinates of the image.
    """
    gamma = {int(j): _frac(v) for j, v in gamma.items() if v != 0}
    image = apply_operator_exact(gamma, params)
    nonzero = sorted(image.entries)
    tail_nonzero = image.tail_start is not None and image.tail_coeff != 0
    g1 = gamma.get(1, ZERO)
    hi = max(gamma, default=1)
    residuals = {j: gamma.get(j, ZERO) * j / params.b + g1
                 for j in range(2, hi + 2)}
    recursion_holds = all(r == 0 for r in residuals.values())
    image_is_zero = not nonzero and not tail_nonzero
    forced_zero = recursion_holds and g1 == 0 and not gamma
    return InjectivityReport(image_is_zero=image_is_zero,
                             nonzero_coords=nonzero,
                             tail_nonzero=tail_nonzero,
                             recursion_residuals=residuals,
                             recursion_holds=recursion_holds,
                             forced_zero=forced_zero)


# ---------------------------------------------------------------------------
# floating-point materialisation and the proximal-gradient cross-check


def eta_float(params: SequenceParams, m: int) -> float:
    return math.sqrt(float(params.c0 / params.M**m))


def truncated_matrix(params: SequenceParams, dim: int,
                     variant: Optional[str] = None,
                     mdim: Optional[int] = None) -> np.ndarray:
    """Dense float matrix of the operator on coordinates 1..dim, with the
    measurement side extended to mdim (default dim + k) so no column is cut."""
    variant = variant or params.variant
    k = params.k
    if mdim is None:
        mdim = dim + k
    if mdim < dim + k:
        raise ValueError("mdim must cover the spill of the last column")
    A = np.zeros((mdim, dim))
    col1 = operator_column(1, params, variant="first")
    for m in range(1, mdim + 1):
        A[m - 1, 0] = float(col1.coeff(m)) * eta_float(params, m)
    b = float(params.b)
    for j in range(2, dim + 1):
        w = weight_float(j, variant)
        for m, c in _bracket(j, params).items():
            if m <= mdim:
                A[m - 1, j - 1] = (w / b) * float(c) * eta_float(params, m)
    return A


def data_floats(params: SequenceParams, mdim: int) -> np.ndarray:
    """Float truncation of the data vector (the image of the first basis vector)."""
    col1 = operator_column(1, params, variant="first")
    return np.array([float(col1.coeff(m)) * eta_float(params, m)
                     for m in range(1, mdim + 1)])


def _power_norm2(matvec, rmatvec, dim: int, iters: int = 200, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(dim)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        y = rmatvec(matvec(x))
        lam = float(np.linalg.norm(y))
        if lam == 0.0:
            return 0.0
        x = y / lam
    return lam


def _soft(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _ista(matvec, rmatvec, target: np.ndarray, lam: float, weights: np.ndarray,
          tol: float, max_iters: int) -> Tuple[np.ndarray, int]:
    """Proximal gradient for lam*||target - A u||^2 + sum_j w_j |u_j| from u = 0."""
    dim = weights.shape[0]
    norm2 = _power_norm2(matvec, rmatvec, dim)
    step = 0.9 / (2.0 * lam * norm2)
    thresh = step * weights
    u = np.zeros(dim)
    for it in range(max_iters):
        grad = -2.0 * lam * rmatvec(target - matvec(u))
        u_new = _soft(u - step * grad, thresh)
        if np.linalg.norm(u_new - u) <= tol:
            return u_new, it + 1
        u = u_new
    raise OracleNonConvergence(
        f"no fixed point within {max_iters} iterations (tol={tol})")


def ista_oracle(params: SequenceParams, n: int, dim: int, tol: float,
                variant: Optional[str] = None,
                max_iters: int = 10**6, lam_scale: float = 1.0) -> np.ndarray:
    """Independent brute-force minimiser of the step-n subproblem on the
    truncated space, by proximal gradient with per-coordinate weighted
    soft thresholding.  Returns the candidate increment.

    ``lam_scale`` multiplies the step's penalty parameter; scaling it far
    enough down pushes the dual norm of the data below the zero threshold
    and the oracle must return the zero vector.
    """
    variant = variant or params.variant
    if dim < n + params.k + 10:
        raise ValueError(f"dim must be >= n + k + 10 = {n + params.k + 10}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    mdim = dim + params.k
    A = truncated_matrix(params, dim, variant=variant, mdim=mdim)
    f = data_floats(params, mdim)
    sigma_prev = np.zeros(dim)
    for i in range(n):
        it = closed_form_iterate(i, params, variant=variant)
        ((idx, val),) = it.entries.items()
        sigma_prev[idx - 1] = float(val)
    target = f - A @ sigma_prev
    lam = float(lambda_n(params, n)) * lam_scale
    weights = np.array([weight_float(j, variant) for j in range(1, dim + 1)])
    u, _ = _ista(lambda x: A @ x, lambda y: A.T @ y, target, lam, weights,
                 tol, max_iters)
    return u


def ista_solver(weights: np.ndarray, fp_tol: float, max_iters: int = 10**6):
    """Inner-solver handle for the decomposition engine: solves each step's
    weighted-l1 subproblem by proximal gradient (ignores the supplied initial
    guess; proximal iterations start from zero)."""
    weights = np.asarray(weights, dtype=float)

    def solve(step_problem):
        target = step_problem.data - step_problem.forward.apply(step_problem.sigma_prev)
        u, iters = _ista(step_problem.forward.apply, step_problem.forward.adjoint,
                         target, float(step_problem.lam), weights, fp_tol, max_iters)
        from .gradsolve import SolveResult
        return SolveResult(minimizer=u, final_value=step_problem.value(u),
                           iterations=iters, converged=True, stop_reason="tolerance")

    return solve


class WeightedL1:
    """Regularizer handle: sum_j w_j |u_j| (value only; not smooth)."""

    one_homogeneous = True

    def __init__(self, weights: np.ndarray):
        self.weights = np.asarray(weights, dtype=float)

    def value(self, u: np.ndarray) -> float:
        return float(np.dot(self.weights, np.abs(u)))
