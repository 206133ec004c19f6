"""Prime search in the generalized Fermat family ``P(k) = a**(b**k) + c``.

Per index ``k`` the pipeline is: algebraic compositeness filters (no big
arithmetic), exact evaluation under a bit limit, then trial division and
Miller–Rabin.
"""

from __future__ import annotations

import hashlib
import logging
import math
import random
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator, Optional

from .errors import BadBase, BadExponentBase, NotCoprime, SinkFailure, ValidationError

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

PRIME = "Prime"
PROBABLE_PRIME = "ProbablePrime"
COMPOSITE = "Composite"
NON_CANDIDATE = "NonCandidate"
SKIPPED = "Skipped"

EXCEEDS_BIT_LIMIT = "ExceedsBitLimit"

DETERMINISTIC_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
# Smallest strong pseudoprime to all of DETERMINISTIC_BASES (Sorenson & Webster, 2015).
DETERMINISTIC_LIMIT = 318665857834031151167461


@dataclass(frozen=True)
class Policy:
    max_bits: int = 65536
    trial_bound: int = 100_000
    mr_rounds: int = 24

    def __post_init__(self):
        if self.max_bits < 1 or self.trial_bound < 2 or self.mr_rounds < 0:
            raise ValidationError(f"invalid policy {self}")

    @property
    def fingerprint(self) -> str:
        return f"max_bits={self.max_bits};trial_bound={self.trial_bound};mr_rounds={self.mr_rounds}"

    def to_json(self) -> dict:
        return asdict(self)


DEFAULT_POLICY = Policy()


@dataclass(frozen=True)
class Triplet:
    a: int
    b: int
    c: int


def validate_triplet(a: int, b: int, c: int) -> Triplet:
    if a < 2:
        raise BadBase(f"a must be at least 2, got {a}")
    if b < 2:
        raise BadExponentBase(f"b must be at least 2, got {b}")
    if math.gcd(a, c) != 1:
        raise NotCoprime(f"a and c must be coprime, gcd({a}, {c}) = {math.gcd(a, c)}")
    return Triplet(a, b, c)


@dataclass(frozen=True)
class TowerValue:
    k: int
    value: int
    bit_length: int


@dataclass(frozen=True)
class Skipped:
    k: int
    reason: str
    predicted_bits: float


def predicted_bits(t: Triplet, k: int) -> float:
    """``b**k * log2(a) + 1``, computed without forming ``b**k`` when huge."""
    log_exp = k * math.log2(t.b)
    if log_exp > 1000:
        return math.inf
    return float(t.b ** k) * math.log2(t.a) + 1.0


def tower_value(t: Triplet, k: int, max_bits: int = DEFAULT_POLICY.max_bits):
    """Exact ``a**(b**k) + c``, or :class:`Skipped` when over ``max_bits``."""
    if k < 0:
        raise ValidationError(f"k must be non-negative, got {k}")
    bits = predicted_bits(t, k)
    if bits > max_bits:
        return Skipped(k, EXCEEDS_BIT_LIMIT, bits)
    value = t.a ** (t.b ** k) + t.c
    return TowerValue(k, value, value.bit_length())


# -- algebraic filters ------------------------------------------------------------

PARITY = "Parity"
PLUS_ONE = "PlusOneForm"
MINUS_ONE = "MinusOneForm"


def _smallest_prime_factor(n: int) -> int:
    if n % 2 == 0:
        return 2
    p = 3
    while p * p <= n:
        if n % p == 0:
            return p
        p += 2
    return n


def _smallest_odd_prime_factor(n: int) -> Optional[int]:
    while n % 2 == 0:
        n //= 2
    return None if n == 1 else _smallest_prime_factor(n)


@dataclass(frozen=True)
class CompositeReason:
    """Why ``P(k)`` is composite, with a divisor ``base**exponent + addend``.

    The divisor is proper except in the small cases the filter names.
    ``exponent_expr`` spells the exponent symbolically so huge ``k`` never
    needs printing.
    """

    kind: str
    base: int
    exponent: int
    addend: int
    exponent_expr: str

    @property
    def divisor_expr(self) -> str:
        if self.exponent == 1:
            return str(self.base + self.addend)
        return f"{self.base}^{self.exponent_expr}{self.addend:+d}"

    def divisor(self) -> int:
        return self.base ** self.exponent + self.addend

    def to_json(self) -> dict:
        return {"kind": self.kind, "divisor": self.divisor_expr}


def algebraic_filter(t: Triplet, k: int) -> Optional[CompositeReason]:
    """A form-based compositeness proof for ``P(k)``, or ``None``.

    * Parity: ``a`` and ``c`` odd make ``P(k)`` even (composite unless it is 2).
    * PlusOneForm: ``c == 1`` and ``b**k`` has an odd prime factor ``p``, so
      ``a**(b**k/p) + 1`` divides ``P(k)``.
    * MinusOneForm: ``c == -1``; for ``a > 2`` and ``k >= 1``, ``a - 1``
      divides ``P(k)``; for ``a == 2`` a composite exponent ``b**k = d*e``
      gives the divisor ``2**d - 1``.

    Only the exponent ``b**k`` is ever formed, never ``P(k)``.
    """
    if t.a % 2 == 1 and t.c % 2 != 0:
        return CompositeReason(PARITY, 2, 1, 0, "1")
    if t.c == 1 and k >= 1:
        p = _smallest_odd_prime_factor(t.b)
        if p is not None:
            return CompositeReason(PLUS_ONE, t.a, t.b ** k // p, 1,
                                   f"({t.b}^{k}/{p})" if k > 1 else str(t.b // p))
    if t.c == -1 and k >= 1:
        if t.a > 2:
            return CompositeReason(MINUS_ONE, t.a, 1, -1, "1")
        # b**k is composite whenever k >= 2, or k == 1 with b composite
        d = _smallest_prime_factor(t.b)
        if k >= 2 or d != t.b:
            return CompositeReason(MINUS_ONE, 2, d, -1, str(d))
    return None


def _exact_if_small(t: Triplet, k: int, reason: CompositeReason) -> Optional[int]:
    """``P(k)`` when it is small enough to coincide with its own filter divisor
    (the exceptional cases), else ``None``."""
    limit = max(abs(t.c).bit_length(), 2) + 2
    if reason.kind != PARITY:
        return None
    if predicted_bits(t, k) > limit:
        return None
    return t.a ** (t.b ** k) + t.c


# -- primality ----------------------------------------------------------------------

@lru_cache(maxsize=8)
def primes_up_to(bound: int) -> tuple[int, ...]:
    if bound < 2:
        return ()
    sieve = bytearray([1]) * (bound + 1)
    sieve[0:2] = b"\x00\x00"
    for p in range(2, math.isqrt(bound) + 1):
        if sieve[p]:
            sieve[p * p::p] = bytearray(len(range(p * p, bound + 1, p)))
    return tuple(i for i, v in enumerate(sieve) if v)


@dataclass(frozen=True)
class PrimalityVerdict:
    status: str
    evidence: Optional[dict] = None
    rounds: int = 0

    @property
    def is_prime(self) -> bool:
        return self.status in (PRIME, PROBABLE_PRIME)

    def to_json(self) -> dict:
        return {"status": self.status, "evidence": self.evidence, "rounds": self.rounds}


def _strong_probable_prime(n: int, base: int, d: int, s: int) -> bool:
    x = pow(base, d, n)
    if x == 1 or x == n - 1:
        return True
    for _ in range(s - 1):
        x = x * x % n
        if x == n - 1:
            return True
    return False


def _extra_bases(n: int, fingerprint: str, count: int) -> list[int]:
    digest = hashlib.sha256(f"{fingerprint}|{n}".encode()).digest()
    rng = random.Random(int.from_bytes(digest, "big"))
    return [rng.randrange(2, n - 1) for _ in range(count)]


def is_prime_value(value: int, trial_bound: int = DEFAULT_POLICY.trial_bound,
                   mr_rounds: int = DEFAULT_POLICY.mr_rounds,
                   fingerprint: str = DEFAULT_POLICY.fingerprint) -> PrimalityVerdict:
    """Layered primality test for a plain integer.

    Trial division by primes up to ``trial_bound``, then Miller–Rabin with
    the first twelve primes as bases (a proof below ``DETERMINISTIC_LIMIT``),
    then ``mr_rounds`` extra bases derived from ``fingerprint``.
    """
    if value <= 1:
        return PrimalityVerdict(NON_CANDIDATE, {"reason": "value <= 1"})
    primes = primes_up_to(trial_bound)
    root = math.isqrt(value)
    for p in primes:
        if p > root:
            return PrimalityVerdict(PRIME, {"method": "trial division"})
        if value % p == 0:
            if value == p:
                return PrimalityVerdict(PRIME, {"method": "trial division"})
            return PrimalityVerdict(COMPOSITE, {"factor": p})
    if trial_bound >= root:
        return PrimalityVerdict(PRIME, {"method": "trial division"})

    d, s = value - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    rounds = 0
    for base in DETERMINISTIC_BASES:
        if base % value == 0:
            continue  # value is itself one of the bases
        rounds += 1
        if not _strong_probable_prime(value, base, d, s):
            return PrimalityVerdict(COMPOSITE, {"witness": base}, rounds)
    if value < DETERMINISTIC_LIMIT:
        return PrimalityVerdict(PRIME, {"method": "deterministic Miller-Rabin"}, rounds)
    for base in _extra_bases(value, fingerprint, mr_rounds):
        rounds += 1
        if not _strong_probable_prime(value, base, d, s):
            return PrimalityVerdict(COMPOSITE, {"witness": base}, rounds)
    return PrimalityVerdict(PROBABLE_PRIME, {"method": "Miller-Rabin"}, rounds)


def primality(v: TowerValue, trial_bound: int = DEFAULT_POLICY.trial_bound,
              mr_rounds: int = DEFAULT_POLICY.mr_rounds,
              fingerprint: Optional[str] = None) -> PrimalityVerdict:
    if fingerprint is None:
        fingerprint = Policy(DEFAULT_POLICY.max_bits, trial_bound, mr_rounds).fingerprint
    return is_prime_value(v.value, trial_bound, mr_rounds, fingerprint)


# -- per-index evaluation and search records ---------------------------------------------------

@dataclass(frozen=True)
class KVerdict:
    k: int
    status: str
    evidence: Optional[dict]
    rounds: int
    bit_length: Optional[int]
    filter: Optional[str] = None

    def to_json(self) -> dict:
        return asdict(self)


def evaluate_k(t: Triplet, k: int, policy: Policy = DEFAULT_POLICY) -> KVerdict:
    """Filter, evaluate and test ``P(k)``."""
    reason = algebraic_filter(t, k)
    if reason is not None:
        small = _exact_if_small(t, k, reason)
        if small is None:
            bits = predicted_bits(t, k)
            return KVerdict(k, COMPOSITE, {"filter": reason.kind, "divisor": reason.divisor_expr},
                            0, int(bits) if math.isfinite(bits) else None, reason.kind)
        v = is_prime_value(small, policy.trial_bound, policy.mr_rounds, policy.fingerprint)
        return KVerdict(k, v.status, v.evidence, v.rounds, small.bit_length(), reason.kind)
    tv = tower_value(t, k, policy.max_bits)
    if isinstance(tv, Skipped):
        return KVerdict(k, SKIPPED, {"reason": tv.reason}, 0, None)
    v = is_prime_value(tv.value, policy.trial_bound, policy.mr_rounds, policy.fingerprint)
    return KVerdict(k, v.status, v.evidence, v.rounds, tv.bit_length)


@dataclass
class SearchRecord:
    a: int
    b: int
    c: int
    k_max: int
    k0: Optional[int]
    streak_length: int
    truncated: bool
    prime_positions: list[int]
    skipped_count: int
    filter_hits: list[dict]
    verdicts: list[KVerdict]
    policy: Policy
    timing: Optional[dict] = None
    schema_version: int = SCHEMA_VERSION

    @property
    def triplet(self) -> Triplet:
        return Triplet(self.a, self.b, self.c)

    def check_consistency(self) -> None:
        pos = self.prime_positions
        if pos != sorted(set(pos)):
            raise AssertionError("prime positions must be strictly increasing")
        if (self.k0 is None) != (not pos) or (pos and self.k0 != pos[0]):
            raise AssertionError("k0 must be the first prime position")
        streak = 0
        while streak < len(pos) and pos[streak] == streak:
            streak += 1
        if streak != self.streak_length:
            raise AssertionError("streak must be the prefix of prime positions starting at 0")

    def to_json(self) -> dict:
        out = {
            "schema_version": self.schema_version,
            "record_type": "search",
            "a": self.a, "b": self.b, "c": self.c,
            "k_max": self.k_max,
            "k0": self.k0,
            "streak_length": self.streak_length,
            "truncated": self.truncated,
            "prime_positions": list(self.prime_positions),
            "skipped_count": self.skipped_count,
            "filter_hits": self.filter_hits,
            "verdicts": [v.to_json() for v in self.verdicts],
            "policy": self.policy.to_json(),
        }
        if self.timing is not None:
            out["timing"] = self.timing
        return out

    @classmethod
    def from_json(cls, d: dict) -> "SearchRecord":
        return cls(
            a=d["a"], b=d["b"], c=d["c"], k_max=d["k_max"], k0=d["k0"],
            streak_length=d["streak_length"], truncated=d["truncated"],
            prime_positions=list(d["prime_positions"]), skipped_count=d["skipped_count"],
            filter_hits=d["filter_hits"], verdicts=[KVerdict(**v) for v in d["verdicts"]],
            policy=Policy(**d["policy"]), timing=d.get("timing"),
            schema_version=d.get("schema_version", SCHEMA_VERSION),
        )


def _compress_hits(verdicts: Iterable[KVerdict]) -> list[dict]:
    hits: list[dict] = []
    for v in verdicts:
        if v.filter is None:
            continue
        if hits and hits[-1]["reason"] == v.filter and hits[-1]["k_to"] == v.k - 1:
            hits[-1]["k_to"] = v.k
        else:
            hits.append({"k_from": v.k, "k_to": v.k, "reason": v.filter})
    return hits


def search(t: Triplet, k_max: int, policy: Policy = DEFAULT_POLICY,
           timestamps: bool = True) -> SearchRecord:
    """Scan ``k = 0..k_max`` and collect k0, streak and prime positions."""
    if k_max < 0:
        raise ValidationError(f"k_max must be non-negative, got {k_max}")
    started = time.time()
    clock = time.perf_counter()
    verdicts = [evaluate_k(t, k, policy) for k in range(k_max + 1)]
    positions = [v.k for v in verdicts if v.status in (PRIME, PROBABLE_PRIME)]
    streak = 0
    truncated = False
    for v in verdicts:
        if v.status in (PRIME, PROBABLE_PRIME):
            streak += 1
        else:
            truncated = v.status == SKIPPED
            break
    timing = None
    if timestamps:
        timing = {"started": started, "elapsed_s": time.perf_counter() - clock}
    rec = SearchRecord(
        a=t.a, b=t.b, c=t.c, k_max=k_max,
        k0=positions[0] if positions else None,
        streak_length=streak, truncated=truncated,
        prime_positions=positions,
        skipped_count=sum(v.status == SKIPPED for v in verdicts),
        filter_hits=_compress_hits(verdicts),
        verdicts=verdicts, policy=policy, timing=timing,
    )
    rec.check_consistency()
    return rec


def find_k0(t: Triplet, k_max: int, policy: Policy = DEFAULT_POLICY, **kw) -> SearchRecord:
    return search(t, k_max, policy, **kw)


def prime_streak(t: Triplet, k_max: int, policy: Policy = DEFAULT_POLICY, **kw) -> SearchRecord:
    return search(t, k_max, policy, **kw)


def prime_positions(t: Triplet, k_max: int, policy: Policy = DEFAULT_POLICY, **kw) -> SearchRecord:
    return search(t, k_max, policy, **kw)


# -- sweeps ----------------------------------------------------------------------------------

@dataclass
class SweepSummary:
    emitted: int = 0
    resumed_past: int = 0
    skipped: list[dict] = field(default_factory=list)


def sweep_plan(a_range: Iterable[int], b_range: Iterable[int],
               c_range: Iterable[int]) -> tuple[list[Triplet], list[dict]]:
    """Valid triplets in lexicographic order, plus the rejected ones with reasons."""
    plan, rejected = [], []
    for a in sorted(a_range):
        for b in sorted(b_range):
            for c in sorted(c_range):
                try:
                    plan.append(validate_triplet(a, b, c))
                except ValidationError as exc:
                    rejected.append({"a": a, "b": b, "c": c,
                                     "reason": type(exc).__name__, "detail": str(exc)})
    return plan, rejected


def _search_job(args) -> SearchRecord:
    t, k_max, policy, timestamps = args
    return search(t, k_max, policy, timestamps=timestamps)


def sweep(a_range, b_range, c_range, k_max: int, policy: Policy = DEFAULT_POLICY,
          sink=None, done: Optional[set] = None, timestamps: bool = True,
          workers: Optional[int] = None, summary: Optional[SweepSummary] = None
          ) -> Iterator[SearchRecord]:
    """Yield one record per valid triplet, in plan order.

    ``sink`` (if given) is called with each record before it is yielded;
    triplets in ``done`` are not recomputed.  A failing sink raises
    :class:`SinkFailure` after the last durable record.
    """
    from .optimizer import parallel_map, worker_count

    plan, rejected = sweep_plan(a_range, b_range, c_range)
    if not plan and not rejected:
        raise ValidationError("sweep ranges must be nonempty")
    summary = summary if summary is not None else SweepSummary()
    summary.skipped.extend(rejected)
    for r in rejected:
        log.info("skipping (%d, %d, %d): %s", r["a"], r["b"], r["c"], r["reason"])
    done = done or set()
    todo = [t for t in plan if (t.a, t.b, t.c) not in done]
    summary.resumed_past = len(plan) - len(todo)
    workers = worker_count() if workers is None else workers
    # batches keep memory bounded and let records reach the sink while work continues
    batch = max(1, workers) * 4
    for start in range(0, len(todo), batch):
        chunk = todo[start:start + batch]
        records = parallel_map(_search_job, [(t, k_max, policy, timestamps) for t in chunk], workers)
        for rec in records:
            if sink is not None:
                try:
                    sink(rec)
                except Exception as exc:
                    raise SinkFailure(
                        f"could not persist record for ({rec.a}, {rec.b}, {rec.c}): {exc}"
                    ) from exc
            summary.emitted += 1
            yield rec
