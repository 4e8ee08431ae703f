"""Kernel index sets for third-order Volterra equalizers.

A kernel is one product term of the Volterra expansion, identified by its
lag tuple. Lags are stored in canonical nondecreasing order and each list is
sorted lexicographically so the tap layout is deterministic.

Structural reduction schemes for the third order:

========== ===================================================== ==============================
scheme     membership rule for (k1 <= k2 <= k3)                   N3
========== ===================================================== ==============================
full       all canonical triples                                 M3(M3+1)(M3+2)/6
polynomial k1 == k2 == k3                                        M3
two_sam    at most two distinct lags                             M3**2
ri_d       k3 - k1 <= d                                          (d+1)(d+2)(3 M3 - 2 d)/6
combined   two_sam and ri_d                                      2 M3 d - d(d+1) + M3
========== ===================================================== ==============================
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

SCHEMES = ("full", "polynomial", "two_sam", "ri_d", "combined")
SECOND_ORDER_SCHEMES = ("full", "polynomial", "ri_d")


def _full_triples(M3: int):
    return itertools.combinations_with_replacement(range(M3), 3)


def _n_distinct(idx: tuple[int, ...]) -> int:
    return len(set(idx))


def build_polynomial(M3: int) -> list[tuple[int, int, int]]:
    """Cubic terms x(k-m)**3 only."""
    return [(k, k, k) for k in range(max(M3, 0))]


def build_two_sam(M3: int) -> list[tuple[int, int, int]]:
    """Triples with at most two distinct participating samples."""
    return [t for t in _full_triples(max(M3, 0)) if _n_distinct(t) <= 2]


def build_ri_d(M3: int, d: int) -> list[tuple[int, int, int]]:
    """Triples whose lag spread ``k3 - k1`` does not exceed ``d``."""
    if d < 0:
        raise ValueError(f"d must be non-negative, got {d}")
    return [t for t in _full_triples(max(M3, 0)) if t[2] - t[0] <= d]


def build_combined(M3: int, d: int) -> list[tuple[int, int, int]]:
    """Intersection of the two-sample and spacing-restricted sets."""
    if d < 0:
        raise ValueError(f"d must be non-negative, got {d}")
    return [
        t for t in _full_triples(max(M3, 0)) if t[2] - t[0] <= d and _n_distinct(t) <= 2
    ]


def _second_order(M2: int, scheme: str, d: int | None) -> list[tuple[int, int]]:
    pairs = list(itertools.combinations_with_replacement(range(M2), 2))
    if scheme == "full":
        return pairs
    if scheme == "polynomial":
        return [p for p in pairs if p[0] == p[1]]
    if scheme == "ri_d":
        if d is None or d < 0:
            raise ValueError("second-order ri_d needs a non-negative d2")
        return [p for p in pairs if p[1] - p[0] <= d]
    raise ValueError(f"unknown second-order scheme {scheme!r}")


def _third_order(M3: int, scheme: str, d: int | None) -> list[tuple[int, int, int]]:
    if scheme == "full":
        return list(_full_triples(M3))
    if scheme == "polynomial":
        return build_polynomial(M3)
    if scheme == "two_sam":
        return build_two_sam(M3)
    if d is None:
        raise ValueError(f"scheme {scheme!r} requires d")
    if scheme == "ri_d":
        return build_ri_d(M3, d)
    if scheme == "combined":
        return build_combined(M3, d)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


# closed-form third-order counts, valid for 0 <= d <= M3 - 1
def n3_full(M3: int) -> int:
    return M3 * (M3 + 1) * (M3 + 2) // 6


def n3_polynomial(M3: int) -> int:
    return M3


def n3_two_sam(M3: int) -> int:
    return M3 * M3


def n3_ri_d(M3: int, d: int) -> int:
    return (d + 1) * (d + 2) * (3 * M3 - 2 * d) // 6


def n3_combined(M3: int, d: int) -> int:
    return 2 * M3 * d - d * (d + 1) + M3


def n3_closed_form(scheme: str, M3: int, d: int | None = None) -> int:
    """Closed-form third-order kernel count (``d`` is clamped to ``M3 - 1``)."""
    if scheme == "full":
        return n3_full(M3)
    if scheme == "polynomial":
        return n3_polynomial(M3)
    if scheme == "two_sam":
        return n3_two_sam(M3)
    if M3 == 0:
        return 0
    d = min(d, M3 - 1)
    if scheme == "ri_d":
        return n3_ri_d(M3, d)
    if scheme == "combined":
        return n3_combined(M3, d)
    raise ValueError(f"unknown scheme {scheme!r}")


@dataclass(frozen=True)
class ComplexityReport:
    N1: int
    N2: int
    N3: int
    mult_count: int


@dataclass(frozen=True)
class KernelSet:
    """Which Volterra terms an equalizer implements.

    Use :func:`build_kernel_set` (or :func:`build_full`) rather than the
    constructor; the constructor only validates.
    """

    M1: int
    M2: int
    M3: int
    scheme: str = "full"
    d: int | None = None
    linear: tuple[int, ...] = ()
    second: tuple[tuple[int, int], ...] = ()
    third: tuple[tuple[int, int, int], ...] = ()
    second_scheme: str = "full"
    d2: int | None = None
    _arrays: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.M1 < 1:
            raise ValueError(f"M1 must be >= 1, got {self.M1}")
        if self.M2 < 0 or self.M3 < 0:
            raise ValueError("M2 and M3 must be non-negative")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        for name, idx, M, order in (
            ("linear", [(k,) for k in self.linear], self.M1, 1),
            ("second", self.second, self.M2, 2),
            ("third", self.third, self.M3, 3),
        ):
            if len(set(idx)) != len(idx):
                raise ValueError(f"duplicate {name} indices")
            for t in idx:
                if len(t) != order or any(k < 0 or k >= M for k in t):
                    raise ValueError(f"{name} index {t} out of range for memory {M}")
                if list(t) != sorted(t):
                    raise ValueError(f"{name} index {t} is not canonically ordered")
        if self.scheme in ("ri_d", "combined"):
            if self.d is None:
                raise ValueError(f"scheme {self.scheme!r} requires d")
            if any(t[2] - t[0] > self.d for t in self.third):
                raise ValueError("third-order index exceeds spacing d")
        max_distinct = {"polynomial": 1, "two_sam": 2, "combined": 2}.get(self.scheme)
        if max_distinct is not None and any(_n_distinct(t) > max_distinct for t in self.third):
            raise ValueError(f"third-order index violates {self.scheme} rule")

    @property
    def N1(self) -> int:
        return len(self.linear)

    @property
    def N2(self) -> int:
        return len(self.second)

    @property
    def N3(self) -> int:
        return len(self.third)

    @property
    def n_features(self) -> int:
        """Regressor length including the DC feature."""
        return 1 + self.N1 + self.N2 + self.N3

    @property
    def memory(self) -> int:
        return max(self.M1, self.M2, self.M3)

    def offsets(self) -> tuple[int, int, int]:
        """Extra delay of each order's lag window so all orders share one center."""
        Mmax = self.memory
        return tuple(-(-(Mmax - M) // 2) for M in (self.M1, self.M2, self.M3))

    def lag_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Absolute sample delays per order, offsets included.

        Row ``i`` of the returned arrays lists the delays ``m`` such that
        feature ``i`` of that order is the product of ``x[k - m]``.
        """
        if not self._arrays:
            o1, o2, o3 = self.offsets()
            self._arrays["lags"] = (
                np.asarray(self.linear, dtype=np.int64).reshape(-1) + o1,
                np.asarray(self.second, dtype=np.int64).reshape(-1, 2) + o2,
                np.asarray(self.third, dtype=np.int64).reshape(-1, 3) + o3,
            )
        return self._arrays["lags"]

    @property
    def center(self) -> int:
        """Delay (in samples) of the linear center tap relative to the newest sample."""
        return self.offsets()[0] + self.M1 // 2

    def to_text(self) -> str:
        """Plain-text listing: a header line, then one index tuple per line per order."""
        head = f"# kernelset scheme={self.scheme} M1={self.M1} M2={self.M2} M3={self.M3}"
        if self.d is not None:
            head += f" d={self.d}"
        if self.second_scheme != "full":
            head += f" second_scheme={self.second_scheme}"
            if self.d2 is not None:
                head += f" d2={self.d2}"
        lines = [head, f"[order1] {self.N1}"]
        lines += [str(k) for k in self.linear]
        lines.append(f"[order2] {self.N2}")
        lines += [" ".join(map(str, t)) for t in self.second]
        lines.append(f"[order3] {self.N3}")
        lines += [" ".join(map(str, t)) for t in self.third]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> KernelSet:
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("# kernelset"):
            raise ValueError("missing kernelset header")
        meta = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
        orders: dict[int, list[tuple[int, ...]]] = {1: [], 2: [], 3: []}
        current = None
        for ln in lines[1:]:
            if ln.startswith("[order"):
                current = int(ln[6])
                continue
            if current is None:
                raise ValueError(f"index line before any order header: {ln!r}")
            orders[current].append(tuple(int(v) for v in ln.split()))
        return cls(
            M1=int(meta["M1"]),
            M2=int(meta["M2"]),
            M3=int(meta["M3"]),
            scheme=meta["scheme"],
            d=int(meta["d"]) if "d" in meta else None,
            linear=tuple(t[0] for t in orders[1]),
            second=tuple(orders[2]),
            third=tuple(orders[3]),
            second_scheme=meta.get("second_scheme", "full"),
            d2=int(meta["d2"]) if "d2" in meta else None,
        )


def build_kernel_set(
    M1: int,
    M2: int,
    M3: int,
    scheme: str = "full",
    d: int | None = None,
    second_scheme: str = "full",
    d2: int | None = None,
) -> KernelSet:
    """Build a kernel set with the given third-order reduction scheme.

    Parameters
    ----------
    M1, M2, M3 : int
        Memory lengths of the linear, second- and third-order parts.
    scheme : str
        Third-order scheme, one of :data:`SCHEMES`.
    d : int, optional
        Maximum lag spread for ``ri_d`` and ``combined``.
    second_scheme, d2 : optional
        Reduction of the second-order part (``full`` by default).
    """
    if M1 < 1:
        raise ValueError(f"M1 must be >= 1, got {M1}")
    if M2 < 0 or M3 < 0:
        raise ValueError("M2 and M3 must be non-negative")
    if d is not None and d < 0:
        raise ValueError(f"d must be non-negative, got {d}")
    return KernelSet(
        M1=M1,
        M2=M2,
        M3=M3,
        scheme=scheme,
        d=d,
        linear=tuple(range(M1)),
        second=tuple(_second_order(M2, second_scheme, d2)),
        third=tuple(_third_order(M3, scheme, d)),
        second_scheme=second_scheme,
        d2=d2,
    )


def build_full(M1: int, M2: int, M3: int) -> KernelSet:
    """Unreduced third-order Volterra kernel set."""
    return build_kernel_set(M1, M2, M3, "full")


def complexity(kset: KernelSet) -> ComplexityReport:
    """Real multiplications per output: 1, 2 and 3 per kernel of order 1, 2, 3."""
    return complexity_from_counts(kset.N1, kset.N2, kset.N3)


def complexity_from_counts(N1: int, N2: int, N3: int) -> ComplexityReport:
    return ComplexityReport(N1, N2, N3, N1 + 2 * N2 + 3 * N3)


def fig1_table(M3_values, d_rule=lambda M3: -(-M3 // 2)) -> list[dict]:
    """Third-order kernel counts versus memory length for every scheme.

    Counts come from enumeration, not the closed forms. ``d_rule`` maps M3 to
    the spacing used by ``ri_d`` and ``combined`` (default ``ceil(M3/2)``).
    """
    rows = []
    for M3 in M3_values:
        d = d_rule(M3)
        rows.append(
            {
                "M3": M3,
                "d": d,
                "full": len(_third_order(M3, "full", None)),
                "polynomial": len(build_polynomial(M3)),
                "two_sam": len(build_two_sam(M3)),
                "ri_d": len(build_ri_d(M3, d)),
                "combined": len(build_combined(M3, d)),
            }
        )
    return rows
