# Copyright (c) 2025 Yannis Arapakis
# Licensed under the MIT License. See LICENSE file for details.
"""Problem-instance and placement data model.

Every quantity the other modules compute (loads, phase times, bounds) is an
exact `Fraction`, so results can be compared by equality. Server, file and
function ids are 1-based throughout, matching the serialized form.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction

from cdcplan.utils.parsing import fraction_from_json, fraction_to_json

log = logging.getLogger(__name__)

STRATA = ("none", "plus", "minus", "solver_only")


@dataclass(frozen=True)
class JobSpec:
    """A MapReduce job: Q output functions over N input files.

    Attributes:
        q (int): Number of output (Reduce) functions.
        n (int): Number of input files.
        c_m (Fraction): Map cost constant.
        c_s (Fraction): Shuffle cost constant.
        c_r (Fraction): Reduce cost constant.
        t_bits (int): Size of one intermediate value in bits.

    """

    q: int
    n: int
    c_m: Fraction
    c_s: Fraction
    c_r: Fraction = Fraction(0)
    t_bits: int = 64

    def __post_init__(self):
        """Coerce costs to `Fraction` and check the instance invariants."""
        for name in ("c_m", "c_s", "c_r"):
            object.__setattr__(self, name, Fraction(getattr(self, name)))

        if self.q < 1:
            raise ValueError(f"Q must be a positive integer, got {self.q}")
        if self.n < 1:
            raise ValueError(f"N must be a positive integer, got {self.n}")
        if self.c_m <= 0:
            raise ValueError(f"c_m must be positive, got {self.c_m}")
        if self.c_s <= 0:
            raise ValueError(f"c_s must be positive, got {self.c_s}")
        if self.c_r < 0:
            raise ValueError(f"c_r must be nonnegative, got {self.c_r}")
        if self.t_bits <= 0 or self.t_bits % 8:
            raise ValueError(
                f"T_bits must be a positive multiple of 8, got {self.t_bits}"
            )

    @property
    def value_bytes(self) -> int:
        """Bytes per intermediate value."""
        return self.t_bits // 8

    def with_n(self, n: int) -> "JobSpec":
        """Return a copy of this spec with a different file count."""
        return JobSpec(self.q, n, self.c_m, self.c_s, self.c_r, self.t_bits)

    def to_dict(self) -> dict:
        """Serialize to the JSON model."""
        return {
            "q": self.q,
            "n": self.n,
            "c_m": fraction_to_json(self.c_m),
            "c_s": fraction_to_json(self.c_s),
            "c_r": fraction_to_json(self.c_r),
            "t_bits": self.t_bits,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "JobSpec":
        """Deserialize from the JSON model."""
        return cls(
            q=int(data["q"]),
            n=int(data["n"]),
            c_m=fraction_from_json(data["c_m"]),
            c_s=fraction_from_json(data["c_s"]),
            c_r=fraction_from_json(data["c_r"]),
            t_bits=int(data.get("t_bits", 64)),
        )


@dataclass(frozen=True)
class BatchLabel:
    """Label (i, A) of a file batch B_{i,A}, tagged with its stratum.

    ``helper`` is None for batches mapped by solvers only.
    """

    helper: int | None
    solver_set: tuple[int, ...]
    stratum: str = "none"

    def __post_init__(self):
        """Normalize the solver set to a sorted tuple."""
        object.__setattr__(self, "solver_set", tuple(sorted(self.solver_set)))
        if self.stratum not in STRATA:
            raise ValueError(f"Unknown stratum {self.stratum!r}")

    @property
    def sort_key(self) -> tuple:
        """Order by helper, then stratum, then colexicographic solver set."""
        helper = 0 if self.helper is None else self.helper
        return (helper, STRATA.index(self.stratum), self.solver_set[::-1])

    @property
    def key(self) -> str:
        """Render as ``i=<helper>,A=<sorted ids>,stratum=<s>``."""
        helper = "-" if self.helper is None else str(self.helper)
        members = ",".join(str(k) for k in self.solver_set)
        return f"i={helper},A={members},stratum={self.stratum}"

    @classmethod
    def from_key(cls, key: str) -> "BatchLabel":
        """Parse the string form produced by `key`.

        Raises:
            ValueError: If the key does not follow the label format.

        """
        try:
            head, rest = key.split(",A=", 1)
            members, stratum = rest.rsplit(",stratum=", 1)
            helper = head.removeprefix("i=")
            solver_set = tuple(int(k) for k in members.split(",") if k)
            return cls(None if helper == "-" else int(helper), solver_set, stratum)
        except ValueError as exc:
            raise ValueError(f"Malformed batch label {key!r}") from exc


@dataclass(frozen=True)
class Placement:
    """Map and Reduce task assignment over K servers.

    ``map_sets[k - 1]`` is M_k and ``reduce_sets[k - 1]`` is W_k.
    """

    k: int
    map_sets: tuple[frozenset[int], ...]
    reduce_sets: tuple[frozenset[int], ...]
    batch_index: dict[BatchLabel, tuple[int, ...]] | None = field(
        default=None, compare=False
    )

    def __post_init__(self):
        """Freeze the per-server sets."""
        object.__setattr__(
            self, "map_sets", tuple(frozenset(m) for m in self.map_sets)
        )
        object.__setattr__(
            self, "reduce_sets", tuple(frozenset(w) for w in self.reduce_sets)
        )

    @property
    def servers(self) -> range:
        """Server ids 1..K."""
        return range(1, self.k + 1)

    def maps(self, server: int) -> frozenset[int]:
        """Return M_server."""
        return self.map_sets[server - 1]

    def reduces(self, server: int) -> frozenset[int]:
        """Return W_server."""
        return self.reduce_sets[server - 1]

    @property
    def solvers(self) -> tuple[int, ...]:
        """Servers assigned at least one Reduce function."""
        return tuple(k for k in self.servers if self.reduces(k))

    @property
    def helpers(self) -> tuple[int, ...]:
        """Servers assigned no Reduce function."""
        return tuple(k for k in self.servers if not self.reduces(k))

    def reducer_of(self, function: int) -> int:
        """Return the lowest server reducing ``function``.

        Raises:
            ValueError: If no server reduces the function.

        """
        for k in self.servers:
            if function in self.reduces(k):
                return k
        raise ValueError(f"function {function} is not reduced by any server")

    def mappers_of(self, file_id: int) -> tuple[int, ...]:
        """Servers whose Map set contains ``file_id``."""
        return tuple(k for k in self.servers if file_id in self.maps(k))

    def to_dict(self) -> dict:
        """Serialize to the JSON model (sorted 1-based ids)."""
        data = {
            "k": self.k,
            "map_sets": [sorted(m) for m in self.map_sets],
            "reduce_sets": [sorted(w) for w in self.reduce_sets],
            "batch_index": None,
        }
        if self.batch_index is not None:
            data["batch_index"] = {
                label.key: list(files)
                for label, files in sorted(self.batch_index.items(), key=_label_order)
            }
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "Placement":
        """Deserialize from the JSON model."""
        index = data.get("batch_index")
        batch_index = None
        if index is not None:
            batch_index = {
                BatchLabel.from_key(key): tuple(files) for key, files in index.items()
            }
        return cls(
            k=int(data["k"]),
            map_sets=tuple(frozenset(m) for m in data["map_sets"]),
            reduce_sets=tuple(frozenset(w) for w in data["reduce_sets"]),
            batch_index=batch_index,
        )


@dataclass(frozen=True)
class ValidationReport:
    """Structural violations found in a placement; empty means admissible."""

    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        """Whether the placement is admissible."""
        return not self.violations


def validate_placement(spec: JobSpec, placement: Placement) -> ValidationReport:
    """Collect every structural invariant a placement violates.

    Checks that every file is mapped, that Reduce functions are partitioned
    over the servers (each reduced exactly once), that all ids are in range
    and that the batch index, when present, does not place a file in two
    batches.

    Args:
        spec (JobSpec): The job the placement is for.
        placement (Placement): The assignment to check.

    Returns:
        ValidationReport: All violations found, in a deterministic order.

    """
    violations: list[str] = []

    if len(placement.map_sets) != placement.k:
        violations.append(
            f"expected {placement.k} map sets, got {len(placement.map_sets)}"
        )
    if len(placement.reduce_sets) != placement.k:
        violations.append(
            f"expected {placement.k} reduce sets, got {len(placement.reduce_sets)}"
        )

    for k, files in enumerate(placement.map_sets, start=1):
        for n in sorted(f for f in files if not 1 <= f <= spec.n):
            violations.append(f"server {k} maps out-of-range file {n}")
    for k, functions in enumerate(placement.reduce_sets, start=1):
        for q in sorted(f for f in functions if not 1 <= f <= spec.q):
            violations.append(f"server {k} reduces out-of-range function {q}")

    mapped = frozenset().union(*placement.map_sets)
    for n in range(1, spec.n + 1):
        if n not in mapped:
            violations.append(f"file {n} unmapped")

    reduce_count = {q: 0 for q in range(1, spec.q + 1)}
    for functions in placement.reduce_sets:
        for q in functions:
            if q in reduce_count:
                reduce_count[q] += 1
    for q, count in reduce_count.items():
        if count == 0:
            violations.append(f"function {q} not reduced")
        elif count > 1:
            violations.append(f"function {q} reduced {_times(count)}")

    if placement.batch_index is not None:
        owner: dict[int, BatchLabel] = {}
        for label, files in sorted(placement.batch_index.items(), key=_label_order):
            for n in files:
                if n in owner:
                    violations.append(
                        f"file {n} in batches {owner[n].key} and {label.key}"
                    )
                else:
                    owner[n] = label

    if violations:
        log.debug("Placement has %d violation(s)", len(violations))
    return ValidationReport(tuple(violations))


def _times(count: int) -> str:
    return "twice" if count == 2 else f"{count} times"  # noqa: PLR2004


def peak_load(spec: JobSpec, placement: Placement) -> Fraction:
    """Return the peak computation load p = max_k |M_k| / N.

    Raises:
        ValueError: If the placement is not admissible for ``spec``.

    """
    report = validate_placement(spec, placement)
    if not report.ok:
        raise ValueError(f"Invalid placement: {'; '.join(report.violations)}")
    return Fraction(max(len(m) for m in placement.map_sets), spec.n)


@dataclass(frozen=True)
class LoadReport:
    """Measured loads and the phase times they imply."""

    p: Fraction
    l: Fraction  # noqa: E741
    t_map: Fraction
    t_shuffle: Fraction
    t_reduce: Fraction
    t_sequential: Fraction
    t_parallel: Fraction
    bits_sent: int

    @classmethod
    def from_loads(
        cls,
        spec: JobSpec,
        p: Fraction,
        load: Fraction,
        max_reduce: int,
        bits_sent: int,
    ) -> "LoadReport":
        """Derive phase times from loads with the linear cost model."""
        t_map = spec.c_m * p
        t_shuffle = spec.c_s * load
        t_reduce = spec.c_r * max_reduce
        return cls(
            p=Fraction(p),
            l=Fraction(load),
            t_map=t_map,
            t_shuffle=t_shuffle,
            t_reduce=t_reduce,
            t_sequential=t_map + t_shuffle + t_reduce,
            t_parallel=max(t_map, t_shuffle) + t_reduce,
            bits_sent=bits_sent,
        )

    def total(self, mode: str) -> Fraction:
        """Total execution time for ``"sequential"`` or ``"parallel"``."""
        return self.t_parallel if mode == "parallel" else self.t_sequential

    def to_dict(self) -> dict:
        """Serialize to the JSON model."""
        return {
            "p": fraction_to_json(self.p),
            "l": fraction_to_json(self.l),
            "t_map": fraction_to_json(self.t_map),
            "t_shuffle": fraction_to_json(self.t_shuffle),
            "t_reduce": fraction_to_json(self.t_reduce),
            "t_sequential": fraction_to_json(self.t_sequential),
            "t_parallel": fraction_to_json(self.t_parallel),
            "bits_sent": self.bits_sent,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LoadReport":
        """Deserialize from the JSON model."""
        fields = ("p", "l", "t_map", "t_shuffle", "t_reduce")
        values = {name: fraction_from_json(data[name]) for name in fields}
        values["t_sequential"] = fraction_from_json(data["t_sequential"])
        values["t_parallel"] = fraction_from_json(data["t_parallel"])
        return cls(**values, bits_sent=int(data["bits_sent"]))


def _label_order(item: tuple[BatchLabel, tuple[int, ...]]) -> tuple:
    return item[0].sort_key
