# Copyright (c) 2025 Yannis Arapakis
# Licensed under the MIT License. See LICENSE file for details.
"""Deterministic execution of Map, Shuffle and Reduce on synthetic data.

Map and Reduce functions are stand-ins: Map on file n draws one SHAKE-256
stream keyed by the seed and n and cuts it into the Q values v_{1,n} ..
v_{Q,n}; the output of function q is a 128-bit BLAKE2b digest of its values
in ascending n. Phase times come from the measured loads through the linear
cost model, never from a clock.
"""

import hashlib
import json
import logging
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TextIO

from cdcplan.core import JobSpec, LoadReport, validate_placement
from cdcplan.operations.placement import SchemeLayout
from cdcplan.operations.shuffle import (
    DecodeError,
    ShufflePlan,
    ValueId,
    decode,
    encode,
)

log = logging.getLogger(__name__)

HASH_VERSION = "shake256-file-stream/blake2b-128-reduce/v2"
DIGEST_BYTES = 16
_SEED_MASK = (1 << 64) - 1


class ValueTable(Mapping):
    """Read-only ``(q, n) -> bytes`` view over the Map output of some files.

    Views made with `restrict` share the per-file buffers of their parent.
    """

    def __init__(
        self,
        spec: JobSpec,
        blobs: dict[int, bytes],
        files: Iterable[int] | None = None,
    ):
        """Wrap per-file buffers, optionally limited to ``files``."""
        self._spec = spec
        self._q = spec.q
        self._width = spec.value_bytes
        self._blobs = blobs
        self._files = frozenset(blobs if files is None else blobs.keys() & set(files))

    @property
    def files(self) -> frozenset[int]:
        """Files whose values this view exposes."""
        return self._files

    def restrict(self, files: Iterable[int]) -> "ValueTable":
        """Return the view of ``files`` only."""
        return ValueTable(self._spec, self._blobs, self._files & set(files))

    def __getitem__(self, value_id: ValueId) -> bytes:
        """Return v_{q,n}; files outside the view raise `KeyError`."""
        q, n = value_id
        if n not in self._files or not 1 <= q <= self._q:
            raise KeyError(value_id)
        start = (q - 1) * self._width
        return self._blobs[n][start : start + self._width]

    def __iter__(self) -> Iterator[ValueId]:
        """Iterate file-major, functions ascending."""
        return ((q, n) for n in sorted(self._files) for q in range(1, self._q + 1))

    def __len__(self) -> int:
        """Number of values in the view."""
        return len(self._files) * self._q


@dataclass(frozen=True)
class SyntheticDataset:
    """Intermediate values derived from a 64-bit seed."""

    seed: int
    spec: JobSpec

    def file_values(self, n: int) -> bytes:
        """Return v_{1,n} .. v_{Q,n} concatenated, ``Q T_bits / 8`` bytes."""
        stream = hashlib.shake_256()
        stream.update((self.seed & _SEED_MASK).to_bytes(8, "big"))
        stream.update(n.to_bytes(4, "big"))
        return stream.digest(self.spec.q * self.spec.value_bytes)

    def value(self, q: int, n: int) -> bytes:
        """Return v_{q,n}, ``T_bits / 8`` bytes."""
        width = self.spec.value_bytes
        return self.file_values(n)[(q - 1) * width : q * width]

    def map_file(self, n: int) -> dict[ValueId, bytes]:
        """Run every Map function on file n."""
        return dict(ValueTable(self.spec, {n: self.file_values(n)}))

    def table(self, files: Iterable[int] | None = None) -> ValueTable:
        """Map ``files`` (default all N) once and return their value view."""
        if files is None:
            files = range(1, self.spec.n + 1)
        return ValueTable(self.spec, {n: self.file_values(n) for n in files})


def reduce_digest(q: int, values: Iterable[bytes]) -> bytes:
    """Reduce the values of function q, given in ascending file order."""
    digest = hashlib.blake2b(digest_size=DIGEST_BYTES)
    digest.update(q.to_bytes(4, "big"))
    for payload in values:
        digest.update(payload)
    return digest.digest()


def centralized_oracle(spec: JobSpec, seed: int) -> dict[int, bytes]:
    """Compute every output directly from all Q N values."""
    table = SyntheticDataset(seed, spec).table()
    files = range(1, spec.n + 1)
    return {
        q: reduce_digest(q, (table[(q, n)] for n in files))
        for q in range(1, spec.q + 1)
    }


@dataclass(frozen=True)
class RunResult:
    """Outcome of one simulated job."""

    mode: str
    report: LoadReport | None
    outputs: dict[int, bytes]
    oracle_match: bool
    seed: int
    failure: str | None = None
    metadata: dict = field(default_factory=lambda: {"hash": HASH_VERSION})

    @property
    def total_time(self) -> Fraction | None:
        """Execution time under the run's implementation mode."""
        return None if self.report is None else self.report.total(self.mode)

    def to_dict(self) -> dict:
        """Serialize to the JSON model; digests are hex-encoded."""
        return {
            "mode": self.mode,
            "seed": self.seed,
            "report": None if self.report is None else self.report.to_dict(),
            "outputs": {str(q): d.hex() for q, d in sorted(self.outputs.items())},
            "oracle_match": self.oracle_match,
            "failure": self.failure,
            "metadata": self.metadata,
        }


def _rejected(mode: str, seed: int, reason: str) -> RunResult:
    log.error("[red]❌ Scheme rejected: %s[/red]", reason)
    return RunResult(mode, None, {}, False, seed, failure=reason)


def run(
    layout: SchemeLayout,
    plan: ShufflePlan,
    seed: int,
    mode: str,
    trace: TextIO | None = None,
) -> RunResult:
    """Execute a scheme end to end and measure its loads.

    Args:
        layout (SchemeLayout): Placement to execute; its spec is the job.
        plan (ShufflePlan): Shuffle built from ``layout``.
        seed (int): Dataset seed.
        mode (str): ``"sequential"`` or ``"parallel"``, selects `total_time`.
        trace (TextIO | None): Optional sink for one JSON line per message.

    Returns:
        RunResult: Outputs, oracle comparison and the load report. An invalid
            placement, a plan its senders cannot encode or a decode failure
            is reported in ``failure`` with ``oracle_match`` False; the
            report is absent when no message could be sent.

    """
    spec, placement = layout.spec, layout.placement
    if plan.spec != spec:
        return _rejected(mode, seed, "shuffle plan was built for a different job")
    check = validate_placement(spec, placement)
    if not check.ok:
        reason = "; ".join(check.violations)
        return _rejected(mode, seed, f"invalid placement: {reason}")

    # ---- Map ----
    mapped = frozenset().union(*placement.map_sets)
    table = SyntheticDataset(seed, spec).table(sorted(mapped))
    stores = {k: table.restrict(placement.maps(k)) for k in placement.servers}
    p = Fraction(max(len(m) for m in placement.map_sets), spec.n)

    # ---- Shuffle ----
    try:
        encoded = encode(plan, placement, table)
    except ValueError as exc:
        return _rejected(mode, seed, f"cannot encode: {exc}")
    bits_sent = 8 * sum(len(m.payload) for m in encoded.messages)
    if trace is not None:
        for m in encoded.messages:
            record = {
                "sender": m.sender,
                "recipients": list(m.recipients),
                "stratum": m.stratum,
                "bytes": len(m.payload),
            }
            trace.write(json.dumps(record, sort_keys=True) + "\n")
    load = Fraction(bits_sent, spec.q * spec.n * spec.t_bits)
    max_reduce = max(len(w) for w in placement.reduce_sets)
    report = LoadReport.from_loads(spec, p, load, max_reduce, bits_sent)

    # ---- Reduce ----
    outputs: dict[int, bytes] = {}
    files = range(1, spec.n + 1)
    try:
        for k in placement.solvers:
            local = stores[k]
            received = decode(k, encoded, placement, local)
            for q in sorted(placement.reduces(k)):
                values = (
                    local[(q, n)] if n in local.files else received[(q, n)]
                    for n in files
                )
                outputs[q] = reduce_digest(q, values)
    except DecodeError as exc:
        log.error("[red]❌ Decoding failed at server %d: %s[/red]", exc.server, exc)
        return RunResult(mode, report, outputs, False, seed, failure=str(exc))

    oracle_match = outputs == centralized_oracle(spec, seed)
    if not oracle_match:
        log.error("[red]❌ Outputs differ from the centralized oracle[/red]")
    log.debug(
        "Run complete: p=%s L=%s T_%s=%s",
        report.p,
        report.l,
        mode,
        report.total(mode),
    )
    return RunResult(mode, report, outputs, oracle_match, seed)
