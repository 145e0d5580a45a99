# Copyright (c) 2025 Yannis Arapakis
# Licensed under the MIT License. See LICENSE file for details.
"""Coded multicast and uncoded unicast Shuffle phases.

Intermediate values are indexed function-first: ``(q, n)`` is the value of
function q on file n. A value group V_{i,A,q} concatenates the values of
function q over the batch B_{i,A} in ascending n. Helper i sends, for every
solver subset S of size r + 1, the XOR of the groups V_{i,S\\{k},k}, k in S.
"""

import functools
import logging
import operator
from collections import defaultdict
from collections.abc import Mapping
from dataclasses import dataclass, replace
from fractions import Fraction

from cdcplan.core import JobSpec, Placement
from cdcplan.operations.placement import SchemeLayout, colex_subsets
from cdcplan.utils.parsing import fraction_from_json, fraction_to_json

log = logging.getLogger(__name__)

ValueId = tuple[int, int]


class DecodeError(RuntimeError):
    """A server cannot recover a value it needs from what it holds."""

    def __init__(self, message: str, server: int):
        """Record the server whose decoding failed."""
        super().__init__(message)
        self.server = server


@dataclass(frozen=True)
class ValueGroup:
    """Values of ``target_fn`` over ``files``, computed at ``helper``.

    For unicast groups ``helper`` is the sending mapper and ``solver_set``
    is empty.
    """

    helper: int
    solver_set: tuple[int, ...]
    target_fn: int
    files: tuple[int, ...]

    @property
    def value_ids(self) -> tuple[ValueId, ...]:
        """The ``(q, n)`` ids in payload order."""
        return tuple((self.target_fn, n) for n in self.files)

    def payload_bytes(self, spec: JobSpec) -> int:
        """Length of the concatenated payload."""
        return len(self.files) * spec.value_bytes

    def to_dict(self) -> dict:
        """Serialize to the JSON model."""
        return {
            "helper": self.helper,
            "solver_set": list(self.solver_set),
            "target_fn": self.target_fn,
            "files": list(self.files),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ValueGroup":
        """Deserialize from the JSON model."""
        return cls(
            helper=int(data["helper"]),
            solver_set=tuple(data["solver_set"]),
            target_fn=int(data["target_fn"]),
            files=tuple(data["files"]),
        )


@dataclass(frozen=True)
class MulticastMessage:
    """XOR of one value group per recipient.

    ``xor_of[j]`` is the group meant for ``recipients[j]``.
    """

    sender: int
    recipients: tuple[int, ...]
    xor_of: tuple[ValueGroup, ...]
    payload: bytes | None = None
    stratum: str = "none"

    def payload_bytes(self, spec: JobSpec) -> int:
        """Length of the (common) group payload."""
        return self.xor_of[0].payload_bytes(spec)

    def to_dict(self) -> dict:
        """Serialize to the JSON model; the payload is hex-encoded."""
        return {
            "sender": self.sender,
            "recipients": list(self.recipients),
            "xor_of": [g.to_dict() for g in self.xor_of],
            "payload": None if self.payload is None else self.payload.hex(),
            "stratum": self.stratum,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MulticastMessage":
        """Deserialize from the JSON model."""
        payload = data.get("payload")
        return cls(
            sender=int(data["sender"]),
            recipients=tuple(data["recipients"]),
            xor_of=tuple(ValueGroup.from_dict(g) for g in data["xor_of"]),
            payload=None if payload is None else bytes.fromhex(payload),
            stratum=data.get("stratum", "none"),
        )


@dataclass(frozen=True)
class ShufflePlan:
    """Ordered Shuffle messages with the load they are predicted to cost."""

    spec: JobSpec
    coded: bool
    messages: tuple[MulticastMessage, ...]
    predicted_load: Fraction

    @property
    def encoded(self) -> bool:
        """Whether every message carries a payload."""
        return all(m.payload is not None for m in self.messages)

    @property
    def planned_bits(self) -> int:
        """Bits the plan sends, one charge per message."""
        return sum(m.payload_bytes(self.spec) for m in self.messages) * 8

    def to_dict(self) -> dict:
        """Serialize to the JSON model."""
        return {
            "spec": self.spec.to_dict(),
            "coded": self.coded,
            "messages": [m.to_dict() for m in self.messages],
            "predicted_load": fraction_to_json(self.predicted_load),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ShufflePlan":
        """Deserialize from the JSON model."""
        return cls(
            spec=JobSpec.from_dict(data["spec"]),
            coded=bool(data["coded"]),
            messages=tuple(MulticastMessage.from_dict(m) for m in data["messages"]),
            predicted_load=fraction_from_json(data["predicted_load"]),
        )


def build_coded_plan(layout: SchemeLayout) -> ShufflePlan:
    """Build the coded multicast Shuffle for a generated layout.

    Every helper sends one message per (r + 1)-subset of solvers in each
    stratum it serves; solver-only strata need no messages.

    Args:
        layout (SchemeLayout): Layout from the placement module.

    Raises:
        ValueError: If the layout carries no batch labels.

    Returns:
        ShufflePlan: Messages ordered by helper, stratum and colex subset.

    """
    if not layout.labels:
        raise ValueError("Coded shuffling needs a layout with batch labels")

    spec = layout.spec
    batches: dict[tuple[int, str], dict[tuple[int, ...], tuple[int, ...]]]
    batches = defaultdict(dict)
    for label, files in layout.labels.items():
        if label.helper is not None:
            batches[(label.helper, label.stratum)][label.solver_set] = files

    stratum_order = {s.name: i for i, s in enumerate(layout.strata)}
    messages: list[MulticastMessage] = []
    ordered = sorted(batches, key=lambda h: (h[0], stratum_order[h[1]]))
    for helper, stratum in ordered:
        by_subset = batches[(helper, stratum)]
        repetition = len(next(iter(by_subset)))
        for subset in colex_subsets(spec.q, repetition + 1):
            groups = tuple(
                ValueGroup(
                    helper=helper,
                    solver_set=tuple(s for s in subset if s != k),
                    target_fn=k,
                    files=by_subset[tuple(s for s in subset if s != k)],
                )
                for k in subset
            )
            messages.append(MulticastMessage(helper, subset, groups, stratum=stratum))

    predicted = sum(
        (
            s.weight * Fraction(spec.q - s.repetition, spec.q * (s.repetition + 1))
            for s in layout.strata
        ),
        Fraction(0),
    )
    log.info(
        "[cyan]Coded shuffle:[/cyan] %d messages, predicted load %s",
        len(messages),
        predicted,
    )
    return ShufflePlan(spec, True, tuple(messages), predicted)


def build_uncoded_plan(layout: SchemeLayout) -> ShufflePlan:
    """Build the unicast baseline: each needed value sent once by its lowest mapper.

    Raises:
        ValueError: If a needed value is mapped by no server.

    """
    spec, placement = layout.spec, layout.placement
    mappers = {n: placement.mappers_of(n) for n in range(1, spec.n + 1)}
    messages: list[MulticastMessage] = []
    for q in range(1, spec.q + 1):
        reducer = placement.reducer_of(q)
        for n in range(1, spec.n + 1):
            if n in placement.maps(reducer):
                continue
            if not mappers[n]:
                raise ValueError(f"value ({q}, {n}) is needed but mapped nowhere")
            sender = mappers[n][0]
            group = ValueGroup(sender, (), q, (n,))
            messages.append(MulticastMessage(sender, (reducer,), (group,)))

    predicted = Fraction(len(messages), spec.q * spec.n)
    log.info(
        "[cyan]Uncoded shuffle:[/cyan] %d unicasts, predicted load %s",
        len(messages),
        predicted,
    )
    return ShufflePlan(spec, False, tuple(messages), predicted)


def _xor(chunks: list[bytes]) -> bytes:
    length = len(chunks[0])
    folded = functools.reduce(
        operator.xor, (int.from_bytes(c, "big") for c in chunks), 0
    )
    return folded.to_bytes(length, "big")


def _group_payload(
    group: ValueGroup, values: Mapping[ValueId, bytes], width: int
) -> bytes:
    parts = []
    for value_id in group.value_ids:
        payload = values[value_id]
        if len(payload) != width:
            raise ValueError(
                f"value {value_id} has {len(payload)} bytes, expected {width}"
            )
        parts.append(payload)
    return b"".join(parts)


def encode(
    plan: ShufflePlan, placement: Placement, values: Mapping[ValueId, bytes]
) -> ShufflePlan:
    """Fill every message payload with the XOR of its group payloads.

    A sender only reads values of files it mapped.

    Args:
        plan (ShufflePlan): The plan to encode.
        placement (Placement): Placement the plan was built from.
        values (Mapping[ValueId, bytes]): Value store, ``(q, n)`` to payload.

    Raises:
        ValueError: If a sender is not a server or references a file it did
            not map, a value is missing, or payload lengths disagree.

    Returns:
        ShufflePlan: A copy of ``plan`` with payloads set.

    """
    width = plan.spec.value_bytes
    encoded: list[MulticastMessage] = []
    for message in plan.messages:
        if message.sender not in placement.servers:
            raise ValueError(f"sender {message.sender} is not one of the K servers")
        local = placement.maps(message.sender)
        chunks = []
        for group in message.xor_of:
            missing = [n for n in group.files if n not in local]
            if missing:
                raise ValueError(
                    f"server {message.sender} did not map file(s) {missing} "
                    f"needed for its message to {list(message.recipients)}"
                )
            try:
                chunks.append(_group_payload(group, values, width))
            except KeyError as exc:
                raise ValueError(f"value {exc.args[0]} is not in the store") from exc
        if len({len(c) for c in chunks}) != 1:
            raise ValueError(
                f"groups of the message from {message.sender} differ in length"
            )
        encoded.append(replace(message, payload=_xor(chunks)))
    return replace(plan, messages=tuple(encoded))


def needed_values(spec: JobSpec, placement: Placement, server: int) -> set[ValueId]:
    """Values ``server`` reduces but did not map."""
    local = placement.maps(server)
    return {
        (q, n)
        for q in placement.reduces(server)
        for n in range(1, spec.n + 1)
        if n not in local
    }


def decode(
    server: int,
    plan: ShufflePlan,
    placement: Placement,
    local_values: Mapping[ValueId, bytes],
) -> dict[ValueId, bytes]:
    """Recover every value ``server`` needs from the messages addressed to it.

    Each message is XORed with the locally known groups of the other
    recipients, leaving the group meant for ``server``.

    Args:
        server (int): The receiving server.
        plan (ShufflePlan): An encoded plan.
        placement (Placement): Placement the plan was built from.
        local_values (Mapping[ValueId, bytes]): Values ``server`` computed.

    Raises:
        DecodeError: If a message cannot be decoded or a needed value is
            not delivered.

    Returns:
        dict[ValueId, bytes]: Payload of every needed value.

    """
    width = plan.spec.value_bytes
    recovered: dict[ValueId, bytes] = {}
    for message in plan.messages:
        if server not in message.recipients:
            continue
        if message.payload is None:
            raise DecodeError("plan is not encoded", server)
        if len(message.xor_of) != len(message.recipients):
            raise DecodeError(
                f"message from {message.sender} carries "
                f"{len(message.xor_of)} groups for "
                f"{len(message.recipients)} recipients",
                server,
            )
        position = message.recipients.index(server)
        own = message.xor_of[position]
        chunks = [message.payload]
        for j, group in enumerate(message.xor_of):
            if j == position:
                continue
            try:
                chunks.append(_group_payload(group, local_values, width))
            except KeyError as exc:
                raise DecodeError(
                    f"server {server} cannot cancel value {exc.args[0]} "
                    f"in the message from {message.sender}",
                    server,
                ) from exc
        expected = len(own.files) * width
        if any(len(c) != expected for c in chunks):
            raise DecodeError(
                f"groups of the message from {message.sender} differ in length",
                server,
            )
        data = _xor(chunks)
        for j, value_id in enumerate(own.value_ids):
            recovered[value_id] = data[j * width : (j + 1) * width]

    need = needed_values(plan.spec, placement, server)
    missing = sorted(need - recovered.keys())
    if missing:
        raise DecodeError(
            f"server {server} did not receive {len(missing)} needed value(s), "
            f"first {missing[0]}",
            server,
        )
    return {value_id: recovered[value_id] for value_id in sorted(need)}
