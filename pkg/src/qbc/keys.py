"""
Identity registry and authentication-key derivation AK = h(ID, C).

The keyed hash is HMAC-SHA256 with the party's hash tag as the HMAC key and
``id_bits || counter`` (counter as a big-endian m-bit field, padded to whole
bytes) as the message. One call yields n = 256 bits; longer keys are built by
concatenating successive counters.
"""
from __future__ import annotations

import hashlib
import hmac
import json
import secrets
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, KeyExhaustedError

ID_BITS = 64
COUNTER_BITS = 32
HASH_BITS = 256


def _bits_to_bytes(bits: str) -> bytes:
    pad = (-len(bits)) % 8
    return int("0" * pad + bits, 2).to_bytes((len(bits) + pad) // 8, "big") if bits else b""


def _bytes_to_bits(data: bytes) -> str:
    return "".join(format(b, "08b") for b in data)


@dataclass
class Identity:
    name: str
    id_bits: str
    counter: int = 0
    hash_tag: bytes = b""
    id_len: int = ID_BITS
    counter_bits: int = COUNTER_BITS

    def __post_init__(self):
        if len(self.id_bits) != self.id_len or set(self.id_bits) - {"0", "1"}:
            raise ConfigError(f"{self.name}: id must be a {self.id_len}-bit string")
        if not 0 <= self.counter < 2**self.counter_bits:
            raise KeyExhaustedError(f"{self.name}: counter {self.counter} out of range")

    def copy(self) -> "Identity":
        return Identity(self.name, self.id_bits, self.counter, self.hash_tag,
                        self.id_len, self.counter_bits)

    @classmethod
    def random(cls, name: str, rng=None, **kw) -> "Identity":
        """Fresh identity; ``rng`` (numpy Generator) makes it reproducible."""
        id_len = kw.get("id_len", ID_BITS)
        if rng is None:
            id_bits = format(secrets.randbits(id_len), f"0{id_len}b")
            tag = secrets.token_bytes(32)
        else:
            id_bits = "".join(map(str, rng.integers(0, 2, id_len)))
            tag = bytes(rng.integers(0, 256, 32, dtype=int).tolist())
        return cls(name, id_bits, 0, tag, **kw)


@dataclass(frozen=True)
class AuthKey:
    bits: str
    start_counter: int = 0
    end_counter: int = 0

    def __len__(self):
        return len(self.bits)

    def __getitem__(self, i):
        return self.bits[i]

    def bit(self, i: int) -> int:
        return int(self.bits[i])


# A group key is derived exactly like a per-user key, from the group identity.
GroupKey = AuthKey


def _h(identity: Identity, counter: int) -> str:
    if counter >= 2**identity.counter_bits:
        raise KeyExhaustedError(
            f"{identity.name}: counter {counter} needs more than {identity.counter_bits} bits"
        )
    msg = _bits_to_bytes(identity.id_bits) + counter.to_bytes(
        (identity.counter_bits + 7) // 8, "big"
    )
    return _bytes_to_bits(hmac.new(identity.hash_tag, msg, hashlib.sha256).digest())


def derive_key(identity: Identity, out_len: int = HASH_BITS) -> AuthKey:
    """First ``out_len`` bits of h(id, counter); does not touch the counter."""
    if not 1 <= out_len <= HASH_BITS:
        raise ValueError(f"out_len must be in [1, {HASH_BITS}], got {out_len}")
    return AuthKey(_h(identity, identity.counter)[:out_len],
                   identity.counter, identity.counter)


def stretch_key(identity: Identity, needed_len: int) -> AuthKey:
    """
    Concatenate h(id, c), h(id, c+1), ... until ``needed_len`` bits exist,
    then advance ``identity.counter`` past the blocks used.
    """
    if needed_len < 1:
        raise ValueError("needed_len must be positive")
    blocks = -(-needed_len // HASH_BITS)
    start = identity.counter
    if start + blocks > 2**identity.counter_bits:
        raise KeyExhaustedError(
            f"{identity.name}: {blocks} blocks from counter {start} overflow "
            f"a {identity.counter_bits}-bit counter"
        )
    bits = "".join(_h(identity, start + b) for b in range(blocks))
    identity.counter = start + blocks
    return AuthKey(bits[:needed_len], start, identity.counter)


@dataclass
class KeyRegistry:
    """Named identities shared by Trent and the users (read-mostly)."""

    identities: dict[str, Identity] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __getitem__(self, name: str) -> Identity:
        try:
            return self.identities[name]
        except KeyError:
            raise ConfigError(f"identity {name!r} is not in the registry") from None

    def __contains__(self, name: str) -> bool:
        return name in self.identities

    def add(self, identity: Identity) -> None:
        self.identities[identity.name] = identity

    def stretch(self, name: str, needed_len: int) -> AuthKey:
        with self._lock:
            return stretch_key(self[name], needed_len)

    def copy(self) -> "KeyRegistry":
        return KeyRegistry({k: v.copy() for k, v in self.identities.items()})

    @classmethod
    def generate(cls, n_users: int, rng=None, group: bool = True) -> "KeyRegistry":
        reg = cls()
        for j in range(1, n_users + 1):
            reg.add(Identity.random(f"Alice_{j}", rng))
        if group:
            reg.add(Identity.random("group", rng))
        return reg

    def to_json(self) -> list[dict]:
        return [
            {
                "party_name": i.name,
                "id_bits_hex": format(int(i.id_bits, 2), f"0{(i.id_len + 3) // 4}x"),
                "counter": i.counter,
                "hash_tag": i.hash_tag.hex(),
            }
            for i in self.identities.values()
        ]

    @classmethod
    def from_json(cls, rows: list[dict]) -> "KeyRegistry":
        reg = cls()
        for n, row in enumerate(rows):
            try:
                id_bits = format(int(row["id_bits_hex"], 16), f"0{ID_BITS}b")
                reg.add(Identity(row["party_name"], id_bits, int(row["counter"]),
                                 bytes.fromhex(row["hash_tag"])))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"registry entry {n}: {exc}") from exc
        return reg

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "KeyRegistry":
        try:
            rows = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
        if not isinstance(rows, list):
            raise ConfigError(f"{path}: registry must be a JSON list")
        return cls.from_json(rows)
