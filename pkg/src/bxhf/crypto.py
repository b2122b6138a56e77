"""Hashing, salted commitments, and authenticated record sealing.

Records at rest are kept as AES-GCM sealed payloads bound to a salted
SHA-256 commitment over the plaintext's canonical encoding.  Sealing here is
an integrity/access mechanism for the simulation, not a privacy-preserving
computation scheme: unsealing requires the owning institution's key, and any
single-bit modification of a sealed payload fails authentication.

All randomness (salts, nonces, keys) is supplied by the caller so that a
scenario's seeded generator fully determines every byte on disk.
"""

from __future__ import annotations

from dataclasses import dataclass
import hashlib

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .canon import canonicalize

__all__ = [
    "AuthenticationError",
    "Commitment",
    "KeyTable",
    "SealedPayload",
    "UnknownKeyError",
    "ZERO_HASH",
    "commit",
    "digest",
    "seal",
    "unseal",
    "verify_commit",
]

ZERO_HASH = "0" * 64

SALT_LEN = 16
NONCE_LEN = 12
KEY_LEN = 32
TAG_LEN = 16


class UnknownKeyError(KeyError):
    """Key id is not registered in the key table."""


class AuthenticationError(Exception):
    """Sealed payload failed authentication (tampered bytes or wrong key)."""


def digest(data: bytes) -> str:
    """SHA-256 of the input, rendered as 64 lowercase hex characters."""
    return hashlib.sha256(data).hexdigest()


def digest_value(value) -> str:
    """SHA-256 over the canonical encoding of a structured value."""
    return digest(canonicalize(value))


@dataclass(frozen=True)
class Commitment:
    """Salted hash binding an identifier to off-chain content."""

    digest: str
    salt: bytes

    def to_value(self) -> dict:
        return {"digest": self.digest, "salt": self.salt}

    @classmethod
    def from_value(cls, value: dict) -> "Commitment":
        return cls(digest=value["digest"], salt=value["salt"])


def commit(plaintext, salt: bytes) -> Commitment:
    """Commit to a structured value: ``digest = H(canonical(plaintext) || salt)``."""
    if len(salt) != SALT_LEN:
        raise ValueError(f"salt must be {SALT_LEN} bytes, got {len(salt)}")
    return Commitment(digest=digest(canonicalize(plaintext) + salt), salt=bytes(salt))


def verify_commit(plaintext, commitment: Commitment) -> bool:
    """True iff the plaintext reproduces the commitment digest under its salt."""
    return digest(canonicalize(plaintext) + commitment.salt) == commitment.digest


@dataclass(frozen=True)
class SealedPayload:
    """Authenticated-encrypted canonical bytes.  ``ciphertext`` = nonce || body."""

    ciphertext: bytes
    auth_tag: bytes
    key_id: str

    def to_value(self) -> dict:
        return {"auth_tag": self.auth_tag, "ciphertext": self.ciphertext, "key_id": self.key_id}

    @classmethod
    def from_value(cls, value: dict) -> "SealedPayload":
        return cls(
            ciphertext=value["ciphertext"], auth_tag=value["auth_tag"], key_id=value["key_id"]
        )


class KeyTable:
    """Registry of symmetric keys, one per institution in a scenario."""

    def __init__(self):
        self._keys: dict[str, bytes] = {}

    def register(self, key_id: str, key: bytes) -> None:
        if len(key) != KEY_LEN:
            raise ValueError(f"key must be {KEY_LEN} bytes, got {len(key)}")
        self._keys[key_id] = bytes(key)

    def get(self, key_id: str) -> bytes:
        try:
            return self._keys[key_id]
        except KeyError:
            raise UnknownKeyError(key_id) from None

    def key_ids(self) -> list[str]:
        return sorted(self._keys)

    def to_value(self) -> dict:
        return dict(sorted(self._keys.items()))

    @classmethod
    def from_value(cls, value: dict) -> "KeyTable":
        table = cls()
        for key_id, key in value.items():
            table.register(key_id, key)
        return table


def seal(plaintext, key_id: str, keys: KeyTable, nonce: bytes) -> SealedPayload:
    """Seal a structured value under a registered key.

    The nonce is caller-supplied (drawn from the scenario generator) so
    sealing is deterministic for a fixed seed.
    """
    if len(nonce) != NONCE_LEN:
        raise ValueError(f"nonce must be {NONCE_LEN} bytes, got {len(nonce)}")
    key = keys.get(key_id)
    sealed = AESGCM(key).encrypt(nonce, canonicalize(plaintext), None)
    body, tag = sealed[:-TAG_LEN], sealed[-TAG_LEN:]
    return SealedPayload(ciphertext=bytes(nonce) + body, auth_tag=tag, key_id=key_id)


def unseal(payload: SealedPayload, keys: KeyTable):
    """Recover the structured value from a sealed payload.

    Raises :class:`UnknownKeyError` if the payload's key id is unregistered,
    :class:`AuthenticationError` if the bytes were tampered with or the
    registered key does not match.
    """
    key = keys.get(payload.key_id)
    nonce, body = payload.ciphertext[:NONCE_LEN], payload.ciphertext[NONCE_LEN:]
    try:
        plain = AESGCM(key).decrypt(nonce, body + payload.auth_tag, None)
    except InvalidTag:
        raise AuthenticationError(f"sealed payload for key {payload.key_id!r} failed authentication") from None
    from .canon import loads

    return loads(plain)
