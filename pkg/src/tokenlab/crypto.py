"""Hashing, ordinary signatures and RSA blind signatures.

All randomness comes from a caller-supplied ``random.Random`` so that every
key, blinding factor and salt is reproducible from a scenario seed.

Ordinary signatures are Ed25519 (32-byte keys, 64-byte signatures).  Blind
signatures follow the RSABSSA-SHA384-PSS-Deterministic flow of RFC 9474:
the public key is the big-endian modulus (exponent fixed at 65537), the
secret key is modulus || private exponent, both fixed length.
"""

from __future__ import annotations

import functools
import hashlib
import math
import random
from dataclasses import dataclass
from typing import Tuple

import sympy
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from tokenlab.encoding import Field, encode_fields

Digest = bytes

DIGEST_SIZE = 32
ED25519_KEY_SIZE = 32
ED25519_SIG_SIZE = 64
RSA_EXPONENT = 65537
DEFAULT_RSA_BITS = 1024

_PSS_HASH = hashlib.sha384
_PSS_HLEN = 48
_PSS_SLEN = 48


class BlindSignatureError(ValueError):
    pass


def digest(data: bytes) -> Digest:
    return hashlib.sha256(data).digest()


def tagged_digest(tag: str, *fields: Field) -> Digest:
    """Domain-separated digest over length-prefixed fields."""
    return digest(encode_fields(tag, *fields))


@dataclass(frozen=True)
class KeyPair:
    public: bytes
    secret: bytes

    def __repr__(self) -> str:
        return f"KeyPair(public={self.public[:8].hex()}...)"


def generate_keypair(rng: random.Random) -> KeyPair:
    seed = rng.randbytes(ED25519_KEY_SIZE)
    sk = Ed25519PrivateKey.from_private_bytes(seed)
    return KeyPair(public=sk.public_key().public_bytes_raw(), secret=seed)


# Ed25519 is deterministic and verification is a pure function, so both
# are memoised; exhaustive ordering tests replay the same messages often.
@functools.lru_cache(maxsize=1 << 16)
def _ed25519_sign(secret: bytes, message: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(secret).sign(message)


@functools.lru_cache(maxsize=1 << 16)
def _ed25519_verify(public: bytes, message: bytes, signature: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


def sign(secret: bytes, message: bytes) -> bytes:
    if len(secret) != ED25519_KEY_SIZE:
        raise ValueError("signing key must be a 32-byte Ed25519 seed")
    return _ed25519_sign(bytes(secret), bytes(message))


def verify(public: bytes, message: bytes, signature: bytes) -> bool:
    """Verify an Ed25519 or RSA-PSS (blind-issued) signature.

    The scheme is selected by key length.  Malformed keys or signatures
    yield False rather than raising.
    """
    if not isinstance(public, (bytes, bytearray)) or not isinstance(
        signature, (bytes, bytearray)
    ):
        return False
    if len(public) == ED25519_KEY_SIZE:
        if len(signature) != ED25519_SIG_SIZE:
            return False
        return _ed25519_verify(bytes(public), bytes(message), bytes(signature))
    return _rsa_pss_verify(bytes(public), bytes(message), bytes(signature))


# --- RSA helpers -----------------------------------------------------------


def _i2osp(x: int, length: int) -> bytes:
    return x.to_bytes(length, "big")


def _os2ip(data: bytes) -> int:
    return int.from_bytes(data, "big")


def _random_prime(rng: random.Random, bits: int) -> int:
    while True:
        candidate = rng.getrandbits(bits) | (3 << (bits - 2)) | 1
        p = sympy.nextprime(candidate)
        if p.bit_length() == bits and math.gcd(RSA_EXPONENT, p - 1) == 1:
            return int(p)


def generate_blind_keypair(rng: random.Random, bits: int = DEFAULT_RSA_BITS) -> KeyPair:
    if bits % 16 or bits < 1024:
        raise ValueError("modulus size must be a multiple of 16 and at least 1024")
    while True:
        p = _random_prime(rng, bits // 2)
        q = _random_prime(rng, bits // 2)
        n = p * q
        if p != q and n.bit_length() == bits:
            break
    d = pow(RSA_EXPONENT, -1, math.lcm(p - 1, q - 1))
    k = bits // 8
    return KeyPair(public=_i2osp(n, k), secret=_i2osp(n, k) + _i2osp(d, k))


def _mgf1(seed: bytes, length: int) -> bytes:
    out = b""
    counter = 0
    while len(out) < length:
        out += _PSS_HASH(seed + counter.to_bytes(4, "big")).digest()
        counter += 1
    return out[:length]


def _pss_encode(message: bytes, em_bits: int, salt: bytes) -> bytes:
    em_len = (em_bits + 7) // 8
    m_hash = _PSS_HASH(message).digest()
    if em_len < _PSS_HLEN + _PSS_SLEN + 2:
        raise ValueError("modulus too small for PSS encoding")
    h = _PSS_HASH(b"\x00" * 8 + m_hash + salt).digest()
    db = b"\x00" * (em_len - _PSS_SLEN - _PSS_HLEN - 2) + b"\x01" + salt
    masked = bytearray(a ^ b for a, b in zip(db, _mgf1(h, em_len - _PSS_HLEN - 1)))
    masked[0] &= 0xFF >> (8 * em_len - em_bits)
    return bytes(masked) + h + b"\xbc"


def _pss_check(message: bytes, em: bytes, em_bits: int) -> bool:
    em_len = (em_bits + 7) // 8
    if len(em) != em_len or em[-1] != 0xBC or em_len < _PSS_HLEN + _PSS_SLEN + 2:
        return False
    masked, h = em[: em_len - _PSS_HLEN - 1], em[em_len - _PSS_HLEN - 1 : -1]
    if masked[0] & ~(0xFF >> (8 * em_len - em_bits)) & 0xFF:
        return False
    db = bytearray(a ^ b for a, b in zip(masked, _mgf1(h, len(masked))))
    db[0] &= 0xFF >> (8 * em_len - em_bits)
    pad_len = em_len - _PSS_HLEN - _PSS_SLEN - 2
    if any(db[:pad_len]) or db[pad_len] != 0x01:
        return False
    salt = bytes(db[-_PSS_SLEN:])
    m_hash = _PSS_HASH(message).digest()
    return _PSS_HASH(b"\x00" * 8 + m_hash + salt).digest() == h


def _rsa_pss_verify(public: bytes, message: bytes, signature: bytes) -> bool:
    k = len(public)
    if k < 128 or len(signature) != k:
        return False
    n = _os2ip(public)
    if n.bit_length() != 8 * k or n % 2 == 0:
        return False
    s = _os2ip(signature)
    if s >= n:
        return False
    em_bits = n.bit_length() - 1
    em = _i2osp(pow(s, RSA_EXPONENT, n), (em_bits + 7) // 8)
    return _pss_check(message, em, em_bits)


# --- blind signature protocol ---------------------------------------------


@dataclass(frozen=True)
class BlindingState:
    """User-side secret needed to unblind; never shown to the issuer."""

    issuer_key: bytes
    inverse: int


@dataclass(frozen=True)
class BlindSignatureTranscript:
    """Everything the issuer observes during one issuance."""

    blinded_message: bytes
    blind_signature: bytes
    issuer_key: bytes


def blind(message: bytes, issuer_key: bytes, rng: random.Random) -> Tuple[bytes, BlindingState]:
    k = len(issuer_key)
    n = _os2ip(issuer_key)
    em_bits = n.bit_length() - 1
    encoded = _pss_encode(message, em_bits, rng.randbytes(_PSS_SLEN))
    m = _os2ip(encoded)
    if math.gcd(m, n) != 1:
        raise BlindSignatureError("encoded message not invertible modulo n")
    while True:
        r = rng.randrange(2, n)
        if math.gcd(r, n) == 1:
            break
    blinded = (m * pow(r, RSA_EXPONENT, n)) % n
    return _i2osp(blinded, k), BlindingState(issuer_key=issuer_key, inverse=pow(r, -1, n))


def blind_sign(issuer_secret: bytes, blinded_message: bytes) -> bytes:
    if len(issuer_secret) % 2:
        raise BlindSignatureError("malformed issuer secret")
    k = len(issuer_secret) // 2
    n, d = _os2ip(issuer_secret[:k]), _os2ip(issuer_secret[k:])
    if not isinstance(blinded_message, (bytes, bytearray)) or len(blinded_message) != k:
        raise BlindSignatureError(f"blinded message must be {k} bytes")
    m = _os2ip(blinded_message)
    if m >= n or m == 0:
        raise BlindSignatureError("blinded message out of range")
    s = pow(m, d, n)
    if pow(s, RSA_EXPONENT, n) != m:
        raise BlindSignatureError("signing failure")
    return _i2osp(s, k)


def unblind(blind_signature: bytes, state: BlindingState) -> bytes:
    k = len(state.issuer_key)
    n = _os2ip(state.issuer_key)
    z = _os2ip(blind_signature)
    return _i2osp((z * state.inverse) % n, k)
