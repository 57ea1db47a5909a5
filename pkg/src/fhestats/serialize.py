"""Binary container for keys, ciphertexts and arrays of encrypted values.

Layout (all integers little-endian)::

    "EFHE" | u16 version | u8 kind | 32-byte params digest
    | u32 n + n bytes of params JSON | kind-specific body

A polynomial is written as ``u32 byte_length`` followed by its
coefficients at a fixed width of ``ceil(bits/8)`` bytes each, so a
ciphertext at ``d=8192, q=2^224`` is ``2 * 8192 * 28`` bytes plus framing.

Bodies:

* public key: ``u32 4`` then ``p0, p1, r0, r1`` (the last two over ``q^2``)
* secret key: ``u32 1`` then ``s``
* ciphertext: ``u32 depth | u32 2 | c0 | c1``
* array: ``u32 n_meta + JSON meta | u32 ndim | u32 shape... | entries``
  where each entry is ``u8 0`` + length-prefixed signed integer or
  ``u8 1`` + a ciphertext body.
"""

from __future__ import annotations

import io
import json
import os
import struct

import numpy as np

from .fv import Ciphertext, PublicKey, RelinKey, SchemeParams, SecretKey
from .ring import ParameterMismatch, RingParams, RingPoly

MAGIC = b"EFHE"
VERSION = 1
KIND_PUBLIC_KEY = 1
KIND_SECRET_KEY = 2
KIND_CIPHERTEXT = 3
KIND_ARRAY = 4
_KIND_NAMES = {1: "public-key", 2: "secret-key", 3: "ciphertext", 4: "array"}
_NO_PARAMS = bytes(32)


class CorruptArtifact(ValueError):
    """Bad magic, unknown version or kind, or a truncated file."""


# -- low level ------------------------------------------------------------------------

class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptArtifact("truncated artifact")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self):
        return self.take(1)[0]

    def u16(self):
        return struct.unpack("<H", self.take(2))[0]

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def done(self):
        if self.pos != len(self.data):
            raise CorruptArtifact(f"{len(self.data) - self.pos} trailing bytes")


def _poly_bytes(poly: RingPoly) -> bytes:
    width = (poly.params.q_bits + 7) // 8
    body = b"".join(c.to_bytes(width, "little") for c in poly.coeffs)
    return struct.pack("<I", len(body)) + body


def _read_poly(r: _Reader, ring: RingParams) -> RingPoly:
    n = r.u32()
    if n % ring.d:
        raise CorruptArtifact("polynomial length does not match ring degree")
    width = n // ring.d
    body = r.take(n)
    coeffs = [int.from_bytes(body[i * width:(i + 1) * width], "little") for i in range(ring.d)]
    if any(c >= ring.q for c in coeffs):
        raise CorruptArtifact("polynomial coefficient exceeds modulus")
    return RingPoly(ring, coeffs, reduced=True)


def _header(kind: int, params: SchemeParams | None) -> bytes:
    if params is None:
        digest, blob = _NO_PARAMS, b""
    else:
        digest, blob = params.digest(), json.dumps(params.to_dict(), sort_keys=True).encode()
    return MAGIC + struct.pack("<HB", VERSION, kind) + digest + struct.pack("<I", len(blob)) + blob


def _read_header(r: _Reader):
    if r.take(4) != MAGIC:
        raise CorruptArtifact("not an EFHE artifact (bad magic)")
    version = r.u16()
    if version != VERSION:
        raise CorruptArtifact(f"unsupported container version {version}")
    kind = r.u8()
    if kind not in _KIND_NAMES:
        raise CorruptArtifact(f"unknown artifact kind {kind}")
    digest = r.take(32)
    blob = r.take(r.u32())
    params = None
    if blob:
        try:
            fields = json.loads(blob)
            fields.pop("scheme", None)
            params = SchemeParams(**fields)
        except (ValueError, TypeError) as exc:
            raise CorruptArtifact(f"unreadable parameter block: {exc}") from None
        if params.digest() != digest:
            raise CorruptArtifact("parameter block does not match its digest")
    elif digest != _NO_PARAMS:
        raise CorruptArtifact("digest present without parameter block")
    return kind, params


def _expect_params(found: SchemeParams | None, expected: SchemeParams | None):
    if expected is not None and found is not None and found != expected:
        raise ParameterMismatch(
            f"artifact parameters {found.to_dict()} differ from expected {expected.to_dict()}"
        )


def _ct_body(ct: Ciphertext) -> bytes:
    return struct.pack("<II", ct.depth, 2) + _poly_bytes(ct.c0) + _poly_bytes(ct.c1)


def _read_ct_body(r: _Reader, pk: PublicKey) -> Ciphertext:
    depth = r.u32()
    if r.u32() != 2:
        raise CorruptArtifact("ciphertext must hold exactly two polynomials")
    ring = pk.params.ring
    c0 = _read_poly(r, ring)
    c1 = _read_poly(r, ring)
    return Ciphertext(c0, c1, pk, depth)


def _write(blob: bytes, dest):
    if dest is None:
        return blob
    if hasattr(dest, "write"):
        dest.write(blob)
    else:
        with open(dest, "wb") as fh:
            fh.write(blob)
    return blob


def _read(src) -> bytes:
    if isinstance(src, (bytes, bytearray)):
        return bytes(src)
    if hasattr(src, "read"):
        return src.read()
    with open(src, "rb") as fh:
        return fh.read()


# -- keys -------------------------------------------------------------------------

def dump_key(key) -> bytes:
    if isinstance(key, PublicKey):
        if key.rlk is None:
            raise ValueError("public key has no relinearization key to store")
        polys = [key.p0, key.p1, key.rlk.r0, key.rlk.r1]
        kind = KIND_PUBLIC_KEY
    elif isinstance(key, SecretKey):
        polys, kind = [key.s], KIND_SECRET_KEY
    else:
        raise TypeError(f"cannot serialize {type(key).__name__} as a key")
    body = struct.pack("<I", len(polys)) + b"".join(_poly_bytes(p) for p in polys)
    return _header(kind, key.params) + body


def load_key(src, params: SchemeParams | None = None):
    """Load a public or secret key, optionally checking it matches ``params``."""
    r = _Reader(_read(src))
    kind, found = _read_header(r)
    if kind not in (KIND_PUBLIC_KEY, KIND_SECRET_KEY) or found is None:
        raise CorruptArtifact(f"expected a key, found {_KIND_NAMES[kind]}")
    _expect_params(found, params)
    count = r.u32()
    if kind == KIND_PUBLIC_KEY:
        if count != 4:
            raise CorruptArtifact("public key must hold four polynomials")
        p0, p1 = _read_poly(r, found.ring), _read_poly(r, found.ring)
        r0, r1 = _read_poly(r, found.aux_ring), _read_poly(r, found.aux_ring)
        key = PublicKey(found, p0, p1, RelinKey(found, r0, r1))
    else:
        if count != 1:
            raise CorruptArtifact("secret key must hold one polynomial")
        key = SecretKey(found, _read_poly(r, found.ring))
    r.done()
    return key


def save_key(key, dest):
    return _write(dump_key(key), dest)


def save_keys(keys, directory) -> tuple[str, str]:
    """Write ``pk.efhe`` and ``sk.efhe`` into ``directory``; returns both paths."""
    os.makedirs(directory, exist_ok=True)
    pk_path = os.path.join(directory, "pk.efhe")
    sk_path = os.path.join(directory, "sk.efhe")
    save_key(keys.pk, pk_path)
    save_key(keys.sk, sk_path)
    return pk_path, sk_path


def load_keys(directory):
    """Read the pair written by :func:`save_keys` as ``(pk, sk)``; sk may be absent."""
    pk = load_key(os.path.join(directory, "pk.efhe"))
    sk_path = os.path.join(directory, "sk.efhe")
    sk = load_key(sk_path, pk.params) if os.path.exists(sk_path) else None
    return pk, sk


# -- ciphertexts --------------------------------------------------------------------

def dump_ct(ct: Ciphertext) -> bytes:
    return _header(KIND_CIPHERTEXT, ct.params) + _ct_body(ct)


def save_ct(ct: Ciphertext, dest=None) -> bytes:
    return _write(dump_ct(ct), dest)


def load_ct(src, pk: PublicKey) -> Ciphertext:
    """Load a ciphertext and bind it to ``pk`` (whose parameters must match)."""
    r = _Reader(_read(src))
    kind, found = _read_header(r)
    if kind != KIND_CIPHERTEXT or found is None:
        raise CorruptArtifact(f"expected a ciphertext, found {_KIND_NAMES[kind]}")
    _expect_params(found, pk.params)
    ct = _read_ct_body(r, pk)
    r.done()
    return ct


# -- arrays of EncryptedValue -------------------------------------------------------

def _array_params(values):
    params = None
    for v in values:
        if isinstance(v, Ciphertext):
            if params is None:
                params = v.params
            elif v.params != params:
                raise ParameterMismatch("array mixes ciphertexts under different parameters")
    return params


def dump_array(arr, meta: dict | None = None) -> bytes:
    """Serialize an array whose cells are plain integers or ciphertexts."""
    arr = np.asarray(arr, dtype=object)
    flat = list(arr.flat)
    params = _array_params(flat)
    meta_blob = json.dumps(meta or {}, sort_keys=True).encode()
    out = io.BytesIO()
    out.write(_header(KIND_ARRAY, params))
    out.write(struct.pack("<I", len(meta_blob)) + meta_blob)
    out.write(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
    for v in flat:
        if isinstance(v, Ciphertext):
            out.write(b"\x01" + _ct_body(v))
        else:
            v = int(v)
            raw = v.to_bytes((v.bit_length() + 8) // 8 or 1, "little", signed=True)
            out.write(b"\x00" + struct.pack("<I", len(raw)) + raw)
    return out.getvalue()


def save_array(arr, dest=None, meta: dict | None = None) -> bytes:
    return _write(dump_array(arr, meta), dest)


def load_array(src, pk: PublicKey | None = None):
    """Return ``(array, meta)``; ciphertext cells are bound to ``pk``."""
    r = _Reader(_read(src))
    kind, found = _read_header(r)
    if kind != KIND_ARRAY:
        raise CorruptArtifact(f"expected an array, found {_KIND_NAMES[kind]}")
    if pk is not None:
        _expect_params(found, pk.params)
    try:
        meta = json.loads(r.take(r.u32()) or b"{}")
    except ValueError:
        raise CorruptArtifact("unreadable array metadata") from None
    ndim = r.u32()
    shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
    size = int(np.prod(shape)) if ndim else 1
    cells = []
    for _ in range(size):
        tag = r.u8()
        if tag == 0:
            cells.append(int.from_bytes(r.take(r.u32()), "little", signed=True))
        elif tag == 1:
            if pk is None:
                raise ValueError("array holds ciphertexts; a public key is required to load it")
            cells.append(_read_ct_body(r, pk))
        else:
            raise CorruptArtifact(f"unknown array cell tag {tag}")
    r.done()
    out = np.empty(size, dtype=object)
    out[:] = cells
    return out.reshape(shape), meta


# -- inspection ---------------------------------------------------------------------

def inspect_artifact(src) -> dict:
    """Header summary of any artifact without needing keys."""
    data = _read(src)
    r = _Reader(data)
    kind, params = _read_header(r)
    info = {"kind": _KIND_NAMES[kind], "bytes": len(data), "version": VERSION}
    if params is not None:
        info["params"] = params.to_dict()
        info["depth_bound"] = params.depth_bound
        info["security_estimate_bits"] = params.security_estimate_bits
    if kind == KIND_CIPHERTEXT:
        info["depth"] = r.u32()
    elif kind == KIND_ARRAY:
        info["meta"] = json.loads(r.take(r.u32()) or b"{}")
        ndim = r.u32()
        info["shape"] = list(struct.unpack(f"<{ndim}I", r.take(4 * ndim)))
    return info
