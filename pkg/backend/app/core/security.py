"""
签名与成员身份

节点身份使用 Ed25519 (cryptography); null 模式用定长常量签名替代,
便于在基准测试中把签名开销与流水线结构分开.
"""

from __future__ import annotations

import hmac
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)

from app.infrastructure.error_handling_service import ConfigError

logger = logging.getLogger(__name__)

SIGNATURE_SIZE = 64
PUBLIC_KEY_SIZE = 32
NULL_SIGNATURE = b"\x5a" * SIGNATURE_SIZE
NULL_PUBLIC_KEY = b"\x00" * PUBLIC_KEY_SIZE
BOOTSTRAP_FILE = "network.keys"


class Signer(Protocol):
    def sign(self, data: bytes) -> bytes: ...

    @property
    def public_key(self) -> bytes: ...


class Verifier(Protocol):
    def verify(self, signature: bytes, data: bytes) -> bool: ...


class Ed25519Signer:
    def __init__(self, private_key: Ed25519PrivateKey | None = None) -> None:
        self._key = private_key or Ed25519PrivateKey.generate()
        self._public = self._key.public_key().public_bytes(
            Encoding.Raw, PublicFormat.Raw
        )

    @classmethod
    def from_seed(cls, seed: bytes) -> Ed25519Signer:
        return cls(Ed25519PrivateKey.from_private_bytes(seed))

    @property
    def public_key(self) -> bytes:
        return self._public

    def private_seed(self) -> bytes:
        return self._key.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())

    def sign(self, data: bytes) -> bytes:
        return self._key.sign(data)


class Ed25519Verifier:
    def __init__(self, public_key: bytes) -> None:
        if len(public_key) != PUBLIC_KEY_SIZE:
            raise ValueError("Ed25519 public key must be 32 bytes")
        self._key = Ed25519PublicKey.from_public_bytes(public_key)

    def verify(self, signature: bytes, data: bytes) -> bool:
        try:
            self._key.verify(signature, data)
        except InvalidSignature:
            return False
        return True


class NullSigner:
    """常量签名, 不做任何密码学运算"""

    @property
    def public_key(self) -> bytes:
        return NULL_PUBLIC_KEY

    def sign(self, data: bytes) -> bytes:
        return NULL_SIGNATURE


class NullVerifier:
    def verify(self, signature: bytes, data: bytes) -> bool:
        return hmac.compare_digest(signature, NULL_SIGNATURE)


def new_signer(crypto: str) -> Signer:
    if crypto == "real":
        return Ed25519Signer()
    if crypto == "null":
        return NullSigner()
    raise ConfigError(f"unknown crypto mode: {crypto}")


def make_verifier(crypto: str, public_key: bytes) -> Verifier:
    if crypto == "real":
        return Ed25519Verifier(public_key)
    if crypto == "null":
        return NullVerifier()
    raise ConfigError(f"unknown crypto mode: {crypto}")


@dataclass
class Membership:
    """网络成员表: 身份 id -> 验证器. 未登记的身份签名一律不计入"""

    crypto: str = "real"
    _verifiers: dict[str, Verifier] = field(default_factory=dict)
    _public_keys: dict[str, bytes] = field(default_factory=dict)

    def register(self, identity: str, public_key: bytes) -> None:
        if identity in self._verifiers:
            raise ConfigError(f"duplicate identity in membership: {identity}")
        self._verifiers[identity] = make_verifier(self.crypto, public_key)
        self._public_keys[identity] = public_key

    def __contains__(self, identity: object) -> bool:
        return identity in self._verifiers

    def identities(self) -> list[str]:
        return sorted(self._verifiers)

    def public_key(self, identity: str) -> bytes:
        return self._public_keys[identity]

    def verify(self, identity: str, signature: bytes, data: bytes) -> bool:
        verifier = self._verifiers.get(identity)
        if verifier is None:
            return False
        return verifier.verify(signature, data)

    def write_bootstrap(self, path: str | Path) -> None:
        """每行一个身份: "<id> <hex 公钥>" """
        lines = [f"{i} {self._public_keys[i].hex()}" for i in self.identities()]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load_bootstrap(cls, path: str | Path, crypto: str = "real") -> Membership:
        path = Path(path)
        membership = cls(crypto=crypto)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read bootstrap file {path}: {e}") from e
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected '<id> <hex key>'")
            identity, hex_key = parts
            try:
                key = bytes.fromhex(hex_key)
            except ValueError as e:
                raise ConfigError(f"{path}:{lineno}: bad hex key") from e
            membership.register(identity, key)
        logger.info("加载成员表 %s: %d 个身份", path, len(membership.identities()))
        return membership


@dataclass
class Identity:
    """带私钥的节点或客户端身份"""

    id: str
    signer: Signer

    @property
    def public_key(self) -> bytes:
        return self.signer.public_key

    def sign(self, data: bytes) -> bytes:
        return self.signer.sign(data)


def generate_identities(ids: list[str], crypto: str = "real") -> list[Identity]:
    """网络启动时为每个身份生成密钥"""
    return [Identity(id=i, signer=new_signer(crypto)) for i in ids]


def load_or_create_identities(
    key_dir: str | Path, ids: list[str], crypto: str = "real"
) -> list[Identity]:
    """重启时沿用已有私钥, 使旧账本中的签名仍可验证"""
    if crypto == "null":
        return generate_identities(ids, crypto)
    key_dir = Path(key_dir)
    key_dir.mkdir(parents=True, exist_ok=True)
    identities = []
    for identity_id in ids:
        seed_file = key_dir / f"{identity_id}.seed"
        if seed_file.exists():
            try:
                signer = Ed25519Signer.from_seed(bytes.fromhex(seed_file.read_text().strip()))
            except ValueError as e:
                raise ConfigError(f"bad key file {seed_file}: {e}") from e
        else:
            signer = Ed25519Signer()
            seed_file.write_text(signer.private_seed().hex() + "\n", encoding="utf-8")
            seed_file.chmod(0o600)
        identities.append(Identity(id=identity_id, signer=signer))
    return identities


def membership_of(identities: list[Identity], crypto: str = "real") -> Membership:
    membership = Membership(crypto=crypto)
    for identity in identities:
        membership.register(identity.id, identity.public_key)
    return membership
