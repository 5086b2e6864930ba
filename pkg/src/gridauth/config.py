"""Server / CLI configuration: key=value lines plus `mount` lines.

    listen=127.0.0.1:8080
    export_root=/var/www/site
    default_policy=deny            # or anyuser-read
    dev_identity_headers=off
    tls_cert=/etc/grid/hostcert.pem
    tls_key=/etc/grid/hostkey.pem
    tls_client_ca=/etc/grid/ca.pem
    pool_state_dir=/var/lib/pool
    pool_prefix=pool
    pool_capacity=100
    pool_grace_seconds=3600
    mount /grid/local local /data/grid
    mount /grid/web http https://example.org/files credential /etc/grid/usercred.pem
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from gridauth import gacl
from gridauth.gacl import Acl, DENY_ALL, Permission
from gridauth.pool import PoolConfig
from gridauth.vfs import HttpBackend, LocalBackend, MountTable


class ConfigError(Exception):
    pass


@dataclass
class MountSpec:
    prefix: str
    kind: str  # "local" | "http"
    target: str
    credential: Optional[str] = None


@dataclass
class ServerConfig:
    listen: str = "127.0.0.1:8080"
    export_root: Optional[Path] = None
    default_policy: str = "deny"
    dev_identity_headers: bool = False
    tls_cert: Optional[str] = None
    tls_key: Optional[str] = None
    tls_client_ca: Optional[str] = None
    pool_state_dir: Optional[Path] = None
    pool_prefix: str = "pool"
    pool_capacity: int = 10
    pool_grace_seconds: float = 3600.0
    mounts: list[MountSpec] = field(default_factory=list)

    @property
    def host(self) -> str:
        return self.listen.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.listen.rsplit(":", 1)[1])

    def default_acl(self) -> Acl:
        if self.default_policy == "deny":
            return DENY_ALL
        if self.default_policy == "anyuser-read":
            return Acl((gacl.any_user_entry(Permission.READ),))
        raise ConfigError(f"unknown default_policy: {self.default_policy}")

    def pool_config(self) -> PoolConfig:
        if self.pool_state_dir is None:
            raise ConfigError("pool_state_dir is not configured")
        return PoolConfig(
            state_dir=self.pool_state_dir,
            prefix=self.pool_prefix,
            capacity=self.pool_capacity,
            grace_period=self.pool_grace_seconds,
        )

    def mount_table(self) -> MountTable:
        table = MountTable()
        for spec in self.mounts:
            if spec.kind == "local":
                table.add(spec.prefix, LocalBackend(spec.target, self.default_acl()))
            elif spec.kind == "http":
                table.add(spec.prefix, HttpBackend(spec.target,
                                                   credential_file=spec.credential))
            else:
                raise ConfigError(f"unknown mount kind: {spec.kind}")
        return table


_BOOL = {"on": True, "off": False, "true": True, "false": False, "yes": True, "no": False}


def _parse_mount(parts: list[str], lineno: int) -> MountSpec:
    if len(parts) < 3:
        raise ConfigError(f"line {lineno}: mount needs <prefix> <kind> <target>")
    prefix, kind, target, *rest = parts
    credential = None
    if rest:
        if len(rest) != 2 or rest[0] != "credential":
            raise ConfigError(f"line {lineno}: trailing mount options must be 'credential <file>'")
        credential = rest[1]
    return MountSpec(prefix=prefix, kind=kind, target=target, credential=credential)


def parse_config(text: str) -> ServerConfig:
    cfg = ServerConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("mount "):
            cfg.mounts.append(_parse_mount(line.split()[1:], lineno))
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value or mount line")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        try:
            if key == "listen":
                cfg.listen = value
            elif key == "export_root":
                cfg.export_root = Path(value)
            elif key == "default_policy":
                cfg.default_policy = value
            elif key == "dev_identity_headers":
                cfg.dev_identity_headers = _BOOL[value.lower()]
            elif key == "tls_cert":
                cfg.tls_cert = value
            elif key == "tls_key":
                cfg.tls_key = value
            elif key == "tls_client_ca":
                cfg.tls_client_ca = value
            elif key == "pool_state_dir":
                cfg.pool_state_dir = Path(value)
            elif key == "pool_prefix":
                cfg.pool_prefix = value
            elif key == "pool_capacity":
                cfg.pool_capacity = int(value)
            elif key == "pool_grace_seconds":
                cfg.pool_grace_seconds = float(value)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    if cfg.default_policy not in ("deny", "anyuser-read"):
        raise ConfigError(f"unknown default_policy: {cfg.default_policy}")
    return cfg


def load_config(path) -> ServerConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
