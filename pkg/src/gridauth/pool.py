"""Dynamically allocated pool accounts backed by a lock-file directory.

State layout under state_dir:

    map/<percent-encoded-DN>    content: account name + "\n"
    leases/<account>/<lease_id> one file per active job / fileserver session
    released/<account>          content: seconds-since-epoch of last release + "\n"

All mutation is multi-process safe: binding and reclaim decisions run under
a single allocation lock file (create-exclusive), and every visible state
change is an atomic create/replace/remove. No in-memory state is
authoritative. The clock is always caller-supplied so tests can drive it.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import tempfile
import time
import urllib.parse
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Optional


class PoolError(Exception):
    pass


class PoolExhausted(PoolError):
    """No free account remains in the pool."""


class StateCorrupt(PoolError):
    """The state directory is inconsistent; never silently repaired."""


class UnknownLease(PoolError):
    pass


class LockTimeout(PoolError):
    """The allocation lock could not be acquired in time."""


@dataclass(frozen=True)
class PoolConfig:
    state_dir: Path
    prefix: str = "pool"
    capacity: int = 10
    pad_width: int = 3
    grace_period: float = 3600.0
    hook_cmd: Optional[str] = None  # invoked as: <cmd> bind|free <account> <dn>
    lock_timeout: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "state_dir", Path(self.state_dir))
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if len(str(self.capacity)) > self.pad_width:
            raise ValueError("pad_width too small for capacity")

    def account_name(self, index: int) -> str:
        return f"{self.prefix}{index:0{self.pad_width}d}"

    @property
    def map_dir(self) -> Path:
        return self.state_dir / "map"

    @property
    def leases_dir(self) -> Path:
        return self.state_dir / "leases"

    @property
    def released_dir(self) -> Path:
        return self.state_dir / "released"


@dataclass(frozen=True)
class Lease:
    lease_id: str
    dn: str
    account: str
    started_at: float


def encode_dn(dn: str) -> str:
    return urllib.parse.quote(dn, safe="")


def decode_dn(name: str) -> str:
    return urllib.parse.unquote(name)


class _AllocationLock:
    """Exclusive lock via create-if-absent of state_dir/.lock."""

    def __init__(self, cfg: PoolConfig):
        self.path = cfg.state_dir / ".lock"
        self.timeout = cfg.lock_timeout
        self.fd: Optional[int] = None

    def __enter__(self):
        deadline = time.monotonic() + self.timeout
        while True:
            try:
                self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_RDWR)
                return self
            except FileExistsError:
                if time.monotonic() > deadline:
                    raise LockTimeout(f"allocation lock busy: {self.path}")
                time.sleep(0.005)

    def __exit__(self, *exc):
        if self.fd is not None:
            os.close(self.fd)
            self.fd = None
        try:
            os.unlink(self.path)
        except FileNotFoundError:
            pass


def _ensure_layout(cfg: PoolConfig):
    for d in (cfg.map_dir, cfg.leases_dir, cfg.released_dir):
        d.mkdir(parents=True, exist_ok=True)


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=path.parent)
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _map_files(cfg: PoolConfig):
    if not cfg.map_dir.is_dir():
        return
    for entry in sorted(cfg.map_dir.iterdir()):
        if entry.name.startswith("."):
            continue  # in-flight temp files
        yield entry


def scan_bindings(cfg: PoolConfig) -> dict[str, str]:
    """All current DN -> account bindings. Raises StateCorrupt on an
    invalid or non-injective map."""
    valid = {cfg.account_name(i) for i in range(1, cfg.capacity + 1)}
    bindings: dict[str, str] = {}
    claimed: dict[str, str] = {}
    for entry in _map_files(cfg):
        dn = decode_dn(entry.name)
        account = entry.read_text().strip()
        if account not in valid:
            raise StateCorrupt(f"lock file {entry.name} claims unknown account {account!r}")
        if account in claimed:
            raise StateCorrupt(
                f"account {account} claimed by both {claimed[account]!r} and {dn!r}")
        claimed[account] = dn
        bindings[dn] = account
    return bindings


def _run_hook(cfg: PoolConfig, event: str, account: str, dn: str):
    if not cfg.hook_cmd:
        return
    cmd = shlex.split(cfg.hook_cmd) + [event, account, dn]
    try:
        subprocess.run(cmd, check=False, capture_output=True, timeout=30)
    except Exception:
        pass  # hooks are site plumbing, never fatal


def _allocate_locked(cfg: PoolConfig, dn: str, now: float) -> str:
    bindings = scan_bindings(cfg)
    if dn in bindings:
        return bindings[dn]
    used = set(bindings.values())
    for index in range(1, cfg.capacity + 1):
        account = cfg.account_name(index)
        if account not in used:
            _atomic_write(cfg.map_dir / encode_dn(dn), account + "\n")
            # A binding with no lease yet becomes reclaimable one grace
            # period after allocation.
            _atomic_write(cfg.released_dir / account, f"{now:.0f}\n")
            _run_hook(cfg, "bind", account, dn)
            return account
    raise PoolExhausted(f"all {cfg.capacity} accounts are bound")


def allocate(cfg: PoolConfig, dn: str, now: Optional[float] = None) -> str:
    """Bind dn to the lowest-indexed free account, or return its existing
    binding. Idempotent; concurrent callers with different DNs never share
    an account."""
    if not dn:
        raise ValueError("empty DN")
    if now is None:
        now = time.time()
    _ensure_layout(cfg)
    map_file = cfg.map_dir / encode_dn(dn)
    try:
        return map_file.read_text().strip()
    except FileNotFoundError:
        pass
    with _AllocationLock(cfg):
        return _allocate_locked(cfg, dn, now)


def begin_lease(cfg: PoolConfig, dn: str, now: Optional[float] = None) -> Lease:
    """Start a job / fileserver session lease, allocating if unbound."""
    if now is None:
        now = time.time()
    _ensure_layout(cfg)
    with _AllocationLock(cfg):
        account = _allocate_locked(cfg, dn, now)
        lease_id = uuid.uuid4().hex
        lease_dir = cfg.leases_dir / account
        lease_dir.mkdir(parents=True, exist_ok=True)
        _atomic_write(lease_dir / lease_id, f"{dn}\n{now:.0f}\n")
    return Lease(lease_id, dn, account, now)


def end_lease(cfg: PoolConfig, lease: Lease, now: Optional[float] = None):
    """Remove the lease; when it was the account's last, stamp the release
    time that starts the grace period."""
    if now is None:
        now = time.time()
    lease_file = cfg.leases_dir / lease.account / lease.lease_id
    with _AllocationLock(cfg):
        try:
            os.unlink(lease_file)
        except FileNotFoundError:
            raise UnknownLease(f"no such lease: {lease.lease_id}")
        if not _active_leases(cfg, lease.account):
            _atomic_write(cfg.released_dir / lease.account, f"{now:.0f}\n")


def find_lease(cfg: PoolConfig, lease_id: str) -> Lease:
    """Recover a Lease from the state directory (for CLI use)."""
    if cfg.leases_dir.is_dir():
        for account_dir in cfg.leases_dir.iterdir():
            lease_file = account_dir / lease_id
            if lease_file.is_file():
                lines = lease_file.read_text().splitlines()
                dn = lines[0] if lines else ""
                started = float(lines[1]) if len(lines) > 1 else 0.0
                return Lease(lease_id, dn, account_dir.name, started)
    raise UnknownLease(f"no such lease: {lease_id}")


def _active_leases(cfg: PoolConfig, account: str) -> list[str]:
    lease_dir = cfg.leases_dir / account
    if not lease_dir.is_dir():
        return []
    return [p.name for p in lease_dir.iterdir() if not p.name.startswith(".")]


def _last_release(cfg: PoolConfig, account: str) -> Optional[float]:
    try:
        return float((cfg.released_dir / account).read_text().strip())
    except FileNotFoundError:
        return None
    except ValueError as exc:
        raise StateCorrupt(f"released/{account}: {exc}")


def reclaim(cfg: PoolConfig, now: Optional[float] = None) -> list[str]:
    """Free every bound account with zero active leases whose grace period
    has elapsed (now - last_release >= grace_period, inclusive). Freed
    accounts are immediately reusable. Safe alongside allocators."""
    if now is None:
        now = time.time()
    _ensure_layout(cfg)
    freed: list[str] = []
    with _AllocationLock(cfg):
        bindings = scan_bindings(cfg)
        for dn, account in bindings.items():
            if _active_leases(cfg, account):
                continue
            released = _last_release(cfg, account)
            if released is None or now - released < cfg.grace_period:
                continue
            os.unlink(cfg.map_dir / encode_dn(dn))
            try:
                os.unlink(cfg.released_dir / account)
            except FileNotFoundError:
                pass
            lease_dir = cfg.leases_dir / account
            if lease_dir.is_dir():
                try:
                    lease_dir.rmdir()
                except OSError:
                    pass
            _run_hook(cfg, "free", account, dn)
            freed.append(account)
    return freed


@dataclass
class PoolStatus:
    bindings: dict[str, str]
    leases: dict[str, list[str]]
    last_release: dict[str, Optional[float]]


def status(cfg: PoolConfig) -> PoolStatus:
    _ensure_layout(cfg)
    bindings = scan_bindings(cfg)
    leases = {account: _active_leases(cfg, account) for account in bindings.values()}
    release = {account: _last_release(cfg, account) for account in bindings.values()}
    return PoolStatus(bindings, leases, release)


# ---------------------------------------------------------------------------
# grid-mapfile construction

def build_mapfile(static_entries: list[tuple[str, str]],
                  vo_sources: list[tuple[str, str]],
                  dn_list_fetch=None) -> tuple[str, list[str]]:
    """Build the identity -> account mapping file.

    static_entries: (DN, concrete account); vo_sources: (dn-list path or
    URL, pool name) producing ".<pool>" references. Static entries win over
    pool rules; among pool sources the first listed wins. Output is one
    quoted-DN line per identity, sorted by DN.

    Returns (text, warnings); an unreadable source is skipped and reported.
    """
    from gridauth.gacl import DnListUnavailable, load_dn_list
    if dn_list_fetch is None:
        dn_list_fetch = load_dn_list

    mapping: dict[str, str] = {}
    warnings: list[str] = []
    for source, pool_name in vo_sources:
        try:
            dns = dn_list_fetch(source)
        except DnListUnavailable as exc:
            warnings.append(str(exc))
            continue
        for dn in dns:
            mapping.setdefault(dn, "." + pool_name)
    for dn, account in static_entries:
        mapping[dn] = account
    lines = [f'"{dn}" {target}' for dn, target in sorted(mapping.items())]
    return "".join(line + "\n" for line in lines), warnings
