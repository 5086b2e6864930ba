"""User-space virtual filesystem: a /grid-style hierarchy routed through a
mount table to plugin backends.

The local backend enforces GACL control files; the HTTP/HTTPS backend maps
reads onto GET requests and can present a client credential to remote
servers. What a caller may do depends only on the credentials they hold,
never on any ambient process identity.
"""

from __future__ import annotations

import os
import posixpath
import ssl
import tempfile
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from gridauth import gacl
from gridauth.gacl import (
    Acl,
    AclParseError,
    CredentialSet,
    DENY_ALL,
    Permission,
    acl_for_path,
    load_dn_list,
)

HISTORY_DIR = ".gridsite-history"


class VfsError(Exception):
    pass


class NoMount(VfsError):
    pass


class PathEscape(VfsError):
    pass


class Forbidden(VfsError):
    pass


class NotFound(VfsError):
    pass


class Unsupported(VfsError):
    pass


class NotADirectory(VfsError):
    pass


class NotEmpty(VfsError):
    pass


class BackendError(VfsError):
    def __init__(self, status: int, message: str = ""):
        self.status = status
        super().__init__(message or f"backend failure (status {status})")


@dataclass(frozen=True)
class FileMeta:
    name: str
    kind: str  # "file" | "directory"
    size: int
    modified: float


def is_control_name(name: str) -> bool:
    return name == gacl.CONTROL_FILE or name.startswith(gacl.CONTROL_FILE_PREFIX)


def is_hidden_name(name: str) -> bool:
    return is_control_name(name) or name == HISTORY_DIR


class Backend:
    """Plugin interface. Operations outside `capabilities` raise
    Unsupported, never silently no-op; the base class enforces that."""

    capabilities: frozenset[str] = frozenset()

    def _require(self, op: str):
        if op not in self.capabilities:
            raise Unsupported(f"{type(self).__name__} does not support {op}")

    def read(self, rel: str, who: CredentialSet) -> bytes:
        raise Unsupported("read")

    def write(self, rel: str, who: CredentialSet, data: bytes):
        raise Unsupported("write")

    def list(self, rel: str, who: CredentialSet) -> list[FileMeta]:
        raise Unsupported("list")

    def remove(self, rel: str, who: CredentialSet):
        raise Unsupported("remove")

    def mkdir(self, rel: str, who: CredentialSet):
        raise Unsupported("mkdir")

    def stat(self, rel: str, who: CredentialSet) -> FileMeta:
        raise Unsupported("stat")


class LocalBackend(Backend):
    """Local directory tree with GACL enforcement from control files."""

    capabilities = frozenset({"read", "write", "list", "remove", "mkdir", "stat"})

    def __init__(self, root, default_acl: Acl = DENY_ALL, dn_list_fetch=load_dn_list):
        self.root = Path(root)
        self.default_acl = default_acl
        self.dn_list_fetch = dn_list_fetch

    # -- authorization ---------------------------------------------------

    def effective_acl(self, rel: str) -> Acl:
        try:
            return acl_for_path(self.root, rel, self.default_acl)
        except AclParseError:
            # A broken control file fails closed for its subtree.
            return DENY_ALL

    def permissions(self, rel: str, who: CredentialSet) -> Permission:
        return gacl.evaluate(self.effective_acl(rel), who, self.dn_list_fetch)

    def _check(self, rel: str, who: CredentialSet, needed: Permission):
        if not self.permissions(rel, who) & needed:
            raise Forbidden(f"{needed} required on {rel or '/'}")

    def _path(self, rel: str) -> Path:
        return self.root / rel if rel else self.root

    # -- operations ------------------------------------------------------

    def read(self, rel: str, who: CredentialSet) -> bytes:
        self._check(rel, who, Permission.READ)
        path = self._path(rel)
        if not path.is_file():
            raise NotFound(rel)
        return path.read_bytes()

    def write(self, rel: str, who: CredentialSet, data: bytes):
        path = self._path(rel)
        if path.is_dir():
            raise VfsError(f"{rel} is a directory")
        # Overwrite is governed by the file's own effective ACL (per-file
        # override honored); creation by the containing directory's.
        if path.is_file():
            self._check(rel, who, Permission.WRITE)
        else:
            parent_rel = posixpath.dirname(rel)
            if not self._path(parent_rel).is_dir():
                raise NotFound(f"parent of {rel}")
            self._check(parent_rel, who, Permission.WRITE)
        atomic_write_bytes(path, data)

    def list(self, rel: str, who: CredentialSet) -> list[FileMeta]:
        self._check(rel, who, Permission.LIST)
        path = self._path(rel)
        if not path.exists():
            raise NotFound(rel)
        if not path.is_dir():
            raise NotADirectory(rel)
        out = []
        for entry in sorted(path.iterdir(), key=lambda p: p.name):
            if is_hidden_name(entry.name):
                continue
            out.append(_meta(entry))
        return out

    def remove(self, rel: str, who: CredentialSet):
        if not rel:
            raise VfsError("refusing to remove the export root")
        parent_rel = posixpath.dirname(rel)
        self._check(parent_rel, who, Permission.WRITE)
        path = self._path(rel)
        if path.is_dir():
            leftovers = [p for p in path.iterdir() if not is_hidden_name(p.name)]
            if leftovers:
                raise NotEmpty(rel)
            for p in path.iterdir():
                if p.is_dir():
                    _remove_tree(p)
                else:
                    p.unlink()
            path.rmdir()
        elif path.is_file():
            path.unlink()
        else:
            raise NotFound(rel)
        # Drop the per-file ACL override along with its file.
        override = path.parent / (gacl.CONTROL_FILE_PREFIX + path.name)
        try:
            override.unlink()
        except FileNotFoundError:
            pass

    def mkdir(self, rel: str, who: CredentialSet):
        if not rel:
            raise VfsError("export root already exists")
        parent_rel = posixpath.dirname(rel)
        if not self._path(parent_rel).is_dir():
            raise NotFound(f"parent of {rel}")
        self._check(parent_rel, who, Permission.WRITE)
        self._path(rel).mkdir()

    def stat(self, rel: str, who: CredentialSet) -> FileMeta:
        self._check(rel, who, Permission.READ)
        path = self._path(rel)
        if not path.exists():
            raise NotFound(rel)
        return _meta(path)


def _meta(path: Path) -> FileMeta:
    st = path.stat()
    return FileMeta(
        name=path.name,
        kind="directory" if path.is_dir() else "file",
        size=st.st_size if path.is_file() else 0,
        modified=st.st_mtime,
    )


def _remove_tree(path: Path):
    for p in path.iterdir():
        if p.is_dir():
            _remove_tree(p)
        else:
            p.unlink()
    path.rmdir()


def atomic_write_bytes(path: Path, data: bytes):
    """Temp file + rename in the target directory; concurrent writers
    race cleanly (last complete rename wins, no interleaving)."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


class HttpBackend(Backend):
    """Maps reads onto GET requests against a remote HTTP(S) base URL.

    Read + stat only by default; remote listing has no defined wire format
    so it stays Unsupported. write_enabled turns PUT pass-through on for
    servers that accept it. A configured client credential (PEM with cert
    and key) is presented on HTTPS connections to prove the caller's
    identity to the remote server; without one, requests are anonymous.
    """

    def __init__(self, base_url: str, credential_file: Optional[str] = None,
                 write_enabled: bool = False, verify: bool = True):
        self.base_url = base_url.rstrip("/")
        caps = {"read", "stat"}
        if write_enabled:
            caps.add("write")
        self.capabilities = frozenset(caps)
        context = ssl.create_default_context()
        if not verify:
            context.check_hostname = False
            context.verify_mode = ssl.CERT_NONE
        if credential_file:
            context.load_cert_chain(credential_file)
        self._opener = urllib.request.build_opener(
            urllib.request.HTTPSHandler(context=context))

    def _url(self, rel: str) -> str:
        return self.base_url + "/" + urllib.parse.quote(rel)

    def _request(self, rel: str, method: str, data: Optional[bytes] = None):
        req = urllib.request.Request(self._url(rel), data=data, method=method)
        try:
            return self._opener.open(req, timeout=30)
        except urllib.error.HTTPError as exc:
            if exc.code == 404:
                raise NotFound(rel)
            raise BackendError(exc.code, f"{method} {rel}: HTTP {exc.code}")
        except urllib.error.URLError as exc:
            raise BackendError(0, f"{method} {rel}: {exc.reason}")

    def read(self, rel: str, who: CredentialSet) -> bytes:
        self._require("read")
        with self._request(rel, "GET") as resp:
            return resp.read()

    def write(self, rel: str, who: CredentialSet, data: bytes):
        self._require("write")
        with self._request(rel, "PUT", data=data):
            pass

    def stat(self, rel: str, who: CredentialSet) -> FileMeta:
        self._require("stat")
        with self._request(rel, "HEAD") as resp:
            size = int(resp.headers.get("Content-Length") or 0)
        return FileMeta(name=posixpath.basename(rel), kind="file",
                        size=size, modified=0.0)


# ---------------------------------------------------------------------------
# Mount table

class MountTable:
    """Ordered (prefix, backend) mounts; resolution is longest prefix."""

    def __init__(self, mounts: Iterable[tuple[str, Backend]] = ()):
        self.mounts: list[tuple[str, Backend]] = []
        for prefix, backend in mounts:
            self.add(prefix, backend)

    def add(self, prefix: str, backend: Backend):
        norm = posixpath.normpath(prefix)
        if not norm.startswith("/"):
            raise ValueError(f"mount prefix must be absolute: {prefix!r}")
        if any(existing == norm for existing, _ in self.mounts):
            raise ValueError(f"duplicate mount prefix: {norm}")
        self.mounts.append((norm, backend))

    def resolve(self, vpath: str) -> tuple[Backend, str]:
        """Longest-prefix match after normalization; the remainder is the
        backend-relative path."""
        if not vpath.startswith("/"):
            raise PathEscape(f"virtual path must be absolute: {vpath!r}")
        norm = posixpath.normpath(vpath)
        if norm.startswith("/.."):
            raise PathEscape(vpath)
        best: Optional[tuple[str, Backend]] = None
        for prefix, backend in self.mounts:
            if norm == prefix or norm.startswith(prefix.rstrip("/") + "/"):
                if best is None or len(prefix) > len(best[0]):
                    best = (prefix, backend)
        if best is None:
            raise NoMount(f"no mount serves {norm}")
        prefix, backend = best
        rel = norm[len(prefix):].lstrip("/")
        if ".." in rel.split("/"):
            raise PathEscape(vpath)
        return backend, rel


def resolve(table: MountTable, vpath: str) -> tuple[Backend, str]:
    return table.resolve(vpath)


def vfs_read(table: MountTable, who: CredentialSet, vpath: str) -> bytes:
    backend, rel = table.resolve(vpath)
    return backend.read(rel, who)


def vfs_write(table: MountTable, who: CredentialSet, vpath: str, data: bytes):
    backend, rel = table.resolve(vpath)
    backend.write(rel, who, data)


def vfs_list(table: MountTable, who: CredentialSet, vpath: str) -> list[FileMeta]:
    backend, rel = table.resolve(vpath)
    return backend.list(rel, who)


def vfs_remove(table: MountTable, who: CredentialSet, vpath: str):
    backend, rel = table.resolve(vpath)
    backend.remove(rel, who)


def vfs_mkdir(table: MountTable, who: CredentialSet, vpath: str):
    backend, rel = table.resolve(vpath)
    backend.mkdir(rel, who)


def vfs_stat(table: MountTable, who: CredentialSet, vpath: str) -> FileMeta:
    backend, rel = table.resolve(vpath)
    return backend.stat(rel, who)
