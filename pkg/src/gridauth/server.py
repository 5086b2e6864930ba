"""Access-controlled HTTP(S) file service.

Every request is decided by the GACL control files next to the content:
GET of a file needs Read, directory listings need List, PUT and DELETE
need Write, and the ACL endpoints need Admin. Overwrites and deletes
archive the previous content into a per-directory history so any earlier
state can be retrieved, with the author's DN recorded.

Endpoints:
    GET/PUT/DELETE /<path>
    GET/PUT        /<path>?acl[=file|dir]
    GET            /<path>?history
    GET            /<path>?version=<epoch>.<seq>

Identity comes from the TLS client certificate, or in development mode
from the X-Grid-DN / X-Grid-Fqan headers; otherwise the request is
anonymous and the ACLs decide what that is worth.
"""

from __future__ import annotations

import html
import json
import mimetypes
import posixpath
import ssl
import threading
import time
import urllib.parse
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional

from gridauth import gacl
from gridauth.config import ServerConfig
from gridauth.gacl import (
    Acl,
    AclParseError,
    CredentialSet,
    DENY_ALL,
    GaclError,
    Permission,
    acl_source_for_path,
    load_dn_list,
    serialize_acl,
)
from gridauth.vfs import HISTORY_DIR, atomic_write_bytes, is_hidden_name

DEV_DN_HEADER = "X-Grid-DN"
DEV_FQAN_HEADER = "X-Grid-Fqan"


@dataclass(frozen=True)
class RequestIdentity:
    who: CredentialSet
    source: str  # "tls-client-cert" | "dev-headers" | "anonymous"


ANONYMOUS_IDENTITY = RequestIdentity(CredentialSet(), "anonymous")


@dataclass(frozen=True)
class VersionRecord:
    original_path: str
    archived_path: Path
    author_dn: Optional[str]
    timestamp: int
    sequence: int
    size: int

    @property
    def version_id(self) -> str:
        return f"{self.timestamp}.{self.sequence}"


@dataclass
class Response:
    status: int
    body: bytes = b""
    content_type: str = "text/plain; charset=utf-8"
    headers: dict[str, str] = field(default_factory=dict)

    @classmethod
    def text(cls, status: int, message: str) -> "Response":
        return cls(status, (message.rstrip("\n") + "\n").encode())

    @classmethod
    def json(cls, status: int, payload) -> "Response":
        return cls(status, json.dumps(payload, indent=1).encode() + b"\n",
                   "application/json")


# Short names for the RDN keys python's ssl module reports.
_RDN_SHORT = {
    "countryName": "C",
    "stateOrProvinceName": "ST",
    "localityName": "L",
    "organizationName": "O",
    "organizationalUnitName": "OU",
    "commonName": "CN",
    "emailAddress": "emailAddress",
    "domainComponent": "DC",
}


def cert_subject_to_dn(cert: dict) -> str:
    """One-line slash form of a peer certificate's subject."""
    parts = []
    for rdn in cert.get("subject", ()):
        for key, value in rdn:
            parts.append(f"{_RDN_SHORT.get(key, key)}={value}")
    return "/" + "/".join(parts)


def identify(headers, peer_cert: Optional[dict], config: ServerConfig) -> RequestIdentity:
    """Derive the caller's credentials. Failure degrades to anonymous;
    the ACL layer then decides."""
    if peer_cert and peer_cert.get("subject"):
        dn = cert_subject_to_dn(peer_cert)
        return RequestIdentity(CredentialSet(dn=dn, authenticated=True),
                               "tls-client-cert")
    if config.dev_identity_headers:
        dn = headers.get(DEV_DN_HEADER)
        if dn:
            fqans = tuple(v for k, v in headers.items()
                          if k.lower() == DEV_FQAN_HEADER.lower())
            return RequestIdentity(
                CredentialSet(dn=dn, fqans=fqans, authenticated=True),
                "dev-headers")
    return ANONYMOUS_IDENTITY


class FileServiceApp:
    """Request handling, independent of the HTTP transport."""

    def __init__(self, export_root, default_acl: Acl = DENY_ALL,
                 clock=time.time, acl_read_requires_admin: bool = True):
        self.root = Path(export_root)
        self.default_acl = default_acl
        self.clock = clock
        self.acl_read_requires_admin = acl_read_requires_admin
        self._path_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    # -- plumbing --------------------------------------------------------

    def _lock_for(self, rel: str) -> threading.Lock:
        with self._locks_guard:
            return self._path_locks.setdefault(rel, threading.Lock())

    def dn_list_fetch(self, source: str) -> list[str]:
        # dn-list credentials name group files by server path, so their own
        # ACLs govern who edits the group. Absolute URLs pass through.
        if source.startswith(("http://", "https://")):
            return load_dn_list(source)
        return load_dn_list(str(self.root / source.lstrip("/")))

    def effective_acl(self, rel: str) -> tuple[Acl, Optional[Path]]:
        try:
            return acl_source_for_path(self.root, rel, self.default_acl)
        except AclParseError:
            return DENY_ALL, None

    def permissions(self, rel: str, who: CredentialSet) -> Permission:
        """The single ACL decision point: every response-producing path
        goes through here, once per decision."""
        acl, _ = self.effective_acl(rel)
        return gacl.evaluate(acl, who, self.dn_list_fetch)

    def _rel(self, url_path: str) -> Optional[str]:
        path = urllib.parse.unquote(url_path)
        norm = posixpath.normpath("/" + path)
        if norm.startswith("/.."):
            return None
        return norm.lstrip("/")

    def _target(self, rel: str) -> Path:
        return self.root / rel if rel else self.root

    # -- dispatch --------------------------------------------------------

    def handle_request(self, method: str, url_path: str, query: dict[str, str],
                       identity: RequestIdentity, body: bytes = b"",
                       accept: str = "") -> Response:
        rel = self._rel(url_path)
        if rel is None:
            return Response.text(400, "bad path")
        if any(is_hidden_name(part) for part in rel.split("/") if part):
            # Control files and history directories are not part of the
            # served namespace.
            return Response.text(404, "not found")
        who = identity.who
        if method == "GET":
            if "acl" in query:
                return self.handle_acl_get(rel, who)
            if "history" in query:
                return self.handle_history(rel, who)
            if "version" in query:
                return self.handle_version_get(rel, who, query["version"])
            return self.handle_get(rel, who, accept)
        if method == "PUT":
            if "acl" in query:
                return self.handle_acl_put(rel, who, body, query.get("acl", ""))
            return self.handle_put(rel, identity, body)
        if method == "DELETE":
            return self.handle_delete(rel, identity)
        return Response.text(405, "method not allowed")

    # -- content ---------------------------------------------------------

    def handle_get(self, rel: str, who: CredentialSet, accept: str = "") -> Response:
        perms = self.permissions(rel, who)
        target = self._target(rel)
        if target.is_dir():
            if not perms & Permission.LIST:
                return Response.text(403, "forbidden")
            return self._directory_listing(target, accept)
        if target.is_file():
            if not perms & Permission.READ:
                return Response.text(403, "forbidden")
            ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
            return Response(200, target.read_bytes(), ctype)
        # Absent target: only callers holding Read learn that it is absent.
        if not perms & Permission.READ:
            return Response.text(403, "forbidden")
        return Response.text(404, "not found")

    def _directory_listing(self, target: Path, accept: str) -> Response:
        entries = []
        for p in sorted(target.iterdir(), key=lambda p: p.name):
            if is_hidden_name(p.name):
                continue
            st = p.stat()
            entries.append({
                "name": p.name,
                "kind": "directory" if p.is_dir() else "file",
                "size": st.st_size if p.is_file() else 0,
                "modified": int(st.st_mtime),
            })
        if "application/json" in accept:
            return Response.json(200, entries)
        rows = "\n".join(
            f'<tr><td><a href="{html.escape(e["name"])}{"/" if e["kind"] == "directory" else ""}">'
            f'{html.escape(e["name"])}</a></td><td>{e["kind"]}</td><td>{e["size"]}</td></tr>'
            for e in entries)
        page = ("<!DOCTYPE html><html><body><table>\n"
                "<tr><th>name</th><th>kind</th><th>size</th></tr>\n"
                f"{rows}\n</table></body></html>\n")
        return Response(200, page.encode(), "text/html; charset=utf-8")

    def handle_put(self, rel: str, identity: RequestIdentity, body: bytes) -> Response:
        target = self._target(rel)
        if target.is_dir() or not rel:
            return Response.text(409, "target is a directory")
        if target.is_file():
            required_rel = rel
            exists = True
        else:
            required_rel = posixpath.dirname(rel)
            exists = False
        if not self.permissions(required_rel, identity.who) & Permission.WRITE:
            return Response.text(403, "forbidden")
        if not exists and not target.parent.is_dir():
            return Response.text(404, "parent directory missing")
        with self._lock_for(rel):
            if target.is_file():
                try:
                    self._archive(rel, identity.who.dn)
                except OSError as exc:
                    return Response.text(507, f"archive failed: {exc}")
                atomic_write_bytes(target, body)
                return Response.text(200, "overwritten")
            atomic_write_bytes(target, body)
            return Response.text(201, "created")

    def handle_delete(self, rel: str, identity: RequestIdentity) -> Response:
        perms = self.permissions(rel, identity.who)
        if not perms & Permission.WRITE:
            return Response.text(403, "forbidden")
        target = self._target(rel)
        if target.is_dir():
            if not rel:
                return Response.text(409, "refusing to remove the export root")
            leftovers = [p for p in target.iterdir() if not is_hidden_name(p.name)]
            if leftovers:
                return Response.text(409, "directory not empty")
            for p in target.iterdir():
                if p.is_dir():
                    _rmtree(p)
                else:
                    p.unlink()
            target.rmdir()
            return Response(204)
        if not target.is_file():
            return Response.text(404, "not found")
        with self._lock_for(rel):
            try:
                self._archive(rel, identity.who.dn)
            except OSError as exc:
                return Response.text(507, f"archive failed: {exc}")
            target.unlink()
        override = target.parent / (gacl.CONTROL_FILE_PREFIX + target.name)
        try:
            override.unlink()
        except FileNotFoundError:
            pass
        return Response(204)

    # -- ACL management --------------------------------------------------

    def handle_acl_get(self, rel: str, who: CredentialSet) -> Response:
        needed = Permission.ADMIN if self.acl_read_requires_admin else Permission.READ
        if not self.permissions(rel, who) & needed:
            return Response.text(403, "forbidden")
        acl, source = self.effective_acl(rel)
        headers = {"X-Gacl-Source":
                   str(source.relative_to(self.root)) if source else "default"}
        return Response(200, serialize_acl(acl).encode(), "application/xml",
                        headers)

    def handle_acl_put(self, rel: str, who: CredentialSet, body: bytes,
                       scope: str) -> Response:
        if not self.permissions(rel, who) & Permission.ADMIN:
            return Response.text(403, "forbidden")
        try:
            new_acl = gacl.parse_acl(body.decode("utf-8"))
        except (GaclError, UnicodeDecodeError) as exc:
            return Response.text(400, f"invalid ACL: {exc}")
        # Lock-out guard: refuse any ACL under which the caller would lose
        # Admin on this path.
        if not gacl.evaluate(new_acl, who, self.dn_list_fetch) & Permission.ADMIN:
            return Response.text(409, "refused: this ACL would lock you out")
        target = self._target(rel)
        if scope == "file":
            if not rel:
                return Response.text(400, "no file scope at the root")
            control = target.parent / (gacl.CONTROL_FILE_PREFIX + target.name)
        else:
            control = (target if target.is_dir() else target.parent) / gacl.CONTROL_FILE
        control.parent.mkdir(parents=True, exist_ok=True)
        atomic_write_bytes(control, serialize_acl(new_acl).encode())
        return Response.text(200, "acl updated")

    # -- version history -------------------------------------------------

    def _history_dir(self, rel: str) -> Path:
        return self._target(rel).parent / HISTORY_DIR

    def history_records(self, rel: str) -> list[VersionRecord]:
        name = posixpath.basename(rel)
        hist = self._history_dir(rel)
        records = []
        if hist.is_dir():
            for p in hist.iterdir():
                if p.name.endswith(".meta") or not p.name.startswith(name + "."):
                    continue
                stamp = p.name[len(name) + 1:]
                ts_text, _, seq_text = stamp.partition(".")
                try:
                    ts, seq = int(ts_text), int(seq_text)
                except ValueError:
                    continue
                author: Optional[str] = None
                meta = hist / (p.name + ".meta")
                if meta.is_file():
                    lines = meta.read_text().splitlines()
                    author = lines[0] or None if lines else None
                records.append(VersionRecord(rel, p, author, ts, seq,
                                             p.stat().st_size))
        records.sort(key=lambda r: (r.timestamp, r.sequence))
        return records

    def _archive(self, rel: str, author_dn: Optional[str]) -> VersionRecord:
        target = self._target(rel)
        content = target.read_bytes()
        hist = self._history_dir(rel)
        hist.mkdir(exist_ok=True)
        existing = self.history_records(rel)
        ts = int(self.clock())
        seq = 0
        if existing:
            last = existing[-1]
            if ts <= last.timestamp:
                ts, seq = last.timestamp, last.sequence + 1
        name = posixpath.basename(rel)
        archived = hist / f"{name}.{ts}.{seq}"
        atomic_write_bytes(archived, content)
        atomic_write_bytes(hist / (archived.name + ".meta"),
                           f"{author_dn or ''}\n{ts}\n".encode())
        return VersionRecord(rel, archived, author_dn, ts, seq, len(content))

    def handle_history(self, rel: str, who: CredentialSet) -> Response:
        if not self.permissions(rel, who) & Permission.READ:
            return Response.text(403, "forbidden")
        records = self.history_records(rel)
        if not records and not self._target(rel).is_file():
            return Response.text(404, "no such document and no history")
        payload = [{
            "author": r.author_dn,
            "timestamp": r.timestamp,
            "sequence": r.sequence,
            "size": r.size,
            "version": r.version_id,
            "path": f"/{rel}?version={r.version_id}",
        } for r in records]
        return Response.json(200, payload)

    def handle_version_get(self, rel: str, who: CredentialSet,
                           version: str) -> Response:
        if not self.permissions(rel, who) & Permission.READ:
            return Response.text(403, "forbidden")
        ts_text, _, seq_text = version.partition(".")
        if not (ts_text.isdigit() and seq_text.isdigit()):
            return Response.text(400, "version must be <epoch>.<seq>")
        name = posixpath.basename(rel)
        archived = self._history_dir(rel) / f"{name}.{int(ts_text)}.{int(seq_text)}"
        if not archived.is_file():
            return Response.text(404, "no such version")
        ctype = mimetypes.guess_type(name)[0] or "application/octet-stream"
        return Response(200, archived.read_bytes(), ctype)


def _rmtree(path: Path):
    for p in path.iterdir():
        if p.is_dir():
            _rmtree(p)
        else:
            p.unlink()
    path.rmdir()


# ---------------------------------------------------------------------------
# HTTP transport

class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    app: FileServiceApp
    config: ServerConfig
    quiet = True

    def log_message(self, fmt, *args):
        if not self.quiet:
            super().log_message(fmt, *args)

    def _peer_cert(self) -> Optional[dict]:
        if isinstance(self.connection, ssl.SSLSocket):
            return self.connection.getpeercert()
        return None

    def _dispatch(self, method: str):
        parsed = urllib.parse.urlsplit(self.path)
        query = {k: v[-1] for k, v in
                 urllib.parse.parse_qs(parsed.query, keep_blank_values=True).items()}
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else b""
        identity = identify(self.headers, self._peer_cert(), self.config)
        try:
            resp = self.app.handle_request(method, parsed.path, query, identity,
                                           body, self.headers.get("Accept", ""))
        except Exception as exc:  # don't kill the connection thread
            resp = Response.text(500, f"internal error: {exc}")
        self.send_response(resp.status)
        self.send_header("Content-Type", resp.content_type)
        self.send_header("Content-Length", str(len(resp.body)))
        for key, value in resp.headers.items():
            self.send_header(key, value)
        self.end_headers()
        if resp.body:
            self.wfile.write(resp.body)

    def do_GET(self):
        self._dispatch("GET")

    def do_PUT(self):
        self._dispatch("PUT")

    def do_DELETE(self):
        self._dispatch("DELETE")


def make_server(config: ServerConfig,
                app: Optional[FileServiceApp] = None) -> ThreadingHTTPServer:
    """Build a ready-to-serve HTTP(S) server from a parsed config."""
    if config.export_root is None:
        raise ValueError("export_root is not configured")
    if app is None:
        app = FileServiceApp(config.export_root, config.default_acl())

    handler = type("BoundHandler", (_Handler,), {"app": app, "config": config})
    httpd = ThreadingHTTPServer((config.host, config.port), handler)
    if config.tls_cert:
        context = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
        context.load_cert_chain(config.tls_cert, config.tls_key)
        if config.tls_client_ca:
            context.load_verify_locations(config.tls_client_ca)
            context.verify_mode = ssl.CERT_OPTIONAL
        httpd.socket = context.wrap_socket(httpd.socket, server_side=True)
    return httpd
