"""GACL access control lists: parse, serialize, resolve and evaluate.

The XML vocabulary is fixed:

    <gacl version="0.9.0">
      <entry>
        <person><dn>/C=UK/CN=A</dn></person>
        <dn-list><url>groups/admins.dnlist</url></dn-list>
        <voms><fqan>/atlas/prod</fqan></voms>
        <auth-user/>
        <any-user/>
        <allow><read/><list/></allow>
        <deny><admin/></deny>
      </entry>
    </gacl>

An entry matches a caller only if ALL its credentials match (conjunction).
The effective permission set is the union of allows over matching entries
minus the union of denies over matching entries (deny overrides).

Control files are `.gacl` (per-directory) and `.gacl-<filename>` (per-file);
the nearest control file wins outright, there is no merging across levels.
"""

from __future__ import annotations

import enum
import posixpath
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional
from xml.etree import ElementTree as ET
from xml.parsers import expat
from xml.sax.saxutils import escape

GACL_VERSION = "0.9.0"
CONTROL_FILE = ".gacl"
CONTROL_FILE_PREFIX = ".gacl-"


class GaclError(Exception):
    """Base class for GACL failures."""


class MalformedXml(GaclError):
    """Input is not well-formed XML."""


class SchemaViolation(GaclError):
    """Well-formed XML that is not a valid GACL document."""

    def __init__(self, message: str, element: str = "", line: int = 0):
        self.element = element
        self.line = line
        if element:
            message = f"{message} (element <{element}>, line {line})"
        super().__init__(message)


class DnListUnavailable(GaclError):
    """A dn-list source could not be fetched; callers treat as non-match."""


class AclParseError(GaclError):
    """A control file exists but could not be parsed; treat subtree as deny-all."""

    def __init__(self, path, cause: GaclError):
        self.path = path
        self.cause = cause
        super().__init__(f"{path}: {cause}")


class Permission(enum.Flag):
    """The four GACL permissions. A PermissionSet is any combination."""

    READ = enum.auto()
    LIST = enum.auto()
    WRITE = enum.auto()
    ADMIN = enum.auto()


# Canonical serialization order.
_PERM_ORDER = [
    (Permission.READ, "read"),
    (Permission.LIST, "list"),
    (Permission.WRITE, "write"),
    (Permission.ADMIN, "admin"),
]
_PERM_BY_NAME = {name: perm for perm, name in _PERM_ORDER}

NO_PERMISSIONS = Permission(0)
ALL_PERMISSIONS = Permission.READ | Permission.LIST | Permission.WRITE | Permission.ADMIN


def permission_names(perms: Permission) -> list[str]:
    return [name for perm, name in _PERM_ORDER if perm & perms]


class CredentialKind(enum.Enum):
    PERSON = "person"
    DN_LIST = "dn-list"
    VOMS_FQAN = "voms"
    AUTH_USER = "auth-user"
    ANY_USER = "any-user"


@dataclass(frozen=True)
class Credential:
    """One credential requirement inside an entry.

    value holds the DN for PERSON, the path-or-URL of the list for DN_LIST,
    the FQAN for VOMS_FQAN, and must be empty for AUTH_USER / ANY_USER.
    """

    kind: CredentialKind
    value: str = ""

    def __post_init__(self):
        if self.kind is CredentialKind.PERSON:
            if not self.value.startswith("/"):
                raise ValueError(f"person DN must be in one-line slash form: {self.value!r}")
        elif self.kind is CredentialKind.VOMS_FQAN:
            if not self.value.startswith("/") or self.value == "/":
                raise ValueError(f"FQAN must start with '/' and name a VO: {self.value!r}")
        elif self.kind is CredentialKind.DN_LIST:
            if not self.value:
                raise ValueError("dn-list credential needs a path or URL")
        elif self.value:
            raise ValueError(f"{self.kind.value} credential carries no value")


@dataclass(frozen=True)
class Entry:
    credentials: tuple[Credential, ...]
    allow: Permission = NO_PERMISSIONS
    deny: Permission = NO_PERMISSIONS

    def __post_init__(self):
        object.__setattr__(self, "credentials", tuple(self.credentials))
        if not self.credentials:
            raise ValueError("entry must carry at least one credential")


@dataclass(frozen=True)
class Acl:
    entries: tuple[Entry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))


DENY_ALL = Acl()


@dataclass(frozen=True)
class CredentialSet:
    """The identity a caller presents."""

    dn: Optional[str] = None
    fqans: tuple[str, ...] = ()
    authenticated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "fqans", tuple(self.fqans))
        if self.dn is not None and not self.authenticated:
            raise ValueError("a DN implies an authenticated caller")
        if not self.authenticated and self.fqans:
            raise ValueError("unauthenticated callers carry no FQANs")


ANONYMOUS = CredentialSet()


# ---------------------------------------------------------------------------
# Parsing

_LINE_KEY = "{urn:gridauth-internal}line"


def _parse_xml_with_lines(text: str):
    """Build an element tree recording each element's source line (stored
    in a private attribute key) for diagnostics."""
    parser = expat.ParserCreate()
    root = None
    stack: list = []

    def on_start(tag, attrs):
        nonlocal root
        element = ET.Element(tag, attrs)
        element.set(_LINE_KEY, str(parser.CurrentLineNumber))
        if stack:
            stack[-1].append(element)
        else:
            root = element
        stack.append(element)

    def on_end(tag):
        stack.pop()

    def on_chars(data):
        if not stack:
            return
        element = stack[-1]
        if len(element):
            element[-1].tail = (element[-1].tail or "") + data
        else:
            element.text = (element.text or "") + data

    parser.StartElementHandler = on_start
    parser.EndElementHandler = on_end
    parser.CharacterDataHandler = on_chars
    try:
        parser.Parse(text, True)
    except expat.ExpatError as exc:
        raise MalformedXml(str(exc)) from exc
    if root is None:
        raise MalformedXml("empty document")
    return root


def _line(element) -> int:
    return int(element.get(_LINE_KEY, 0))


def _text(element) -> str:
    return (element.text or "").strip()


def _reject_children(element, allowed: Iterable[str]):
    allowed = set(allowed)
    for child in element:
        if child.tag not in allowed:
            raise SchemaViolation(
                f"unknown element in <{element.tag}>", child.tag, _line(child)
            )


def _parse_permissions(element) -> Permission:
    perms = NO_PERMISSIONS
    for child in element:
        perm = _PERM_BY_NAME.get(child.tag)
        if perm is None:
            raise SchemaViolation("unknown permission name", child.tag, _line(child))
        perms |= perm
    return perms


def _parse_credential(element) -> Credential:
    tag = element.tag
    if tag == "person":
        _reject_children(element, ["dn"])
        dn = element.find("dn")
        if dn is None or not _text(dn):
            raise SchemaViolation("person requires a <dn>", tag, _line(element))
        return Credential(CredentialKind.PERSON, _text(dn))
    if tag == "dn-list":
        _reject_children(element, ["url"])
        url = element.find("url")
        if url is None or not _text(url):
            raise SchemaViolation("dn-list requires a <url>", tag, _line(element))
        return Credential(CredentialKind.DN_LIST, _text(url))
    if tag == "voms":
        _reject_children(element, ["fqan"])
        fqan = element.find("fqan")
        if fqan is None or not _text(fqan):
            raise SchemaViolation("voms requires an <fqan>", tag, _line(element))
        return Credential(CredentialKind.VOMS_FQAN, _text(fqan))
    if tag == "auth-user":
        return Credential(CredentialKind.AUTH_USER)
    if tag == "any-user":
        return Credential(CredentialKind.ANY_USER)
    raise SchemaViolation("unknown element in <entry>", tag, _line(element))


_CREDENTIAL_TAGS = {"person", "dn-list", "voms", "auth-user", "any-user"}


def _parse_entry(element) -> Entry:
    credentials: list[Credential] = []
    allow = NO_PERMISSIONS
    deny = NO_PERMISSIONS
    for child in element:
        if child.tag in _CREDENTIAL_TAGS:
            try:
                credentials.append(_parse_credential(child))
            except ValueError as exc:
                raise SchemaViolation(str(exc), child.tag, _line(child)) from exc
        elif child.tag == "allow":
            allow |= _parse_permissions(child)
        elif child.tag == "deny":
            deny |= _parse_permissions(child)
        else:
            raise SchemaViolation("unknown element in <entry>", child.tag, _line(child))
    if not credentials:
        raise SchemaViolation("entry has no credential", "entry", _line(element))
    return Entry(tuple(credentials), allow, deny)


def parse_acl(xml_text: str) -> Acl:
    """Parse a GACL XML document. Strict: unknown elements are rejected."""
    root = _parse_xml_with_lines(xml_text)
    if root.tag != "gacl":
        raise SchemaViolation("root element must be <gacl>", root.tag, _line(root))
    _reject_children(root, ["entry"])
    return Acl(tuple(_parse_entry(child) for child in root))


# ---------------------------------------------------------------------------
# Serialization

def _serialize_permissions(tag: str, perms: Permission) -> str:
    inner = "".join(f"<{name}/>" for perm, name in _PERM_ORDER if perm & perms)
    return f"<{tag}>{inner}</{tag}>"


def _serialize_credential(cred: Credential) -> str:
    if cred.kind is CredentialKind.PERSON:
        return f"<person><dn>{escape(cred.value)}</dn></person>"
    if cred.kind is CredentialKind.DN_LIST:
        return f"<dn-list><url>{escape(cred.value)}</url></dn-list>"
    if cred.kind is CredentialKind.VOMS_FQAN:
        return f"<voms><fqan>{escape(cred.value)}</fqan></voms>"
    if cred.kind is CredentialKind.AUTH_USER:
        return "<auth-user/>"
    return "<any-user/>"


def serialize_acl(acl: Acl) -> str:
    """Emit the canonical form: fixed element order, two-space indentation.

    parse_acl(serialize_acl(a)) == a for every valid Acl.
    """
    lines = [f'<gacl version="{GACL_VERSION}">']
    for entry in acl.entries:
        lines.append("  <entry>")
        for cred in entry.credentials:
            lines.append("    " + _serialize_credential(cred))
        if entry.allow:
            lines.append("    " + _serialize_permissions("allow", entry.allow))
        if entry.deny:
            lines.append("    " + _serialize_permissions("deny", entry.deny))
        lines.append("  </entry>")
    lines.append("</gacl>")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# dn-list loading

def load_dn_list(source: str) -> list[str]:
    """Load a dn-list from a file path or http(s) URL.

    One DN per line; `#` comment lines and blank lines ignored; trailing
    whitespace trimmed.
    """
    try:
        if source.startswith(("http://", "https://")):
            with urllib.request.urlopen(source) as resp:
                raw = resp.read().decode("utf-8")
        else:
            raw = Path(source).read_text(encoding="utf-8")
    except Exception as exc:
        raise DnListUnavailable(f"{source}: {exc}") from exc
    dns = []
    for line in raw.splitlines():
        line = line.rstrip()
        if not line or line.startswith("#"):
            continue
        dns.append(line)
    return dns


DnListFetch = Callable[[str], list[str]]


# ---------------------------------------------------------------------------
# Evaluation

def _fqan_matches(pattern: str, fqan: str) -> bool:
    # Prefix match at a "/" boundary: /vo/group also grants to subgroups
    # and roles beneath it.
    return fqan == pattern or fqan.startswith(pattern + "/")


def credential_matches(cred: Credential, who: CredentialSet,
                       dn_list_fetch: DnListFetch = load_dn_list) -> bool:
    """Does one credential requirement hold for the caller?

    Raises DnListUnavailable when a dn-list source cannot be fetched;
    evaluate() degrades that to a non-match.
    """
    if cred.kind is CredentialKind.ANY_USER:
        return True
    if cred.kind is CredentialKind.AUTH_USER:
        return who.authenticated
    if cred.kind is CredentialKind.PERSON:
        if who.dn is None:
            return False
        return who.dn.rstrip() == cred.value.rstrip()
    if cred.kind is CredentialKind.VOMS_FQAN:
        return any(_fqan_matches(cred.value, fqan) for fqan in who.fqans)
    # DN_LIST
    if who.dn is None:
        return False
    dns = dn_list_fetch(cred.value)
    return who.dn.rstrip() in [dn.rstrip() for dn in dns]


def _entry_matches(entry: Entry, who: CredentialSet, dn_list_fetch: DnListFetch) -> bool:
    for cred in entry.credentials:
        try:
            if not credential_matches(cred, who, dn_list_fetch):
                return False
        except DnListUnavailable:
            return False
    return True


def evaluate(acl: Acl, who: CredentialSet,
             dn_list_fetch: DnListFetch = load_dn_list) -> Permission:
    """Effective permissions: union of allows minus union of denies over
    the entries whose credentials all match. Independent of entry order."""
    allowed = NO_PERMISSIONS
    denied = NO_PERMISSIONS
    for entry in acl.entries:
        if _entry_matches(entry, who, dn_list_fetch):
            allowed |= entry.allow
            denied |= entry.deny
    return allowed & ~denied


# ---------------------------------------------------------------------------
# Control file resolution

def _normalized_rel(rel_path: str) -> str:
    rel = posixpath.normpath(rel_path.replace("\\", "/")).lstrip("/")
    if rel == ".":
        rel = ""
    if rel == ".." or rel.startswith("../"):
        raise ValueError(f"path escapes the export root: {rel_path!r}")
    return rel


def acl_source_for_path(export_root, rel_path: str,
                        default_acl: Acl = DENY_ALL) -> tuple[Acl, Optional[Path]]:
    """Resolve the effective ACL and the control file that supplied it.

    Resolution order: per-file `.gacl-<name>` beside the target, then `.gacl`
    in the target's directory (the directory itself when the target is a
    directory), then `.gacl` in each ancestor up to export_root, then the
    default. First found wins; no merging.

    Raises AclParseError when a control file exists but does not parse;
    request-level callers must treat that as deny-all for the subtree.
    """
    root = Path(export_root)
    rel = _normalized_rel(rel_path)

    def read_control(path: Path) -> Acl:
        try:
            return parse_acl(path.read_text(encoding="utf-8"))
        except GaclError as exc:
            raise AclParseError(path, exc)

    candidates: list[Path] = []
    if rel:
        target = root / rel
        parent = target.parent
        candidates.append(parent / (CONTROL_FILE_PREFIX + target.name))
        start = target if target.is_dir() else parent
    else:
        start = root
    # Walk from the starting directory up to the export root.
    current = start
    while True:
        candidates.append(current / CONTROL_FILE)
        if current == root:
            break
        current = current.parent

    for candidate in candidates:
        if candidate.is_file():
            return read_control(candidate), candidate
    return default_acl, None


def acl_for_path(export_root, rel_path: str, default_acl: Acl = DENY_ALL) -> Acl:
    """The effective ACL for a path under export_root (nearest control file wins)."""
    acl, _ = acl_source_for_path(export_root, rel_path, default_acl)
    return acl


# Convenience constructors used throughout the toolkit.

def any_user_entry(allow: Permission, deny: Permission = NO_PERMISSIONS) -> Entry:
    return Entry((Credential(CredentialKind.ANY_USER),), allow, deny)


def person_entry(dn: str, allow: Permission, deny: Permission = NO_PERMISSIONS) -> Entry:
    return Entry((Credential(CredentialKind.PERSON, dn),), allow, deny)
