"""gridauth: GACL access control, pool accounts, virtual filesystem and
an access-controlled file server with document history."""

from gridauth.gacl import (
    Acl,
    Credential,
    CredentialKind,
    CredentialSet,
    Entry,
    Permission,
    evaluate,
    parse_acl,
    serialize_acl,
)

__all__ = [
    "Acl",
    "Credential",
    "CredentialKind",
    "CredentialSet",
    "Entry",
    "Permission",
    "evaluate",
    "parse_acl",
    "serialize_acl",
]

__version__ = "0.1.0"
