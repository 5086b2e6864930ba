"""Shared generators and independent oracles for the test suite."""

from __future__ import annotations

import random

from gridauth.gacl import (
    Acl,
    Credential,
    CredentialKind,
    CredentialSet,
    Entry,
    Permission,
)

DNS = ["/C=UK/O=Grid/CN=Alice", "/C=UK/O=Grid/CN=Bob", "/C=DE/O=Grid/CN=Carol"]
FQANS = ["/atlas", "/atlas/prod/Role=manager", "/cms/higgs"]
DN_LISTS = {
    "groups/admins.dnlist": [DNS[0]],
    "groups/all.dnlist": list(DNS),
    "groups/broken.dnlist": None,  # fetch failure
}

ALL_PERMS = [Permission(bits) for bits in range(16)]


def fake_fetch(source):
    from gridauth.gacl import DnListUnavailable
    dns = DN_LISTS.get(source)
    if dns is None:
        raise DnListUnavailable(source)
    return dns


def random_credential(rng: random.Random) -> Credential:
    kind = rng.choice(list(CredentialKind))
    if kind is CredentialKind.PERSON:
        return Credential(kind, rng.choice(DNS))
    if kind is CredentialKind.DN_LIST:
        return Credential(kind, rng.choice(list(DN_LISTS)))
    if kind is CredentialKind.VOMS_FQAN:
        return Credential(kind, rng.choice(FQANS))
    return Credential(kind)


def random_entry(rng: random.Random) -> Entry:
    n = rng.randint(1, 4)
    return Entry(
        tuple(random_credential(rng) for _ in range(n)),
        allow=rng.choice(ALL_PERMS),
        deny=rng.choice(ALL_PERMS),
    )


def random_acl(rng: random.Random, max_entries: int = 4) -> Acl:
    return Acl(tuple(random_entry(rng) for _ in range(rng.randint(0, max_entries))))


def random_credential_set(rng: random.Random) -> CredentialSet:
    if rng.random() < 0.2:
        return CredentialSet()
    dn = rng.choice(DNS + [None])
    fqans = tuple(f for f in FQANS if rng.random() < 0.4)
    if dn is None and not fqans and rng.random() < 0.5:
        return CredentialSet()
    return CredentialSet(dn=dn, fqans=fqans, authenticated=True)


# ---------------------------------------------------------------------------
# Independent brute-force evaluation oracle. Deliberately naive and written
# from the matching rules themselves, not from the library's code paths.

def oracle_credential_matches(cred: Credential, who: CredentialSet, fetch) -> bool:
    if cred.kind is CredentialKind.ANY_USER:
        return True
    if cred.kind is CredentialKind.AUTH_USER:
        return who.authenticated
    if cred.kind is CredentialKind.PERSON:
        return who.dn is not None and who.dn.rstrip() == cred.value.rstrip()
    if cred.kind is CredentialKind.VOMS_FQAN:
        # Enumerate every "/" split point of each FQAN: the pattern must
        # equal the FQAN or one of its proper prefixes ending at a "/".
        for fqan in who.fqans:
            prefixes = [fqan]
            for i, ch in enumerate(fqan):
                if ch == "/" and i > 0:
                    prefixes.append(fqan[:i])
            if cred.value in prefixes:
                return True
        return False
    if cred.kind is CredentialKind.DN_LIST:
        if who.dn is None:
            return False
        try:
            return who.dn in fetch(cred.value)
        except Exception:
            return False
    raise AssertionError(cred.kind)


def oracle_evaluate(acl: Acl, who: CredentialSet, fetch=fake_fetch) -> Permission:
    allowed = Permission(0)
    denied = Permission(0)
    for entry in acl.entries:
        if all(oracle_credential_matches(c, who, fetch) for c in entry.credentials):
            allowed |= entry.allow
            denied |= entry.deny
    return allowed & ~denied
