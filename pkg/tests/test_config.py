import pytest

from gridauth.config import ConfigError, parse_config
from gridauth.gacl import Acl, CredentialSet, Permission, evaluate
from gridauth.vfs import HttpBackend, LocalBackend


SAMPLE = """
# comment
listen=0.0.0.0:8443
export_root=/srv/site
default_policy=anyuser-read
dev_identity_headers=on
tls_cert=/etc/host.pem
tls_key=/etc/key.pem
tls_client_ca=/etc/ca.pem
pool_state_dir=/var/lib/pool
pool_prefix=gp
pool_capacity=50
pool_grace_seconds=7200
mount /grid/local local /data
mount /grid/web http https://example.org/files credential /etc/user.pem
"""


def test_full_config_parses():
    cfg = parse_config(SAMPLE)
    assert cfg.host == "0.0.0.0"
    assert cfg.port == 8443
    assert cfg.dev_identity_headers is True
    assert cfg.pool_config().capacity == 50
    assert cfg.pool_config().prefix == "gp"
    assert [(m.prefix, m.kind) for m in cfg.mounts] == [
        ("/grid/local", "local"), ("/grid/web", "http")]
    assert cfg.mounts[1].credential == "/etc/user.pem"


def test_default_policy_deny_is_empty_acl():
    cfg = parse_config("export_root=/x\n")
    assert cfg.default_acl() == Acl()


def test_default_policy_anyuser_read():
    cfg = parse_config("export_root=/x\ndefault_policy=anyuser-read\n")
    acl = cfg.default_acl()
    assert evaluate(acl, CredentialSet()) == Permission.READ


def test_mount_table_backends(tmp_path):
    cfg = parse_config(f"mount /grid/local local {tmp_path}\n"
                       "mount /grid/web http http://example.org\n")
    table = cfg.mount_table()
    assert isinstance(table.resolve("/grid/local/x")[0], LocalBackend)
    assert isinstance(table.resolve("/grid/web/x")[0], HttpBackend)


@pytest.mark.parametrize("line", [
    "bogus_key=1",
    "pool_capacity=ten",
    "dev_identity_headers=maybe",
    "mount /grid local",
    "default_policy=allow-all",
    "just a line",
])
def test_bad_lines_rejected(line):
    with pytest.raises(ConfigError):
        parse_config(line + "\n")
