"""Single executable for the toolkit: ACL evaluation, pool account
management, mapfile construction, VFS file operations and the server.

Exit codes: 0 success, 1 operational failure, 2 usage or parse error,
3 for `eval` when the caller holds no permissions. Output is plain and
machine-parseable; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from gridauth import gacl, pool
from gridauth.config import ConfigError, load_config
from gridauth.gacl import CredentialSet, GaclError, permission_names
from gridauth.pool import PoolConfig, PoolError
from gridauth.vfs import VfsError
from gridauth import vfs


def _add_identity_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--dn", help="caller distinguished name (slash form)")
    parser.add_argument("--fqan", action="append", default=[],
                        help="caller VOMS FQAN; repeatable")
    parser.add_argument("--anonymous", action="store_true",
                        help="present no credentials")


def _identity(args) -> CredentialSet:
    if args.anonymous:
        if args.dn or args.fqan:
            raise SystemExit2("--anonymous excludes --dn/--fqan")
        return CredentialSet()
    if args.dn:
        return CredentialSet(dn=args.dn, fqans=tuple(args.fqan), authenticated=True)
    if args.fqan:
        return CredentialSet(fqans=tuple(args.fqan), authenticated=True)
    return CredentialSet()


class SystemExit2(Exception):
    """Usage error; maps to exit code 2."""


def _add_pool_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--state-dir", required=True)
    parser.add_argument("--prefix", default="pool")
    parser.add_argument("--capacity", type=int, default=10)
    parser.add_argument("--pad-width", type=int, default=3)
    parser.add_argument("--grace", type=float, default=3600.0,
                        help="grace period in seconds")
    parser.add_argument("--now", type=float, default=None,
                        help="clock override (epoch seconds) for testing")


def _pool_config(args) -> PoolConfig:
    return PoolConfig(state_dir=Path(args.state_dir), prefix=args.prefix,
                      capacity=args.capacity, pad_width=args.pad_width,
                      grace_period=args.grace)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridauth")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="evaluate an ACL file for an identity")
    p_eval.add_argument("acl_file")
    _add_identity_flags(p_eval)

    p_pool = sub.add_parser("pool", help="pool account management")
    pool_sub = p_pool.add_subparsers(dest="pool_command", required=True)
    p_alloc = pool_sub.add_parser("allocate")
    p_alloc.add_argument("dn")
    _add_pool_flags(p_alloc)
    p_lease = pool_sub.add_parser("lease")
    lease_sub = p_lease.add_subparsers(dest="lease_command", required=True)
    p_begin = lease_sub.add_parser("begin")
    p_begin.add_argument("dn")
    _add_pool_flags(p_begin)
    p_end = lease_sub.add_parser("end")
    p_end.add_argument("lease_id")
    _add_pool_flags(p_end)
    p_reclaim = pool_sub.add_parser("reclaim")
    _add_pool_flags(p_reclaim)
    p_status = pool_sub.add_parser("status")
    _add_pool_flags(p_status)

    p_map = sub.add_parser("mapfile", help="build a grid-mapfile")
    map_sub = p_map.add_subparsers(dest="mapfile_command", required=True)
    p_build = map_sub.add_parser("build")
    p_build.add_argument("--static", nargs=2, action="append", default=[],
                         metavar=("DN", "ACCOUNT"))
    p_build.add_argument("--vo-source", nargs=2, action="append", default=[],
                         metavar=("SOURCE", "POOL"))

    p_fs = sub.add_parser("fs", help="virtual filesystem operations")
    p_fs.add_argument("fs_command", choices=["ls", "cat", "put", "rm", "mkdir"])
    p_fs.add_argument("vpath")
    p_fs.add_argument("--config", required=True)
    _add_identity_flags(p_fs)

    p_serve = sub.add_parser("serve", help="run the file server")
    p_serve.add_argument("--config", required=True)

    return parser


def cmd_eval(args) -> int:
    try:
        acl = gacl.parse_acl(Path(args.acl_file).read_text(encoding="utf-8"))
    except (OSError, GaclError) as exc:
        print(f"gridauth: {exc}", file=sys.stderr)
        return 2
    perms = gacl.evaluate(acl, _identity(args))
    names = permission_names(perms)
    print(" ".join(f"{name}={'yes' if name in names else 'no'}"
                   for name in ("read", "list", "write", "admin")))
    return 0 if perms else 3


def cmd_pool(args) -> int:
    cfg = _pool_config(args)
    if args.pool_command == "allocate":
        print(pool.allocate(cfg, args.dn, args.now))
    elif args.pool_command == "lease":
        if args.lease_command == "begin":
            lease = pool.begin_lease(cfg, args.dn, args.now)
            print(f"{lease.lease_id} {lease.account}")
        else:
            pool.end_lease(cfg, pool.find_lease(cfg, args.lease_id), args.now)
    elif args.pool_command == "reclaim":
        for account in pool.reclaim(cfg, args.now):
            print(account)
    elif args.pool_command == "status":
        st = pool.status(cfg)
        for dn, account in sorted(st.bindings.items()):
            print(f"{account} {len(st.leases[account])} \"{dn}\"")
    return 0


def cmd_mapfile(args) -> int:
    static = [(dn, account) for dn, account in args.static]
    sources = [(src, name) for src, name in args.vo_source]
    text, warnings = pool.build_mapfile(static, sources)
    for warning in warnings:
        print(f"gridauth: skipped source: {warning}", file=sys.stderr)
    sys.stdout.write(text)
    return 0


def cmd_fs(args) -> int:
    config = load_config(args.config)
    table = config.mount_table()
    who = _identity(args)
    cmd = args.fs_command
    if cmd == "ls":
        for meta in vfs.vfs_list(table, who, args.vpath):
            suffix = "/" if meta.kind == "directory" else ""
            print(meta.name + suffix)
    elif cmd == "cat":
        sys.stdout.buffer.write(vfs.vfs_read(table, who, args.vpath))
        sys.stdout.buffer.flush()
    elif cmd == "put":
        vfs.vfs_write(table, who, args.vpath, sys.stdin.buffer.read())
    elif cmd == "rm":
        vfs.vfs_remove(table, who, args.vpath)
    elif cmd == "mkdir":
        vfs.vfs_mkdir(table, who, args.vpath)
    return 0


def cmd_serve(args) -> int:
    from gridauth.server import make_server
    config = load_config(args.config)
    httpd = make_server(config)
    print(f"serving {config.export_root} on {config.listen}", file=sys.stderr)
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "pool":
            return cmd_pool(args)
        if args.command == "mapfile":
            return cmd_mapfile(args)
        if args.command == "fs":
            return cmd_fs(args)
        if args.command == "serve":
            return cmd_serve(args)
    except SystemExit2 as exc:
        print(f"gridauth: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, GaclError) as exc:
        print(f"gridauth: {exc}", file=sys.stderr)
        return 2
    except (PoolError, VfsError, OSError, ValueError) as exc:
        print(f"gridauth: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
