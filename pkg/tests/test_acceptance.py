"""Acceptance suite: one test per criterion, each printing a PASS line
(run with `pytest tests/test_acceptance.py -v -s` to see them)."""

import io
import json
import random
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from gridauth import cli, gacl, pool, vfs
from gridauth.gacl import (
    Acl,
    CredentialKind,
    CredentialSet,
    Permission,
    parse_acl,
    serialize_acl,
)
from gridauth.pool import PoolConfig, allocate, begin_lease, end_lease, reclaim, scan_bindings
from gridauth.server import FileServiceApp, RequestIdentity
from gridauth.vfs import HttpBackend, LocalBackend, MountTable

from conftest import (
    DNS,
    fake_fetch,
    oracle_evaluate,
    random_acl,
    random_credential_set,
)
from test_pool import oracle_run


def report(name):
    print(f"\nACCEPTANCE PASS: {name}")


class TestGaclRoundTrip:
    def test_round_trip_1000_acls_under_5s(self):
        rng = random.Random(1)
        start = time.monotonic()
        kinds_seen = set()
        lengths_seen = set()
        allows_seen = set()
        denies_seen = set()
        for _ in range(1000):
            acl = random_acl(rng)
            for entry in acl.entries:
                lengths_seen.add(len(entry.credentials))
                allows_seen.add(entry.allow.value)
                denies_seen.add(entry.deny.value)
                for cred in entry.credentials:
                    kinds_seen.add(cred.kind)
            assert parse_acl(serialize_acl(acl)) == acl
        elapsed = time.monotonic() - start
        assert kinds_seen == set(CredentialKind)
        assert lengths_seen == {1, 2, 3, 4}
        assert allows_seen == set(range(16))
        assert denies_seen == set(range(16))
        assert elapsed < 5.0, f"round trip corpus took {elapsed:.2f}s"
        report(f"GACL round trip: 1000 ACLs, all kinds/lengths/subsets, {elapsed:.2f}s")


class TestEvaluationOracle:
    def test_brute_force_agreement(self):
        rng = random.Random(2)
        fqans = ["/atlas", "/cms/higgs"]
        whos = [CredentialSet()]
        for dn in DNS:  # 3 DNs x 4 fqan subsets
            for bits in range(4):
                subset = tuple(f for i, f in enumerate(fqans) if bits >> i & 1)
                whos.append(CredentialSet(dn=dn, fqans=subset, authenticated=True))
        combos = 0
        while combos < 10_000:
            acl = random_acl(rng, max_entries=3)
            for who in whos:
                assert gacl.evaluate(acl, who, fake_fetch) == oracle_evaluate(acl, who)
                combos += 1
        report(f"evaluation oracle: {combos} combinations, zero disagreements")


ANY = gacl.any_user_entry
GRANTS = {
    "read": Permission.READ,
    "list": Permission.LIST,
    "write": Permission.WRITE,
    "admin": Permission.ADMIN,
    "none": Permission(0),
}
# request kind -> permission that allows it
EXPECTED = {
    "GET-file": "read",
    "GET-dir": "list",
    "PUT": "write",
    "DELETE": "write",
    "ACL-GET": "admin",
    "ACL-PUT": "admin",
    "HISTORY": "read",
}


class TestMethodPermissionMatrix:
    def make_app(self, tmp_path, grant):
        root = tmp_path / f"site-{grant}"
        (root / "docs").mkdir(parents=True)
        (root / "file.txt").write_bytes(b"content")
        acl = Acl((ANY(GRANTS[grant]),)) if grant != "none" else Acl()
        (root / ".gacl").write_text(serialize_acl(acl))
        return FileServiceApp(root)

    def run_request(self, app, kind):
        anon = RequestIdentity(CredentialSet(), "anonymous")
        admin_body = serialize_acl(Acl((ANY(Permission.ADMIN),))).encode()
        if kind == "GET-file":
            return app.handle_request("GET", "/file.txt", {}, anon)
        if kind == "GET-dir":
            return app.handle_request("GET", "/docs", {}, anon)
        if kind == "PUT":
            return app.handle_request("PUT", "/file.txt", {}, anon, b"new")
        if kind == "DELETE":
            return app.handle_request("DELETE", "/file.txt", {}, anon)
        if kind == "ACL-GET":
            return app.handle_request("GET", "/file.txt", {"acl": ""}, anon)
        if kind == "ACL-PUT":
            return app.handle_request("PUT", "/file.txt", {"acl": "dir"}, anon,
                                      admin_body)
        if kind == "HISTORY":
            return app.handle_request("GET", "/file.txt", {"history": ""}, anon)
        raise AssertionError(kind)

    def test_all_35_cells(self, tmp_path):
        cells = 0
        for grant in GRANTS:
            app = self.make_app(tmp_path, grant)
            for kind, allowing in EXPECTED.items():
                resp = self.run_request(app, kind)
                should_allow = grant == allowing
                outcome = resp.status < 400
                assert outcome == should_allow, (
                    f"{kind} with grant={grant}: got {resp.status}")
                if not should_allow:
                    assert resp.status == 403
                cells += 1
        assert cells == 35
        report("method x permission matrix: all 35 cells as documented")

    def test_anti_leak_403_before_404(self, tmp_path):
        none_app = self.make_app(tmp_path, "none")
        assert none_app.handle_request(
            "GET", "/absent.txt", {}, RequestIdentity(CredentialSet(), "anonymous")
        ).status == 403
        read_app = self.make_app(tmp_path, "read")
        assert read_app.handle_request(
            "GET", "/absent.txt", {}, RequestIdentity(CredentialSet(), "anonymous")
        ).status == 404
        report("anti-leak rule: 403 without Read, 404 with Read, for absent targets")


class TestPoolRaceHarness:
    def test_100_concurrent_runs_injective_and_stable(self, tmp_path):
        dns = [f"/C=UK/CN=user{i}" for i in range(8)]
        for run_index in range(100):
            cfg = PoolConfig(state_dir=tmp_path / f"run{run_index}", capacity=8,
                             grace_period=60)
            observed: dict[str, set] = {dn: set() for dn in dns}
            guard = threading.Lock()

            def worker(dn):
                account = allocate(cfg, dn, now=0)
                with guard:
                    observed[dn].add(account)

            threads = [threading.Thread(target=worker, args=(dns[i % 8],))
                       for i in range(64)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            bindings = scan_bindings(cfg)
            assert len(bindings) == 8
            assert len(set(bindings.values())) == 8  # injective
            for dn in dns:
                assert observed[dn] == {bindings[dn]}  # stable
        report("pool race harness: 64 allocators / 8 DNs / capacity 8, 100 runs")

    def test_10000_event_schedule_matches_oracle(self, tmp_path):
        cfg = PoolConfig(state_dir=tmp_path / "sched", capacity=6, grace_period=40)
        rng = random.Random(3)
        dns = [f"/C=UK/CN=user{i}" for i in range(9)]
        active = []
        now = 0.0
        events = []
        leased_freed = 0
        for _ in range(10_000):
            now += rng.randint(0, 10)
            op = rng.random()
            if op < 0.45:
                dn = rng.choice(dns)
                try:
                    lease = begin_lease(cfg, dn, now=now)
                    active.append(lease)
                    events.append(("begin", dn, now, lease.lease_id))
                except pool.PoolExhausted:
                    events.append(("begin", dn, now, "<exhausted>"))
            elif op < 0.8 and active:
                lease = active.pop(rng.randrange(len(active)))
                end_lease(cfg, lease, now=now)
                events.append(("end", lease.lease_id, now))
            else:
                freed = reclaim(cfg, now=now)
                events.append(("reclaim", now))
                leased = {l.account for l in active}
                leased_freed += len(leased & set(freed))
        assert leased_freed == 0  # reclaim never frees a leased account
        expected, _ = oracle_run(cfg, events)
        assert scan_bindings(cfg) == expected
        report("pool schedule: 10,000 events match the discrete-event oracle; "
               "no leased account freed")


class TestGraceBoundary:
    @pytest.mark.parametrize("grace", [1, 60, 86400])
    def test_boundary(self, tmp_path, grace):
        cfg = PoolConfig(state_dir=tmp_path / f"g{grace}", capacity=2,
                         grace_period=grace)
        lease = begin_lease(cfg, "/C=UK/CN=A", now=500)
        end_lease(cfg, lease, now=1000)
        assert reclaim(cfg, now=1000 + grace - 1) == []
        assert reclaim(cfg, now=1000 + grace) == ["pool001"]
        report(f"grace boundary inclusive at t+g for g={grace}")


class TestVersioningCompleteness:
    def test_50_step_script_reconstructs_every_state(self, tmp_path):
        root = tmp_path / "site"
        root.mkdir()
        (root / ".gacl").write_text(serialize_acl(Acl((ANY(gacl.ALL_PERMISSIONS),))))
        ticks = iter(range(10**6))
        app = FileServiceApp(root, clock=lambda: 2_000_000 + next(ticks) // 3)
        authors = [f"/C=UK/CN=author{i}" for i in range(4)]
        rng = random.Random(4)
        exists = False
        prior_states = []   # every content state later replaced or deleted
        archivists = []     # the DN whose change archived that state
        current = None
        for step in range(50):
            author = rng.choice(authors)
            ident = RequestIdentity(
                CredentialSet(dn=author, authenticated=True), "dev-headers")
            if exists and rng.random() < 0.25:
                resp = app.handle_request("DELETE", "/doc.txt", {}, ident)
                assert resp.status == 204
                prior_states.append(current)
                archivists.append(author)
                exists, current = False, None
            else:
                body = f"state-{step}-".encode() + bytes([rng.randrange(256)]) * 8
                resp = app.handle_request("PUT", "/doc.txt", {}, ident, body)
                if exists:
                    assert resp.status == 200
                    prior_states.append(current)
                    archivists.append(author)
                else:
                    assert resp.status == 201
                exists, current = True, body
        records = app.history_records("doc.txt")
        assert len(records) == len(prior_states)
        keys = [(r.timestamp, r.sequence) for r in records]
        assert all(a < b for a, b in zip(keys, keys[1:]))  # strictly increasing
        assert [r.author_dn for r in records] == archivists
        # replay: archived bytes reconstruct every intermediate state exactly
        assert [r.archived_path.read_bytes() for r in records] == prior_states
        # and each is retrievable over the documented endpoint
        for r, expected in zip(records, prior_states):
            ident = RequestIdentity(
                CredentialSet(dn=authors[0], authenticated=True), "dev-headers")
            resp = app.handle_request("GET", "/doc.txt", {"version": r.version_id},
                                      ident)
            assert resp.status == 200 and resp.body == expected
        report(f"versioning: 50-step script, {len(records)} records replay byte-exactly")


class _StubHandler(BaseHTTPRequestHandler):
    fixtures: dict = {}

    def log_message(self, *a):
        pass

    def do_GET(self):
        body = self.fixtures.get(self.path)
        if body is None:
            self.send_response(404)
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        self.send_response(200)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class TestVfsRemoteRead:
    def test_20_fixture_files(self):
        rng = random.Random(5)
        fixtures = {"/f0": b"", "/f1": bytes(rng.randrange(256)
                                             for _ in range(64)) * (1 << 14)}
        assert len(fixtures["/f1"]) == 1 << 20
        for i in range(2, 20):
            fixtures[f"/f{i}"] = bytes(rng.randrange(256)
                                       for _ in range(rng.randrange(1, 4096)))
        handler = type("H", (_StubHandler,), {"fixtures": fixtures})
        httpd = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        try:
            base = f"http://127.0.0.1:{httpd.server_address[1]}"
            table = MountTable([("/grid/web", HttpBackend(base))])
            anon = CredentialSet()
            for path, expected in fixtures.items():
                got = vfs.vfs_read(table, anon, f"/grid/web{path}")
                assert got == expected, f"{path}: {len(got)} != {len(expected)} bytes"
        finally:
            httpd.shutdown()
            httpd.server_close()
        report("VFS remote read: 20 fixtures byte-exact incl. 0-byte and 1 MiB")


class TestCliDifferential:
    def run_cli(self, capsys, *argv):
        code = cli.main(list(argv))
        cap = capsys.readouterr()
        return code, cap.out

    def test_200_case_corpus(self, tmp_path, capsys, monkeypatch):
        rng = random.Random(6)
        cases = 0

        # -- eval: 100 cases against library evaluation ------------------
        identities = [
            (["--anonymous"], CredentialSet()),
            (["--dn", DNS[0]], CredentialSet(dn=DNS[0], authenticated=True)),
            (["--dn", DNS[1], "--fqan", "/atlas"],
             CredentialSet(dn=DNS[1], fqans=("/atlas",), authenticated=True)),
            (["--fqan", "/cms/higgs"],
             CredentialSet(fqans=("/cms/higgs",), authenticated=True)),
        ]
        for i in range(100):
            acl = random_acl(rng)
            while any(c.kind is CredentialKind.DN_LIST
                      for e in acl.entries for c in e.credentials):
                acl = random_acl(rng)
            f = tmp_path / "case.gacl"
            f.write_text(serialize_acl(acl))
            flags, who = identities[i % len(identities)]
            code, out = self.run_cli(capsys, "eval", str(f), *flags)
            expected = gacl.evaluate(acl, who)
            line = " ".join(
                f"{n}={'yes' if getattr(Permission, n.upper()) & expected else 'no'}"
                for n in ("read", "list", "write", "admin"))
            assert out.strip() == line
            assert code == (0 if expected else 3)
            cases += 1

        # -- pool: 60 allocate/reclaim cases vs a twin library pool ------
        cli_state = tmp_path / "cli-pool"
        lib_cfg = PoolConfig(state_dir=tmp_path / "lib-pool", capacity=4,
                             grace_period=30)
        flags = ["--state-dir", str(cli_state), "--capacity", "4", "--grace", "30"]
        dns = [f"/C=UK/CN=u{i}" for i in range(6)]
        now = 0
        for _ in range(60):
            now += rng.randint(0, 20)
            if rng.random() < 0.7:
                dn = rng.choice(dns)
                code, out = self.run_cli(capsys, "pool", "allocate", dn,
                                         *flags, "--now", str(now))
                try:
                    expected_account = allocate(lib_cfg, dn, now=now)
                    assert (code, out.strip()) == (0, expected_account)
                except pool.PoolExhausted:
                    assert code == 1
            else:
                code, out = self.run_cli(capsys, "pool", "reclaim",
                                         *flags, "--now", str(now))
                expected_freed = reclaim(lib_cfg, now=now)
                assert code == 0
                assert out.splitlines() == expected_freed
            cases += 1

        # -- fs: 40 cases vs direct library calls ------------------------
        root = tmp_path / "fsroot"
        root.mkdir()
        (root / ".gacl").write_text(serialize_acl(Acl((
            gacl.person_entry(DNS[0], gacl.ALL_PERMISSIONS),
            ANY(Permission.READ | Permission.LIST)))))
        conf = tmp_path / "fs.conf"
        conf.write_text(f"export_root={root}\nmount /grid/local local {root}\n")
        table = MountTable([("/grid/local", LocalBackend(root))])
        alice = CredentialSet(dn=DNS[0], authenticated=True)
        names = [f"file{i}.txt" for i in range(5)]
        for i in range(40):
            op = rng.random()
            name = rng.choice(names)
            vpath = f"/grid/local/{name}"
            if op < 0.4:
                payload = f"payload-{i}".encode()
                monkeypatch.setattr("sys.stdin",
                                    io.TextIOWrapper(io.BytesIO(payload)))
                code, _ = self.run_cli(capsys, "fs", "put", vpath,
                                       "--config", str(conf), "--dn", DNS[0])
                assert code == 0
                assert vfs.vfs_read(table, alice, vpath) == payload
            elif op < 0.7:
                code = cli.main(["fs", "cat", vpath, "--config", str(conf),
                                 "--anonymous"])
                capsys.readouterr()
                try:
                    vfs.vfs_read(table, CredentialSet(), vpath)
                    assert code == 0
                except vfs.NotFound:
                    assert code == 1
            else:
                code, out = self.run_cli(capsys, "fs", "ls", "/grid/local",
                                         "--config", str(conf), "--anonymous")
                expected_names = [m.name for m in
                                  vfs.vfs_list(table, CredentialSet(), "/grid/local")]
                assert code == 0
                assert out.splitlines() == expected_names
            cases += 1

        assert cases == 200
        report("CLI differential: 200 cases agree with library; exit codes honored")
