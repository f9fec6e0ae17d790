# =================================================================
# Copyright (C) 2024 by the veilblock authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# =================================================================
"""
Command line entry point: veilblock <curator|enforcer|client|audit|witness|bench> ...

Exit codes: 0 clean or benign, 1 violation or harmful, 2 usage or configuration error, 3 protocol error.
"""
import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List

import uvloop

from veilblock.api import EnforcerService
from veilblock.bench import bench_suite, summarize, write_csv
from veilblock.config import CONFIG_ENV, VeilblockConfig, parse_config, parse_duration, setup_logger
from veilblock.protocol.auditor import AuditPolicy, audit_checkpoints, check_split_view_evidence, \
    privileged_audit, verify_appeal
from veilblock.protocol.client import AppealBundle, begin_query, complete_query, evaluate, export_appeal, \
    verify_snapshot
from veilblock.protocol.connector_file import CuratorStore, EnforcerStore, FileCheckpointStore, WitnessStore, \
    load_keyrings, load_public_key, load_scalar, load_witness_keys, save_public_key
from veilblock.protocol.crypto import keygen
from veilblock.protocol.curator import CuratorDatabase, CuratorExport, RevocationMode
from veilblock.protocol.definitions import *
from veilblock.protocol.enforcer import EnforcerState, apply_diff, build_database, publish_bucketed, \
    publish_update, rotate_blinding, snapshot_diff
from veilblock.protocol.pir.backends import load_backend
from veilblock.protocol.pir.buckets import client_pir_decode, client_pir_query
from veilblock.protocol.records import DatabaseSnapshot, SnapshotDiff
from veilblock.protocol.transparency import Witness, check_checkpoint
from veilblock.wire import EnforcerConnection

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FLAGGED = 1
EXIT_USAGE = 2
EXIT_PROTOCOL = 3


def _emit(record: Dict):
    print(json.dumps(record, sort_keys=True))


def _keyrings(args, config: VeilblockConfig):
    return load_keyrings(args.keyring or config.keys.curator_keyrings)


def _enforcer_key(args, config: VeilblockConfig) -> PublicKey:
    path = args.enforcer_key or config.keys.enforcer_public_key
    if path is None:
        raise ConfigError("no enforcer public key configured")
    return load_public_key(path)


def _witness_keys(config: VeilblockConfig) -> Dict[str, PublicKey]:
    return load_witness_keys(config.keys.witness_keys)


def _host_port(args, config: VeilblockConfig):
    return args.host or config.server.bind.host, args.port or config.server.bind.port


def _enforcer_store(args, config: VeilblockConfig) -> EnforcerStore:
    directory = args.dir or config.server.state_dir
    gossip = FileCheckpointStore(config.server.gossip_file) if config.server.gossip_file else None
    return EnforcerStore(directory, gossip)


# curator


def curator_init(args, config: VeilblockConfig) -> int:
    store = CuratorStore(args.dir)
    if store.exists():
        raise ConfigError(f"{args.dir} already holds curator state")
    db = CuratorDatabase.create(args.id, RevocationMode(args.mode), parse_duration(args.window),
                                auditors=set(args.auditor))
    store.save(db)
    _emit({"curator_id": db.curator_id, "keyring": str(store.keyring_path)})
    return EXIT_OK


def curator_add(args, config: VeilblockConfig) -> int:
    store = CuratorStore(args.dir)
    db = store.load()
    for path in args.files:
        entry = db.add_object(Path(path).read_bytes())
        _emit({"idx": entry.idx, "file": str(path), "hash": entry.obj_hash.hex()})
    store.save(db)
    return EXIT_OK


def curator_export(args, config: VeilblockConfig) -> int:
    db = CuratorStore(args.dir).load()
    Path(args.out).write_bytes(db.export().to_bytes())
    _emit({"curator_id": db.curator_id, "entries": len(db.entries), "export": str(args.out)})
    return EXIT_OK


def curator_rotate(args, config: VeilblockConfig) -> int:
    store = CuratorStore(args.dir)
    db = store.load()
    identity = db.rotate_key()
    store.save(db)
    _emit({"curator_id": db.curator_id, "public_key": identity.keypair.public_key.hex()})
    return EXIT_OK


def curator_renew(args, config: VeilblockConfig) -> int:
    store = CuratorStore(args.dir)
    db = store.load()
    renewed = db.renew_signatures()
    store.save(db)
    _emit({"curator_id": db.curator_id, "renewed": len(renewed)})
    return EXIT_OK


def curator_withdraw(args, config: VeilblockConfig) -> int:
    store = CuratorStore(args.dir)
    db = store.load()
    db.withdraw(args.idx)
    store.save(db)
    return EXIT_OK


def curator_disclose(args, config: VeilblockConfig) -> int:
    data = CuratorStore(args.dir).load().disclose_object(args.idx, args.requester)
    Path(args.out).write_bytes(data)
    return EXIT_OK


# enforcer


def _load_witnesses(args) -> List[Witness]:
    return [WitnessStore(d).load() for d in args.witness]


def _save_witnesses(args, witnesses: List[Witness]):
    for directory, witness in zip(args.witness, witnesses):
        WitnessStore(directory).save(witness)


def _read_exports(paths) -> Dict[str, list]:
    exports = [CuratorExport.from_bytes(Path(p).read_bytes()) for p in paths]
    return {e.curator_id: e.entries for e in exports}


def _publish(args, config: VeilblockConfig, store: EnforcerStore, state: EnforcerState, witnesses: List[Witness]):
    store.save(state)
    if config.pir.enabled:
        bucketed = publish_bucketed(state, state.snapshot, config.pir.prefix_bits, state.last_published,
                                    config.pir.max_response_bytes)
        store.save(state)
        store.save_bucketed(bucketed)
    else:
        store.bucketed_path.unlink(missing_ok=True)
    _save_witnesses(args, witnesses)
    snapshot = state.snapshot
    _emit({"epoch": snapshot.epoch, "records": len(snapshot.records), "db_hash": snapshot.db_hash.hex(),
           "log_size": state.log.tree.size})


def enforcer_init(args, config: VeilblockConfig) -> int:
    store = _enforcer_store(args, config)
    if store.exists():
        raise ConfigError(f"{store.directory} already holds enforcer state")
    policy_m = args.policy_m if args.policy_m is not None else config.policy.policy_m
    state = EnforcerState.create(policy_m, update_interval=config.policy.update_interval,
                                 clock_skew=config.policy.clock_skew)
    store.save(state)
    save_public_key(store.directory / "enforcer.pub", state.public_key)
    _emit({"public_key": state.public_key.hex(), "blinding": str(store.blinding_path)})
    return EXIT_OK


def enforcer_build(args, config: VeilblockConfig) -> int:
    store = _enforcer_store(args, config)
    witnesses = _load_witnesses(args)
    state = store.load(witnesses)
    build_database(state, _read_exports(args.exports), _keyrings(args, config))
    _publish(args, config, store, state, witnesses)
    return EXIT_OK


def enforcer_update(args, config: VeilblockConfig) -> int:
    store = _enforcer_store(args, config)
    witnesses = _load_witnesses(args)
    state = store.load(witnesses)
    publish_update(state, _read_exports(args.exports), _keyrings(args, config))
    _publish(args, config, store, state, witnesses)
    return EXIT_OK


def enforcer_rotate_blinding(args, config: VeilblockConfig) -> int:
    store = _enforcer_store(args, config)
    witnesses = _load_witnesses(args)
    state = store.load(witnesses)
    rotate_blinding(state, _keyrings(args, config))
    _publish(args, config, store, state, witnesses)
    return EXIT_OK


def enforcer_diff(args, config: VeilblockConfig) -> int:
    old = DatabaseSnapshot.from_bytes(Path(args.old).read_bytes())
    new = DatabaseSnapshot.from_bytes(Path(args.new).read_bytes())
    diff = snapshot_diff(old, new)
    Path(args.out).write_bytes(diff.to_bytes())
    _emit({"from_epoch": diff.from_epoch, "to_epoch": diff.to_epoch, "added": len(diff.added),
           "removed": len(diff.removed)})
    return EXIT_OK


async def _serve(store: EnforcerStore, config: VeilblockConfig):
    state = store.load()
    backend = load_backend(config.pir.backend, {"ring_dimension": config.pir.ring_dimension}) \
        if config.pir.enabled else None
    service = EnforcerService(state, backend, config.server.max_frame_bytes, config.server.workers,
                              config.server.max_in_flight)
    if state.snapshot is not None and backend is not None:
        service.publish(state.snapshot, store.load_bucketed(state.snapshot))
    server = await service.start(config.server.bind.host, config.server.bind.port)

    mtime = store.snapshot_path.stat().st_mtime if store.snapshot_path.exists() else None
    try:
        async with server:
            while True:
                await asyncio.sleep(config.server.reload_interval)
                current = store.snapshot_path.stat().st_mtime if store.snapshot_path.exists() else None
                if current == mtime:
                    continue
                mtime = current
                try:
                    state = store.load()
                    bucketed = store.load_bucketed(state.snapshot) if backend is not None else None
                except VeilblockError as ex:
                    LOGGER.error(f"reload failed, keeping epoch {service.state.epoch}: {ex.message}")
                    continue
                service.state = state
                service.publish(state.snapshot, bucketed)
    finally:
        service.close()


def enforcer_serve(args, config: VeilblockConfig) -> int:
    store = _enforcer_store(args, config)
    if not store.snapshot_path.exists():
        raise ConfigError(f"no snapshot published in {store.directory}; run 'enforcer build' first")
    try:
        uvloop.run(_serve(store, config))
    except KeyboardInterrupt:
        LOGGER.info("enforcer stopped")
    return EXIT_OK


# client


async def _fetch_snapshot(host: str, port: int, max_frame: int) -> DatabaseSnapshot:
    async with await EnforcerConnection.open(host, port, max_frame) as conn:
        return await conn.snapshot()


def client_sync(args, config: VeilblockConfig) -> int:
    host, port = _host_port(args, config)
    snapshot = asyncio.run(_fetch_snapshot(host, port, config.server.max_frame_bytes))
    pk_E = _enforcer_key(args, config)
    if args.previous and args.diff_out:
        old = DatabaseSnapshot.from_bytes(Path(args.previous).read_bytes())
        Path(args.diff_out).write_bytes(snapshot_diff(old, snapshot).to_bytes())
    db = verify_snapshot(snapshot, pk_E, _witness_keys(config), config.policy.witness_quorum)
    Path(args.out).write_bytes(snapshot.to_bytes())
    _emit({"epoch": db.epoch, "records": len(db), "log_size": db.checkpoint.size})
    return EXIT_OK


def client_apply(args, config: VeilblockConfig) -> int:
    """apply a partial update to a stored snapshot and verify the result against the new checkpoint"""
    old = DatabaseSnapshot.from_bytes(Path(args.snapshot).read_bytes())
    diff = SnapshotDiff.from_bytes(Path(args.diff).read_bytes())
    new = DatabaseSnapshot.from_bytes(Path(args.new_header).read_bytes())
    if diff.from_epoch != old.epoch or diff.to_epoch != new.epoch:
        raise EpochOrderError(f"diff {diff.from_epoch}->{diff.to_epoch} does not connect {old.epoch}->{new.epoch}")
    merged = DatabaseSnapshot(new.epoch, apply_diff(old.records, diff), new.db_hash, new.checkpoint, new.inclusion,
                              new.enforcer_pk)
    verify_snapshot(merged, _enforcer_key(args, config), _witness_keys(config), config.policy.witness_quorum)
    Path(args.out).write_bytes(merged.to_bytes())
    _emit({"epoch": merged.epoch, "records": len(merged.records)})
    return EXIT_OK


async def _detect(host: str, port: int, max_frame: int, obj: bytes, pir_k: int = None, backend=None):
    async with await EnforcerConnection.open(host, port, max_frame) as conn:
        request, state = begin_query(obj)
        lookup_key, unblinded = complete_query(state, await conn.psi(request))
        if pir_k is None:
            return lookup_key, unblinded, None, None
        query, sk = client_pir_query(lookup_key, pir_k, backend)
        return lookup_key, unblinded, await conn.pir(query), sk


def _check(args, config: VeilblockConfig):
    obj = Path(args.file).read_bytes()
    host, port = _host_port(args, config)
    pk_E = _enforcer_key(args, config)
    keyrings = _keyrings(args, config)
    witness_pks = _witness_keys(config)
    policy = config.policy
    if args.pir:
        backend = load_backend(config.pir.backend, {"ring_dimension": config.pir.ring_dimension})
        lookup_key, unblinded, answer, sk = asyncio.run(
            _detect(host, port, config.server.max_frame_bytes, obj, config.pir.prefix_bits, backend))
        return obj, client_pir_decode(answer, sk, lookup_key, unblinded, obj, keyrings, pk_E, witness_pks,
                                      policy.policy_m, now_ts(), backend, policy.witness_quorum, policy.clock_skew)
    snapshot = DatabaseSnapshot.from_bytes(Path(args.snapshot).read_bytes())
    db = verify_snapshot(snapshot, pk_E, witness_pks, policy.witness_quorum)
    _, unblinded, _, _ = asyncio.run(_detect(host, port, config.server.max_frame_bytes, obj))
    return obj, evaluate(obj, unblinded, db, keyrings, policy.policy_m, skew=policy.clock_skew)


def client_check(args, config: VeilblockConfig) -> int:
    _, verdict = _check(args, config)
    _emit(verdict.to_record())
    return EXIT_FLAGGED if verdict.harmful else EXIT_OK


def client_appeal(args, config: VeilblockConfig) -> int:
    obj, verdict = _check(args, config)
    bundle = export_appeal(obj, verdict)
    Path(args.out).write_text(bundle.model_dump_json(indent=2))
    _emit({"bundle": str(args.out), "curators": [s.curator_id for s in bundle.signatures]})
    return EXIT_FLAGGED


# audit


def _audit_policy(config: VeilblockConfig) -> AuditPolicy:
    return AuditPolicy(config.audit.min_update_interval, config.audit.max_checkpoint_age,
                       config.audit.witness_quorum)


def _report(report) -> int:
    for record in report.to_records():
        _emit(record)
    _emit({"verdict": report.verdict, "violations": len(report.violations)})
    return EXIT_OK if report.clean else EXIT_FLAGGED


async def _remote_audit(host, port, max_frame, checkpoints, pk_E, witness_pks, policy, now):
    async with await EnforcerConnection.open(host, port, max_frame) as conn:
        if checkpoints is None:
            checkpoints = await conn.checkpoints()
        # the auditor only asks for proofs towards the newest valid checkpoint
        valid = [c for c in checkpoints if check_checkpoint(c, pk_E, witness_pks, policy.witness_quorum) is None]
        proofs = {}
        if valid:
            latest = max(valid, key=lambda c: (c.size, c.timestamp))
            for size in sorted({c.size for c in valid if c.size < latest.size}):
                try:
                    proofs[(size, latest.size)] = await conn.consistency(size, latest.size)
                except ProtocolError as ex:
                    proofs[(size, latest.size)] = ex

    def oracle(old_size: int, new_size: int):
        proof = proofs.get((old_size, new_size))
        if proof is None:
            raise ProofError(f"no proof fetched for {old_size}->{new_size}")
        if isinstance(proof, Exception):
            raise proof
        return proof

    return audit_checkpoints(checkpoints, oracle, pk_E, witness_pks, policy, now)


def audit_log(args, config: VeilblockConfig) -> int:
    pk_E = _enforcer_key(args, config)
    checkpoints = FileCheckpointStore(args.checkpoints).fetch() if args.checkpoints else None
    if args.enforcer_dir:
        state = EnforcerStore(args.enforcer_dir).load()
        if checkpoints is None:
            checkpoints = state.log.store.fetch()
        report = audit_checkpoints(checkpoints, state.log.prove_consistency, pk_E, _witness_keys(config),
                                   _audit_policy(config), now_ts())
    else:
        host, port = _host_port(args, config)
        report = asyncio.run(_remote_audit(host, port, config.server.max_frame_bytes, checkpoints, pk_E,
                                           _witness_keys(config), _audit_policy(config), now_ts()))
    return _report(report)


def audit_db(args, config: VeilblockConfig) -> int:
    snapshot = DatabaseSnapshot.from_bytes(Path(args.snapshot).read_bytes())
    objects = {p.name: p.read_bytes() for p in sorted(Path(args.objects).iterdir()) if p.is_file()}
    pk_E = None
    if args.enforcer_key or config.keys.enforcer_public_key:
        pk_E = _enforcer_key(args, config)
    report = privileged_audit(snapshot, objects, load_scalar(args.blinding), _keyrings(args, config),
                              config.policy.policy_m, now_ts(), pk_E, config.policy.clock_skew)
    return _report(report)


def audit_appeal(args, config: VeilblockConfig) -> int:
    bundle = AppealBundle.model_validate_json(Path(args.bundle).read_text())
    result = verify_appeal(bundle, _keyrings(args, config), now_ts(), config.policy.clock_skew)
    _emit({"valid": result.valid, "reasons": list(result.reasons)})
    return EXIT_OK if result else EXIT_FLAGGED


def audit_evidence(args, config: VeilblockConfig) -> int:
    """exit 1 when the evidence proves a split view"""
    evidence = bytes.fromhex(Path(args.evidence).read_text().strip())
    proven = check_split_view_evidence(evidence, _enforcer_key(args, config))
    _emit({"split_view": proven})
    return EXIT_FLAGGED if proven else EXIT_OK


# witness


def witness_keygen(args, config: VeilblockConfig) -> int:
    store = WitnessStore(args.dir)
    witness = Witness(args.id, keygen())
    store.save(witness)
    save_public_key(Path(args.dir) / "witness.pub", witness.keypair.public_key)
    _emit({"witness_id": witness.witness_id, "public_key": witness.keypair.public_key.hex()})
    return EXIT_OK


def witness_evidence(args, config: VeilblockConfig) -> int:
    witness = WitnessStore(args.dir).load()
    for prior, refused in witness.evidence:
        _emit({"prior": prior.to_line(), "refused": refused.to_line()})
    return EXIT_FLAGGED if witness.evidence else EXIT_OK


# bench


def bench_run(args, config: VeilblockConfig) -> int:
    bench = config.bench
    if args.iterations:
        bench = bench.model_copy(update={"iterations": max(args.iterations, bench.iterations)})
    rows = bench_suite(bench, config.pir)
    out = args.out or bench.output
    if out:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            write_csv(rows, fh)
    else:
        write_csv(rows, sys.stdout)
    for key, value in summarize(rows).items():
        LOGGER.info(f"{key}: {value:.3f}")
    return EXIT_OK


def _add_enforcer_args(parser, keyring: bool = False, remote: bool = False, pk: bool = False):
    if keyring:
        parser.add_argument("--keyring", action="append", default=[], type=Path,
                            help="curator keyring (default: keys.curator_keyrings)")
    if remote:
        parser.add_argument("--host", help="enforcer host (default: server.bind.host)")
        parser.add_argument("--port", type=int, help="enforcer port (default: server.bind.port)")
    if pk:
        parser.add_argument("--enforcer-key", type=Path, help="enforcer public key file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="veilblock", description="on-device blocklisting toolkit")
    parser.add_argument("--config", help=f"configuration file (default: ${CONFIG_ENV})")
    roles = parser.add_subparsers(dest="role", required=True)

    curator = roles.add_parser("curator", help="maintain and sign a blocklist")
    curator.add_argument("--dir", required=True, type=Path, help="curator state directory")
    commands = curator.add_subparsers(dest="command", required=True)
    p = commands.add_parser("init")
    p.add_argument("--id", required=True)
    p.add_argument("--mode", choices=[m.value for m in RevocationMode], default=RevocationMode.STATIC.value)
    p.add_argument("--window", default="0", help="validity window, seconds or ISO-8601 duration")
    p.add_argument("--auditor", action="append", default=[], help="auditor allowed to request objects")
    p.set_defaults(func=curator_init)
    p = commands.add_parser("add")
    p.add_argument("files", nargs="+")
    p.set_defaults(func=curator_add)
    p = commands.add_parser("export")
    p.add_argument("--out", required=True)
    p.set_defaults(func=curator_export)
    commands.add_parser("rotate").set_defaults(func=curator_rotate)
    commands.add_parser("renew").set_defaults(func=curator_renew)
    p = commands.add_parser("withdraw")
    p.add_argument("idx", type=int)
    p.set_defaults(func=curator_withdraw)
    p = commands.add_parser("disclose")
    p.add_argument("idx", type=int)
    p.add_argument("--requester", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=curator_disclose)

    enforcer = roles.add_parser("enforcer", help="build, publish and serve the blinded database")
    enforcer.add_argument("--dir", type=Path, help="enforcer state directory (default: server.state_dir)")
    enforcer.add_argument("--witness", action="append", default=[], type=Path, help="witness state directory")
    commands = enforcer.add_subparsers(dest="command", required=True)
    p = commands.add_parser("init")
    p.add_argument("--policy-m", type=int, help="signatures required per record (default: policy.policy_m)")
    p.set_defaults(func=enforcer_init)
    for name, func in (("build", enforcer_build), ("update", enforcer_update)):
        p = commands.add_parser(name)
        p.add_argument("exports", nargs="*", help="curator export files")
        _add_enforcer_args(p, keyring=True)
        p.set_defaults(func=func)
    p = commands.add_parser("rotate-blinding")
    _add_enforcer_args(p, keyring=True)
    p.set_defaults(func=enforcer_rotate_blinding)
    p = commands.add_parser("diff")
    p.add_argument("old")
    p.add_argument("new")
    p.add_argument("--out", required=True)
    p.set_defaults(func=enforcer_diff)
    commands.add_parser("serve").set_defaults(func=enforcer_serve)

    client = roles.add_parser("client", help="verify snapshots and check objects")
    commands = client.add_subparsers(dest="command", required=True)
    p = commands.add_parser("sync")
    p.add_argument("--out", required=True, help="where to store the verified snapshot")
    p.add_argument("--previous", help="previously stored snapshot")
    p.add_argument("--diff-out", help="write the difference to --previous here")
    _add_enforcer_args(p, remote=True, pk=True)
    p.set_defaults(func=client_sync)
    p = commands.add_parser("apply")
    p.add_argument("snapshot")
    p.add_argument("diff")
    p.add_argument("new_header", help="snapshot carrying the new checkpoint and proof")
    p.add_argument("--out", required=True)
    _add_enforcer_args(p, pk=True)
    p.set_defaults(func=client_apply)
    for name, func in (("check", client_check), ("appeal", client_appeal)):
        p = commands.add_parser(name)
        p.add_argument("file")
        p.add_argument("--snapshot", help="verified snapshot from 'client sync'")
        p.add_argument("--pir", action="store_true", help="use the bucketed lookup instead of a local snapshot")
        if name == "appeal":
            p.add_argument("--out", required=True)
        _add_enforcer_args(p, keyring=True, remote=True, pk=True)
        p.set_defaults(func=func)

    audit = roles.add_parser("audit", help="audit logs, databases and appeals")
    commands = audit.add_subparsers(dest="command", required=True)
    p = commands.add_parser("log")
    p.add_argument("checkpoints", nargs="?", help="checkpoint file (default: fetch from the enforcer)")
    p.add_argument("--enforcer-dir", type=Path, help="read proofs from a local enforcer state directory")
    _add_enforcer_args(p, remote=True, pk=True)
    p.set_defaults(func=audit_log)
    p = commands.add_parser("db")
    p.add_argument("snapshot")
    p.add_argument("objects", help="directory of disclosed objects")
    p.add_argument("blinding", help="file holding the blinding value")
    _add_enforcer_args(p, keyring=True, pk=True)
    p.set_defaults(func=audit_db)
    p = commands.add_parser("appeal")
    p.add_argument("bundle")
    _add_enforcer_args(p, keyring=True)
    p.set_defaults(func=audit_appeal)
    p = commands.add_parser("evidence")
    p.add_argument("evidence", help="file holding hex evidence from an audit report")
    _add_enforcer_args(p, pk=True)
    p.set_defaults(func=audit_evidence)

    witness = roles.add_parser("witness", help="simulated checkpoint witness")
    witness.add_argument("--dir", required=True, type=Path)
    commands = witness.add_subparsers(dest="command", required=True)
    p = commands.add_parser("keygen")
    p.add_argument("--id", required=True)
    p.set_defaults(func=witness_keygen)
    commands.add_parser("evidence").set_defaults(func=witness_evidence)

    bench = roles.add_parser("bench", help="run the benchmark suite")
    bench.add_argument("--out", help="CSV output (default: bench.output or stdout)")
    bench.add_argument("--iterations", type=int)
    bench.set_defaults(func=bench_run)
    return parser


def main(argv: List[str] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as ex:
        return EXIT_USAGE if ex.code else EXIT_OK

    try:
        config = parse_config(args.config)
    except ConfigError as ex:
        print(f"configuration error: {ex.message}", file=sys.stderr)
        return EXIT_USAGE
    setup_logger(config.logging)

    try:
        return args.func(args, config)
    except (ConfigError, CuratorError, AppealError, InvalidPolicyError, EpochOrderError) as ex:
        LOGGER.error(ex.message)
        print(f"error: {ex.user_msg}", file=sys.stderr)
        return EXIT_USAGE
    except (VeilblockError, ConnectionError, asyncio.IncompleteReadError) as ex:
        LOGGER.error(f"protocol error: {ex}")
        print(f"protocol error: {ex}", file=sys.stderr)
        return EXIT_PROTOCOL
    except OSError as ex:
        LOGGER.critical(f"{ex}")
        print(f"error: {ex}", file=sys.stderr)
        return EXIT_USAGE


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
