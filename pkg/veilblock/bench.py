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
Micro-benchmarks and the storage / capacity calculators.

Latencies are wall-clock compute only; network latency is not part of any figure.
"""
import csv
import logging
import time
from dataclasses import dataclass, astuple
from typing import Callable, Iterable, List, Sequence, TextIO, Tuple, Dict

import numpy as np
from tqdm import tqdm

from veilblock.config import BenchConfig, PirConfig
from veilblock.protocol.client import begin_query, complete_query, verify_snapshot
from veilblock.protocol.crypto import keygen
from veilblock.protocol.definitions import *
from veilblock.protocol.enforcer import EnforcerState, commit_records, respond_psi
from veilblock.protocol.pir.backends import load_backend
from veilblock.protocol.pir.buckets import build_buckets, client_pir_query, server_pir_answer
from veilblock.protocol.pir.util import bucket_capacity, plaintext_slot_bytes, slot_width, max_blocklist_size
from veilblock.protocol.records import BlindedRecord, sort_records
from veilblock.protocol.transparency import TransparencyLog

LOGGER = logging.getLogger(__name__)

MIN_ITERATIONS = 200
CSV_COLUMNS = ("operation", "device", "iterations", "mean_us", "p50_us", "p95_us", "payload_bytes")

# bits per entry: blinded id, nonce, one signature per curator
ID_BITS = 256
NONCE_BITS = 16
SIGNATURE_BITS = 512

# (entries, curators) points reported by the storage calculator
STORAGE_POINTS = ((50_000, 1), (1_000_000, 1))


@dataclass(frozen=True, slots=True)
class BenchRecord:
    operation: str
    device: str
    iterations: int
    mean_us: float
    p50_us: float
    p95_us: float
    payload_bytes: int

    def __post_init__(self):
        if self.iterations < MIN_ITERATIONS:
            raise InvalidPolicyError(f"{self.operation}: {self.iterations} iterations, at least "
                                     f"{MIN_ITERATIONS} required")


def storage_per_entry(curators: int = 1) -> float:
    """modelled bytes per stored entry with `curators` signatures"""
    return (ID_BITS + NONCE_BITS + SIGNATURE_BITS * curators) / 8


def serialized_entry_bytes(curators: int = 1, curator_id_len: int = 1) -> int:
    """bytes one record actually occupies in a serialized snapshot"""
    return DIGEST_LEN + 1 + curators * (1 + curator_id_len + SIGNATURE_LEN)


def snapshot_size_estimate(entries: int, curators: int = 1) -> float:
    return entries * storage_per_entry(curators)


def capacity_table(ring_dimensions: Sequence[int] = (4096, 8192), curators: int = 1,
                   prefix_bits: int = None) -> List[Dict]:
    """entries per plaintext slot, and the blocklist ceiling if `prefix_bits` is given"""
    rows = []
    for n in ring_dimensions:
        slot = plaintext_slot_bytes(n)
        row = {"ring_dimension": n, "slot_bytes": slot, "entry_bytes": slot_width(curators),
               "capacity": bucket_capacity(slot, slot_width(curators))}
        if prefix_bits is not None:
            row["max_entries"] = max_blocklist_size(prefix_bits, slot, slot_width(curators))
        rows.append(row)
    return rows


def linear_fit(xs: Sequence[float], ys: Sequence[float]) -> Tuple[float, float, float]:
    """least squares line through the points; returns slope, intercept and R²"""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - (residual ** 2).sum() / total if total else 1.0
    return float(slope), float(intercept), float(r2)


def measure(operation: str, func: Callable, arguments: Sequence[Tuple], device: str,
            payload_bytes: int = 0) -> BenchRecord:
    """
    Time `func(*args)` once per entry of `arguments`

    :param operation: row label
    :param func: operation under test
    :param arguments: one argument tuple per iteration, prepared outside the timed region
    :param device: device label
    :param payload_bytes: bytes on the wire for one operation

    :returns: `BenchRecord`
    """
    samples = np.empty(len(arguments), dtype=np.int64)
    for i, args in enumerate(arguments):
        start = time.perf_counter_ns()
        func(*args)
        samples[i] = time.perf_counter_ns() - start
    micros = samples / 1000.0
    record = BenchRecord(operation, device, len(arguments), float(micros.mean()),
                         float(np.percentile(micros, 50)), float(np.percentile(micros, 95)), payload_bytes)
    LOGGER.info(f"{operation}: mean {record.mean_us:.1f}us p95 {record.p95_us:.1f}us")
    return record


def synthetic_records(count: int, curators: int = 1, seed: int = 0) -> Tuple[BlindedRecord, ...]:
    """random ids and ciphertexts; shaped like real records, without the cost of building them"""
    rng = np.random.default_rng(seed)
    names = [chr(ord("a") + i) for i in range(curators)]
    records = (BlindedRecord(rng.bytes(DIGEST_LEN), tuple((name, rng.bytes(SIGNATURE_LEN)) for name in names))
               for _ in range(count))
    return sort_records(records)


def filled_records(prefix_bits: int, per_bucket: int, seed: int = 0) -> Tuple[BlindedRecord, ...]:
    """`per_bucket` random records under every k-bit prefix"""
    rng = np.random.default_rng(seed)
    shift = DIGEST_LEN * 8 - prefix_bits
    records = []
    for bucket in range(1 << prefix_bits):
        for _ in range(per_bucket):
            low = int.from_bytes(rng.bytes(DIGEST_LEN), "big") & ((1 << shift) - 1)
            blinded_id = ((bucket << shift) | low).to_bytes(DIGEST_LEN, "big")
            records.append(BlindedRecord(blinded_id, (("a", rng.bytes(SIGNATURE_LEN)),)))
    return sort_records(records)


def _storage_rows(config: BenchConfig) -> List[BenchRecord]:
    rows = []
    for entries, curators in STORAGE_POINTS:
        args = [(entries, curators)] * config.iterations
        rows.append(measure(f"storage[n={entries},j={curators}]", snapshot_size_estimate, args, config.device,
                            round(snapshot_size_estimate(entries, curators))))
    return rows


def _psi_rows(config: BenchConfig) -> List[BenchRecord]:
    n = config.iterations
    objects = [f"bench-object-{i}".encode() for i in range(n)]
    rows = [measure("client_blind", begin_query, [(o,) for o in objects], config.device, ELEMENT_LEN)]

    state = EnforcerState.create()
    pending = [begin_query(o) for o in objects]
    responses = [(qs, respond_psi(state, req)) for req, qs in pending]
    rows.append(measure("client_unblind", complete_query, responses, config.device, ELEMENT_LEN))

    for size in config.sizes:
        state = EnforcerState.create()
        commit_records(state, synthetic_records(size), now_ts())
        requests = [(state, begin_query(o)[0]) for o in objects]
        rows.append(measure(f"server_psi[n={size}]", respond_psi, requests, config.device, ELEMENT_LEN))
    return rows


def _verify_rows(config: BenchConfig) -> List[BenchRecord]:
    rows = []
    for size in config.sizes:
        state = EnforcerState.create()
        snapshot = commit_records(state, synthetic_records(size), now_ts())
        payload = len(snapshot.to_bytes())
        args = [(snapshot, state.public_key)] * config.iterations
        rows.append(measure(f"verify_snapshot[n={size}]", verify_snapshot, args, config.device, payload))
    return rows


def _pir_rows(config: BenchConfig, pir: PirConfig) -> List[BenchRecord]:
    backend = load_backend(pir.backend, {"ring_dimension": pir.ring_dimension})
    rows = []
    for k in config.pir_prefix_bits:
        records = filled_records(k, config.pir_fill)
        db = build_buckets(records, k, log=TransparencyLog(keygen()), now=now_ts())
        query, _ = client_pir_query(records[0].blinded_id, k, backend)
        answer_bytes = len(server_pir_answer(query, db, backend).to_bytes())
        args = [(query, db, backend)] * config.iterations
        rows.append(measure(f"pir_answer[k={k},elements={len(records)}]", server_pir_answer, args,
                            config.device, answer_bytes))
        query_args = [(records[0].blinded_id, k, backend)] * config.iterations
        rows.append(measure(f"pir_query[k={k}]", client_pir_query, query_args, config.device,
                            len(query.to_bytes())))
    return rows


def bench_suite(config: BenchConfig = None, pir: PirConfig = None) -> List[BenchRecord]:
    """
    Run every benchmark group

    :param config: iterations, device label and sizes
    :param pir: backend selection for the bucketed lookup benchmarks

    :returns: list of `BenchRecord`, in execution order
    """
    config = config or BenchConfig()
    pir = pir or PirConfig()
    groups = [("storage", lambda: _storage_rows(config)),
              ("psi", lambda: _psi_rows(config)),
              ("snapshot verification", lambda: _verify_rows(config)),
              ("bucketed lookups", lambda: _pir_rows(config, pir))]
    rows = []
    for name, run in tqdm(groups, desc="benchmarks", unit="group"):
        LOGGER.info(f"running {name} benchmarks")
        rows.extend(run())
    return rows


def summarize(rows: Iterable[BenchRecord]) -> Dict:
    """derived figures: server PSI cost across database sizes and bucketed answer scaling"""
    rows = list(rows)
    psi = [r for r in rows if r.operation.startswith("server_psi")]
    pir = [r for r in rows if r.operation.startswith("pir_answer")]
    summary = {}
    if len(psi) >= 2:
        means = [r.mean_us for r in psi]
        summary["psi_size_ratio"] = max(means) / min(means)
    if len(pir) >= 2:
        elements = [int(r.operation.split("elements=")[1].rstrip("]")) for r in pir]
        summary["pir_slope_us"], summary["pir_intercept_us"], summary["pir_r2"] = \
            linear_fit(elements, [r.mean_us for r in pir])
    return summary


def write_csv(rows: Iterable[BenchRecord], out: TextIO):
    writer = csv.writer(out)
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(astuple(row))
