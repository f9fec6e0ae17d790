"""
Load generator for a running enforcer: many concurrent clients issuing PSI lookups.

    python tools/simulator/simulator.py --port 7470 --clients 64 --lookups 50
"""
import argparse
import asyncio
import logging
import random
import time

import numpy as np
from tqdm import tqdm

from veilblock.protocol.client import begin_query, complete_query
from veilblock.wire import EnforcerConnection

LOGGER = logging.getLogger("simulator")


async def client(host: str, port: int, lookups: int, progress: tqdm, latencies: list):
    async with await EnforcerConnection.open(host, port) as conn:
        for _ in range(lookups):
            obj = random.randbytes(64)
            start = time.perf_counter()
            request, state = begin_query(obj)
            complete_query(state, await conn.psi(request))
            latencies.append(time.perf_counter() - start)
            progress.update()


async def simulate(host: str, port: int, clients: int, lookups: int) -> np.ndarray:
    latencies = []
    with tqdm(total=clients * lookups, unit="lookup") as progress:
        await asyncio.gather(*(client(host, port, lookups, progress, latencies) for _ in range(clients)))
    return np.asarray(latencies) * 1000


def main():
    parser = argparse.ArgumentParser(description="concurrent PSI lookups against an enforcer")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=7470)
    parser.add_argument("--clients", type=int, default=64)
    parser.add_argument("--lookups", type=int, default=50, help="lookups per client")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO)

    millis = asyncio.run(simulate(args.host, args.port, args.clients, args.lookups))
    LOGGER.info(f"{len(millis)} lookups: mean {millis.mean():.2f}ms, p50 {np.percentile(millis, 50):.2f}ms, "
                f"p95 {np.percentile(millis, 95):.2f}ms")


if __name__ == "__main__":
    main()
