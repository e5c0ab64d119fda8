"""Deterministic synthetic corpora with planted mixer structures.

Two structure families are planted:

* pass-through: an exchange funds ``tx1`` together with a small extra input,
  ``tx1`` pays two mixer-side addresses which are both spent by ``tx2``, and
  ``tx2`` pays almost everything to an exchange deposit address;
* peeling chain: a mixer address starts a chain where every transaction
  peels a small payment off and forwards the rest to a fresh change address.

When chains are present, the small extra input of each pass-through motif is
one of the chain's peeled payments, so motifs live inside the larger graph of
the pool that tops them up rather than as isolated 8-node graphs.

Noise transactions only touch their own address pool, so they never reach a
planted seed. Randomness comes from a Philox counter-based generator seeded
explicitly; the same SynthSpec always yields byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .ingest import Category, LabelDirectory, SeedSet, TxRecord, dump_transactions

BASE_TIMESTAMP = 1_500_000_000


@dataclass(frozen=True)
class SynthSpec:
    rng_seed: int = 0
    n_passthrough: int = 30
    n_peeling_chains: int = 10
    peeling_length: int = 4
    n_noise_txs: int = 50
    exchange_pool: int = 5
    amount_min: int = 100_000
    amount_max: int = 1_000_000_000

    def __post_init__(self):
        for name in ("n_passthrough", "n_peeling_chains", "peeling_length", "n_noise_txs", "exchange_pool"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.amount_min < 1 or self.amount_min > self.amount_max:
            raise ValueError("need 1 <= amount_min <= amount_max")
        if self.n_passthrough and self.exchange_pool < 1:
            raise ValueError("pass-through motifs need at least one exchange entity")


@dataclass
class GroundTruth:
    structures: list[dict] = field(default_factory=list)
    mixer_seeds: list[str] = field(default_factory=list)
    exchange_rows: list[list[str]] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        return cls(**json.loads(text))


@dataclass
class Corpus:
    transactions: list[TxRecord]
    seeds: SeedSet
    labels: LabelDirectory
    truth: GroundTruth


class _Names:
    def __init__(self, seed: int):
        self.seed = seed
        self.counter = 0

    def _next(self, kind: str) -> str:
        self.counter += 1
        return hashlib.sha256(f"{self.seed}:{kind}:{self.counter}".encode()).hexdigest()

    def address(self) -> str:
        return "bc1q" + self._next("addr")[:36]

    def txid(self) -> str:
        return self._next("tx")


class _Builder:
    def __init__(self, spec: SynthSpec):
        self.spec = spec
        self.rng = np.random.Generator(np.random.Philox(spec.rng_seed))
        self.names = _Names(spec.rng_seed)
        self.txs: list[TxRecord] = []
        self.height = 0

    def amount(self) -> int:
        lo, hi = math.log(self.spec.amount_min), math.log(self.spec.amount_max)
        return int(round(math.exp(self.rng.uniform(lo, hi))))

    def frac(self, lo: float, hi: float) -> float:
        return float(self.rng.uniform(lo, hi))

    def tx(self, inputs, outputs) -> str:
        self.height += 1
        txid = self.names.txid()
        self.txs.append(
            TxRecord(
                txid=txid,
                inputs=tuple((a, int(v)) for a, v in inputs),
                outputs=tuple((a, int(v)) for a, v in outputs),
                timestamp=BASE_TIMESTAMP + 600 * self.height,
                height=self.height,
            )
        )
        return txid

    def passthrough_plan(self) -> dict:
        big = self.amount()
        small = max(1, int(big * self.frac(0.02, 0.15)))
        side = max(1, int((big + small) * self.frac(0.05, 0.2)))
        leftover_frac = self.frac(0.02, 0.12)
        return {"big": big, "small": small, "side": side, "leftover_frac": leftover_frac, "extra": self.names.address()}

    def passthrough(self, plan: dict, entity: str) -> dict:
        n = self.names
        ex_in, m1, m2, ex_out, change = (n.address() for _ in range(5))
        big, small, side, extra = plan["big"], plan["small"], plan["side"], plan["extra"]
        fee1 = max(1, (big + small) // 1000)
        carry = big + small - fee1 - side
        tx1 = self.tx([(ex_in, big), (extra, small)], [(m1, carry), (m2, side)])
        fee2 = max(1, (carry + side) // 1000)
        leftover = max(1, int((carry + side) * plan["leftover_frac"]))
        payout = carry + side - fee2 - leftover
        tx2 = self.tx([(m1, carry), (m2, side)], [(ex_out, payout), (change, leftover)])
        return {
            "motif": "passthrough",
            "seed": m1,
            "txids": [tx1, tx2],
            "exchange_in": ex_in,
            "exchange_out": ex_out,
            "entity": entity,
        }

    def peeling(self, length: int, funded: list[dict]) -> dict:
        """Peel ``length`` payments; the first ones pay the extra inputs of ``funded`` motifs."""
        n = self.names
        seed = n.address()
        # the pool carries far more than the motifs it tops up
        value = self.amount() * 10 + 10 * sum(p["big"] for p in funded)
        holder = seed
        txids, payments = [], []
        for k in range(max(length, len(funded))):
            if k < len(funded):
                payee, pay = funded[k]["extra"], funded[k]["small"]
            else:
                payee, pay = n.address(), max(1, int(value * self.frac(0.01, 0.1)))
            fee = max(1, value // 2000)
            rest = value - pay - fee
            if rest <= 0:
                break
            change = n.address()
            txids.append(self.tx([(holder, value)], [(payee, pay), (change, rest)]))
            payments.append(payee)
            holder, value = change, rest
        return {"motif": "peeling", "seed": seed, "txids": txids, "payments": payments}

    def noise(self, count: int) -> None:
        pool = [self.names.address() for _ in range(max(4, count))]
        for _ in range(count):
            k_in = int(self.rng.integers(1, 3))
            k_out = int(self.rng.integers(1, 4))
            picks = self.rng.choice(len(pool), size=k_in + k_out, replace=False)
            ins = [(pool[i], self.amount()) for i in picks[:k_in]]
            outs = [(pool[i], self.amount()) for i in picks[k_in:]]
            self.tx(ins, outs)


def generate(spec: SynthSpec) -> Corpus:
    b = _Builder(spec)
    entities = [f"Exchange-{i + 1:02d}" for i in range(spec.exchange_pool)]
    plans = [b.passthrough_plan() for _ in range(spec.n_passthrough)]
    # motif j draws its extra input from chain j mod n_chains; without chains it is a fresh address
    funded: list[list[dict]] = [[] for _ in range(spec.n_peeling_chains)]
    for j, plan in enumerate(plans):
        if spec.n_peeling_chains:
            funded[j % spec.n_peeling_chains].append(plan)
            plan["chain"] = j % spec.n_peeling_chains
    truth = GroundTruth()
    labels = LabelDirectory()
    chain_sid: dict[int, int] = {}
    for c in range(spec.n_peeling_chains):
        s = b.peeling(spec.peeling_length, funded[c])
        s["id"] = chain_sid[c] = len(truth.structures)
        truth.structures.append(s)
    order = b.rng.permutation(len(plans)) if plans else []
    for j in order:
        plan = plans[int(j)]
        entity = entities[int(b.rng.integers(len(entities)))]
        s = b.passthrough(plan, entity)
        if "chain" in plan:
            s["funded_by"] = chain_sid[plan["chain"]]
        for addr in (s["exchange_in"], s["exchange_out"]):
            labels.add(addr, entity, Category.EXCHANGE)
            truth.exchange_rows.append([addr, entity, Category.EXCHANGE.value])
        s["id"] = len(truth.structures)
        truth.structures.append(s)
    truth.mixer_seeds = [s["seed"] for s in truth.structures]
    if spec.n_noise_txs:
        b.noise(spec.n_noise_txs)
    return Corpus(b.txs, SeedSet(tuple(truth.mixer_seeds)), labels, truth)


def write_corpus(corpus: Corpus, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "transactions": out / "transactions.jsonl",
        "labels": out / "labels.csv",
        "seeds": out / "seeds.txt",
        "ground_truth": out / "ground_truth.json",
    }
    paths["transactions"].write_text(dump_transactions(corpus.transactions))
    paths["labels"].write_text(corpus.labels.to_csv())
    paths["seeds"].write_text(corpus.seeds.to_text())
    paths["ground_truth"].write_text(corpus.truth.to_json())
    return paths
