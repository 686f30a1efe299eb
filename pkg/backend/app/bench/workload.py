"""
工作负载生成: YCSB 风格键值操作与供应链 (SCM) 操作

操作流完全由种子决定. 操作类型按配比精确计数后随机打乱, 第 i 个操作
分配给客户端 i % clients.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
from pydantic import BaseModel, Field, model_validator

from app.chaincode.base import Proposal
from app.chaincode.kv import KV_NAMESPACE
from app.chaincode.scm import (
    SCM_NAMESPACE,
    VENDOR_INDEX_KEY,
    contract_key,
    inventory_key,
    product_key,
    vendor_key,
)
from app.schemas.scm import (
    Contract,
    Inventory,
    OrderStatus,
    Product,
    ScmDataset,
    Vendor,
    VendorIndex,
)

logger = logging.getLogger(__name__)

LOAD_BATCH = 100
INITIAL_INVENTORY = 10_000
MAX_ORDER_QUANTITY = 10
SCM_DAYS = 365

# 交易型操作内部的配比
SCM_TX_SPLIT = {"create_contract": 0.1, "place_order": 0.5, "update_order": 0.4}


class WorkloadKind(str, Enum):
    YCSB = "ycsb"
    SCM = "scm"


def scm_mix(tx_fraction: float) -> dict[str, float]:
    analytics = (1.0 - tx_fraction) / 2
    mix = {name: share * tx_fraction for name, share in SCM_TX_SPLIT.items()}
    mix.update({"days_of_supply": analytics, "bullwhip": analytics})
    return mix


class WorkloadSpec(BaseModel):
    kind: WorkloadKind
    op_mix: dict[str, float]
    key_space: int = Field(default=10_000, gt=0)
    working_set_fraction: float = Field(default=1.0, gt=0, le=1)
    value_size: int = Field(default=1000, gt=0)
    total_ops: int = Field(default=10_000, gt=0)
    clients: int = Field(default=1, gt=0)
    seed: int = Field(default=0, ge=0)
    vendors: int = Field(default=50, ge=2)
    products: int = Field(default=500, gt=0)
    contracts: int = Field(default=6000, gt=0)

    @model_validator(mode="after")
    def check_mix(self) -> WorkloadSpec:
        if any(v < 0 for v in self.op_mix.values()):
            raise ValueError("op_mix fractions must be >= 0")
        if abs(sum(self.op_mix.values()) - 1.0) > 1e-6:
            raise ValueError("op_mix fractions must sum to 1")
        return self

    @classmethod
    def preset(cls, name: str, **kwargs: Any) -> WorkloadSpec:
        """ycsb90 | ycsb50 | scm95 | scm99"""
        presets = {
            "ycsb90": (WorkloadKind.YCSB, {"insert": 0.9, "read": 0.1}),
            "ycsb50": (WorkloadKind.YCSB, {"read": 0.5, "update": 0.5}),
            "scm95": (WorkloadKind.SCM, scm_mix(0.95)),
            "scm99": (WorkloadKind.SCM, scm_mix(0.99)),
        }
        if name not in presets:
            raise ValueError(f"unknown workload {name!r}, expected one of {sorted(presets)}")
        kind, mix = presets[name]
        return cls(kind=kind, op_mix=mix, **kwargs)

    @property
    def working_set(self) -> int:
        return max(1, int(self.key_space * self.working_set_fraction))


@dataclass(frozen=True)
class Operation:
    index: int
    client: int
    op_type: str
    proposal: Proposal


@dataclass(frozen=True)
class Workload:
    spec: WorkloadSpec
    bootstrap: list[Proposal]
    operations: list[Operation]
    dataset: ScmDataset | None = None

    def for_client(self, client: int) -> list[Operation]:
        return [op for op in self.operations if op.client == client]


def exact_counts(mix: dict[str, float], total: int) -> dict[str, int]:
    """按最大余数法把配比换成总和恰为 total 的整数计数"""
    raw = {name: frac * total for name, frac in mix.items()}
    counts = {name: int(value) for name, value in raw.items()}
    short = total - sum(counts.values())
    for name in sorted(raw, key=lambda n: raw[n] - counts[n], reverse=True)[:short]:
        counts[name] += 1
    return counts


def op_sequence(mix: dict[str, float], total: int, rng: np.random.Generator) -> list[str]:
    names = [name for name, count in exact_counts(mix, total).items() for _ in range(count)]
    return [names[i] for i in rng.permutation(len(names))]


def ycsb_key(i: int) -> bytes:
    return f"user{i:08d}".encode()


def _load_batches(pairs: list[tuple[bytes, bytes]], chaincode_id: str) -> list[Proposal]:
    batches = []
    for start in range(0, len(pairs), LOAD_BATCH):
        args = tuple(part for pair in pairs[start : start + LOAD_BATCH] for part in pair)
        batches.append(Proposal(chaincode_id, "load", args))
    return batches


def gen_ycsb(spec: WorkloadSpec) -> Workload:
    if spec.kind is not WorkloadKind.YCSB:
        raise ValueError("gen_ycsb needs a YCSB spec")
    rng = np.random.default_rng(spec.seed)

    def value() -> bytes:
        return rng.bytes(spec.value_size)

    bootstrap = _load_batches([(ycsb_key(i), value()) for i in range(spec.key_space)], KV_NAMESPACE)
    keys = rng.integers(0, spec.working_set, size=spec.total_ops)
    ops = []
    for i, op_type in enumerate(op_sequence(spec.op_mix, spec.total_ops, rng)):
        key = ycsb_key(int(keys[i]))
        args = (key,) if op_type in ("read", "delete") else (key, value())
        ops.append(Operation(i, i % spec.clients, op_type, Proposal(KV_NAMESPACE, op_type, args)))
    logger.info(
        "生成 YCSB 负载: %d 个操作, 工作集 %d/%d 键, %d 个装载交易",
        len(ops),
        spec.working_set,
        spec.key_space,
        len(bootstrap),
    )
    return Workload(spec, bootstrap, ops)


def scm_dataset(spec: WorkloadSpec, rng: np.random.Generator) -> ScmDataset:
    vendors = [Vendor(id=f"v{i}", name=f"vendor-{i}") for i in range(spec.vendors)]
    products = [Product(id=f"p{i}", name=f"product-{i}") for i in range(spec.products)]
    contracts = []
    for i in range(spec.contracts):
        buyer, seller = rng.choice(spec.vendors, size=2, replace=False)
        contracts.append(
            Contract(
                id=f"k{i}",
                buyer_vendor=vendors[int(buyer)].id,
                seller_vendor=vendors[int(seller)].id,
                product=products[int(rng.integers(spec.products))].id,
            )
        )
    stocked = dict.fromkeys((c.seller_vendor, c.product) for c in contracts)
    inventories = [Inventory(vendor=v, product=p, quantity=INITIAL_INVENTORY) for v, p in stocked]
    return ScmDataset(vendors=vendors, products=products, contracts=contracts, inventories=inventories)


def _scm_bootstrap(dataset: ScmDataset) -> list[Proposal]:
    pairs = [(vendor_key(v.id).encode(), v.to_bytes()) for v in dataset.vendors]
    pairs.append(
        (VENDOR_INDEX_KEY.encode(), VendorIndex(vendor_ids=[v.id for v in dataset.vendors]).to_bytes())
    )
    pairs += [(product_key(p.id).encode(), p.to_bytes()) for p in dataset.products]
    pairs += [(contract_key(c.id).encode(), c.to_bytes()) for c in dataset.contracts]
    pairs += [(inventory_key(i.vendor, i.product).encode(), i.to_bytes()) for i in dataset.inventories]
    return _load_batches(pairs, SCM_NAMESPACE)


@dataclass
class _ClientOrders:
    """客户端自己下过的订单及其下一步状态"""

    counter: int = 0
    contract_counter: int = 0
    pending: dict[str, OrderStatus] = field(default_factory=dict)


def gen_scm(
    spec: WorkloadSpec,
    tx_fraction: float | None = None,
) -> Workload:
    """初始数据集 + 操作流. 订单 id 按客户端划分, 冲突只来自库存等共享键"""
    if spec.kind is not WorkloadKind.SCM:
        raise ValueError("gen_scm needs an SCM spec")
    mix = scm_mix(tx_fraction) if tx_fraction is not None else spec.op_mix
    rng = np.random.default_rng(spec.seed)
    dataset = scm_dataset(spec, rng)
    bootstrap = _scm_bootstrap(dataset)
    contracts = dataset.contracts
    states = [_ClientOrders() for _ in range(spec.clients)]

    ops = []
    for i, op_type in enumerate(op_sequence(mix, spec.total_ops, rng)):
        client = i % spec.clients
        own = states[client]
        if op_type == "update_order" and not own.pending:
            op_type = "place_order"

        if op_type == "create_contract":
            own.contract_counter += 1
            base = contracts[int(rng.integers(len(contracts)))]
            args = (
                f"c{client}-k{own.contract_counter}",
                base.buyer_vendor,
                base.seller_vendor,
                base.product,
            )
        elif op_type == "place_order":
            own.counter += 1
            order_id = f"c{client}-o{own.counter}"
            contract = contracts[int(rng.integers(len(contracts)))]
            quantity = int(rng.integers(1, MAX_ORDER_QUANTITY + 1))
            args = (order_id, contract.id, str(quantity), str(int(rng.integers(SCM_DAYS))))
            own.pending[order_id] = OrderStatus.SHIPPED
        elif op_type == "update_order":
            order_id = sorted(own.pending)[int(rng.integers(len(own.pending)))]
            status = own.pending[order_id]
            args = (order_id, status.value)
            if status is OrderStatus.SHIPPED:
                own.pending[order_id] = OrderStatus.DELIVERED
            else:
                del own.pending[order_id]
        elif op_type == "days_of_supply":
            contract = contracts[int(rng.integers(len(contracts)))]
            args = (contract.seller_vendor, contract.product)
        else:
            args = ()
        proposal = Proposal(SCM_NAMESPACE, op_type, tuple(a.encode() for a in args))
        ops.append(Operation(i, client, op_type, proposal))

    logger.info(
        "生成 SCM 负载: %d 供应商, %d 产品, %d 合同, %d 个操作",
        len(dataset.vendors),
        len(dataset.products),
        len(contracts),
        len(ops),
    )
    return Workload(spec, bootstrap, ops, dataset)


def generate(spec: WorkloadSpec) -> Workload:
    return gen_ycsb(spec) if spec.kind is WorkloadKind.YCSB else gen_scm(spec)
