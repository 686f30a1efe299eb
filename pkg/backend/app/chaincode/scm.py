"""
供应链管理 (SCM) 链码

供应商之间基于合同互相下单并更新库存; 两个分析查询 (供货天数、牛鞭系数)
扫描订单索引, 产生大读集. 所有记录以紧凑 JSON 存放在 "scm" 命名空间下:

    V/{vendor}  P/{product}  C/{contract}  O/{order}  I/{vendor}/{product}
    OIDX/{vendor}/{buy|sell}   订单 id 列表
    VIDX                       供应商 id 列表
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np
from pydantic import BaseModel

from app.chaincode.base import Chaincode
from app.infrastructure.error_handling_service import ChaincodeError
from app.schemas.scm import (
    ORDER_TRANSITIONS,
    Contract,
    Inventory,
    Order,
    OrderIndex,
    OrderSide,
    OrderStatus,
    VendorIndex,
)

if TYPE_CHECKING:
    from collections.abc import Sequence

    from app.chaincode.base import ChaincodeFn, SimulationContext

logger = logging.getLogger(__name__)

SCM_NAMESPACE = "scm"
DEMAND_WINDOW = 1000
VENDOR_INDEX_KEY = "VIDX"


def vendor_key(vendor: str) -> str:
    return f"V/{vendor}"


def product_key(product: str) -> str:
    return f"P/{product}"


def contract_key(contract: str) -> str:
    return f"C/{contract}"


def order_key(order: str) -> str:
    return f"O/{order}"


def inventory_key(vendor: str, product: str) -> str:
    return f"I/{vendor}/{product}"


def order_index_key(vendor: str, side: OrderSide) -> str:
    return f"OIDX/{vendor}/{side.value}"


class DaysOfSupply(BaseModel):
    vendor: str
    product: str
    inventory: int
    demand: int
    window_days: int
    days: float | None  # None 表示需求为零, 供货无限
    infinite: bool


class Bullwhip(BaseModel):
    coefficient: float
    vendors: int


def coefficient_of_variation(quantities: Sequence[int]) -> float | None:
    """总体标准差 / 均值; 无数据或均值为零时未定义"""
    if not quantities:
        return None
    arr = np.asarray(quantities, dtype=np.float64)
    mean = float(arr.mean())
    if mean <= 0:
        return None
    return float(arr.std()) / mean


def _text(arg: bytes) -> str:
    return arg.decode()


def _positive_int(arg: bytes, name: str) -> int:
    value = int(arg.decode())
    if value <= 0:
        raise ChaincodeError(f"{name} must be > 0")
    return value


def _expect(args: tuple[bytes, ...], n: int, fn: str) -> None:
    if len(args) != n:
        raise ChaincodeError(f"{fn} expects {n} arguments, got {len(args)}")


class ScmChaincode(Chaincode):
    chaincode_id = SCM_NAMESPACE

    def functions(self) -> dict[str, ChaincodeFn]:
        return {
            "load": self.load,
            "create_contract": self.create_contract,
            "place_order": self.place_order,
            "update_order": self.update_order,
            "days_of_supply": self.days_of_supply,
            "bullwhip": self.bullwhip,
        }

    @staticmethod
    def load(ctx: SimulationContext, args: tuple[bytes, ...]) -> None:
        """初始数据装载: 盲写 key/value 对"""
        if not args or len(args) % 2:
            raise ChaincodeError("load expects key/value pairs")
        for key, value in zip(args[::2], args[1::2]):
            ctx.put_state(key, value)

    @staticmethod
    def create_contract(ctx: SimulationContext, args: tuple[bytes, ...]) -> bytes:
        """args: contract_id, buyer, seller, product"""
        _expect(args, 4, "create_contract")
        contract_id, buyer, seller, product = map(_text, args)
        if buyer == seller:
            raise ChaincodeError("buyer and seller must differ")
        existing, buyer_rec, seller_rec, product_rec = ctx.get_states(
            [
                contract_key(contract_id),
                vendor_key(buyer),
                vendor_key(seller),
                product_key(product),
            ]
        )
        if existing is not None:
            raise ChaincodeError(f"contract {contract_id} already exists")
        if buyer_rec is None or seller_rec is None:
            raise ChaincodeError("unknown vendor")
        if product_rec is None:
            raise ChaincodeError(f"unknown product {product}")
        contract = Contract(
            id=contract_id, buyer_vendor=buyer, seller_vendor=seller, product=product
        )
        ctx.put_state(contract_key(contract_id), contract.to_bytes())
        return contract_id.encode()

    @staticmethod
    def place_order(ctx: SimulationContext, args: tuple[bytes, ...]) -> bytes:
        """args: order_id, contract_id, quantity, day

        下单时即扣减卖方库存.
        """
        _expect(args, 4, "place_order")
        order_id, contract_id = _text(args[0]), _text(args[1])
        quantity = _positive_int(args[2], "quantity")
        day = int(args[3].decode())

        existing, raw_contract = ctx.get_states(
            [order_key(order_id), contract_key(contract_id)]
        )
        if raw_contract is None:
            raise ChaincodeError(f"contract {contract_id} does not exist")
        if existing is not None:
            raise ChaincodeError(f"order {order_id} already exists")
        contract = Contract.from_bytes(raw_contract)

        inv_key = inventory_key(contract.seller_vendor, contract.product)
        buy_idx_key = order_index_key(contract.buyer_vendor, OrderSide.BUY)
        sell_idx_key = order_index_key(contract.seller_vendor, OrderSide.SELL)
        raw_inv, raw_buy_idx, raw_sell_idx = ctx.get_states(
            [inv_key, buy_idx_key, sell_idx_key]
        )
        stock = Inventory.from_bytes(raw_inv).quantity if raw_inv is not None else 0
        if stock < quantity:
            raise ChaincodeError(
                f"insufficient inventory at {contract.seller_vendor}/{contract.product}: "
                f"{stock} < {quantity}"
            )

        order = Order(
            id=order_id,
            contract=contract_id,
            buyer_vendor=contract.buyer_vendor,
            seller_vendor=contract.seller_vendor,
            product=contract.product,
            quantity=quantity,
            status=OrderStatus.PLACED,
            day=day,
        )
        ctx.put_state(order_key(order_id), order.to_bytes())
        ctx.put_state(
            inv_key,
            Inventory(
                vendor=contract.seller_vendor,
                product=contract.product,
                quantity=stock - quantity,
            ).to_bytes(),
        )
        for idx_key, raw in ((buy_idx_key, raw_buy_idx), (sell_idx_key, raw_sell_idx)):
            index = OrderIndex.from_bytes(raw) if raw is not None else OrderIndex()
            ctx.put_state(
                idx_key, OrderIndex(order_ids=[*index.order_ids, order_id]).to_bytes()
            )
        return order_id.encode()

    @staticmethod
    def update_order(ctx: SimulationContext, args: tuple[bytes, ...]) -> bytes:
        """args: order_id, new_status; DELIVERED 时增加买方库存"""
        _expect(args, 2, "update_order")
        order_id = _text(args[0])
        try:
            new_status = OrderStatus(_text(args[1]))
        except ValueError:
            raise ChaincodeError(f"unknown order status {args[1]!r}") from None

        raw = ctx.get_state(order_key(order_id))
        if raw is None:
            raise ChaincodeError(f"order {order_id} does not exist")
        order = Order.from_bytes(raw)
        if ORDER_TRANSITIONS.get(order.status) is not new_status:
            raise ChaincodeError(
                f"illegal transition {order.status.value} -> {new_status.value}"
            )
        ctx.put_state(
            order_key(order_id), order.model_copy(update={"status": new_status}).to_bytes()
        )

        if new_status is OrderStatus.DELIVERED:
            inv_key = inventory_key(order.buyer_vendor, order.product)
            raw_inv = ctx.get_state(inv_key)
            stock = Inventory.from_bytes(raw_inv).quantity if raw_inv is not None else 0
            ctx.put_state(
                inv_key,
                Inventory(
                    vendor=order.buyer_vendor,
                    product=order.product,
                    quantity=stock + order.quantity,
                ).to_bytes(),
            )
        return new_status.value.encode()

    @staticmethod
    def days_of_supply(ctx: SimulationContext, args: tuple[bytes, ...]) -> bytes:
        """args: vendor, product

        需求窗口是该供应商卖方索引中最近 DEMAND_WINDOW 笔订单;
        窗口天数 = 窗口内该产品订单的最大日 - 最小日 + 1.
        """
        _expect(args, 2, "days_of_supply")
        vendor, product = _text(args[0]), _text(args[1])
        raw_vendor, raw_product, raw_inv, raw_idx = ctx.get_states(
            [
                vendor_key(vendor),
                product_key(product),
                inventory_key(vendor, product),
                order_index_key(vendor, OrderSide.SELL),
            ]
        )
        if raw_vendor is None or raw_product is None:
            raise ChaincodeError(f"unknown vendor/product {vendor}/{product}")
        stock = Inventory.from_bytes(raw_inv).quantity if raw_inv is not None else 0
        order_ids = OrderIndex.from_bytes(raw_idx).order_ids if raw_idx is not None else []
        window = order_ids[-DEMAND_WINDOW:]

        orders = [
            Order.from_bytes(raw)
            for raw in ctx.get_states([order_key(o) for o in window])
            if raw is not None
        ]
        relevant = [o for o in orders if o.product == product]
        demand = sum(o.quantity for o in relevant)
        if demand == 0:
            result = DaysOfSupply(
                vendor=vendor,
                product=product,
                inventory=stock,
                demand=0,
                window_days=0,
                days=None,
                infinite=True,
            )
        else:
            days_seen = [o.day for o in relevant]
            window_days = max(days_seen) - min(days_seen) + 1
            result = DaysOfSupply(
                vendor=vendor,
                product=product,
                inventory=stock,
                demand=demand,
                window_days=window_days,
                days=stock / (demand / window_days),
                infinite=False,
            )
        return result.model_dump_json().encode()

    @staticmethod
    def bullwhip(ctx: SimulationContext, args: tuple[bytes, ...]) -> bytes:
        """各供应商 cv(下单量)/cv(收单量) 的算术平均; 读集覆盖全部被扫描的订单"""
        _expect(args, 0, "bullwhip")
        raw_vendors = ctx.get_state(VENDOR_INDEX_KEY)
        if raw_vendors is None:
            raise ChaincodeError("no vendors registered")
        vendors = VendorIndex.from_bytes(raw_vendors).vendor_ids

        index_keys = [
            order_index_key(v, side) for v in vendors for side in (OrderSide.BUY, OrderSide.SELL)
        ]
        indexes = [
            OrderIndex.from_bytes(raw).order_ids if raw is not None else []
            for raw in ctx.get_states(index_keys)
        ]
        all_ids = list(dict.fromkeys(o for ids in indexes for o in ids))
        quantities = {
            o.id: o.quantity
            for o in (
                Order.from_bytes(raw)
                for raw in ctx.get_states([order_key(i) for i in all_ids])
                if raw is not None
            )
        }

        ratios = []
        for i, _vendor in enumerate(vendors):
            bought, sold = indexes[2 * i], indexes[2 * i + 1]
            cv_out = coefficient_of_variation([quantities[o] for o in bought if o in quantities])
            cv_in = coefficient_of_variation([quantities[o] for o in sold if o in quantities])
            if cv_out is None or cv_in is None or cv_in <= 0:
                continue
            ratios.append(cv_out / cv_in)
        if not ratios:
            raise ChaincodeError("no vendor has a defined bullwhip ratio")
        return Bullwhip(coefficient=float(np.mean(ratios)), vendors=len(ratios)).model_dump_json().encode()
