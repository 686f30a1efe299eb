from __future__ import annotations

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator

# --- Enums ---


class OrderStatus(str, Enum):
    PLACED = "PLACED"
    SHIPPED = "SHIPPED"
    DELIVERED = "DELIVERED"


# 合法的状态迁移
ORDER_TRANSITIONS: dict[OrderStatus, OrderStatus] = {
    OrderStatus.PLACED: OrderStatus.SHIPPED,
    OrderStatus.SHIPPED: OrderStatus.DELIVERED,
}


class OrderSide(str, Enum):
    BUY = "buy"
    SELL = "sell"


# --- Ledger records (stored as canonical JSON values) ---


class ScmRecord(BaseModel):
    """所有供应链记录的基类; 序列化为紧凑 JSON, 字段按声明顺序输出"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    def to_bytes(self) -> bytes:
        return self.model_dump_json().encode()

    @classmethod
    def from_bytes(cls, data: bytes):
        return cls.model_validate_json(data)


class Vendor(ScmRecord):
    id: str
    name: str


class Product(ScmRecord):
    id: str
    name: str


class Contract(ScmRecord):
    id: str
    buyer_vendor: str
    seller_vendor: str
    product: str

    @model_validator(mode="after")
    def check_parties(self) -> Contract:
        if self.buyer_vendor == self.seller_vendor:
            raise ValueError("buyer and seller must differ")
        return self


class Order(ScmRecord):
    """订单; 买卖双方和产品从合同冗余拷贝, 便于分析查询只读订单本身"""

    id: str
    contract: str
    buyer_vendor: str
    seller_vendor: str
    product: str
    quantity: int = Field(gt=0)
    status: OrderStatus = OrderStatus.PLACED
    day: int = Field(ge=0)


class Inventory(ScmRecord):
    vendor: str
    product: str
    quantity: int = Field(ge=0)


class OrderIndex(ScmRecord):
    """某个供应商某一侧 (买/卖) 的订单 id 列表, 按下单顺序"""

    order_ids: list[str] = Field(default_factory=list)


class VendorIndex(ScmRecord):
    vendor_ids: list[str] = Field(default_factory=list)


# --- Bootstrap dataset ---


class ScmDataset(BaseModel):
    """基准测试的初始数据集"""

    vendors: list[Vendor]
    products: list[Product]
    contracts: list[Contract]
    inventories: list[Inventory]
