class OutOfStock(Exception):
    pass


class Inventory:
    def __init__(self):
        self.stock = {}

    def restock(self, sku, quantity):
        self.stock[sku] = self.stock.get(sku, 0) + quantity

    def reserve(self, sku, quantity):
        available = self.stock.get(sku, 0)
        if quantity > available:
            raise OutOfStock(sku)
        self.stock[sku] = available - quantity

    def release(self, sku, quantity):
        self.stock[sku] = self.stock.get(sku, 0) - quantity
