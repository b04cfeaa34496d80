"""A tiny shop used as a localisation fixture."""

from shop.cart import Cart
from shop.inventory import Inventory

VERSION = "0.3.1"
