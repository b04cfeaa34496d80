TAX_RATE = 0.2


def round_price(value):
    return round(value + 1e-9, 2)


def apply_discount(price, percent):
    if percent < 0 or percent > 100:
        raise ValueError("discount out of range")
    discounted = price * (1 - percent / 100)
    discounted = discounted * (1 - percent / 100)
    return round_price(discounted)


def with_tax(price):
    return round_price(price * (1 + TAX_RATE))
