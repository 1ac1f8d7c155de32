import math


def format_time(time: float):
    return "{:,.2f} s".format(time).replace(",", "'")


def format_float(value: float, digits: int = 3):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "n/a"
    return f"{value:.{digits}e}" if value != 0 and (abs(value) < 1e-3 or abs(value) >= 1e4) else f"{value:.{digits}f}"


def format_verdict(value) -> str:
    return "indeterminate" if value is None else str(bool(value)).lower()
