from datetime import date, timedelta

from duotrader.marketdata import Bar


def make_bar(symbol="XYZ", day=date(2020, 1, 2), close=100.0, open_=None,
             high=None, low=None, volume=1000):
    open_ = close if open_ is None else open_
    high = max(open_, close) if high is None else high
    low = min(open_, close) if low is None else low
    return Bar(symbol, day, open_, high, low, close, volume)


def make_bars(symbol, closes, start=date(2020, 1, 2), volumes=None):
    """One bar per close on consecutive weekdays."""
    bars = []
    day = start
    for i, close in enumerate(closes):
        volume = 1000 if volumes is None else volumes[i]
        bars.append(make_bar(symbol, day, float(close), volume=volume))
        day = day + timedelta(days=1)
        while day.weekday() >= 5:
            day = day + timedelta(days=1)
    return bars
