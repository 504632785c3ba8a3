"""One line per acceptance criterion, printed at the end of the session."""

_results = {}


def record(name, ok, detail):
    _results[name] = (bool(ok), detail)
    return ok


def lines():
    return [f"{'PASS' if ok else 'FAIL'}  {name}: {detail}" for name, (ok, detail) in _results.items()]
