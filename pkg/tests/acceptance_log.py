"""Shared registry of acceptance outcomes, printed at the end of the session."""

RESULTS = {}


def record(key, ok, detail):
    RESULTS[key] = (bool(ok), detail)
    print(f"{key} {'PASS' if ok else 'FAIL'}: {detail}")
    return ok
