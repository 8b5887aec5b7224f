"""Fetch the mainnet transaction fixtures that are not checked in.

Reads tests/fixtures/manifest.json, downloads every transaction from the
"required" list that has no <txid>.hex file yet, verifies the double-SHA256
of the raw bytes against the requested txid, and writes the lowercase hex
next to the manifest. Needs outbound HTTPS; run it once on a connected
machine, then commit the new files or carry them over to the offline
environment.

Usage: python scripts/fetch_mainnet_fixtures.py [--force]
"""

import argparse
import json
import sys
import urllib.error
import urllib.request
from pathlib import Path

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

# independent endpoints serving raw transaction hex by txid
SOURCES = (
    "https://blockstream.info/api/tx/{txid}/hex",
    "https://mempool.space/api/tx/{txid}/hex",
)


def _fetch(txid: str) -> bytes:
    last_error = None
    for template in SOURCES:
        url = template.format(txid=txid)
        try:
            with urllib.request.urlopen(url, timeout=30) as response:
                return bytes.fromhex(response.read().decode("ascii").strip())
        except (urllib.error.URLError, ValueError, OSError) as exc:
            last_error = f"{url}: {exc}"
    raise RuntimeError(f"could not fetch {txid}: {last_error}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--force", action="store_true",
                        help="re-download fixtures that already exist")
    args = parser.parse_args()

    sys.path.insert(0, str(FIXTURES.parent.parent / "src"))
    from burntrace.wire import parse_transaction, serialize_transaction, txid as tx_hash

    with open(FIXTURES / "manifest.json") as fh:
        manifest = json.load(fh)

    failures = 0
    for wanted in manifest["required"]:
        path = FIXTURES / f"{wanted}.hex"
        if path.exists() and not args.force:
            print(f"present  {wanted}")
            continue
        try:
            raw = _fetch(wanted)
            tx = parse_transaction(raw)
            got = tx_hash(tx).display
            if got != wanted:
                raise RuntimeError(f"fetched bytes hash to {got}, wanted {wanted}")
            if serialize_transaction(tx) != raw:
                raise RuntimeError("round-trip mismatch on fetched bytes")
        except Exception as exc:
            print(f"FAILED   {wanted}: {exc}", file=sys.stderr)
            failures += 1
            continue
        path.write_text(raw.hex() + "\n")
        print(f"fetched  {wanted} ({len(raw)} bytes)")
    if failures:
        print(f"{failures} fixture(s) could not be fetched", file=sys.stderr)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
