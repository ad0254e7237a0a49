"""Run manifests: enough provenance to reproduce a CLI run exactly."""

import datetime
import hashlib
import json
import platform
import sys


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command, argv, seeds, inputs=None, artifacts=None,
                   wall_clock_s=0.0, extra=None):
    from . import __version__
    import numpy

    doc = {
        "command": command,
        "argv": list(argv),
        "seeds": seeds,
        "input_hashes": {p: sha256_file(p) for p in (inputs or [])},
        "artifact_hashes": {p: sha256_file(p) for p in (artifacts or [])},
        "versions": {
            "usguide": __version__,
            "numpy": numpy.__version__,
            "python": sys.version.split()[0],
            "platform": platform.platform(),
        },
        "wall_clock_s": wall_clock_s,
        "timestamp_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    return doc
