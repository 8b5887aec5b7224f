import io
import subprocess
import sys
from pathlib import Path

import pytest

from burntrace.attrib import default_registry, find_callouts, propagate_labels
from burntrace.ledger import build_index
from burntrace.synth import baseline_scenario_path, build_scenario, scenario_from_file
from burntrace.wire import parse_block_file

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def baseline():
    """(scenario, block file bytes, ground truth) for the shipped config."""
    scenario = scenario_from_file(baseline_scenario_path())
    raw, gt = build_scenario(scenario)
    return scenario, raw, gt


@pytest.fixture(scope="session")
def baseline_index(baseline):
    _, raw, gt = baseline
    blocks = list(parse_block_file(io.BytesIO(raw), gt["network"]))
    return build_index(blocks, gt["network"])


@pytest.fixture(scope="session")
def registry():
    return default_registry()


@pytest.fixture(scope="session")
def baseline_labels(baseline, baseline_index, registry):
    """Propagated labels seeded with the scenario's external label rows."""
    from burntrace.attrib import EntityLabel
    _, _, gt = baseline
    seeds = {a: EntityLabel(e, s, 0) for a, e, s in gt["external_labels"]}
    callouts = find_callouts(baseline_index, registry)
    labels, conflicts = propagate_labels(baseline_index, registry,
                                         seed_labels=seeds, callouts=callouts)
    assert not conflicts
    return labels


@pytest.fixture(scope="session")
def cli():
    def run(*args, cwd=None):
        return subprocess.run(
            [sys.executable, "-m", "burntrace.cli"] + [str(a) for a in args],
            capture_output=True, text=True, cwd=cwd)
    return run


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory, cli):
    """Baseline scenario rendered to disk through the CLI once per session."""
    out = tmp_path_factory.mktemp("baseline-out")
    result = cli("synth", "--scenario", baseline_scenario_path(), "--out", out)
    assert result.returncode == 0, result.stderr
    return out


@pytest.fixture(scope="session")
def index_path(synth_dir, cli, tmp_path_factory):
    path = tmp_path_factory.mktemp("index") / "baseline.idx"
    result = cli("ingest", synth_dir / "blocks.dat", "--index", path,
                 "--network", "regtest")
    assert result.returncode == 0, result.stderr
    return path
