"""
Recording a training run and replaying it bit-for-bit
=====================================================

Every record the trainer hands to the miner can be logged as one JSONL
line, and the miner is a pure function of (config, record stream). So a
recorded run can be replayed offline: same config + same log = the same
selections, byte for byte. That is what makes selection behaviour
debuggable after the fact.
"""

import tempfile
from pathlib import Path

from sohem import MiningConfig
from sohem.cli import cmd_replay, cmd_stats, config_to_text
from sohem.harness import TrainerSpec, simulation_profile, train

workdir = Path(tempfile.mkdtemp(prefix="sohem-replay-"))
record_log = workdir / "records.jsonl"
live_selections = workdir / "selections.jsonl"
config_file = workdir / "miner.cfg"
replayed = workdir / "replayed.jsonl"

config = MiningConfig(
    batch_size=8,
    selection_mode="strata",
    schedule_profile=simulation_profile("voc07", 200),
)
spec = TrainerSpec(iterations=200, eval_scenes=4)

# 1. train, teeing both streams to disk
with open(record_log, "w") as rec, open(live_selections, "w") as sel:
    train(config, spec, seed=42, record_sink=rec, selection_sink=sel)
n_lines = sum(1 for _ in open(record_log))
print(f"recorded {n_lines} records over {spec.iterations} iterations -> {record_log}")

# 2. persist the exact mining configuration next to the log
config_file.write_text(config_to_text(config))
print(f"wrote config -> {config_file}")

# 3. replay the log through a fresh miner
code = cmd_replay(str(record_log), str(config_file), str(replayed))
assert code == 0

match = replayed.read_bytes() == live_selections.read_bytes()
print(f"replay reproduced the live selections byte-for-byte: {match}")
assert match

# 4. the same log also feeds the windowed loss report
print("\nwindowed means over the log (50-iteration windows):")
cmd_stats(str(record_log), window=50)
