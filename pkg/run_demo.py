#!/usr/bin/env python3
"""
Local desk-scale run of the whole pipeline
synth -> compare on raw features -> train-ae -> compare on latent traces
"""

import os
import sys

# Add current directory to Python path (same as in app.py)
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

CONFIG = os.path.join(os.path.dirname(os.path.abspath(__file__)), "configs", "desk_benchmark.json")

STAGES = [
    ["synth", "--config", CONFIG],
    ["compare", "--config", CONFIG, "--out", "runs/desk_benchmark/raw"],
    ["train-ae", "--config", CONFIG],
    ["compare", "--config", CONFIG, "--model", "runs/desk_benchmark/model.oodae",
     "--out", "runs/desk_benchmark/latent"],
]

print("🚀 Running oodkit desk-scale benchmark...")
print(f"Config: {CONFIG}")

try:
    from app import cli

    for args in STAGES:
        print(f"\n▶️  oodkit {' '.join(args[:1] + args[3:])}")
        code = cli.main(args=["--log-level", "WARNING"] + args, prog_name="oodkit", standalone_mode=False)
        if code:
            print(f"❌ Stage {args[0]} failed with exit code {code}")
            sys.exit(code)
    print("\n✅ Done. AUC tables are in runs/desk_benchmark/raw and runs/desk_benchmark/latent")

except ImportError as e:
    print(f"❌ Import failed: {e}")
    print("🔍 Install the requirements with 'pip install -r requirements.txt'")
    sys.exit(1)
