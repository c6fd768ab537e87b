"""One config, full run: synthesize, split, train, score, report.

Generates a small labeled dataset, then drives every stage through
run_pipeline twice to show the content-addressed caching: the second call
reuses all artifacts. Outputs land in demo_out/pipeline/.
"""

import shutil
import time
from pathlib import Path

from drowsae import (
    ExperimentConfig,
    SyntheticSpec,
    WindowSpec,
    generate_synthetic,
    run_pipeline,
)

out_root = Path(__file__).resolve().parent / "demo_out" / "pipeline"
if out_root.exists():
    shutil.rmtree(out_root)
out_root.mkdir(parents=True)

# Narrow jitter keeps the normal videos close to one shared carrier, so a
# small model trained briefly can already tell held-out normal from anomaly.
spec = SyntheticSpec(
    n_normal_videos=6,
    n_anomaly_videos=3,
    frames_per_video=160,
    segments_per_video=1,
    segment_frac=0.4,
    amp_jitter=0.05,
    offset_jitter=0.1,
    phase_jitter=0.1,
)
manifest = generate_synthetic(spec, seed=8, out_dir=out_root / "data")
print("dataset manifest:", manifest)

cfg = ExperimentConfig(
    seed=8,
    manifest=manifest,
    output_dir=out_root / "run",
    window=WindowSpec(16, 2, 8),
    hidden=16,
    epochs=150,
    learning_rate=0.05,
    grad_clip=10.0,
    train_normal_rate=1.0,
    normal_rates=(0.5, 1.0),
    anomaly_rates=(0.5, 1.0),
)

t0 = time.time()
result = run_pipeline(cfg)
print(f"\nfirst run {time.time() - t0:.1f}s, stages ran:",
      {k: v for k, v in result.stages_run.items()})

t0 = time.time()
result = run_pipeline(cfg)
print(f"second run {time.time() - t0:.1f}s, stages ran:",
      {k: v for k, v in result.stages_run.items()})

print("\nartifacts:")
for p in sorted(result.output_dir.rglob("*")):
    if p.is_file():
        print("  ", p.relative_to(out_root))

print("\nreport:")
print((result.report_dir / "report.txt").read_text())
