"""Run the full pipeline on the bundled synthetic probe and print the report.

Equivalent to `ctxprobe run --config fixtures/run_config.json`, but built
up through the library so each stage is visible.

    python3 demos/03_full_run_and_report.py
"""

import json
import os
import tempfile

from ctxprobe import runner
from ctxprobe.synthetic import make_synthetic_probe

with tempfile.TemporaryDirectory() as workdir:
    probe = make_synthetic_probe()
    paths = probe.write(os.path.join(workdir, "probe"))
    print("expected outcomes from the generator:")
    for key in ("p1_none", "p1_oracle_two_segment", "p1_adversarial_two_segment",
                "p1_adversarial_one_segment", "p1_generated_two_segment"):
        print(f"  {key}: {probe.expected[key]}")

    config = runner.RunConfig.from_dict(
        {
            "facts": [{"path": paths["facts"], "corpus": "Other"}],
            "relations": paths["relations"],
            "vocab": paths["vocab"],
            "corpus": paths["corpus"],
            "generated": paths["generated"],
            "strategies": ["oracle", "retrieved", "adversarial", "generated"],
            "mode": "two_segment",
            "scorer": {"name": "copy"},
            "seed": 7,
            "recall_k_max": 10,
            "out_dir": os.path.join(workdir, "out"),
        }
    )
    manifest = runner.run(config)
    print(f"\nscored {manifest['n_facts']} facts; artifacts:")
    for name in manifest["artifacts"]:
        print(f"  {name}")

    with open(os.path.join(config.out_dir, "report", "report.json")) as fh:
        report = json.load(fh)

    print("\nP@1 by strategy:")
    for name, summary in sorted(report["runs"].items()):
        nsp = summary["nsp_rate_percent"]
        nsp_str = "   -" if nsp is None else f"{nsp:5.1f}"
        print(f"  {name:12s} P@1 = {summary['per_corpus_p1']['Other']:5.1f}   "
              f"%next-sentence = {nsp_str}")

    print("\nrecall@k of the retriever:")
    for k, recall in report["recall_curve"]:
        print(f"  k={k}: {recall:.1f}%")

    flips = report["runs"]["retrieved"]["better_worse"]
    print("\nprediction flips for the retrieved run (vs no context):")
    print(f"  better: {flips['better_total']:.1f}%  "
          f"(answer present {flips['better_present']:.1f}%, absent {flips['better_absent']:.1f}%)")
    print(f"  worse:  {flips['worse_total']:.1f}%")
