"""Run the full command-line pipeline on the small demo configuration.

synth -> train -> infer (50-step and 4-step) -> eval -> ablate, each into its
own directory under ``out_dir``. Takes well under a minute.

    python3 demos/toy_pipeline.py [out_dir]
"""

import sys
from pathlib import Path

from polarfuse import io
from polarfuse.cli import main as cli

CFG = str(Path(__file__).with_name("demo.cfg"))


def run(*args):
    code = cli([*args, "--config", CFG])
    if code:
        sys.exit(code)


def main(out_dir="demo_out/pipeline"):
    root = Path(out_dir)
    run("synth", "--out", str(root / "data"))
    run("train", "--data", str(root / "data"), "--out", str(root / "train"))
    ck = str(root / "train" / "final.pfck")
    run("infer", "--checkpoint", ck, "--input", str(root / "data"), "--out", str(root / "pred50"))
    run("infer", "--checkpoint", ck, "--input", str(root / "data"), "--mode", "accelerated", "--out", str(root / "pred4"))
    run("eval", "--predictions", str(root / "pred50"), "--data", str(root / "data"), "--out", str(root / "eval50"))
    run("eval", "--predictions", str(root / "pred4"), "--data", str(root / "data"), "--out", str(root / "eval4"))
    run("ablate", "--checkpoints", str(root / "ablation_checkpoints"), "--data", str(root / "data"),
        "--train-missing", "--out", str(root / "ablate"))
    for mode in ("50", "4"):
        m = io.read_json(root / f"eval{mode}" / "metrics.json")
        print(f"{mode:>2}-step  AbsRel {m['absrel']:.1f}  d1 {m['delta1']:.1f}  d2 {m['delta2']:.1f}")
    print(f"outputs in {root}")


if __name__ == "__main__":
    main(*sys.argv[1:])
