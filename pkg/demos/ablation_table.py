"""A small run of the generator ablation (G only, G + MPoser, G + D_M).

Writes a corpus to a scratch directory and prints the metrics table.

    python3 demos/ablation_table.py [out_dir]
"""
import sys
import tempfile

from motiongan.config import TrainConfig, ablation_configs
from motiongan.metrics import reports_to_csv
from motiongan.motion import generate_corpus, load_split
from motiongan.trainer import run_ablation

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="motiongan-demo-")
generate_corpus(out, n_train=256, n_eval=64, num_frames=16, root_seed=0)
train_seqs, eval_seqs = load_split(out, "train"), load_split(out, "eval")

base = TrainConfig(epochs=6, gen_lr=1e-3, disc_lr=1e-4, mposer_epochs=5, n_real_pool=200)
table = run_ablation(ablation_configs(base, "discriminator"), train_seqs, eval_seqs)
print(reports_to_csv(list(table.values()), list(table)), end="")
