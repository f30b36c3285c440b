"""Train the motion discriminator alone on real versus corrupted motions and
compare attention pooling with static concat pooling.

    python3 demos/discriminator_pooling.py [steps]
"""
import sys

from motiongan.config import TrainConfig
from motiongan.motion import MotionFamily, gen_real_motion
from motiongan.seeding import derive_seed
from motiongan.trainer import train_discriminator_only

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 200
family = MotionFamily()
real = [gen_real_motion(family, 16, derive_seed(0, "demo-real", i)) for i in range(400)]
held = [gen_real_motion(family, 16, derive_seed(0, "demo-held", i)) for i in range(100)]

for corruption in ("iid_noise", "frame_shuffle", "frame_freeze"):
    for pooling in ("static", "attention"):
        cfg = TrainConfig(pooling=pooling, disc_lr=1e-3)
        _, acc = train_discriminator_only(cfg, real, held, corruption, steps=steps)
        print(f"{corruption:14s} {pooling:9s} held-out accuracy {100 * acc:5.1f}%")
