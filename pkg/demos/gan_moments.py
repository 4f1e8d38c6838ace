"""Fit the conditional WGAN-GP to a single 2-D Gaussian and compare moments.

Every training row carries the same semantic vector, so the generator only
has to learn one distribution. Runs in well under a minute.
"""

import numpy as np

from semcond.condgan import ConditionedFeatures, generate, train
from semcond.datamodel import GanConfig

mu, sigma = np.array([3.0, -2.0]), 0.5
rng = np.random.default_rng(0)
x = rng.normal(mu, sigma, size=(2000, 2))
data = ConditionedFeatures(x, np.ones((2000, 2)), np.zeros(2000, dtype=np.int64))

# a critic much wider than the generator, and many critic steps per generator
# step, keep the adversarial game from drifting
config = GanConfig(epochs=20, batch=32, noise_dim=2, critic_steps=20, beta1=0.5, beta2=0.9,
                   generator_hidden=[16], critic_hidden=[128])
model = train(data, config, rng)

for row in model.log[::5] + model.log[-1:]:
    print(f"epoch {row['epoch']:2d}  gap {row['wasserstein_gap']:+.3f}  penalty {row['gradient_penalty']:.3f}")

samples = generate(model, np.ones(2), np.random.default_rng(1), 10_000)
print("target mean", mu, " sample mean", samples.mean(axis=0).round(3))
print("target std ", [sigma, sigma], " sample std ", samples.std(axis=0).round(3))
