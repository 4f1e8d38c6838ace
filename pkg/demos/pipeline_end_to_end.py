"""All three task modes on the default world, with the Bayes rule as a ceiling."""

from semcond.datamodel import TaskMode
from semcond.pipeline import run_in_memory
from semcond.synthbench import default_world, desk_config, draw_test_set, make_world, oracle_accuracy

spec = default_world(samples_per_class=1000)
fs, table, catalog = make_world(spec)
test = draw_test_set(spec, 1000)
split = spec.split()
config = desk_config(seed=0, gan={"epochs": 5})

gan = None
for mode in TaskMode:
    result = run_in_memory(fs, test, table, split, config, mode, gan=gan)
    gan = result.gan  # the GAN only sees seen classes, so every mode can share it
    labels = mode.label_space(split, catalog)
    ceiling = oracle_accuracy(spec, test, labels, per_class=True)
    report = {k: round(v, 2) for k, v in result.report.to_json().items() if isinstance(v, float)}
    print(f"{mode.value:6s} oracle mACC {ceiling:6.2f}  {report}")
