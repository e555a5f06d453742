"""Calibration experiment: architecture direction at reduced scale.

Generates small coupled/uncoupled/reaction-diffusion datasets under
candidate input distributions, trains single- and multi-branch models with
one seed at reduced epochs, and prints mean L2 per field so the benchmark
defaults can be pinned.
"""

import json
import sys
import time

from donbench.dataset import generate_dataset
from donbench.harness import evaluate, train_on_container
from donbench.training import TrainConfig


def run_case(tag, benchmark, overrides, archs, n_samples, epochs):
    t0 = time.time()
    container = generate_dataset(benchmark, n_samples, master_seed=2024,
                                 overrides=overrides)
    print(f"[{tag}] dataset {n_samples} samples in {time.time()-t0:.1f}s",
          flush=True)
    out = {}
    for arch in archs:
        cfg = TrainConfig(epochs=epochs, batch_size=32, queries_per_step=800,
                          learning_rate=1e-3, seed=0, split_seed=0,
                          log_every=1000)
        t0 = time.time()
        model, hist = train_on_container(container, arch, cfg)
        report = evaluate(model, container, cfg.split_seed)
        errs = {f: report.aggregates[f]["mean_l2"] for f in report.field_names}
        out[arch] = errs
        print(f"[{tag}] {arch}: {json.dumps(errs)} "
              f"loss {hist[0][1]:.3e}->{hist[-1][1]:.3e} "
              f"({time.time()-t0:.0f}s)", flush=True)
    return out


def main():
    which = sys.argv[1] if len(sys.argv) > 1 else "all"
    sdon = ["sdeeponet-single", "sdeeponet-multi"]
    don = ["deeponet-single", "deeponet-multi"]

    if which in ("all", "coupledA"):
        run_case(
            "coupledA", "thermo_electrical_coupled",
            {"inputs": {"q_ext": {"mean": 0.5, "variance": 0.25},
                        "rho_e": {"mean": 0.0, "variance": 4.0}}},
            sdon, n_samples=120, epochs=4000,
        )
    if which in ("all", "coupledB"):
        run_case(
            "coupledB", "thermo_electrical_coupled",
            {"inputs": {"q_ext": {"mean": 1.0, "variance": 1.0,
                                  "correlation_length": 0.25},
                        "rho_e": {"mean": 0.0, "variance": 4.0}}},
            sdon, n_samples=120, epochs=4000,
        )
    if which in ("all", "uncoupledA"):
        run_case(
            "uncoupledA", "thermo_electrical_uncoupled",
            {"inputs": {"q_ext": {"mean": 0.5, "variance": 0.25},
                        "rho_e": {"mean": 0.0, "variance": 4.0}}},
            sdon, n_samples=120, epochs=4000,
        )
    if which in ("all", "rd"):
        run_case("rd", "reaction_diffusion", None, don,
                 n_samples=150, epochs=4000)


if __name__ == "__main__":
    main()
