"""Train each of the four model families by hand on one farm.

This skips the pipeline entirely: we prepare one farm, standardize on a
training block ourselves and compare held-out MSE across families. The
point is to show what the model layer looks like below run_experiment.
"""

import numpy as np

from farmcast.dataset import apply_standardizer, fit_standardizer
from farmcast.models import train_gbrt, train_lasso, train_mlp, train_svr
from farmcast.pipeline import prepare_farm
from farmcast.synth import SynthConfig, generate_farm


def held_out_mse(predict, X_test, y_test):
    pred = np.clip(predict(X_test), 0.0, 1.0)
    return float(np.mean((pred - y_test) ** 2))


def main():
    cfg = SynthConfig.default(
        "wind",
        seed=7,
        n_farms={"farmland": 1},
        period_start="2016-01-01T00:00:00Z",
        period_end="2016-06-01T00:00:00Z",
        resolution_hours=3,
    )
    ds = generate_farm(cfg, 0)
    prepared = prepare_farm(ds)
    # after prepare_farm the power column is normalized to [0, 1]
    X, y = prepared.features, prepared.power
    n = len(y)
    split = int(n * 0.8)
    print(f"{ds.meta.farm_id}: {n} prepared samples, {X.shape[1]} features")

    # standardize with training statistics only
    stats = fit_standardizer(X[:split])
    X_train = apply_standardizer(stats, X[:split])
    X_test = apply_standardizer(stats, X[split:])
    y_train, y_test = y[:split], y[split:]

    gbrt = train_gbrt(X_train, y_train, n_trees=80, max_depth=3,
                      learning_rate=0.1)
    lasso = train_lasso(X_train, y_train, lam=1e-2)
    svr = train_svr(X_train, y_train, C=1.0, epsilon=0.05, gamma=0.5,
                    max_iter=60, tol=1e-3)
    mlp = train_mlp(X_train, y_train, hidden_sizes=(16,), learning_rate=0.01,
                    epochs=150, batch_size=32, seed=0)

    print(f"\n{'family':<8} {'test MSE':>12}")
    for name, model in [("GBRT", gbrt), ("LASSO", lasso),
                        ("SVR", svr), ("MLP", mlp)]:
        print(f"{name:<8} {held_out_mse(model.predict, X_test, y_test):>12.6f}")

    # the sparse one is worth a closer look
    active = np.flatnonzero(lasso.coef)
    names = [prepared.feature_names[i] for i in active]
    print(f"\nLASSO kept {len(active)} of {X.shape[1]} features: "
          f"{', '.join(names)}")
    print(f"SVR kept {len(svr.dual_coef)} of {split} training points as "
          f"support vectors")
    print(f"GBRT training MSE went {gbrt.info.trace[0]:.5f} -> "
          f"{gbrt.info.trace[-1]:.5f} over {len(gbrt.trees)} trees")


if __name__ == "__main__":
    main()
