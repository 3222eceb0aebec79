"""Smoke test for the pymccard extension module.

Build first, e.g. `maturin develop -m crates/python/Cargo.toml`, then run
`python crates/python/python/smoke_test.py`.
"""

import json
import math

import pymccard


def main():
    train, test = pymccard.generate(
        n_train=80, n_test=40, dim=30, n_relevant=4,
        outlier_scale=5.0, outlier_proportion=0.2, seed=3,
    )
    assert (train.n_samples, train.n_features) == (80, 30)
    assert test.support == [0, 1, 2, 3]

    cv = pymccard.cv_select(train, solver="mcc_ard", folds=4, seed=1)
    assert cv["best_h"] > 0 and len(cv["table"]) == 9 * 4

    ard = pymccard.fit_mcc_ard(train, kernel_bandwidth=cv["best_h"])
    ls = pymccard.fit_ls_ard(train)
    l1 = pymccard.fit_mcc_l1(train, kernel_bandwidth=cv["best_h"], lam=1.0)
    for name, model in [("mcc_ard", ard), ("ls_ard", ls), ("mcc_l1", l1)]:
        report = pymccard.evaluate(model, test)
        assert len(model.weights) == 30
        assert report["tp"] + report["fn"] == 4
        print(f"{name:8s} r={report['r']} rmse={report['rmse']:.4f} f1={report['f1']:.3f}")

    pred = ard.predict(test.design)
    m = pymccard.prediction_metrics(pred, test.targets)
    assert math.isclose(m["rmse"], pymccard.evaluate(ard, test)["rmse"], rel_tol=1e-12)

    again = pymccard.Model.from_json(ard.to_json())
    assert again.weights == ard.weights
    assert json.loads(ard.to_json())["active"] == ard.active

    try:
        pymccard.fit_mcc_ard(train, kernel_bandwidth=-1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative bandwidth accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
