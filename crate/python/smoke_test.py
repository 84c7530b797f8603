"""Smoke test for the sailprice_py extension.

Build first:  cargo build --release -p sailprice-py
Then run:     python3 python/smoke_test.py [path/to/libsailprice_py.so]
"""

import importlib.util
import os
import shutil
import sys
import tempfile

import numpy as np

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_module(lib_path):
    tmp = tempfile.mkdtemp()
    target = os.path.join(tmp, "sailprice_py.so")
    shutil.copy(lib_path, target)
    spec = importlib.util.spec_from_file_location("sailprice_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module, tmp


def main():
    lib = sys.argv[1] if len(sys.argv) > 1 else os.path.join(ROOT, "target", "release", "libsailprice_py.so")
    sp, tmp = load_module(lib)

    assert abs(sp.mse([1.0, 2.0], [0.0, 4.0]) - 2.5) < 1e-12
    assert abs(sp.mae([1.0, 2.0], [0.0, 4.0]) - 1.5) < 1e-12
    assert sp.residuals([3.0], [1.0]) == [2.0]

    boats = sp.Listings.synthetic(600, 7)
    assert len(boats) == 600
    path = os.path.join(tmp, "boats.csv")
    boats.write_csv(path)
    loaded, counts = sp.Listings.load_csv(path)
    assert counts["rows_out"] == 600 and len(loaded) == 600

    half_a, half_b = sp.make_split(loaded.ids(), 42)
    assert len(half_a) == 300 and not set(half_a) & set(half_b)
    train, test = loaded.subset(half_a), loaded.subset(half_b)

    ols = sp.Model.fit(train, "ols", regions="four")
    coefs = ols.coefficients()
    x = np.column_stack([np.ones(len(train))] + [train.column(c) for c in ols.columns() if not c.startswith("region_")])
    regions = train.regions()
    for c in ols.columns():
        if c.startswith("region_"):
            level = c[len("region_"):]
            x = np.column_stack([x, [1.0 if r == level else 0.0 for r in regions]])
    beta, *_ = np.linalg.lstsq(x, np.array(train.prices()), rcond=None)
    ours = np.array([coefs["intercept"]] + [coefs[c] for c in ols.columns()])
    assert np.allclose(ours, beta, rtol=1e-6, atol=1e-6 * abs(beta).max()), (ours, beta)

    pred = ols.predict(test)
    print(f"ols test mse {sp.mse(test.prices(), pred):.4g}")
    again = sp.Model.from_text(ols.to_text())
    assert again.predict(test) == pred

    gbr = sp.Model.fit(train, "gbr")
    trace = gbr.loss_trace
    assert all(b <= a for a, b in zip(trace, trace[1:]))
    assert gbr.kind == "gbr"

    result = sp.swap(loaded, "ols", seed=42, regions="four")
    print(f"swap gaps mse {result['relative_mse_gap']:.3f} mae {result['relative_mae_gap']:.3f}")

    rows = sp.hk_counterfactual(ols, loaded, 100, 3)
    assert len(rows) == 100 and all(r[2] != "hong_kong" for r in rows)

    state = sp.AdadeltaState(2)
    params = state.step([1.0, -1.0], [0.5, -0.5])
    assert params[0] < 1.0 and params[1] > -1.0

    assert sp.correlations(loaded)

    try:
        sp.Model.fit(train, "lasso")
    except sp.SailpriceError as e:
        assert "lasso" in str(e)
    else:
        raise AssertionError("unknown family accepted")

    shutil.rmtree(tmp)
    print("smoke test passed")


if __name__ == "__main__":
    main()
