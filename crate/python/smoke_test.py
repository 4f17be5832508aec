"""Smoke test for the Python bindings.

    maturin develop -m crates/python/Cargo.toml
    python python/smoke_test.py
"""

import json
import tempfile

import sivtherm_py as st


def main():
    wl, counts = st.simulate_spectrum(296.0, exposure_s=1.0, seed=3)
    assert len(wl) == len(counts) > 100

    r = st.measure_temperature(wl, counts, exposure_s=1.0)
    assert abs(r["temperature_K"] - 296.0) < 5 * r["sigma_T_K"], r
    print(f"T = {r['temperature_K']:.2f} ± {r['sigma_T_K']:.2f} K")

    eta = st.crb_sensitivity()
    assert 337.0 <= eta <= 360.0, eta
    print(f"bulk sensitivity bound {eta:.1f} mK/√Hz")

    with tempfile.TemporaryDirectory() as out:
        rep = json.loads(st.run_experiment('experiment = "fit"\nseed = 5\n', out))
        assert rep["seed"] == 5
        assert all(c["passed"] for c in rep["checks"])

    try:
        st.run_experiment('experiment = "fit"\nexposure = 1.0\n', ".")
    except st.SivthermError as e:
        assert e.args[0] == "config"
    else:
        raise AssertionError("unitless key accepted")
    print("ok")


if __name__ == "__main__":
    main()
