import math

import numpy as np
import pytest

import stcar


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    return stcar.simulate(model="2", groups=[3, 3], years=4, seed=7,
                          out_dir=str(out)), out


def test_simulate_and_ingest_round_trip(dataset):
    data, out = dataset
    assert data.K == 6
    assert data.T == 4
    back = stcar.ingest(str(out / "records.csv"), str(out / "adjacency.csv"),
                        str(out / "sections.csv"))
    assert back.K == data.K
    assert back.n_observed() == data.n_observed()
    assert back.cov_names == data.cov_names


def test_ingest_rejects_garbage(tmp_path):
    bad = tmp_path / "records.csv"
    bad.write_text("not,a,valid,header\n")
    (tmp_path / "adjacency.csv").write_text("id_a,id_b\n")
    (tmp_path / "sections.csv").write_text("section_id,tributary\na,james\n")
    with pytest.raises(stcar.DataError):
        stcar.ingest(str(bad), str(tmp_path / "adjacency.csv"),
                     str(tmp_path / "sections.csv"))


def test_fit_summarize(dataset):
    data, _ = dataset
    draws = stcar.fit(data, model="2", chains=2, warmup=300, samples=300,
                      seed=1)
    assert draws.n_chains == 2
    assert "beta.intercept" in draws.names
    pooled = draws.pooled()
    assert pooled.shape == (600, len(draws.names))
    assert np.isfinite(pooled).all()
    assert draws.max_rhat() > 0.9

    rows = stcar.summarize(draws)
    assert len(rows) == len(draws.names)
    for r in rows:
        assert r["q10"] <= r["q50"] <= r["q90"]
        assert r["hpdi_low"] <= r["hpdi_high"]


def test_fit_is_deterministic(dataset):
    data, _ = dataset
    a = stcar.fit(data, model="1", chains=1, warmup=100, samples=50, seed=3)
    b = stcar.fit(data, model="1", chains=1, warmup=100, samples=50, seed=3)
    assert np.array_equal(a.pooled(), b.pooled())


def test_hpdi_and_prob_greater():
    rng = np.random.default_rng(0)
    v = rng.standard_normal(100000)
    low, high = stcar.hpdi(v, 0.80)
    assert math.isclose(low, -1.2816, abs_tol=0.05)
    assert math.isclose(high, 1.2816, abs_tol=0.05)
    assert stcar.prob_greater(v + 10.0, v) == 1.0
