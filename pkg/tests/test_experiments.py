import math

import numpy as np
import pytest

from markovpop.errors import ConfigError, MalformedRow, NonMonotoneTime
from markovpop.experiments import COVID_ROWS, covid_observations, disembarkment_hazard, ingest_csv, parse_config
from markovpop.experiments.config import ExperimentConfig, load_config
from markovpop.experiments.data import packaged_path, read_covid_csv, write_covid_csv, write_trajectory_csv
from markovpop.experiments.networks import parse_network
from markovpop.inference.likelihoods import BinomialObservation
from markovpop.model import Trajectory, drift, build_sir, jacobian

SIR_TEXT = """
# two-class epidemic
classes = S, I
params = beta, gamma
reaction = -1, 1 : beta * S * I
reaction = 0, -1 : gamma * I
"""


# -- config ----------------------------------------------------------------

def test_config_defaults_match_the_study_design():
    cfg = ExperimentConfig()
    assert cfg.obs_times == (5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    assert len(cfg.pred_times) == 24 and not set(cfg.pred_times) & set(cfg.obs_times)
    assert cfg.theta == (0.5, 0.15) and cfg.x0 == (0.95, 0.05)


def test_config_grammar():
    cfg = parse_config("""
        model = sir   # trailing comment
        theta = 0.4, 0.2
        N_grid = 100, 200
        obs_times = 2:10:2
        pred_times = 1:9:1 \\ 2:10:2
        methods = jgdla, ode
        seed = 7
    """)
    assert cfg.theta == (0.4, 0.2)
    assert cfg.N_grid == (100, 200)
    assert cfg.obs_times == (2.0, 4.0, 6.0, 8.0, 10.0)
    assert cfg.pred_times == (1.0, 3.0, 5.0, 7.0, 9.0)
    assert cfg.methods == ("jgdla", "ode") and cfg.seed == 7


@pytest.mark.parametrize("text, fragment", [
    ("colour = red", "line 1: unknown key"),
    ("seed = 1\nseed = 2", "line 2: 'seed' given twice"),
    ("seed =", "has no value"),
    ("seed = 1.5", "bad value for 'seed'"),
    ("just words", "expected 'key = value'"),
    ("obs_times = 5:1:0", "bad value"),
    ("methods = jgdla, magic", "unknown method"),
    ("obs_times = 5, 10\npred_times = 5", "overlap"),
])
def test_config_errors_name_the_line(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text, "exp.cfg")


def test_load_config_and_override(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text("N = 300\nout = results\n")
    cfg = load_config(p)
    assert cfg.N == 300 and cfg.source == str(p)
    assert cfg.replace(seed=4, out=None).seed == 4
    assert cfg.replace(seed=4, out=None).out == "results"
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


# -- custom networks ---------------------------------------------------------

def test_text_network_matches_builtin(rng):
    custom, builtin = parse_network(SIR_TEXT), build_sir()
    x = rng.dirichlet(np.ones(3), size=20)[:, :2]
    theta = np.array([0.5, 0.15])
    np.testing.assert_allclose(drift(custom, x, theta), drift(builtin, x, theta), rtol=1e-14)
    np.testing.assert_allclose(jacobian(custom, x[0], theta), jacobian(builtin, x[0], theta), atol=1e-8)


@pytest.mark.parametrize("rate", [
    "__import__('os').system('true')",
    "beta.real",
    "[beta]",
    "beta if S else I",
    "'text'",
    "open(S)",
    "delta * S",
])
def test_rate_expressions_are_restricted(rate):
    text = "classes = S, I\nparams = beta, gamma\nreaction = -1, 1 : " + rate
    with pytest.raises(ConfigError):
        parse_network(text)


def test_network_structure_errors():
    with pytest.raises(ConfigError, match="changes for"):
        parse_network("classes = S, I\nparams = b\nreaction = -1 : b * S")
    with pytest.raises(ConfigError, match="no reactions"):
        parse_network("classes = S, I\nparams = b")
    with pytest.raises(ConfigError, match="before reactions"):
        parse_network("reaction = -1, 1 : S")


def test_allowed_functions():
    net = parse_network("classes = A\nparams = k\nreaction = -1 : k * exp(-t) * sqrt(A) + log(1 + A)")
    lam = net.rates(np.array([0.25]), np.array([2.0]), 0.0)
    assert lam[0] == pytest.approx(2 * 0.5 + math.log(1.25))


# -- data ---------------------------------------------------------------------

def test_covid_table_values():
    assert len(COVID_ROWS) == 16
    by_day = {r.day: r for r in COVID_ROWS}
    assert (by_day[1].n, by_day[1].y) == (31, 10)
    assert (by_day[6].n, by_day[6].y) == (103, 65)
    assert (by_day[14].n, by_day[14].y, by_day[14].on_ship) == (681, 88, 3183)
    assert by_day[7].n is None and by_day[10].n is None
    assert by_day[16].on_ship == 2213
    obs = covid_observations()
    assert [o.t for o in obs] == [1, 2, 3, 4, 5, 6, 8, 9, 11, 12, 13, 14, 15, 16]
    assert sum(o.n for o in obs) == 3063 and sum(o.y for o in obs) == 634


def test_disembarkment_hazard_reproduces_head_counts():
    mu = disembarkment_hazard()
    assert mu(5.0) == 0.0 and mu(9.5) > 0 and mu(10.5) == 0.0
    counts = [r.on_ship for r in COVID_ROWS]
    for prev, cur in zip(COVID_ROWS, COVID_ROWS[1:]):
        kept = math.exp(-mu(prev.day + 0.5))
        assert prev.on_ship * kept == pytest.approx(cur.on_ship, rel=1e-12)
    assert counts[-1] == 2213


def test_packaged_covid_csv(caplog):
    assert read_covid_csv(packaged_path("covid.csv")) == COVID_ROWS
    with caplog.at_level("WARNING"):
        obs = ingest_csv(packaged_path("covid.csv"))
    assert obs == covid_observations()
    assert sum("row dropped" in r.message for r in caplog.records) == 2


def test_covid_csv_roundtrip(tmp_path):
    p = tmp_path / "c.csv"
    write_covid_csv(COVID_ROWS, p)
    assert read_covid_csv(p) == COVID_ROWS


def test_trajectory_roundtrip_is_exact(tmp_path, rng):
    states = rng.random((5, 2)) / 2
    traj = Trajectory(np.array([0.0, 0.1, 1 / 3, 2.0, 7.5]), states, ("S", "I"))
    p = tmp_path / "t.csv"
    write_trajectory_csv(traj, p)
    back = ingest_csv(p)
    np.testing.assert_array_equal(back.states, traj.states)
    np.testing.assert_array_equal(back.times, traj.times)


def test_ingest_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,n,y\n1,10,3\n2,5,6\n")
    with pytest.raises(MalformedRow) as err:
        ingest_csv(p)
    assert err.value.line == 3
    p.write_text("t,S,I\n0,0.9,0.1\n2,0.8,0.2\n1,0.7,0.3\n")
    with pytest.raises(NonMonotoneTime, match="line 4"):
        ingest_csv(p)
    p.write_text("t,S,I\n0,0.9\n")
    with pytest.raises(MalformedRow, match="line 2"):
        ingest_csv(p)
    p.write_text("t,n,y\n1,2.5,1\n")
    with pytest.raises(MalformedRow):
        ingest_csv(p)


def test_ingest_drops_missing_rows(tmp_path, caplog):
    p = tmp_path / "na.csv"
    p.write_text("t,n,y\n1,10,3\n2,NA,NA\n3,4,0\n")
    with caplog.at_level("WARNING"):
        obs = ingest_csv(p)
    assert "line 3: missing value" in caplog.text
    assert obs == [BinomialObservation(1.0, 10, 3), BinomialObservation(3.0, 4, 0)]
