import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsdiscover.dataset import VariableMeta
from tsdiscover.engine import EngineConfig, EngineError, discover
from tsdiscover.knowledge import BackgroundKnowledge, KnowledgeError, ercot_default_knowledge
from tsdiscover.simulate import random_svar, sample

TAU = 7


def _panel_vars():
    return [
        VariableMeta("lam", "price_lambda"),
        VariableMeta("north_diff", "price_differential"),
        VariableMeta("wind", "renewable_forecast"),
        VariableMeta("solar", "renewable_forecast"),
        VariableMeta("fl_north", "load_forecast"),
        VariableMeta("fl_south", "load_forecast"),
        VariableMeta("waha", "gas_price"),
        VariableMeta("gas_gen", "gas_generation"),
        VariableMeta("weather_pc1", "weather_pc"),
        VariableMeta("annual_sin", "control_harmonic"),
        VariableMeta("trend", "control_trend"),
        VariableMeta("weekend", "control_weekend"),
    ]


@pytest.fixture(scope="module")
def ercot():
    return ercot_default_knowledge(_panel_vars(), TAU)


def test_forbid_then_require_conflicts():
    kb = BackgroundKnowledge(tau_max=3).forbid_link("a", "b", [1, 2])
    assert kb.forbidden == {("a", "b", 1), ("a", "b", 2)}
    with pytest.raises(KnowledgeError, match="forbidden"):
        kb.require_tail("a", "b", 1)
    kb2 = BackgroundKnowledge(tau_max=3).require_arrow("a", "b", 2)
    with pytest.raises(KnowledgeError, match="required"):
        kb2.forbid_link("a", "b", 2)
    with pytest.raises(KnowledgeError, match="tau_max"):
        BackgroundKnowledge(tau_max=3).forbid_link("a", "b", 5)


def test_check_consistency_cases():
    assert BackgroundKnowledge().check_consistency() == []
    kb = BackgroundKnowledge(tau_max=2)
    kb.forbidden.add(("a", "b", 1))
    kb.required_tail.add(("a", "b", 1))  # bypass the builder guard
    assert len(kb.check_consistency()) == 1
    cyc = BackgroundKnowledge().require_tail("a", "b", 0).require_tail("b", "a", 0)
    assert any("cycle" in c or "conflicting" in c for c in cyc.check_consistency())
    selfish = BackgroundKnowledge()
    selfish.forbidden.add(("a", "a", 0))
    assert any("self-link" in c for c in selfish.check_consistency())


def test_force_mark_time_order():
    with pytest.raises(KnowledgeError, match="time order"):
        BackgroundKnowledge().force_mark("a", "b", 2, "o-o")
    kb = BackgroundKnowledge().force_mark("b", "a", 0, "-->")
    assert kb.forced_mark_of("a", "b", 0) == "<--"
    assert kb.forced_mark_of("b", "a", 0) == "-->"


def test_ercot_defaults_consistent(ercot):
    assert ercot.check_consistency() == []


def test_ercot_weather_never_caused(ercot):
    for lag in range(TAU + 1):
        assert ("lam", "weather_pc1", lag) in ercot.forbidden
        assert ("fl_north", "wind", lag) in ercot.forbidden
    # weather may drive gas prices contemporaneously, not the reverse
    assert ("weather_pc1", "waha", 0) not in ercot.forbidden
    assert ("waha", "weather_pc1", 0) in ercot.forbidden


def test_ercot_load_and_gas_rules(ercot):
    assert ercot.forced_mark_of("fl_north", "fl_south", 0) == "<->"
    assert ("lam", "fl_north", 0) in ercot.forbidden
    assert ("lam", "fl_north", 1) not in ercot.forbidden  # lagged market -> load allowed
    assert ("fl_north", "lam", 0) not in ercot.forbidden
    for g in ("waha", "gas_gen"):
        for p in ("lam", "north_diff"):
            assert (g, p, 0) in ercot.forbidden
            assert (g, p, 1) not in ercot.forbidden


def test_ercot_control_rules(ercot):
    for lag in range(TAU + 1):
        assert ercot.adjacency_forbidden("weekend", "solar", lag)
        assert ercot.adjacency_forbidden("solar", "weekend", lag)
        assert ercot.adjacency_forbidden("trend", "weather_pc1", lag)
        assert ("lam", "annual_sin", lag) in ercot.forbidden
    assert ercot.forced_mark_of("annual_sin", "lam", 0) == "-->"
    assert ercot.forced_mark_of("trend", "wind", 0) == "-->"
    assert ("annual_sin", "lam", 1) in ercot.forbidden
    assert ercot.adjacency_forbidden("trend", "weekend", 0)


def test_ercot_unknown_role():
    class Fake:
        name, role = "x", "mystery"

    with pytest.raises(KnowledgeError, match="unknown role"):
        ercot_default_knowledge([Fake()], 3)


def test_rules_roundtrip(ercot, tmp_path):
    back = BackgroundKnowledge.from_json(ercot.to_json())
    assert back.forbidden == ercot.forbidden
    assert back.forced_mark == ercot.forced_mark
    ercot.save(tmp_path / "kb.json")
    assert BackgroundKnowledge.load(tmp_path / "kb.json").to_rules() == ercot.to_rules()
    with pytest.raises(KnowledgeError, match="unknown rule"):
        BackgroundKnowledge.from_rules([{"rule": "maybe", "source": "a", "target": "b"}])


def test_engine_rejects_inconsistent_or_unknown_knowledge():
    ds = sample(random_svar(3, seed=1), 200)
    with pytest.raises(EngineError, match="unknown variables"):
        discover(ds, BackgroundKnowledge(tau_max=1).forbid_link("X0", "nope", 1), EngineConfig(tau_max=1))
    kb = BackgroundKnowledge(tau_max=1)
    kb.forbidden.add(("X0", "X1", 1))
    kb.required_tail.add(("X0", "X1", 1))
    with pytest.raises(EngineError, match="inconsistent"):
        discover(ds, kb, EngineConfig(tau_max=1))


def test_forbidden_link_absent_and_flagged():
    scm = random_svar(3, seed=4, n_links=2, lag_max=1)
    ds = sample(scm, 800, seed=4)
    cfg = EngineConfig(tau_max=1)
    free, _ = discover(ds, None, cfg)
    assert free.get_link(0, 0, 1) is not None  # strong self-link found without knowledge
    kb = BackgroundKnowledge(tau_max=1).forbid_link("X0", "X0", 1)
    g, audit = discover(ds, kb, cfg)
    assert g.get_link(0, 0, 1) is None
    recs = [r for r in audit if r["x"] == [0, 1] and r["y"] == [0, 0]]
    assert recs and all(r["decision"] == "forbidden" and r["tests"] == [] for r in recs)


def _random_forbids(data, names, tau):
    triples = data.draw(st.lists(
        st.tuples(st.sampled_from(names), st.sampled_from(names), st.integers(0, tau)), max_size=6
    ))
    kb = BackgroundKnowledge(tau_max=tau)
    for s, t, lag in triples:
        if s == t and lag == 0:
            continue
        kb.forbid_link(s, t, lag)
    return kb


def _check_dominance(g, kb, names):
    for i, j, lag, _m in g.links():
        assert not kb.adjacency_forbidden(names[i], names[j], lag)
        if lag > 0:
            assert (names[i], names[j], lag) not in kb.forbidden
        else:
            # a one-sided lag-0 forbid leaves an arrowhead at the forbidden source
            kind = g.get_link(i, j, 0).kind
            if (names[i], names[j], 0) in kb.forbidden:
                assert kind[0] == "<"
            if (names[j], names[i], 0) in kb.forbidden:
                assert kind[-1] == ">"


def _fuzz_case(seed):
    scm = random_svar(4, density=0.2, lag_max=2, seed=seed)
    return sample(scm, 300, seed=seed)


@pytest.mark.parametrize("scope", ["search", "output"])
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), data=st.data())
def test_knowledge_never_adds_adjacency(scope, seed, data):
    ds = _fuzz_case(seed)
    cfg = EngineConfig(tau_max=2, knowledge_scope=scope)
    kb = _random_forbids(data, ds.names, 2)
    free, _ = discover(ds, None, cfg)
    g, _ = discover(ds, kb, cfg)
    assert set(g.adjacencies()) <= set(free.adjacencies())
    _check_dominance(g, kb, ds.names)


@pytest.mark.parametrize("scope", ["search", "output"])
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), data=st.data())
def test_forbidden_links_never_emitted(scope, seed, data):
    ds = _fuzz_case(seed)
    kb = _random_forbids(data, ds.names, 2)
    g, audit = discover(ds, kb, EngineConfig(tau_max=2, knowledge_scope=scope))
    _check_dominance(g, kb, ds.names)
    if scope == "search":
        for rec in audit:
            if rec["decision"] == "forbidden":
                assert rec["tests"] == []


def test_output_scope_matches_free_run_on_unforbidden_pairs():
    ds = _fuzz_case(70)
    kb = BackgroundKnowledge(tau_max=2).forbid_link("X0", "X3", 1)
    cfg = EngineConfig(tau_max=2, knowledge_scope="output")
    free, _ = discover(ds, None, cfg)
    g, _ = discover(ds, kb, cfg)
    assert set(g.adjacencies()) == set(free.adjacencies()) - {(0, 3, 1)}
