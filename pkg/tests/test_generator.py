from dataclasses import replace
from fractions import Fraction as F

import pytest

from allocplan.generator import PRESETS, GenConfig, apply_experiment, generate, preset
from allocplan.model import validate_instance
from allocplan.serialize import dumps_instance


def test_same_seed_same_instance():
    cfg = preset("small-corpus", seed=11)
    assert dumps_instance(generate(cfg)) == dumps_instance(generate(cfg))


def test_seeds_differ():
    assert generate(preset("expD", 1)) != generate(preset("expD", 2))


def test_pf_disabled_means_single_day():
    inst = generate(preset("expA", 3))
    assert all(h == 0 for h in inst.horizon.values())
    assert all(t == 0 for (_, _, t) in inst.demand)
    assert inst.gamma == 0


def test_constant_q():
    inst = generate(preset("expC", 3))
    assert all(inst.q(i, j, t) == 1 for (i, j, t) in inst.demand)


def test_proportional_q_in_unit_interval():
    inst = generate(preset("expD", 3))
    qs = [inst.q(i, j, t) for (i, j, t) in inst.demand]
    assert max(qs) == 1 and min(qs) > 0


def test_alpha_geometric():
    inst = generate(preset("expD", 0))
    assert all(inst.alpha[t] == F(1, 10) ** t for t in range(len(inst.alpha)))


def test_preset_flags():
    a = preset("expA")
    assert not a.pf_enabled and F(a.gamma) == 0
    assert preset("expB").pf_enabled and F(preset("expB").gamma) == 0
    assert preset("expC").q_mode == "constant"
    assert F(preset("expD").gamma) > F(preset("expD").beta)


def test_unknown_preset():
    with pytest.raises(ValueError):
        preset("expZ")


@pytest.mark.parametrize("name", [p for p in PRESETS if p != "medium-bench"])
def test_generated_instances_validate(name):
    for seed in range(5):
        assert validate_instance(generate(preset(name, seed))) == []


def test_expd_regime():
    for seed in range(5):
        inst = generate(preset("expD", seed))
        assert inst.gamma > inst.beta


def test_small_corpus_grid_bound():
    for seed in range(100):
        inst = generate(preset("small-corpus", seed))
        grid = 1
        for v in inst.demand.values():
            grid *= v + 1
        assert grid <= 10**7


@pytest.mark.parametrize("exp, name", [("A", "expA"), ("B", "expB"), ("C", "expC"), ("D", "expD")])
def test_experiment_rewrite_equals_preset(exp, name):
    for seed in range(3):
        assert apply_experiment(generate(preset("expD", seed)), exp) == generate(preset(name, seed))


@pytest.mark.parametrize(
    "change",
    [dict(n_items=(3, 2)), dict(alpha_ratio="1"), dict(trailer_min=40), dict(demand_density=0), dict(q_mode="x"),
     dict(gamma="-1"), dict(n_stores=(0, 0))],
)
def test_invalid_config(change):
    with pytest.raises(ValueError):
        replace(GenConfig(), **change)


def test_config_json_round_trip():
    cfg = preset("small-corpus", 7)
    assert GenConfig.from_json(cfg.to_json()) == cfg


def test_config_json_rejects_unknown_keys():
    with pytest.raises(ValueError):
        GenConfig.from_json('{"n_itemz": [1, 2]}')
