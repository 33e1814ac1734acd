import json

import numpy as np
import pytest
from scipy.stats import chisquare

from idebench import datagen as dg
from idebench.evalkit import (SelectionTask, binomial_ci, build_tasks, evaluate, export_heatmap,
                              partial_descriptions, read_heatmap_csv, rotation_sweep,
                              setting_ab_compare, write_sweep_csv)
from idebench.gradcore import make_rng
from idebench.ide import IDEConfig, train_ide


@pytest.fixture(scope="module")
def toy_split():
    return dg.apply_leave_out(dg.gen_toy(make_rng(0, "toy"), 60), dg.TOY_HOLDOUT)


@pytest.fixture(scope="module")
def tasks(toy_split):
    return build_tasks(toy_split, 3000, make_rng(0, "tasks"))


def test_every_task_has_one_candidate_per_key(tasks, toy_split):
    for t in tasks[:200]:
        assert len(t.candidates) == 6
        assert sorted(t.keys) == sorted(toy_split.holdout_keys)
        assert t.keys[t.answer] == dg.description_key(t.tokens)


def test_answer_position_uniform(tasks):
    counts = np.bincount([t.answer for t in tasks], minlength=6)
    assert chisquare(counts).pvalue > 0.01


def test_prompt_key_roughly_uniform(tasks):
    keys = [t.key for t in tasks]
    counts = np.array([keys.count(k) for k in set(keys)])
    assert chisquare(counts).pvalue > 0.01


def test_chance_and_constant_selectors(tasks):
    rng = make_rng(1, "chance")
    chance = evaluate(lambda tok, c: int(rng.integers(len(c))), tasks)
    assert abs(chance.accuracy - 1 / 6) <= 0.02
    const = evaluate(lambda tok, c: 0, tasks)
    assert abs(const.accuracy - 1 / 6) <= 0.02


def test_oracle_selector(tasks):
    lookup = {id(t.candidates): t.answer for t in tasks}
    rep = evaluate(lambda tok, c: lookup[id(c)], tasks)
    assert rep.accuracy == 1.0 and rep.n_correct == 3000
    lo, hi = rep.ci99
    assert hi == 1.0 and 0.99 < lo < 1.0


def test_failures_are_counted(tasks):
    def flaky(tokens, cands):
        if tokens[0] == "red":
            raise RuntimeError("boom")
        return 0
    rep = evaluate(flaky, tasks[:300])
    assert rep.n_failed == sum(t.tokens[0] == "red" for t in tasks[:300]) > 0
    assert rep.n_correct <= 300 - rep.n_failed


def test_per_prompt_weighted_mean(tasks):
    rep = evaluate(lambda tok, c: len(tok) % len(c), tasks)
    total = sum(v["correct"] for v in rep.per_prompt.values())
    assert total == rep.n_correct
    assert sum(v["n"] for v in rep.per_prompt.values()) == rep.n_tasks
    assert rep.accuracy == rep.n_correct / rep.n_tasks


def test_evaluate_is_pure(tasks):
    sel = lambda tok, c: int(np.argmax([x[0] for x in c]))  # noqa: E731
    a, b = evaluate(sel, tasks[:500]), evaluate(sel, tasks[:500])
    a.wall_clock = b.wall_clock = 0.0
    assert a.to_json() == b.to_json()
    assert json.loads(a.to_json())["n_tasks"] == 500
    assert a.summary_line().startswith("accuracy=")


def test_build_tasks_reproducible(toy_split):
    a = build_tasks(toy_split, 50, make_rng(3, "t"))
    b = build_tasks(toy_split, 50, make_rng(3, "t"))
    for x, y in zip(a, b):
        assert x.answer == y.answer and x.keys == y.keys
        assert all(np.array_equal(p, q) for p, q in zip(x.candidates, y.candidates))


def test_build_tasks_needs_two_keys(toy_split):
    one = [x for x in toy_split.holdout if x.key == "red metal ball"]
    with pytest.raises(dg.ConfigError):
        build_tasks(one, 5)


def test_selection_task_validation():
    with pytest.raises(ValueError):
        SelectionTask(["a", "b"], [0, 1], 0, ["b a", "c"])
    with pytest.raises(ValueError):
        SelectionTask(["x"], [0, 1], 0, ["x", "x"])


def test_binomial_ci_brackets_point():
    lo, hi = binomial_ci(688, 1000)
    assert lo < 0.688 < hi
    assert binomial_ci(0, 0) == (0.0, 1.0)


def test_partial_descriptions_have_two_tokens(toy_split):
    part = partial_descriptions(toy_split.train, make_rng(0))
    assert all(len(x.tokens) == 2 for x in part)
    assert all(x.tokens[-1] == y.tokens[-1] for x, y in zip(part, toy_split.train))


def test_small_sweep_and_ab(toy_split, tmp_path):
    cfg = IDEConfig(epochs=5)
    points = rotation_sweep(toy_split, [0.0, 90.0], config=cfg, n_tasks=50)
    assert [p.theta for p in points] == [0.0, 90.0]
    assert all(0 <= p.ci_low <= p.accuracy <= p.ci_high <= 1 for p in points)
    write_sweep_csv(points, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "theta,accuracy,ci_low,ci_high"
    ab = setting_ab_compare(toy_split, cfg, n_tasks=50)
    assert 0 <= ab.acc_a <= 1 and 0 <= ab.acc_b <= 1
    assert list(ab.model_a.vocab) == list(ab.model_b.vocab)


def test_export_heatmap(toy_split, tmp_path):
    model = train_ide(toy_split.train, IDEConfig(epochs=3))
    info = export_heatmap(model, None, 3.0, tmp_path / "g.csv")
    words, gains = read_heatmap_csv(tmp_path / "g.csv")
    assert words == list(model.vocab) and gains.shape == (len(words), 5)
    first = (tmp_path / "g.csv").read_bytes()
    export_heatmap(model, None, 3.0, tmp_path / "g.csv")
    assert (tmp_path / "g.csv").read_bytes() == first
    assert (tmp_path / "g.ppm").exists() and info["lo"] <= info["hi"]
