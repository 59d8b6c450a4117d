"""Smoke test for the marl_o2o_py bindings.

Build first:  pip install --no-build-isolation -e crates/py
Run:          python python/smoke_test.py
"""

import os
import tempfile

import marl_o2o_py as m


def check_primitives():
    s = m.Schedule(1.0, 0.05, 100)
    assert s.value(0) == 1.0
    assert s.value(100) == 0.05
    assert abs(s.value(50) - 0.525) < 1e-12
    assert m.lambda_value(0, 0.2, 10) == 1.0
    assert m.greedy_joint([[0.0, 2.0], [3.0, 1.0]], [[True, True], [True, True]]) == [1, 0]
    assert m.greedy_joint([[0.0, 2.0]], [[True, False]]) == [0]
    best, joint = m.solve_matrix_game([[8.0, -12.0], [-12.0, 0.0]])
    assert best == 8.0 and joint == [0, 0]


def check_env():
    cfg = m.RunConfig()
    cfg.set("env.grid_size", "5")
    cfg.set("env.n_agents", "2")
    cfg.set("env.horizon", "20")
    cfg.validate()
    assert cfg.get("env.horizon") == "20"
    env = m.Env(cfg)
    spec = env.spec
    assert spec["n_agents"] == 2
    obs = env.reset(3)
    assert len(obs["obs"]) == 2 and len(obs["state"]) == spec["state_dim"]
    steps = 0
    while True:
        _, reward, terminated, truncated, _ = env.step([4] * spec["n_agents"])
        steps += 1
        if terminated or truncated:
            break
    assert steps <= spec["horizon"]
    assert m.oracle_optimum(cfg) > 0.0

    try:
        cfg.set("online.mixing_ratio", "not-a-number")
    except ValueError:
        pass
    else:
        raise AssertionError("bad value accepted")


def check_pipeline(root):
    cfg = m.RunConfig()
    for key, value in [
        ("env.name", "matrix"),
        ("net.hidden_dim", "16"),
        ("net.mixing_hidden_dim", "8"),
        ("dataset.episodes", "100"),
        ("dataset.behavior_max_steps", "20000"),
        ("offline.steps", "100"),
        ("offline.eval_interval", "50"),
        ("online.steps", "600"),
        ("online.algorithm", "ovmse"),
        ("train.warmup_episodes", "8"),
        ("eval.interval", "200"),
        ("eval.episodes", "1"),
    ]:
        cfg.set(key, value)

    data = m.gen_dataset(cfg, os.path.join(root, "data"))
    assert data["episodes"] == 100
    ds = m.Dataset.load(data["path"])
    assert len(ds) == 100 and ds.mode == "medium"
    assert abs(ds.mean_return() - sum(ds.returns()) / len(ds)) < 1e-9

    off = m.pretrain(cfg, data["path"], os.path.join(root, "offline"))
    net = m.QmixNet.load(off["policy"])
    assert net.n_agents == 2
    assert net.save(os.path.join(root, "copy.ckpt")) == off["policy_sha256"]
    stats = net.evaluate(cfg)
    assert "mean_return" in stats

    rows = m.finetune(cfg, os.path.join(root, "online"), offline=os.path.join(root, "offline"))
    assert rows[0]["step"] == 0 and rows[0]["lambda_memory"] == 1.0
    metrics_path = os.path.join(root, "online", "metrics.csv")
    assert len(m.metrics(metrics_path)) == len(rows)
    assert m.success_auc_of(metrics_path) >= 0.0
    return rows[-1]


def main():
    check_primitives()
    check_env()
    with tempfile.TemporaryDirectory() as root:
        last = check_pipeline(root)
    print("smoke test ok; final row", last)


if __name__ == "__main__":
    main()
