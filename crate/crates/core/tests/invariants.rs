mod common;

use marl_o2o::exploration::{Schedule, ScheduleVariant};
use marl_o2o::learner::{draw_cql_samples, ovm_target, MuMode};
use marl_o2o::networks::{greedy_joint_action, QmixArch, QmixNet};
use marl_o2o::replay::{offline_count, MixingRatioSampler};
use marl_o2o::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use common::*;

proptest! {
    #[test]
    fn clamped_schedule_stays_between_endpoints(
        start in -2.0f64..2.0,
        end in -2.0f64..2.0,
        duration in 0u64..10_000,
        t in 0u64..20_000,
    ) {
        let s = Schedule::new(start, end, duration);
        let v = s.value(t);
        prop_assert!(v >= start.min(end) && v <= start.max(end));
        if t >= duration {
            prop_assert_eq!(v, end);
        }
        if duration > 0 {
            prop_assert_eq!(s.value(0), start);
        }
    }

    #[test]
    fn clamped_schedule_is_monotone(
        start in 0.0f64..1.0,
        end in 0.0f64..1.0,
        duration in 1u64..5000,
        t in 0u64..6000,
    ) {
        let s = Schedule::new(start, end, duration);
        let (a, b) = (s.value(t), s.value(t + 1));
        if start >= end {
            prop_assert!(b <= a);
        } else {
            prop_assert!(b >= a);
        }
    }

    #[test]
    fn literal_schedule_never_exceeds_end(
        start in 0.0f64..1.0,
        end in 0.0f64..1.0,
        duration in 1u64..5000,
        t in 0u64..6000,
    ) {
        let s = Schedule::new(start, end, duration).with_variant(ScheduleVariant::LiteralMin);
        prop_assert!(s.value(t) <= end);
    }

    #[test]
    fn sampler_composition_partitions_batch(rho in 0.0f64..=1.0, batch in 1usize..512) {
        let (off, on) = MixingRatioSampler::new(rho).unwrap().composition(batch);
        prop_assert_eq!(off + on, batch);
        prop_assert_eq!(off, offline_count(rho, batch));
        prop_assert!((off as f64 - rho * batch as f64).abs() <= 0.5);
    }

    #[test]
    fn ovm_target_is_the_larger_value(m in -1e3f64..1e3, y in -1e3f64..1e3) {
        let v = ovm_target(m, y);
        prop_assert!(v >= m && v >= y);
        prop_assert!(v == m || v == y);
    }

    #[test]
    fn mixer_is_monotone_in_every_agent(
        seed in any::<u64>(),
        q in prop::collection::vec(-10.0f64..10.0, 3),
        state in prop::collection::vec(-1.0f64..1.0, 4),
        bump in 1e-3f64..1.0,
        agent in 0usize..3,
    ) {
        let arch = QmixArch {
            n_agents: 3,
            state_dim: 4,
            obs_dim: 2,
            action_dim: 2,
            hidden_dim: 4,
            mixing_hidden_dim: 8,
            window: 1,
            agent_id: true,
        };
        let net = QmixNet::new(arch, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let s = Tensor::new(vec![1, 4], state).unwrap();
        let lo = net.mix(&Tensor::new(vec![1, 3], q.clone()).unwrap(), &s).unwrap()[0];
        let mut up = q;
        up[agent] += bump;
        let hi = net.mix(&Tensor::new(vec![1, 3], up).unwrap(), &s).unwrap()[0];
        prop_assert!(hi >= lo);
    }

    #[test]
    fn greedy_joint_action_respects_masks(
        values in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 1..5),
        mask_bits in prop::collection::vec(1u8..16, 1..5),
    ) {
        let n = values.len().min(mask_bits.len());
        let values = &values[..n];
        let masks: Vec<Vec<bool>> = mask_bits[..n]
            .iter()
            .map(|b| (0..4).map(|k| b & (1 << k) != 0).collect())
            .collect();
        let joint = greedy_joint_action(values, &masks).unwrap();
        for i in 0..n {
            prop_assert!(masks[i][joint[i]]);
            for a in 0..4 {
                if masks[i][a] {
                    prop_assert!(values[i][joint[i]] >= values[i][a]);
                }
            }
        }
    }
}

#[test]
fn uniform_mu_draws_pass_chi_square() {
    let env = small_grid();
    let net = net_for(&env, 8, 8, 1);
    let episodes = random_episodes(&env, &net, 40, 2);
    let batch = batch_of(&net, &episodes);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let actions = net.arch.action_dim;
    let mut counts = vec![vec![0u64; actions]; net.arch.n_agents];
    for _ in 0..10 {
        let samples = draw_cql_samples(&net, &batch, MuMode::Uniform { samples: 4 }, &mut rng).unwrap();
        for row in &samples.rows {
            assert!(batch.avail[row.step].iter().all(|m| m.iter().all(|a| *a)));
            for (i, a) in row.joint.iter().enumerate() {
                counts[i][*a] += 1;
            }
        }
    }
    let dist = ChiSquared::new((actions - 1) as f64).unwrap();
    for per_agent in &counts {
        let total: u64 = per_agent.iter().sum();
        let expected = total as f64 / actions as f64;
        let stat: f64 = per_agent
            .iter()
            .map(|c| (*c as f64 - expected).powi(2) / expected)
            .sum();
        let p = 1.0 - dist.cdf(stat);
        assert!(p > 1e-3, "chi-square {stat} p {p} counts {per_agent:?}");
    }
}

#[test]
fn exhaustive_mu_weights_sum_to_one_per_step() {
    let env = small_grid();
    let net = net_for(&env, 8, 8, 4);
    let episodes = random_episodes(&env, &net, 2, 5);
    let batch = batch_of(&net, &episodes);
    let samples =
        draw_cql_samples(&net, &batch, MuMode::Exhaustive, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut per_step = vec![0.0; batch.avail.len()];
    for row in &samples.rows {
        per_step[row.step] += row.weight;
    }
    for w in per_step {
        assert!((w - 1.0).abs() < 1e-12);
    }
}
