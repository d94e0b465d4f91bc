//! Short joint-distribution and consistency checks of the samplers.

mod common;

use common::*;

fn assert_agrees(names: &[&str], fwd: &[Vec<f64>], sc: &[Vec<f64>], limit: f64) {
    for (name, a, b, z) in compare(names, fwd, sc) {
        assert!(z.abs() < limit, "{name}: prior {a:.4} vs chain {b:.4} (z = {z:.2})");
    }
}

#[test]
fn plain_sampler_preserves_the_joint_law() {
    let toy = plain_toy();
    let fwd = plain_forward(&toy, 20_000, 1);
    let sc = plain_successive(&toy, 20_000, 500, 2);
    assert_agrees(&PLAIN_NAMES, &fwd, &sc, 4.0);
}

#[test]
fn space_time_sampler_preserves_the_joint_law() {
    let (toy, cov, sth) = st_toy();
    let fwd = st_forward(&toy, &cov, &sth, 20_000, 3);
    let sc = st_successive(&toy, &cov, &sth, 20_000, 500, 4);
    assert_agrees(&ST_NAMES, &fwd, &sc, 4.0);
}

#[test]
fn one_group_fit_matches_two_group_fit() {
    use mmm_core::data::{default_hyperparams, GroupPartition};
    use mmm_core::gibbs::{run_chain, ChainConfig};
    use mmm_core::simgen::{generate, Scenario, ScenarioSpec};

    let mut spec = ScenarioSpec::new(Scenario::SharedUniform, 11);
    spec.n = 1000;
    let (ds, _) = generate(&spec).unwrap();
    let config = ChainConfig { iterations: 3000, burn_in: 1000, seed: 3, ..Default::default() };
    let one = GroupPartition::single(ds.p()).unwrap();
    let two = spec.partition();
    let a = run_chain(&ds, &one, &default_hyperparams(&ds, &one), &config).unwrap();
    let b = run_chain(&ds, &two, &default_hyperparams(&ds, &two), &config).unwrap();
    let (ma, mb) = (implied_marginals(&a, &one), implied_marginals(&b, &two));
    for (j, (x, y)) in ma.iter().zip(&mb).enumerate() {
        assert!(l1(x, y) < 0.02, "variable {j}: {x:?} vs {y:?}");
    }
}

#[test]
fn single_epoch_without_space_matches_plain_sampler() {
    use mmm_core::stats::{ks_p_value, ks_statistic};
    let (a, b) = collapse_draws(0..5, 1000, 5);
    let d = ks_statistic(&a, &b);
    let p = ks_p_value(d, a.len(), b.len());
    assert!(p > 0.01, "KS D = {d:.4}, p = {p:.4}");
}
