mod common;

use mos_core::lss::{estimate_prob, lss_min, sample_scheduler, trace_count, LssConfig};
use mos_core::pa::{ActionOrigin, Distribution, Pa, PaBuilder, StateId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

use common::psi;

// Initial state offering `k` Dirac choices to distinct terminal states.
fn fan(k: usize) -> Pa {
    let mut b = PaBuilder::new();
    let root = b.add_state("root", Vec::<&str>::new(), vec![]);
    b.set_initial(root);
    for j in 0..k {
        let leaf = b.add_state(format!("leaf{j}"), Vec::<&str>::new(), vec![]);
        let a = b.action(&format!("c{j}"), ActionOrigin::ReachabilityChoice);
        b.add_transition(root, a, Distribution::dirac(leaf)).unwrap();
    }
    b.build().unwrap()
}

fn first_choice_counts(k: usize, master: u64, seeds: u64) -> Vec<u64> {
    let m = fan(k);
    let mut counts = vec![0u64; k];
    for seed in 1..=seeds {
        let sigma = sample_scheduler(&m, master, seed);
        let a = sigma.choice(StateId(0)).unwrap();
        let j = m.transitions(StateId(0)).iter().position(|t| t.action == a).unwrap();
        counts[j] += 1;
    }
    counts
}

#[test]
fn two_way_choice_is_fair() {
    let n = 20_000;
    let heads = first_choice_counts(2, 3, n)[0];
    let b = Binomial::new(0.5, n).unwrap();
    let lower = b.cdf(heads);
    let upper = 1.0 - b.cdf(heads.saturating_sub(1));
    let p = 2.0 * lower.min(upper);
    assert!(p > 1e-3, "{heads} of {n}, p = {p}");
}

#[test]
fn six_way_choice_passes_chi_square() {
    let n = 60_000;
    let counts = first_choice_counts(6, 0, n);
    let expected = n as f64 / 6.0;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(5.0).unwrap().cdf(stat);
    assert!(p > 1e-3, "counts {counts:?}, chi2 = {stat}, p = {p}");
}

fn coin(p_safe: f64) -> Pa {
    let mut b = PaBuilder::new();
    let s0 = b.add_state("s0", Vec::<&str>::new(), vec![]);
    let ok = b.add_state("ok", Vec::<&str>::new(), vec![]);
    let bad = b.add_state("bad", vec![common::BAD], vec![]);
    b.set_initial(s0);
    let step = b.action("step", ActionOrigin::Internal);
    b.add_transition(s0, step, Distribution::new([(ok, p_safe), (bad, 1.0 - p_safe)]).unwrap())
        .unwrap();
    b.build().unwrap()
}

#[test]
fn estimates_meet_the_requested_confidence() {
    let m = coin(0.7);
    let sigma = sample_scheduler(&m, 0, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let runs = 200;
    let hits = (0..runs)
        .filter(|_| (estimate_prob(&m, &sigma, &psi(), 0.05, 0.2, &mut rng) - 0.7).abs() <= 0.05)
        .count();
    assert!(hits as f64 >= 0.8 * runs as f64, "{hits} of {runs}");
}

#[test]
fn trace_count_matches_bound() {
    assert_eq!(trace_count(0.05, 0.2), 461);
    assert_eq!(trace_count(0.01, 0.01), 26492);
}

#[test]
fn lss_is_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let m = common::random_pa(&mut rng, 10, 3);
    let cfg = LssConfig { master_seed: 9, horizon: 500, ..LssConfig::default() };
    let a = lss_min(&m, &psi(), &cfg).unwrap();
    let b = lss_min(&m, &psi(), &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.estimates.len(), 10);
    assert_eq!(a.seeds, (1..=10).collect::<Vec<u64>>());
}
