//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line to
//! stderr (bypassing output capture); the test fails if any criterion does.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::HashMap;
use std::io::Write;
use std::time::{Duration, Instant};

use mos_cli::commands;
use mos_cli::{CommandKind, RunConfig};
use mos_core::casestudies::counterexamples as ce;
use mos_core::casestudies::{preset_pair, CaseConfig, PRESETS};
use mos_core::lss::{coupled_lss, estimate_prob, fsd_check, lss_min, sample_scheduler, trace_count, LssConfig};
use mos_core::mos::{negate, trim_lss, trim_pmc};
use mos_core::pa::{count_schedulers, enumerate_schedulers, ActionOrigin, Distribution, Pa, PaBuilder};
use mos_core::pmc::{
    decomposition_check, min_safety_prob, min_schedulers, prob_under_scheduler, safety_values, SafetyProperty,
};
use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use common::{all_scheduler_order, min_scheduler_order, psi, random_acyclic_dtmc, random_acyclic_pa};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn within(t: Instant, limit: Duration) -> (bool, String) {
    let e = t.elapsed();
    (e < limit, format!("{:.2}s of {}s", e.as_secs_f64(), limit.as_secs()))
}

const VI_TOL: f64 = 1e-12;

fn min_prob(m: &Pa, psi: &SafetyProperty) -> f64 {
    min_safety_prob(m, psi, VI_TOL).unwrap().probability
}

fn enumerated_min(m: &Pa, psi: &SafetyProperty, cap: u64) -> f64 {
    enumerate_schedulers(m, cap)
        .unwrap()
        .iter(m)
        .map(|s| prob_under_scheduler(m, &s, psi).unwrap())
        .fold(f64::INFINITY, f64::min)
}

/// Every built desk model: presets and both start states of the counterexamples.
fn desk_models() -> Vec<(String, mos_core::casestudies::CaseModel)> {
    let mut out = Vec::new();
    for name in PRESETS {
        let (a, b) = preset_pair(name).unwrap();
        let configs: Vec<CaseConfig> = if a == b { vec![a] } else { vec![a, b] };
        for (i, c) in configs.iter().enumerate() {
            out.push((format!("{name}#{i}"), c.build().unwrap()));
        }
    }
    out
}

fn counterexamples() -> Verdict {
    let t = Instant::now();
    let cases = [
        ("ce1", ce::counterexample_distance(), ce::ce1_pipeline(20.0).unwrap(), (0.2955, 0.315)),
        ("ce2", ce::counterexample_speed(0.5), ce::ce2_pipeline(0.5).unwrap(), (0.34375, 0.5)),
        ("ce3", ce::counterexample_tank(), ce::ce3_pipeline().unwrap(), (0.6912, 0.4752)),
    ];
    let close = |a: (f64, f64), b: (f64, f64), tol: f64| (a.0 - b.0).abs() <= tol && (a.1 - b.1).abs() <= tol;
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, closed, pipe, want) in cases {
        let ok = close(closed, want, 1e-9) && close(pipe, want, 1e-8);
        pass &= ok;
        parts.push(format!("{name} ({:.6}, {:.6})", pipe.0, pipe.1));
    }
    let (fast, time) = within(t, Duration::from_secs(5));
    verdict(pass && fast, format!("{}; {time}", parts.join(", ")))
}

fn pmc_trimming_preserves_minimum() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let (mut models, mut agree, mut attempts, mut worst) = (0, 0, 0, 0.0f64);
    while models < 100 && attempts < 100_000 {
        attempts += 1;
        let m = random_acyclic_pa(&mut rng, 8, 3);
        if count_schedulers(&m) > BigUint::from(1000u32) {
            continue;
        }
        let order = min_scheduler_order(&m);
        let (trimmed, report) = trim_pmc(&m, &order).unwrap();
        if report.transitions_removed == 0 {
            continue;
        }
        // The order holds under every minimizing scheduler.
        let all: Vec<_> = m.states().collect();
        let mins = min_schedulers(&m, &psi(), 1e-9, 10_000).unwrap();
        let pairs = report.state_pairs();
        let holds = mins.iter().all(|s| {
            let v = safety_values(&m, s, &psi(), &all).unwrap();
            pairs.iter().all(|&(a, b)| v[a.0] >= v[b.0] - 1e-12)
        });
        assert!(holds, "generated order fails its own check");
        models += 1;
        let gap = (min_prob(&m, &psi()) - min_prob(&trimmed, &psi())).abs();
        worst = worst.max(gap);
        if gap <= 1e-9 {
            agree += 1;
        }
    }
    let (fast, time) = within(t, Duration::from_secs(120));
    verdict(
        models == 100 && agree == 100 && fast,
        format!("{agree}/{models} equal, max gap {worst:.1e}; {time}"),
    )
}

fn lss_trimming_is_conservative() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let (mut models, mut attempts, mut violations) = (0, 0, 0);
    let (mut pooled_a, mut pooled_b) = (Vec::new(), Vec::new());
    while models < 50 && attempts < 100_000 {
        attempts += 1;
        let m = random_acyclic_pa(&mut rng, 8, 3);
        if count_schedulers(&m) > BigUint::from(1000u32) {
            continue;
        }
        let order = all_scheduler_order(&m);
        let (trimmed, report) = trim_lss(&m, &order).unwrap();
        if report.transitions_removed == 0 {
            continue;
        }
        let cfg = LssConfig { n: 200, exact: true, master_seed: models as u64, ..LssConfig::default() };
        let c = coupled_lss(&m, &trimmed, &report, &psi(), &cfg).unwrap();
        violations += c
            .original
            .estimates
            .iter()
            .zip(&c.trimmed.estimates)
            .filter(|(a, b)| **a < **b - 1e-9)
            .count();
        pooled_a.extend(c.original.estimates);
        pooled_b.extend(c.trimmed.estimates);
        models += 1;
    }
    let fsd = fsd_check(&pooled_a, &pooled_b);
    let (fast, time) = within(t, Duration::from_secs(300));
    verdict(
        models == 50 && violations == 0 && fsd.dominates && fast,
        format!("{models} models x 200 seeds, {violations} violations, fsd gap {:.1e}; {time}", fsd.max_gap),
    )
}

fn decomposition_identity() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    for _ in 0..100 {
        let m = random_acyclic_dtmc(&mut rng, 12);
        let sigma = mos_core::pa::Scheduler::first_choice(&m);
        // Brute force: probability of every maximal path.
        let mut paths = Vec::new();
        let mut stack = vec![(vec![m.initial()], 1.0)];
        while let Some((p, q)) = stack.pop() {
            let s = *p.last().unwrap();
            match (m.has_label(s, common::BAD), m.transitions(s).first()) {
                (false, Some(tr)) => {
                    for &(d, r) in tr.dist.support() {
                        let mut longer = p.clone();
                        longer.push(d);
                        stack.push((longer, q * r));
                    }
                }
                _ => paths.push((p, q)),
            }
        }
        let safe = |p: &Vec<_>| !p.iter().any(|&x| m.has_label(x, common::BAD));
        let total: f64 = paths.iter().filter(|(p, _)| safe(p)).map(|e| e.1).sum();
        for s in m.states() {
            let d = decomposition_check(&m, &sigma, &psi(), s).unwrap();
            let avoiding: f64 = paths.iter().filter(|(p, _)| safe(p) && !p.contains(&s)).map(|e| e.1).sum();
            let reach: f64 = paths.iter().filter(|(p, _)| p.contains(&s)).map(|e| e.1).sum();
            worst = worst.max(d.residual).max((d.total - total).abs());
            if (d.avoiding - avoiding).abs() > 1e-10 || (d.reach - reach).abs() > 1e-10 {
                mismatches += 1;
            }
        }
    }
    let (fast, time) = within(t, Duration::from_secs(60));
    verdict(
        worst < 1e-10 && mismatches == 0 && fast,
        format!("100 chains, max residual {worst:.1e}, {mismatches} term mismatches; {time}"),
    )
}

type Variant = (String, Pa, SafetyProperty);

fn trim_variants(name: &str, m: &mos_core::casestudies::CaseModel) -> Vec<Variant> {
    let mut out = vec![(format!("{name}/none"), m.pa.clone(), m.property.clone())];
    if let Some(o) = m.orders.first() {
        out.push((format!("{name}/pmc"), trim_pmc(&m.pa, o).unwrap().0, m.property.clone()));
        out.push((format!("{name}/lss"), trim_lss(&m.pa, o).unwrap().0, m.property.clone()));
        out.push((format!("{name}/neg"), trim_pmc(&m.pa, &negate(o)).unwrap().0, m.property.clone()));
    }
    out
}

fn oracle_equivalence(models: &[(String, mos_core::casestudies::CaseModel)]) -> Verdict {
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    let mut failed = Vec::new();
    for (name, m) in models {
        for (label, pa, psi) in trim_variants(name, m) {
            if count_schedulers(&pa) > BigUint::from(2000u32) {
                skipped += 1;
                continue;
            }
            checked += 1;
            let gap = (min_prob(&pa, &psi) - enumerated_min(&pa, &psi, 2000)).abs();
            worst = worst.max(gap);
            if gap > 1e-8 {
                failed.push(label);
            }
        }
    }
    verdict(
        checked > 0 && failed.is_empty(),
        format!("{checked} models checked, {skipped} above 2000 schedulers, max gap {worst:.1e} {failed:?}"),
    )
}

fn count_law(models: &[(String, mos_core::casestudies::CaseModel)]) -> Verdict {
    let (mut checked, mut failed) = (0, Vec::new());
    for (name, m) in models {
        let Some(o) = m.orders.first() else { continue };
        let (t, report) = trim_lss(&m.pa, o).unwrap();
        let d: BigUint = report.branching_factors(&m.pa).iter().map(|&(_, k)| BigUint::from(k)).product();
        checked += 1;
        if count_schedulers(&m.pa) != d * count_schedulers(&t) {
            failed.push(name.clone());
        }
    }
    verdict(checked == models.len() && failed.is_empty(), format!("{checked} models, failures {failed:?}"))
}

fn uniform_sampling() -> Verdict {
    // Two independent choice states with 2 and 3 options.
    let mut b = PaBuilder::new();
    let root = b.add_state("root", Vec::<&str>::new(), vec![]);
    let l = b.add_state("l", Vec::<&str>::new(), vec![]);
    let r = b.add_state("r", Vec::<&str>::new(), vec![]);
    b.set_initial(root);
    let step = b.action("step", ActionOrigin::Internal);
    b.add_transition(root, step, Distribution::new([(l, 0.5), (r, 0.5)]).unwrap()).unwrap();
    for (s, k) in [(l, 2), (r, 3)] {
        for j in 0..k {
            let leaf = b.add_state(format!("{}{j}", if s == l { "l" } else { "r" }), Vec::<&str>::new(), vec![]);
            let a = b.action(&format!("c{j}"), ActionOrigin::ReachabilityChoice);
            b.add_transition(s, a, Distribution::dirac(leaf)).unwrap();
        }
    }
    let m = b.build().unwrap();
    let space = enumerate_schedulers(&m, 100).unwrap();
    let index: HashMap<_, usize> = space.iter(&m).enumerate().map(|(i, s)| (s.choices().to_vec(), i)).collect();
    let mut counts = vec![0u64; index.len()];
    let n = 60_000u64;
    for seed in 1..=n {
        counts[index[sample_scheduler(&m, 0, seed).choices()]] += 1;
    }
    let e = n as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    let p = 1.0 - ChiSquared::new(counts.len() as f64 - 1.0).unwrap().cdf(stat);
    verdict(
        counts.len() == 6 && p > 0.001,
        format!("{} schedulers, counts {counts:?}, chi2 {stat:.2}, p {p:.3}", counts.len()),
    )
}

fn statistical_soundness() -> Verdict {
    let model = preset_pair("ce3").unwrap().0.build().unwrap();
    let sigma = sample_scheduler(&model.pa, 0, 1);
    let p = prob_under_scheduler(&model.pa, &sigma, &model.property).unwrap();
    let traces = trace_count(0.05, 0.2);
    let mut rng = ChaCha8Rng::seed_from_u64(8008);
    let (mut hits, mut integral) = (0, true);
    for _ in 0..200 {
        let est = estimate_prob(&model.pa, &sigma, &model.property, 0.05, 0.2, &mut rng);
        let k = est * traces as f64;
        integral &= (k - k.round()).abs() < 1e-6;
        if (est - p).abs() <= 0.05 {
            hits += 1;
        }
    }
    verdict(
        traces == 461 && integral && hits >= 150,
        format!("{traces} traces, {hits}/200 within 0.05 of {p:.4}"),
    )
}

fn qualitative_trends() -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    for name in ["aebs-desk", "tank-desk"] {
        let m = preset_pair(name).unwrap().0.build().unwrap();
        let o = &m.orders[0];
        let (t, _) = trim_pmc(&m.pa, o).unwrap();
        let (neg, _) = trim_pmc(&m.pa, &negate(o)).unwrap();
        let base = min_prob(&m.pa, &m.property);
        let negp = min_prob(&neg, &m.property);
        let fewer = t.num_transitions() < m.pa.num_transitions();
        pass &= fewer && negp >= base - 1e-9;
        notes.push(format!(
            "{name}: {} -> {} transitions, neg {negp:.6} vs {base:.6}",
            m.pa.num_transitions(),
            t.num_transitions()
        ));
    }
    let m = preset_pair("tank-desk").unwrap().0.build().unwrap();
    let (t, _) = trim_lss(&m.pa, &m.orders[0]).unwrap();
    let mean = |pa: &Pa, n: usize| {
        (0..10u64)
            .map(|seed| lss_min(pa, &m.property, &LssConfig { n, master_seed: seed, ..LssConfig::default() }).unwrap().minimum)
            .sum::<f64>()
            / 10.0
    };
    let (untrimmed, trimmed) = (mean(&m.pa, 10), mean(&t, 1));
    pass &= trimmed <= untrimmed;
    notes.push(format!("tank lss mean n=1 trimmed {trimmed:.4} vs n=10 untrimmed {untrimmed:.4}"));
    verdict(pass, notes.join("; "))
}

fn mos_validation() -> Verdict {
    let t = Instant::now();
    let cfg = RunConfig {
        command: Some(CommandKind::ValidateMos),
        preset: Some("tank-desk".into()),
        ..RunConfig::default()
    };
    let (out, _) = commands::validate(&cfg).unwrap();
    let ps: Vec<f64> = out.rows.iter().map(|r| r.p).collect();
    let in_range = ps.iter().all(|p| (0.0..=1.0).contains(p));
    let has_one = ps.iter().any(|&p| p == 1.0);
    let floor = ps.iter().all(|&p| p >= 0.5);
    let (fast, time) = within(t, Duration::from_secs(600));
    verdict(
        !ps.is_empty() && in_range && has_one && floor && fast,
        format!("{} pairs, p in [{:.3}, {:.3}]; {time}", ps.len(), ps.iter().copied().fold(1.0, f64::min), ps.iter().copied().fold(0.0, f64::max)),
    )
}

#[test]
fn acceptance() {
    let models = desk_models();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("counterexample reproduction", Box::new(counterexamples)),
        ("pmc trimming preserves the minimum", Box::new(pmc_trimming_preserves_minimum)),
        ("lss trimming is conservative", Box::new(lss_trimming_is_conservative)),
        ("decomposition identity", Box::new(decomposition_identity)),
        ("oracle equivalence", Box::new(|| oracle_equivalence(&models))),
        ("scheduler-count law", Box::new(|| count_law(&models))),
        ("uniform scheduler sampling", Box::new(uniform_sampling)),
        ("statistical soundness", Box::new(statistical_soundness)),
        ("qualitative trends", Box::new(qualitative_trends)),
        ("order validation", Box::new(mos_validation)),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let v = run();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        writeln!(err, "acceptance {:>2} {tag}: {name}: {}", i + 1, v.detail).unwrap();
        if !v.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
