//! Acceptance suite: one test per exit criterion, each printing a pass
//! line with the measured quantities (visible under --nocapture).

use std::time::{Duration, Instant};

use rand::Rng;

use divprice::calibration::{calibrate, DEFAULT_PRICE_CAP};
use divprice::experiment::{run_experiment, ExperimentConfig};
use divprice::mechanism::{run, Ordering};
use divprice::revenue::{lower_bound_instance, revenue_gap, PriceGridSpec};
use divprice::rng::{substream, STREAM_INSTANCES};
use divprice::valuation::{
    sample_profile_with, ConcaveValuation, ValuationDistribution, ValuationProfile,
};
use divprice::welfare::{optimal_allocation, solve_constants, welfare_ratio_orderings};

/// Frozen reference constants (independent high-precision root finding).
const BETA_REF: f64 = 0.872453249600072;
const RHO1_REF: f64 = 0.317844432899373;
const RHO2_REF: f64 = 0.419059784196405;

fn power(a: f64, c: f64) -> ConcaveValuation {
    ConcaveValuation::power(a, c).unwrap()
}

fn linear(a: f64) -> ConcaveValuation {
    ConcaveValuation::linear(a).unwrap()
}

fn point_mass(v: ConcaveValuation) -> ValuationDistribution {
    ValuationDistribution::point_mass(v)
}

/// Twenty smooth instances with 2 to 8 agents. Power-family supports keep
/// the sold-fraction curve continuous and strictly decreasing wherever it
/// is below 1, so every target in (0, 1) is attainable.
fn smooth_suite() -> Vec<Vec<ValuationDistribution>> {
    let mut rng = substream(4242, STREAM_INSTANCES, 7);
    (0..20u64)
        .map(|k| {
            let n = 2 + (k % 7) as usize;
            (0..n)
                .map(|_| {
                    let random_power = |rng: &mut rand_chacha::ChaCha8Rng| {
                        power(rng.random_range(0.3..3.0), rng.random_range(0.35..0.95))
                    };
                    match rng.random_range(0..3) {
                        0 => point_mass(random_power(&mut rng)),
                        1 => {
                            let atoms = rng.random_range(2..=3);
                            let mut probs: Vec<f64> =
                                (0..atoms).map(|_| rng.random_range(0.1..1.0)).collect();
                            let total: f64 = probs.iter().sum();
                            probs.iter_mut().for_each(|p| *p /= total);
                            ValuationDistribution::finite_support(
                                probs
                                    .into_iter()
                                    .map(|p| (random_power(&mut rng), p))
                                    .collect(),
                            )
                            .unwrap()
                        }
                        _ => {
                            let base = random_power(&mut rng);
                            let atoms = rng.random_range(2..=3);
                            let mut probs: Vec<f64> =
                                (0..atoms).map(|_| rng.random_range(0.1..1.0)).collect();
                            let total: f64 = probs.iter().sum();
                            probs.iter_mut().for_each(|p| *p /= total);
                            ValuationDistribution::scaled_family(
                                base,
                                probs
                                    .into_iter()
                                    .map(|p| (rng.random_range(0.25..2.5), p))
                                    .collect(),
                            )
                            .unwrap()
                        }
                    }
                })
                .collect()
        })
        .collect()
}

/// Orderings examined under the any-order guarantee: identity, reverse,
/// and three fixed random permutations.
fn fixed_orderings(n: usize, seed: u64) -> Vec<Ordering> {
    let mut rng = substream(seed, STREAM_INSTANCES, 99);
    let mut orderings = vec![Ordering::identity(n), Ordering::reversed(n)];
    for _ in 0..3 {
        orderings.push(Ordering::fixed(Ordering::UniformRandom.realize(n, &mut rng)).unwrap());
    }
    orderings
}

#[test]
fn criterion_01_constants() {
    let warm = solve_constants();
    assert!(warm.beta.is_finite());
    let started = Instant::now();
    let c = solve_constants();
    let elapsed = started.elapsed();

    assert!((c.beta - BETA_REF).abs() < 5e-7, "beta = {}", c.beta);
    assert!((c.rho1 - RHO1_REF).abs() < 5e-7, "rho1 = {}", c.rho1);
    assert!((c.rho2 - RHO2_REF).abs() < 5e-7, "rho2 = {}", c.rho2);
    // Published 6-decimal approximations.
    assert!((c.beta - 0.872453).abs() < 5e-7);
    assert!((c.rho1 - 0.317844).abs() < 5e-7);
    assert!((c.rho2 - 0.41906).abs() < 5e-6);
    assert!(
        elapsed < Duration::from_millis(1),
        "solve_constants took {elapsed:?}"
    );
    println!(
        "[PASS] criterion 1 (constants): beta={:.9} rho1={:.9} rho2={:.9} in {elapsed:?}",
        c.beta, c.rho1, c.rho2
    );
}

#[test]
fn criterion_02_any_order_welfare_guarantee() {
    let rho1 = solve_constants().rho1;
    let mut worst = f64::INFINITY;
    for (k, dists) in smooth_suite().iter().enumerate() {
        let seed = 10_000 + k as u64;
        let cal = calibrate(dists, rho1, 100_000, seed, 1e-3, DEFAULT_PRICE_CAP);
        assert!(!cal.target_unreachable, "instance {k} not calibratable");
        assert!(
            cal.residual <= 1e-3,
            "instance {k} residual {}",
            cal.residual
        );

        let orderings = fixed_orderings(dists.len(), seed);
        let ratios = welfare_ratio_orderings(dists, cal.price, &orderings, 100_000, seed);
        for (j, est) in ratios.iter().enumerate() {
            let slack = est.ratio - (rho1 - 3.0 * est.stderr);
            assert!(
                slack >= 0.0,
                "instance {k} ordering {j}: ratio {} below rho1 {} - 3se",
                est.ratio,
                rho1
            );
            worst = worst.min(est.ratio);
        }
    }
    println!(
        "[PASS] criterion 2 (any-order welfare): 20 instances x 5 fixed orders, \
         worst ratio {worst:.4} >= rho1 {rho1:.6} - 3se"
    );
}

#[test]
fn criterion_03_random_order_welfare_guarantee() {
    let rho2 = solve_constants().rho2;
    let mut worst = f64::INFINITY;
    for (k, dists) in smooth_suite().iter().enumerate() {
        let seed = 20_000 + k as u64;
        let cal = calibrate(dists, rho2, 100_000, seed, 1e-3, DEFAULT_PRICE_CAP);
        assert!(!cal.target_unreachable, "instance {k} not calibratable");
        assert!(cal.residual <= 1e-3);

        let ratios =
            welfare_ratio_orderings(dists, cal.price, &[Ordering::UniformRandom], 100_000, seed);
        let est = &ratios[0];
        assert!(
            est.ratio >= rho2 - 3.0 * est.stderr,
            "instance {k}: ratio {} below rho2 {} - 3se",
            est.ratio,
            rho2
        );
        worst = worst.min(est.ratio);
    }
    println!(
        "[PASS] criterion 3 (random-order welfare): 20 instances, \
         worst ratio {worst:.4} >= rho2 {rho2:.6} - 3se"
    );
}

#[test]
fn criterion_04_utility_lemmas() {
    let config = ExperimentConfig::from_json(
        r#"{"task": "verify-lemmas", "seed": 404, "instances": 200,
            "samples_per_instance": 10000, "min_lemma_instances": 10,
            "product_tuples": 100}"#,
    )
    .unwrap();
    let report = run_experiment(&config, None).unwrap();
    let aux = report.values["aux_lemma_worst_margin_3se"];
    let rand_order = report.values["random_order_lemma_worst_margin_3se"];
    assert!(aux >= -1e-12, "aux lemma worst margin {aux}");
    assert!(
        rand_order >= -1e-12,
        "random-order lemma worst margin {rand_order}"
    );
    assert!(report.all_passed(), "checks: {:?}", report.checks);
    println!(
        "[PASS] criterion 4 (utility lemmas): 200 instances each, \
         worst margins + 3se: {aux:.5} and {rand_order:.5}"
    );
}

#[test]
fn criterion_05_allocation_identity() {
    let suite = smooth_suite();
    let mut runs = 0u64;
    let mut max_gap = 0.0f64;
    for (k, dists) in suite.iter().enumerate() {
        let mut rng = substream(50_000 + k as u64, STREAM_INSTANCES, 0);
        let scale = dists
            .iter()
            .map(|d| {
                d.support()
                    .unwrap()
                    .iter()
                    .map(|(v, _)| v.deriv(0.25))
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        for _ in 0..50_000 {
            let profile = sample_profile_with(dists, &mut rng);
            let p = rng.random_range(0.0..2.0 * scale);
            let order = Ordering::UniformRandom.realize(dists.len(), &mut rng);
            let out = run(&profile, p, &order);
            max_gap = max_gap.max(out.identity_gap());
            runs += 1;
        }
    }
    assert!(runs >= 1_000_000);
    assert!(max_gap <= 1e-12, "identity gap {max_gap}");
    println!(
        "[PASS] criterion 5 (allocation identity): {runs} runs, max |sum y - min(1, sum y*)| = {max_gap:.2e}"
    );
}

#[test]
fn criterion_06_minimum_lemma_oracle() {
    let config = ExperimentConfig::from_json(
        r#"{"task": "verify-lemmas", "seed": 606, "instances": 2,
            "samples_per_instance": 500, "min_lemma_instances": 1000,
            "product_tuples": 10000}"#,
    )
    .unwrap();
    let report = run_experiment(&config, None).unwrap();
    let slack = report.values["min_lemma_worst_slack"];
    let tightness = report.values["min_lemma_bernoulli_tightness"];
    let scaling = report.values["product_scaling_worst_margin"];
    assert!(slack >= -1e-12, "oracle fell below the bound by {slack}");
    assert!(
        tightness <= 1e-12,
        "Bernoulli tightness violated by {tightness}"
    );
    assert!(scaling >= -1e-12, "product scaling margin {scaling}");
    println!(
        "[PASS] criterion 6 (minimum lemma): 1000 instances, worst slack {slack:.2e}, \
         Bernoulli tightness {tightness:.2e}, product-scaling margin {scaling:.2e}"
    );
}

#[test]
fn criterion_07_lower_bound_instances() {
    for kappa in [1.1, 2.0, std::f64::consts::E, 10.0, 100.0] {
        let inst = lower_bound_instance(kappa).unwrap();
        assert!(
            (inst.best_linear.revenue - inst.plateau).abs() <= 1e-6,
            "kappa {kappa}: best linear {} vs plateau {}",
            inst.best_linear.revenue,
            inst.plateau
        );
        assert!((inst.nonlinear_revenue - 1.0).abs() <= 1e-12);
        assert!(
            inst.gap >= 1.0 + kappa.ln() - 1e-6,
            "kappa {kappa}: gap {} below 1 + ln kappa",
            inst.gap
        );
        if (kappa - std::f64::consts::E).abs() < 1e-12 {
            assert!(
                inst.gap >= 2.0 - 1e-9,
                "kappa = e must give gap >= 2, got {}",
                inst.gap
            );
        }
    }
    println!(
        "[PASS] criterion 7 (lower bound): kappa in {{1.1, 2, e, 10, 100}}, \
         best linear = 1/rho within 1e-6, gap >= 1 + ln kappa"
    );
}

#[test]
fn criterion_08_revenue_gap_certificate() {
    let pl = ConcaveValuation::piecewise_linear(vec![(0.0, 0.0), (0.3, 0.9), (1.0, 1.2)]).unwrap();
    let mix_13 =
        ValuationDistribution::finite_support(vec![(linear(1.0), 0.5), (linear(3.0), 0.5)])
            .unwrap();
    let mix_half_2 =
        ValuationDistribution::finite_support(vec![(linear(0.5), 0.5), (linear(2.0), 0.5)])
            .unwrap();
    let mix_logcap = ValuationDistribution::finite_support(vec![
        (ConcaveValuation::log_cap(3.0).unwrap(), 0.5),
        (linear(1.5), 0.5),
    ])
    .unwrap();
    let scaled =
        ValuationDistribution::scaled_family(linear(1.0), vec![(0.5, 0.5), (2.0, 0.5)]).unwrap();

    let instances: Vec<Vec<ValuationDistribution>> = vec![
        vec![point_mass(linear(1.0))],
        vec![point_mass(linear(3.0))],
        vec![point_mass(linear(1.0)), point_mass(linear(3.0))],
        vec![point_mass(
            ConcaveValuation::log_cap(std::f64::consts::E).unwrap(),
        )],
        vec![point_mass(ConcaveValuation::log_cap(2.0).unwrap())],
        vec![
            point_mass(ConcaveValuation::log_cap(5.0).unwrap()),
            point_mass(linear(2.0)),
            point_mass(pl),
        ],
        vec![mix_13.clone(), mix_13],
        vec![mix_half_2.clone(), mix_half_2],
        vec![scaled],
        vec![mix_logcap.clone(), mix_logcap],
    ];

    let mut regular_count = 0;
    for (k, dists) in instances.iter().enumerate() {
        let report = revenue_gap(dists, 256, &PriceGridSpec::default(), 1, 808).unwrap();
        assert!(
            report.upper_bound
                >= report.best_linear.revenue - 3.0 * report.best_linear.stderr - 1e-9,
            "instance {k}: upper bound {} below best linear {}",
            report.upper_bound,
            report.best_linear.revenue
        );
        if report.regular {
            regular_count += 1;
            assert_eq!(
                report.certificate_holds,
                Some(true),
                "instance {k}: gap {} exceeds certificate {}",
                report.gap,
                report.certificate
            );
        }
    }
    assert!(
        regular_count >= 6,
        "too few regular instances to exercise the certificate"
    );
    println!(
        "[PASS] criterion 8 (gap certificate): {} instances, {regular_count} regular, \
         gap <= 2k(2k-1)e on all regular, UB >= R_lin on all",
        instances.len()
    );
}

/// Brute-force welfare maximization on the unit simplex at step `h`,
/// restricted to a window around `center` (full range when center is None).
fn brute_force_best(
    profile: &ValuationProfile,
    h: f64,
    center: Option<(&[f64], f64)>,
) -> (f64, Vec<f64>) {
    let steps = (1.0 / h).round() as i64;
    let window = |i: usize| -> (i64, i64) {
        match center {
            None => (0, steps),
            Some((c, radius)) => {
                let mid = (c[i] / h).round() as i64;
                let r = (radius / h).round() as i64;
                ((mid - r).max(0), (mid + r).min(steps))
            }
        }
    };
    let mut best = (f64::NEG_INFINITY, vec![0.0; profile.len()]);
    match profile.len() {
        2 => {
            let (lo, hi) = window(0);
            for i in lo..=hi {
                let x0 = i as f64 * h;
                let x1 = 1.0 - x0;
                let value = profile.agent(0).value(x0) + profile.agent(1).value(x1);
                if value > best.0 {
                    best = (value, vec![x0, x1]);
                }
            }
        }
        3 => {
            let (lo0, hi0) = window(0);
            let (lo1, hi1) = window(1);
            for i in lo0..=hi0 {
                let x0 = i as f64 * h;
                for j in lo1..=hi1.min(steps - i) {
                    let x1 = j as f64 * h;
                    let x2 = (1.0 - x0 - x1).max(0.0);
                    let value = profile.agent(0).value(x0)
                        + profile.agent(1).value(x1)
                        + profile.agent(2).value(x2);
                    if value > best.0 {
                        best = (value, vec![x0, x1, x2]);
                    }
                }
            }
        }
        _ => unreachable!("oracle built for 2 and 3 agents"),
    }
    best
}

#[test]
fn criterion_09_water_filling_oracle() {
    let mut rng = substream(909, STREAM_INSTANCES, 0);
    let mut max_err = 0.0f64;
    for trial in 0..100 {
        let n = 2 + (trial % 2);
        let all_smooth = trial % 3 == 0;
        let vals: Vec<ConcaveValuation> = (0..n)
            .map(|_| {
                if all_smooth {
                    power(rng.random_range(0.3..3.0), rng.random_range(0.35..0.95))
                } else {
                    match rng.random_range(0..4) {
                        0 => power(rng.random_range(0.3..3.0), rng.random_range(0.35..0.95)),
                        1 => linear(rng.random_range(0.2..3.0)),
                        2 => {
                            let z = rng.random_range(0.2..0.8);
                            let s1 = rng.random_range(0.5..3.0);
                            let s2 = s1 * rng.random_range(0.1..0.9);
                            ConcaveValuation::piecewise_linear(vec![
                                (0.0, 0.0),
                                (z, s1 * z),
                                (1.0, s1 * z + s2 * (1.0 - z)),
                            ])
                            .unwrap()
                        }
                        _ => ConcaveValuation::log_cap(rng.random_range(1.2..10.0)).unwrap(),
                    }
                }
            })
            .collect();
        let profile = ValuationProfile::new(vals).unwrap();
        let opt = optimal_allocation(&profile);

        // The welfare objective is concave on the simplex, so refining the
        // grid around the coarse optimum finds the fine-grid maximum.
        let (mut value, mut point) = brute_force_best(&profile, 1e-2, None);
        for h in [1e-3, 1e-4] {
            let refined = brute_force_best(&profile, h, Some((&point, 25.0 * h)));
            value = refined.0;
            point = refined.1;
        }

        let err = (opt.welfare - value).abs();
        max_err = max_err.max(err);
        assert!(
            err <= 1e-3,
            "trial {trial}: water-filling {} vs grid {}",
            opt.welfare,
            value
        );

        if all_smooth {
            for (v, &x) in profile.iter().zip(&opt.fractions) {
                if x <= 0.0 {
                    assert!(v.deriv(0.0) <= opt.level + 1e-6);
                } else if x >= 1.0 {
                    assert!(v.deriv(1.0) >= opt.level - 1e-6);
                } else {
                    assert!(
                        (v.deriv(x) - opt.level).abs() <= 1e-6,
                        "trial {trial}: KKT residual {}",
                        (v.deriv(x) - opt.level).abs()
                    );
                }
            }
        }
    }
    println!(
        "[PASS] criterion 9 (water-filling oracle): 100 profiles, \
         max |objective - grid brute force| = {max_err:.2e}, KKT residuals <= 1e-6"
    );
}

#[test]
fn criterion_10_byte_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        r#"{"task": "calibrate", "seed": 1001, "samples": 20000, "target": "rho1",
            "emit_curves": true, "curve_points": 65,
            "agents": [{"kind": "power", "a": 1.0, "c": 0.5},
                        {"kind": "power", "a": 2.0, "c": 0.7}]}"#,
        r#"{"task": "revenue-gap", "seed": 1002, "samples": 1000, "grid_m": 64,
            "price_points": 64, "emit_curves": true, "curve_points": 65,
            "agents": [{"kind": "log_cap", "kappa": 4.0}, {"kind": "linear", "a": 2.0}]}"#,
        r#"{"task": "verify-lemmas", "seed": 1003, "instances": 4,
            "samples_per_instance": 1000, "min_lemma_instances": 50,
            "product_tuples": 200}"#,
    ];
    for (k, text) in configs.iter().enumerate() {
        let config = ExperimentConfig::from_json(text).unwrap();
        let out_a = dir.path().join(format!("{k}_a"));
        let out_b = dir.path().join(format!("{k}_b"));
        run_experiment(&config, Some(&out_a)).unwrap();
        run_experiment(&config, Some(&out_b)).unwrap();
        let mut names: Vec<String> = std::fs::read_dir(&out_a)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert!(!names.is_empty());
        for name in names {
            let a = std::fs::read(out_a.join(&name)).unwrap();
            let b = std::fs::read(out_b.join(&name)).unwrap();
            assert_eq!(a, b, "config {k}: {name} differs between reruns");
        }
    }
    println!("[PASS] criterion 10 (determinism): byte-identical reports and CSVs across reruns");
}
