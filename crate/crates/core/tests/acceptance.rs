//! Acceptance checks, one PASS/FAIL line each. Every reference value is
//! computed here independently of the library code under test.

use std::f64::consts::{PI, TAU};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use circpoc::geometry::{cover_rectangle, heading_bounds, AngleInterval, RectangleFootprint};
use circpoc::mcs::{mcs_poc, mcs_poc_circles, SeededSampler};
use circpoc::poc::{heading_interval_probability, AdaptivePocEstimator, GaussianBelief, HeadingTruncation, PocEstimator};
use circpoc::scenarios::{
    accuracy_study, max_pointwise_gap, overtaking_comparison, run_overtaking, run_poc_scenario, AccuracyConfig, OvertakingLevel,
    OvertakingSpec, PocBackend, ScenarioSpec, UncertaintyLevel,
};
use circpoc::smpc::SolverStatus;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Outcome, Duration);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

fn car() -> RectangleFootprint {
    RectangleFootprint::mid_size_car()
}

fn covering() -> Outcome {
    let (l, w) = (4.5, 2.0);
    let fp = RectangleFootprint::new(l, w).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let points: Vec<[f64; 2]> = (0..10_000)
        .map(|i| match i {
            0 => [l / 2.0, w / 2.0],
            1 => [-l / 2.0, -w / 2.0],
            2 => [l / 2.0, -w / 2.0],
            3 => [-l / 2.0, w / 2.0],
            _ => [rng.random_range(-l / 2.0..=l / 2.0), rng.random_range(-w / 2.0..=w / 2.0)],
        })
        .collect();
    let mut worst_radius_err: f64 = 0.0;
    let mut worst_spacing_err: f64 = 0.0;
    let mut uncovered = 0;
    for n in 1..=6 {
        let cover = cover_rectangle(&fp, n).unwrap();
        let nf = n as f64;
        let r = ((l / (2.0 * nf)).powi(2) + (w / 2.0).powi(2)).sqrt();
        let d_c = l / nf;
        worst_radius_err = worst_radius_err.max((cover.radius - r).abs());
        worst_spacing_err = worst_spacing_err.max((cover.spacing - d_c).abs());
        let centers: Vec<f64> = (0..n).map(|i| -l / 2.0 + d_c * (i as f64 + 0.5)).collect();
        uncovered += points.iter().filter(|p| !centers.iter().any(|c| (p[0] - c).hypot(p[1]) <= r + 1e-12)).count();
        // the library's own centers must agree with the construction
        worst_spacing_err = worst_spacing_err.max(cover.offsets.iter().zip(&centers).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    let three = cover_rectangle(&fp, 3).unwrap();
    let example = (three.radius - 1.25).abs() <= 1e-12 && (three.spacing - 1.5).abs() <= 1e-12;
    outcome(
        uncovered == 0 && worst_radius_err <= 1e-12 && worst_spacing_err <= 1e-12 && example,
        format!("uncovered points {uncovered}, max |r err| {worst_radius_err:.1e}, max |d_c err| {worst_spacing_err:.1e}"),
    )
}

fn heading_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    let mut unexplained = 0;
    for _ in 0..10_000 {
        let phi = rng.random_range(0.0..TAU);
        let l_o = rng.random_range(0.0..3.0);
        let r = rng.random_range(0.5..4.0);
        let rho = rng.random_range(0.0..(l_o + r + 1.0));
        let theta = rng.random_range(0.0..TAU);
        let iv = heading_bounds(phi, rho, l_o, r);
        // object circle center relative to the ego circle
        let cx = rho * phi.cos() + l_o * theta.cos();
        let cy = rho * phi.sin() + l_o * theta.sin();
        let hit = cx.hypot(cy) <= r;
        if iv.contains(theta) != hit {
            mismatches += 1;
            let near_end = match iv {
                AngleInterval::Arc { start, width } => {
                    let a = (theta - start).rem_euclid(TAU);
                    let b = (theta - start - width).rem_euclid(TAU);
                    a.min(TAU - a).min(b.min(TAU - b)) <= 1e-9
                }
                _ => false,
            };
            if !near_end {
                unexplained += 1;
            }
        }
    }
    outcome(unexplained == 0, format!("{mismatches} boundary mismatches, {unexplained} away from endpoints"))
}

fn full_interval_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let trunc = HeadingTruncation::new(3).unwrap();
    let worst = (0..100)
        .map(|_| {
            let mu = rng.random_range(-PI..PI);
            let sigma = rng.random_range(0.05..=PI);
            (heading_interval_probability(&[AngleInterval::Full], mu, sigma, trunc) - 1.0).abs()
        })
        .fold(0.0, f64::max);
    outcome(worst <= 1e-9, format!("max |P - 1| = {worst:.2e}"))
}

/// `sum_beta N(theta + 2π beta; mu, sigma)` over `|beta| <= n`.
fn folded_density(theta: f64, mu: f64, sigma: f64, n: i64) -> f64 {
    (-n..=n)
        .map(|b| {
            let z = (theta + TAU * b as f64 - mu) / sigma;
            (-0.5 * z * z).exp()
        })
        .sum::<f64>()
        / (sigma * TAU.sqrt())
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let inner: f64 = (1..panels).map(|i| f(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

fn erf_vs_quadrature() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let trunc = HeadingTruncation::new(3).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        // sorted cut points on the circle give disjoint arcs
        let k = rng.random_range(1..=4) * 2;
        let mut cuts: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..TAU)).collect();
        cuts.sort_by(f64::total_cmp);
        let shift = rng.random_range(0.0..TAU);
        let arcs: Vec<(f64, f64)> = cuts.chunks(2).map(|c| (c[0] + shift, c[1] - c[0])).collect();
        let set: Vec<AngleInterval> = arcs.iter().map(|&(s, wd)| AngleInterval::from_bounds(s, s + wd)).collect();
        let mu = rng.random_range(0.0..TAU);
        let sigma = rng.random_range(0.05..=PI);
        let analytic = heading_interval_probability(&set, mu, sigma, trunc);
        let quad: f64 = arcs
            .iter()
            .map(|&(s, wd)| {
                // integrate over [s, s + wd] mapped into [0, 2π)
                let s = s.rem_euclid(TAU);
                let pieces = if s + wd > TAU { vec![(s, TAU), (0.0, s + wd - TAU)] } else { vec![(s, s + wd)] };
                pieces.iter().map(|&(a, b)| simpson(|t| folded_density(t, mu, sigma, 3), a, b, 40_000)).sum::<f64>()
            })
            .sum();
        worst = worst.max((analytic - quad).abs());
    }
    outcome(worst <= 1e-9, format!("max |erf - quadrature| = {worst:.2e}"))
}

fn over_approximation() -> Outcome {
    let fp = car();
    let ego = cover_rectangle(&fp, 3).unwrap();
    let obj = cover_rectangle(&fp, 3).unwrap();
    let est = AdaptivePocEstimator::new(&fp, &fp, 3, 3, 0.3).unwrap();
    let trunc = HeadingTruncation::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut sampler = SeededSampler::new(5);
    let (mut under, mut disagree, mut informative) = (0, 0, 0);
    let (mut worst_under, mut worst_gap): (f64, f64) = (f64::INFINITY, 0.0);
    for _ in 0..200 {
        let belief = GaussianBelief::new(
            [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(-PI..PI)],
            [rng.random_range(0.3..2.0), rng.random_range(0.3..2.0), rng.random_range(0.05..1.0)],
        )
        .unwrap();
        let p = est.estimate(&belief, trunc);
        let rect = mcs_poc(&fp, &fp, &belief, 100_000, &mut sampler);
        let circ = mcs_poc_circles(&ego, &obj, &belief, 100_000, &mut sampler);
        if rect.estimate > 1e-3 {
            informative += 1;
        }
        let margin = p - (rect.estimate - 3.0 * rect.std_error);
        worst_under = worst_under.min(margin);
        if margin < 0.0 {
            under += 1;
        }
        let gap = (p - circ.estimate).abs() - 3.0 * circ.std_error;
        worst_gap = worst_gap.max(gap);
        if gap > 1e-2 {
            disagree += 1;
        }
    }
    outcome(
        under == 0 && disagree == 0,
        format!("{under} below rectangle MCS - 3se (min margin {worst_under:.4}); {disagree} off circle MCS by > 3se + 1e-2 (max excess {worst_gap:.4}); {informative}/200 with oracle POC > 1e-3"),
    )
}

fn accuracy_table() -> Outcome {
    let cfg = AccuracyConfig {
        levels: vec![UncertaintyLevel { name: "moderate".into(), sigma: [1.5; 3] }],
        circle_counts: vec![3],
        mcs_samples: vec![1_000, 100_000],
        repetitions: 10_000,
        reference_samples: 1_000_000,
        seed: 6,
        ..AccuracyConfig::default()
    };
    let table = accuracy_study(&cfg).unwrap();
    let row = table.row("moderate").unwrap();
    let diff = row.analytic[0] - row.reference.unwrap().estimate;
    let ratio = row.spread_for(1_000).unwrap().std_dev / row.spread_for(100_000).unwrap().std_dev;
    outcome(
        (-3e-3..=0.15).contains(&diff) && (5.0..=20.0).contains(&ratio),
        format!("analytic - MCS(1e6) = {diff:.4}; 2σ dispersion ratio 1e3/1e5 = {ratio:.2}"),
    )
}

fn scenario_curves() -> Outcome {
    let counts = [1, 2, 3, 4];
    let reports: Vec<_> = ScenarioSpec::built_ins().iter().map(|s| run_poc_scenario(s, &counts, 100_000, 7).unwrap()).collect();
    let peak = |v: Vec<f64>| v.into_iter().fold(0.0, f64::max);
    let collision = &reports[0];
    let oncoming = &reports[2];
    let collision_peak = counts[1..].iter().map(|&n| peak(collision.analytic_series(n).unwrap())).fold(1.0, f64::min);
    let oracle_peak = peak(collision.oracle_series());
    let gap = oncoming.peak_gap(2, 3).unwrap();
    let mut noise_ok = true;
    let mut order_ok = true;
    let mut de = Vec::new();
    for r in &reports {
        let floor = -3.0 * r.max_oracle_std_error;
        noise_ok &= r.delta_e.iter().all(|&d| d >= floor);
        order_ok &= r.delta_e_for(3).unwrap() <= r.delta_e_for(1).unwrap();
        de.push(format!("{} [{}]", r.scenario, r.delta_e.iter().map(|d| format!("{d:.4}")).collect::<Vec<_>>().join(", ")));
    }
    outcome(
        collision_peak > 0.9 && oracle_peak > 0.9 && gap >= 0.05 && noise_ok && order_ok,
        format!("collision peak {collision_peak:.3} (oracle {oracle_peak:.3}); oncoming 2-3 gap {gap:.3}; ΔE {}", de.join("; ")),
    )
}

fn runtime_ratio() -> Outcome {
    let fp = car();
    let est = PocEstimator::new(&fp, &fp, 3, 3, 20).unwrap();
    let trunc = HeadingTruncation::default();
    let beliefs = circpoc::scenarios::random_beliefs(1_000, 8);
    // warm caches once for both methods
    let mut sampler = SeededSampler::new(8);
    for b in beliefs.iter().take(10) {
        std::hint::black_box(est.estimate(b, trunc));
        std::hint::black_box(mcs_poc(&fp, &fp, b, 10_000, &mut sampler));
    }
    let t = Instant::now();
    for b in &beliefs {
        std::hint::black_box(est.estimate(std::hint::black_box(b), trunc));
    }
    let analytic = t.elapsed().as_secs_f64() / beliefs.len() as f64;
    let t = Instant::now();
    for b in &beliefs {
        std::hint::black_box(mcs_poc(&fp, &fp, std::hint::black_box(b), 10_000, &mut sampler));
    }
    let mcs = t.elapsed().as_secs_f64() / beliefs.len() as f64;
    let ratio = mcs / analytic;
    outcome(ratio >= 10.0, format!("analytic {:.1} µs, MCS(1e4) {:.1} µs, ratio {ratio:.1}", analytic * 1e6, mcs * 1e6))
}

fn smpc_determinism() -> Outcome {
    let base = OvertakingSpec::default();
    let first = overtaking_comparison(&base, &[]).unwrap();
    let mut repeat_identical = true;
    for run in &first.analytic {
        let spec = base.with_level(run.level);
        let again = run_overtaking(&spec, PocBackend::Analytic, None).unwrap();
        repeat_identical &= again == run.log && again.to_csv() == run.log.to_csv();
    }
    let infeasible: usize = first.analytic.iter().map(|r| r.log.infeasible_steps()).sum();
    let max_poc = first.analytic.iter().flat_map(|r| r.log.records.iter().map(|s| s.max_poc)).fold(0.0, f64::max);
    let dist: Vec<f64> = first.analytic.iter().map(|r| r.log.min_distance()).collect();
    let levels_ordered = first.analytic.iter().map(|r| r.level).eq(OvertakingLevel::ALL);
    let monotone = dist.windows(2).all(|w| w[0] <= w[1]);
    let all_steps = first
        .analytic
        .iter()
        .all(|r| r.log.records.len() == base.steps && r.log.records.iter().all(|s| s.status != SolverStatus::Infeasible));
    outcome(
        infeasible == 0 && all_steps && repeat_identical && max_poc <= 0.2 + 1e-6 && monotone && levels_ordered,
        format!("infeasible steps {infeasible}; repeat identical {repeat_identical}; max certified POC {max_poc:.6}; min distance low/moderate/high {:.3}/{:.3}/{:.3}", dist[0], dist[1], dist[2]),
    )
}

fn mcs_contrast() -> Outcome {
    let base = OvertakingSpec::default();
    let seeds: Vec<u64> = (1..=8).collect();
    let runs: Vec<_> =
        seeds.iter().map(|&seed| run_overtaking(&OvertakingSpec { seed, ..base.clone() }, PocBackend::Mcs, None).unwrap()).collect();
    let mut min_gap = f64::INFINITY;
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            min_gap = min_gap.min(max_pointwise_gap(&runs[i], &runs[j]));
        }
    }
    let losses: Vec<usize> = runs.iter().map(|r| r.infeasible_steps()).collect();
    let lost = losses.iter().filter(|&&n| n > 0).count();
    outcome(
        min_gap > 0.1 && lost >= 1,
        format!("smallest pairwise max gap {min_gap:.3} m; runs with feasibility loss {lost}/8 (infeasible steps {losses:?})"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("covering correctness", covering, Duration::from_secs(1)),
        ("heading-bound oracle", heading_oracle, Duration::from_secs(1)),
        ("full-interval normalization", full_interval_normalization, Duration::from_secs(1)),
        ("erf vs quadrature", erf_vs_quadrature, Duration::from_secs(5)),
        ("over-approximation", over_approximation, Duration::from_secs(300)),
        ("accuracy table", accuracy_table, Duration::from_secs(600)),
        ("scenario curves", scenario_curves, Duration::from_secs(600)),
        ("runtime ratio", runtime_ratio, Duration::from_secs(300)),
        ("SMPC determinism and feasibility", smpc_determinism, Duration::from_secs(600)),
        ("MCS-backed SMPC contrast", mcs_contrast, Duration::from_secs(900)),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        let elapsed = t.elapsed();
        let pass = o.pass && within(elapsed, *limit);
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {}: {name}: {} [{:.2} s, limit {} s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
