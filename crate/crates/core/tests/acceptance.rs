//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ferrylink::acm::AcmTable;
use ferrylink::ferrysim::{self, FerryParams, PassthroughAccounting};
use ferrylink::linkmodel::montecarlo::{ergodic_throughput, McOptions};
use ferrylink::linkmodel::{
    estimation_covariances, expected_throughput, CMatrix, Interferer, LinkConfig, RicianParams,
};
use ferrylink::moga::{self, dominates, Bounds, Individual, MogaParams, ObjectiveVector};
use ferrylink::scenario::load_preset;
use ferrylink::staticrelay;

const EDGES_M: [f64; 8] = [8000.0, 6000.0, 4500.0, 3500.0, 2500.0, 1700.0, 1000.0, 500.0];
const SES: [f64; 8] = [0.0, 0.459, 0.731, 1.0, 1.322, 1.809, 2.194, 2.665];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Mode by counting the band edges strictly above `d`.
fn oracle_mode(d: f64) -> usize {
    EDGES_M.iter().filter(|&&e| e > d).count()
}

/// Hop efficiency with the range edge itself treated as the last usable mode.
fn oracle_hop_se(d: f64) -> f64 {
    if d == EDGES_M[0] {
        SES[1]
    } else {
        SES[oracle_mode(d)]
    }
}

fn a1() -> Outcome {
    let t = AcmTable::standard();
    let mut mismatches = 0;
    let mut worst_se = 0.0f64;
    for d in 500..=9000 {
        let d = d as f64;
        let q = t.select_mode(d).expect("in table domain");
        if q != oracle_mode(d) {
            mismatches += 1;
        }
        worst_se = worst_se.max((t.spectral_efficiency(d).unwrap() - SES[oracle_mode(d)]).abs());
    }
    let table_ses_ok = t
        .modes()
        .iter()
        .zip(SES)
        .all(|(m, se)| (m.spectral_efficiency - se).abs() <= 1e-3);
    outcome(
        mismatches == 0 && worst_se <= 1e-3 && table_ses_ok,
        format!("{mismatches} mode mismatches over 8501 points, max SE error {worst_se:.1e}"),
    )
}

fn a2() -> Outcome {
    let p = FerryParams::scenario1_default();
    let mut ok = true;
    let mut detail = Vec::new();
    for (d_rg, want) in [(4250.0, 4.80e7), (500.0, 2.2032e7)] {
        let (trace, m) = ferrysim::run_stationary(&p, d_rg).unwrap();
        let flat = trace.rows.iter().skip(1).all(|r| r.r_e_bps == want);
        let rel = (m.final_effective_rate_bps - want).abs() / want;
        ok &= flat && rel < 1e-12;
        detail.push(format!("d_rg {d_rg} m: R_e {:.4e} Gbit/s", m.final_effective_rate_bps / 1e9));
    }
    outcome(ok, detail.join(", "))
}

fn a3() -> Outcome {
    let t = AcmTable::standard();
    let d_total = 8500.0;
    let r = staticrelay::optimize(&t, d_total).unwrap();

    // d_rg = k / 10 over the feasible box [500, 8000]
    let scan: Vec<(f64, f64)> = (5000..=80000)
        .map(|k| {
            let d = k as f64 / 10.0;
            (d, oracle_hop_se(d).min(oracle_hop_se(d_total - d)))
        })
        .collect();
    let max = scan.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let best: Vec<f64> = scan.iter().filter(|s| s.1 == max).map(|s| s.0).collect();
    let (lo, hi) = (best[0], best[best.len() - 1]);

    let membership_agrees = scan
        .iter()
        .all(|&(d, se)| (se == max) == r.optimal_intervals.iter().any(|i| i.contains(d)));
    let closure_ok = r.optimal_intervals.len() == 1
        && r.optimal_intervals[0].lo_m == 4000.0
        && r.optimal_intervals[0].hi_m == 4500.0;
    let i = r.optimal_intervals[0];
    outcome(
        r.max_per_ta_se == max && max == 1.0 && closure_ok && membership_agrees,
        format!(
            "max {:.3} bps/Hz (scan {max:.3}), interval {}{}, {}{}, scan optimum spans [{lo}, {hi}]",
            r.max_per_ta_se,
            if i.lo_inclusive { "[" } else { "(" },
            i.lo_m,
            i.hi_m,
            if i.hi_inclusive { "]" } else { ")" },
        ),
    )
}

fn a4() -> Outcome {
    let p = load_preset("scenario2-bench2-64g").unwrap().ferry_params().unwrap();
    let (_, m) = ferrysim::run(&p).unwrap();
    outcome(
        m.delivered_total_bits == 0.0 && p.t_total_s == 3000.0,
        format!("delivered {} bits over {} s", m.delivered_total_bits, p.t_total_s),
    )
}

fn delivered(preset: &str) -> f64 {
    let p = load_preset(preset).unwrap().ferry_params().unwrap();
    assert_eq!(p.accounting, PassthroughAccounting::Additive);
    ferrysim::run(&p).unwrap().1.delivered_total_bits
}

fn a5() -> Outcome {
    let s1_base = {
        let cfg = load_preset("scenario1-max-be").unwrap();
        let p = cfg.ferry_params().unwrap();
        ferrysim::run_stationary(&p, cfg.ferry.stationary_d_rg_m.unwrap()).unwrap().1.delivered_total_bits
    };
    let cases = [
        ("scenario1-32g-opt2", s1_base, 40.38),
        ("scenario1-64g-opt2", s1_base, 45.38),
        ("scenario2-32g-opt2", delivered("scenario2-bench1-32g"), 19.24),
        ("scenario2-64g-opt2", delivered("scenario2-bench1-64g"), 26.86),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (preset, base, target) in cases {
        let gain = (delivered(preset) / base - 1.0) * 100.0;
        ok &= (gain - target).abs() <= 10.0;
        detail.push(format!("{preset} {gain:.2}% (ref {target}%)"));
    }
    outcome(ok, detail.join(", "))
}

fn ferry_params_strategy() -> impl Strategy<Value = FerryParams> {
    (
        1200.0..25000.0f64,
        0.0..1.0f64,
        0.0..1.0f64,
        (1.0..64.0f64, 0.05..1.0f64, 0.0..1.0f64),
        (10u32..=60, prop::sample::select(vec![0.5, 1.0, 2.0])),
        (100.0..3000.0f64, any::<bool>(), any::<bool>(), 1usize..=8),
    )
        .prop_map(|(d_total, u1, u2, (tb, alpha, bfrac), (speed, dt), (t_total, pass, resid, k))| {
            let gap = speed as f64 * dt;
            let d_max_load = 8000.0f64.min(d_total - 500.0 - gap);
            let d_load = 500.0 + u1 * (d_max_load - 500.0);
            let d_max_off = 8000.0f64.min(d_total - d_load - gap);
            let d_offload = 500.0 + u2 * (d_max_off - 500.0);
            FerryParams {
                d_total_m: d_total,
                speed_mps: speed as f64,
                dt_s: dt,
                buffer_bits: tb * 1e9,
                d_load_m: d_load,
                d_offload_m: d_offload,
                alpha,
                beta: bfrac * alpha * 0.99,
                streams: k,
                t_total_s: t_total,
                re_star_bps: 1e7,
                passthrough: pass,
                accounting: if resid { PassthroughAccounting::Residual } else { PassthroughAccounting::Additive },
                ..FerryParams::scenario1_default()
            }
        })
}

fn successors(state: u8) -> &'static [u8] {
    match state {
        1 => &[2],
        2 => &[3, 4],
        3 => &[4],
        4 => &[5],
        5 => &[6],
        6 => &[7, 8],
        7 => &[8],
        8 => &[1],
        _ => &[],
    }
}

fn check_ferry_invariants(p: &FerryParams) -> Result<(), String> {
    let p = p.snapped();
    p.validate().map_err(|e| e.to_string())?;
    let tol = |scale: f64| 1e-9 * scale.max(1.0);
    let step_m = p.speed_mps * p.dt_s;

    let mut s = ferrysim::initial_state(&p).map_err(|e| e.to_string())?;
    let n = (p.t_total_s / p.dt_s - 1e-9).ceil() as u64;
    for _ in 0..n {
        let next = ferrysim::step(&s, &p).map_err(|e| e.to_string())?;
        if (next.loaded_bits - next.t_d_bits - next.t_r_bits).abs() > tol(next.loaded_bits) {
            return Err(format!("conservation broken at t = {}", next.t_s));
        }
        if next.t_d_bits < -tol(p.buffer_bits) || next.t_d_bits > p.buffer_bits + tol(p.buffer_bits) {
            return Err(format!("buffer {} outside [0, {}]", next.t_d_bits, p.buffer_bits));
        }
        if next.t_r_bits < s.t_r_bits {
            return Err(format!("delivered data decreased at t = {}", next.t_s));
        }
        let dx = (next.x_m - s.x_m).abs();
        if dx > 1e-6 && (dx - step_m).abs() > 1e-6 {
            return Err(format!("moved {dx} m in one step, expected 0 or {step_m}"));
        }
        if next.x_m < p.d_load_m - 1e-6 || next.x_m > p.d_total_m - p.d_offload_m + 1e-6 {
            return Err(format!("position {} left the hover segment", next.x_m));
        }
        s = next;
    }

    let (trace, m) = ferrysim::run(&p).map_err(|e| e.to_string())?;
    for pair in m.state_entries.windows(2) {
        if !successors(pair[0].state).contains(&pair[1].state) {
            return Err(format!("illegal transition {} -> {}", pair[0].state, pair[1].state));
        }
    }
    for r in trace.rows.iter().skip(1) {
        if (r.r_e_bps * r.t_s - r.t_r_bits).abs() > tol(r.t_r_bits) {
            return Err(format!("R_e * t != T_r at t = {}", r.t_s));
        }
    }
    let last = trace.rows.last().unwrap();
    if (m.loaded_total_bits - last.t_d_bits - last.t_r_bits).abs() > tol(m.loaded_total_bits) {
        return Err("final conservation broken".into());
    }
    if (last.t_r_bits - s.t_r_bits).abs() > tol(s.t_r_bits) {
        return Err("run and step disagree".into());
    }
    Ok(())
}

fn a6() -> Outcome {
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: 200,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    match runner.run(&ferry_params_strategy(), |p| {
        check_ferry_invariants(&p).map_err(TestCaseError::fail)
    }) {
        Ok(()) => outcome(true, "200 randomized parameter sets"),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn min_eigenvalue(m: &CMatrix) -> (f64, f64) {
    let e = m.clone().symmetric_eigen().eigenvalues;
    (e.min(), e.max())
}

fn a7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_decomp = 0.0f64;
    let mut worst_eig = f64::INFINITY;
    for _ in 0..20 {
        let n_rx = rng.random_range(2..=16usize);
        let n_tx = rng.random_range(1..=4usize.min(n_rx));
        let mut cfg = LinkConfig {
            n_rx,
            n_tx,
            noise_power_w: 10f64.powf(rng.random_range(-16.0..-11.0)),
            rician: RicianParams::new(rng.random_range(-5.0..15.0), rng.random_range(0.0..0.9)),
            ..LinkConfig::standard()
        };
        cfg.rician.normalized = rng.random_bool(0.5);
        cfg.interferers = (0..rng.random_range(0..=2))
            .map(|_| Interferer {
                distance_m: rng.random_range(600.0..9000.0),
                n_tx: rng.random_range(1..=4),
            })
            .collect();
        let d = rng.random_range(500.0..8000.0);
        let cov = estimation_covariances(&cfg, d).unwrap();
        let z2 = ferrylink::linkmodel::Complex::new(cfg.rician.zeta().powi(2), 0.0);
        let lhs = &cov.psi * z2;
        let rel = (&lhs - &cov.psi_hat * z2 - &cov.psi_tilde).norm() / lhs.norm();
        worst_decomp = worst_decomp.max(rel);
        for m in [&cov.psi, &cov.phi, &cov.psi_hat, &cov.psi_tilde] {
            let (lo, hi) = min_eigenvalue(m);
            worst_eig = worst_eig.min(lo / hi.max(1.0));
        }
    }
    outcome(
        worst_decomp <= 1e-10 && worst_eig >= -1e-10,
        format!("max relative decomposition error {worst_decomp:.1e}, min scaled eigenvalue {worst_eig:.1e}"),
    )
}

fn mc_matrix() -> Vec<(LinkConfig, f64)> {
    let base = |n_rx, n_tx, k_db, rho, noise| LinkConfig {
        n_rx,
        n_tx,
        noise_power_w: noise,
        rician: RicianParams::new(k_db, rho),
        ..LinkConfig::standard()
    };
    let with_intf = |mut c: LinkConfig, d: f64| {
        c.interferers = vec![Interferer { distance_m: 2.0 * d, n_tx: c.n_tx }];
        c
    };
    vec![
        (with_intf(base(16, 4, 5.0, 0.5, 1e-14), 1000.0), 1000.0),
        (base(16, 4, 5.0, 0.5, 1e-14), 1000.0),
        (with_intf(base(16, 4, 5.0, 0.5, 1e-12), 3000.0), 3000.0),
        (base(8, 2, 10.0, 0.3, 1e-13), 2000.0),
        (with_intf(base(12, 3, 0.0, 0.7, 1e-13), 1500.0), 1500.0),
        (base(16, 4, 5.0, 0.5, 2.4e-14), 6000.0),
    ]
}

fn a8() -> Outcome {
    let mut worst = 0.0f64;
    for (i, (cfg, d)) in mc_matrix().into_iter().enumerate() {
        for k_star in 1..=2 {
            let cf = expected_throughput(&cfg, d, k_star).unwrap();
            let mc = ergodic_throughput(&cfg, d, k_star, McOptions { trials: 10_000, seed: 3 + i as u64 }).unwrap();
            worst = worst.max((cf - mc.mean).abs() / mc.mean);
        }
    }
    outcome(worst <= 0.05, format!("max relative gap {:.2}% over 6 configs x 2 streams, 10^4 trials", worst * 100.0))
}

fn synthetic(ind: &Individual) -> Result<ObjectiveVector, String> {
    let u = (ind.d1_m - 500.0) / 7500.0;
    let v = (ind.d2_m - 500.0) / 7500.0;
    Ok(ObjectiveVector {
        delivered: u,
        delay: u * u + v,
    })
}

fn front_distance(v: &ObjectiveVector, widths: [f64; 2]) -> f64 {
    (0..=10_000)
        .map(|k| {
            let u = k as f64 / 1e4;
            ((u - v.delivered).abs() / widths[0]).max((u * u - v.delay).abs() / widths[1])
        })
        .fold(f64::INFINITY, f64::min)
}

fn a9() -> Outcome {
    let bounds = Bounds::new(500.0, 8000.0);
    let params = |seed| MogaParams {
        population: 40,
        generations: 100,
        offspring: 20,
        n_box: 100,
        seed,
        ..MogaParams::default()
    };
    let (mut total, mut near, mut dominated_gens) = (0usize, 0usize, 0usize);
    for seed in 0..50 {
        let r = moga::run(&bounds, &params(seed), synthetic).unwrap();
        for g in &r.history {
            let m = &g.members;
            let clash = m
                .iter()
                .any(|a| m.iter().any(|b| dominates(&a.objectives, &b.objectives)));
            dominated_gens += clash as usize;
        }
        let w = r.archive.box_widths();
        for m in r.archive.members() {
            total += 1;
            near += (front_distance(&m.objectives, w) <= 2.0) as usize;
        }
    }
    let a = moga::run(&bounds, &params(7), synthetic).unwrap();
    let b = moga::run(&bounds, &params(7), synthetic).unwrap();
    let reproducible = a == b;
    let share = near as f64 / total as f64;
    outcome(
        dominated_gens == 0 && share >= 0.95 && reproducible,
        format!(
            "{dominated_gens} generations with dominated members, {near}/{total} ({:.1}%) within 2 boxes, reproducible {reproducible}",
            share * 100.0
        ),
    )
}

fn a10() -> Outcome {
    let cfg = load_preset("scenario2-pareto-32g").unwrap();
    let base = cfg.ferry_params().unwrap();
    let bounds = cfg.bounds().unwrap();
    let bench = moga::ferry_objectives(
        &base,
        &Individual {
            d1_m: 500.0,
            d2_m: 500.0,
            alpha: 1.0,
            beta: 0.0,
        },
    )
    .unwrap();
    let params = MogaParams {
        population: 40,
        generations: 60,
        offspring: 8,
        seed: 1,
        ..cfg.moga_params().unwrap()
    };
    let r = moga::run(&bounds, &params, |i| moga::ferry_objectives(&base, i)).unwrap();
    let winners: Vec<_> = r
        .archive
        .members()
        .iter()
        .filter(|m| dominates(&m.objectives, &bench))
        .collect();
    let best = winners
        .iter()
        .max_by(|a, b| a.objectives.delivered.total_cmp(&b.objectives.delivered));
    outcome(
        !winners.is_empty(),
        match best {
            Some(m) => format!(
                "{} of {} members dominate benchmark ({:.2} Gbit, {:.0} s), e.g. ({:.2} Gbit, {:.0} s)",
                winners.len(),
                r.archive.len(),
                bench.delivered / 1e9,
                bench.delay,
                m.objectives.delivered / 1e9,
                m.objectives.delay
            ),
            None => format!("no member dominates benchmark ({:.2} Gbit, {:.0} s)", bench.delivered / 1e9, bench.delay),
        },
    )
}

type Criterion = (&'static str, &'static str, fn() -> Outcome, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("A1", "ACM table fidelity", a1, Duration::from_secs(1)),
        ("A2", "stationary rates", a2, Duration::from_secs(5)),
        ("A3", "static optimum", a3, Duration::from_secs(1)),
        ("A4", "zero-delivery benchmark", a4, Duration::from_secs(1)),
        ("A5", "relative gains", a5, Duration::from_secs(5)),
        ("A6", "ferry invariants", a6, Duration::from_secs(30)),
        ("A7", "MMSE decomposition", a7, Duration::from_secs(30)),
        ("A8", "closed form vs Monte Carlo", a8, Duration::from_secs(120)),
        ("A9", "epsilon-MOGA soundness", a9, Duration::from_secs(60)),
        ("A10", "optimizer beats benchmark", a10, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (id, name, f, budget) in criteria {
        let start = Instant::now();
        let o = f();
        let took = start.elapsed();
        let pass = o.pass && took <= budget;
        failed += !pass as usize;
        println!(
            "{} {id} {name}: {} [{:.2} s, budget {} s]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
