//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so every line is printed regardless of output capture.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use ddpqr_cli::bp_data::{REFERENCE_MEDIANS, REPORT_AGES};
use ddpqr_cli::commands::bp_table;
use ddpqr_cli::BpDemoArgs;
use ddpqr_core::baselines::{kernel_spatial_median, linear_spatial_median_fit, IrlsSettings};
use ddpqr_core::gibbs::{
    run_chain_with, update_error_means_eta, update_error_vars_sigma2, update_locations_alpha, GibbsContext,
};
use ddpqr_core::model::{stick_break, stick_unbreak, ChainState};
use ddpqr_core::rng::stream;
use ddpqr_core::simbench::{
    gen_covariates, gen_errors_gamma, gen_errors_t1, make_response, run_table1, ErrorLaw, Method, Table1Settings,
    GAMMA_TARGET_CORR,
};
use ddpqr_core::{
    empirical_geometric_quantile, mixture_quantile_mc, mixture_quantile_polar, Cloud, Dataset, Direction,
    ErrorQuantileSettings, Hyperparams, McmcSettings, MixtureSpec, QuantilePredictor, SolverSettings,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand_distr::{Distribution, StandardNormal, Uniform};

type Outcome = Result<String, String>;

fn criterion(n: u32, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail, ok) = match res {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("criterion {n} [{name}]: {tag} ({secs:.1}s) {detail}");
    ok
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// 1. Polar and Monte Carlo evaluators agree.

fn c1_evaluators() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(2024, 1);
    let unit = Uniform::new(0.0, 1.0).unwrap();
    let mut u01 = || unit.sample(&mut rng);
    let dirs = [Direction::zero(2), Direction::new(vec![0.3, 0.2]).unwrap()];
    let settings = SolverSettings { mc_samples: 200_000, ..Default::default() };
    let mut worst: f64 = 0.0;
    for m in 0..20 {
        let w0 = 0.2 + 0.6 * u01();
        let means = vec![vec![4.0 * u01() - 2.0, 4.0 * u01() - 2.0], vec![4.0 * u01() - 2.0, 4.0 * u01() - 2.0]];
        let vars = vec![0.25 + 1.75 * u01(), 0.25 + 1.75 * u01()];
        let mix = MixtureSpec::new(vec![w0, 1.0 - w0], means, vars).map_err(|e| e.to_string())?;
        for u in &dirs {
            let mc = mixture_quantile_mc(&mix, u, &settings, 100 + m).map_err(|e| e.to_string())?.point;
            let polar = mixture_quantile_polar(&mix, u, &settings).map_err(|e| e.to_string())?;
            let d = dist(&mc, &polar);
            worst = worst.max(d);
            if d > 0.05 {
                return Err(format!("mixture {m}, u = {:?}: distance {d:.4} > 0.05", u.as_slice()));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 120.0 {
        return Err(format!("runtime {secs:.1}s >= 120s (max distance {worst:.4})"));
    }
    Ok(format!("40 comparisons, max distance {worst:.4} <= 0.05, runtime {secs:.1}s < 120s"))
}

// ---------------------------------------------------------------------------
// 2. Conjugate updates against brute-force grid conditionals.

const TV_DRAWS: usize = 100_000;

/// Total-variation distance between `samples` and the density `exp(logf)`,
/// on a 6x6 bin partition of mean +- 3.5 sd plus one outer bin. Masses come
/// from midpoint integration; moments from a wide grid around `center`.
fn tv_2d(logf: impl Fn(f64, f64) -> f64, samples: &[[f64; 2]], center: [f64; 2], half: f64) -> f64 {
    let m = 600;
    let h = 2.0 * half / m as f64;
    let mut logs = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let a = center[0] - half + (i as f64 + 0.5) * h;
            let b = center[1] - half + (j as f64 + 0.5) * h;
            logs.push((a, b, logf(a, b)));
        }
    }
    let top = logs.iter().map(|t| t.2).fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut s1, mut s2, mut q1, mut q2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, b, l) in &logs {
        let w = (l - top).exp();
        z += w;
        s1 += w * a;
        s2 += w * b;
        q1 += w * a * a;
        q2 += w * b * b;
    }
    let mean = [s1 / z, s2 / z];
    let sd = [(q1 / z - mean[0].powi(2)).sqrt(), (q2 / z - mean[1].powi(2)).sqrt()];
    let z = z * h * h;
    let nb = 6;
    let lo = [mean[0] - 3.5 * sd[0], mean[1] - 3.5 * sd[1]];
    let bw = [7.0 * sd[0] / nb as f64, 7.0 * sd[1] / nb as f64];
    let sub = 40;
    let mut probs = vec![0.0; nb * nb + 1];
    for bi in 0..nb {
        for bj in 0..nb {
            let (ha, hb) = (bw[0] / sub as f64, bw[1] / sub as f64);
            let mut acc = 0.0;
            for i in 0..sub {
                for j in 0..sub {
                    let a = lo[0] + bi as f64 * bw[0] + (i as f64 + 0.5) * ha;
                    let b = lo[1] + bj as f64 * bw[1] + (j as f64 + 0.5) * hb;
                    acc += (logf(a, b) - top).exp();
                }
            }
            probs[bi * nb + bj] = acc * ha * hb / z;
        }
    }
    probs[nb * nb] = (1.0 - probs[..nb * nb].iter().sum::<f64>()).max(0.0);
    let mut counts = vec![0.0; nb * nb + 1];
    for s in samples {
        let ia = ((s[0] - lo[0]) / bw[0]).floor();
        let ib = ((s[1] - lo[1]) / bw[1]).floor();
        let idx = if (0.0..nb as f64).contains(&ia) && (0.0..nb as f64).contains(&ib) {
            ia as usize * nb + ib as usize
        } else {
            nb * nb
        };
        counts[idx] += 1.0;
    }
    let n = samples.len() as f64;
    0.5 * probs.iter().zip(&counts).map(|(p, c)| (p - c / n).abs()).sum::<f64>()
}

/// As [`tv_2d`] in one dimension, 12 bins.
fn tv_1d(logf: impl Fn(f64) -> f64, samples: &[f64], center: f64, half: f64) -> f64 {
    let m = 200_000;
    let h = 2.0 * half / m as f64;
    let pts: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let t = center - half + (i as f64 + 0.5) * h;
            (t, logf(t))
        })
        .collect();
    let top = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut s, mut q) = (0.0, 0.0, 0.0);
    for (t, l) in &pts {
        let w = (l - top).exp();
        z += w;
        s += w * t;
        q += w * t * t;
    }
    let mean = s / z;
    let sd = (q / z - mean * mean).sqrt();
    let z = z * h;
    let nb = 12;
    let lo = mean - 3.5 * sd;
    let bw = 7.0 * sd / nb as f64;
    let sub = 2000;
    let mut probs = vec![0.0; nb + 1];
    for (b, p) in probs.iter_mut().take(nb).enumerate() {
        let hs = bw / sub as f64;
        *p = (0..sub).map(|i| (logf(lo + b as f64 * bw + (i as f64 + 0.5) * hs) - top).exp()).sum::<f64>() * hs / z;
    }
    probs[nb] = (1.0 - probs[..nb].iter().sum::<f64>()).max(0.0);
    let mut counts = vec![0.0; nb + 1];
    for v in samples {
        let i = ((v - lo) / bw).floor();
        counts[if (0.0..nb as f64).contains(&i) { i as usize } else { nb }] += 1.0;
    }
    let n = samples.len() as f64;
    0.5 * probs.iter().zip(&counts).map(|(p, c)| (p - c / n).abs()).sum::<f64>()
}

fn log_normal_iso(r: [f64; 2], var: f64) -> f64 {
    -(r[0] * r[0] + r[1] * r[1]) / (2.0 * var) - (2.0 * std::f64::consts::PI * var).ln()
}

fn micro_state(data: &Dataset, z: [usize; 2]) -> ChainState {
    let mut st = ChainState::zeros(2, 2, data);
    st.l = vec![0, 0];
    st.z = z.to_vec();
    // beta index (l * d + i) * k + c with d = k = 2.
    st.beta[0..2].copy_from_slice(&[0.3, -0.2]);
    st.beta[2..4].copy_from_slice(&[0.1, 0.4]);
    st.alpha[0..2].copy_from_slice(&[1.0, 1.0]);
    st.eta = vec![0.5, 0.0, -0.5, 0.2];
    st.sigma2 = vec![0.5, 2.0];
    st
}

fn c2_conjugacy() -> Outcome {
    let data = Dataset::from_pairs(&[0.0, 1.0], &[vec![1.0, 2.0], vec![2.5, 0.5]]).map_err(|e| e.to_string())?;
    let hyper = Hyperparams { n_clusters: 2, n_components: 2, ..Hyperparams::simulation_defaults() };
    let ctx = GibbsContext::new(&data, &hyper).map_err(|e| e.to_string())?;
    let ys = [[1.0, 2.0], [2.5, 0.5]];
    let s0 = hyper.sigma0[0][0];
    assert!(hyper.sigma0[0][1] == 0.0 && hyper.sigma0[1][1] == s0, "oracle assumes Sigma0 = s I");
    let mut out = Vec::new();

    // alpha_0: both sites in cluster 0, errors from different components.
    let base = micro_state(&data, [0, 1]);
    let logf = |a: f64, b: f64| {
        let mut l = log_normal_iso([a - hyper.c0[0], b - hyper.c0[1]], s0);
        for (i, y) in ys.iter().enumerate() {
            let j = base.z[i];
            let beta = base.beta(0, i);
            let eta = base.eta(j);
            l += log_normal_iso([y[0] - a - beta[0] - eta[0], y[1] - b - beta[1] - eta[1]], base.sigma2[j]);
        }
        l
    };
    let mut st = base.clone();
    let mut rng = stream(7, 1);
    let mut samples = Vec::with_capacity(TV_DRAWS);
    for _ in 0..TV_DRAWS {
        update_locations_alpha(&mut st, &ctx, &mut rng).map_err(|e| e.to_string())?;
        samples.push([st.alpha[0], st.alpha[1]]);
    }
    let tv_alpha = tv_2d(logf, &samples, [hyper.c0[0], hyper.c0[1]], 10.0);
    out.push(("alpha", tv_alpha));

    // eta_0 and sigma2_0: both observations in component 0.
    let base = micro_state(&data, [0, 0]);
    let resid = |i: usize, st: &ChainState| {
        let a = st.alpha(0);
        let b = st.beta(0, i);
        [ys[i][0] - a[0] - b[0], ys[i][1] - a[1] - b[1]]
    };
    let logf = |e1: f64, e2: f64| {
        let mut l = log_normal_iso([e1 - hyper.c_eta[0], e2 - hyper.c_eta[1]], hyper.s_eta2);
        for i in 0..2 {
            let r = resid(i, &base);
            l += log_normal_iso([r[0] - e1, r[1] - e2], base.sigma2[0]);
        }
        l
    };
    let mut st = base.clone();
    let mut rng = stream(7, 2);
    let mut samples = Vec::with_capacity(TV_DRAWS);
    for _ in 0..TV_DRAWS {
        update_error_means_eta(&mut st, &ctx, &mut rng).map_err(|e| e.to_string())?;
        samples.push([st.eta[0], st.eta[1]]);
    }
    out.push(("eta", tv_2d(logf, &samples, [hyper.c_eta[0], hyper.c_eta[1]], 10.0)));

    // sigma2_0 on the log scale: density in t = ln s picks up a factor s.
    let logf = |t: f64| {
        let s = t.exp();
        let mut l = -(hyper.a + 1.0) * t - hyper.b / s + t;
        for i in 0..2 {
            let r = resid(i, &base);
            let e = base.eta(0);
            l += log_normal_iso([r[0] - e[0], r[1] - e[1]], s);
        }
        l
    };
    let mut st = base.clone();
    let mut rng = stream(7, 3);
    let mut samples = Vec::with_capacity(TV_DRAWS);
    for _ in 0..TV_DRAWS {
        update_error_vars_sigma2(&mut st, &ctx, &mut rng).map_err(|e| e.to_string())?;
        samples.push(st.sigma2[0].ln());
    }
    out.push(("sigma2", tv_1d(logf, &samples, 0.0, 15.0)));

    let detail = out.iter().map(|(n, tv)| format!("TV[{n}] = {tv:.4}")).collect::<Vec<_>>().join(", ");
    if out.iter().all(|(_, tv)| *tv <= 0.02) {
        Ok(format!("{detail} (all <= 0.02, {TV_DRAWS} draws)"))
    } else {
        Err(format!("{detail}; threshold 0.02"))
    }
}

// ---------------------------------------------------------------------------
// 3. Recovery of a near-noiseless linear median.

fn c3_recovery() -> Outcome {
    let n = 60;
    let xs = gen_covariates(n, 31);
    let mut rng = stream(31, 2);
    let ys: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| {
            let e1: f64 = StandardNormal.sample(&mut rng);
            let e2: f64 = StandardNormal.sample(&mut rng);
            vec![1.0 + 2.0 * x + 0.1 * e1, x + 0.1 * e2]
        })
        .collect();
    let data = Dataset::from_pairs(&xs, &ys).map_err(|e| e.to_string())?;
    let mcmc = McmcSettings { n_draws: 2000, burn_in: 500, thin: 1, seed: 32 };
    let draws = ddpqr_core::run_chain(&data, &Hyperparams::simulation_defaults(), &mcmc).map_err(|e| e.to_string())?;
    let pred = QuantilePredictor::new(&draws, &Direction::zero(2), &ErrorQuantileSettings::default(), 33)
        .map_err(|e| e.to_string())?;
    let mut close = 0;
    let mut worst: f64 = 0.0;
    for &x in data.xs() {
        let est = pred.at(x, 0.95, 34).map_err(|e| e.to_string())?;
        let d = dist(&est.point, &[1.0 + 2.0 * x, x]);
        worst = worst.max(d);
        if d <= 0.5 {
            close += 1;
        }
    }
    let frac = close as f64 / data.d() as f64;
    let detail = format!("{close}/{} x within 0.5 ({:.0}%), max distance {worst:.3}", data.d(), 100.0 * frac);
    if frac >= 0.9 {
        Ok(detail)
    } else {
        Err(format!("{detail}; need >= 90%"))
    }
}

// ---------------------------------------------------------------------------
// 4. Three-way MSE comparison.

fn c4_table1() -> Outcome {
    let seeds = [1, 2, 3, 4, 5];
    let settings = Table1Settings::default();
    let res = run_table1(&seeds, &settings).map_err(|e| e.to_string())?;
    let mut problems = Vec::new();
    let mut lines = Vec::new();
    for (law, band) in [(ErrorLaw::T1, (3.0, 30.0)), (ErrorLaw::Gamma, (2.0, 25.0))] {
        let mut wins = 0;
        for &s in &seeds {
            let m: Vec<f64> = Method::ALL.iter().map(|&me| res.mse(s, law, me).unwrap()).collect();
            if m[0] < m[1] && m[0] < m[2] {
                wins += 1;
            }
            if !(band.0..=band.1).contains(&m[0]) {
                problems.push(format!(
                    "{} seed {s}: np-bayes {:.3} outside [{}, {}]",
                    law.name(),
                    m[0],
                    band.0,
                    band.1
                ));
            }
            lines.push(format!("{}:{s}=({:.3},{:.3},{:.3})", law.name(), m[0], m[1], m[2]));
        }
        if wins < 4 {
            problems.push(format!("{}: np-bayes smallest in {wins}/5 seeds (need >= 4)", law.name()));
        }
    }
    let slowest = res.rows.chunks(3).map(|cell| cell.iter().map(|r| r.runtime_s).sum::<f64>()).fold(0.0, f64::max);
    if slowest > 1800.0 {
        problems.push(format!("slowest cell {slowest:.0}s > 1800s"));
    }
    let detail = format!("mse (np-bayes, linear, np-frequentist) {}; slowest cell {slowest:.0}s", lines.join(" "));
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", problems.join("; ")))
    }
}

// ---------------------------------------------------------------------------
// 5. Blood-pressure anchors.

fn c5_blood_pressure() -> Outcome {
    let args = BpDemoArgs { draws: 20_000, burnin: 1000, seed: 1, samples: 100, delta: "auto".into(), out: None };
    let rows = bp_table(&args).map_err(|e| e.to_string())?;
    let mut problems = Vec::new();
    let sys_at = |age: f64| rows.iter().find(|r| r[0] == age).map(|r| r[1]).unwrap();
    let rise = sys_at(76.0) - sys_at(21.0);
    if rise < 20.0 {
        problems.push(format!("systolic rise 21 -> 76 is {rise:.2} < 20"));
    }
    for (idx, &age) in REPORT_AGES.iter().enumerate() {
        if age == 21.0 || age == 76.0 {
            let (point, refv) = (sys_at(age), REFERENCE_MEDIANS[idx].0);
            if (point - refv).abs() > 10.0 {
                problems.push(format!("age {age} systolic {point:.2} vs reference {refv:.2}"));
            }
        }
    }
    for r in &rows {
        let age = r[0];
        for (c, (lo, hi)) in [(r[2], r[3]), (r[5], r[6])].into_iter().enumerate() {
            let name = if c == 0 { "systolic" } else { "diastolic" };
            let width = hi - lo;
            if !(width > 0.0 && width < 10.0) {
                problems.push(format!("age {age} {name} CI width {width:.2}"));
            }
        }
    }
    let widths: Vec<f64> = rows.iter().flat_map(|r| [r[3] - r[2], r[6] - r[5]]).collect();
    let detail = format!(
        "systolic 21: {:.2}, 76: {:.2} (rise {rise:.2}); CI widths {:.2}..{:.2}",
        sys_at(21.0),
        sys_at(76.0),
        widths.iter().copied().fold(f64::INFINITY, f64::min),
        widths.iter().copied().fold(0.0, f64::max)
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{} problem(s): {}; {detail}", problems.len(), problems.join("; ")))
    }
}

// ---------------------------------------------------------------------------
// 6. Property suites.

fn run_prop<S: Strategy>(
    name: &str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn cloud_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-20.0f64..20.0, 2), 1..40)
}

fn c6_properties() -> Outcome {
    let solver = SolverSettings::default();
    let mut names = Vec::new();

    run_prop("weiszfeld descent", 128, (cloud_strategy(), -0.9f64..0.9, -0.4f64..0.4), |(pts, a, b)| {
        let u = Direction::new(vec![a * 0.7, b]).unwrap();
        let sol = empirical_geometric_quantile(&Cloud::from_rows(&pts).unwrap(), &u, &solver).unwrap();
        for w in sol.trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()));
        }
        Ok(())
    })?;
    names.push("weiszfeld descent");

    run_prop(
        "weiszfeld translation",
        128,
        (cloud_strategy(), prop::collection::vec(-100.0f64..100.0, 2)),
        |(pts, c)| {
            let u = Direction::new(vec![0.2, -0.3]).unwrap();
            let s = SolverSettings { tol: 1e-11, ..Default::default() };
            let cloud = Cloud::from_rows(&pts).unwrap();
            let a = empirical_geometric_quantile(&cloud, &u, &s).unwrap().point;
            let b = empirical_geometric_quantile(&cloud.translated(&c), &u, &s).unwrap().point;
            for i in 0..2 {
                prop_assert!((b[i] - a[i] - c[i]).abs() < 1e-6 * (1.0 + c[i].abs()));
            }
            Ok(())
        },
    )?;
    names.push("weiszfeld translation");

    run_prop("stick-break closure", 256, prop::collection::vec(0.0f64..=1.0, 0..40), |v| {
        let w = stick_break(&v).unwrap();
        prop_assert_eq!(w.len(), v.len() + 1);
        prop_assert!(w.iter().all(|x| *x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let back = stick_break(&stick_unbreak(&w)).unwrap();
        for (x, y) in back.iter().zip(&w) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        Ok(())
    })?;
    names.push("stick-break closure");

    run_prop("sweep invariants", 8, (0u64..1000, 5usize..25), |(seed, n)| {
        let xs = gen_covariates(n, seed);
        let ys = make_response(&xs, &gen_errors_t1(n, seed + 1)).unwrap();
        let data = Dataset::from_pairs(&xs, &ys).unwrap();
        let mcmc = McmcSettings { n_draws: 40, burn_in: 10, thin: 1, seed };
        let mut bad = None;
        run_chain_with(&data, &Hyperparams::simulation_defaults(), &mcmc, |sweep, st| {
            if bad.is_none() {
                if let Err(e) = st.check_invariants() {
                    bad = Some(format!("sweep {sweep}: {e}"));
                }
            }
        })
        .unwrap();
        prop_assert!(bad.is_none(), "{:?}", bad);
        Ok(())
    })?;
    names.push("sweep invariants");

    let xy = prop::collection::vec((-3.0f64..3.0, -10.0f64..10.0, -10.0f64..10.0), 3..30)
        .prop_map(|v| v.into_iter().map(|(x, a, b)| (x, vec![a, b])).unzip::<f64, Vec<f64>, Vec<f64>, Vec<Vec<f64>>>());
    run_prop("irls descent", 128, xy.clone(), |(xs, ys)| {
        prop_assume!(xs.iter().any(|x| (x - xs[0]).abs() > 1e-3));
        let f = linear_spatial_median_fit(&xs, &ys, &IrlsSettings::default()).unwrap();
        for w in f.trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0]));
        }
        Ok(())
    })?;
    names.push("irls descent");

    run_prop("convex hull", 128, (xy, -3.0f64..3.0, 0.05f64..5.0), |((xs, ys), x, h)| {
        let q = kernel_spatial_median(&xs, &ys, x, h, &Direction::zero(2), &solver).unwrap();
        for i in 0..64 {
            let t = i as f64 * std::f64::consts::PI / 32.0;
            let d = [t.cos(), t.sin()];
            let max = ys.iter().map(|y| y[0] * d[0] + y[1] * d[1]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(q[0] * d[0] + q[1] * d[1] <= max + 1e-7 * (1.0 + max.abs()));
        }
        Ok(())
    })?;
    names.push("convex hull");

    run_prop("generator moments", 16, 0u64..10_000, |seed| {
        let n = 50_000;
        let x = gen_covariates(n, seed);
        let mean = x.iter().sum::<f64>() / n as f64;
        let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        prop_assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        prop_assert!((sd - 1.0).abs() < 0.02);
        let e = gen_errors_gamma(n, GAMMA_TARGET_CORR, seed).unwrap();
        let m: Vec<f64> = (0..2).map(|c| e.iter().map(|p| p[c]).sum::<f64>() / n as f64).collect();
        prop_assert!(m.iter().all(|v| (v - 1.0).abs() < 4.0 / (n as f64).sqrt()));
        let cov: f64 = e.iter().map(|p| (p[0] - m[0]) * (p[1] - m[1])).sum();
        let va: f64 = e.iter().map(|p| (p[0] - m[0]).powi(2)).sum();
        let vb: f64 = e.iter().map(|p| (p[1] - m[1]).powi(2)).sum();
        prop_assert!((cov / (va * vb).sqrt() - 0.7).abs() < 0.03);
        let t = gen_errors_t1(n, seed);
        let mut col: Vec<f64> = t.iter().map(|p| p[0]).collect();
        col.sort_by(f64::total_cmp);
        prop_assert!(col[n / 2].abs() < 0.03);
        Ok(())
    })?;
    names.push("generator moments");

    Ok(format!("{} suites passed: {}", names.len(), names.join(", ")))
}

// ---------------------------------------------------------------------------
// 7. Byte-identical output for every seeded command.

fn c7_determinism() -> Outcome {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let path = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let run = |args: &[String]| -> Result<Vec<u8>, String> {
        let o = Command::new(env!("CARGO_BIN_EXE_ddpqr")).args(args).output().map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)));
        }
        Ok(o.stdout)
    };
    let data = path("d.csv");
    run(&s(&["simulate", "--dist", "gamma", "--n", "40", "--seed", "5", "--out", &data]))?;
    type Case<'a> = (&'a str, Box<dyn Fn(&str) -> Vec<String> + 'a>, Vec<&'a str>);
    let cases: Vec<Case> = vec![
        ("simulate", Box::new(|o| s(&["simulate", "--dist", "t1", "--n", "50", "--seed", "9", "--out", o])), vec![""]),
        (
            "fit",
            Box::new(|o| s(&["fit", "--data", &data, "--draws", "30", "--burnin", "10", "--seed", "3", "--out", o])),
            vec!["", ".summary.json"],
        ),
        ("baseline", Box::new(|o| s(&["baseline", "--data", &data, "--method", "kernel", "--out", o])), vec![""]),
        (
            "bp-demo",
            Box::new(|o| s(&["bp-demo", "--draws", "200", "--burnin", "50", "--seed", "2", "--out", o])),
            vec![""],
        ),
        (
            "bench",
            Box::new(|o| {
                s(&[
                    "bench",
                    "--seeds",
                    "4",
                    "--draws",
                    "30",
                    "--burnin",
                    "10",
                    "--n",
                    "25",
                    "--truth-mc",
                    "100000",
                    "--omit-timing",
                    "--out",
                    o,
                ])
            }),
            vec!["", ".meta.json"],
        ),
    ];
    let mut checked = Vec::new();
    for (name, args, suffixes) in &cases {
        let (a, b) = (path(&format!("{name}-a")), path(&format!("{name}-b")));
        let out_a = run(&args(&a))?;
        let out_b = run(&args(&b))?;
        if out_a != out_b {
            return Err(format!("{name}: stdout differs"));
        }
        for suf in suffixes {
            if std::fs::read(format!("{a}{suf}")).unwrap() != std::fs::read(format!("{b}{suf}")).unwrap() {
                return Err(format!("{name}: file '{suf}' differs"));
            }
        }
        checked.push(*name);
    }
    // quantile reads the chain written above.
    let chain = path("fit-a");
    let q = |o: &str| {
        s(&[
            "quantile",
            "--chain",
            &chain,
            "--x-grid",
            "-1:1:5",
            "--u",
            "0.2,0.3",
            "--samples",
            "10",
            "--seed",
            "6",
            "--out",
            o,
        ])
    };
    run(&q(&path("q-a")))?;
    run(&q(&path("q-b")))?;
    if std::fs::read(path("q-a")).unwrap() != std::fs::read(path("q-b")).unwrap() {
        return Err("quantile: output differs".into());
    }
    checked.push("quantile");
    Ok(format!("identical outputs for {}", checked.join(", ")))
}

fn s(v: &[&str]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

fn main() {
    let results = [
        criterion(1, "quantile-evaluator agreement", c1_evaluators),
        criterion(2, "conjugacy oracles", c2_conjugacy),
        criterion(3, "sampler recovery", c3_recovery),
        criterion(4, "three-way MSE ordering", c4_table1),
        criterion(5, "blood-pressure anchors", c5_blood_pressure),
        criterion(6, "property suites", c6_properties),
        criterion(7, "determinism", c7_determinism),
    ];
    let passed = results.iter().filter(|r| **r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    // Failing criteria are reported above either way; a nonzero exit is
    // opt-in so that the rest of the workspace's tests still run.
    if passed != results.len() && std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
