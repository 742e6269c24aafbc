//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints one PASS/FAIL line with its metrics and wall time.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;

use hyne_core::channel::{draw_noise_grid, synthesize_received, ChannelScenario, PreambleChoice, ScenarioConfig};
use hyne_core::harness::{
    compute_ta_cdf, ks_no_worse, load_bundle, run_experiment, to_csv, to_json, train_command, DetectorSpec,
    ExperimentConfig, MetricsReport, TrainConfig,
};
use hyne_core::legacy::{calibrate_threshold, decide, energy_statistic, matched_filter};
use hyne_core::mmse::{
    certify_lemma, error_variance, generate_lemma_pair, mmse_filter, verify_frequency_whitening,
    verify_frequency_whitening_exhaustive, verify_majorization_lemma, HermitianCovariance, LEMMA_MARGIN_TOL,
};
use hyne_core::neural::{
    build_training_set, evaluate_mse, mse_loss_and_gradient, train, DatasetOptions, HyneConfig, MlpModel,
    OptimizerConfig, SampleBatch,
};
use hyne_core::pipeline::{hyne_transform_stages, HyneStage, HyneStages};
use hyne_core::rng::{complex_normal, stream};
use hyne_core::sequences::{generate_root, shift_table, ZcConfig};
use hyne_core::Execution;

type CMat = Vec<Vec<Complex64>>;

const PAR: Execution = Execution::Parallel;
const BUNDLE_ID: &str = "acceptance";

struct Outcome {
    id: usize,
    passed: bool,
    limit_s: Option<f64>,
    seconds: f64,
    detail: String,
}

fn record(outcomes: &mut Vec<Outcome>, id: usize, limit_s: Option<f64>, t0: Instant, passed: bool, detail: String) {
    let seconds = t0.elapsed().as_secs_f64();
    let within = limit_s.is_none_or(|l| seconds < l);
    let o = Outcome {
        id,
        passed: passed && within,
        limit_s,
        seconds,
        detail,
    };
    let limit = o.limit_s.map(|l| format!(" (limit {l:.0}s)")).unwrap_or_default();
    println!(
        "criterion {:>2}: {}  {:.1}s{}  {}",
        o.id,
        if o.passed { "PASS" } else { "FAIL" },
        o.seconds,
        limit,
        o.detail
    );
    outcomes.push(o);
}

// ---- independent numerical oracles ----

fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            (0..n)
                .map(|m| x[m] * Complex64::from_polar(1.0, -2.0 * PI * ((k * m) % n) as f64 / n as f64))
                .sum()
        })
        .collect()
}

fn acf(x: &[Complex64], c: usize) -> Complex64 {
    let n = x.len();
    (0..n).map(|i| x[i] * x[(i + c) % n].conj()).sum()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

fn random_psd(n: usize, rng: &mut hyne_core::rng::SimRng) -> CMat {
    let k = n + rng.random_range(0..=n);
    let g: CMat = (0..n).map(|_| (0..k).map(|_| complex_normal(rng, 1.0)).collect()).collect();
    let mut r = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for i in 0..n {
        for j in 0..n {
            r[i][j] = (0..k).map(|t| g[i][t] * g[j][t].conj()).sum::<Complex64>() / k as f64;
        }
    }
    for i in 0..n {
        for j in 0..i {
            let avg = (r[i][j] + r[j][i].conj()) * 0.5;
            r[i][j] = avg;
            r[j][i] = avg.conj();
        }
        r[i][i] = Complex64::new(r[i][i].re, 0.0);
    }
    r
}

fn to_covariance(r: &CMat) -> HermitianCovariance {
    let n = r.len();
    HermitianCovariance::new(hyne_core::mmse::CMatrix::from_fn(n, n, |i, j| r[i][j])).unwrap()
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(a: &CMat) -> CMat {
    let n = a.len();
    let mut m: CMat = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0)));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].norm().total_cmp(&m[y][col].norm())).unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        let pivot_row = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != col {
                let f = row[col];
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn matmul(a: &CMat, b: &CMat) -> CMat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|t| a[i][t] * b[t][j]).sum()).collect())
        .collect()
}

fn add_diag(a: &CMat, s: f64) -> CMat {
    let mut out = a.clone();
    for (i, row) in out.iter_mut().enumerate() {
        row[i] += s;
    }
    out
}

fn cholesky(a: &CMat) -> CMat {
    let n = a.len();
    let mut l = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for j in 0..n {
        let d = a[j][j].re - (0..j).map(|k| l[j][k].norm_sqr()).sum::<f64>();
        l[j][j] = Complex64::new(d.sqrt(), 0.0);
        for i in (j + 1)..n {
            let s: Complex64 = (0..j).map(|k| l[i][k] * l[j][k].conj()).sum();
            l[i][j] = (a[i][j] - s) / l[j][j].re;
        }
    }
    l
}

/// `tr(R - R (R + s I)^-1 R)` via an explicit inverse.
fn error_by_inverse(r: &CMat, s2: f64) -> f64 {
    let w = matmul(r, &invert(&add_diag(r, s2)));
    let wr = matmul(&w, r);
    (0..r.len()).map(|i| r[i][i].re - wr[i][i].re).sum()
}

fn from_nalgebra(m: &hyne_core::mmse::CMatrix) -> CMat {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

// ---- criteria ----

fn c1_cazac(out: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    let n = 139;
    let mut worst_t: f64 = 0.0;
    let mut worst_f: f64 = 0.0;
    let mut roots = 0;
    for u in (1..n).filter(|&u| gcd(u, n) == 1) {
        roots += 1;
        let z = generate_root(&ZcConfig::unrestricted(u, n).unwrap()).unwrap();
        let x = z.samples();
        // Independent generator check: z_u[k] = exp(-j pi u k (k+1) / N).
        for (k, v) in x.iter().enumerate() {
            let phase = -PI * ((u * k * (k + 1)) % (2 * n)) as f64 / n as f64;
            assert!((v - Complex64::from_polar(1.0, phase)).norm() < 1e-9);
        }
        let f = naive_dft(x);
        let f_unit: Vec<Complex64> = f.iter().map(|v| v / (n as f64).sqrt()).collect();
        for c in 1..n {
            worst_t = worst_t.max(acf(x, c).norm());
            worst_f = worst_f.max(acf(&f_unit, c).norm());
        }
    }
    let tol = 1e-9 * n as f64;
    record(
        out,
        1,
        Some(10.0),
        t0,
        worst_t <= tol && worst_f <= tol && roots == 138,
        format!("{roots} roots x 138 shifts; max |R(c)| time {worst_t:.2e}, DFT {worst_f:.2e} (tol {tol:.2e})"),
    );
}

fn c2_mmse(out: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let mut rng = stream(2002, &[i]);
        let n = rng.random_range(1..=32);
        let r = random_psd(n, &mut rng);
        let s2 = 10f64.powf(rng.random_range(-1.0..=1.0));
        let oracle = matmul(&r, &invert(&add_diag(&r, s2)));
        let w = from_nalgebra(mmse_filter(&to_covariance(&r), s2).unwrap().weights());
        let mut fro = 0.0;
        for a in 0..n {
            for b in 0..n {
                fro += (w[a][b] - oracle[a][b]).norm_sqr();
            }
        }
        worst = worst.max(fro.sqrt());
    }
    record(
        out,
        2,
        Some(10.0),
        t0,
        worst <= 1e-10,
        format!("100 PSD matrices, N<=32; max Frobenius distance to explicit inverse {worst:.2e} (tol 1e-10)"),
    );
}

fn c3_error_variance(out: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    let n = 8;
    let r = random_psd(n, &mut stream(3003, &[]));
    let l = cholesky(&r);
    let cov = to_covariance(&r);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (k, &s2) in [0.1, 1.0, 10.0].iter().enumerate() {
        let w = mmse_filter(&cov, s2).unwrap();
        let analytic = error_variance(&cov, s2).unwrap();
        let draws = 100_000;
        let sums = PAR.map(100, |j| {
            let mut rng = stream(3003, &[k as u64, j as u64]);
            let mut y = vec![Complex64::new(0.0, 0.0); n];
            let mut est = vec![Complex64::new(0.0, 0.0); n];
            let mut acc = 0.0;
            for _ in 0..draws / 100 {
                let z: Vec<Complex64> = (0..n).map(|_| complex_normal(&mut rng, 1.0)).collect();
                let h: Vec<Complex64> = (0..n).map(|a| (0..=a).map(|b| l[a][b] * z[b]).sum()).collect();
                for a in 0..n {
                    y[a] = h[a] + complex_normal(&mut rng, s2);
                }
                w.apply(&y, &mut est);
                acc += h.iter().zip(&est).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>();
            }
            acc
        });
        let mc = sums.iter().sum::<f64>() / draws as f64;
        let by_inverse = error_by_inverse(&r, s2);
        let rel = (mc - analytic).abs() / analytic;
        worst = worst.max(rel).max((by_inverse - analytic).abs() / analytic);
        parts.push(format!("s2={s2}: e={analytic:.5} mc={mc:.5} ({:.2}%)", 100.0 * rel));
    }
    record(out, 3, Some(60.0), t0, worst <= 0.02, format!("N=8, 1e5 draws each; {}", parts.join(", ")));
}

fn c4_lemma(out: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    let trials = 1000;
    let rep = certify_lemma(trials, 2, 16, 4004, PAR).unwrap();
    // Re-derive every pair and check e_A, e_B against explicit inverses.
    let mut mismatch: f64 = 0.0;
    let mut violations = 0;
    let mut chain_failures = 0;
    for i in 0..trials as u64 {
        let mut rng = stream(4005, &[i]);
        let dim = rng.random_range(2..=16);
        let s2 = 10f64.powf(rng.random_range(-2.0..=2.0));
        let (a, b) = generate_lemma_pair(dim, &mut rng).unwrap();
        let r = verify_majorization_lemma(&a, &b, s2).unwrap();
        let ea = error_by_inverse(&from_nalgebra(&a), s2);
        let eb = error_by_inverse(&from_nalgebra(&b), s2);
        mismatch = mismatch.max((ea - r.e_a).abs().max((eb - r.e_b).abs()) / ea.max(1e-12));
        if eb > ea + LEMMA_MARGIN_TOL || !r.holds {
            violations += 1;
        }
        if !r.chain_holds() {
            chain_failures += 1;
        }
    }
    let passed = rep.violations == 0 && violations == 0 && chain_failures == 0 && mismatch < 1e-8;
    record(
        out,
        4,
        Some(60.0),
        t0,
        passed,
        format!(
            "certifier: {} pairs, {} violations, worst margin {:.2e}; re-derived: {trials} pairs, {violations} violations, {chain_failures} chain failures, e mismatch {mismatch:.1e}",
            rep.trials, rep.violations, rep.worst_margin
        ),
    );
}

fn offdiag_ratio(z: &[Complex64], offsets: &[usize]) -> f64 {
    let n = z.len();
    let mut r = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    for &c in offsets {
        for s in 0..n {
            v[s] = z[(s + c) % n] * z[s].conj();
        }
        for i in 0..n {
            for j in 0..n {
                r[i][j] += v[i] * v[j].conj();
            }
        }
    }
    let mut off: f64 = 0.0;
    let mut diag = 0.0;
    for i in 0..n {
        diag += r[i][i].re;
        for j in 0..n {
            if i != j {
                off = off.max(r[i][j].norm());
            }
        }
    }
    off / (diag / n as f64)
}

fn c5_whitening(out: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    let cfg = ZcConfig::default();
    let z = generate_root(&cfg).unwrap();
    let table = shift_table(&cfg).unwrap();
    let n = cfg.length;
    let mut rng = stream(5005, &[]);
    let offsets: Vec<usize> = (0..10_000)
        .map(|_| {
            let l = rng.random_range(0..table.len());
            let d = rng.random_range(0..n);
            (table.offsets()[l] + d) % n
        })
        .collect();
    let oracle = offdiag_ratio(z.samples(), &offsets);
    let lib = verify_frequency_whitening(&cfg, 10_000, 5006).unwrap().max_offdiag_ratio;

    let small = ZcConfig::new(2, 5, 1, 5).unwrap();
    let zs = generate_root(&small).unwrap();
    let ts = shift_table(&small).unwrap();
    let all: Vec<usize> = (0..ts.len())
        .flat_map(|l| (0..5).map(move |d| (l, d)))
        .map(|(l, d)| (ts.offsets()[l] + d) % 5)
        .collect();
    let exact_oracle = offdiag_ratio(zs.samples(), &all);
    let exact_lib = verify_frequency_whitening_exhaustive(&small).unwrap().max_offdiag_ratio;
    record(
        out,
        5,
        Some(30.0),
        t0,
        oracle <= 0.05 && lib <= 0.05 && exact_oracle <= 1e-9 && exact_lib <= 1e-9,
        format!(
            "N_z=139, 1e4 draws: off-diagonal ratio {oracle:.4} (oracle), {lib:.4} (certifier); N_z=5 exhaustive: {exact_oracle:.1e} / {exact_lib:.1e}"
        ),
    );
}

fn c6_gradient(out: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let mut rng = stream(6006, &[i]);
        let dims = [
            rng.random_range(2..=6),
            rng.random_range(2..=8),
            rng.random_range(2..=8),
            rng.random_range(2..=6),
        ];
        let mut model = MlpModel::initialized(dims, &mut rng);
        // Zero biases put dead-layer outputs exactly on a ReLU kink, so draw every parameter.
        let drawn: Vec<f64> = (0..model.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        model.set_params(&drawn).unwrap();
        let batch = rng.random_range(1..=6);
        let inputs: Vec<f64> = (0..batch * dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<f64> = (0..batch * dims[3]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = SampleBatch {
            inputs: &inputs,
            labels: &labels,
        };
        let (_, g) = mse_loss_and_gradient(&model, b).unwrap();
        let g = g.flat();
        let p = model.params();
        let h = 1e-5;
        let mut fd = vec![0.0; p.len()];
        let mut m = model.clone();
        for k in 0..p.len() {
            let mut q = p.clone();
            q[k] = p[k] + h;
            m.set_params(&q).unwrap();
            let up = mse_loss_and_gradient(&m, b).unwrap().0;
            q[k] = p[k] - h;
            m.set_params(&q).unwrap();
            let down = mse_loss_and_gradient(&m, b).unwrap().0;
            fd[k] = (up - down) / (2.0 * h);
        }
        let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(fd.iter().map(|a| a * a).sum::<f64>().sqrt());
        worst = worst.max(diff / scale.max(1e-12));
    }
    record(
        out,
        6,
        Some(30.0),
        t0,
        worst <= 1e-4,
        format!("100 random models; worst relative gradient error {worst:.2e} (tol 1e-4)"),
    );
}

fn c7_floor(out: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    let zc = ZcConfig::default();
    let cfg = ScenarioConfig {
        antennas: 8,
        spatial_correlation: 0.9,
        ..ScenarioConfig::default()
    };
    let sc = ChannelScenario::from_config(&cfg, &zc).unwrap();
    let data = build_training_set(&sc, &zc, 120_000, &[-10.0], &DatasetOptions::default(), 7007, PAR).unwrap();
    let (train_set, held) = data.split(20_000);
    let init = MlpModel::initialized(MlpModel::default_dims(8), &mut stream(7008, &[]));
    let outcome = train(&init, &train_set, &OptimizerConfig::default(), 7009, PAR).unwrap();
    let at = sc.at_snr_db(-10.0);
    let r = at.spatial_covariance().scaled(at.signal_power()).unwrap();
    let floor = error_variance(&r, at.noise_variance()).unwrap() / 8.0;
    let mse = evaluate_mse(&outcome.model, &held).unwrap();
    let ratio = mse / floor;
    record(
        out,
        7,
        Some(600.0),
        t0,
        (0.95..=1.15).contains(&ratio),
        format!(
            "M=8, rho=0.9, -10 dB, {} training / {} held-out samples: MSE {mse:.5e}, floor {floor:.5e}, ratio {ratio:.4} (allowed 0.95..1.15)",
            train_set.len(),
            held.len()
        ),
    );
}

fn train_bundle(dir: &Path) -> (HyneStages, f64) {
    let t0 = Instant::now();
    let cfg = TrainConfig {
        bundle_id: BUNDLE_ID.into(),
        bundle_dir: dir.to_path_buf(),
        seed: 8080,
        ..TrainConfig::default()
    };
    train_command(&cfg, PAR).unwrap();
    let b = load_bundle(dir, BUNDLE_ID).unwrap();
    (b.stages, t0.elapsed().as_secs_f64())
}

fn c8_calibration(out: &mut Vec<Outcome>, stages: &HyneStages) {
    let t0 = Instant::now();
    let zc = ZcConfig::default();
    let sc = ChannelScenario::from_config(&ScenarioConfig::default(), &zc).unwrap();
    let root = generate_root(&zc).unwrap();
    let target = 1e-3;
    let cal = 1_000_000;
    let legacy = calibrate_threshold(|g| Ok(energy_statistic(&matched_filter(g, &root)?)), &sc, target, cal, 8001, PAR)
        .unwrap();
    let hyne = calibrate_threshold(
        |g| Ok(energy_statistic(&hyne_transform_stages(g, &root, stages)?)),
        &sc,
        target,
        cal,
        8001,
        PAR,
    )
    .unwrap();
    let fresh = 100_000;
    let hits = PAR.map(fresh, |i| {
        let g = draw_noise_grid(&sc, &mut stream(8002, &[i as u64]));
        let a = energy_statistic(&matched_filter(&g, &root).unwrap()) >= legacy.gamma;
        let b = energy_statistic(&hyne_transform_stages(&g, &root, stages).unwrap()) >= hyne.gamma;
        (a, b)
    });
    let pl = hits.iter().filter(|h| h.0).count() as f64 / fresh as f64;
    let ph = hits.iter().filter(|h| h.1).count() as f64 / fresh as f64;
    let ok = |p: f64| (p - target).abs() <= 0.2 * target;
    record(
        out,
        8,
        Some(300.0),
        t0,
        ok(pl) && ok(ph),
        format!(
            "1e6 calibration + 1e5 fresh null trials: realized Pfa legacy {pl:.2e}, HyNE {ph:.2e} (target 1e-3 +-20%)"
        ),
    );
}

fn experiment_config(snrs: Vec<f64>, trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: "acceptance".into(),
        scenario: ScenarioConfig::default(),
        snr_list_db: snrs,
        trials_per_point: trials,
        target_pfa: 1e-3,
        calibration_trials: 100_000,
        master_seed: 9009,
        detectors: vec![
            DetectorSpec::Legacy,
            DetectorSpec::Hyne(BUNDLE_ID.into()),
            DetectorSpec::MmseOracle,
        ],
        ..ExperimentConfig::default()
    }
}

fn c9_ordering(out: &mut Vec<Outcome>, report: &MetricsReport, seconds: f64) {
    let t0 = Instant::now() - std::time::Duration::from_secs_f64(seconds);
    let hyne = format!("hyne:{BUNDLE_ID}");
    let root = report.config.zc.root;
    let mut passed = true;
    let mut parts = Vec::new();
    for snr in [-20.0, -15.0, -10.0] {
        let pm = |d: &str| report.point(d, root, snr).unwrap();
        let (l, h, o) = (pm("legacy"), pm(&hyne), pm("mmse_oracle"));
        let hl = &report.comparison("legacy", &hyne, root, snr).unwrap().test;
        let ho = &report.comparison(&hyne, "mmse_oracle", root, snr).unwrap().test;
        // a <= b fails only if a misses significantly more often than b.
        let oracle_le_hyne = ho.p_b_worse >= 0.05;
        let hyne_le_legacy = hl.p_b_worse >= 0.05;
        let strict = hl.p_a_worse < 0.05;
        let ok = oracle_le_hyne && hyne_le_legacy && (snr != -15.0 || strict);
        passed &= ok && l.signal_trials >= 10_000;
        parts.push(format!(
            "{snr} dB: Pmiss oracle {:.4} <= HyNE {:.4} <= legacy {:.4} (p[HyNE>legacy]={:.2e}, p[legacy>HyNE]={:.2e}, p[oracle>HyNE]={:.2e}, p[HyNE>oracle]={:.2e}; Pfa {:.1e}/{:.1e}/{:.1e})",
            o.pmiss.rate,
            h.pmiss.rate,
            l.pmiss.rate,
            hl.p_b_worse,
            hl.p_a_worse,
            ho.p_b_worse,
            ho.p_a_worse,
            o.pfa.rate,
            h.pfa.rate,
            l.pfa.rate
        ));
    }
    record(
        out,
        9,
        Some(900.0),
        t0,
        passed,
        format!("rho=0.95, {} paired signal trials per SNR; {}", report.points[0].signal_trials, parts.join("; ")),
    );
}

fn c10_ta(out: &mut Vec<Outcome>, report: &MetricsReport, stages: &HyneStages, seconds: f64) {
    let t0 = Instant::now() - std::time::Duration::from_secs_f64(seconds);
    let hyne = format!("hyne:{BUNDLE_ID}");
    let root_u = report.config.zc.root;
    let mut passed = true;
    let mut parts = Vec::new();
    for &snr in report.config.snr_list_db.iter().filter(|&&s| s >= -20.0) {
        let l = report.point("legacy", root_u, snr).unwrap();
        let h = report.point(&hyne, root_u, snr).unwrap();
        let ks = ks_no_worse(&h.ta_cdf, &l.ta_cdf, 0.05);
        passed &= ks.no_worse;
        parts.push(format!(
            "{snr} dB: D={:.4} crit={:.4} F0 HyNE {:.3} legacy {:.3}",
            ks.statistic,
            ks.critical,
            h.ta_cdf.at(0),
            l.ta_cdf.at(0)
        ));
    }

    // Noiseless sweep over every shift and every delay within the zone.
    let zc = ZcConfig::default();
    let cfg = ScenarioConfig {
        noise_variance: 0.0,
        ..ScenarioConfig::default()
    };
    let sc = ChannelScenario::from_config(&cfg, &zc).unwrap();
    let root = generate_root(&zc).unwrap();
    let table = shift_table(&zc).unwrap();
    let max_delay = hyne_core::channel::default_max_delay(&zc, cfg.delay_spread);
    let mut errs_l = Vec::new();
    let mut errs_h = Vec::new();
    let mut missed = 0;
    let mut rng = stream(10010, &[]);
    for l in 0..table.len() {
        for d in 0..=max_delay {
            let g = synthesize_received(&sc, &root, &table, PreambleChoice { shift_index: l, delay: d }, &mut rng).unwrap();
            let truth = (table.offsets()[l] + d) as i64;
            let gamma = 1e-6;
            let a = decide(&matched_filter(&g, &root).unwrap(), gamma, &table).unwrap();
            let b = decide(&hyne_transform_stages(&g, &root, stages).unwrap(), gamma, &table).unwrap();
            for (r, errs) in [(a, &mut errs_l), (b, &mut errs_h)] {
                match (r.shift_index, r.timing_advance) {
                    (Some(sl), Some(sd)) => errs.push((table.offsets()[sl] + sd) as i64 - truth),
                    _ => missed += 1,
                }
            }
        }
    }
    let fl = compute_ta_cdf(&errs_l);
    let fh = compute_ta_cdf(&errs_h);
    passed &= missed == 0 && fl.at(0) == 1.0 && fh.at(0) == 1.0;
    record(
        out,
        10,
        Some(600.0),
        t0,
        passed,
        format!(
            "KS no-worse at 5%: {}; noiseless sweep {} (l,d) pairs: F(0) legacy {}, HyNE {}, missed {missed}",
            parts.join("; "),
            fl.total,
            fl.at(0),
            fh.at(0)
        ),
    );
}

fn c11_degeneracy(out: &mut Vec<Outcome>, stages: &HyneStages) {
    let t0 = Instant::now();
    let zero = HyneStages::spatial_only(HyneStage::new(stages.spatial.model.clone(), HyneConfig::fixed(0.0).unwrap()).unwrap());
    let zc = ZcConfig::default();
    let sc = ChannelScenario::from_config(&ScenarioConfig::default(), &zc).unwrap();
    let root = generate_root(&zc).unwrap();
    let table = shift_table(&zc).unwrap();
    let gamma = calibrate_threshold(|g| Ok(energy_statistic(&matched_filter(g, &root)?)), &sc, 1e-2, 1000, 11011, PAR)
        .unwrap()
        .gamma;
    let gamma_zero = calibrate_threshold(
        |g| Ok(energy_statistic(&hyne_transform_stages(g, &root, &zero)?)),
        &sc,
        1e-2,
        1000,
        11011,
        PAR,
    )
    .unwrap()
    .gamma;
    let mismatches = PAR
        .map(1000, |i| {
            let mut rng = stream(11012, &[i as u64]);
            let g = if i % 2 == 0 {
                draw_noise_grid(&sc, &mut rng)
            } else {
                let snr = -25.0 + 5.0 * (i % 6) as f64;
                let choice = PreambleChoice {
                    shift_index: rng.random_range(0..table.len()),
                    delay: rng.random_range(0..=12),
                };
                synthesize_received(&sc.at_snr_db(snr), &root, &table, choice, &mut rng).unwrap()
            };
            let a = decide(&matched_filter(&g, &root).unwrap(), gamma, &table).unwrap();
            let b = decide(&hyne_transform_stages(&g, &root, &zero).unwrap(), gamma, &table).unwrap();
            a.statistic.to_bits() != b.statistic.to_bits() || a != b
        })
        .into_iter()
        .filter(|&m| m)
        .count();
    record(
        out,
        11,
        Some(60.0),
        t0,
        mismatches == 0 && gamma.to_bits() == gamma_zero.to_bits(),
        format!("1000 shared-seed trials: {mismatches} statistic/decision mismatches; calibrated thresholds bit-equal: {}", gamma.to_bits() == gamma_zero.to_bits()),
    );
}

fn c12_reproducibility(out: &mut Vec<Outcome>, dir: &Path) {
    let t0 = Instant::now();
    let cfg = ExperimentConfig {
        snr_list_db: vec![-15.0, -5.0],
        trials_per_point: 4000,
        target_pfa: 1e-2,
        calibration_trials: 4000,
        ..experiment_config(vec![], 0)
    };
    let render = |r: MetricsReport| (to_json(&r).unwrap(), to_csv(&r));
    let reference = render(run_experiment(&cfg, dir, Execution::Sequential).unwrap());
    let mut runs = vec![render(run_experiment(&cfg, dir, Execution::Sequential).unwrap())];
    for workers in [1, 2, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
        runs.push(render(pool.install(|| run_experiment(&cfg, dir, PAR)).unwrap()));
    }
    let identical = runs.iter().all(|r| r == &reference);
    record(
        out,
        12,
        None,
        t0,
        identical,
        format!(
            "sequential x2 and rayon pools of 1, 2, 4 workers: JSON ({} bytes) and CSV ({} bytes) byte-identical: {identical}",
            reference.0.len(),
            reference.1.len()
        ),
    );
}

fn main() {
    // Let `cargo test -- <filter>` style invocations pass through untouched.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut out = Vec::new();
    c1_cazac(&mut out);
    c2_mmse(&mut out);
    c3_error_variance(&mut out);
    c4_lemma(&mut out);
    c5_whitening(&mut out);
    c6_gradient(&mut out);
    c7_floor(&mut out);

    let dir = tempfile::tempdir().unwrap();
    let (stages, train_s) = train_bundle(dir.path());
    println!("setup: trained HyNE bundle (1e5 samples, rho=0.95, -20..0 dB) in {train_s:.1}s");

    c8_calibration(&mut out, &stages);
    let t0 = Instant::now();
    let report = run_experiment(&experiment_config(vec![-20.0, -15.0, -10.0, -5.0, 0.0], 20_000), dir.path(), PAR).unwrap();
    let exp_s = t0.elapsed().as_secs_f64();
    println!("setup: paired experiment (3 detectors x 5 SNRs x 20000 trials) in {exp_s:.1}s");
    c9_ordering(&mut out, &report, exp_s + train_s);
    c10_ta(&mut out, &report, &stages, exp_s + train_s);
    c11_degeneracy(&mut out, &stages);
    c12_reproducibility(&mut out, dir.path());

    let failed: Vec<usize> = out.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    println!("acceptance: {} passed, {} failed", out.len() - failed.len(), failed.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
