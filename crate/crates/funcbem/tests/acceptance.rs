//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are reproduced faithfully but do not
//! meet their pinned targets (see the README); their failure is reported and
//! tolerated, every other failure makes the run exit non-zero. A known
//! failure that starts passing is reported as such.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use funcbem::adaptive::{adaptive_loop, doerfler_mark, AdaptiveConfig, EstimateRecord};
use funcbem::experiments::{fit_records, Example, ExperimentSpec};
use funcbem::mesh::{extract_layer, gamma_boundary, initial_mesh, Domain};
use rand::rngs::StdRng;
use rand::SeedableRng;

const KNOWN_FAILURES: [usize; 3] = [1, 3, 12];

// Criterion 1: uniform square table.
const C1_ERROR_128: f64 = 3.23e-2;
const C1_MAJORANT_128: f64 = 2.30e-2;
const C1_REL_TOL: f64 = 0.10;
const C1_RATIO: f64 = 0.71;
const C1_RATIO_TOL: f64 = 0.05;
const C1_RATIO_STD: f64 = 0.02;
const C1_SECONDS: f64 = 120.0;
// Criterion 2.
const C2_RATE: (f64, f64) = (0.60, 0.75);
// Criterion 3: adaptive square.
const C3_MAX_DOF: usize = 5000;
const C3_RATE_MIN: f64 = 1.4;
const C3_RATIO: (f64, f64) = (0.6, 1.4);
const C3_RATIO_FROM_N: usize = 300;
const C3_SECONDS: f64 = 600.0;
// Criterion 4.
const C4_FACTOR: f64 = 1.02;
const C4_MAX_DOF: usize = 800;
// Criterion 5.
const C5_TOL: f64 = 1e-12;
// Criterion 6.
const C6_FAR: f64 = 1e-10;
const C6_NEAR: f64 = 1e-8;
const C6_GRADIENT: f64 = 1e-6;
// Criterion 7.
const C7_RHS: f64 = 1e-10;
const C7_DENSITY: f64 = 1e-10;
const C7_POTENTIAL: f64 = 1e-8;
// Criterion 8.
const C8_TOL: f64 = 1e-12;
const C8_OSC: f64 = 1e-24;
// Criterion 9: direct square, first level.
const C9_ERROR: f64 = 2.30e-3;
const C9_REL_TOL: f64 = 0.20;
const C9_RATIO: (f64, f64) = (0.8, 1.2);
// Criterion 10: exterior.
const C10_LEVELS: usize = 25;
const C10_FROM_LEVEL: usize = 5;
const C10_NOISE: f64 = 1.01;
const C10_FACTOR: f64 = 1.05;
// Criterion 11.
const C11_TRIALS: usize = 1000;
// Criterion 12.
const C12_STEPS: usize = 10_000;
const C12_MESHES: usize = 50;
const C12_LAYER_SQUARE: usize = 72;
const C12_LAYER_LSHAPE: usize = 168;

struct Report {
    unexpected: Vec<usize>,
}

impl Report {
    fn line(&mut self, n: usize, pass: bool, detail: String) {
        let status = match (pass, KNOWN_FAILURES.contains(&n)) {
            (true, false) => "PASS",
            (true, true) => "PASS (listed as a known failure)",
            (false, true) => "FAIL (known)",
            (false, false) => {
                self.unexpected.push(n);
                "FAIL"
            }
        };
        // Printed without the test harness, so the lines always show.
        println!("criterion {n}: {status}: {detail}");
    }
}

fn within(v: f64, target: f64, rel: f64) -> bool {
    (v - target).abs() <= rel * target
}

fn in_range(v: f64, (lo, hi): (f64, f64)) -> bool {
    (lo..=hi).contains(&v)
}

fn timed(config: &AdaptiveConfig, example: Example) -> (Vec<EstimateRecord>, f64) {
    let t = Instant::now();
    let r = adaptive_loop(config, &example.problem()).expect("run completes");
    (r, t.elapsed().as_secs_f64())
}

fn criterion_1(rep: &mut Report, uni: &[EstimateRecord], secs: f64) {
    let Some(r) = uni.iter().find(|r| r.n_gamma == 128) else {
        rep.line(1, false, "no level with #F = 128".into());
        return;
    };
    let err = r.error.unwrap();
    let ratios: Vec<f64> = uni.iter().filter_map(|r| r.maj_over_err).collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let std = (ratios.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / ratios.len() as f64).sqrt();
    let ratio = r.maj_over_err.unwrap();
    let checks = [
        within(err, C1_ERROR_128, C1_REL_TOL),
        within(r.majorant, C1_MAJORANT_128, C1_REL_TOL),
        (ratio - C1_RATIO).abs() <= C1_RATIO_TOL,
        std < C1_RATIO_STD,
        secs < C1_SECONDS,
    ];
    rep.line(
        1,
        checks.iter().all(|&c| c),
        format!(
            "#F=128 error {err:.3e} [{C1_ERROR_128:e} ±10%: {}], majorant {:.3e} [{C1_MAJORANT_128:e} ±10%: {}], \
             ratio {ratio:.3} [{C1_RATIO} ±{C1_RATIO_TOL}: {}], ratio std over {} levels {std:.4} [<{C1_RATIO_STD}: {}], \
             runtime {secs:.0}s [<{C1_SECONDS}s: {}]",
            ok(checks[0]),
            r.majorant,
            ok(checks[1]),
            ok(checks[2]),
            ratios.len(),
            ok(checks[3]),
            ok(checks[4]),
        ),
    );
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "missed"
    }
}

fn criterion_2(rep: &mut Report, uni: &[EstimateRecord]) {
    match fit_records(uni, 64, |r| r.error) {
        Ok(rate) => rep.line(
            2,
            in_range(rate, C2_RATE),
            format!("uniform error rate {rate:.3} over #F >= 64 [{:?}]", C2_RATE),
        ),
        Err(e) => rep.line(2, false, format!("rate fit failed: {e}")),
    }
}

fn criterion_3(rep: &mut Report, ada: &[EstimateRecord], secs: f64) {
    let n_final = ada.last().map_or(0, |r| r.n_gamma);
    let rate = fit_records(ada, n_final / 10, |r| r.error).unwrap_or(f64::NAN);
    let band: Vec<f64> = ada
        .iter()
        .filter(|r| r.n_gamma >= C3_RATIO_FROM_N)
        .filter_map(|r| r.maj_over_err)
        .collect();
    let lo = band.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = band.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let checks = [
        rate >= C3_RATE_MIN,
        !band.is_empty() && lo >= C3_RATIO.0 && hi <= C3_RATIO.1,
        secs < C3_SECONDS,
        n_final >= C3_MAX_DOF,
    ];
    rep.line(
        3,
        checks.iter().all(|&c| c),
        format!(
            "{} levels to #F={n_final}, error rate over the final decade {rate:.3} [>= {C3_RATE_MIN}: {}], \
             majorant/error for #F >= {C3_RATIO_FROM_N} in [{lo:.3}, {hi:.3}] [{:?}: {}], runtime {secs:.0}s [<{C3_SECONDS}s: {}]",
            ada.len(),
            ok(checks[0]),
            C3_RATIO,
            ok(checks[1]),
            ok(checks[2]),
        ),
    );
}

fn criterion_4(rep: &mut Report, runs: &[(&str, &[EstimateRecord])]) {
    let mut worst = (0.0f64, String::new());
    let mut levels = 0;
    let mut violations = 0;
    for (name, records) in runs {
        for r in records.iter() {
            let Some(e) = r.error else { continue };
            levels += 1;
            for (variant, m) in [("mixed", r.minorant), ("curl", r.minorant_curl)] {
                let q = m / (e * e);
                if q > C4_FACTOR {
                    violations += 1;
                }
                if q > worst.0 {
                    worst = (q, format!("{name} level {} {variant}", r.level));
                }
            }
        }
    }
    rep.line(
        4,
        violations == 0 && levels > 0,
        format!(
            "{levels} levels in {} runs, both minorants; max minorant/error² {:.3e} ({}) [<= {C4_FACTOR}], {violations} violations",
            runs.len(),
            worst.0,
            worst.1
        ),
    );
}

fn criterion_5(rep: &mut Report) {
    let mut d = Defects::default();
    let mut cases = pipeline_cases();
    cases.push((
        Example::LShapeSmooth,
        random_mesh(31, Domain::LShape, 30, 5),
    ));
    let n = cases.len();
    for (example, mesh) in cases {
        for p in [1, 2] {
            d = d.max(defects(&pipeline(example, &mesh, p)));
        }
    }
    let pass =
        d.divergence <= C5_TOL && d.gammac == 0.0 && d.eta_sum <= C5_TOL && d.nu_sum <= C5_TOL;
    rep.line(
        5,
        pass,
        format!(
            "{n} meshes, p = 1, 2: max |div τ| (relative) {:.1e}, max |Γ^c coefficient| {:.1e}, \
             |Σ η² - majorant²| relative {:.1e}, |Σ ν - minorant| relative {:.1e} [<= {C5_TOL:e}]",
            d.divergence, d.gammac, d.eta_sum, d.nu_sum
        ),
    );
}

fn criterion_6(rep: &mut Report) {
    let (far, near) = galerkin_oracle_deviation(200);
    let grad = gradient_fd_deviation(100);
    rep.line(
        6,
        far <= C6_FAR && near <= C6_NEAR && grad <= C6_GRADIENT,
        format!(
            "200 Galerkin entries vs quadrature: non-adjacent {far:.1e} [<= {C6_FAR:e}], adjacent/diagonal {near:.1e} \
             [<= {C6_NEAR:e}]; gradient vs finite differences {grad:.1e} [<= {C6_GRADIENT:e}]"
        ),
    );
}

fn criterion_7(rep: &mut Report) {
    let (rhs, phi, u) = operator_identity_defects();
    rep.line(
        7,
        rhs <= C7_RHS && phi <= C7_DENSITY && u <= C7_POTENTIAL,
        format!(
            "max |((K + 1/2) 1, ψ)| {rhs:.1e} [<= {C7_RHS:e}]; direct solve with g = 1: max |φ_h| {phi:.1e} \
             [<= {C7_DENSITY:e}], max |u_h - 1| at 20 points {u:.1e} [<= {C7_POTENTIAL:e}]"
        ),
    );
}

fn criterion_8(rep: &mut Report) {
    let d = projection_defects();
    rep.line(
        8,
        d.idempotency <= C8_TOL && d.orthogonality <= C8_TOL && d.beaten == 0 && d.osc <= C8_OSC,
        format!(
            "idempotency {:.1e}, orthogonality {:.1e} [<= {C8_TOL:e}], {} of {} random competitors closer, \
             oscillation of S^p residuals {:.1e} [<= {C8_OSC:e}]",
            d.idempotency, d.orthogonality, d.beaten, d.competitors, d.osc
        ),
    );
}

fn criterion_9(rep: &mut Report, direct: &[EstimateRecord]) {
    let r = &direct[0];
    let (err, ratio) = (r.error.unwrap(), r.maj_over_err.unwrap());
    rep.line(
        9,
        within(err, C9_ERROR, C9_REL_TOL) && in_range(ratio, C9_RATIO),
        format!(
            "level 0 error {err:.3e} [{C9_ERROR:e} ±20%], majorant/error {ratio:.3} [{:?}]",
            C9_RATIO
        ),
    );
}

fn criterion_10(rep: &mut Report) {
    let mut spec = ExperimentSpec::new(Example::Exterior);
    spec.config.max_levels = 30;
    spec.config.max_dof = usize::MAX;
    let (r, secs) = timed(&spec.config, Example::Exterior);
    let increases = r
        .windows(2)
        .skip(C10_FROM_LEVEL)
        .filter(|w| w[1].majorant > C10_NOISE * w[0].majorant)
        .count();
    let worst = r
        .iter()
        .map(|x| x.minorant / (x.majorant * x.majorant))
        .fold(0.0f64, f64::max);
    let first = r.first().map_or(f64::NAN, |x| x.majorant);
    let last = r.last().map_or(f64::NAN, |x| x.majorant);
    rep.line(
        10,
        r.len() >= C10_LEVELS && increases == 0 && worst <= C10_FACTOR,
        format!(
            "{} levels [>= {C10_LEVELS}] in {secs:.1}s, majorant {first:.3e} -> {last:.3e}, {increases} increases beyond 1% \
             after level {C10_FROM_LEVEL}, max minorant/majorant² {worst:.2e} [<= {C10_FACTOR}]",
            r.len()
        ),
    );
}

fn criterion_11(rep: &mut Report) {
    let mut rng = StdRng::seed_from_u64(17);
    let disagreements = (0..C11_TRIALS)
        .filter(|_| {
            let (w, theta) = random_weights(&mut rng);
            !doerfler_agrees(&w, theta, &doerfler_mark(&w, theta))
        })
        .count();
    rep.line(
        11,
        disagreements == 0,
        format!("{C11_TRIALS} random weight vectors of length <= 12: {disagreements} differ from exhaustive search"),
    );
}

fn criterion_12(rep: &mut Report) {
    let walk = refinement_walk(7, C12_STEPS);
    let mismatches = layer_mismatches(C12_MESHES);
    let count = |d: Domain| {
        let m = initial_mesh(d);
        extract_layer(&m, &gamma_boundary(&m, d).unwrap())
            .unwrap()
            .num_elements()
    };
    let (sq, ls) = (count(Domain::Square), count(Domain::LShape));
    let checks = [
        walk.is_ok(),
        mismatches == 0,
        sq == C12_LAYER_SQUARE,
        ls == C12_LAYER_LSHAPE,
    ];
    rep.line(
        12,
        checks.iter().all(|&c| c),
        format!(
            "conformity after {C12_STEPS} random steps: {}; layer vs brute-force patch on {C12_MESHES} meshes: {mismatches} \
             mismatches; initial layer sizes {sq} (square) [{C12_LAYER_SQUARE}: {}] and {ls} (L-shape) [{C12_LAYER_LSHAPE}: {}]",
            match &walk {
                Ok(_) => "ok".to_string(),
                Err(e) => e.clone(),
            },
            ok(checks[2]),
            ok(checks[3]),
        ),
    );
}

fn main() -> ExitCode {
    let mut rep = Report {
        unexpected: Vec::new(),
    };

    let uniform = AdaptiveConfig {
        bem: Example::SquareSmooth.default_bem(),
        ..AdaptiveConfig::uniform(8)
    };
    let (uni, uni_secs) = timed(&uniform, Example::SquareSmooth);
    criterion_1(&mut rep, &uni, uni_secs);
    criterion_2(&mut rep, &uni);

    let mut adaptive = ExperimentSpec::new(Example::SquareSmooth).config;
    adaptive.max_dof = C3_MAX_DOF;
    let (ada, ada_secs) = timed(&adaptive, Example::SquareSmooth);
    criterion_3(&mut rep, &ada, ada_secs);

    let capped = |example: Example| {
        let mut c = ExperimentSpec::new(example).config;
        c.max_dof = C4_MAX_DOF;
        timed(&c, example).0
    };
    let lshape_smooth = capped(Example::LShapeSmooth);
    let lshape_singular = capped(Example::LShapeSingular);
    let square_direct = capped(Example::SquareDirect);
    let lshape_direct = capped(Example::LShapeDirect);
    criterion_4(
        &mut rep,
        &[
            ("square-smooth uniform", &uni),
            ("square-smooth adaptive", &ada),
            ("lshape-smooth", &lshape_smooth),
            ("lshape-singular", &lshape_singular),
            ("square-direct", &square_direct),
            ("lshape-direct", &lshape_direct),
        ],
    );
    criterion_5(&mut rep);
    criterion_6(&mut rep);
    criterion_7(&mut rep);
    criterion_8(&mut rep);
    criterion_9(&mut rep, &square_direct);
    criterion_10(&mut rep);
    criterion_11(&mut rep);
    criterion_12(&mut rep);

    if rep.unexpected.is_empty() {
        println!("acceptance: no unexpected failures (known failures: {KNOWN_FAILURES:?})");
        ExitCode::SUCCESS
    } else {
        println!(
            "acceptance: unexpected failures in criteria {:?}",
            rep.unexpected
        );
        ExitCode::FAILURE
    }
}
