//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test --test acceptance`.

use eed_core::diagnostics::{
    audit_trace, check_energy_chain, estimate_constants, BoundConstants, Regime, Verdict,
};
use eed_core::fixed_point::{default_start, iterate, FixedPointConfig, IterationReport, Status};
use eed_core::grid::{Image, Mask};
use eed_core::pgm;
use eed_core::solver::{apply_t, assemble, discrete_energy, SolverConfig};
use eed_core::tensor::{check_ellipticity, check_ellipticity_pairs, EedParams};
use eed_core::testdata::random_mask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, budget_s: f64) -> bool {
    elapsed.as_secs_f64() < budget_s
}

/// A random admissible `(w, f, mask)` on an `n x n` grid.
fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> (Image, Image, Mask) {
    let density = rng.gen_range(0.05..0.5);
    let mask = random_mask(n, n, density, rng.gen()).unwrap();
    let smooth = rng.gen_bool(0.5);
    let (a, b, c) = (rng.gen_range(0.05..0.5), rng.gen_range(0.05..0.5), rng.gen_range(0.0..6.0));
    let f = Image::from_fn(n, n, |x, y| {
        if smooth {
            0.5 + 0.4 * (a * x as f64 + b * y as f64 + c).sin()
        } else {
            rng.gen_range(0.0..1.0)
        }
    })
    .unwrap();
    let amp = if rng.gen_bool(0.3) { 50.0 } else { 1.0 };
    let mut w = f.clone();
    for (k, v) in w.data_mut().iter_mut().enumerate() {
        if mask.is_unknown(k) {
            *v = amp * rng.gen_range(-1.0..1.0);
        }
    }
    (w, f, mask)
}

fn random_problems() -> Vec<(Image, Image, Mask)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..50).map(|_| random_problem(&mut rng, 32)).collect()
}

fn test_problem() -> (Image, Mask) {
    let f = pgm::read_image(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/two_region64.pgm"))).unwrap();
    let mask = random_mask(64, 64, 0.10, 0).unwrap();
    (f, mask)
}

fn run_fixed_point(f: &Image, mask: &Mask, params: &EedParams, max_outer: usize) -> (Image, IterationReport) {
    let u0 = default_start(f, mask).unwrap();
    let fp = FixedPointConfig {
        max_outer,
        ..Default::default()
    };
    iterate(&u0, f, mask, params, &SolverConfig::default(), &fp).unwrap()
}

fn mse(a: &Image, b: &Image) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

fn criterion1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for lambda in [0.5, 1.0, 2.0] {
        let pairs: Vec<_> = (0..10_000)
            .map(|_| {
                let scale = 10f64.powf(rng.gen_range(-3.0..2.0));
                (
                    (scale * rng.gen_range(-1.0..1.0), scale * rng.gen_range(-1.0..1.0)),
                    (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                )
            })
            .collect();
        let r = check_ellipticity_pairs(&pairs, lambda);
        worst = worst.min(r.worst_lower_slack.min(r.worst_upper_slack));
        violations += r.violations;
    }
    // also the tensor field assembled for the test problem
    let (f, mask) = test_problem();
    let params = EedParams::default();
    let step = apply_t(&default_start(&f, &mask).unwrap(), &f, &mask, &params, &SolverConfig::default()).unwrap();
    let field = check_ellipticity(&step.tensor, &step.smoothed_grad, params.lambda);
    violations += field.violations;
    let t = start.elapsed();
    outcome(
        violations == 0 && within(t, 1.0),
        format!("30000 pairs + assembled field, violations {violations}, worst slack {worst:.3e}, {:.3} s", t.as_secs_f64()),
    )
}

fn criteria2_3(problems: &[(Image, Image, Mask)]) -> (Outcome, Outcome) {
    let start = Instant::now();
    let solver = SolverConfig::default();
    let params = EedParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_min, mut worst_el) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let (mut ok_min, mut ok_el) = (true, true);
    for (w, f, mask) in problems {
        let step = apply_t(w, f, mask, &params, &solver).unwrap();
        let e_t = discrete_energy(&step.u, &step.tensor, mask).unwrap();
        let e_f = discrete_energy(f, &step.tensor, mask).unwrap();
        let scale = e_f.max(1.0);
        worst_min = worst_min.max((e_t - e_f) / scale);
        ok_min &= e_t <= e_f + 1e-9 * scale;

        let system = assemble(&step.tensor, mask, f).unwrap();
        let r = system.residual(&system.gather(&step.u));
        let b_norm = system.rhs().iter().map(|v| v * v).sum::<f64>().sqrt();
        for _ in 0..20 {
            let phi: Vec<f64> = (0..r.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let phi_norm = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
            let pairing: f64 = r.iter().zip(&phi).map(|(a, b)| a * b).sum();
            let scale = b_norm * phi_norm;
            worst_el = worst_el.max(pairing.abs() / scale);
            ok_el &= pairing.abs() <= 10.0 * solver.cg_tol * scale;
        }
    }
    let t = start.elapsed();
    let budget = within(t, 30.0);
    (
        outcome(
            ok_min && budget,
            format!("50 runs, max (E(T w) - E(f))/scale = {worst_min:.3e}, {:.2} s", t.as_secs_f64()),
        ),
        outcome(
            ok_el && budget,
            format!("1000 pairings, max |<r, phi>|/scale = {worst_el:.3e} (limit {:.0e})", 10.0 * solver.cg_tol),
        ),
    )
}

fn criterion4(problems: &[(Image, Image, Mask)]) -> Outcome {
    let solver = SolverConfig::default();
    let mut inputs: Vec<(Image, Image, Mask, EedParams)> = problems
        .iter()
        .map(|(w, f, m)| (w.clone(), f.clone(), m.clone(), EedParams::default()))
        .collect();
    let (f, mask) = test_problem();
    let u0 = default_start(&f, &mask).unwrap();
    for params in [EedParams::default(), EedParams::new(0.1, 0.8).unwrap(), EedParams::new(1.0, 3.0).unwrap()] {
        inputs.push((u0.clone(), f.clone(), mask.clone(), params));
        let (u, _) = run_fixed_point(&f, &mask, &params, 50);
        inputs.push((u, f.clone(), mask.clone(), params));
    }
    let mut fails = 0;
    let mut worst = f64::INFINITY;
    for (w, f, mask, params) in &inputs {
        let rep = check_energy_chain(w, f, mask, params, &solver).unwrap();
        fails += rep.checks.iter().filter(|c| !c.pass).count();
        for c in &rep.checks {
            worst = worst.min(c.slack / c.lhs.abs().max(c.rhs.abs()).max(f64::MIN_POSITIVE));
        }
    }
    outcome(
        fails == 0,
        format!("{} inputs x 3 checks, failures {fails}, min relative slack {worst:.3e}", inputs.len()),
    )
}

fn criterion5() -> Outcome {
    let mask = random_mask(32, 32, 0.1, 5).unwrap();
    let f = Image::filled(32, 32, 0.37).unwrap();
    let (uc, rep) = run_fixed_point(&f, &mask, &EedParams::default(), 10);
    let j1 = rep.records[1].j_functional.unwrap();
    let exact = uc == f;
    let const_ok = exact && j1 == 0.0 && rep.status == Status::Converged;

    let n = 32;
    let ramp = Image::from_fn(n, n, |x, y| 0.1 + 0.02 * x as f64 + 0.01 * y as f64).unwrap();
    let ring = Mask::from_fn(n, n, |x, y| x == 0 || y == 0 || x == n - 1 || y == n - 1).unwrap();
    let solver = SolverConfig {
        cg_tol: 1e-13,
        ..Default::default()
    };
    let u0 = default_start(&ramp, &ring).unwrap();
    let (u, _) = iterate(&u0, &ramp, &ring, &EedParams::new(1e6, 0.8).unwrap(), &solver, &FixedPointConfig::default()).unwrap();
    let err = u.data().iter().zip(ramp.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    outcome(
        const_ok && err <= 1e-8,
        format!("constant: J at j=1 = {j1:e}, exact = {exact}; ramp max error {err:.3e}"),
    )
}

fn criterion6() -> (Outcome, Image, IterationReport) {
    let start = Instant::now();
    let (f, mask) = test_problem();
    let (u, rep) = run_fixed_point(&f, &mask, &EedParams::default(), 50);
    let t = start.elapsed();
    let j = rep.final_j().unwrap_or(f64::INFINITY);
    let pass = rep.status == Status::Converged && j <= 1e-8 && within(t, 60.0);
    (
        outcome(
            pass,
            format!("status {:?}, J = {j:.3e} after {} outer steps, {:.2} s", rep.status, rep.records.len() - 1, t.as_secs_f64()),
        ),
        u,
        rep,
    )
}

fn criterion7(eed: &Image) -> (Outcome, IterationReport) {
    let (f, mask) = test_problem();
    let (iso, rep) = run_fixed_point(&f, &mask, &EedParams::new(1e6, 0.8).unwrap(), 50);
    let (a, b) = (mse(eed, &f), mse(&iso, &f));
    (
        outcome(a <= b, format!("MSE eed {a:.5e} vs near-isotropic {b:.5e}")),
        rep,
    )
}

fn criterion8() -> (Outcome, usize) {
    let (f, mask) = test_problem();
    let c = estimate_constants(&mask, 200, 0).unwrap();
    let probe = BoundConstants::evaluate(&f, &mask, &EedParams::default(), &c).unwrap();
    let sigma = 1.05 * probe.sigma_critical_inflated;
    let params = EedParams::new(1.0, sigma).unwrap();
    let consts = BoundConstants::evaluate(&f, &mask, &params, &c).unwrap();
    let (_, rep) = run_fixed_point(&f, &mask, &params, 50);
    let audit = audit_trace(&rep, &mask, &params, &consts);
    let geo: Vec<_> = audit.checks.iter().filter(|c| c.name == "geometric").collect();
    let finite = geo.iter().all(|c| c.rhs_structural.is_some_and(f64::is_finite));
    let within_inflated = geo.iter().all(|c| c.lhs <= c.rhs_structural.unwrap());
    let margin = geo
        .iter()
        .map(|c| c.rhs_structural.unwrap() / c.lhs.max(f64::MIN_POSITIVE))
        .fold(f64::INFINITY, f64::min);
    let pass = consts.rho_inflated.regime == Regime::LargeSigma
        && !geo.is_empty()
        && finite
        && within_inflated
        && audit.structural_fails() == 0
        && rep.status == Status::Converged;
    (
        outcome(
            pass,
            format!(
                "sigma = {sigma:.3} (sigma^4 = {:.3e} > rho = {:.3e}), {} steps audited, min rhs/lhs {margin:.3e}, structural fails {}",
                consts.rho_inflated.sigma4,
                consts.rho_inflated.rho,
                geo.len(),
                audit.structural_fails()
            ),
        ),
        audit.checks.len(),
    )
}

fn criterion9(traces: Vec<(Image, Mask, EedParams, IterationReport)>) -> Outcome {
    let mut structural = 0;
    let mut underestimated = 0;
    let mut checks = 0;
    let mut converged = 0;
    for (f, mask, params, rep) in &traces {
        if rep.status != Status::Converged {
            continue;
        }
        converged += 1;
        let c = estimate_constants(mask, 200, 0).unwrap();
        let consts = BoundConstants::evaluate(f, mask, params, &c).unwrap();
        let audit = audit_trace(rep, mask, params, &consts);
        for chk in audit.checks.iter().filter(|c| c.name == "one_step" || c.name == "sequence") {
            checks += 1;
            match chk.verdict {
                Verdict::StructuralFail => structural += 1,
                Verdict::ConstantsUnderestimated => underestimated += 1,
                Verdict::Pass => {}
            }
        }
    }
    outcome(
        structural == 0 && converged > 0 && checks > 0,
        format!("{converged} converged traces, {checks} checks, structural fails {structural}, underestimated {underestimated}"),
    )
}

fn run_cli(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_eed"))
        .args(args)
        .output()
        .expect("run eed")
        .status
        .code()
        .unwrap_or(-1)
}

fn report_without_timings(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timings");
    v
}

fn criterion10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let image = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/two_region64.pgm");
    let mut codes = Vec::new();
    for run in 0..2 {
        codes.push(run_cli(&[
            "sparsify", "--image", image, "--density", "0.10", "--seed", "7",
            "--out-mask", &p(&format!("mask{run}.pgm")), "--report", &p(&format!("sparsify{run}.json")),
        ]));
        codes.push(run_cli(&[
            "inpaint", "--image", image, "--mask", &p(&format!("mask{run}.pgm")),
            "--out", &p(&format!("out{run}.pgm")), "--report", &p(&format!("inpaint{run}.json")), "--diagnostics",
        ]));
    }
    let same_file = |a: &str, b: &str| std::fs::read(p(a)).unwrap() == std::fs::read(p(b)).unwrap();
    let same_report = |a: &str, b: &str| report_without_timings(Path::new(&p(a))) == report_without_timings(Path::new(&p(b)));
    let ok_codes = codes.iter().all(|&c| c == 0);
    let ok = ok_codes
        && same_file("mask0.pgm", "mask1.pgm")
        && same_file("out0.pgm", "out1.pgm")
        && same_report("sparsify0.json", "sparsify1.json")
        && same_report("inpaint0.json", "inpaint1.json");
    outcome(ok, format!("exit codes {codes:?}, masks/outputs/reports identical: {ok}"))
}

fn main() {
    let total = Instant::now();
    let problems = random_problems();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "ellipticity envelope", criterion1()));
    let (c2, c3) = criteria2_3(&problems);
    results.push((2, "minimality of T", c2));
    results.push((3, "Euler-Lagrange residual", c3));
    results.push((4, "W11 estimate chain", criterion4(&problems)));
    results.push((5, "exact reductions", criterion5()));
    let (c6, eed, rep6) = criterion6();
    results.push((6, "fixed-point convergence", c6));
    let (c7, rep7) = criterion7(&eed);
    results.push((7, "edge-enhancing reconstruction", c7));
    let (c8, _) = criterion8();
    results.push((8, "large-sigma boundedness", c8));

    let (f, mask) = test_problem();
    let mut traces = vec![
        (f.clone(), mask.clone(), EedParams::default(), rep6),
        (f.clone(), mask.clone(), EedParams::new(1e6, 0.8).unwrap(), rep7),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..8 {
        let (_, f, mask) = random_problem(&mut rng, 32);
        let params = EedParams::new([0.1, 1.0][i % 2], [0.8, 2.0, 5.0, 0.5][i % 4]).unwrap();
        let (_, rep) = run_fixed_point(&f, &mask, &params, 100);
        traces.push((f, mask, params, rep));
    }
    results.push((9, "bound audits along traces", criterion9(traces)));
    results.push((10, "determinism", criterion10()));

    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n:>2} [{name}]: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {}/{} passed in {:.1} s",
        results.len() - failed,
        results.len(),
        total.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
