//! Acceptance harness: one pass/fail line per criterion.
//!
//! Every criterion is evaluated twice, once on a single worker and once on
//! four, and the numeric fingerprints of both runs are compared bit for bit.
//! The process exits non-zero when any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use hyperlab::algebra::{analyze_matrix, ToralAutomorphism};
use hyperlab::cocycle::{lyapunov_exponents, volume_average_exponents, SplittingConfig};
use hyperlab::conjugacy::{
    run_diagnostics, solve_conjugacy, Agreement, ConjugacyConfig, DiagnosticsConfig,
    RigidityDiagnostics,
};
use hyperlab::entropy::{
    partial_entropy_gap, pesin_report, EntropyConfig, InvarianceVerdict, PesinVerdict,
    SamplingMeasure,
};
use hyperlab::foliation::{
    density_equivariance_defect, expanding_view, gibbs_density, trace_leaf, GibbsConfig,
    TraceConfig,
};
use hyperlab::maps::{
    make_conjugated_linear, make_katok_family, make_shear_perturbation, uniform_grid,
    ExponentProfile, FiberPerturbation, FiberTerm, ShearFactor, SkewProductMap, SmoothTorusMap,
    TrigProfile,
};
use hyperlab::skew::{
    absolute_continuity_probe, solve_family, unique_intersection_indicator, AcConfig, AcVerdict,
    IntersectionConfig,
};
use hyperlab::stats::uniform_point;

const SEED: u64 = 2024;
const CAT: &str = "2,1;1,1";
const COMPANION: &str = "0,0,-1;1,0,0;0,1,3";
const WORKER_COUNTS: [usize; 2] = [1, 4];

struct Check {
    label: String,
    pass: bool,
    detail: String,
}

#[derive(Default)]
struct Outcome {
    checks: Vec<Check>,
    fingerprint: Vec<f64>,
    seconds: f64,
}

impl Outcome {
    fn check(&mut self, label: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            label: label.into(),
            pass,
            detail: detail.into(),
        });
    }

    fn record(&mut self, values: impl IntoIterator<Item = f64>) {
        self.fingerprint.extend(values);
    }

    fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Diagnostic runs shared between criteria.
#[derive(Default)]
struct Shared {
    agreements: Vec<(String, Agreement)>,
}

fn automorphism(literal: &str) -> ToralAutomorphism {
    analyze_matrix(&literal.parse().unwrap()).unwrap()
}

fn shear(i: usize, j: usize, a: f64) -> ShearFactor {
    ShearFactor::new(i, j, a, TrigProfile::unit_sine(1))
}

fn points(d: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..n).map(|i| uniform_point(d, seed, i as u64)).collect()
}

fn record_agreements(shared: &mut Shared, label: &str, diag: &RigidityDiagnostics) {
    for fol in &diag.foliations {
        shared
            .agreements
            .push((format!("{label} sigma {}", fol.sigma), fol.agreement.clone()));
    }
}

fn spectral_oracle(_: &mut Shared) -> Outcome {
    let mut out = Outcome::default();
    let cat = SmoothTorusMap::linear(&automorphism(CAT));
    let lam = ((3.0 + 5f64.sqrt()) / 2.0).ln();
    let est = lyapunov_exponents(&cat, None, 10_000, SEED).unwrap();
    let err = (est.exponents[0] + lam).abs().max((est.exponents[1] - lam).abs());
    out.check("cat map", err <= 1e-9, format!("max error {err:.1e}"));
    out.record(est.exponents.clone());

    let l = automorphism(COMPANION);
    let est = lyapunov_exponents(&SmoothTorusMap::linear(&l), None, 10_000, SEED).unwrap();
    let err = est
        .exponents
        .iter()
        .zip(l.exponents())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    out.check("companion d=3", err <= 1e-6, format!("max error {err:.1e}"));
    out.record(est.exponents.clone());
    out
}

fn positive_control(shared: &mut Shared) -> Outcome {
    let mut out = Outcome::default();
    let cases = [
        ("d=2", CAT, vec![shear(0, 1, 0.05), shear(1, 0, 0.05)]),
        ("d=3", COMPANION, vec![shear(1, 0, 0.05), shear(2, 1, 0.05)]),
    ];
    for (label, literal, generator) in cases {
        let l = automorphism(literal);
        let f = make_conjugated_linear(&l, &generator, 2.0).unwrap();
        let g = f.generator().unwrap().clone();
        let sol = solve_conjugacy(&f, &l, &ConjugacyConfig { seed: SEED, ..Default::default() })
            .unwrap();
        let err = sol.distance_to(&g.inverse(), &points(l.dim(), 1000, SEED ^ 1));
        out.check(format!("{label} conjugacy"), err <= 1e-6, format!("sup error {err:.1e}"));

        let cfg = DiagnosticsConfig {
            seed: SEED,
            max_period: 6,
            ..Default::default()
        };
        let diag = run_diagnostics(&sol, &cfg).unwrap();
        let slope = diag
            .foliations
            .iter()
            .map(|fol| fol.b3.slope.abs())
            .fold(0.0, f64::max);
        let bounded = diag.foliations.iter().all(|fol| fol.b3.bounded);
        out.check(
            format!("{label} B3"),
            bounded && slope <= 1e-3,
            format!("max |slope| {slope:.1e}, bounded {bounded}"),
        );
        let holders: Vec<f64> = diag
            .foliations
            .iter()
            .flat_map(|fol| {
                std::iter::once(fol.b5.holder)
                    .chain(fol.b5_periodic.as_ref().map(|p| p.probe.holder))
            })
            .collect();
        let (lo, hi) = holders
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &h| (a.min(h), b.max(h)));
        out.check(
            format!("{label} Hölder"),
            lo >= 0.97 && hi <= 1.03,
            format!("range [{lo:.4}, {hi:.4}] over {} estimates", holders.len()),
        );
        let periods = diag.periodic.orbits.iter().map(|o| o.period).max().unwrap_or(0);
        out.check(
            format!("{label} periodic"),
            diag.periodic.max_gap <= 1e-8 && periods == 6 && diag.periodic.failures.is_empty(),
            format!(
                "max gap {:.1e} over {} orbits up to period {periods}",
                diag.periodic.max_gap,
                diag.periodic.orbits.len()
            ),
        );
        out.record([err, slope, lo, hi, diag.periodic.max_gap]);
        record_agreements(shared, &format!("positive {label}"), &diag);
    }
    out
}

fn negative_control(shared: &mut Shared) -> Outcome {
    let mut out = Outcome::default();
    let l = automorphism(CAT);
    let f = make_shear_perturbation(&l, &[shear(0, 1, 0.1)], 1.0).unwrap();
    let sol = solve_conjugacy(&f, &l, &ConjugacyConfig { seed: SEED, ..Default::default() })
        .unwrap();
    let cfg = DiagnosticsConfig {
        seed: SEED,
        max_period: 6,
        exponent_samples: 32,
        exponent_length: 8000,
        ..Default::default()
    };
    let diag = run_diagnostics(&sol, &cfg).unwrap();
    let top = diag.foliations.iter().find(|fol| fol.expanding).unwrap();

    let lam_u = top.l_exponent;
    let (exp_f, se) = (top.b4.f_exponent, top.b4.stderr);
    out.check(
        "volume exponent drop",
        exp_f < lam_u - 3.0 * se,
        format!("{exp_f:.5} vs {lam_u:.5} (stderr {se:.1e})"),
    );
    out.check(
        "B3 slope = exponent gap",
        top.agreement.consistent,
        format!(
            "difference {:.1e}, combined stderr {:.1e}",
            top.agreement.difference, top.agreement.combined_stderr
        ),
    );
    let probe = top.b5_periodic.as_ref().unwrap();
    let margin = 1.0 - probe.probe.holder;
    let predicted = 1.0 - probe.predicted_holder;
    let rel = (margin - predicted).abs() / predicted;
    out.check(
        "Hölder margin at the fixed point",
        margin > 0.0 && rel <= 0.15,
        format!(
            "holder {:.5}, predicted {:.5}, margin mismatch {:.1}%; volume-typical {:.4}",
            probe.probe.holder,
            probe.predicted_holder,
            100.0 * rel,
            top.b5.holder
        ),
    );
    out.check(
        "periodic obstruction",
        diag.periodic.max_gap >= 1e-3,
        format!("max gap {:.3e}", diag.periodic.max_gap),
    );
    out.record([exp_f, se, top.b3.slope, probe.probe.holder, top.b5.holder, diag.periodic.max_gap]);
    record_agreements(shared, "negative", &diag);
    out
}

fn gibbs_machinery(_: &mut Shared) -> Outcome {
    let mut out = Outcome::default();
    let l = automorphism(CAT);
    let f = make_shear_perturbation(&l, &[shear(0, 1, 0.1)], 1.0).unwrap();
    let trace = TraceConfig {
        half_length: 0.1,
        ..TraceConfig::default()
    };
    let gcfg = GibbsConfig::default();
    let x = uniform_point(2, SEED, 0);
    for sigma in 0..2 {
        let (g, j) = expanding_view(&f, sigma);
        let seg = trace_leaf(&g, j, &x, &trace).unwrap();
        let rho = gibbs_density(&g, &seg, &gcfg).unwrap();
        let (ratio, r2) = (rho.gap_ratio.unwrap_or(f64::NAN), rho.gap_r2.unwrap_or(f64::NAN));
        out.check(
            format!("sigma {sigma} geometric gaps"),
            ratio < 1.0 && r2 >= 0.99,
            format!("ratio {ratio:.3}, R² {r2:.4}"),
        );
        let norm = (rho.integral - 1.0).abs();
        out.check(format!("sigma {sigma} normalized"), norm <= 1e-8, format!("|∫ρ - 1| {norm:.1e}"));
        let eq = density_equivariance_defect(&g, &seg, 40, &SplittingConfig::default()).unwrap();
        out.check(format!("sigma {sigma} equivariance"), eq <= 1e-5, format!("defect {eq:.1e}"));
        out.record([ratio, r2, rho.integral, eq]);
    }
    let lin = SmoothTorusMap::linear(&l);
    let seg = trace_leaf(&lin, 1, &x, &trace).unwrap();
    let rho = gibbs_density(&lin, &seg, &gcfg).unwrap();
    let (lo, hi) = rho
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    out.check(
        "constant density for L",
        (hi - lo) <= 1e-12 * hi,
        format!("oscillation {:.1e}", hi - lo),
    );
    out.record([lo, hi]);
    out
}

fn entropy_suite(_: &mut Shared) -> Outcome {
    let mut out = Outcome::default();
    let cfg = EntropyConfig {
        seed: SEED,
        ..Default::default()
    };
    let cat = automorphism(CAT);
    let other = automorphism("3,1;2,1");
    let comp = automorphism(COMPANION);
    let pert = |l: &ToralAutomorphism, s: Vec<ShearFactor>| make_shear_perturbation(l, &s, 2.0).unwrap();
    let vol = SamplingMeasure::Volume;
    let runs: Vec<(&str, SmoothTorusMap, usize, SamplingMeasure)> = vec![
        ("cat L, unstable", SmoothTorusMap::linear(&cat), 1, vol.clone()),
        ("cat L, stable", SmoothTorusMap::linear(&cat), 0, vol.clone()),
        ("cat eps 0.05", pert(&cat, vec![shear(0, 1, 0.05)]), 1, vol.clone()),
        ("cat eps 0.1", pert(&cat, vec![shear(0, 1, 0.1)]), 1, vol.clone()),
        ("cat eps 0.1, stable", pert(&cat, vec![shear(0, 1, 0.1)]), 0, vol.clone()),
        ("cat two shears", pert(&cat, vec![shear(0, 1, 0.2), shear(1, 0, 0.2)]), 1, vol.clone()),
        (
            "cat conjugated",
            make_conjugated_linear(&cat, &[shear(0, 1, 0.05), shear(1, 0, 0.05)], 1.0).unwrap(),
            1,
            vol.clone(),
        ),
        ("[3 1;2 1] L", SmoothTorusMap::linear(&other), 1, vol.clone()),
        ("[3 1;2 1] eps 0.1", pert(&other, vec![shear(1, 0, 0.1)]), 1, vol.clone()),
        ("companion L, unstable", SmoothTorusMap::linear(&comp), 2, vol.clone()),
        ("companion L, strong stable", SmoothTorusMap::linear(&comp), 0, vol.clone()),
        ("companion eps 0.05", pert(&comp, vec![shear(1, 0, 0.05)]), 2, vol.clone()),
        (
            "cat eps 0.1, fixed point",
            pert(&cat, vec![shear(0, 1, 0.1)]),
            1,
            SamplingMeasure::PeriodicOrbit {
                orbit: vec![vec![0.0, 0.0]],
            },
        ),
        (
            "cat L, period-2 orbit",
            SmoothTorusMap::linear(&cat),
            1,
            SamplingMeasure::PeriodicOrbit {
                orbit: vec![vec![0.2, 0.4], vec![0.8, 0.6]],
            },
        ),
    ];
    let mut ruelle_failures = Vec::new();
    let mut pesin_failures = Vec::new();
    for (label, f, sigma, measure) in &runs {
        let rep = pesin_report(f, *sigma, measure, &cfg).unwrap();
        let e = &rep.estimate;
        if e.entropy > e.exponent + 3.0 * e.gap_stderr {
            ruelle_failures.push(format!("{label}: {:.4} > {:.4}", e.entropy, e.exponent));
        }
        if matches!(measure, SamplingMeasure::Volume) && rep.verdict != PesinVerdict::PesinEqual {
            pesin_failures.push(format!("{label}: {:?}", rep.verdict));
        }
        if *label == "cat L, unstable" {
            let lam = cat.exponents()[1];
            let rel = (e.entropy - lam).abs() / lam;
            out.check(
                "h_vol(L) = λ_u(L)",
                rel <= 0.02,
                format!("{:.5} vs {lam:.5} ({:.2}%)", e.entropy, 100.0 * rel),
            );
        }
        out.record([e.entropy, e.stderr, e.exponent]);
    }
    out.check(
        "Ruelle inequality",
        ruelle_failures.is_empty() && runs.len() >= 12,
        if ruelle_failures.is_empty() {
            format!("{} maps", runs.len())
        } else {
            ruelle_failures.join("; ")
        },
    );
    let volume_runs = runs
        .iter()
        .filter(|r| matches!(r.3, SamplingMeasure::Volume))
        .count();
    out.check(
        "Pesin equality on volume",
        pesin_failures.is_empty(),
        if pesin_failures.is_empty() {
            format!("{volume_runs} volume runs")
        } else {
            pesin_failures.join("; ")
        },
    );
    out
}

fn invariance_principle(_: &mut Shared) -> Outcome {
    let mut out = Outcome::default();
    let cfg = EntropyConfig {
        seed: SEED,
        samples: 192,
        ..Default::default()
    };
    let l = automorphism(CAT);
    let shift = FiberPerturbation {
        constant: 0.3,
        terms: vec![],
    };
    let q = FiberPerturbation {
        constant: 0.0,
        terms: vec![
            FiberTerm {
                driver: 0,
                profile: TrigProfile::unit_sine(1),
            },
            FiberTerm {
                driver: 1,
                profile: TrigProfile::unit_cosine(2),
            },
        ],
    };
    let matched = make_conjugated_linear(&l, &[shear(0, 1, 0.05), shear(1, 0, 0.05)], 1.0).unwrap();
    let dropped = make_shear_perturbation(&l, &[shear(0, 1, 0.6), shear(1, 0, 0.6)], 10.0).unwrap();
    let runs = [
        ("eps_c = 0", SmoothTorusMap::linear(&l), 0.0, InvarianceVerdict::Equal),
        ("linear base, eps_c = 0.5", SmoothTorusMap::linear(&l), 0.5, InvarianceVerdict::Equal),
        ("matched base", matched, 0.5, InvarianceVerdict::Equal),
        ("exponent-dropped base", dropped, 0.5, InvarianceVerdict::StrictDrop),
    ];
    for (label, base, coupling, expected) in runs {
        let skew = SkewProductMap::new(base, shift.clone(), q.clone(), coupling).unwrap();
        let gap = partial_entropy_gap(&skew, &cfg).unwrap();
        out.check(
            label,
            gap.gap >= -3.0 * gap.stderr && gap.verdict == expected,
            format!("gap {:.5} ± {:.5}, {:?}", gap.gap, gap.stderr, gap.verdict),
        );
        out.record([gap.gap, gap.stderr]);
    }
    out
}

fn katok_dichotomy(_: &mut Shared) -> Outcome {
    let mut out = Outcome::default();
    let l = automorphism(CAT);
    let template = [shear(0, 1, 0.35), shear(1, 0, 0.35)];
    let ccfg = ConjugacyConfig {
        seed: SEED,
        test_points: 100,
        ..Default::default()
    };
    let ac = AcConfig::default();

    let fam = make_katok_family(&l, &template, ExponentProfile::Constant, &uniform_grid(2), 10.0)
        .unwrap();
    let solved = solve_family(&fam, &ccfg).unwrap();
    let h = solved.holonomy(0, 2).unwrap();
    let oracle = h.oracle_distance(&points(2, 1000, SEED ^ 7)).unwrap();
    let rep = absolute_continuity_probe(&h, SEED, &ac).unwrap();
    out.check(
        "constant family",
        oracle <= 1e-6 && rep.verdict == AcVerdict::AcLike,
        format!("oracle {oracle:.1e}, {:?}, c_q {:.3?}", rep.verdict, rep.c_q),
    );
    out.record([oracle]);
    out.record(rep.c_q.clone());

    let fam = make_katok_family(&l, &template, ExponentProfile::Varying, &uniform_grid(2), 3.0)
        .unwrap();
    let tops: Vec<f64> = fam
        .members
        .iter()
        .map(|m| volume_average_exponents(m, 16, 4000, SEED).unwrap().top())
        .collect();
    let spread = fam.require_spread(&tops, 0.01);
    out.check(
        "varying family spread",
        spread.is_ok(),
        format!("exponents {tops:.4?}"),
    );
    let solved = solve_family(&fam, &ccfg).unwrap();
    let h = solved.holonomy(0, 2).unwrap();
    let rep = absolute_continuity_probe(&h, SEED, &ac).unwrap();
    out.check(
        "varying family singular",
        rep.verdict == AcVerdict::SingularLike,
        format!(
            "{:?}, c_q {:.4?}, shrink {:.3?}, finest Jacobian spreads {:.3?}",
            rep.verdict,
            rep.c_q,
            rep.shrink,
            rep.jacobian.iter().rev().take(2).map(|j| j.spread).collect::<Vec<_>>()
        ),
    );
    let inter = unique_intersection_indicator(
        &solved,
        &IntersectionConfig {
            seed: SEED,
            ..Default::default()
        },
    )
    .unwrap();
    out.check(
        "unique intersection",
        inter.separated_fraction >= 0.95,
        format!("{:.1}% of {} leaves", 100.0 * inter.separated_fraction, inter.leaves.len()),
    );
    out.record(tops);
    out.record(rep.c_q.clone());
    out.record([inter.separated_fraction]);
    out
}

fn cross_module(shared: &mut Shared) -> Outcome {
    let mut out = Outcome::default();
    let bad: Vec<String> = shared
        .agreements
        .iter()
        .filter(|(_, a)| !a.consistent)
        .map(|(label, a)| format!("{label}: {:.1e} vs {:.1e}", a.difference, a.combined_stderr))
        .collect();
    let worst = shared
        .agreements
        .iter()
        .map(|(_, a)| a.difference.abs() / a.combined_stderr.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    out.check(
        "B3 slope vs B4 gap",
        bad.is_empty() && !shared.agreements.is_empty(),
        if bad.is_empty() {
            format!("{} runs, worst {worst:.2} combined stderr", shared.agreements.len())
        } else {
            bad.join("; ")
        },
    );
    out.record(shared.agreements.iter().map(|(_, a)| a.difference));
    out
}

type Criterion = fn(&mut Shared) -> Outcome;

const CRITERIA: [(&str, f64, Criterion); 8] = [
    ("spectral oracle", 1.0, spectral_oracle),
    ("positive control", 120.0, positive_control),
    ("negative control", 120.0, negative_control),
    ("Gibbs machinery", 30.0, gibbs_machinery),
    ("entropy suite", 300.0, entropy_suite),
    ("invariance principle", 300.0, invariance_principle),
    ("Katok dichotomy", 600.0, katok_dichotomy),
    ("cross-module identity", f64::INFINITY, cross_module),
];

fn run_suite(workers: usize, selected: &[usize]) -> Vec<Option<Outcome>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .unwrap();
    pool.install(|| {
        let mut shared = Shared::default();
        CRITERIA
            .iter()
            .enumerate()
            .map(|(k, (_, _, run))| {
                if !selected.contains(&(k + 1)) {
                    return None;
                }
                let start = Instant::now();
                let mut out = run(&mut shared);
                out.seconds = start.elapsed().as_secs_f64();
                Some(out)
            })
            .collect()
    })
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn print_outcome(k: usize, name: &str, budget: f64, out: &Outcome) -> bool {
    let timely = out.seconds <= budget;
    let pass = out.pass() && timely;
    let budget_text = if budget.is_finite() {
        format!("{:.1}s of {budget:.0}s", out.seconds)
    } else {
        format!("{:.1}s", out.seconds)
    };
    println!(
        "criterion {}: {} {name} ({budget_text})",
        k + 1,
        if pass { "PASS" } else { "FAIL" }
    );
    for c in &out.checks {
        println!("    [{}] {}: {}", if c.pass { "ok" } else { "FAIL" }, c.label, c.detail);
    }
    if !timely {
        println!("    [FAIL] runtime over budget");
    }
    pass
}

/// Criterion numbers given on the command line restrict the run; all run
/// by default.
fn selection() -> Vec<usize> {
    let picked: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .filter(|k| (1..=CRITERIA.len()).contains(k))
        .collect();
    if picked.is_empty() {
        (1..=CRITERIA.len()).collect()
    } else {
        picked
    }
}

fn main() -> ExitCode {
    let selected = selection();
    let reference = run_suite(WORKER_COUNTS[0], &selected);
    let mut all_pass = true;
    for (k, ((name, budget, _), out)) in CRITERIA.iter().zip(&reference).enumerate() {
        if let Some(out) = out {
            all_pass &= print_outcome(k, name, *budget, out);
        }
    }
    let others: Vec<Vec<Option<Outcome>>> = WORKER_COUNTS[1..]
        .iter()
        .map(|&w| run_suite(w, &selected))
        .collect();
    let fingerprint = |o: &Option<Outcome>| o.as_ref().map(|o| bits(&o.fingerprint));
    let mismatched: Vec<usize> = (0..CRITERIA.len())
        .filter(|&k| others.iter().any(|r| fingerprint(&r[k]) != fingerprint(&reference[k])))
        .map(|k| k + 1)
        .collect();
    let values: usize = reference.iter().flatten().map(|o| o.fingerprint.len()).sum();
    let deterministic = mismatched.is_empty();
    all_pass &= deterministic;
    println!(
        "criterion 9: {} determinism (workers {:?}, criteria {:?})",
        if deterministic { "PASS" } else { "FAIL" },
        WORKER_COUNTS,
        selected
    );
    if deterministic {
        println!("    [ok] {values} fingerprint values bit-identical across worker counts");
    } else {
        println!("    [FAIL] criteria {mismatched:?} differ across worker counts");
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
