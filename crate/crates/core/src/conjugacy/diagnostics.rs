use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::periodic::{periodic_data, PeriodicReport};
use super::ConjugacySolution;
use crate::cocycle::{
    csv_error, line_field_on_points, orbit, volume_average_exponents,
    SplittingConfig,
};
use crate::error::{Error, Result};
use crate::foliation::{expanding_view, trace_leaf, TraceConfig};
use crate::linalg;
use crate::stats;

pub const B1_STATUS: &str = "implied by the equivalence with B2-B4; not measured";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    #[serde(rename = "SMOOTH_CONSISTENT")]
    Smooth,
    #[serde(rename = "SINGULAR_CONSISTENT")]
    Singular,
    Inconclusive,
}

impl Verdict {
    fn from_smooth(smooth: bool) -> Self {
        if smooth {
            Verdict::Smooth
        } else {
            Verdict::Singular
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Largest B3 slope (and B4 gap) accepted as zero, relative to `|log|λ||`.
    pub slope: f64,
    /// Largest relative change of consecutive derivative ratios.
    pub stabilization: f64,
    /// Largest `|holder - 1|` accepted as smooth.
    pub holder_band: f64,
    /// Standard errors allowed between the B3 slope and the B4 gap.
    pub agreement_sigmas: f64,
    /// Largest periodic multiplier gap accepted as zero.
    pub periodic_gap: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            slope: 1e-3,
            stabilization: 0.05,
            holder_band: 0.03,
            agreement_sigmas: 3.0,
            periodic_gap: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub seed: u64,
    pub b3_length: usize,
    pub jacobian_samples: usize,
    pub jacobian_scale: f64,
    pub probe_top: f64,
    pub probe_scales: usize,
    pub exponent_samples: usize,
    pub exponent_length: usize,
    pub max_period: u32,
    pub orbits_per_period: usize,
    pub thresholds: Thresholds,
    pub trace: TraceConfig,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            seed: 0,
            b3_length: 2000,
            jacobian_samples: 32,
            jacobian_scale: 1e-3,
            probe_top: 0.05,
            probe_scales: 14,
            exponent_samples: 16,
            exponent_length: 4000,
            max_period: 6,
            orbits_per_period: 24,
            thresholds: Thresholds::default(),
            trace: TraceConfig::default(),
        }
    }
}

impl DiagnosticsConfig {
    pub fn scales(&self) -> Vec<f64> {
        (0..self.probe_scales)
            .map(|m| self.probe_top * 0.5f64.powi(m as i32))
            .collect()
    }
}

/// `log[Π J_f / Π J_L]` along an orbit, in the expanding view of bundle σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B3Series {
    pub sigma: usize,
    pub start: Vec<f64>,
    /// Entry `n - 1` holds the sum over the first `n` steps.
    pub values: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Batch-means standard error of the per-step increments.
    pub slope_stderr: f64,
    pub max_abs: f64,
    /// Oscillation of the log leafwise Jacobian of `h` along the orbit.
    pub log_k: f64,
    pub bounded: bool,
}

/// Leaf Jacobian of `h` along bundle σ at `x` through the chord at `±t`
/// on the traced leaf.
fn chord_jacobian(sol: &ConjugacySolution, sigma: usize, x: &[f64], dir: &[f64], t: f64) -> f64 {
    let dual = &sol.linear.spectrum.dual[sigma];
    let plus = linalg::add(x, &linalg::scale(dir, t));
    let minus = linalg::sub(x, &linalg::scale(dir, t));
    linalg::dot(dual, &sol.difference(&minus, &plus)).abs() / (2.0 * t)
}

const CHORD_STEP: f64 = 1e-5;

pub fn b3_ratio_series(
    sol: &ConjugacySolution,
    sigma: usize,
    x: &[f64],
    n_max: usize,
    splitting: &SplittingConfig,
) -> Result<B3Series> {
    if sigma >= sol.dim() {
        return Err(Error::invalid("sigma", format!("index {sigma} out of range")));
    }
    if n_max < 2 {
        return Err(Error::invalid("b3_length", "need at least two steps"));
    }
    let (g, j) = expanding_view(&sol.f, sigma);
    let depth = splitting.max_depth;
    let pts = orbit(&g, x, depth, n_max + depth);
    let along: Vec<Vec<f64>> = pts[depth..=depth + n_max].to_vec();
    let (vectors, stretch) = line_field_on_points(&g, pts, j, depth);
    let log_lambda = g.spectrum().pairs[j].exponent;
    let increments: Vec<f64> = stretch[..n_max]
        .iter()
        .map(|s| s.ln() - log_lambda)
        .collect();
    let mut values = Vec::with_capacity(n_max);
    let mut acc = 0.0;
    for a in &increments {
        acc += a;
        values.push(acc);
    }
    let ns: Vec<f64> = (1..=n_max).map(|n| n as f64).collect();
    let fit = stats::linear_fit(&ns, &values)
        .ok_or_else(|| Error::FitUnstable("B3 series fit".into()))?;
    let (_, slope_stderr) = stats::batch_means(&increments, stats::DEFAULT_BATCHES);
    let phis: Vec<f64> = along
        .par_iter()
        .zip(&vectors)
        .map(|(p, v)| chord_jacobian(sol, sigma, p, v, CHORD_STEP).ln())
        .collect();
    let lo = phis.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = phis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_k = hi - lo;
    let max_abs = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    Ok(B3Series {
        sigma,
        start: x.to_vec(),
        values,
        slope: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        slope_stderr: if slope_stderr.is_finite() { slope_stderr } else { 0.0 },
        max_abs,
        log_k,
        bounded: max_abs <= log_k + 1e-6,
    })
}

/// Multi-scale comparison of leaf distances before and after `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeProbe {
    pub sigma: usize,
    pub point: Vec<f64>,
    pub scales: Vec<f64>,
    /// Leaf distance along the `L`-leaf between `h(x)` and `h(y_m)`.
    pub image_lengths: Vec<f64>,
    pub ratios: Vec<f64>,
    pub holder: f64,
    pub holder_r2: f64,
    /// `max |ρ_{m+1}/ρ_m - 1|` over the three finest scales.
    pub finest_change: f64,
    pub stabilized: bool,
}

pub fn leafwise_derivative_probe(
    sol: &ConjugacySolution,
    sigma: usize,
    x: &[f64],
    scales: &[f64],
    trace: &TraceConfig,
    thresholds: &Thresholds,
) -> Result<DerivativeProbe> {
    if scales.len() < 4 {
        return Err(Error::invalid("probe_scales", "need at least four scales"));
    }
    let top = scales.iter().copied().fold(0.0, f64::max);
    let cfg = TraceConfig {
        half_length: trace.half_length.max(top),
        ..*trace
    };
    let seg = trace_leaf(&sol.f, sigma, x, &cfg)?;
    if seg.s_max() < top {
        return Err(Error::TraceTooShort {
            needed: top,
            available: seg.s_max(),
        });
    }
    let dual = &sol.linear.spectrum.dual[sigma];
    let base = seg.point_at(0.0);
    let image_lengths: Vec<f64> = scales
        .iter()
        .map(|&s| linalg::dot(dual, &sol.difference(&base, &seg.point_at(s))).abs())
        .collect();
    let ratios: Vec<f64> = image_lengths
        .iter()
        .zip(scales)
        .map(|(l, s)| l / s)
        .collect();
    let lx: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let ly: Vec<f64> = image_lengths.iter().map(|l| l.ln()).collect();
    let fit = stats::linear_fit(&lx, &ly)
        .filter(|f| f.slope.is_finite())
        .ok_or_else(|| Error::FitUnstable("leafwise Hölder fit".into()))?;
    let mut order: Vec<usize> = (0..scales.len()).collect();
    order.sort_by(|&a, &b| scales[b].total_cmp(&scales[a]));
    let finest_change = order[order.len() - 4..]
        .windows(2)
        .map(|w| (ratios[w[1]] / ratios[w[0]] - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(DerivativeProbe {
        sigma,
        point: x.to_vec(),
        scales: scales.to_vec(),
        image_lengths,
        ratios,
        holder: fit.slope,
        holder_r2: fit.r2,
        finest_change,
        stabilized: finest_change <= thresholds.stabilization,
    })
}

/// Leaf Jacobian of `h` at `x` along bundle σ, measured on chords of the
/// traced leaf of half-length `t` and `t / 16`.
pub fn leaf_jacobian(
    sol: &ConjugacySolution,
    sigma: usize,
    x: &[f64],
    t: f64,
    trace: &TraceConfig,
) -> Result<(f64, f64)> {
    let cfg = TraceConfig {
        half_length: t.max(trace.step),
        ..*trace
    };
    let seg = trace_leaf(&sol.f, sigma, x, &cfg)?;
    let dual = &sol.linear.spectrum.dual[sigma];
    let chord = |s: f64| {
        linalg::dot(dual, &sol.difference(&seg.point_at(-s), &seg.point_at(s))).abs() / (2.0 * s)
    };
    Ok((chord(t), chord(t / 16.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianStats {
    pub samples: usize,
    pub min: f64,
    pub max: f64,
    /// `max log J - min log J`.
    pub log_oscillation: f64,
    /// Largest `|log J(t) - log J(t/16)|` over samples.
    pub scale_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentGap {
    pub f_exponent: f64,
    pub l_exponent: f64,
    pub gap: f64,
    pub stderr: f64,
    /// Gap seen from the expanding view (sign flipped for contracting bundles).
    pub view_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub difference: f64,
    pub combined_stderr: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoliationVerdicts {
    pub b2: Verdict,
    pub b3: Verdict,
    pub b4: Verdict,
    pub b5: Verdict,
    pub overall: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicProbe {
    pub period: u32,
    pub probe: DerivativeProbe,
    /// `log|λ_σ(L)| · p / log|μ_σ(f)|`, exact for the local conjugacy on
    /// the leaf of a periodic point.
    pub predicted_holder: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoliationDiagnostics {
    pub sigma: usize,
    pub expanding: bool,
    pub l_exponent: f64,
    pub b2: JacobianStats,
    pub b3: B3Series,
    pub b4: ExponentGap,
    pub b5: DerivativeProbe,
    pub b5_periodic: Option<PeriodicProbe>,
    pub agreement: Agreement,
    pub verdicts: FoliationVerdicts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidityDiagnostics {
    pub map: String,
    pub seed: u64,
    pub thresholds: Thresholds,
    pub b1: String,
    pub conjugacy_residual: f64,
    pub conjugacy_terms: usize,
    pub foliations: Vec<FoliationDiagnostics>,
    pub periodic: PeriodicReport,
    pub verdict: Verdict,
}

fn combine(v: &[Verdict]) -> Verdict {
    if v.iter().all(|&x| x == Verdict::Smooth) {
        Verdict::Smooth
    } else if v.iter().all(|&x| x == Verdict::Singular) {
        Verdict::Singular
    } else {
        Verdict::Inconclusive
    }
}

fn foliation_diagnostics(
    sol: &ConjugacySolution,
    sigma: usize,
    exponents: &crate::cocycle::ExponentEstimate,
    periodic: &PeriodicReport,
    cfg: &DiagnosticsConfig,
) -> Result<FoliationDiagnostics> {
    let d = sol.dim();
    let th = &cfg.thresholds;
    let l_exponent = sol.linear.spectrum.pairs[sigma].exponent;
    let expanding = sol.linear.is_expanding(sigma);
    let tolerance = th.slope * l_exponent.abs();

    let jac: Vec<(f64, f64)> = (0..cfg.jacobian_samples)
        .into_par_iter()
        .map(|i| {
            let x = stats::uniform_point(d, cfg.seed ^ 0xB2, i as u64);
            leaf_jacobian(sol, sigma, &x, cfg.jacobian_scale, &cfg.trace)
        })
        .collect::<Result<_>>()?;
    let logs: Vec<f64> = jac.iter().map(|(a, _)| a.ln()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let b2 = JacobianStats {
        samples: jac.len(),
        min: lo.exp(),
        max: hi.exp(),
        log_oscillation: hi - lo,
        scale_drift: jac
            .iter()
            .map(|(a, b)| (a.ln() - b.ln()).abs())
            .fold(0.0, f64::max),
    };

    let start = stats::uniform_point(d, cfg.seed ^ 0xB3, sigma as u64);
    let b3 = b3_ratio_series(sol, sigma, &start, cfg.b3_length, &cfg.trace.splitting)?;

    let gap = exponents.exponents[sigma] - l_exponent;
    let b4 = ExponentGap {
        f_exponent: exponents.exponents[sigma],
        l_exponent,
        gap,
        stderr: exponents.stderr[sigma],
        view_gap: if expanding { gap } else { -gap },
    };

    let probe_point = stats::uniform_point(d, cfg.seed ^ 0xB5, sigma as u64);
    let b5 = leafwise_derivative_probe(sol, sigma, &probe_point, &cfg.scales(), &cfg.trace, th)?;
    let b5_periodic = match periodic.orbits.iter().find(|o| o.period == 1) {
        Some(fixed) => Some(PeriodicProbe {
            period: fixed.period,
            probe: leafwise_derivative_probe(
                sol,
                sigma,
                &fixed.orbit[0],
                &cfg.scales(),
                &cfg.trace,
                th,
            )?,
            predicted_holder: fixed.log_multipliers_l[sigma] / fixed.log_multipliers_f[sigma],
        }),
        None => None,
    };

    let combined_stderr = b3.slope_stderr.hypot(b4.stderr);
    let difference = b3.slope - b4.view_gap;
    let agreement = Agreement {
        difference,
        combined_stderr,
        consistent: difference.abs() <= th.agreement_sigmas * combined_stderr + 1e-12,
    };

    let b2v = Verdict::from_smooth(b2.scale_drift <= (1.0 + th.stabilization).ln());
    let b3v = Verdict::from_smooth(b3.slope.abs() <= tolerance && b3.bounded);
    let b4v = Verdict::from_smooth(b4.gap.abs() <= tolerance.max(th.agreement_sigmas * b4.stderr));
    let periodic_smooth = b5_periodic
        .as_ref()
        .map_or(true, |p| p.probe.stabilized && (p.probe.holder - 1.0).abs() <= th.holder_band);
    let b5v = Verdict::from_smooth(
        b5.stabilized && (b5.holder - 1.0).abs() <= th.holder_band && periodic_smooth,
    );
    let overall = if [b3v, b4v] == [Verdict::Singular; 2] {
        Verdict::Singular
    } else {
        combine(&[b2v, b3v, b4v, b5v])
    };
    Ok(FoliationDiagnostics {
        sigma,
        expanding,
        l_exponent,
        b2,
        b3,
        b4,
        b5,
        b5_periodic,
        agreement,
        verdicts: FoliationVerdicts {
            b2: b2v,
            b3: b3v,
            b4: b4v,
            b5: b5v,
            overall,
        },
    })
}

/// B2-B5′ on every one-dimensional bundle, plus the periodic-data check.
pub fn run_diagnostics(
    sol: &ConjugacySolution,
    cfg: &DiagnosticsConfig,
) -> Result<RigidityDiagnostics> {
    sol.linear.require_simple()?;
    let exponents = volume_average_exponents(
        &sol.f,
        cfg.exponent_samples,
        cfg.exponent_length,
        cfg.seed,
    )?;
    let periodic = periodic_data(sol, cfg.max_period, cfg.orbits_per_period)?;
    let foliations = (0..sol.dim())
        .map(|sigma| foliation_diagnostics(sol, sigma, &exponents, &periodic, cfg))
        .collect::<Result<Vec<_>>>()?;
    let per_foliation: Vec<Verdict> = foliations.iter().map(|f| f.verdicts.overall).collect();
    let verdict = if periodic.max_gap > cfg.thresholds.periodic_gap {
        Verdict::Singular
    } else {
        combine(&per_foliation)
    };
    Ok(RigidityDiagnostics {
        map: sol.f.fingerprint(),
        seed: cfg.seed,
        thresholds: cfg.thresholds,
        b1: B1_STATUS.into(),
        conjugacy_residual: sol.residual,
        conjugacy_terms: sol.terms,
        foliations,
        periodic,
        verdict,
    })
}

/// Rows `(n, value)` of a B3 series.
pub fn write_b3_csv<W: Write>(out: W, series: &B3Series) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "log_ratio"]).map_err(csv_error)?;
    for (i, v) in series.values.iter().enumerate() {
        w.write_record([(i + 1).to_string(), format!("{v:.17e}")])
            .map_err(csv_error)?;
    }
    w.flush().map_err(|e| csv_error(e.into()))?;
    Ok(())
}

/// Rows `(scale, image_length, ratio)` of a multi-scale probe.
pub fn write_probe_csv<W: Write>(out: W, probe: &DerivativeProbe) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scale", "image_length", "ratio"])
        .map_err(csv_error)?;
    for ((s, l), r) in probe.scales.iter().zip(&probe.image_lengths).zip(&probe.ratios) {
        w.write_record([format!("{s:.17e}"), format!("{l:.17e}"), format!("{r:.17e}")])
            .map_err(csv_error)?;
    }
    w.flush().map_err(|e| csv_error(e.into()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{analyze_matrix, ToralAutomorphism};
    use crate::conjugacy::{solve_conjugacy, ConjugacyConfig};
    use crate::maps::{
        make_conjugated_linear, make_shear_perturbation, ShearFactor, SmoothTorusMap, TrigProfile,
    };

    fn cat() -> ToralAutomorphism {
        analyze_matrix(&"2,1;1,1".parse().unwrap()).unwrap()
    }

    fn solve(f: &SmoothTorusMap) -> ConjugacySolution {
        let cfg = ConjugacyConfig {
            test_points: 50,
            ..ConjugacyConfig::default()
        };
        solve_conjugacy(f, &cat(), &cfg).unwrap()
    }

    #[test]
    fn linear_series_vanishes() {
        let sol = solve(&SmoothTorusMap::linear(&cat()));
        let s = b3_ratio_series(&sol, 1, &[0.3, 0.4], 200, &SplittingConfig::default()).unwrap();
        assert!(s.max_abs <= 1e-12, "{}", s.max_abs);
        let cfg = DiagnosticsConfig::default();
        let p = leafwise_derivative_probe(
            &sol,
            1,
            &[0.3, 0.4],
            &cfg.scales(),
            &cfg.trace,
            &cfg.thresholds,
        )
        .unwrap();
        assert!(p.ratios.iter().all(|r| (r - 1.0).abs() <= 1e-9), "{:?}", p.ratios);
        assert!((p.holder - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn conjugated_map_is_smooth() {
        let s = ShearFactor::new(0, 1, 0.05, TrigProfile::unit_sine(1));
        let sol = solve(&make_conjugated_linear(&cat(), &[s], 1.0).unwrap());
        let cfg = DiagnosticsConfig::default();
        for sigma in 0..2 {
            let s = b3_ratio_series(&sol, sigma, &[0.3, 0.4], 2000, &cfg.trace.splitting).unwrap();
            assert!(s.bounded, "{} > {}", s.max_abs, s.log_k);
            assert!(s.slope.abs() <= 1e-3, "{}", s.slope);
            let p = leafwise_derivative_probe(
                &sol,
                sigma,
                &[0.3, 0.4],
                &cfg.scales(),
                &cfg.trace,
                &cfg.thresholds,
            )
            .unwrap();
            assert!((p.holder - 1.0).abs() <= 0.03, "{}", p.holder);
            assert!(p.stabilized);
        }
    }

    #[test]
    fn perturbed_map_diagnostics() {
        let s = ShearFactor::new(0, 1, 0.1, TrigProfile::unit_sine(1));
        let sol = solve(&make_shear_perturbation(&cat(), &[s], 1.0).unwrap());
        let cfg = DiagnosticsConfig {
            max_period: 2,
            ..DiagnosticsConfig::default()
        };
        let report = run_diagnostics(&sol, &cfg).unwrap();
        let top = &report.foliations[1];
        assert_eq!(top.verdicts.b3, Verdict::Singular);
        assert!(top.agreement.consistent);
        assert_eq!(top.verdicts.b5, Verdict::Singular);
        assert_eq!(report.verdict, Verdict::Singular);
    }
}
