use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use hyperlab::algebra::{analyze_matrix, is_irreducible, periodic_points, ToralAutomorphism};
use hyperlab::cocycle::{
    grid_splitting, lyapunov_exponents, volume_average_exponents, write_exponents_csv,
    ExponentEstimate,
};
use hyperlab::conjugacy::{
    periodic_data, run_diagnostics, solve_conjugacy, write_b3_csv, write_probe_csv,
    ConjugacySolution,
};
use hyperlab::entropy::{partial_entropy_gap, pesin_report, write_entropy_csv};
use hyperlab::foliation::{
    density_equivariance_defect, expanding_view, gibbs_density, trace_leaf, GibbsDensityProfile,
    LeafSegment,
};
use hyperlab::maps::{make_katok_family, uniform_grid, ExponentProfile, SmoothTorusMap};
use hyperlab::skew::{
    absolute_continuity_probe, center_holonomy, cocycle_defect, skew_center_leaf, solve_family,
    unique_intersection_indicator, write_histogram_csv, write_intersection_csv, SolvedFamily,
};
use hyperlab::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::report::{Block, BlockError, BlockStatus};
use crate::Command;

const SPECTRUM_PERIODS: u32 = 3;

/// Collects result blocks, verdicts and sidecar files for one experiment.
pub struct Runner<'a> {
    pub cfg: &'a ExperimentConfig,
    pub blocks: Vec<Block>,
    pub verdicts: BTreeMap<String, String>,
    pub sidecars: Vec<String>,
    pub input_error: bool,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report payloads serialize")
}

fn verdict_name<T: Serialize>(v: &T) -> String {
    match to_value(v) {
        Value::String(s) => s,
        other => other.to_string(),
    }
}

/// Quasi-random default point, so that no coordinate sits on a rational
/// periodic orbit.
fn default_point(d: usize, seed: u64) -> Vec<f64> {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    (0..d)
        .map(|i| {
            let t = 0.1234 + (i as f64 + 1.0) * phi + seed as f64 * 2f64.sqrt();
            t - t.floor()
        })
        .collect()
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Self {
        Runner {
            cfg,
            blocks: Vec::new(),
            verdicts: BTreeMap::new(),
            sidecars: Vec::new(),
            input_error: false,
        }
    }

    fn ok(&mut self, name: &str, result: Value) {
        self.blocks.push(Block {
            name: name.into(),
            status: BlockStatus::Ok,
            result: Some(result),
            error: None,
        });
    }

    fn fail(&mut self, name: &str, err: &Error) {
        self.input_error |= err.is_input_error();
        self.blocks.push(Block {
            name: name.into(),
            status: BlockStatus::Failed,
            result: None,
            error: Some(BlockError {
                kind: err.kind().into(),
                message: err.to_string(),
            }),
        });
    }

    fn skip(&mut self, name: &str, needs: &str) {
        self.blocks.push(Block {
            name: name.into(),
            status: BlockStatus::Skipped,
            result: None,
            error: Some(BlockError {
                kind: "skipped".into(),
                message: format!("requires block `{needs}`"),
            }),
        });
    }

    /// Runs `body`, recording either its payload or its error, and hands the
    /// computed value back to the caller.
    fn block<T, F>(&mut self, name: &str, body: F) -> Option<T>
    where
        T: Serialize,
        F: FnOnce() -> Result<T>,
    {
        match body() {
            Ok(v) => {
                self.ok(name, to_value(&v));
                Some(v)
            }
            Err(e) => {
                self.fail(name, &e);
                None
            }
        }
    }

    fn verdict<T: Serialize>(&mut self, name: &str, v: &T) {
        self.verdicts.insert(name.into(), verdict_name(v));
    }

    fn sidecar<F>(&mut self, file: &str, write: F)
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        let written = write(&mut buf).and_then(|_| {
            let dir: &PathBuf = &self.cfg.output;
            fs::create_dir_all(dir)
                .and_then(|_| fs::write(dir.join(file), &buf))
                .map_err(|e| Error::invalid("output", e.to_string()))
        });
        match written {
            Ok(()) => self.sidecars.push(file.into()),
            Err(e) => self.fail(&format!("sidecar:{file}"), &e),
        }
    }

    fn map(&mut self) -> Option<SmoothTorusMap> {
        let doc = self.cfg.map.as_ref()?;
        match doc.build() {
            Ok(f) => Some(f),
            Err(e) => {
                self.fail("map", &e);
                None
            }
        }
    }

    fn linear_model(&mut self) -> Option<ToralAutomorphism> {
        let doc = self.cfg.map.as_ref()?;
        match analyze_matrix(doc.matrix()) {
            Ok(l) => Some(l),
            Err(e) => {
                self.fail("linear_model", &e);
                None
            }
        }
    }

    pub fn run(&mut self, command: Command) {
        match command {
            Command::Spectrum => self.spectrum(),
            Command::Exponents => {
                if let Some(f) = self.map() {
                    self.exponents(&f);
                }
            }
            Command::Conjugacy => {
                if let Some(sol) = self.conjugacy() {
                    self.periodic(&sol);
                }
            }
            Command::Gibbs => self.gibbs(),
            Command::Entropy => self.entropy(),
            Command::Skew => self.skew(),
            Command::Katok => self.katok(),
            Command::FullRigidity => self.full_rigidity(),
        }
    }

    fn spectrum(&mut self) {
        let Some(doc) = self.cfg.map.as_ref() else {
            return;
        };
        let matrix = doc.matrix().clone();
        let l = self.block("spectrum", || {
            let l = analyze_matrix(&matrix)?;
            let counts = (1..=SPECTRUM_PERIODS)
                .map(|p| periodic_points(&matrix, p).map(|pts| pts.len()))
                .collect::<Result<Vec<_>>>()?;
            Ok(json!({
                "matrix": l.matrix,
                "exponents": l.exponents(),
                "eigenvalues": l.spectrum.pairs.iter().map(|p| p.value).collect::<Vec<_>>(),
                "stable_count": l.stable_count,
                "unstable_count": l.unstable_count,
                "simple_real_distinct": l.spectrum.simple_real_distinct,
                "irreducible": is_irreducible(&matrix)?,
                "fixed_point_counts": counts,
                "automorphism": l,
            }))
        });
        if let Some(l) = l {
            let irreducible = l["irreducible"].as_bool().unwrap_or(false);
            self.verdicts.insert(
                "irreducible".into(),
                if irreducible { "IRREDUCIBLE" } else { "REDUCIBLE" }.into(),
            );
        }
    }

    fn exponents(&mut self, f: &SmoothTorusMap) -> Option<ExponentEstimate> {
        let p = &self.cfg.exponents;
        let seed = self.cfg.seed;
        let est = self.block("exponents", || match &p.point {
            Some(x) => lyapunov_exponents(f, Some(x), p.n, seed),
            None => volume_average_exponents(f, p.samples, p.n, seed),
        })?;
        self.sidecar("exponents.csv", |buf| write_exponents_csv(buf, &est));
        Some(est)
    }

    fn conjugacy(&mut self) -> Option<ConjugacySolution> {
        let f = self.map()?;
        let l = self.linear_model()?;
        let cfg = self.cfg.conjugacy;
        match solve_conjugacy(&f, &l, &cfg) {
            Ok(sol) => {
                self.ok(
                    "conjugacy",
                    json!({
                        "terms": sol.terms,
                        "tail_bound": sol.tail_bound,
                        "residual": sol.residual,
                        "tol": cfg.tol,
                        "test_points": cfg.test_points,
                    }),
                );
                Some(sol)
            }
            Err(e) => {
                self.fail("conjugacy", &e);
                None
            }
        }
    }

    fn periodic(&mut self, sol: &ConjugacySolution) {
        let d = &self.cfg.diagnostics;
        self.block("periodic", || {
            periodic_data(sol, d.max_period, d.orbits_per_period)
        });
    }

    fn gibbs(&mut self) {
        let Some(f) = self.map() else {
            return;
        };
        let p = &self.cfg.gibbs;
        let sigma = p.sigma.unwrap_or(f.dim() - 1);
        let x = p.point.clone().unwrap_or_else(|| default_point(f.dim(), self.cfg.seed));
        let profile = self.block("gibbs", || {
            if sigma >= f.dim() {
                return Err(Error::invalid("gibbs.sigma", format!("must be below {}", f.dim())));
            }
            let (g, j) = expanding_view(&f, sigma);
            let segment = trace_leaf(&g, j, &x, &p.trace)?;
            let density = gibbs_density(&g, &segment, &p.gibbs)?;
            let equivariance_defect =
                density_equivariance_defect(&g, &segment, p.equivariance_depth, &p.gibbs.splitting)?;
            Ok(GibbsBlock {
                sigma,
                point: x.clone(),
                segment_length: segment.total_length(),
                density,
                equivariance_defect,
                segment,
            })
        });
        if let Some(b) = profile {
            let geometric = b.density.gap_ratio.is_some_and(|r| r < 1.0)
                && b.density.gap_r2.is_some_and(|r| r >= 0.99);
            self.verdicts.insert(
                "gibbs_gaps".into(),
                if geometric { "GEOMETRIC" } else { "NOT_GEOMETRIC" }.into(),
            );
            self.sidecar("gibbs_density.csv", |buf| {
                b.segment.write_csv(buf, Some(&b.density.values))
            });
        }
        if p.bundle_grid > 0 {
            let cache = self.cfg.cache_dir.clone();
            let splitting = p.gibbs.splitting;
            self.block("bundles", || {
                let (frames, from_cache) =
                    grid_splitting(&f, p.bundle_grid, &splitting, cache.as_deref())?;
                let max_residual = frames.iter().map(|fr| fr.residual()).fold(0.0, f64::max);
                let min_margin = frames.iter().map(|fr| fr.margin()).fold(f64::INFINITY, f64::min);
                Ok(json!({
                    "per_axis": p.bundle_grid,
                    "frames": frames.len(),
                    "max_residual": max_residual,
                    "min_margin": min_margin,
                    "from_cache": from_cache,
                }))
            });
        }
    }

    fn entropy(&mut self) {
        let Some(f) = self.map() else {
            return;
        };
        let p = &self.cfg.entropy;
        let sigma = p.sigma.unwrap_or(f.dim() - 1);
        let Some(report) = self.block("entropy", || {
            if sigma >= f.dim() {
                return Err(Error::invalid("entropy.sigma", format!("must be below {}", f.dim())));
            }
            pesin_report(&f, sigma, &p.measure, &p.config)
        }) else {
            return;
        };
        self.verdict("pesin", &report.verdict);
        self.sidecar("entropy.csv", |buf| write_entropy_csv(buf, &report.estimate));
    }

    fn skew(&mut self) {
        let Some(doc) = self.cfg.map.as_ref() else {
            return;
        };
        let skew = match doc.build_skew() {
            Ok(s) => s,
            Err(e) => return self.fail("map", &e),
        };
        let p = &self.cfg.skew;
        let seed = self.cfg.seed;
        self.block("skew_exponents", || {
            volume_average_exponents(skew.map(), p.exponent_samples, p.exponent_length, seed)
        });
        let x = default_point(3, seed);
        self.block("center_leaf", || skew_center_leaf(&skew, &x, p.leaf_samples));
        if let Some(gap) = self.block("partial_entropy", || partial_entropy_gap(&skew, &p.entropy)) {
            self.verdict("c_invariance", &gap.verdict);
        }
    }

    fn katok(&mut self) {
        let p = &self.cfg.katok;
        let cfg = self.cfg;
        let Some(family) = self.block("family", || {
            let l = analyze_matrix(&p.matrix)?;
            let family =
                make_katok_family(&l, &p.template, p.profile, &uniform_grid(p.members), p.threshold)?;
            let tops = family
                .members
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    volume_average_exponents(m, p.exponent_samples, p.exponent_length, cfg.seed ^ i as u64)
                        .map(|e| e.top())
                })
                .collect::<Result<Vec<f64>>>()?;
            let spread = match p.profile {
                ExponentProfile::Varying => family.require_spread(&tops, p.spread_margin)?,
                ExponentProfile::Constant => {
                    tops.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                        - tops.iter().cloned().fold(f64::INFINITY, f64::min)
                }
            };
            let solved = solve_family(&family, &cfg.conjugacy)?;
            Ok(KatokFamilyBlock {
                params: family.grid.clone(),
                profile: p.profile,
                unstable_exponents: tops,
                spread,
                conjugacy_terms: solved.solutions.iter().map(|s| s.terms).collect(),
                conjugacy_residuals: solved.solutions.iter().map(|s| s.residual).collect(),
                solved,
            })
        }) else {
            return;
        };
        let solved = &family.solved;
        let target = p.target.unwrap_or(solved.len() - 1);
        let Some(h) = self.block("holonomy", || {
            let h = center_holonomy(solved, p.source, target)?;
            Ok(HolonomyBlock {
                source: h.source,
                target: h.target,
                t1: h.t1,
                t2: h.t2,
                holonomy: h,
            })
        }) else {
            self.skip("holonomy_checks", "holonomy");
            self.skip("absolute_continuity", "holonomy");
            self.skip("unique_intersection", "family");
            return;
        };
        let h = h.holonomy;
        let points = hyperlab::cocycle::grid_points(2, (p.test_points as f64).sqrt().ceil() as usize);
        self.block("holonomy_checks", || {
            let oracle = match p.profile {
                ExponentProfile::Constant => Some(h.oracle_distance(&points)?),
                ExponentProfile::Varying => None,
            };
            let mid = (p.source + target) / 2;
            Ok(json!({
                "points": points.len(),
                "residual": h.residual(&points)?,
                "oracle_distance": oracle,
                "cocycle_defect": cocycle_defect(solved, (p.source, mid, target), &points)?,
            }))
        });
        if let Some(ac) = self.block("absolute_continuity", || {
            absolute_continuity_probe(&h, cfg.seed, &p.ac)
        }) {
            self.verdict("holonomy", &ac.verdict);
            for hist in &ac.histograms {
                let file = format!("histogram_{}.csv", hist.grid);
                self.sidecar(&file, |buf| write_histogram_csv(buf, hist));
            }
        }
        if let Some(report) = self.block("unique_intersection", || {
            unique_intersection_indicator(solved, &p.intersection)
        }) {
            self.verdicts.insert(
                "unique_intersection".into(),
                format!("{:.4}", report.separated_fraction),
            );
            self.sidecar("intersection.csv", |buf| write_intersection_csv(buf, &report));
        }
    }

    fn full_rigidity(&mut self) {
        self.spectrum();
        let Some(f) = self.map() else {
            return;
        };
        self.exponents(&f);
        let Some(sol) = self.conjugacy() else {
            self.skip("diagnostics", "conjugacy");
            return;
        };
        let cfg = self.cfg.diagnostics;
        let Some(diag) = self.block("diagnostics", || run_diagnostics(&sol, &cfg)) else {
            return;
        };
        self.verdict("rigidity", &diag.verdict);
        for fol in &diag.foliations {
            self.verdict(&format!("foliation_{}", fol.sigma), &fol.verdicts.overall);
            let s = fol.sigma;
            self.sidecar(&format!("b3_sigma{s}.csv"), |buf| write_b3_csv(buf, &fol.b3));
            self.sidecar(&format!("probe_sigma{s}.csv"), |buf| write_probe_csv(buf, &fol.b5));
        }
    }
}

#[derive(Serialize)]
struct KatokFamilyBlock {
    params: Vec<f64>,
    profile: ExponentProfile,
    unstable_exponents: Vec<f64>,
    spread: f64,
    conjugacy_terms: Vec<usize>,
    conjugacy_residuals: Vec<f64>,
    #[serde(skip)]
    solved: SolvedFamily,
}

#[derive(Serialize)]
struct HolonomyBlock {
    source: usize,
    target: usize,
    t1: f64,
    t2: f64,
    #[serde(skip)]
    holonomy: hyperlab::skew::HolonomyMap,
}

#[derive(Serialize)]
struct GibbsBlock {
    sigma: usize,
    point: Vec<f64>,
    segment_length: f64,
    density: GibbsDensityProfile,
    equivariance_defect: f64,
    #[serde(skip)]
    segment: LeafSegment,
}
