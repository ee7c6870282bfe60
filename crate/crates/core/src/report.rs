//! Full analysis of one labeled point set, serializable to JSON and
//! renderable as plain-text tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::inference::{p_mc_many, p_rand_many, McConfig, Statistic};
use crate::moments::{FamilyMoments, MomentContext, MomentSet};
use crate::nn::{nn_distances, NnDigraph};
use crate::points::LabeledPointSet;
use crate::stat_tests::{cell_z, overall_test_with, Alternative, CellTest, Family};
use crate::table::{classify_patterns, collapse_one_vs_rest, Nnct, SegregationProfile};

pub const SCHEMA_VERSION: u32 = 1;

/// Null model used for Monte Carlo p-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullModel {
    /// CSR resimulation (`p_mc`).
    Csr,
    /// Label randomization (`p_rand`).
    Rl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    pub families: Vec<Family>,
    pub alpha: f64,
    pub monte_carlo: Option<(NullModel, McConfig)>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            families: vec![Family::Dixon, Family::TypeI, Family::TypeIII],
            alpha: 0.05,
            monte_carlo: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub n: usize,
    pub m: usize,
    pub class_names: Vec<String>,
    pub class_sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnSummary {
    pub mean_distance: f64,
    pub sd_distance: f64,
    #[serde(rename = "Q")]
    pub q: u64,
    #[serde(rename = "R")]
    pub r: u64,
    /// `Q_k` for `k = 0, 1, ...`.
    #[serde(rename = "Q_k")]
    pub q_k: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub counts: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub pi_hat: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McSettings {
    pub null: NullModel,
    pub n_rep: usize,
    pub seed: u64,
}

/// Cell-specific tests of one family. `None` marks a degenerate cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellBlock {
    pub z: Vec<Vec<Option<f64>>>,
    /// Two-sided asymptotic p-values.
    pub p_asy: Vec<Vec<Option<f64>>>,
    pub p_left: Vec<Vec<Option<f64>>>,
    pub p_right: Vec<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_mc: Option<Vec<Vec<Option<f64>>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallBlock {
    #[serde(rename = "X")]
    pub statistic: f64,
    pub df: usize,
    pub p_asy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_mc: Option<f64>,
    pub rank: usize,
    /// `p_asy <= alpha`.
    pub overall_significant: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneVsRestCell {
    pub z: f64,
    pub p_asy: f64,
    pub p_left: f64,
    pub p_right: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_mc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneVsRestBlock {
    pub focus: String,
    pub counts: Vec<Vec<u64>>,
    /// Keyed `Z_<family>`; cell (2,2) of the collapsed table.
    pub cell_tests: BTreeMap<String, OneVsRestCell>,
    /// Keyed `X_<family>`.
    pub overall_tests: BTreeMap<String, OverallBlock>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub errors: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub input: InputSummary,
    pub nn: NnSummary,
    pub nnct: TableSummary,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<McSettings>,
    /// Keyed `Z_<family>`.
    pub cell_tests: BTreeMap<String, CellBlock>,
    /// Keyed `X_<family>`.
    pub overall_tests: BTreeMap<String, OverallBlock>,
    pub one_vs_rest: Vec<OneVsRestBlock>,
    pub profile: SegregationProfile,
    /// Degenerate or failed computations, keyed by the affected symbol.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub errors: BTreeMap<String, String>,
}

/// Keys such as `X_III` in family order rather than string order.
fn sorted<V>(map: &BTreeMap<String, V>) -> Vec<&String> {
    let order = |k: &str| -> Family { k.split('_').nth(1).and_then(|s| s.parse().ok()).unwrap_or(Family::Dixon) };
    let mut keys: Vec<&String> = map.keys().collect();
    keys.sort_by_key(|k| order(k));
    keys
}

fn z_key(f: Family) -> String {
    format!("Z_{}", f.symbol())
}

fn x_key(f: Family) -> String {
    format!("X_{}", f.symbol())
}

fn overall_block(fm: &FamilyMoments, table: &Nnct, alpha: f64) -> Result<OverallBlock> {
    let r = overall_test_with(fm, table, Default::default())?;
    Ok(OverallBlock {
        statistic: r.statistic,
        df: r.df,
        p_asy: r.p_asy,
        p_mc: None,
        rank: r.rank,
        overall_significant: r.p_asy <= alpha,
        warning: r.warning,
    })
}

impl AnalysisReport {
    pub fn analyze(points: &LabeledPointSet, opts: &AnalysisOptions) -> Result<Self> {
        let graph = NnDigraph::build(points)?;
        let table = Nnct::build(points, &graph)?;
        let dist = nn_distances(points, &graph)?;
        let m = table.num_classes();
        let sizes: Vec<u64> = table.row_sums().to_vec();
        let ctx = MomentContext::from_graph(sizes, &graph)?;
        let moments = MomentSet::new(&ctx)?;

        let mut errors = BTreeMap::new();
        let mut cell_tests = BTreeMap::new();
        let mut overall_tests = BTreeMap::new();
        // Statistics that computed on the observed data; candidates for Monte Carlo.
        let mut mc_stats: Vec<(Statistic, String)> = Vec::new();

        let mut families = opts.families.clone();
        families.sort();
        families.dedup();

        for &f in &families {
            match moments.family(f) {
                Ok(fm) => {
                    let mut block = CellBlock {
                        z: vec![vec![None; m]; m],
                        p_asy: vec![vec![None; m]; m],
                        p_left: vec![vec![None; m]; m],
                        p_right: vec![vec![None; m]; m],
                        p_mc: None,
                    };
                    for i in 0..m {
                        for j in 0..m {
                            match cell_z(&fm, &table, i, j) {
                                Ok(z) => {
                                    let c = CellTest::from_z(z);
                                    block.z[i][j] = Some(c.z);
                                    block.p_asy[i][j] = Some(c.p_two);
                                    block.p_left[i][j] = Some(c.p_left);
                                    block.p_right[i][j] = Some(c.p_right);
                                    mc_stats.push((Statistic::cell(f, i, j), z_key(f)));
                                }
                                Err(e) => {
                                    errors.insert(format!("{}({},{})", z_key(f), i + 1, j + 1), e.to_string());
                                }
                            }
                        }
                    }
                    cell_tests.insert(z_key(f), block);
                    if m >= 2 {
                        match overall_block(&fm, &table, opts.alpha) {
                            Ok(b) => {
                                overall_tests.insert(x_key(f), b);
                                mc_stats.push((Statistic::overall(f), x_key(f)));
                            }
                            Err(e) => {
                                errors.insert(x_key(f), e.to_string());
                            }
                        }
                    }
                }
                Err(e) => {
                    errors.insert(z_key(f), e.to_string());
                    errors.insert(x_key(f), e.to_string());
                }
            }
        }

        let mut one_vs_rest = Vec::new();
        if m >= 3 {
            for focus in 0..m {
                let collapsed = collapse_one_vs_rest(&table, focus)?;
                let mut block = OneVsRestBlock {
                    focus: table.class_names()[focus].clone(),
                    counts: collapsed.counts().to_vec(),
                    cell_tests: BTreeMap::new(),
                    overall_tests: BTreeMap::new(),
                    errors: BTreeMap::new(),
                };
                let ms = ctx.one_vs_rest(focus).and_then(|c| MomentSet::new(&c)).map_err(|e| e.to_string());
                for &f in &families {
                    let fm = match &ms {
                        Ok(ms) => ms.family(f).map_err(|e| e.to_string()),
                        Err(e) => Err(e.clone()),
                    };
                    let fm = match fm {
                        Ok(fm) => fm,
                        Err(e) => {
                            block.errors.insert(z_key(f), e.clone());
                            block.errors.insert(x_key(f), e);
                            continue;
                        }
                    };
                    match cell_z(&fm, &collapsed, 1, 1) {
                        Ok(z) => {
                            let c = CellTest::from_z(z);
                            block.cell_tests.insert(
                                z_key(f),
                                OneVsRestCell {
                                    z,
                                    p_asy: c.p_two,
                                    p_left: c.p_left,
                                    p_right: c.p_right,
                                    p_mc: None,
                                },
                            );
                            let s = Statistic::OneVsRestCell {
                                family: f,
                                focus,
                                alternative: Alternative::TwoSided,
                            };
                            mc_stats.push((s, z_key(f)));
                        }
                        Err(e) => {
                            block.errors.insert(z_key(f), e.to_string());
                        }
                    }
                    match overall_block(&fm, &collapsed, opts.alpha) {
                        Ok(b) => {
                            block.overall_tests.insert(x_key(f), b);
                            mc_stats.push((Statistic::OneVsRestOverall { family: f, focus }, x_key(f)));
                        }
                        Err(e) => {
                            block.errors.insert(x_key(f), e.to_string());
                        }
                    }
                }
                one_vs_rest.push(block);
            }
        }

        let mut monte_carlo = None;
        if let Some((null, cfg)) = &opts.monte_carlo {
            let stats: Vec<Statistic> = mc_stats.iter().map(|(s, _)| *s).collect();
            let results = if stats.is_empty() {
                Vec::new()
            } else {
                match null {
                    NullModel::Csr => p_mc_many(points, &stats, cfg)?,
                    NullModel::Rl => p_rand_many(points, &stats, cfg)?,
                }
            };
            for ((stat, key), res) in mc_stats.iter().zip(&results) {
                let p = res.p_value;
                match *stat {
                    Statistic::Cell { row, col, .. } => {
                        let block = cell_tests.get_mut(key).expect("cell block present");
                        block.p_mc.get_or_insert_with(|| vec![vec![None; m]; m])[row][col] = Some(p);
                    }
                    Statistic::Overall { .. } => {
                        overall_tests.get_mut(key).expect("overall block present").p_mc = Some(p);
                    }
                    Statistic::OneVsRestCell { focus, .. } => {
                        one_vs_rest[focus].cell_tests.get_mut(key).expect("cell present").p_mc = Some(p);
                    }
                    Statistic::OneVsRestOverall { focus, .. } => {
                        one_vs_rest[focus].overall_tests.get_mut(key).expect("overall present").p_mc = Some(p);
                    }
                    Statistic::RawCount { .. } => {}
                }
            }
            monte_carlo = Some(McSettings {
                null: *null,
                n_rep: cfg.n_rep,
                seed: cfg.seed,
            });
        }

        Ok(AnalysisReport {
            schema_version: SCHEMA_VERSION,
            input: InputSummary {
                n: points.len(),
                m,
                class_names: points.class_names().to_vec(),
                class_sizes: points.class_sizes().to_vec(),
                units: points.units.clone(),
            },
            nn: NnSummary {
                mean_distance: dist.mean,
                sd_distance: dist.sd,
                q: graph.q(),
                r: graph.r(),
                q_k: graph.q_k().to_vec(),
            },
            nnct: TableSummary {
                counts: table.counts().to_vec(),
                row_sums: table.row_sums().to_vec(),
                col_sums: table.col_sums().to_vec(),
                pi_hat: table.pi_hat(),
            },
            alpha: opts.alpha,
            monte_carlo,
            cell_tests,
            overall_tests,
            one_vs_rest,
            profile: classify_patterns(&table, false),
            errors,
        })
    }

    /// Plain-text rendering of every statistic in the report.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let names = &self.input.class_names;
        let width = names.iter().map(|s| s.len()).max().unwrap_or(0).max(8);
        let mc_label = match self.monte_carlo.map(|s| s.null) {
            Some(NullModel::Csr) => "p_mc",
            Some(NullModel::Rl) => "p_rand",
            None => "",
        };
        let fmt_opt = |v: Option<f64>, prec: usize| match v {
            Some(x) => format!("{x:.prec$}"),
            None => "-".to_string(),
        };
        let fmt_p = |p: f64| {
            if p < 1e-4 {
                "<.0001".to_string()
            } else {
                format!("{p:.4}")
            }
        };
        let fmt_p_opt = |p: Option<f64>| p.map(fmt_p).unwrap_or_else(|| "-".into());

        let _ = writeln!(out, "n = {}, classes = {}", self.input.n, self.input.m);
        for (name, size) in names.iter().zip(&self.input.class_sizes) {
            let _ = writeln!(out, "  {name:>width$}: {size}");
        }
        let _ = writeln!(
            out,
            "NN distance mean = {:.6}, sd = {:.6}; Q = {}, R = {}",
            self.nn.mean_distance, self.nn.sd_distance, self.nn.q, self.nn.r
        );
        let _ = writeln!(out, "Q_k = {:?}", self.nn.q_k);

        let _ = writeln!(out, "\nNNCT (base rows, NN columns)");
        let cw = self
            .nnct
            .counts
            .iter()
            .flatten()
            .map(|c| c.to_string().len() + 7)
            .chain(names.iter().map(String::len))
            .chain(self.nnct.row_sums.iter().map(|c| c.to_string().len()))
            .max()
            .unwrap_or(0);
        let _ = write!(out, "{:>width$}", "");
        for name in names {
            let _ = write!(out, " {name:>cw$}");
        }
        let _ = writeln!(out, " {:>cw$}", "sum");
        for (i, row) in self.nnct.counts.iter().enumerate() {
            let _ = write!(out, "{:>width$}", names[i]);
            for (j, c) in row.iter().enumerate() {
                let _ = write!(out, " {:>cw$}", format!("{c} ({:.2})", self.nnct.pi_hat[i][j]));
            }
            let _ = writeln!(out, " {:>cw$}", self.nnct.row_sums[i]);
        }
        let _ = write!(out, "{:>width$}", "sum");
        for c in &self.nnct.col_sums {
            let _ = write!(out, " {c:>cw$}");
        }
        let _ = writeln!(out, " {:>cw$}", self.nnct.row_sums.iter().sum::<u64>());

        let _ = writeln!(out, "\nOverall tests (alpha = {})", self.alpha);
        for key in sorted(&self.overall_tests) {
            let b = &self.overall_tests[key];
            let _ = write!(out, "  {key:<6} = {:>9.4}  df = {}  p_asy = {}", b.statistic, b.df, fmt_p(b.p_asy));
            if let Some(p) = b.p_mc {
                let _ = write!(out, "  {mc_label} = {}", fmt_p(p));
            }
            let _ = write!(out, "  rank = {}  significant = {}", b.rank, b.overall_significant);
            if let Some(w) = &b.warning {
                let _ = write!(out, "  [{w}]");
            }
            let _ = writeln!(out);
        }

        for key in sorted(&self.cell_tests) {
            let b = &self.cell_tests[key];
            let _ = writeln!(out, "\nCell-specific tests {key}: z (p_asy two-sided, left, right{})", if b.p_mc.is_some() { format!(", {mc_label}") } else { String::new() });
            for (i, row) in b.z.iter().enumerate() {
                let _ = write!(out, "{:>width$}", names[i]);
                for (j, z) in row.iter().enumerate() {
                    let mut cell = format!(
                        "{} ({}, {}, {}",
                        fmt_opt(*z, 4),
                        fmt_p_opt(b.p_asy[i][j]),
                        fmt_p_opt(b.p_left[i][j]),
                        fmt_p_opt(b.p_right[i][j])
                    );
                    if let Some(pm) = &b.p_mc {
                        let _ = write!(cell, ", {}", fmt_p_opt(pm[i][j]));
                    }
                    cell.push(')');
                    let _ = write!(out, "  {cell}");
                }
                let _ = writeln!(out);
            }
        }

        if !self.one_vs_rest.is_empty() {
            let _ = writeln!(out, "\nOne-vs-rest tests (cell (2,2) and collapsed overall)");
            for b in &self.one_vs_rest {
                let _ = writeln!(out, "  {} vs rest: {:?}", b.focus, b.counts);
                for key in sorted(&b.cell_tests) {
                    let c = &b.cell_tests[key];
                    let _ = write!(
                        out,
                        "    {key:<6} = {:>9.4}  p_asy = {}  p_left = {}  p_right = {}",
                        c.z,
                        fmt_p(c.p_asy),
                        fmt_p(c.p_left),
                        fmt_p(c.p_right)
                    );
                    if let Some(p) = c.p_mc {
                        let _ = write!(out, "  {mc_label} = {}", fmt_p(p));
                    }
                    let _ = writeln!(out);
                }
                for key in sorted(&b.overall_tests) {
                    let o = &b.overall_tests[key];
                    let _ = write!(out, "    {key:<6} = {:>9.4}  df = {}  p_asy = {}", o.statistic, o.df, fmt_p(o.p_asy));
                    if let Some(p) = o.p_mc {
                        let _ = write!(out, "  {mc_label} = {}", fmt_p(p));
                    }
                    let _ = writeln!(out);
                }
                for (k, e) in &b.errors {
                    let _ = writeln!(out, "    {k}: {e}");
                }
            }
        }

        let _ = writeln!(out, "\nSegregation profile (pi_hat = N_ij / n)");
        for c in &self.profile.classes {
            let _ = writeln!(out, "  {}: {:?} segregation", names[c.class], c.level);
        }
        for p in &self.profile.pairs {
            if p.level != crate::table::AssociationLevel::None {
                let _ = writeln!(out, "  {} associated with {} base: {:?}", names[p.nn_class], names[p.base], p.level);
            }
        }

        if !self.errors.is_empty() {
            let _ = writeln!(out, "\nNot computed");
            for (k, e) in &self.errors {
                let _ = writeln!(out, "  {k}: {e}");
            }
        }
        out
    }
}
