//! Monte Carlo p-values by label randomization (`p_rand`) and by CSR
//! resimulation in a rectangle (`p_mc`).
//!
//! Both use `p = (1 + r) / (1 + v)` where `v` counts replicates on which the
//! statistic was computable and `r` those at least as extreme as observed.
//! Replicate `k` draws from its own ChaCha stream, so results do not depend on
//! scheduling.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::distributions::chisq_sf;
use crate::error::{NnctError, Result};
use crate::exec::{replicate_rng, Execution};
use crate::linalg::GInverse;
use crate::moments::{FamilyMoments, MomentContext, MomentSet};
use crate::nn::{NnDigraph, SearchMethod};
use crate::patterns::Rect;
use crate::points::LabeledPointSet;
use crate::stat_tests::{cell_z, overall_statistic, Alternative, Family};
use crate::table::{collapse_one_vs_rest, Nnct};

/// Relative slack when comparing replicate statistics against the observed one.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_rep: usize,
    pub seed: u64,
    /// Resimulation window for `p_mc`; defaults to the bounding box of the data.
    pub region: Option<Rect>,
    #[serde(skip)]
    pub execution: Execution,
    #[serde(skip)]
    pub ginverse: GInverse,
}

impl McConfig {
    pub fn new(n_rep: usize, seed: u64) -> Self {
        McConfig {
            n_rep,
            seed,
            region: None,
            execution: Execution::default(),
            ginverse: GInverse::default(),
        }
    }

    pub fn with_region(mut self, region: Rect) -> Self {
        self.region = Some(region);
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_rep == 0 {
            return Err(NnctError::Argument("n_rep must be at least 1".into()));
        }
        Ok(())
    }
}

/// Scalar statistics that Monte Carlo p-values can be computed for. Cell
/// indices and focus classes are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "statistic")]
pub enum Statistic {
    Cell {
        family: Family,
        row: usize,
        col: usize,
        alternative: Alternative,
    },
    Overall { family: Family },
    /// Cell (2,2) of the focus-versus-rest 2x2 table.
    OneVsRestCell {
        family: Family,
        focus: usize,
        alternative: Alternative,
    },
    OneVsRestOverall { family: Family, focus: usize },
    /// Raw count `N_ij`, right tail.
    RawCount { row: usize, col: usize },
}

impl Statistic {
    pub fn cell(family: Family, row: usize, col: usize) -> Self {
        Statistic::Cell {
            family,
            row,
            col,
            alternative: Alternative::TwoSided,
        }
    }

    pub fn overall(family: Family) -> Self {
        Statistic::Overall { family }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        let bad = |what: String| Err(NnctError::Argument(what));
        match *self {
            Statistic::Cell { row, col, .. } | Statistic::RawCount { row, col } if row >= m || col >= m => {
                bad(format!("cell ({}, {}) outside {m}x{m} table", row + 1, col + 1))
            }
            Statistic::OneVsRestCell { focus, .. } | Statistic::OneVsRestOverall { focus, .. } if focus >= m => {
                bad(format!("focus class {} outside 1..={m}", focus + 1))
            }
            Statistic::OneVsRestCell { .. } | Statistic::OneVsRestOverall { .. } | Statistic::Overall { .. }
                if m < 2 =>
            {
                bad("statistic needs at least two classes".into())
            }
            _ => Ok(()),
        }
    }

    /// Whether a replicate value `t` is at least as extreme as `obs`.
    pub fn at_least_as_extreme(&self, t: f64, obs: f64) -> bool {
        let eps = TIE_EPS * obs.abs().max(1.0);
        match *self {
            Statistic::Cell { alternative, .. } | Statistic::OneVsRestCell { alternative, .. } => match alternative {
                Alternative::TwoSided => t.abs() >= obs.abs() - eps,
                Alternative::Greater => t >= obs - eps,
                Alternative::Less => t <= obs + eps,
            },
            _ => t >= obs - eps,
        }
    }

    /// Asymptotic p-value of a computed value in an `m`-class table.
    pub fn asymptotic_p(&self, value: f64, m: usize) -> Result<f64> {
        match *self {
            Statistic::Cell { alternative, .. } | Statistic::OneVsRestCell { alternative, .. } => {
                Ok(alternative.p_value(value))
            }
            Statistic::Overall { family } => chisq_sf(value, family.df(m) as u32),
            Statistic::OneVsRestOverall { family, .. } => chisq_sf(value, family.df(2) as u32),
            Statistic::RawCount { .. } => Err(NnctError::Argument("raw counts have no asymptotic reference".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub statistic: Statistic,
    pub observed: f64,
    pub p_value: f64,
    /// Replicate values in replicate order, degenerate replicates omitted.
    pub samples: Vec<f64>,
    pub n_degenerate: usize,
}

/// Family moments needed to evaluate a fixed set of statistics on tables
/// sharing one `(sizes, Q, R)` context.
pub(crate) struct Evaluator {
    ginverse: GInverse,
    full: Vec<(Family, FamilyMoments)>,
    one_vs_rest: Vec<(Family, usize, FamilyMoments)>,
}

impl Evaluator {
    pub(crate) fn new(ctx: &MomentContext, stats: &[Statistic], ginverse: GInverse) -> Result<Self> {
        let mut full_families: Vec<Family> = Vec::new();
        let mut ovr: Vec<(Family, usize)> = Vec::new();
        for s in stats {
            match *s {
                Statistic::Cell { family, .. } | Statistic::Overall { family } => full_families.push(family),
                Statistic::OneVsRestCell { family, focus, .. } | Statistic::OneVsRestOverall { family, focus } => {
                    ovr.push((family, focus))
                }
                Statistic::RawCount { .. } => {}
            }
        }
        full_families.sort();
        full_families.dedup();
        ovr.sort();
        ovr.dedup();

        let full = if full_families.is_empty() {
            Vec::new()
        } else {
            let ms = MomentSet::new(ctx)?;
            full_families
                .into_iter()
                .map(|f| Ok((f, ms.family(f)?)))
                .collect::<Result<_>>()?
        };
        let mut one_vs_rest = Vec::with_capacity(ovr.len());
        let mut focus_sets: Vec<(usize, MomentSet)> = Vec::new();
        for (f, focus) in ovr {
            if !focus_sets.iter().any(|(k, _)| *k == focus) {
                focus_sets.push((focus, MomentSet::new(&ctx.one_vs_rest(focus)?)?));
            }
            let ms = &focus_sets.iter().find(|(k, _)| *k == focus).expect("inserted above").1;
            one_vs_rest.push((f, focus, ms.family(f)?));
        }
        Ok(Evaluator {
            ginverse,
            full,
            one_vs_rest,
        })
    }

    fn full(&self, family: Family) -> &FamilyMoments {
        &self.full.iter().find(|(f, _)| *f == family).expect("family prepared").1
    }

    fn one_vs_rest(&self, family: Family, focus: usize) -> &FamilyMoments {
        &self
            .one_vs_rest
            .iter()
            .find(|(f, k, _)| *f == family && *k == focus)
            .expect("one-vs-rest family prepared")
            .2
    }

    pub(crate) fn eval(&self, stat: &Statistic, nnct: &Nnct) -> Result<f64> {
        match *stat {
            Statistic::Cell { family, row, col, .. } => cell_z(self.full(family), nnct, row, col),
            Statistic::Overall { family } => Ok(overall_statistic(self.full(family), nnct, self.ginverse)?.0),
            Statistic::OneVsRestCell { family, focus, .. } => {
                cell_z(self.one_vs_rest(family, focus), &collapse_one_vs_rest(nnct, focus)?, 1, 1)
            }
            Statistic::OneVsRestOverall { family, focus } => Ok(overall_statistic(
                self.one_vs_rest(family, focus),
                &collapse_one_vs_rest(nnct, focus)?,
                self.ginverse,
            )?
            .0),
            Statistic::RawCount { row, col } => Ok(nnct.count(row, col) as f64),
        }
    }
}

fn sizes_u64(points: &LabeledPointSet) -> Vec<u64> {
    points.class_sizes().iter().map(|&k| k as u64).collect()
}

/// Evaluates every statistic on one table; degenerate failures become `None`.
fn eval_all(ev: &Evaluator, stats: &[Statistic], nnct: &Nnct) -> Result<Vec<Option<f64>>> {
    stats
        .iter()
        .map(|s| match ev.eval(s, nnct) {
            Ok(v) => Ok(Some(v)),
            Err(e) if e.is_degenerate() => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

fn observed(points: &LabeledPointSet, graph: &NnDigraph, stats: &[Statistic], ginverse: GInverse) -> Result<(Nnct, Vec<f64>)> {
    for s in stats {
        s.validate(points.num_classes())?;
    }
    let nnct = Nnct::build(points, graph)?;
    let ctx = MomentContext::from_graph(sizes_u64(points), graph)?;
    let ev = Evaluator::new(&ctx, stats, ginverse)?;
    let obs = stats.iter().map(|s| ev.eval(s, &nnct)).collect::<Result<Vec<_>>>()?;
    Ok((nnct, obs))
}

fn summarize(stats: &[Statistic], obs: &[f64], reps: Vec<Result<Vec<Option<f64>>>>) -> Result<Vec<McResult>> {
    let reps = reps.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(stats
        .iter()
        .zip(obs)
        .enumerate()
        .map(|(k, (stat, &o))| {
            let samples: Vec<f64> = reps.iter().filter_map(|r| r[k]).collect();
            let extreme = samples.iter().filter(|&&t| stat.at_least_as_extreme(t, o)).count();
            McResult {
                statistic: *stat,
                observed: o,
                p_value: (1 + extreme) as f64 / (1 + samples.len()) as f64,
                n_degenerate: reps.len() - samples.len(),
                samples,
            }
        })
        .collect())
}

/// Randomization p-value: labels permuted over the fixed locations.
pub fn p_rand(points: &LabeledPointSet, stat: Statistic, config: &McConfig) -> Result<McResult> {
    Ok(p_rand_many(points, &[stat], config)?.remove(0))
}

/// Randomization p-values for several statistics on shared replicates.
pub fn p_rand_many(points: &LabeledPointSet, stats: &[Statistic], config: &McConfig) -> Result<Vec<McResult>> {
    config.validate()?;
    let graph = NnDigraph::build_with(points, SearchMethod::Auto, config.execution)?;
    let (nnct, obs) = observed(points, &graph, stats, config.ginverse)?;
    // Q and R do not change under relabeling, so moments are shared.
    let ctx = MomentContext::from_graph(sizes_u64(points), &graph)?;
    let ev = Evaluator::new(&ctx, stats, config.ginverse)?;
    let names = nnct.class_names().to_vec();
    let reps = config.execution.map_indexed(config.n_rep, |k| {
        let mut rng = replicate_rng(config.seed, k as u64);
        let mut labels = points.labels().to_vec();
        labels.shuffle(&mut rng);
        let table = Nnct::from_labels(&labels, graph.nn_index(), names.clone())?;
        eval_all(&ev, stats, &table)
    });
    summarize(stats, &obs, reps)
}

/// CSR resimulation p-value: all points redrawn uniformly on the region with
/// the observed class sizes; `Q` and `R` are recomputed per replicate.
pub fn p_mc(points: &LabeledPointSet, stat: Statistic, config: &McConfig) -> Result<McResult> {
    Ok(p_mc_many(points, &[stat], config)?.remove(0))
}

pub fn p_mc_many(points: &LabeledPointSet, stats: &[Statistic], config: &McConfig) -> Result<Vec<McResult>> {
    config.validate()?;
    let region = match config.region {
        Some(r) => r,
        None => {
            let (x0, y0, x1, y1) = points.bounding_box();
            Rect { x0, y0, x1, y1 }
        }
    };
    region
        .validate()
        .map_err(|_| NnctError::Argument(format!("resimulation region {region:?} has zero area")))?;
    let graph = NnDigraph::build_with(points, SearchMethod::Auto, config.execution)?;
    let (nnct, obs) = observed(points, &graph, stats, config.ginverse)?;
    let names = nnct.class_names().to_vec();
    let sizes = sizes_u64(points);
    let reps = config.execution.map_indexed(config.n_rep, |k| {
        let mut rng = replicate_rng(config.seed, k as u64);
        let coords: Vec<[f64; 2]> = (0..points.len()).map(|_| region.sample(&mut rng)).collect();
        let g = NnDigraph::from_coords(&coords, SearchMethod::Auto, Execution::Sequential)?;
        let table = Nnct::from_labels(points.labels(), g.nn_index(), names.clone())?;
        let ev = match MomentContext::from_graph(sizes.clone(), &g).and_then(|ctx| Evaluator::new(&ctx, stats, config.ginverse)) {
            Ok(ev) => ev,
            Err(e) if e.is_degenerate() => return Ok(vec![None; stats.len()]),
            Err(e) => return Err(e),
        };
        eval_all(&ev, stats, &table)
    });
    summarize(stats, &obs, reps)
}
