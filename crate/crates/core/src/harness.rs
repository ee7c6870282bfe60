//! Empirical size and power experiments over grids of class sizes.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::normal_quantile;
use crate::error::{NnctError, Result};
use crate::exec::{mix_seed, replicate_rng, Execution};
use crate::inference::{p_mc_many, p_rand_many, Evaluator, McConfig, Statistic};
use crate::linalg::GInverse;
use crate::moments::MomentContext;
use crate::nn::{NnDigraph, SearchMethod};
use crate::patterns::{class_names, generate_with, random_labels, rl_locations, PatternKind, PatternSpec, Rect};
use crate::points::LabeledPointSet;
use crate::stat_tests::Family;
use crate::table::Nnct;

pub const CSV_HEADER: [&str; 14] = [
    "pattern",
    "params",
    "n1",
    "n2",
    "n3",
    "test_family",
    "target",
    "alpha",
    "n_rep",
    "reject_rate",
    "verdict",
    "lower",
    "upper",
    "seed",
];

/// Stream reserved for drawing the fixed RL locations of a combination.
const LOCATION_STREAM: u64 = u64::MAX;

/// `alpha -/+ z * sqrt(alpha (1 - alpha) / n_rep)` with `z = z_{1-alpha}`.
pub fn size_thresholds(alpha: f64, n_rep: usize) -> (f64, f64) {
    thresholds_with_z(alpha, n_rep, normal_quantile(1.0 - alpha))
}

/// As [`size_thresholds`] with `z = z_{1-alpha/2}`.
pub fn size_thresholds_two_sided(alpha: f64, n_rep: usize) -> (f64, f64) {
    thresholds_with_z(alpha, n_rep, normal_quantile(1.0 - alpha / 2.0))
}

fn thresholds_with_z(alpha: f64, n_rep: usize, z: f64) -> (f64, f64) {
    let half = z * (alpha * (1.0 - alpha) / n_rep as f64).sqrt();
    (alpha - half, alpha + half)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Conservative,
    Acceptable,
    Liberal,
}

impl Verdict {
    pub fn classify(rate: f64, lower: f64, upper: f64) -> Self {
        if rate < lower {
            Verdict::Conservative
        } else if rate > upper {
            Verdict::Liberal
        } else {
            Verdict::Acceptable
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Conservative => "conservative",
            Verdict::Acceptable => "acceptable",
            Verdict::Liberal => "liberal",
        }
    }
}

/// What a test is applied to. Indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestTarget {
    Cell { row: usize, col: usize },
    Overall,
    OneVsRestCell { focus: usize },
    OneVsRestOverall { focus: usize },
}

impl fmt::Display for TestTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TestTarget::Cell { row, col } => write!(f, "cell({},{})", row + 1, col + 1),
            TestTarget::Overall => f.write_str("overall"),
            TestTarget::OneVsRestCell { focus } => write!(f, "ovr_cell({})", focus + 1),
            TestTarget::OneVsRestOverall { focus } => write!(f, "ovr_overall({})", focus + 1),
        }
    }
}

impl FromStr for TestTarget {
    type Err = NnctError;

    /// Parses the forms produced by `Display` (1-based).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || NnctError::Argument(format!("unrecognized test target {s:?}"));
        let inner = |prefix: &str| -> Option<Vec<usize>> {
            let body = s.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?;
            body.split(',').map(|t| t.trim().parse::<usize>().ok().filter(|&v| v >= 1)).collect()
        };
        if s == "overall" {
            return Ok(TestTarget::Overall);
        }
        if let Some(v) = inner("cell") {
            if let [r, c] = v[..] {
                return Ok(TestTarget::Cell { row: r - 1, col: c - 1 });
            }
        }
        if let Some(v) = inner("ovr_cell") {
            if let [k] = v[..] {
                return Ok(TestTarget::OneVsRestCell { focus: k - 1 });
            }
        }
        if let Some(v) = inner("ovr_overall") {
            if let [k] = v[..] {
                return Ok(TestTarget::OneVsRestOverall { focus: k - 1 });
            }
        }
        Err(bad())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TestSelector {
    pub family: Family,
    pub target: TestTarget,
}

impl TestSelector {
    pub fn new(family: Family, target: TestTarget) -> Self {
        TestSelector { family, target }
    }

    /// Two-sided for cell targets.
    pub fn statistic(&self) -> Statistic {
        let family = self.family;
        match self.target {
            TestTarget::Cell { row, col } => Statistic::cell(family, row, col),
            TestTarget::Overall => Statistic::overall(family),
            TestTarget::OneVsRestCell { focus } => Statistic::OneVsRestCell {
                family,
                focus,
                alternative: Default::default(),
            },
            TestTarget::OneVsRestOverall { focus } => Statistic::OneVsRestOverall { family, focus },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueRoute {
    #[default]
    Asymptotic,
    /// CSR resimulation with `n_mc` replicates per data set.
    MonteCarlo { n_mc: usize },
    /// Label randomization with `n_mc` replicates per data set.
    Randomization { n_mc: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub pattern: PatternKind,
    pub combinations: Vec<Vec<usize>>,
    pub tests: Vec<TestSelector>,
    pub alpha: f64,
    pub n_rep: usize,
    pub route: PValueRoute,
    pub seed: u64,
    /// Redraw RL locations for every replicate instead of once per combination.
    pub redraw_locations: bool,
    /// Use `z_{1-alpha/2}` for the verdict thresholds.
    pub two_sided_thresholds: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl ExperimentSpec {
    pub fn new(pattern: PatternKind, combinations: Vec<Vec<usize>>, tests: Vec<TestSelector>, n_rep: usize, seed: u64) -> Self {
        ExperimentSpec {
            pattern,
            combinations,
            tests,
            alpha: 0.05,
            n_rep,
            route: PValueRoute::Asymptotic,
            seed,
            redraw_locations: false,
            two_sided_thresholds: false,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rep == 0 {
            return Err(NnctError::Argument("n_rep must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(NnctError::Argument(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.combinations.is_empty() || self.tests.is_empty() {
            return Err(NnctError::Argument("experiment needs class-size combinations and tests".into()));
        }
        if let PValueRoute::MonteCarlo { n_mc: 0 } | PValueRoute::Randomization { n_mc: 0 } = self.route {
            return Err(NnctError::Argument("Monte Carlo route needs n_mc >= 1".into()));
        }
        for sizes in &self.combinations {
            if sizes.len() > 3 {
                return Err(NnctError::Argument("experiment output supports at most three classes".into()));
            }
            PatternSpec::new(self.pattern.clone(), sizes.clone(), self.seed).validate()?;
            for t in &self.tests {
                t.statistic().validate(sizes.len())?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub pattern: String,
    pub params: String,
    pub sizes: Vec<usize>,
    pub test: TestSelector,
    pub alpha: f64,
    pub n_rep: usize,
    pub rejections: usize,
    /// Replicates where the statistic was undefined; counted as non-rejections.
    pub n_degenerate: usize,
    pub reject_rate: f64,
    pub verdict: Verdict,
    pub lower: f64,
    pub upper: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentResult {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let csv_err = |e: csv::Error| NnctError::Numeric(format!("writing CSV: {e}"));
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            let size = |k: usize| r.sizes.get(k).map(|v| v.to_string()).unwrap_or_default();
            w.write_record([
                r.pattern.clone(),
                r.params.clone(),
                size(0),
                size(1),
                size(2),
                r.test.family.symbol().to_string(),
                r.test.target.to_string(),
                r.alpha.to_string(),
                r.n_rep.to_string(),
                r.reject_rate.to_string(),
                r.verdict.as_str().to_string(),
                r.lower.to_string(),
                r.upper.to_string(),
                r.seed.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| NnctError::Numeric(format!("writing CSV: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    }
}

/// Two-class size grid of the CSR and RL size studies.
pub fn two_class_grid() -> Vec<Vec<usize>> {
    [(10, 10), (10, 30), (10, 50), (30, 30), (30, 50), (50, 50), (50, 100), (100, 100)]
        .iter()
        .map(|&(a, b)| vec![a, b])
        .collect()
}

/// Three-class size grid of the CSR and RL size studies.
pub fn three_class_grid() -> Vec<Vec<usize>> {
    [
        (10, 10, 10),
        (10, 10, 30),
        (10, 10, 50),
        (10, 30, 30),
        (10, 30, 50),
        (30, 30, 30),
        (10, 50, 50),
        (30, 30, 50),
        (30, 50, 50),
        (50, 50, 50),
        (50, 50, 100),
        (50, 100, 100),
        (100, 100, 100),
    ]
    .iter()
    .map(|&(a, b, c)| vec![a, b, c])
    .collect()
}

fn bounding_rect(rects: &[Rect]) -> Option<Rect> {
    let first = *rects.first()?;
    Some(rects.iter().fold(first, |acc, r| Rect {
        x0: acc.x0.min(r.x0),
        y0: acc.y0.min(r.y0),
        x1: acc.x1.max(r.x1),
        y1: acc.y1.max(r.y1),
    }))
}

/// `Some(reject)` per test, `None` when the statistic was degenerate.
fn replicate_decisions(
    points: &LabeledPointSet,
    stats: &[Statistic],
    alpha: f64,
    route: PValueRoute,
    window: Option<Rect>,
    mc_seed: u64,
) -> Result<Vec<Option<bool>>> {
    let degenerate = |e: NnctError| if e.is_degenerate() { Ok(vec![None; stats.len()]) } else { Err(e) };
    match route {
        PValueRoute::Asymptotic => {
            let graph = NnDigraph::from_coords(points.coords(), SearchMethod::Auto, Execution::Sequential)?;
            let sizes: Vec<u64> = points.class_sizes().iter().map(|&k| k as u64).collect();
            let m = sizes.len();
            let table = Nnct::from_labels(points.labels(), graph.nn_index(), class_names(m))?;
            let ev = match MomentContext::from_graph(sizes, &graph)
                .and_then(|ctx| Evaluator::new(&ctx, stats, GInverse::default()))
            {
                Ok(ev) => ev,
                Err(e) => return degenerate(e),
            };
            stats
                .iter()
                .map(|s| match ev.eval(s, &table).and_then(|v| s.asymptotic_p(v, m)) {
                    Ok(p) => Ok(Some(p <= alpha)),
                    Err(e) if e.is_degenerate() => Ok(None),
                    Err(e) => Err(e),
                })
                .collect()
        }
        PValueRoute::MonteCarlo { n_mc } | PValueRoute::Randomization { n_mc } => {
            let mut cfg = McConfig::new(n_mc, mc_seed).with_execution(Execution::Sequential);
            cfg.region = window;
            let res = if matches!(route, PValueRoute::MonteCarlo { .. }) {
                p_mc_many(points, stats, &cfg)
            } else {
                p_rand_many(points, stats, &cfg)
            };
            match res {
                Ok(rs) => Ok(rs.iter().map(|r| Some(r.p_value <= alpha)).collect()),
                Err(e) => degenerate(e),
            }
        }
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let stats: Vec<Statistic> = spec.tests.iter().map(TestSelector::statistic).collect();
    let (lower, upper) = if spec.two_sided_thresholds {
        size_thresholds_two_sided(spec.alpha, spec.n_rep)
    } else {
        size_thresholds(spec.alpha, spec.n_rep)
    };
    let mut rows = Vec::with_capacity(spec.combinations.len() * spec.tests.len());
    for (c, sizes) in spec.combinations.iter().enumerate() {
        let combo_seed = mix_seed(spec.seed, c as u64);
        let m = sizes.len();
        let window = spec.pattern.supports(m).as_deref().and_then(bounding_rect);
        let fixed = match (&spec.pattern, spec.redraw_locations) {
            (PatternKind::RlFixed { supports }, false) => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(combo_seed, LOCATION_STREAM));
                Some(rl_locations(supports, sizes, &mut rng))
            }
            _ => None,
        };
        let decisions = spec.execution.map_indexed(spec.n_rep, |k| {
            let mut rng = replicate_rng(combo_seed, k as u64);
            let points = match &fixed {
                Some(coords) => {
                    LabeledPointSet::new(coords.clone(), random_labels(sizes, &mut rng), class_names(m))?
                }
                None => generate_with(&spec.pattern, sizes, &mut rng)?,
            };
            replicate_decisions(&points, &stats, spec.alpha, spec.route, window, mix_seed(combo_seed, !(k as u64)))
        });
        let decisions = decisions.into_iter().collect::<Result<Vec<_>>>()?;
        for (t, test) in spec.tests.iter().enumerate() {
            let rejections = decisions.iter().filter(|d| d[t] == Some(true)).count();
            let n_degenerate = decisions.iter().filter(|d| d[t].is_none()).count();
            let reject_rate = rejections as f64 / spec.n_rep as f64;
            rows.push(ExperimentRow {
                pattern: spec.pattern.name().to_string(),
                params: spec.pattern.params(),
                sizes: sizes.clone(),
                test: *test,
                alpha: spec.alpha,
                n_rep: spec.n_rep,
                rejections,
                n_degenerate,
                reject_rate,
                verdict: Verdict::classify(reject_rate, lower, upper),
                lower,
                upper,
                seed: spec.seed,
            });
        }
    }
    Ok(ExperimentResult { rows })
}
