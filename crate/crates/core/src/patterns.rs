//! Synthetic labeled patterns: CSR, random labeling of fixed locations, and
//! the segregation and association alternatives used in power studies.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnctError, Result};
use crate::points::LabeledPointSet;

/// Axis-aligned rectangle `(x0, x1) x (y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let r = Rect { x0, y0, x1, y1 };
        r.validate()?;
        Ok(r)
    }

    pub const fn unit() -> Self {
        Rect { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 }
    }

    /// Square `(lo, hi)^2`.
    pub fn square(lo: f64, hi: f64) -> Result<Self> {
        Rect::new(lo, lo, hi, hi)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite());
        if !finite || !(self.x1 > self.x0) || !(self.y1 > self.y0) {
            return Err(NnctError::Argument(format!(
                "rectangle ({}, {}) x ({}, {}) must have positive area",
                self.x0, self.x1, self.y0, self.y1
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        [
            self.x0 + self.width() * rng.random::<f64>(),
            self.y0 + self.height() * rng.random::<f64>(),
        ]
    }
}

/// Offspring displacement radius for association patterns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusRule {
    Fixed(f64),
    /// `r = 1 / (d * sqrt(n_t))` with `n_t` the total number of points.
    PerSqrtTotal(f64),
}

impl RadiusRule {
    pub fn radius(self, n_total: usize) -> f64 {
        match self {
            RadiusRule::Fixed(r) => r,
            RadiusRule::PerSqrtTotal(d) => 1.0 / (d * (n_total as f64).sqrt()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PatternKind {
    Csr,
    /// Class `i` locations uniform on `supports[i]`, then labels permuted.
    RlFixed { supports: Vec<Rect> },
    /// Class 1 on `(0, 1-s)^2`, class 2 on `(s, 1)^2`.
    Segregation2 { shift: f64 },
    /// Classes on `(0, 1-2s)^2`, `(2s, 1)^2` and `(s, 1-s)^2`.
    Segregation3 { shift: f64 },
    /// Class 2 offspring around uniform class-1 parents.
    Association2 { radius: RadiusRule },
    /// Classes 2 and 3 offspring around uniform class-1 parents.
    Association3 { ry: RadiusRule, rz: RadiusRule },
}

impl PatternKind {
    /// Two-class random labeling presets, cases 1 to 3.
    pub fn rl_two_class(case: u8) -> Result<Self> {
        let supports = match case {
            1 => vec![Rect::unit(), Rect::unit()],
            2 => vec![Rect::square(0.0, 2.0 / 3.0)?, Rect::square(1.0 / 3.0, 1.0)?],
            3 => vec![Rect::unit(), Rect::new(2.0, 0.0, 3.0, 1.0)?],
            _ => return Err(NnctError::Argument(format!("no two-class RL case {case}"))),
        };
        Ok(PatternKind::RlFixed { supports })
    }

    /// Three-class random labeling presets, cases 1 and 2.
    pub fn rl_three_class(case: u8) -> Result<Self> {
        let supports = match case {
            1 => vec![Rect::unit(); 3],
            2 => vec![Rect::unit(), Rect::new(2.0, 0.0, 3.0, 1.0)?, Rect::new(1.0, 2.0, 2.0, 3.0)?],
            _ => return Err(NnctError::Argument(format!("no three-class RL case {case}"))),
        };
        Ok(PatternKind::RlFixed { supports })
    }

    /// Two-class segregation alternatives I to III (`s = 1/6, 1/4, 1/3`).
    pub fn segregation2_level(level: u8) -> Result<Self> {
        let shift = match level {
            1 => 1.0 / 6.0,
            2 => 1.0 / 4.0,
            3 => 1.0 / 3.0,
            _ => return Err(NnctError::Argument(format!("no segregation level {level}"))),
        };
        Ok(PatternKind::Segregation2 { shift })
    }

    /// Three-class segregation alternatives 1 to 3 (`s = 1/12, 1/8, 1/6`).
    pub fn segregation3_level(level: u8) -> Result<Self> {
        let shift = match level {
            1 => 1.0 / 12.0,
            2 => 1.0 / 8.0,
            3 => 1.0 / 6.0,
            _ => return Err(NnctError::Argument(format!("no segregation level {level}"))),
        };
        Ok(PatternKind::Segregation3 { shift })
    }

    /// Two-class association alternatives I to III (`r = 1/(d sqrt(n_t))`, d = 2, 3, 4).
    pub fn association2_level(level: u8) -> Result<Self> {
        match level {
            1..=3 => Ok(PatternKind::Association2 {
                radius: RadiusRule::PerSqrtTotal(f64::from(level) + 1.0),
            }),
            _ => Err(NnctError::Argument(format!("no association level {level}"))),
        }
    }

    /// Three-class association alternatives 1 to 3.
    pub fn association3_level(level: u8) -> Result<Self> {
        let (dy, dz) = match level {
            1 => (2.0, 3.0),
            2 => (2.0, 4.0),
            3 => (3.0, 4.0),
            _ => return Err(NnctError::Argument(format!("no association level {level}"))),
        };
        Ok(PatternKind::Association3 {
            ry: RadiusRule::PerSqrtTotal(dy),
            rz: RadiusRule::PerSqrtTotal(dz),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PatternKind::Csr => "csr",
            PatternKind::RlFixed { .. } => "rl_fixed",
            PatternKind::Segregation2 { .. } => "segregation2",
            PatternKind::Segregation3 { .. } => "segregation3",
            PatternKind::Association2 { .. } => "association2",
            PatternKind::Association3 { .. } => "association3",
        }
    }

    /// Compact parameter string used in experiment output.
    pub fn params(&self) -> String {
        let rule = |r: &RadiusRule| match r {
            RadiusRule::Fixed(v) => format!("{v}"),
            RadiusRule::PerSqrtTotal(d) => format!("1/({d}sqrt(nt))"),
        };
        match self {
            PatternKind::Csr => String::new(),
            PatternKind::RlFixed { supports } => supports
                .iter()
                .map(|s| format!("({},{})x({},{})", s.x0, s.x1, s.y0, s.y1))
                .collect::<Vec<_>>()
                .join(";"),
            PatternKind::Segregation2 { shift } | PatternKind::Segregation3 { shift } => format!("s={shift}"),
            PatternKind::Association2 { radius } => format!("r={}", rule(radius)),
            PatternKind::Association3 { ry, rz } => format!("ry={};rz={}", rule(ry), rule(rz)),
        }
    }

    fn validate(&self, sizes: &[usize]) -> Result<()> {
        let m = sizes.len();
        let need = |k: usize| {
            if m == k {
                Ok(())
            } else {
                Err(NnctError::Argument(format!("{} needs {k} class sizes, got {m}", self.name())))
            }
        };
        let radius_ok = |r: &RadiusRule| {
            let v = match r {
                RadiusRule::Fixed(v) | RadiusRule::PerSqrtTotal(v) => *v,
            };
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(NnctError::Argument(format!("association radius parameter {v} must be positive")))
            }
        };
        match self {
            PatternKind::Csr => Ok(()),
            PatternKind::RlFixed { supports } => {
                need(supports.len())?;
                supports.iter().try_for_each(Rect::validate)
            }
            PatternKind::Segregation2 { shift } => {
                need(2)?;
                if !(0.0..1.0).contains(shift) {
                    return Err(NnctError::Argument(format!("two-class shift {shift} outside [0, 1)")));
                }
                Ok(())
            }
            PatternKind::Segregation3 { shift } => {
                need(3)?;
                if !(0.0..0.5).contains(shift) {
                    return Err(NnctError::Argument(format!("three-class shift {shift} outside [0, 1/2)")));
                }
                Ok(())
            }
            PatternKind::Association2 { radius } => {
                need(2)?;
                radius_ok(radius)
            }
            PatternKind::Association3 { ry, rz } => {
                need(3)?;
                radius_ok(ry)?;
                radius_ok(rz)
            }
        }
    }

    /// Per-class uniform supports, when the pattern has them.
    pub fn supports(&self, m: usize) -> Option<Vec<Rect>> {
        let sq = |lo: f64, hi: f64| Rect { x0: lo, y0: lo, x1: hi, y1: hi };
        match self {
            PatternKind::Csr => Some(vec![Rect::unit(); m]),
            PatternKind::RlFixed { supports } => Some(supports.clone()),
            PatternKind::Segregation2 { shift: s } => Some(vec![sq(0.0, 1.0 - s), sq(*s, 1.0)]),
            PatternKind::Segregation3 { shift: s } => {
                Some(vec![sq(0.0, 1.0 - 2.0 * s), sq(2.0 * s, 1.0), sq(*s, 1.0 - s)])
            }
            PatternKind::Association2 { .. } | PatternKind::Association3 { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub kind: PatternKind,
    pub sizes: Vec<usize>,
    pub seed: u64,
}

impl PatternSpec {
    pub fn new(kind: PatternKind, sizes: Vec<usize>, seed: u64) -> Self {
        PatternSpec { kind, sizes, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(NnctError::Argument(format!("class sizes {:?} must be positive", self.sizes)));
        }
        if self.sizes.iter().sum::<usize>() < 2 {
            return Err(NnctError::Argument("patterns need at least two points".into()));
        }
        self.kind.validate(&self.sizes)
    }
}

/// Class names used for generated patterns: `"1"`, `"2"`, ...
pub fn class_names(m: usize) -> Vec<String> {
    (1..=m).map(|i| i.to_string()).collect()
}

fn block_labels(sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .enumerate()
        .flat_map(|(i, &k)| std::iter::repeat_n(i, k))
        .collect()
}

/// Draws `sizes[i]` points uniformly on `supports[i]`, in class order.
pub fn rl_locations<R: Rng + ?Sized>(supports: &[Rect], sizes: &[usize], rng: &mut R) -> Vec<[f64; 2]> {
    supports
        .iter()
        .zip(sizes)
        .flat_map(|(s, &k)| (0..k).map(|_| s.sample(rng)).collect::<Vec<_>>())
        .collect()
}

/// Uniformly random assignment of `sizes[i]` labels `i` to `sum(sizes)` slots.
pub fn random_labels<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Vec<usize> {
    let mut labels = block_labels(sizes);
    labels.shuffle(rng);
    labels
}

/// Same locations and class sizes, labels uniformly permuted.
pub fn relabel<R: Rng + ?Sized>(points: &LabeledPointSet, rng: &mut R) -> Result<LabeledPointSet> {
    let mut labels = points.labels().to_vec();
    labels.shuffle(rng);
    points.with_labels(labels)
}

fn offspring<R: Rng + ?Sized>(parents: &[[f64; 2]], r: f64, count: usize, rng: &mut R) -> Vec<[f64; 2]> {
    (0..count)
        .map(|_| {
            let p = parents[rng.random_range(0..parents.len())];
            let rho = r * rng.random::<f64>();
            let theta = 2.0 * PI * rng.random::<f64>();
            [p[0] + rho * theta.cos(), p[1] + rho * theta.sin()]
        })
        .collect()
}

pub fn generate(spec: &PatternSpec) -> Result<LabeledPointSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    generate_with(&spec.kind, &spec.sizes, &mut rng)
}

/// Generates one realization from an explicit RNG. The spec is assumed valid.
pub fn generate_with<R: Rng + ?Sized>(kind: &PatternKind, sizes: &[usize], rng: &mut R) -> Result<LabeledPointSet> {
    let m = sizes.len();
    let names = class_names(m);
    let n_total: usize = sizes.iter().sum();
    match kind {
        PatternKind::RlFixed { supports } => {
            let coords = rl_locations(supports, sizes, rng);
            let labels = random_labels(sizes, rng);
            LabeledPointSet::new(coords, labels, names)
        }
        PatternKind::Association2 { radius } => {
            let parents: Vec<_> = (0..sizes[0]).map(|_| Rect::unit().sample(rng)).collect();
            let mut coords = parents.clone();
            coords.extend(offspring(&parents, radius.radius(n_total), sizes[1], rng));
            LabeledPointSet::new(coords, block_labels(sizes), names)
        }
        PatternKind::Association3 { ry, rz } => {
            let parents: Vec<_> = (0..sizes[0]).map(|_| Rect::unit().sample(rng)).collect();
            let mut coords = parents.clone();
            coords.extend(offspring(&parents, ry.radius(n_total), sizes[1], rng));
            coords.extend(offspring(&parents, rz.radius(n_total), sizes[2], rng));
            LabeledPointSet::new(coords, block_labels(sizes), names)
        }
        _ => {
            let supports = kind.supports(m).expect("uniform-support pattern");
            let coords = rl_locations(&supports, sizes, rng);
            LabeledPointSet::new(coords, block_labels(sizes), names)
        }
    }
}
