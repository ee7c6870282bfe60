//! The nearest-neighbor contingency table, its one-vs-rest collapse, and the
//! total / strong / partial segregation and association taxonomy.

use serde::{Deserialize, Serialize};

use crate::error::{NnctError, Result};
use crate::nn::NnDigraph;
use crate::points::LabeledPointSet;

/// `m x m` table of (base class, NN class) counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nnct {
    counts: Vec<Vec<u64>>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    n: u64,
    class_names: Vec<String>,
}

impl Nnct {
    pub fn from_counts(counts: Vec<Vec<u64>>, class_names: Vec<String>) -> Result<Self> {
        let m = counts.len();
        if m == 0 {
            return Err(NnctError::Consistency("empty table".into()));
        }
        if counts.iter().any(|row| row.len() != m) {
            return Err(NnctError::Consistency("table is not square".into()));
        }
        if class_names.len() != m {
            return Err(NnctError::Consistency(format!(
                "{m} rows but {} class names",
                class_names.len()
            )));
        }
        let row_sums: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums: Vec<u64> = (0..m).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        let n = row_sums.iter().sum();
        Ok(Nnct {
            counts,
            row_sums,
            col_sums,
            n,
            class_names,
        })
    }

    /// Tally `(label(p), label(nn(p)))` over all points.
    pub fn build(points: &LabeledPointSet, graph: &NnDigraph) -> Result<Self> {
        if points.len() != graph.len() {
            return Err(NnctError::Consistency(format!(
                "point set has {} points, graph has {}",
                points.len(),
                graph.len()
            )));
        }
        Self::from_labels(points.labels(), graph.nn_index(), points.class_names().to_vec())
    }

    /// Tally from raw labels; used by label-randomization loops that keep the
    /// digraph fixed.
    pub fn from_labels(labels: &[usize], nn_index: &[usize], class_names: Vec<String>) -> Result<Self> {
        let m = class_names.len();
        let mut counts = vec![vec![0u64; m]; m];
        for (i, &j) in nn_index.iter().enumerate() {
            counts[labels[i]][labels[j]] += 1;
        }
        Self::from_counts(counts, class_names)
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i][j]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    /// Row sums `n_i` (class sizes).
    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    /// Column sums `C_j`.
    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }

    pub fn total(&self) -> u64 {
        self.n
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Row-major flattening `(N_11, N_12, ..., N_mm)`.
    pub fn flat(&self) -> Vec<f64> {
        self.counts.iter().flatten().map(|&c| c as f64).collect()
    }

    /// `pi_hat[i][j] = N_ij / n`.
    pub fn pi_hat(&self) -> Vec<Vec<f64>> {
        let n = self.n as f64;
        self.counts
            .iter()
            .map(|r| r.iter().map(|&c| c as f64 / n).collect())
            .collect()
    }

    /// Reorder classes: new class `k` is old class `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let m = self.num_classes();
        let mut check = perm.to_vec();
        check.sort_unstable();
        if check != (0..m).collect::<Vec<_>>() {
            return Err(NnctError::Argument("not a permutation of the classes".into()));
        }
        let counts = (0..m)
            .map(|a| (0..m).map(|b| self.counts[perm[a]][perm[b]]).collect())
            .collect();
        let names = perm.iter().map(|&k| self.class_names[k].clone()).collect();
        Self::from_counts(counts, names)
    }
}

/// Pool every class except `focus` into a single "rest" class.
///
/// Row/column 0 of the result is the focus class, row/column 1 the rest.
pub fn collapse_one_vs_rest(nnct: &Nnct, focus: usize) -> Result<Nnct> {
    let m = nnct.num_classes();
    if m < 2 {
        return Err(NnctError::Argument("one-vs-rest needs at least two classes".into()));
    }
    if focus >= m {
        return Err(NnctError::Argument(format!("focus class {focus} out of range (m = {m})")));
    }
    let others = || (0..m).filter(move |&j| j != focus);
    let n11 = nnct.count(focus, focus);
    let n12: u64 = others().map(|j| nnct.count(focus, j)).sum();
    let n21: u64 = others().map(|j| nnct.count(j, focus)).sum();
    let n22: u64 = others().flat_map(|j| others().map(move |k| (j, k))).map(|(j, k)| nnct.count(j, k)).sum();
    Nnct::from_counts(
        vec![vec![n11, n12], vec![n21, n22]],
        vec![nnct.class_names()[focus].clone(), "rest".to_string()],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegregationLevel {
    Total,
    Strong,
    Partial,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationLevel {
    Total,
    Strong,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSegregation {
    pub class: usize,
    pub level: SegregationLevel,
    /// `pi_ii` versus the sum of the rest of row `i`.
    pub total: bool,
    /// `pi_ii` versus every other entry of row `i`.
    pub strong: bool,
    /// Classes `j` with `pi_ii >= pi_ij` (the class is more segregated from these).
    pub segregated_from: Vec<usize>,
    /// Remaining classes (the class is more associated with these).
    pub associated_with: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAssociation {
    /// Base class `i`.
    pub base: usize,
    /// NN class `j`, whose association with `base` is described.
    pub nn_class: usize,
    pub level: AssociationLevel,
    pub total: bool,
    pub strong: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegregationProfile {
    pub pi_hat: Vec<Vec<f64>>,
    pub strict: bool,
    pub classes: Vec<ClassSegregation>,
    pub pairs: Vec<PairAssociation>,
}

/// Classify each class and each ordered pair of classes from `pi_hat = N / n`.
///
/// With `strict == false` the defining inequalities are `>=`; with `strict`
/// they are `>`. Comparisons are carried out on the integer counts, which
/// share the common denominator `n`.
pub fn classify_patterns(nnct: &Nnct, strict: bool) -> SegregationProfile {
    let m = nnct.num_classes();
    let ge = |a: u64, b: u64| if strict { a > b } else { a >= b };
    let row_rest = |i: usize, j: usize| -> u64 { (0..m).filter(|&k| k != j).map(|k| nnct.count(i, k)).sum() };

    let classes = (0..m)
        .map(|i| {
            let nii = nnct.count(i, i);
            let total = m > 1 && ge(nii, row_rest(i, i));
            let (segregated_from, associated_with): (Vec<usize>, Vec<usize>) =
                (0..m).filter(|&j| j != i).partition(|&j| ge(nii, nnct.count(i, j)));
            let strong = m > 1 && associated_with.is_empty();
            let level = if total {
                SegregationLevel::Total
            } else if strong {
                SegregationLevel::Strong
            } else if !segregated_from.is_empty() {
                SegregationLevel::Partial
            } else {
                SegregationLevel::None
            };
            ClassSegregation {
                class: i,
                level,
                total,
                strong,
                segregated_from,
                associated_with,
            }
        })
        .collect();

    let mut pairs = Vec::new();
    for i in 0..m {
        for j in (0..m).filter(|&j| j != i) {
            let nij = nnct.count(i, j);
            let total = ge(nij, row_rest(i, j));
            let strong = (0..m).filter(|&k| k != j).all(|k| ge(nij, nnct.count(i, k)));
            let level = if total {
                AssociationLevel::Total
            } else if strong {
                AssociationLevel::Strong
            } else {
                AssociationLevel::None
            };
            pairs.push(PairAssociation {
                base: i,
                nn_class: j,
                level,
                total,
                strong,
            });
        }
    }

    SegregationProfile {
        pi_hat: nnct.pi_hat(),
        strict,
        classes,
        pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Execution;
    use crate::nn::SearchMethod;
    use proptest::prelude::*;

    fn names(m: usize) -> Vec<String> {
        (1..=m).map(|k| format!("c{k}")).collect()
    }

    pub(crate) fn swamp() -> Nnct {
        Nnct::from_counts(
            vec![vec![142, 40, 23], vec![34, 97, 25], vec![38, 32, 28]],
            vec!["BG".into(), "CA".into(), "BC".into()],
        )
        .unwrap()
    }

    #[test]
    fn swamp_margins() {
        let t = swamp();
        assert_eq!(t.row_sums(), &[205, 156, 98]);
        assert_eq!(t.col_sums(), &[214, 169, 76]);
        assert_eq!(t.total(), 459);
    }

    #[test]
    fn mutual_pair_table() {
        let p = LabeledPointSet::from_label_strings(vec![[0.0, 0.0], [1.0, 0.0]], &["a", "b"]).unwrap();
        let g = NnDigraph::build(&p).unwrap();
        let t = Nnct::build(&p, &g).unwrap();
        assert_eq!(t.counts(), &[vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn collinear_table() {
        let p = LabeledPointSet::from_label_strings(vec![[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]], &["a", "a", "b"])
            .unwrap();
        let g = NnDigraph::build(&p).unwrap();
        let t = Nnct::build(&p, &g).unwrap();
        assert_eq!(t.counts(), &[vec![2, 0], vec![1, 0]]);
    }

    #[test]
    fn mismatched_sizes() {
        let p = LabeledPointSet::from_label_strings(vec![[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]], &["a", "a", "b"])
            .unwrap();
        let g = NnDigraph::from_coords(&[[0.0, 0.0], [1.0, 0.0]], SearchMethod::Auto, Execution::Sequential).unwrap();
        assert!(matches!(Nnct::build(&p, &g), Err(NnctError::Consistency(_))));
    }

    #[test]
    fn one_vs_rest_swamp() {
        let t = swamp();
        let bc = collapse_one_vs_rest(&t, 2).unwrap();
        assert_eq!(bc.counts(), &[vec![28, 70], vec![48, 313]]);
        assert_eq!(bc.total(), 459);
        assert_eq!(collapse_one_vs_rest(&t, 0).unwrap().count(0, 0), 142);
    }

    #[test]
    fn one_vs_rest_two_class_is_identity() {
        let t = Nnct::from_counts(vec![vec![5, 3], vec![2, 7]], names(2)).unwrap();
        assert_eq!(collapse_one_vs_rest(&t, 0).unwrap().counts(), t.counts());
        assert_eq!(
            collapse_one_vs_rest(&t, 1).unwrap().counts(),
            t.permuted(&[1, 0]).unwrap().counts()
        );
        let one = Nnct::from_counts(vec![vec![4]], names(1)).unwrap();
        assert!(collapse_one_vs_rest(&one, 0).is_err());
        assert!(collapse_one_vs_rest(&t, 2).is_err());
    }

    #[test]
    fn swamp_profile() {
        let p = classify_patterns(&swamp(), false);
        assert_eq!(p.classes[0].level, SegregationLevel::Total);
        assert_eq!(p.classes[1].level, SegregationLevel::Total);
        assert_eq!(p.classes[2].level, SegregationLevel::None);
        assert!(!p.classes[2].strong && !p.classes[2].total);
        let bc_bg = p.pairs.iter().find(|a| a.base == 2 && a.nn_class == 0).unwrap();
        assert_eq!(bc_bg.level, AssociationLevel::Strong);
        let s: f64 = p.pi_hat.iter().flatten().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_table_totally_segregated() {
        let t = Nnct::from_counts(vec![vec![4, 0, 0], vec![0, 6, 0], vec![0, 0, 3]], names(3)).unwrap();
        let p = classify_patterns(&t, false);
        assert!(p.classes.iter().all(|c| c.level == SegregationLevel::Total));
    }

    #[test]
    fn partial_segregation() {
        // Class 1: 5 >= 2 (class 2) but 5 < 9 (class 3).
        let t = Nnct::from_counts(vec![vec![5, 2, 9], vec![1, 1, 1], vec![1, 1, 1]], names(3)).unwrap();
        let c = &classify_patterns(&t, false).classes[0];
        assert_eq!(c.level, SegregationLevel::Partial);
        assert_eq!(c.segregated_from, vec![1]);
        assert_eq!(c.associated_with, vec![2]);
    }

    #[test]
    fn strict_variant() {
        let t = Nnct::from_counts(vec![vec![3, 3], vec![1, 5]], names(2)).unwrap();
        assert_eq!(classify_patterns(&t, false).classes[0].level, SegregationLevel::Total);
        assert_eq!(classify_patterns(&t, true).classes[0].level, SegregationLevel::None);
    }

    fn table_strategy() -> impl Strategy<Value = Nnct> {
        (1usize..5).prop_flat_map(|m| {
            prop::collection::vec(0u64..30, m * m).prop_map(move |v| {
                let counts = v.chunks(m).map(|r| r.to_vec()).collect();
                Nnct::from_counts(counts, names(m)).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn total_implies_strong(t in table_strategy(), strict in any::<bool>()) {
            let p = classify_patterns(&t, strict);
            for c in &p.classes {
                prop_assert!(!c.total || c.strong);
            }
            for a in &p.pairs {
                prop_assert!(!a.total || a.strong);
            }
        }

        #[test]
        fn relabeling_is_consistent(t in table_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let m = t.num_classes();
            let mut perm: Vec<usize> = (0..m).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let u = t.permuted(&perm).unwrap();
            let (p, q) = (classify_patterns(&t, false), classify_patterns(&u, false));
            for a in 0..m {
                prop_assert_eq!(q.classes[a].level, p.classes[perm[a]].level);
                for b in 0..m {
                    prop_assert_eq!(u.count(a, b), t.count(perm[a], perm[b]));
                }
            }
        }

        #[test]
        fn collapse_preserves_total(t in table_strategy(), f in 0usize..4) {
            if t.num_classes() >= 2 {
                let f = f % t.num_classes();
                let c = collapse_one_vs_rest(&t, f).unwrap();
                prop_assert_eq!(c.total(), t.total());
                prop_assert_eq!(c.row_sums()[0], t.row_sums()[f]);
                prop_assert_eq!(c.col_sums()[0], t.col_sums()[f]);
            }
        }
    }
}
