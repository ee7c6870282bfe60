//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nnct::harness::{TestSelector, TestTarget};
use nnct::nn::{exhaustive_nn, grid_nn};
use nnct::stat_tests::{cell_tests_with, cell_z, overall_test_with};
use nnct::{
    collapse_one_vs_rest, generate, run_experiment, size_thresholds, Execution, ExperimentSpec, Family, GInverse,
    LabeledPointSet, MomentContext, MomentSet, NnDigraph, Nnct, PatternKind, PatternSpec, SearchMethod,
};

const TOL_X: f64 = 0.02;
const TOL_Z: f64 = 0.01;
const IDENTITY_RTOL: f64 = 1e-6;
const MC_SE_MULT: f64 = 3.0;
const RANK_CUTOFF: f64 = 1e-8;

const SWAMP_COUNTS: [[u64; 3]; 3] = [[142, 40, 23], [34, 97, 25], [38, 32, 28]];
const SWAMP_Q: u64 = 282;
const SWAMP_R: u64 = 288;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn swamp() -> (Nnct, MomentSet) {
    let t = Nnct::from_counts(
        SWAMP_COUNTS.iter().map(|r| r.to_vec()).collect(),
        vec!["BG".into(), "CA".into(), "BC".into()],
    )
    .unwrap();
    let ctx = MomentContext::new(t.row_sums().to_vec(), SWAMP_Q, SWAMP_R).unwrap();
    (t, MomentSet::new(&ctx).unwrap())
}

fn close(a: f64, b: f64, rtol: f64) -> bool {
    (a - b).abs() <= rtol * a.abs().max(b.abs()).max(1.0)
}

fn c1_swamp_overall() -> Outcome {
    let start = Instant::now();
    let (t, ms) = swamp();
    let mut pass = true;
    let mut parts = Vec::new();
    for (f, want, df) in [(Family::Dixon, 75.78, 6), (Family::TypeI, 65.35, 4), (Family::TypeIII, 65.39, 4)] {
        let r = nnct::overall_test(f, &t, &ms).unwrap();
        let ok = (r.statistic - want).abs() <= TOL_X && r.df == df && r.p_asy < 1e-4;
        pass &= ok;
        parts.push(format!("X_{f}={:.4} df={} p={:.1e}", r.statistic, r.df, r.p_asy));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(1);
    Outcome::new(pass, format!("{} ({elapsed:.2?})", parts.join(", ")))
}

fn c2_swamp_cells() -> Outcome {
    let start = Instant::now();
    let (t, ms) = swamp();
    let golden = [
        (Family::Dixon, [[6.57, -4.46, -3.74], [-5.65, 6.60, -1.70], [-1.18, -0.30, 1.51]]),
        (Family::TypeI, [[6.91, -6.29, -2.37], [-6.86, 6.49, -0.21], [-1.67, -0.96, 2.61]]),
        (Family::TypeIII, [[6.91, -6.29, -2.37], [-6.86, 6.49, -0.20], [-1.67, -0.96, 2.60]]),
    ];
    let mut worst: f64 = 0.0;
    for (f, want) in golden {
        let z = nnct::cell_tests(f, &t, &ms).unwrap().z;
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((z[i][j] - want[i][j]).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        worst <= TOL_Z && elapsed < Duration::from_secs(1),
        format!("27 entries, max |dev| = {worst:.4} ({elapsed:.2?})"),
    )
}

fn c3_swamp_one_vs_rest() -> Outcome {
    let (t, ms) = swamp();
    let zd = [5.09, 3.86, 4.12];
    let z13 = [6.91, 6.49, 2.61];
    let xd = [48.86, 44.79, 16.96];
    let xi = [47.70, 42.11, 6.79];
    let x3 = [47.72, 42.15, 6.75];
    let mut worst: f64 = 0.0;
    for focus in 0..3 {
        let c = collapse_one_vs_rest(&t, focus).unwrap();
        let ms1 = MomentSet::new(&ms.context().one_vs_rest(focus).unwrap()).unwrap();
        let z = |f| cell_z(&ms1.family(f).unwrap(), &c, 1, 1).unwrap();
        let x = |f| nnct::overall_test(f, &c, &ms1).unwrap().statistic;
        for (got, want) in [
            (z(Family::Dixon), zd[focus]),
            (z(Family::TypeI), z13[focus]),
            (z(Family::TypeIII), z13[focus]),
            (x(Family::Dixon), xd[focus]),
            (x(Family::TypeI), xi[focus]),
            (x(Family::TypeIII), x3[focus]),
        ] {
            worst = worst.max((got - want).abs());
        }
    }
    Outcome::new(worst <= TOL_X, format!("18 entries, max |dev| = {worst:.4}"))
}

/// Random CSR data sets for the identity and rank criteria.
fn identity_datasets() -> Vec<LabeledPointSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    (0..120)
        .map(|k| {
            let m = 2 + k % 3;
            let sizes: Vec<usize> = (0..m).map(|_| rng.random_range(5..=100)).collect();
            generate(&PatternSpec::new(PatternKind::Csr, sizes, 1000 + k as u64)).unwrap()
        })
        .collect()
}

struct Analyzed {
    table: Nnct,
    moments: MomentSet,
}

fn analyze(points: &LabeledPointSet) -> Analyzed {
    let g = NnDigraph::build(points).unwrap();
    let table = Nnct::build(points, &g).unwrap();
    let sizes = points.class_sizes().iter().map(|&k| k as u64).collect();
    let moments = MomentSet::new(&MomentContext::from_graph(sizes, &g).unwrap()).unwrap();
    Analyzed { table, moments }
}

fn overall(a: &Analyzed, f: Family) -> f64 {
    overall_test_with(&a.moments.family(f).unwrap(), &a.table, GInverse::default()).unwrap().statistic
}

fn c4_identities(data: &[LabeledPointSet]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut fails: Vec<(&str, usize)> = vec![
        ("Z_D=Z_II", 0),
        ("Z_III=Z_IV", 0),
        ("X_D=X_II", 0),
        ("X_III=X_IV", 0),
        ("two-class signs", 0),
    ];
    let mut perm_fails = [0usize; 5];
    for pts in data {
        let a = analyze(pts);
        let m = pts.num_classes();
        let z = |f| cell_tests_with(&a.moments.family(f).unwrap(), &a.table).unwrap().z;
        let (zd, z1, z2, z3, z4) = (z(Family::Dixon), z(Family::TypeI), z(Family::TypeII), z(Family::TypeIII), z(Family::TypeIV));
        let same = |x: &Vec<Vec<f64>>, y: &Vec<Vec<f64>>| {
            x.iter().flatten().zip(y.iter().flatten()).all(|(p, q)| close(*p, *q, IDENTITY_RTOL))
        };
        fails[0].1 += usize::from(!same(&zd, &z2));
        fails[1].1 += usize::from(!same(&z3, &z4));
        let x: Vec<f64> = Family::ALL.iter().map(|&f| overall(&a, f)).collect();
        fails[2].1 += usize::from(!close(x[0], x[2], IDENTITY_RTOL));
        fails[3].1 += usize::from(!close(x[3], x[4], IDENTITY_RTOL));
        if m == 2 {
            let c = |p: f64, q: f64| close(p, q, IDENTITY_RTOL);
            let ok = (0..2).all(|i| c(zd[i][0], -zd[i][1]) && c(z2[i][0], -z2[i][1]))
                && c(z1[0][0], z1[1][1])
                && c(z1[0][0], -z1[0][1])
                && c(z1[0][0], -z1[1][0])
                && (0..2).all(|j| c(z3[0][j], -z3[1][j]) && c(z4[0][j], -z4[1][j]));
            fails[4].1 += usize::from(!ok);
        }
        // Relabel classes by a random non-identity permutation.
        let mut perm: Vec<usize> = (0..m).collect();
        while perm.iter().enumerate().all(|(i, &p)| i == p) {
            for i in (1..m).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
        }
        let labels = pts.labels().iter().map(|&l| perm[l]).collect();
        let mut names = vec![String::new(); m];
        for (old, &new) in perm.iter().enumerate() {
            names[new] = pts.class_names()[old].clone();
        }
        let permuted = LabeledPointSet::new(pts.coords().to_vec(), labels, names).unwrap();
        let b = analyze(&permuted);
        for (k, &f) in Family::ALL.iter().enumerate() {
            perm_fails[k] += usize::from(!close(x[k], overall(&b, f), IDENTITY_RTOL));
        }
    }
    let perm_summary: Vec<String> = Family::ALL
        .iter()
        .zip(perm_fails)
        .map(|(f, n)| format!("X_{f} {n}"))
        .collect();
    let pass = fails.iter().all(|(_, n)| *n == 0) && perm_fails.iter().all(|&n| n == 0);
    let identity_summary: Vec<String> = fails.iter().map(|(s, n)| format!("{s} {n}")).collect();
    Outcome::new(
        pass,
        format!(
            "{} data sets; failures: {}; permutation-invariance failures: {}",
            data.len(),
            identity_summary.join(", "),
            perm_summary.join(", ")
        ),
    )
}

fn c5_moment_oracle() -> Outcome {
    let start = Instant::now();
    const N_RELABEL: usize = 100_000;
    let sizes = [8usize, 8, 9];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let coords: Vec<[f64; 2]> = (0..25).map(|_| [rng.random(), rng.random()]).collect();
    let g = NnDigraph::from_coords(&coords, SearchMethod::Exhaustive, Execution::Sequential).unwrap();
    let ctx = MomentContext::from_graph(sizes.iter().map(|&k| k as u64).collect(), &g).unwrap();
    let ms = MomentSet::new(&ctx).unwrap();
    let base: Vec<usize> = sizes.iter().enumerate().flat_map(|(i, &k)| std::iter::repeat_n(i, k)).collect();
    let names: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
    let samples: Vec<Vec<f64>> = Execution::default().map_indexed(N_RELABEL, |k| {
        use rand::seq::SliceRandom;
        let mut r = nnct::exec::replicate_rng(7, k as u64);
        let mut labels = base.clone();
        labels.shuffle(&mut r);
        let t = Nnct::from_labels(&labels, g.nn_index(), names.clone()).unwrap();
        let mut v = t.flat();
        v.extend(t.col_sums().iter().map(|&c| c as f64));
        v
    });
    let nf = N_RELABEL as f64;
    let mean: Vec<f64> = (0..12).map(|a| samples.iter().map(|s| s[a]).sum::<f64>() / nf).collect();
    // Empirical covariance of coordinates a, b and the standard error of that estimate.
    let cov_and_se = |a: usize, b: usize| {
        let prods: Vec<f64> = samples.iter().map(|s| (s[a] - mean[a]) * (s[b] - mean[b])).collect();
        let c = prods.iter().sum::<f64>() / nf;
        let v = prods.iter().map(|p| (p - c).powi(2)).sum::<f64>() / (nf - 1.0);
        (c, (v / nf).sqrt())
    };
    let within = |got: f64, want: f64, se: f64| (got - want).abs() <= MC_SE_MULT * se + 1e-9;
    let mut checked = 0;
    let mut failed = Vec::new();
    #[allow(clippy::needless_range_loop)]
    for a in 0..9 {
        let (i, j) = (a / 3, a % 3);
        let (var, _) = cov_and_se(a, a);
        let se_mean = (var / nf).sqrt();
        checked += 1;
        if !within(mean[a], ms.exp_counts()[(i, j)], se_mean) {
            failed.push(format!("E[N_{}{}]", i + 1, j + 1));
        }
        for b in a..9 {
            let (c, se) = cov_and_se(a, b);
            checked += 1;
            if !within(c, ms.cov_counts()[(a, b)], se) {
                failed.push(format!("Cov[N_{}{},N_{}{}]", i + 1, j + 1, b / 3 + 1, b % 3 + 1));
            }
        }
    }
    for j in 0..3 {
        let (v, se) = cov_and_se(9 + j, 9 + j);
        checked += 1;
        if !within(v, ms.cov_colsums()[(j, j)], se) {
            failed.push(format!("Var[C_{}]", j + 1));
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        failed.is_empty() && elapsed < Duration::from_secs(120),
        format!(
            "{checked} moments vs {N_RELABEL} relabelings (Q={}, R={}), outside {MC_SE_MULT} SE: {:?} ({elapsed:.2?})",
            ctx.q(),
            ctx.r(),
            failed
        ),
    )
}

fn c6_nn_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = 0;
    let mut total_points = 0;
    for k in 0..500 {
        let n = rng.random_range(2..=200);
        let coords: Vec<[f64; 2]> = if k % 3 == 0 {
            // Integer lattice points: many exact distance ties.
            let side = ((n as f64).sqrt() as i64 + 3).max(4);
            let mut seen = std::collections::HashSet::new();
            let mut v = Vec::new();
            while v.len() < n {
                let p = (rng.random_range(0..side), rng.random_range(0..side));
                if seen.insert(p) {
                    v.push([p.0 as f64, p.1 as f64]);
                }
            }
            v
        } else {
            let spread = 10f64.powi(rng.random_range(-3..4));
            (0..n).map(|_| [spread * rng.random::<f64>(), spread * rng.random::<f64>()]).collect()
        };
        total_points += n;
        let e = exhaustive_nn(&coords, Execution::Sequential);
        let g = grid_nn(&coords, Execution::Sequential);
        let (de, dg) = (NnDigraph::from_nn_index(e.clone()), NnDigraph::from_nn_index(g.clone()));
        if e != g || de.q() != dg.q() || de.r() != dg.r() || de.q_k() != dg.q_k() {
            mismatches += 1;
        }
    }
    Outcome::new(mismatches == 0, format!("500 configurations, {total_points} points, {mismatches} mismatches"))
}

fn c7_rank(data: &[LabeledPointSet]) -> Outcome {
    let (mut checked, mut bad_d, mut bad_3) = (0, 0, 0);
    let mut seen_ranks = std::collections::BTreeSet::new();
    for pts in data.iter().filter(|p| p.class_sizes().iter().all(|&k| k >= 5)) {
        let a = analyze(pts);
        let m = pts.num_classes();
        let rank = |f| nnct::numerical_rank(a.moments.family(f).unwrap().sigma(), RANK_CUTOFF).unwrap();
        checked += 1;
        bad_d += usize::from(rank(Family::Dixon) != m * (m - 1));
        let r3 = rank(Family::TypeIII);
        if r3 != (m - 1) * (m - 1) {
            bad_3 += 1;
            seen_ranks.insert((m, r3));
        }
    }
    Outcome::new(
        bad_d == 0 && bad_3 == 0,
        format!(
            "{checked} data sets; rank(Sigma_D) != m(m-1): {bad_d}; rank(Sigma_III) != (m-1)^2: {bad_3} (observed (m, rank): {seen_ranks:?})"
        ),
    )
}

fn size_spec() -> ExperimentSpec {
    let tests = vec![
        TestSelector::new(Family::TypeIII, TestTarget::Overall),
        TestSelector::new(Family::TypeIII, TestTarget::Cell { row: 0, col: 0 }),
        TestSelector::new(Family::Dixon, TestTarget::Overall),
    ];
    ExperimentSpec::new(PatternKind::Csr, vec![vec![50, 50]], tests, 2000, 20_240_801)
}

fn c8_size_band() -> (Outcome, String) {
    let start = Instant::now();
    let res = run_experiment(&size_spec()).unwrap();
    let elapsed = start.elapsed();
    let rate = |k: usize| res.rows[k].reject_rate;
    let (x3, z3, xd) = (rate(0), rate(1), rate(2));
    let pass = (0.035..=0.065).contains(&x3)
        && (0.035..=0.065).contains(&z3)
        && (0.03..=0.07).contains(&xd)
        && elapsed < Duration::from_secs(300);
    let csv = res.to_csv_string().unwrap();
    (
        Outcome::new(pass, format!("X_III {x3:.4}, Z_III(1,1) {z3:.4}, X_D {xd:.4} ({elapsed:.2?})")),
        csv,
    )
}

fn c9_power_ordering() -> Outcome {
    let test = vec![TestSelector::new(Family::TypeIII, TestTarget::Overall)];
    let rates: Vec<f64> = (1..=3)
        .map(|level| {
            let kind = PatternKind::segregation2_level(level).unwrap();
            let spec = ExperimentSpec::new(kind, vec![vec![50, 50]], test.clone(), 500, 9000 + level as u64);
            run_experiment(&spec).unwrap().rows[0].reject_rate
        })
        .collect();
    let se = |p: f64, q: f64| (p * (1.0 - p) / 500.0 + q * (1.0 - q) / 500.0).sqrt();
    let mono = rates.windows(2).all(|w| w[1] - w[0] >= -2.0 * se(w[0], w[1]));
    Outcome::new(
        mono && rates[2] > 0.5,
        format!("H_S^I {:.3}, H_S^II {:.3}, H_S^III {:.3}", rates[0], rates[1], rates[2]),
    )
}

fn c10_thresholds() -> Outcome {
    let (lo, hi) = size_thresholds(0.05, 10_000);
    let r = |v: f64| (v * 1e4).round() / 1e4;
    Outcome::new(r(lo) == 0.0464 && r(hi) == 0.0536, format!("({lo:.6}, {hi:.6})"))
}

fn c11_determinism(reference: &str) -> Outcome {
    let run = |threads: Option<usize>| -> String {
        let mut spec = size_spec();
        match threads {
            None => {
                spec.execution = Execution::Sequential;
                run_experiment(&spec).unwrap().to_csv_string().unwrap()
            }
            Some(t) => {
                spec.execution = Execution::Parallel;
                let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
                pool.install(|| run_experiment(&spec).unwrap().to_csv_string().unwrap())
            }
        }
    };
    let outputs = [("repeat", run(Some(rayon::current_num_threads()))), ("1 thread", run(Some(1))), ("4 threads", run(Some(4))), ("sequential", run(None))];
    let differing: Vec<&str> = outputs.iter().filter(|(_, o)| o != reference).map(|(n, _)| *n).collect();
    Outcome::new(
        differing.is_empty(),
        format!("{} bytes; runs differing from the first: {differing:?}", reference.len()),
    )
}

fn main() {
    let data = identity_datasets();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |id: u32, name: &'static str, o: Outcome| {
        println!("[{}] criterion {id:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o));
    };
    report(1, "swamp overall golden", c1_swamp_overall());
    report(2, "swamp cell-specific golden", c2_swamp_cells());
    report(3, "swamp one-vs-rest golden", c3_swamp_one_vs_rest());
    report(4, "identity suite", c4_identities(&data));
    report(5, "moment oracle", c5_moment_oracle());
    report(6, "NN oracle", c6_nn_oracle());
    report(7, "rank/df checks", c7_rank(&data));
    let (o8, csv) = c8_size_band();
    report(8, "CSR size band", o8);
    report(9, "power ordering", c9_power_ordering());
    report(10, "threshold reproduction", c10_thresholds());
    report(11, "determinism", c11_determinism(&csv));

    let failed: Vec<u32> = results.iter().filter(|(_, _, o)| !o.pass).map(|(id, _, _)| *id).collect();
    println!("acceptance: {} of {} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
