//! Exact joint Gaussian sampling on a finite family.
//!
//! A Gram matrix is factorized once (`O(n³)`) and each replicate is `L z` with
//! `z` drawn from its own counter-based stream (`O(n²)` per replicate), so the
//! ensemble is a pure function of `(Gram, master_seed, replicates)` regardless of
//! thread count.
//!
//! Columns whose Gram row is identically zero are sampled as exact zeros, and
//! columns whose row is bitwise identical to an earlier one reuse that column's
//! value. Only the remaining representative columns are factorized.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{format_f64, GramMatrix, Kernel};
use crate::error::{Error, Result};
use crate::linalg::{self, LowerFactor};
use crate::rng::{self, NormalStream};
use crate::set_families::{subset_sign, IncrementSpec, IndexedSet, SetFamily};

/// Diagonal jitter schedule: `0`, then `initial`, `initial·growth`, … for
/// `max_attempts` jittered attempts. `initial` is relative to the mean diagonal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitterPolicy {
    pub initial_relative: f64,
    pub growth: f64,
    pub max_attempts: u32,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            initial_relative: 1e-12,
            growth: 10.0,
            max_attempts: 4,
        }
    }
}

impl JitterPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_relative > 0.0) || !(self.growth > 1.0) {
            return Err(Error::Argument(
                "jitter policy needs initial > 0 and growth > 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ColumnSource {
    Zero,
    Factor(usize),
}

/// Lower factor of the representative sub-Gram plus the column mapping.
#[derive(Clone, Debug)]
pub struct Factorization {
    factor: LowerFactor,
    columns: Vec<ColumnSource>,
    /// Absolute jitter added to the diagonal.
    pub jitter: f64,
    /// Initial jitter of the schedule, absolute.
    pub initial_jitter: f64,
}

impl Factorization {
    pub fn factor(&self) -> &LowerFactor {
        &self.factor
    }

    pub fn n(&self) -> usize {
        self.columns.len()
    }

    /// Whether the jitter had to grow beyond its initial value.
    pub fn escalated(&self) -> bool {
        self.jitter > self.initial_jitter
    }

    fn draw(&self, master_seed: u64, replicate: u64, out: &mut [f64]) {
        let k = self.factor.dim();
        let mut z = vec![0.0; k];
        NormalStream::new(rng::stream(master_seed, replicate)).fill(&mut z);
        let x = self.factor.apply(&z);
        for (slot, src) in out.iter_mut().zip(&self.columns) {
            *slot = match src {
                ColumnSource::Zero => 0.0,
                ColumnSource::Factor(i) => x[*i],
            };
        }
    }
}

/// Cholesky factor of `g + εI` for the first `ε` in the jitter schedule that works.
pub fn factorize(g: &GramMatrix, policy: JitterPolicy) -> Result<Factorization> {
    policy.validate()?;
    let a = g.entries();
    linalg::check_finite(a)?;
    let n = g.n();

    let mut columns = Vec::with_capacity(n);
    let mut reps: Vec<usize> = Vec::new();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    for i in 0..n {
        let row: Vec<u64> = (0..n).map(|j| a[(i, j)].to_bits()).collect();
        if row.iter().all(|b| f64::from_bits(*b) == 0.0) {
            columns.push(ColumnSource::Zero);
            continue;
        }
        let next = reps.len();
        let idx = *seen.entry(row).or_insert(next);
        if idx == next {
            reps.push(i);
        }
        columns.push(ColumnSource::Factor(idx));
    }
    let reduced = DMatrix::from_fn(reps.len(), reps.len(), |i, j| a[(reps[i], reps[j])]);
    let mean_diag = if reps.is_empty() {
        0.0
    } else {
        reduced.diagonal().sum() / reps.len() as f64
    };
    let initial_jitter = policy.initial_relative * mean_diag;

    let mut shift = 0.0;
    for attempt in 0..=policy.max_attempts {
        if attempt > 0 {
            shift = initial_jitter * policy.growth.powi(attempt as i32 - 1);
        }
        if let Ok(factor) = linalg::cholesky(&reduced, shift) {
            return Ok(Factorization {
                factor,
                columns,
                jitter: shift,
                initial_jitter,
            });
        }
    }
    Err(Error::NotPsd {
        min_eigenvalue: linalg::min_eigenvalue(&reduced)?,
    })
}

/// Replicate-major matrix of jointly Gaussian values on a family.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleEnsemble {
    values: Vec<f64>,
    columns: usize,
    replicates: usize,
    pub family_hash: String,
    pub kernel: Kernel,
    pub master_seed: u64,
    pub jitter: f64,
    pub jitter_escalated: bool,
}

impl SampleEnsemble {
    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn row(&self, replicate: usize) -> &[f64] {
        &self.values[replicate * self.columns..(replicate + 1) * self.columns]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.replicates).map(|r| self.values[r * self.columns + j]).collect()
    }

    pub fn get(&self, replicate: usize, column: usize) -> f64 {
        self.values[replicate * self.columns + column]
    }

    /// `replicate,<labels…>` header followed by one row per replicate.
    pub fn to_csv(&self, labels: &[String]) -> String {
        let mut out = String::from("replicate");
        for l in labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for r in 0..self.replicates {
            out.push_str(&r.to_string());
            for v in self.row(r) {
                out.push(',');
                out.push_str(&format_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "master_seed": self.master_seed,
            "replicates": self.replicates,
            "columns": self.columns,
            "kernel": self.kernel,
            "kernel_id": self.kernel.id(),
            "hurst": self.kernel.hurst_values(),
            "jitter": self.jitter,
            "jitter_escalated": self.jitter_escalated,
            "family_hash": self.family_hash,
            "generator": rng::GENERATOR,
            "normal_transform": rng::NORMAL_TRANSFORM,
        })
    }
}

/// Draws `replicates` samples using an existing factorization.
pub fn sample_with(
    g: &GramMatrix,
    fact: &Factorization,
    replicates: usize,
    master_seed: u64,
) -> Result<SampleEnsemble> {
    if replicates == 0 {
        return Err(Error::Argument("replicates must be at least 1".into()));
    }
    let n = fact.n();
    if n != g.n() {
        return Err(Error::Argument("factorization does not match the Gram matrix".into()));
    }
    let mut values = vec![0.0; replicates * n];
    values
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(r, out)| fact.draw(master_seed, r as u64, out));
    Ok(SampleEnsemble {
        values,
        columns: n,
        replicates,
        family_hash: g.family_hash().to_string(),
        kernel: g.kernel().clone(),
        master_seed,
        jitter: fact.jitter,
        jitter_escalated: fact.escalated(),
    })
}

pub fn sample(g: &GramMatrix, replicates: usize, master_seed: u64, policy: JitterPolicy) -> Result<SampleEnsemble> {
    let fact = factorize(g, policy)?;
    sample_with(g, &fact, replicates, master_seed)
}

/// Sets the family must contain to evaluate `ΔX_C`.
pub fn required_sets(c: &IncrementSpec) -> Result<Vec<IndexedSet>> {
    c.intersections()
}

/// Per-replicate `ΔX_C = Σ_S (−1)^{|S|} X_{U ∩ (∩_{i∈S} Uᵢ)}`.
pub fn increment_values(e: &SampleEnsemble, c: &IncrementSpec, family: &SetFamily) -> Result<Vec<f64>> {
    if family.len() != e.columns() {
        return Err(Error::Argument("ensemble and family sizes differ".into()));
    }
    let sets = required_sets(c)?;
    let mut missing = Vec::new();
    let mut terms = Vec::with_capacity(sets.len());
    for (mask, s) in sets.iter().enumerate() {
        match family.position(s) {
            Some(col) => terms.push((subset_sign(mask), col)),
            None => {
                let label = s.to_string();
                if !missing.contains(&label) {
                    missing.push(label);
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingSets(missing));
    }
    Ok((0..e.replicates())
        .map(|r| {
            let row = e.row(r);
            terms.iter().map(|(sign, col)| sign * row[*col]).sum()
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// `variance · √(2/(r−1))`, the Gaussian standard error of the variance.
    pub std_error_of_variance: f64,
}

pub fn empirical_moments(values: &[f64]) -> Result<Moments> {
    let r = values.len();
    if r < 2 {
        return Err(Error::Argument("moments need at least two values".into()));
    }
    let mean = values.iter().sum::<f64>() / r as f64;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    Ok(Moments {
        mean,
        variance,
        std_error_of_variance: variance * (2.0 / (r - 1) as f64).sqrt(),
    })
}

/// Empirical covariance of two columns (mean known to be zero).
pub fn empirical_cov_zero_mean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{gram, Hurst};

    fn r(c: &[f64]) -> IndexedSet {
        IndexedSet::rect(c.to_vec()).unwrap()
    }

    #[test]
    fn factor_of_scalar() {
        let g = GramMatrix::from_parts(DMatrix::from_element(1, 1, 4.0), Kernel::WhiteNoise, String::new()).unwrap();
        let f = factorize(&g, JitterPolicy::default()).unwrap();
        assert_eq!(f.factor().get(0, 0), 2.0);
        assert_eq!(f.jitter, 0.0);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let g = GramMatrix::from_parts(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            Kernel::WhiteNoise,
            String::new(),
        )
        .unwrap();
        match factorize(&g, JitterPolicy::default()) {
            Err(Error::NotPsd { min_eigenvalue }) => assert!((min_eigenvalue + 1.0).abs() < 1e-12),
            other => panic!("expected NotPsd, got {other:?}"),
        }
    }

    #[test]
    fn invalid_policy() {
        let g = GramMatrix::from_parts(DMatrix::from_element(1, 1, 1.0), Kernel::WhiteNoise, String::new()).unwrap();
        let policy = JitterPolicy {
            initial_relative: 0.0,
            ..JitterPolicy::default()
        };
        assert!(factorize(&g, policy).is_err());
    }

    #[test]
    fn duplicates_and_null_sets_are_exact() {
        let fam = SetFamily::with_duplicates(vec![r(&[0.5, 0.5]), r(&[0.0, 0.7]), r(&[0.5, 0.5]), r(&[0.9, 0.3])]).unwrap();
        let g = gram(&fam, &Kernel::Sifbm { hurst: Hurst::new(0.3).unwrap() }).unwrap();
        let e = sample(&g, 50, 3, JitterPolicy::default()).unwrap();
        assert_eq!(e.jitter, 0.0);
        for rep in 0..50 {
            assert_eq!(e.get(rep, 0), e.get(rep, 2));
            assert_eq!(e.get(rep, 1), 0.0);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let fam = SetFamily::rectangles(vec![vec![0.5, 0.5], vec![1.0, 0.3], vec![0.2, 0.9]]).unwrap();
        let g = gram(&fam, &Kernel::Sifbm { hurst: Hurst::new(0.4).unwrap() }).unwrap();
        let a = sample(&g, 100, 11, JitterPolicy::default()).unwrap();
        let b = sample(&g, 100, 11, JitterPolicy::default()).unwrap();
        let c = sample(&g, 100, 12, JitterPolicy::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.row(0), c.row(0));
        assert!(sample(&g, 0, 11, JitterPolicy::default()).is_err());
    }

    #[test]
    fn increments_of_nested_and_whole() {
        let (u, v) = (r(&[1.0, 1.0]), r(&[0.6, 0.8]));
        let fam = SetFamily::new(vec![u.clone(), v.clone()]).unwrap();
        let g = gram(&fam, &Kernel::Sifbm { hurst: Hurst::new(0.4).unwrap() }).unwrap();
        let e = sample(&g, 20, 5, JitterPolicy::default()).unwrap();
        let whole = increment_values(&e, &IncrementSpec::whole(u.clone()), &fam).unwrap();
        assert_eq!(whole, e.column(0));
        let nested = increment_values(&e, &IncrementSpec::new(u.clone(), vec![v]).unwrap(), &fam).unwrap();
        for rep in 0..20 {
            assert_eq!(nested[rep], e.get(rep, 0) - e.get(rep, 1));
        }
        let spec = IncrementSpec::new(u, vec![r(&[0.3, 1.0])]).unwrap();
        match increment_values(&e, &spec, &fam) {
            Err(Error::MissingSets(m)) => assert_eq!(m, vec!["[0, [0.3, 1.0]]".to_string()]),
            other => panic!("expected missing sets, got {other:?}"),
        }
    }

    #[test]
    fn moments() {
        let m = empirical_moments(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(m.variance, 0.0);
        assert_eq!(m.mean, 2.0);
        let m = empirical_moments(&[1.0, 3.0]).unwrap();
        assert_eq!(m.variance, 2.0);
        assert!((m.std_error_of_variance - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        assert!(empirical_moments(&[1.0]).is_err());
    }

    #[test]
    fn csv_layout() {
        let fam = SetFamily::rectangles(vec![vec![1.0]]).unwrap();
        let g = gram(&fam, &Kernel::WhiteNoise).unwrap();
        let e = sample(&g, 2, 0, JitterPolicy::default()).unwrap();
        let csv = e.to_csv(&fam.labels());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "replicate,X0");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,"));
    }
}
