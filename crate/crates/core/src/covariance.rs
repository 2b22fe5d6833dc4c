//! Covariance kernels, Gram matrices and positive-semidefiniteness probing.
//!
//! The set-indexed fBm kernel is
//!
//! ```text
//! k(U, V) = ½ [ m(U)^{2H} + m(V)^{2H} − m(U △ V)^{2H} ]
//! ```
//!
//! which is positive semidefinite for `H ∈ (0, ½]`. Values of `H` above ½ are
//! only accepted through [`Hurst::probing`], for counterexample search.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;
use crate::set_families::{
    difference_measure, subset_sign, symdiff_measure, IncrementSpec, IndexedSet, Rectangle, SetFamily,
};

/// Hurst index `H`. Non-probing values lie in `(0, ½]`; probing values in `(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hurst {
    value: f64,
    probing: bool,
}

impl Hurst {
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0 && value <= 0.5) {
            return Err(Error::Hurst {
                value,
                reason: "must lie in (0, 1/2] unless probing",
            });
        }
        Ok(Self { value, probing: false })
    }

    pub fn probing(value: f64) -> Result<Self> {
        if !(value > 0.0 && value < 1.0) {
            return Err(Error::Hurst {
                value,
                reason: "must lie in (0, 1)",
            });
        }
        Ok(Self { value, probing: true })
    }

    /// Non-probing when possible, probing otherwise.
    pub fn any(value: f64) -> Result<Self> {
        Self::new(value).or_else(|_| Self::probing(value))
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_probing(&self) -> bool {
        self.probing
    }

    pub fn half() -> Self {
        Self {
            value: 0.5,
            probing: false,
        }
    }
}

/// `x^{2H}` with `0^{2H} = 0`.
#[inline]
pub fn pow2h(x: f64, h: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.powf(2.0 * h)
    }
}

fn check_open_unit(h: f64) -> Result<()> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(Error::Hurst {
            value: h,
            reason: "must lie in (0, 1)",
        })
    }
}

/// Set-indexed fBm covariance.
pub fn sifbm_cov(a: &IndexedSet, b: &IndexedSet, h: Hurst) -> Result<f64> {
    let h = h.value;
    let d = symdiff_measure(a, b)?;
    Ok(0.5 * (pow2h(a.measure(), h) + pow2h(b.measure(), h) - pow2h(d, h)))
}

/// Alternative kernel `½[m(a)^{2H} + m(b)^{2H} − m(b∖a)^{2H} − m(a∖b)^{2H}]`.
///
/// Nothing guarantees this is a covariance; it is evaluated for PSD probing.
pub fn sifbm_cov_alt(a: &IndexedSet, b: &IndexedSet, h: Hurst) -> Result<f64> {
    let h = h.value;
    let b_minus_a = difference_measure(b, a)?;
    let a_minus_b = difference_measure(a, b)?;
    Ok(0.5 * (pow2h(a.measure(), h) + pow2h(b.measure(), h) - pow2h(b_minus_a, h) - pow2h(a_minus_b, h)))
}

/// Covariance of the nested pair `U ⊆ V` for a self-similar, increment-stationary process (K = ½).
pub fn nested_cov(u: &IndexedSet, v: &IndexedSet, h: Hurst) -> Result<f64> {
    let h = h.value;
    let diff = difference_measure(v, u)?;
    Ok(0.5 * (pow2h(u.measure(), h) + pow2h(v.measure(), h) - pow2h(diff, h)))
}

fn check_points(s: &[f64], t: &[f64]) -> Result<()> {
    if s.len() != t.len() {
        return Err(Error::Context(format!("points of dimension {} and {}", s.len(), t.len())));
    }
    Ok(())
}

/// Lévy fractional Brownian motion: `½[‖s‖^{2H} + ‖t‖^{2H} − ‖t−s‖^{2H}]`.
pub fn levy_cov(s: &[f64], t: &[f64], h: f64) -> Result<f64> {
    check_points(s, t)?;
    check_open_unit(h)?;
    let norm = |x: &mut dyn Iterator<Item = f64>| x.map(|v| v * v).sum::<f64>().sqrt();
    let ns = norm(&mut s.iter().copied());
    let nt = norm(&mut t.iter().copied());
    let nd = norm(&mut s.iter().zip(t).map(|(a, b)| b - a));
    Ok(0.5 * (pow2h(ns, h) + pow2h(nt, h) - pow2h(nd, h)))
}

/// Fractional Brownian sheet: `∏ᵢ ½[sᵢ^{2Hᵢ} + tᵢ^{2Hᵢ} − |tᵢ−sᵢ|^{2Hᵢ}]`.
///
/// A single-entry `h` applies to every axis.
pub fn sheet_cov(s: &[f64], t: &[f64], h: &[f64]) -> Result<f64> {
    check_points(s, t)?;
    if h.len() != 1 && h.len() != s.len() {
        return Err(Error::Context(format!(
            "{} sheet indices for dimension {}",
            h.len(),
            s.len()
        )));
    }
    let mut prod = 1.0;
    for (i, (a, b)) in s.iter().zip(t).enumerate() {
        let hi = if h.len() == 1 { h[0] } else { h[i] };
        check_open_unit(hi)?;
        prod *= 0.5 * (pow2h(*a, hi) + pow2h(*b, hi) - pow2h((b - a).abs(), hi));
    }
    Ok(prod)
}

/// Classical one-parameter fBm covariance.
pub fn fbm_cov(s: f64, t: f64, h: f64) -> f64 {
    0.5 * (pow2h(s, h) + pow2h(t, h) - pow2h((t - s).abs(), h))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelId {
    Sifbm,
    SifbmAlt,
    Levy,
    Sheet,
    WhiteNoise,
}

impl KernelId {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelId::Sifbm => "sifbm",
            KernelId::SifbmAlt => "sifbm_alt",
            KernelId::Levy => "levy",
            KernelId::Sheet => "sheet",
            KernelId::WhiteNoise => "white_noise",
        }
    }
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "sifbm" => Ok(KernelId::Sifbm),
            "sifbm_alt" => Ok(KernelId::SifbmAlt),
            "levy" => Ok(KernelId::Levy),
            "sheet" => Ok(KernelId::Sheet),
            "white_noise" => Ok(KernelId::WhiteNoise),
            other => Err(Error::Argument(format!("unknown kernel '{other}'"))),
        }
    }
}

/// A kernel together with its index parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "snake_case")]
pub enum Kernel {
    Sifbm { hurst: Hurst },
    SifbmAlt { hurst: Hurst },
    Levy { hurst: f64 },
    Sheet { hurst: Vec<f64> },
    WhiteNoise,
}

impl Kernel {
    /// Builds a kernel from an id and a scalar index. White noise ignores `h`.
    pub fn from_id(id: KernelId, h: f64) -> Result<Self> {
        Ok(match id {
            KernelId::Sifbm => Kernel::Sifbm { hurst: Hurst::any(h)? },
            KernelId::SifbmAlt => Kernel::SifbmAlt { hurst: Hurst::any(h)? },
            KernelId::Levy => {
                check_open_unit(h)?;
                Kernel::Levy { hurst: h }
            }
            KernelId::Sheet => {
                check_open_unit(h)?;
                Kernel::Sheet { hurst: vec![h] }
            }
            KernelId::WhiteNoise => Kernel::WhiteNoise,
        })
    }

    pub fn id(&self) -> KernelId {
        match self {
            Kernel::Sifbm { .. } => KernelId::Sifbm,
            Kernel::SifbmAlt { .. } => KernelId::SifbmAlt,
            Kernel::Levy { .. } => KernelId::Levy,
            Kernel::Sheet { .. } => KernelId::Sheet,
            Kernel::WhiteNoise => KernelId::WhiteNoise,
        }
    }

    /// Index parameters as a list (one entry except for an anisotropic sheet).
    pub fn hurst_values(&self) -> Vec<f64> {
        match self {
            Kernel::Sifbm { hurst } | Kernel::SifbmAlt { hurst } => vec![hurst.value],
            Kernel::Levy { hurst } => vec![*hurst],
            Kernel::Sheet { hurst } => hurst.clone(),
            Kernel::WhiteNoise => vec![0.5],
        }
    }

    pub fn eval(&self, a: &IndexedSet, b: &IndexedSet) -> Result<f64> {
        match self {
            Kernel::Sifbm { hurst } => sifbm_cov(a, b, *hurst),
            Kernel::SifbmAlt { hurst } => sifbm_cov_alt(a, b, *hurst),
            Kernel::WhiteNoise => Ok(a.intersect(b)?.measure()),
            Kernel::Levy { hurst } => {
                let (s, t) = corners(a, b)?;
                levy_cov(s.corner(), t.corner(), *hurst)
            }
            Kernel::Sheet { hurst } => {
                let (s, t) = corners(a, b)?;
                sheet_cov(s.corner(), t.corner(), hurst)
            }
        }
    }
}

fn corners<'a>(a: &'a IndexedSet, b: &'a IndexedSet) -> Result<(&'a Rectangle, &'a Rectangle)> {
    match (a.as_rect(), b.as_rect()) {
        (Some(s), Some(t)) => Ok((s, t)),
        _ => Err(Error::Context("point kernels need rectangle families".into())),
    }
}

/// Symmetric kernel matrix of a family with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
    kernel: Kernel,
    family_hash: String,
}

impl GramMatrix {
    pub fn from_parts(entries: DMatrix<f64>, kernel: Kernel, family_hash: String) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::Argument("Gram matrix must be square".into()));
        }
        Ok(Self {
            entries,
            kernel,
            family_hash,
        })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn kernel_id(&self) -> KernelId {
        self.kernel.id()
    }

    pub fn family_hash(&self) -> &str {
        &self.family_hash
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn max_diagonal(&self) -> f64 {
        self.entries.diagonal().iter().cloned().fold(0.0, f64::max)
    }

    pub fn mean_diagonal(&self) -> f64 {
        if self.n() == 0 {
            0.0
        } else {
            self.entries.diagonal().sum() / self.n() as f64
        }
    }

    /// `wᵀ G w`.
    pub fn quadratic_form(&self, w: &[f64]) -> f64 {
        let n = self.n();
        (0..n)
            .map(|i| w[i] * (0..n).map(|j| self.entries[(i, j)] * w[j]).sum::<f64>())
            .sum()
    }

    /// Row-major CSV with a provenance comment line and labelled header.
    pub fn to_csv(&self, labels: &[String]) -> String {
        let mut out = format!(
            "# kernel_id={} hurst={} family_hash={}\nlabel",
            self.kernel_id(),
            format_list(&self.kernel.hurst_values()),
            self.family_hash
        );
        for l in labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for i in 0..self.n() {
            out.push_str(&labels[i]);
            for j in 0..self.n() {
                out.push(',');
                out.push_str(&format_f64(self.entries[(i, j)]));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<f64>> = (0..self.n())
            .map(|i| (0..self.n()).map(|j| self.entries[(i, j)]).collect())
            .collect();
        serde_json::json!({
            "kernel": self.kernel,
            "kernel_id": self.kernel_id(),
            "family_hash": self.family_hash,
            "entries": rows,
        })
    }
}

/// Round-trip decimal formatting with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

/// Gram matrix of `family` under `kernel`. Only the upper triangle is evaluated.
pub fn gram(family: &SetFamily, kernel: &Kernel) -> Result<GramMatrix> {
    if family.is_empty() {
        return Err(Error::InvalidFamily("Gram matrix of an empty family".into()));
    }
    let sets = family.sets();
    let n = sets.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| kernel.eval(&sets[i], &sets[j])).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut entries = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            entries[(i, i + k)] = *v;
            entries[(i + k, i)] = *v;
        }
    }
    GramMatrix::from_parts(entries, kernel.clone(), family.hash())
}

/// Tolerance factor for [`psd_check`] used throughout (relative to the max diagonal).
pub const PSD_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdReport {
    pub psd: bool,
    pub min_eigenvalue: f64,
    pub max_diagonal: f64,
    /// `min_eigenvalue / max_diagonal`.
    pub relative_min_eigenvalue: f64,
    pub pivoted_cholesky_ok: bool,
    pub numerical_rank: Option<usize>,
}

/// Smallest eigenvalue test: PSD iff `λ_min ≥ −tol_scale · max diag`.
pub fn psd_check(g: &GramMatrix, tol_scale: f64) -> Result<PsdReport> {
    let min_eigenvalue = linalg::min_eigenvalue(&g.entries)?;
    let max_diagonal = g.max_diagonal();
    let tol = tol_scale * max_diagonal;
    let rank = linalg::pivoted_cholesky_rank(&g.entries, tol);
    Ok(PsdReport {
        psd: min_eigenvalue >= -tol,
        min_eigenvalue,
        max_diagonal,
        relative_min_eigenvalue: if max_diagonal > 0.0 {
            min_eigenvalue / max_diagonal
        } else {
            0.0
        },
        pivoted_cholesky_ok: rank.is_some(),
        numerical_rank: rank,
    })
}

/// Relative eigenvalue threshold below which a random family counts as a witness.
pub const WITNESS_THRESHOLD: f64 = 1e-6;
/// Corners are drawn uniformly from `[CORNER_LOW, 1]^dim`.
pub const CORNER_LOW: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub kernel: KernelId,
    pub hurst: f64,
    pub dim: usize,
    pub family_size_max: usize,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub family: SetFamily,
    pub trial: u64,
    pub min_eigenvalue: f64,
    pub relative_min_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub config: SearchConfig,
    pub trials_run: u64,
    pub witness: Option<Witness>,
}

/// Random family for search trial `trial`; depends only on `(seed, trial)`.
pub fn random_family(seed: u64, trial: u64, dim: usize, size_max: usize) -> SetFamily {
    let mut rng = rng::stream(seed, trial);
    let size = rng::uniform_usize(&mut rng, 2.min(size_max), size_max);
    let corners = (0..size)
        .map(|_| (0..dim).map(|_| rng::uniform_in(&mut rng, CORNER_LOW, 1.0)).collect())
        .collect();
    SetFamily::rectangles(corners).expect("random corners are valid and distinct")
}

/// Random search over rectangle families in `[0.05, 1]^dim` for a Gram matrix
/// with `λ_min < −1e-6 · max diag`.
///
/// Exhausting the budget is a legitimate outcome and returns no witness.
pub fn psd_counterexample_search(
    kernel: KernelId,
    h: Hurst,
    dim: usize,
    family_size_max: usize,
    trials: u64,
    seed: u64,
) -> Result<SearchOutcome> {
    if dim == 0 || family_size_max == 0 {
        return Err(Error::Argument("dim and family_size_max must be positive".into()));
    }
    let kernel_spec = match kernel {
        KernelId::Sifbm => Kernel::Sifbm { hurst: h },
        KernelId::SifbmAlt => Kernel::SifbmAlt { hurst: h },
        other => return Err(Error::Argument(format!("PSD search is for set kernels, not {other}"))),
    };
    let config = SearchConfig {
        kernel,
        hurst: h.value(),
        dim,
        family_size_max,
        trials,
        seed,
    };
    for trial in 0..trials {
        let family = random_family(seed, trial, dim, family_size_max);
        let g = gram(&family, &kernel_spec)?;
        let min_eigenvalue = linalg::min_eigenvalue(g.entries())?;
        let relative = min_eigenvalue / g.max_diagonal();
        if relative < -WITNESS_THRESHOLD {
            return Ok(SearchOutcome {
                config,
                trials_run: trial + 1,
                witness: Some(Witness {
                    family,
                    trial,
                    min_eigenvalue,
                    relative_min_eigenvalue: relative,
                }),
            });
        }
    }
    Ok(SearchOutcome {
        config,
        trials_run: trials,
        witness: None,
    })
}

/// Subtracted-set limit for the closed-form and Gram increment variances.
pub const INCREMENT_LIMIT: usize = 12;

fn guard(c: &IncrementSpec) -> Result<()> {
    if c.n() > INCREMENT_LIMIT {
        Err(Error::Complexity {
            n: c.n(),
            limit: INCREMENT_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// Closed-form `E[(ΔB_C)²]` for `C = U ∖ (U₁ ∪ … ∪ Uₙ)`, `n ≥ 1`:
///
/// ```text
/// − Σ_{S≠∅} (−1)^{|S|} m(U △ I_S)^{2H} − ½ Σ_{S,T≠∅} (−1)^{|S|+|T|} m(I_S △ I_T)^{2H}
/// ```
///
/// with `I_S = ∩_{p∈S} U_p`. Diagonal terms of the double sum vanish, so it is
/// evaluated over unordered pairs.
pub fn increment_variance_closed_form(c: &IncrementSpec, h: Hurst) -> Result<f64> {
    if c.n() == 0 {
        return Err(Error::Argument("closed form needs at least one subtracted set".into()));
    }
    guard(c)?;
    let h = h.value();
    let sets = c.intersections()?;
    let outer = c.outer();
    let mut first = 0.0;
    for (mask, s) in sets.iter().enumerate().skip(1) {
        first -= subset_sign(mask) * pow2h(symdiff_measure(outer, s)?, h);
    }
    let mut second = 0.0;
    for a in 1..sets.len() {
        let mut row = 0.0;
        for b in (a + 1)..sets.len() {
            row += subset_sign(b) * pow2h(symdiff_measure(&sets[a], &sets[b])?, h);
        }
        second -= subset_sign(a) * row;
    }
    Ok(first + second)
}

/// `E[(ΔX_C)²]` as `wᵀGw` over the `2ⁿ` intersection sets with signs `(−1)^{|S|}`.
pub fn increment_variance_via_gram(c: &IncrementSpec, h: Hurst) -> Result<f64> {
    guard(c)?;
    let sets = c.intersections()?;
    let weights: Vec<f64> = (0..sets.len()).map(subset_sign).collect();
    let family = SetFamily::with_duplicates(sets)?;
    let g = gram(&family, &Kernel::Sifbm { hurst: h })?;
    Ok(g.quadratic_form(&weights))
}

fn nested_parts(c: &IncrementSpec) -> Result<(&IndexedSet, &IndexedSet)> {
    match c.subtracted() {
        [v] => Ok((c.outer(), v)),
        _ => Err(Error::Argument(format!(
            "cross covariance needs C = U \\ V with one subtracted set, got {}",
            c.n()
        ))),
    }
}

/// `E[ΔB_{U∖V} ΔB_{U'∖V'}] = ½[m(U△V')^{2H} + m(V△U')^{2H} − m(U△U')^{2H} − m(V△V')^{2H}]`.
pub fn increment_cross_cov(c: &IncrementSpec, c2: &IncrementSpec, h: Hurst) -> Result<f64> {
    let (u, v) = nested_parts(c)?;
    let (u2, v2) = nested_parts(c2)?;
    let hv = h.value();
    let p = |a: &IndexedSet, b: &IndexedSet| symdiff_measure(a, b).map(|d| pow2h(d, hv));
    Ok(0.5 * (p(u, v2)? + p(v, u2)? - p(u, u2)? - p(v, v2)?))
}

/// Same covariance through `k(U,U') − k(U,V') − k(V,U') + k(V,V')`.
pub fn increment_cross_cov_via_gram(c: &IncrementSpec, c2: &IncrementSpec, h: Hurst) -> Result<f64> {
    let (u, v) = nested_parts(c)?;
    let (u2, v2) = nested_parts(c2)?;
    Ok(sifbm_cov(u, u2, h)? - sifbm_cov(u, v2, h)? - sifbm_cov(v, u2, h)? + sifbm_cov(v, v2, h)?)
}
