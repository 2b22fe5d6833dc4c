//! Flows `f(t) = [0, f̃(t)]` into the rectangles, the time change
//! `θ(t) = m[f(t)]`, and projections of set-indexed processes along flows.
//!
//! Along a flow the set-indexed fBm has covariance
//! `½{θ(s)^{2H} + θ(t)^{2H} − |θ(t) − θ(s)|^{2H}}`, i.e. it is a fractional
//! Brownian motion run on the clock `θ`.

use serde::{Deserialize, Serialize};

use crate::covariance::{fbm_cov, format_f64, gram, pow2h, GramMatrix, Hurst, Kernel};
use crate::error::{Error, Result};
use crate::sampler::{self, JitterPolicy, SampleEnsemble};
use crate::set_families::{IndexedSet, Rectangle, SetFamily};

/// Piecewise-linear increasing path `f̃ : [0, 1] → R^N_+`.
#[derive(Clone, Debug, PartialEq)]
pub struct Flow {
    times: Vec<f64>,
    corners: Vec<Vec<f64>>,
}

/// On-disk schema: `{ "knots": [[t, [c₁, …, c_N]], …] }`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowDoc {
    pub knots: Vec<(f64, Vec<f64>)>,
}

impl Flow {
    /// Knots must start at `t = 0`, end at `t = 1`, have strictly increasing
    /// times and componentwise nondecreasing, nonnegative corners.
    pub fn new(knots: Vec<(f64, Vec<f64>)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidFlow("need at least two knots".into()));
        }
        let dim = knots[0].1.len();
        if dim == 0 {
            return Err(Error::InvalidFlow("corners need dimension >= 1".into()));
        }
        if knots[0].0 != 0.0 || knots[knots.len() - 1].0 != 1.0 {
            return Err(Error::InvalidFlow("knot times must start at 0 and end at 1".into()));
        }
        for (k, (t, c)) in knots.iter().enumerate() {
            if c.len() != dim {
                return Err(Error::InvalidFlow(format!("knot {k} has dimension {}, expected {dim}", c.len())));
            }
            if c.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidFlow(format!("knot {k} has a negative or non-finite coordinate")));
            }
            if k > 0 {
                let (pt, pc) = &knots[k - 1];
                if !(t > pt) {
                    return Err(Error::InvalidFlow(format!("knot times not strictly increasing at {k}")));
                }
                if c.iter().zip(pc).any(|(a, b)| a < b) {
                    return Err(Error::InvalidFlow(format!("corner decreases between knots {} and {k}", k - 1)));
                }
            }
        }
        let (times, corners) = knots.into_iter().unzip();
        Ok(Self { times, corners })
    }

    /// `f̃(t) = t·α`.
    pub fn linear(alpha: Vec<f64>) -> Result<Self> {
        let zero = vec![0.0; alpha.len()];
        Self::new(vec![(0.0, zero), (1.0, alpha)])
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FlowDoc = serde_json::from_str(text)?;
        Self::new(doc.knots)
    }

    pub fn to_doc(&self) -> FlowDoc {
        FlowDoc {
            knots: self.times.iter().cloned().zip(self.corners.iter().cloned()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.corners[0].len()
    }

    pub fn knot_times(&self) -> &[f64] {
        &self.times
    }

    fn check_time(t: f64) -> Result<()> {
        if (0.0..=1.0).contains(&t) {
            Ok(())
        } else {
            Err(Error::Argument(format!("flow time {t} outside [0, 1]")))
        }
    }

    fn segment(&self, t: f64) -> usize {
        // Last knot index k with times[k] <= t, capped so that k + 1 exists.
        let k = self.times.partition_point(|x| *x <= t);
        k.saturating_sub(1).min(self.times.len() - 2)
    }

    /// `f̃(t)`.
    pub fn corner_at(&self, t: f64) -> Result<Vec<f64>> {
        Self::check_time(t)?;
        let k = self.segment(t);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = (t - t0) / (t1 - t0);
        Ok(self.corners[k]
            .iter()
            .zip(&self.corners[k + 1])
            .map(|(a, b)| if w == 0.0 { *a } else if w == 1.0 { *b } else { a + w * (b - a) })
            .collect())
    }

    /// `f(t) = [0, f̃(t)]`.
    pub fn set_at(&self, t: f64) -> Result<IndexedSet> {
        Rectangle::new(self.corner_at(t)?).map(IndexedSet::Rect)
    }

    /// Family `{f(tᵢ)}`; repeated sets are allowed (flat stretches of the flow).
    pub fn family(&self, ts: &[f64]) -> Result<SetFamily> {
        let sets = ts.iter().map(|t| self.set_at(*t)).collect::<Result<Vec<_>>>()?;
        let labels = ts.iter().map(|t| format!("t={}", format_f64(*t))).collect();
        SetFamily::with_duplicates(sets)?.with_labels(labels)
    }
}

/// `θ(t) = m[f(t)]`.
pub fn theta(flow: &Flow, t: f64) -> Result<f64> {
    Ok(flow.corner_at(t)?.iter().product())
}

/// Sampled time change with monotone inverse lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeChange {
    grid: Vec<(f64, f64)>,
}

impl TimeChange {
    pub fn sample(flow: &Flow, ts: &[f64]) -> Result<Self> {
        let grid = ts.iter().map(|t| theta(flow, *t).map(|th| (*t, th))).collect::<Result<Vec<_>>>()?;
        if grid.windows(2).any(|w| w[1].0 <= w[0].0 || w[1].1 < w[0].1) {
            return Err(Error::InvalidFlow("time-change grid is not monotone".into()));
        }
        Ok(Self { grid })
    }

    pub fn grid(&self) -> &[(f64, f64)] {
        &self.grid
    }

    /// Smallest grid-interpolated `t` with `θ(t) = value`, if in range.
    pub fn inverse(&self, value: f64) -> Option<f64> {
        let k = self.grid.partition_point(|(_, th)| *th < value);
        if k == 0 {
            return (self.grid.first()?.1 == value).then(|| self.grid[0].0);
        }
        let (t1, th1) = *self.grid.get(k)?;
        let (t0, th0) = self.grid[k - 1];
        Some(t0 + (value - th0) / (th1 - th0) * (t1 - t0))
    }
}

/// `½{θ(s)^{2H} + θ(t)^{2H} − |θ(t) − θ(s)|^{2H}}`.
pub fn projected_cov(flow: &Flow, s: f64, t: f64, h: Hurst) -> Result<f64> {
    let (ts, tt) = (theta(flow, s)?, theta(flow, t)?);
    Ok(fbm_cov(ts, tt, h.value()))
}

/// `n` equally spaced points `i/(n−1)` on `[0, 1]`.
pub fn uniform_grid(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Argument("a grid needs at least two points".into()));
    }
    Ok((0..n).map(|i| i as f64 / (n - 1) as f64).collect())
}

/// Samples of the set-indexed fBm on `{f(tᵢ)}`.
#[derive(Clone, Debug)]
pub struct FlowSample {
    pub ts: Vec<f64>,
    pub thetas: Vec<f64>,
    pub family: SetFamily,
    pub gram: GramMatrix,
    pub ensemble: SampleEnsemble,
}

impl FlowSample {
    /// Columns `t`, `theta`, then one column per replicate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,theta");
        for r in 0..self.ensemble.replicates() {
            out.push_str(&format!(",r{r}"));
        }
        out.push('\n');
        for (i, (t, th)) in self.ts.iter().zip(&self.thetas).enumerate() {
            out.push_str(&format_f64(*t));
            out.push(',');
            out.push_str(&format_f64(*th));
            for r in 0..self.ensemble.replicates() {
                out.push(',');
                out.push_str(&format_f64(self.ensemble.get(r, i)));
            }
            out.push('\n');
        }
        out
    }

    /// Max `|G_ij − ½[θᵢ^{2H} + θⱼ^{2H} − |θᵢ − θⱼ|^{2H}]|`.
    pub fn flow_cov_residual(&self, h: Hurst) -> f64 {
        max_abs_deviation(&self.gram, |i, j| fbm_cov(self.thetas[i], self.thetas[j], h.value()))
    }

    /// Path of replicate `r` in grid order.
    pub fn path(&self, r: usize) -> &[f64] {
        self.ensemble.row(r)
    }
}

pub(crate) fn max_abs_deviation(g: &GramMatrix, expected: impl Fn(usize, usize) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..g.n() {
        for j in 0..g.n() {
            worst = worst.max((g.get(i, j) - expected(i, j)).abs());
        }
    }
    worst
}

/// Builds `{f(tᵢ)}`, its set-indexed fBm Gram, and samples it.
pub fn sample_along_flow(flow: &Flow, ts: &[f64], h: Hurst, replicates: usize, seed: u64) -> Result<FlowSample> {
    let family = flow.family(ts)?;
    let thetas = ts.iter().map(|t| theta(flow, *t)).collect::<Result<Vec<_>>>()?;
    let gram = gram(&family, &Kernel::Sifbm { hurst: h })?;
    let ensemble = sampler::sample(&gram, replicates, seed, JitterPolicy::default())?;
    Ok(FlowSample {
        ts: ts.to_vec(),
        thetas,
        family,
        gram,
        ensemble,
    })
}

/// `t`-grid on which `θ` is uniformly spaced: `θ(tⱼ) = θ(0) + j·(θ(1) − θ(0))/m`
/// for `j = 1..=m`.
///
/// Fails if `θ` is flat on some knot interval.
pub fn invert_time_change(flow: &Flow, m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::Argument("grid size must be positive".into()));
    }
    let knot_theta = flow
        .times
        .iter()
        .map(|t| theta(flow, *t))
        .collect::<Result<Vec<_>>>()?;
    for k in 0..knot_theta.len() - 1 {
        if !(knot_theta[k + 1] > knot_theta[k]) {
            return Err(Error::FlatTimeChange {
                start: flow.times[k],
                end: flow.times[k + 1],
            });
        }
    }
    let (lo, hi) = (knot_theta[0], knot_theta[knot_theta.len() - 1]);
    (1..=m)
        .map(|j| {
            let target = if j == m { hi } else { lo + (hi - lo) * j as f64 / m as f64 };
            let k = knot_theta.partition_point(|th| *th < target).clamp(1, knot_theta.len() - 1);
            bisect(flow, target, flow.times[k - 1], flow.times[k])
        })
        .collect()
}

/// Solves `θ(t) = target` on `[a, b]` where `θ` is strictly increasing.
fn bisect(flow: &Flow, target: f64, mut a: f64, mut b: f64) -> Result<f64> {
    if theta(flow, b)? == target {
        return Ok(b);
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if theta(flow, mid)? < target {
            a = mid;
        } else {
            b = mid;
        }
    }
    // Closer endpoint.
    let (ea, eb) = ((theta(flow, a)? - target).abs(), (theta(flow, b)? - target).abs());
    Ok(if ea <= eb { a } else { b })
}

/// Minimum number of grid points accepted by [`holder_estimate`].
pub const HOLDER_MIN_POINTS: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    /// Half the log-log slope of mean squared increments against lag.
    pub exponent: f64,
    /// True when the exponent is at least 1: the path is smooth at the probed
    /// scales and outside the fBm regime.
    pub outside_fbm_regime: bool,
    pub lags: Vec<usize>,
    pub mean_squared_increments: Vec<f64>,
    pub replicates: usize,
}

/// Dyadic second-moment regression.
///
/// With `L = ⌊log₂ n⌋`, for `k ∈ [⌈L/2⌉, L]` the lag is `⌊n/2^k⌋` samples
/// (scale ≈ `2^{-k}`), i.e. the finest dyadic scales from one sample up to ≈ `√n`.
/// Squared increments at each lag are averaged over all positions and all
/// replicates, and `log(mean)` is regressed on `log(lag)`.
pub fn holder_estimate(paths: &[&[f64]]) -> Result<HolderEstimate> {
    let n = paths.first().map(|p| p.len()).unwrap_or(0);
    if n < HOLDER_MIN_POINTS {
        return Err(Error::Argument(format!(
            "Hölder estimation needs at least {HOLDER_MIN_POINTS} points, got {n}"
        )));
    }
    if paths.iter().any(|p| p.len() != n) {
        return Err(Error::Argument("paths have different lengths".into()));
    }
    let log_n = (n as f64).log2().floor() as usize;
    let mut lags = Vec::new();
    let mut msq = Vec::new();
    for k in log_n.div_ceil(2)..=log_n {
        let lag = n >> k;
        let mut sum = 0.0;
        let mut count = 0usize;
        for p in paths {
            for i in 0..n - lag {
                let d = p[i + lag] - p[i];
                sum += d * d;
            }
            count += n - lag;
        }
        let mean = sum / count as f64;
        if !(mean > 0.0) {
            return Err(Error::Undefined(format!("zero increments at lag {lag}")));
        }
        lags.push(lag);
        msq.push(mean);
    }
    let xs: Vec<f64> = lags.iter().map(|l| (*l as f64).ln()).collect();
    let ys: Vec<f64> = msq.iter().map(|m| m.ln()).collect();
    let slope = ols_slope(&xs, &ys);
    let exponent = slope / 2.0;
    Ok(HolderEstimate {
        exponent,
        outside_fbm_regime: exponent >= 1.0 - 1e-6,
        lags,
        mean_squared_increments: msq,
        replicates: paths.len(),
    })
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Residual threshold below which a projection counts as a time-changed fBm.
pub const FBM_FORM_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelProjection {
    pub kernel: String,
    /// Max `|K(s,t) − ½[θ̂(s)^{2H} + θ̂(t)^{2H} − |θ̂(t) − θ̂(s)|^{2H}]| / max diag`,
    /// with `θ̂(t) = K(t,t)^{1/(2H)}` fitted from the diagonal.
    pub residual: f64,
    pub is_time_changed_fbm: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub hurst: f64,
    pub grid: Vec<f64>,
    pub projections: Vec<KernelProjection>,
}

impl ComparisonReport {
    pub fn residual(&self, kernel: &str) -> Option<f64> {
        self.projections.iter().find(|p| p.kernel == kernel).map(|p| p.residual)
    }
}

fn fbm_form_residual(cov: &[Vec<f64>], h: f64) -> f64 {
    let n = cov.len();
    let fitted: Vec<f64> = (0..n).map(|i| cov[i][i].max(0.0).powf(1.0 / (2.0 * h))).collect();
    let scale = (0..n).map(|i| cov[i][i]).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let predicted = 0.5 * (pow2h(fitted[i], h) + pow2h(fitted[j], h) - pow2h((fitted[j] - fitted[i]).abs(), h));
            worst = worst.max((cov[i][j] - predicted).abs());
        }
    }
    if scale > 0.0 {
        worst / scale
    } else {
        worst
    }
}

/// Projects the set-indexed fBm, Lévy fBm and fractional Brownian sheet (isotropic
/// index `h`) along `flow` at grid points `ts` and tests each covariance for the
/// time-changed fBm form.
pub fn comparison_on_flows(flow: &Flow, h: f64, ts: &[f64]) -> Result<ComparisonReport> {
    if flow.dim() < 2 {
        return Err(Error::Argument("kernel comparison needs a flow in dimension >= 2".into()));
    }
    let family = flow.family(ts)?;
    let kernels = [
        ("sifbm", Kernel::Sifbm { hurst: Hurst::any(h)? }),
        ("levy", Kernel::from_id(crate::covariance::KernelId::Levy, h)?),
        ("sheet", Kernel::from_id(crate::covariance::KernelId::Sheet, h)?),
    ];
    let mut projections = Vec::new();
    for (name, kernel) in kernels {
        let g = gram(&family, &kernel)?;
        let cov: Vec<Vec<f64>> = (0..g.n()).map(|i| (0..g.n()).map(|j| g.get(i, j)).collect()).collect();
        let residual = fbm_form_residual(&cov, h);
        projections.push(KernelProjection {
            kernel: name.to_string(),
            residual,
            is_time_changed_fbm: residual < FBM_FORM_TOLERANCE,
        });
    }
    Ok(ComparisonReport {
        hurst: h,
        grid: ts.to_vec(),
        projections,
    })
}
