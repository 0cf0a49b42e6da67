//! ϱ-variation, ε-jump counts, long/short splitting of a scale grid and the
//! per-octave variation bounds for differentiable curves.

use rayon::prelude::*;

use crate::error::{Result, VarioError};
use crate::fields::Field2D;
use crate::numerics::squared_distance;

/// Symmetric matrix of pairwise distances `d(i, j)` along a curve.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    len: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    fn from_rows(len: usize, rows: Vec<Vec<f64>>) -> Self {
        let mut entries = vec![0.0; len * len];
        for (i, row) in rows.into_iter().enumerate() {
            for (off, d) in row.into_iter().enumerate() {
                let j = i + 1 + off;
                entries[i * len + j] = d;
                entries[j * len + i] = d;
            }
        }
        DistanceMatrix { len, entries }
    }

    pub fn scalars(values: &[f64]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VarioError::InvalidValue("curve values must be finite".into()));
        }
        let n = values.len();
        let rows = (0..n).map(|i| values[i + 1..].iter().map(|b| (b - values[i]).abs()).collect()).collect();
        Ok(Self::from_rows(n, rows))
    }

    /// Weighted L² distances between fields on one lattice; rows are
    /// computed in parallel, each entry independently.
    pub fn fields(values: &[Field2D]) -> Result<Self> {
        if let Some(first) = values.first() {
            for v in &values[1..] {
                first.check_same(v)?;
            }
        }
        let n = values.len();
        let w = values.first().map(|f| f.lattice().cell_weight()).unwrap_or(1.0);
        let rows = (0..n)
            .into_par_iter()
            .map(|i| {
                values[i + 1..]
                    .iter()
                    .map(|b| (squared_distance(values[i].samples(), b.samples()) * w).sqrt())
                    .collect()
            })
            .collect();
        Ok(Self::from_rows(n, rows))
    }

    /// From an explicit full matrix, which must be symmetric with zero diagonal.
    pub fn from_full(len: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != len * len {
            return Err(VarioError::Shape(format!("{} entries for a {len}x{len} matrix", entries.len())));
        }
        for i in 0..len {
            if entries[i * len + i] != 0.0 {
                return Err(VarioError::InvalidValue("distance matrix diagonal must vanish".into()));
            }
            for j in 0..i {
                let d = entries[i * len + j];
                if !(d >= 0.0) || !d.is_finite() || d != entries[j * len + i] {
                    return Err(VarioError::InvalidValue(format!("bad distance at ({i}, {j})")));
                }
            }
        }
        Ok(DistanceMatrix { len, entries })
    }

    pub fn len(&self) -> usize {
        self.len
    }
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.len + j]
    }

    /// Matrix of the sub-curve at the given indices.
    pub fn restrict(&self, indices: &[usize]) -> DistanceMatrix {
        let n = indices.len();
        let entries = indices.iter().flat_map(|&i| indices.iter().map(move |&j| (i, j))).map(|(i, j)| self.get(i, j)).collect();
        DistanceMatrix { len: n, entries }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationReport {
    pub rho: f64,
    /// `V^ϱ`.
    pub value: f64,
    /// Strictly increasing indices attaining the supremum.
    pub optimal_partition: Vec<usize>,
    /// `d(t_{j-1}, t_j)` along the optimal partition.
    pub jump_sizes: Vec<f64>,
    /// `(ε, J(ε))` for every requested ε.
    pub jump_counts: Vec<(f64, usize)>,
}

impl VariationReport {
    /// `Σ_j d^ϱ` along `optimal_partition`, accumulated left to right.
    pub fn partition_sum(&self) -> f64 {
        self.jump_sizes.iter().fold(0.0, |acc, d| acc + d.powf(self.rho))
    }

    /// One `from,to,jump` row per jump of the optimal partition.
    pub fn partition_csv(&self) -> String {
        let mut out = String::from("from,to,jump\n");
        for (w, d) in self.optimal_partition.windows(2).zip(&self.jump_sizes) {
            out.push_str(&format!("{},{},{:e}\n", w[0], w[1], d));
        }
        out
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho >= 1.0) || !rho.is_finite() {
        return Err(VarioError::Domain(format!("variation exponent must be >= 1, got {rho}")));
    }
    Ok(())
}

/// `(Σ d^ϱ)` maximized over increasing index chains, with the maximizing chain.
fn best_chain(dist: &DistanceMatrix, rho: f64) -> (f64, Vec<usize>) {
    let m = dist.len();
    if m == 0 {
        return (0.0, Vec::new());
    }
    let mut best = vec![0.0f64; m];
    let mut prev = vec![usize::MAX; m];
    for j in 1..m {
        for i in 0..j {
            let cand = best[i] + dist.get(i, j).powf(rho);
            if cand > best[j] {
                best[j] = cand;
                prev[j] = i;
            }
        }
    }
    let mut end = 0;
    for j in 1..m {
        if best[j] > best[end] {
            end = j;
        }
    }
    let mut chain = vec![end];
    while prev[*chain.last().unwrap()] != usize::MAX {
        chain.push(prev[*chain.last().unwrap()]);
    }
    chain.reverse();
    (best[end], chain)
}

/// Exact `V^ϱ` of a curve given by its distance matrix, with `J(ε)` for each ε.
pub fn variation_report(dist: &DistanceMatrix, rho: f64, eps: &[f64]) -> Result<VariationReport> {
    check_rho(rho)?;
    if dist.is_empty() {
        return Err(VarioError::InvalidValue("variation of an empty curve".into()));
    }
    let (total, chain) = best_chain(dist, rho);
    let jump_sizes: Vec<f64> = chain.windows(2).map(|w| dist.get(w[0], w[1])).collect();
    let jump_counts = eps.iter().map(|&e| Ok((e, epsilon_jumps_matrix(dist, e)?))).collect::<Result<_>>()?;
    Ok(VariationReport { rho, value: total.powf(1.0 / rho), optimal_partition: chain, jump_sizes, jump_counts })
}

pub fn variation(values: &[f64], rho: f64) -> Result<VariationReport> {
    variation_report(&DistanceMatrix::scalars(values)?, rho, &[])
}

pub fn field_variation(values: &[Field2D], rho: f64) -> Result<VariationReport> {
    variation_report(&DistanceMatrix::fields(values)?, rho, &[])
}

/// Largest `J` with `m₁ < n₁ <= m₂ < n₂ <= …` and `d(m_j, n_j) >= ε`.
///
/// Taking each jump at the earliest index where one becomes available is
/// optimal: any valid family can have its first jump replaced by the earliest
/// possible one without blocking the rest.
pub fn epsilon_jumps_matrix(dist: &DistanceMatrix, eps: f64) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(VarioError::Domain(format!("ε must be positive, got {eps}")));
    }
    let mut count = 0;
    let mut start = 0;
    let m = dist.len();
    let mut n = start + 1;
    while n < m {
        if (start..n).any(|i| dist.get(i, n) >= eps) {
            count += 1;
            start = n;
        }
        n += 1;
    }
    Ok(count)
}

pub fn epsilon_jumps(values: &[f64], eps: f64) -> Result<usize> {
    epsilon_jumps_matrix(&DistanceMatrix::scalars(values)?, eps)
}

/// Scales grouped by octave `[2^i, 2^{i+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct LongShortSplit {
    /// `2^i` for every octave from the lowest occupied one to one past the highest.
    pub long: Vec<f64>,
    /// Per occupied octave: `(i, [2^i, scales in the octave…, 2^{i+1}])`.
    pub short: Vec<(i32, Vec<f64>)>,
}

impl LongShortSplit {
    /// Sorted union of the long grid and all short lists.
    pub fn refinement(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.long.iter().chain(self.short.iter().flat_map(|s| s.1.iter())).copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }
}

fn octave_of(t: f64) -> i32 {
    let mut i = t.log2().floor() as i32;
    // correct log2 rounding at exact powers of two
    if 2f64.powi(i) > t {
        i -= 1;
    } else if 2f64.powi(i + 1) <= t {
        i += 1;
    }
    i
}

pub fn long_short_split(scales: &[f64]) -> Result<LongShortSplit> {
    if scales.is_empty() || scales.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(VarioError::InvalidValue("scales must be positive and finite".into()));
    }
    let mut sorted = scales.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let lo = octave_of(sorted[0]);
    let hi = octave_of(*sorted.last().unwrap());
    let long = (lo..=hi + 1).map(|i| 2f64.powi(i)).collect();
    let mut short: Vec<(i32, Vec<f64>)> = Vec::new();
    for &t in &sorted {
        let i = octave_of(t);
        if short.last().map(|s| s.0) != Some(i) {
            short.push((i, vec![2f64.powi(i)]));
        }
        let list = &mut short.last_mut().unwrap().1;
        if *list.last().unwrap() != t {
            list.push(t);
        }
    }
    for (i, list) in &mut short {
        list.push(2f64.powi(*i + 1));
    }
    Ok(LongShortSplit { long, short })
}

/// `(V²(full)², V²(long)², Σ_i V²(short_i)²)` for the scalar curve `a` on the
/// scales and their split.
pub fn long_short_parts(a: impl Fn(f64) -> f64, scales: &[f64]) -> Result<(f64, f64, f64)> {
    let split = long_short_split(scales)?;
    let sq = |ts: &[f64]| -> Result<f64> {
        let vals: Vec<f64> = ts.iter().map(|&t| a(t)).collect();
        Ok(variation(&vals, 2.0)?.value.powi(2))
    };
    let mut sorted = scales.to_vec();
    sorted.sort_by(f64::total_cmp);
    let full = sq(&sorted)?;
    let long = sq(&split.long)?;
    let mut short = 0.0;
    for (_, list) in &split.short {
        short += sq(list)?;
    }
    Ok((full, long, short))
}

/// Constant used when reassembling full variation from its long and short parts.
pub const LONG_SHORT_CONSTANT: f64 = 9.0;

/// Samples of a curve and its derivative on one octave.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    pub t: Vec<f64>,
    pub a: Vec<f64>,
    pub da: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OctaveBounds {
    /// `sup Σ |a(t_j) - a(t_{j-1})|²` over partitions of the sample points.
    pub lhs: f64,
    /// `‖a‖_{L²(dt/t)} ‖t a′‖_{L²(dt/t)}`.
    pub rhs_product: f64,
    /// `‖t a′‖²_{L²(dt/t)}`.
    pub rhs_square: f64,
    /// Estimated quadrature error of `rhs_square`.
    pub quadrature_error: f64,
    /// `lhs / rhs_product`, zero when both vanish.
    pub product_constant: f64,
}

impl OctaveBounds {
    pub fn square_slack(&self) -> f64 {
        self.rhs_square + self.quadrature_error - self.lhs
    }
}

/// Trapezoid and, on uniform grids with an even number of intervals, Simpson.
fn integrate_samples(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = t.len();
    let trap: f64 = (1..n).map(|i| 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1])).sum();
    let h = (t[n - 1] - t[0]) / (n - 1) as f64;
    let uniform = (1..n).all(|i| ((t[i] - t[i - 1]) - h).abs() <= 1e-9 * h);
    if uniform && n >= 3 && (n - 1) % 2 == 0 {
        let mut s = y[0] + y[n - 1];
        for (i, v) in y.iter().enumerate().take(n - 1).skip(1) {
            s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        let simpson = s * h / 3.0;
        (simpson, (simpson - trap).abs())
    } else {
        (trap, (trap / (n as f64)).abs())
    }
}

/// Both sides of the octave bounds `sup Σ|Δa|² ≲ ‖a‖‖ta′‖` and
/// `sup Σ|Δa|² <= ‖ta′‖²`, norms in `L²(dt/t)` by quadrature on the samples.
pub fn octave_bounds(curve: &SampledCurve) -> Result<OctaveBounds> {
    let SampledCurve { t, a, da } = curve;
    let n = t.len();
    if n < 2 || a.len() != n || da.len() != n {
        return Err(VarioError::Shape("curve needs at least two samples of t, a and a′".into()));
    }
    if t.windows(2).any(|w| w[1] <= w[0]) || !(t[0] > 0.0) {
        return Err(VarioError::InvalidValue("sample points must be positive and increasing".into()));
    }
    let i = octave_of(t[0]);
    if t[n - 1] > 2f64.powi(i + 1) * (1.0 + 1e-15) {
        return Err(VarioError::Domain(format!("samples span more than the octave [2^{i}, 2^{}]", i + 1)));
    }
    let steps: Vec<(f64, f64)> =
        (1..n).map(|k| (a[k] - a[k - 1], 0.5 * (t[k] - t[k - 1]) * (da[k] + da[k - 1]))).collect();
    let scale = steps.iter().fold(0.0f64, |m, s| m.max(s.0.abs()).max(s.1.abs()));
    let worst = steps.iter().fold(0.0f64, |m, s| m.max((s.0 - s.1).abs()));
    if worst > 1e-2 * scale + 1e-300 {
        return Err(VarioError::Precondition(format!(
            "derivative samples disagree with the values (mismatch {worst:e} against step scale {scale:e})"
        )));
    }
    let lhs = variation(a, 2.0)?.value.powi(2);
    let a_sq: Vec<f64> = t.iter().zip(a).map(|(t, v)| v * v / t).collect();
    let d_sq: Vec<f64> = t.iter().zip(da).map(|(t, d)| t * d * d).collect();
    let (a_norm_sq, _) = integrate_samples(t, &a_sq);
    let (rhs_square, quadrature_error) = integrate_samples(t, &d_sq);
    let rhs_product = a_norm_sq.max(0.0).sqrt() * rhs_square.max(0.0).sqrt();
    let product_constant = if lhs == 0.0 { 0.0 } else { lhs / rhs_product };
    Ok(OctaveBounds { lhs, rhs_product, rhs_square, quadrature_error, product_constant })
}
