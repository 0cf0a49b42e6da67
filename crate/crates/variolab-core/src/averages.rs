//! Entangled bilinear averages on lattices, ergodic averages on finite
//! systems, square functions, truncated triangular Hilbert transforms and the
//! transference between sequences on ℤ² and piecewise-constant fields on ℝ².
//!
//! Every average is a weighted sum over the entangled offset `m`:
//! `A(x, y) = Σ_m w_m F(x + m h, y) G(x, y + m h)`, accumulated in ascending
//! `m` for every output point. Windows are zero-extended, periodic lattices
//! wrap; on periodic lattices the weights are folded modulo
//! `lcm(N1, N2)`, the period of the product in `m`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VarioError};
use crate::fields::{Field2D, Lattice2D, LatticeKind, TrialRng};
use crate::kernels::{smooth_step, Profile};
use crate::numerics::{lcm, pairwise_sum};

/// Memory allowed for cumulative-sum tables unless a caller says otherwise.
pub const DEFAULT_TABLE_BUDGET: usize = 512 << 20;

/// Two commuting bijections of `{0, …, size-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteSystem {
    size: usize,
    s_map: Vec<usize>,
    t_map: Vec<usize>,
    commutation_checked: bool,
}

fn check_permutation(map: &[usize], name: &str) -> Result<()> {
    let mut seen = vec![false; map.len()];
    for &v in map {
        if v >= map.len() || seen[v] {
            return Err(VarioError::InvalidValue(format!("{name} is not a permutation")));
        }
        seen[v] = true;
    }
    Ok(())
}

impl FiniteSystem {
    pub fn new(s_map: Vec<usize>, t_map: Vec<usize>) -> Result<Self> {
        if s_map.is_empty() || s_map.len() != t_map.len() {
            return Err(VarioError::Shape(format!(
                "maps must be nonempty and of equal size ({} vs {})",
                s_map.len(),
                t_map.len()
            )));
        }
        check_permutation(&s_map, "S")?;
        check_permutation(&t_map, "T")?;
        if let Some(x) = (0..s_map.len()).find(|&x| s_map[t_map[x]] != t_map[s_map[x]]) {
            return Err(VarioError::InvalidValue(format!("S and T do not commute at x = {x}")));
        }
        Ok(FiniteSystem { size: s_map.len(), s_map, t_map, commutation_checked: true })
    }

    /// Translations by `s_step` and `t_step` on `ℤ_a × ℤ_b`, point `(u, v)`
    /// stored at index `u * b + v`.
    pub fn translations(a: usize, b: usize, s_step: (usize, usize), t_step: (usize, usize)) -> Result<Self> {
        let shift = |(du, dv): (usize, usize)| -> Vec<usize> {
            (0..a * b).map(|x| ((x / b + du) % a) * b + (x % b + dv) % b).collect()
        };
        Self::new(shift(s_step), shift(t_step))
    }

    /// Conjugates both maps by the relabeling `x ↦ perm[x]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, "relabeling")?;
        if perm.len() != self.size {
            return Err(VarioError::Shape("relabeling has the wrong size".into()));
        }
        let mut inv = vec![0; self.size];
        for (x, &p) in perm.iter().enumerate() {
            inv[p] = x;
        }
        let conj = |map: &[usize]| (0..self.size).map(|y| perm[map[inv[y]]]).collect();
        Self::new(conj(&self.s_map), conj(&self.t_map))
    }

    /// Random translations on a random product of cyclic groups with at most
    /// `max_size` points, under a random relabeling.
    pub fn random(rng: &mut TrialRng, max_size: usize) -> Result<Self> {
        let max_size = max_size.max(1);
        let a = 1 + rng.below(max_size.min(32) as u64) as usize;
        let b = 1 + rng.below((max_size / a).max(1) as u64) as usize;
        let step = |rng: &mut TrialRng| (rng.below(a as u64) as usize, rng.below(b as u64) as usize);
        let s = step(rng);
        let t = step(rng);
        let base = Self::translations(a, b, s, t)?;
        let mut perm: Vec<usize> = (0..a * b).collect();
        for i in (1..perm.len()).rev() {
            let j = rng.below(i as u64 + 1) as usize;
            perm.swap(i, j);
        }
        base.relabeled(&perm)
    }

    pub fn size(&self) -> usize {
        self.size
    }
    pub fn s_map(&self) -> &[usize] {
        &self.s_map
    }
    pub fn t_map(&self) -> &[usize] {
        &self.t_map
    }
    pub fn commutation_checked(&self) -> bool {
        self.commutation_checked
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("system serializes")
    }

    /// Parses and re-validates a serialized system.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: FiniteSystem =
            serde_json::from_str(text).map_err(|e| VarioError::InvalidValue(format!("bad system: {e}")))?;
        Self::new(raw.s_map, raw.t_map)
    }
}

/// Strictly increasing positive scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleGrid {
    scales: Vec<f64>,
}

impl ScaleGrid {
    pub fn new(scales: Vec<f64>) -> Result<Self> {
        if scales.is_empty() {
            return Err(VarioError::InvalidValue("scale grid is empty".into()));
        }
        if scales.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(VarioError::InvalidValue("scales must be positive and finite".into()));
        }
        if scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(VarioError::InvalidValue("scales must be strictly increasing".into()));
        }
        Ok(ScaleGrid { scales })
    }

    pub fn integers(ns: &[usize]) -> Result<Self> {
        Self::new(ns.iter().map(|&n| n as f64).collect())
    }

    /// `2^k` for `k = k0..=k1`.
    pub fn dyadic(k0: i32, k1: i32) -> Result<Self> {
        Self::new((k0..=k1).map(|k| 2f64.powi(k)).collect())
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }
    pub fn len(&self) -> usize {
        self.scales.len()
    }
    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    /// The scales as counts, if all are integers.
    pub fn as_counts(&self) -> Option<Vec<usize>> {
        self.scales.iter().map(|&t| if t.fract() == 0.0 { Some(t as usize) } else { None }).collect()
    }
}

/// `M_n(f,g)(x) = (1/n) Σ_{i<n} f(S^i x) g(T^i x)`.
pub fn ergodic_double_average(sys: &FiniteSystem, f: &[f64], g: &[f64], n: usize) -> Result<Vec<f64>> {
    Ok(ergodic_double_averages(sys, f, g, &[n])?.pop().unwrap())
}

/// `M_n` for every requested `n`, from one pass of cumulative sums along
/// each orbit pair.
pub fn ergodic_double_averages(sys: &FiniteSystem, f: &[f64], g: &[f64], ns: &[usize]) -> Result<Vec<Vec<f64>>> {
    if f.len() != sys.size || g.len() != sys.size {
        return Err(VarioError::Shape(format!(
            "functions of length {} and {} on a system of size {}",
            f.len(),
            g.len(),
            sys.size
        )));
    }
    if ns.contains(&0) {
        return Err(VarioError::Domain("averages need n >= 1".into()));
    }
    let n_max = ns.iter().copied().max().unwrap_or(0);
    let mut out = vec![vec![0.0; sys.size]; ns.len()];
    for x in 0..sys.size {
        let (mut sx, mut tx) = (x, x);
        let mut acc = 0.0;
        let mut partial = vec![0.0; n_max + 1];
        for i in 0..n_max {
            acc += f[sx] * g[tx];
            partial[i + 1] = acc;
            sx = sys.s_map[sx];
            tx = sys.t_map[tx];
        }
        for (slot, &n) in ns.iter().enumerate() {
            out[slot][x] = partial[n] / n as f64;
        }
    }
    Ok(out)
}

fn check_pair(f: &Field2D, g: &Field2D) -> Result<()> {
    f.check_same(g)
}

/// Row-major index shifted along the first coordinate, or `None` outside a window.
#[inline]
fn shifted_row(x: usize, m: i64, n1: usize, periodic: bool) -> Option<usize> {
    let xs = x as i64 + m;
    if periodic {
        Some(xs.rem_euclid(n1 as i64) as usize)
    } else if xs >= 0 && xs < n1 as i64 {
        Some(xs as usize)
    } else {
        None
    }
}

/// Adds `w * F(x+m, y) G(x, y+m)` (lattice units) to `out` at every point.
fn accumulate_offset(f: &Field2D, g: &Field2D, m: i64, w: f64, out: &mut [f64]) {
    let (n1, n2) = f.lattice().dims();
    let periodic = f.lattice().periodic();
    let (fs, gs) = (f.samples(), g.samples());
    for x in 0..n1 {
        let Some(fr) = shifted_row(x, m, n1, periodic) else { continue };
        let frow = &fs[fr * n2..(fr + 1) * n2];
        let grow = &gs[x * n2..(x + 1) * n2];
        let orow = &mut out[x * n2..(x + 1) * n2];
        if periodic {
            let s = m.rem_euclid(n2 as i64) as usize;
            let split = n2 - s;
            for y in 0..split {
                orow[y] += w * (frow[y] * grow[y + s]);
            }
            for y in split..n2 {
                orow[y] += w * (frow[y] * grow[y + s - n2]);
            }
        } else {
            let lo = (-m).max(0) as usize;
            let hi = (n2 as i64 - m).clamp(0, n2 as i64) as usize;
            for y in lo..hi.max(lo) {
                orow[y] += w * (frow[y] * grow[(y as i64 + m) as usize]);
            }
        }
    }
}

/// Weighted entangled sum with weights `w[i]` at offset `first + i`.
fn entangled_sum(f: &Field2D, g: &Field2D, first: i64, weights: &[f64]) -> Vec<f64> {
    let (n1, n2) = f.lattice().dims();
    let mut out = vec![0.0; n1 * n2];
    if f.lattice().periodic() && weights.len() > lcm(n1, n2) {
        let period = lcm(n1, n2);
        let mut folded = vec![0.0; period];
        for (i, &w) in weights.iter().enumerate() {
            folded[(first + i as i64).rem_euclid(period as i64) as usize] += w;
        }
        for (m, &w) in folded.iter().enumerate() {
            accumulate_offset(f, g, m as i64, w, &mut out);
        }
    } else {
        for (i, &w) in weights.iter().enumerate() {
            accumulate_offset(f, g, first + i as i64, w, &mut out);
        }
    }
    out
}

/// `Ã_n(F̃,G̃)(k,l) = (1/n) Σ_{i<n} F̃(k+i,l) G̃(k,l+i)`, evaluated by the
/// defining sum at every point.
pub fn discrete_average_direct(f: &Field2D, g: &Field2D, n: usize) -> Result<Field2D> {
    check_pair(f, g)?;
    if n == 0 {
        return Err(VarioError::Domain("averages need n >= 1".into()));
    }
    let (n1, n2) = f.lattice().dims();
    let mut out = Vec::with_capacity(n1 * n2);
    for k in 0..n1 as i64 {
        for l in 0..n2 as i64 {
            let mut s = 0.0;
            for i in 0..n as i64 {
                s += f.get_ext(k + i, l) * g.get_ext(k, l + i);
            }
            out.push(s / n as f64);
        }
    }
    Field2D::new(*f.lattice(), out)
}

/// Per-point cumulative sums `P_{k,l}[m] = Σ_{i<m} F̃(k+i,l) G̃(k,l+i)` for
/// `m <= n_max`; stored point-major.
pub struct PrefixTable {
    lattice: Lattice2D,
    n_max: usize,
    cumulative: Vec<f64>,
}

impl PrefixTable {
    pub fn bytes_needed(lattice: &Lattice2D, n_max: usize) -> usize {
        lattice.len().saturating_mul(n_max + 1).saturating_mul(8)
    }

    pub fn build(f: &Field2D, g: &Field2D, n_max: usize, budget: usize) -> Result<Self> {
        check_pair(f, g)?;
        let need = Self::bytes_needed(f.lattice(), n_max);
        if need > budget {
            return Err(VarioError::Capacity(format!(
                "cumulative table needs {need} bytes, budget is {budget}"
            )));
        }
        let (n1, n2) = f.lattice().dims();
        let stride = n_max + 1;
        let mut cumulative = vec![0.0; n1 * n2 * stride];
        let mut products = vec![0.0; n1 * n2];
        for i in 0..n_max {
            products.iter_mut().for_each(|p| *p = 0.0);
            accumulate_offset(f, g, i as i64, 1.0, &mut products);
            for (p, &v) in products.iter().enumerate() {
                let base = p * stride;
                cumulative[base + i + 1] = cumulative[base + i] + v;
            }
        }
        Ok(PrefixTable { lattice: *f.lattice(), n_max, cumulative })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// `P_p[m]` at point index `p`.
    pub fn partial(&self, point: usize, m: usize) -> f64 {
        self.cumulative[point * (self.n_max + 1) + m]
    }

    /// `Ã_n` for `1 <= n <= n_max`.
    pub fn average(&self, n: usize) -> Result<Field2D> {
        if n == 0 || n > self.n_max {
            return Err(VarioError::Domain(format!("n = {n} outside 1..={}", self.n_max)));
        }
        let stride = self.n_max + 1;
        let out = (0..self.lattice.len()).map(|p| self.cumulative[p * stride + n] / n as f64).collect();
        Field2D::new(self.lattice, out)
    }
}

/// `Ã_n` for every requested `n`: one cumulative table when it fits in
/// `budget` bytes, otherwise one direct pass per `n`.
pub fn discrete_averages(f: &Field2D, g: &Field2D, ns: &[usize], budget: usize) -> Result<Vec<Field2D>> {
    check_pair(f, g)?;
    if ns.contains(&0) {
        return Err(VarioError::Domain("averages need n >= 1".into()));
    }
    let n_max = ns.iter().copied().max().unwrap_or(0);
    if PrefixTable::bytes_needed(f.lattice(), n_max) <= budget {
        let table = PrefixTable::build(f, g, n_max, budget)?;
        ns.iter().map(|&n| table.average(n)).collect()
    } else {
        ns.iter().map(|&n| discrete_average_direct(f, g, n)).collect()
    }
}

pub fn discrete_average(f: &Field2D, g: &Field2D, n: usize) -> Result<Field2D> {
    Ok(discrete_averages(f, g, &[n], DEFAULT_TABLE_BUDGET)?.pop().unwrap())
}

/// `A_t^φ(F,G)(x,y) = ∫ F(x+s,y) G(x,y+s) φ_t(s) ds` by the lattice weights
/// of the profile. For the indicator this is exact on cell-constant fields.
pub fn continuous_average_direct(f: &Field2D, g: &Field2D, profile: &Profile, t: f64) -> Result<Field2D> {
    check_pair(f, g)?;
    let (first, w) = profile.weights(t, f.lattice().spacing())?;
    Field2D::new(*f.lattice(), entangled_sum(f, g, first, &w))
}

/// Cumulative sums of the entangled products for the indicator profile,
/// answering `A_t` for any `t <= t_max` in O(1) per point.
pub struct IndicatorTable {
    prefix: PrefixTable,
    h: f64,
}

impl IndicatorTable {
    pub fn build(f: &Field2D, g: &Field2D, t_max: f64, budget: usize) -> Result<Self> {
        let h = f.lattice().spacing();
        if !(t_max >= h) {
            return Err(VarioError::Resolution(format!("scale {t_max} is below the lattice spacing {h}")));
        }
        let m_max = (t_max / h).floor() as usize + 1;
        Ok(IndicatorTable { prefix: PrefixTable::build(f, g, m_max, budget)?, h })
    }

    /// `(h P[M] + (t - M h) p_M) / t` with `M = ⌊t/h⌋`.
    pub fn average(&self, t: f64) -> Result<Field2D> {
        let h = self.h;
        if t < h * (1.0 - 1e-12) {
            return Err(VarioError::Resolution(format!("scale {t} is below the lattice spacing {h}")));
        }
        let m = (t / h).floor() as usize;
        if m + 1 > self.prefix.n_max() {
            return Err(VarioError::Domain(format!("scale {t} exceeds the table range")));
        }
        let frac = t - m as f64 * h;
        let lattice = self.prefix.lattice;
        let out = (0..lattice.len())
            .map(|p| {
                let full = self.prefix.partial(p, m);
                let last = self.prefix.partial(p, m + 1) - full;
                (h * full + frac * last) / t
            })
            .collect();
        Field2D::new(lattice, out)
    }
}

fn is_indicator(profile: &Profile) -> bool {
    profile.name() == "indicator"
}

/// `A_t^φ` for several scales; the indicator uses one cumulative table when it
/// fits in `budget`, other profiles use their weights.
pub fn continuous_averages(
    f: &Field2D,
    g: &Field2D,
    profile: &Profile,
    scales: &[f64],
    budget: usize,
) -> Result<Vec<Field2D>> {
    check_pair(f, g)?;
    let t_max = scales.iter().copied().fold(0.0, f64::max);
    let h = f.lattice().spacing();
    if is_indicator(profile)
        && t_max >= h
        && PrefixTable::bytes_needed(f.lattice(), (t_max / h).floor() as usize + 1) <= budget
    {
        let table = IndicatorTable::build(f, g, t_max, budget)?;
        scales.iter().map(|&t| table.average(t)).collect()
    } else {
        scales.iter().map(|&t| continuous_average_direct(f, g, profile, t)).collect()
    }
}

pub fn continuous_average(f: &Field2D, g: &Field2D, profile: &Profile, t: f64) -> Result<Field2D> {
    Ok(continuous_averages(f, g, profile, &[t], DEFAULT_TABLE_BUDGET)?.pop().unwrap())
}

fn check_mean_zero(psi: &Profile) -> Result<()> {
    if psi.mass().abs() > 1e-8 {
        return Err(VarioError::Precondition(format!(
            "square functions need a mean-zero kernel, {} has mass {}",
            psi.name(),
            psi.mass()
        )));
    }
    Ok(())
}

/// Per-scale averages `A_{2^j}^ψ(F,G)` for `j` in `j_range` (inclusive).
pub fn dyadic_averages(f: &Field2D, g: &Field2D, psi: &Profile, j_range: (i32, i32)) -> Result<Vec<Field2D>> {
    check_mean_zero(psi)?;
    if j_range.0 > j_range.1 {
        return Err(VarioError::Domain(format!("empty scale range {j_range:?}")));
    }
    (j_range.0..=j_range.1).map(|j| continuous_average_direct(f, g, psi, 2f64.powi(j))).collect()
}

/// Pointwise `(Σ_j a_j²)^{1/2}` with `j` ascending.
fn pointwise_l2(parts: &[Field2D], lattice: Lattice2D) -> Result<Field2D> {
    let mut acc = vec![0.0; lattice.len()];
    for p in parts {
        for (a, v) in acc.iter_mut().zip(p.samples()) {
            *a += v * v;
        }
    }
    Field2D::new(lattice, acc.into_iter().map(f64::sqrt).collect())
}

/// `S(F,G) = (Σ_{j} |A_{2^j}^ψ(F,G)|²)^{1/2}`.
pub fn square_function(f: &Field2D, g: &Field2D, psi: &Profile, j_range: (i32, i32)) -> Result<Field2D> {
    let parts = dyadic_averages(f, g, psi, j_range)?;
    pointwise_l2(&parts, *f.lattice())
}

/// `T_m(F,G) = Σ_{j=1}^{m} A_{2^j}^ψ(F,G)`.
pub fn truncated_tht(f: &Field2D, g: &Field2D, psi: &Profile, m: usize) -> Result<Field2D> {
    check_pair(f, g)?;
    check_mean_zero(psi)?;
    if m == 0 {
        return Ok(Field2D::zeros(*f.lattice()));
    }
    let parts = dyadic_averages(f, g, psi, (1, m as i32))?;
    Ok(sum_fields(&parts, *f.lattice()))
}

fn sum_fields(parts: &[Field2D], lattice: Lattice2D) -> Field2D {
    let mut acc = vec![0.0; lattice.len()];
    for p in parts {
        for (a, v) in acc.iter_mut().zip(p.samples()) {
            *a += v;
        }
    }
    Field2D::new(lattice, acc).expect("sums of finite fields are finite")
}

/// Norms of `T_m`, of the square function over the same scales, and of the
/// individual scales, for one input pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationReport {
    pub m: usize,
    pub tm_norm: f64,
    pub square_norm: f64,
    pub per_scale_norms: Vec<f64>,
    /// `‖T_m‖₂ / (‖F‖₄ ‖G‖₄)`.
    pub ratio: f64,
    /// `‖T_m‖₂ <= √m ‖S‖₂ (1 + 1e-12)`.
    pub certificate_holds: bool,
}

/// [`TruncationReport`] for every `m` in `ms`, sharing the per-scale averages.
pub fn truncation_reports(f: &Field2D, g: &Field2D, psi: &Profile, ms: &[usize]) -> Result<Vec<TruncationReport>> {
    check_pair(f, g)?;
    check_mean_zero(psi)?;
    let m_max = ms.iter().copied().max().unwrap_or(0);
    let parts = if m_max == 0 { Vec::new() } else { dyadic_averages(f, g, psi, (1, m_max as i32))? };
    let denom = f.lp_norm(4.0)? * g.lp_norm(4.0)?;
    let per_scale: Vec<f64> = parts.iter().map(|p| p.lp_norm(2.0)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(ms.len());
    for &m in ms {
        let lattice = *f.lattice();
        let (tm, sq) = if m == 0 {
            (Field2D::zeros(lattice), Field2D::zeros(lattice))
        } else {
            (sum_fields(&parts[..m], lattice), pointwise_l2(&parts[..m], lattice)?)
        };
        let tm_norm = tm.lp_norm(2.0)?;
        let square_norm = sq.lp_norm(2.0)?;
        let ratio = if denom > 0.0 { tm_norm / denom } else { 0.0 };
        out.push(TruncationReport {
            m,
            tm_norm,
            square_norm,
            per_scale_norms: per_scale[..m].to_vec(),
            ratio,
            certificate_holds: tm_norm <= (m as f64).sqrt() * square_norm * (1.0 + 1e-12),
        });
    }
    Ok(out)
}

/// Samples of a function of one variable on `x_i = origin + i h`, zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Field1D {
    pub origin: f64,
    pub h: f64,
    pub samples: Vec<f64>,
}

impl Field1D {
    pub fn new(origin: f64, h: f64, samples: Vec<f64>) -> Result<Self> {
        if !(h > 0.0) || samples.iter().any(|v| !v.is_finite()) {
            return Err(VarioError::InvalidValue("1-D field needs h > 0 and finite samples".into()));
        }
        Ok(Field1D { origin, h, samples })
    }

    pub fn get_ext(&self, i: i64) -> f64 {
        if i < 0 || i as usize >= self.samples.len() {
            0.0
        } else {
            self.samples[i as usize]
        }
    }

    /// Value at the grid point `origin + i h` for any integer `i`, given by
    /// an index into this field's own grid.
    fn at_point(&self, x: f64) -> f64 {
        let i = ((x - self.origin) / self.h).round() as i64;
        self.get_ext(i)
    }
}

fn check_1d(f: &Field1D, g: &Field1D) -> Result<()> {
    if f.h != g.h || f.origin != g.origin || f.samples.len() != g.samples.len() {
        return Err(VarioError::Shape("1-D fields must share their grid".into()));
    }
    if f.origin / f.h != (f.origin / f.h).round() {
        return Err(VarioError::Shape("1-D grid origin must be a multiple of the spacing".into()));
    }
    Ok(())
}

/// `Σ_m w_m f(x+mh) g(x-mh)` at the grid points of f.
fn one_dim_term(f: &Field1D, g: &Field1D, first: i64, w: &[f64]) -> Vec<f64> {
    let n = f.samples.len() as i64;
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            for (k, &wm) in w.iter().enumerate() {
                let m = first + k as i64;
                s += wm * (f.get_ext(i + m) * g.get_ext(i - m));
            }
            s
        })
        .collect()
}

/// `S̃(f,g)(x) = (Σ_j |∫ f(x+s) g(x-s) ψ_{2^j}(s) ds|²)^{1/2}` at the grid points of f.
pub fn one_dim_square_function(f: &Field1D, g: &Field1D, psi: &Profile, j_range: (i32, i32)) -> Result<Vec<f64>> {
    check_1d(f, g)?;
    check_mean_zero(psi)?;
    let mut acc = vec![0.0; f.samples.len()];
    for j in j_range.0..=j_range.1 {
        let (first, w) = psi.weights(2f64.powi(j), f.h)?;
        for (a, v) in acc.iter_mut().zip(one_dim_term(f, g, first, &w)) {
            *a += v * v;
        }
    }
    Ok(acc.into_iter().map(f64::sqrt).collect())
}

/// Both sides of the diagonal embedding inequality
/// `∫_{[-R,R)²} |A_j(F,G)|² >= ∫_{-R}^{R} |∫ f(z+s) g(z-s) ψ_{2^j}(s) ds|² dz`,
/// summed over `j`, for `F(x,y) = f(x-y) R^{-1/4} ϑ(y/R)` and
/// `G(x,y) = g(x-y) R^{-1/4} ϑ(x/R)` with `ϑ(s) = S(2 - |s|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingCheck {
    pub two_dim: f64,
    pub one_dim: f64,
    pub slack: f64,
}

fn embedding_cutoff(s: f64) -> f64 {
    smooth_step(2.0 - s.abs())
}

/// Evaluates both sides by direct summation; the 2-D side builds F and G on
/// a window covering `[-R,R)²` plus the kernel reach.
pub fn embedding_check(
    f: &Field1D,
    g: &Field1D,
    psi: &Profile,
    j_range: (i32, i32),
    radius: f64,
) -> Result<EmbeddingCheck> {
    check_1d(f, g)?;
    check_mean_zero(psi)?;
    let h = f.h;
    let half = (radius / h).round() as i64;
    if half as f64 * h != radius {
        return Err(VarioError::Domain("R must be a multiple of the spacing".into()));
    }
    let mut reach = 0i64;
    let mut weights = Vec::new();
    for j in j_range.0..=j_range.1 {
        let (first, w) = psi.weights(2f64.powi(j), h)?;
        reach = reach.max(first.abs()).max((first + w.len() as i64).abs());
        weights.push((first, w));
    }
    let lo = -half - reach - 1;
    let n = (2 * (half + reach + 1)) as usize;
    let lattice = Lattice2D::window(n, n, h)?;
    let scale = radius.powf(-0.25);
    let coord = |i: usize| (lo + i as i64) as f64 * h;
    let big_f = Field2D::from_fn(lattice, |a, b| {
        f.at_point(coord(a) - coord(b)) * scale * embedding_cutoff(coord(b) / radius)
    })?;
    let big_g = Field2D::from_fn(lattice, |a, b| {
        g.at_point(coord(a) - coord(b)) * scale * embedding_cutoff(coord(a) / radius)
    })?;
    let inside = |i: usize| {
        let c = lo + i as i64;
        c >= -half && c < half
    };
    let mut two = Vec::new();
    let mut one = Vec::new();
    for (first, w) in &weights {
        let avg = entangled_sum(&big_f, &big_g, *first, w);
        for a in (0..n).filter(|&a| inside(a)) {
            for b in (0..n).filter(|&b| inside(b)) {
                let v = avg[a * n + b];
                two.push(v * v * h * h);
            }
        }
        let term = one_dim_term(f, g, *first, w);
        for (i, v) in term.iter().enumerate() {
            let z = f.origin + i as f64 * h;
            if z >= -radius && z < radius {
                one.push(v * v * h);
            }
        }
        // points of [-R, R) outside the sample range of f and g contribute zero
    }
    let two_dim = pairwise_sum(&two);
    let one_dim = pairwise_sum(&one);
    Ok(EmbeddingCheck { two_dim, one_dim, slack: two_dim - one_dim })
}

/// Piecewise-constant fields on a spacing-`2^{-q}` subgrid built from
/// sequences on a ℤ² window:
/// `F(x,y) = F̃(⌊x+y⌋ - ⌊y⌋, ⌊y⌋)`, `G(x,y) = G̃(⌊x⌋, ⌊x+y⌋ - ⌊x⌋)`.
/// Sample `(a, b)` sits at `((a + origin.0) h, (b + origin.1) h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedPair {
    pub f: Field2D,
    pub g: Field2D,
    pub origin: (i64, i64),
    pub q: u32,
}

/// Largest embedded window, in samples.
pub const EMBED_SAMPLE_LIMIT: usize = 1 << 26;

fn check_sequence_window(f: &Field2D) -> Result<()> {
    let l = f.lattice();
    if l.kind() != LatticeKind::PlaneWindow || l.periodic() || l.spacing() != 1.0 {
        return Err(VarioError::Precondition("sequences must live on a zero-extended ℤ² window (spacing 1)".into()));
    }
    Ok(())
}

pub fn embed_sequences(ft: &Field2D, gt: &Field2D, q: u32) -> Result<EmbeddedPair> {
    check_pair(ft, gt)?;
    check_sequence_window(ft)?;
    if q > 10 {
        return Err(VarioError::Capacity(format!("subgrid level q = {q} is too fine")));
    }
    let r = 1i64 << q;
    let (n1, n2) = ft.lattice().dims();
    // supports: F in (-1, N1] × [0, N2), G in [0, N1) × (-1, N2]
    let m1 = (n1 as i64 + 2) * r;
    let m2 = (n2 as i64 + 2) * r;
    let samples = (m1 as usize).saturating_mul(m2 as usize);
    if samples > EMBED_SAMPLE_LIMIT {
        let mut suggest = q;
        while suggest > 0 && ((n1 + 2) << suggest) * ((n2 + 2) << suggest) > EMBED_SAMPLE_LIMIT {
            suggest -= 1;
        }
        return Err(VarioError::Capacity(format!(
            "embedding {n1}x{n2} at q = {q} needs {samples} samples; try q = {suggest}"
        )));
    }
    let origin = (-r, -r);
    let lattice = Lattice2D::window(m1 as usize, m2 as usize, 1.0 / r as f64)?;
    let f = Field2D::from_fn(lattice, |a, b| {
        let (x, y) = (a as i64 + origin.0, b as i64 + origin.1);
        let l = y.div_euclid(r);
        let i = (x + y).div_euclid(r);
        ft.get_ext(i - l, l)
    })?;
    let g = Field2D::from_fn(lattice, |a, b| {
        let (x, y) = (a as i64 + origin.0, b as i64 + origin.1);
        let k = x.div_euclid(r);
        let i = (x + y).div_euclid(r);
        gt.get_ext(k, i - k)
    })?;
    Ok(EmbeddedPair { f, g, origin, q })
}

impl EmbeddedPair {
    /// `A_n(F,G)(k + p h, l + p' h)` by the exact subgrid sum.
    pub fn average_at(&self, k: i64, l: i64, p: i64, p2: i64, n: usize) -> f64 {
        let r = 1i64 << self.q;
        let a = k * r + p - self.origin.0;
        let b = l * r + p2 - self.origin.1;
        let mut s = 0.0;
        for m in 0..(n as i64 * r) {
            s += self.f.get_ext(a + m, b) * self.g.get_ext(a, b + m);
        }
        s / (r as f64 * n as f64)
    }
}

/// Weights `a_i` with `A_n(F,G)(k+α,l+β) = (1/n) Σ_i a_i F̃(i-l,l) G̃(k,i-k)`,
/// by counting the subgrid cells of `[k+l+α+β, k+l+α+β+n)` inside `[i, i+1)`.
pub fn transference_coefficients(k: i64, l: i64, p: i64, p2: i64, n: usize, q: u32) -> Vec<(i64, f64)> {
    let r = 1i64 << q;
    let start = (k + l) * r + p + p2;
    let mut out: Vec<(i64, f64)> = Vec::new();
    for m in 0..(n as i64 * r) {
        let i = (start + m).div_euclid(r);
        match out.last_mut() {
            Some((j, c)) if *j == i => *c += 1.0,
            _ => out.push((i, 1.0)),
        }
    }
    out.into_iter().map(|(i, c)| (i, c / r as f64)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferenceReport {
    pub n: usize,
    /// `sup |A_n(F,G)(k+α,l+β) - Ã_n(F̃,G̃)(k,l)|`.
    pub sup_gap: f64,
    /// Largest ℓ²(k,l) norm of the gap over the sampled `(α, β)`.
    pub max_l2_gap: f64,
    /// `4/n · ‖F̃‖₄ ‖G̃‖₄`.
    pub l2_bound: f64,
    /// Points where the gap exceeds `(1/n) Σ_{i∈{0,1,n,n+1}} |F̃(k+i,l) G̃(k,l+i)|`.
    pub pointwise_violations: usize,
    /// Sampled `(α, β)` whose ℓ² gap exceeds the bound.
    pub l2_violations: usize,
}

/// Compares the continuous average of the embedded fields with the discrete
/// average on the sequence window for `α, β ∈ {0, h, …, 1-h}` sampled with the
/// given stride in subgrid steps.
pub fn transference_gap(ft: &Field2D, gt: &Field2D, n: usize, q: u32, stride: usize) -> Result<TransferenceReport> {
    check_pair(ft, gt)?;
    check_sequence_window(ft)?;
    let (n1, n2) = ft.lattice().dims();
    if n == 0 || n > n1.max(n2) {
        return Err(VarioError::Domain(format!("n = {n} must lie in 1..={}", n1.max(n2))));
    }
    let emb = embed_sequences(ft, gt, q)?;
    let disc = discrete_average_direct(ft, gt, n)?;
    let r = 1i64 << q;
    let l2_bound = 4.0 / n as f64 * ft.lp_norm(4.0)? * gt.lp_norm(4.0)?;
    let (mut sup_gap, mut max_l2_gap) = (0.0f64, 0.0f64);
    let (mut pointwise_violations, mut l2_violations) = (0, 0);
    let boundary = |k: i64, l: i64| -> f64 {
        [0i64, 1, n as i64, n as i64 + 1].iter().map(|&i| (ft.get_ext(k + i, l) * gt.get_ext(k, l + i)).abs()).sum::<f64>()
            / n as f64
    };
    let stride = stride.max(1) as i64;
    for p in (0..r).step_by(stride as usize) {
        for p2 in (0..r).step_by(stride as usize) {
            let mut sq = Vec::new();
            for k in -1..=n1 as i64 {
                for l in -1..=n2 as i64 {
                    let cont = emb.average_at(k, l, p, p2, n);
                    let d = if k >= 0 && l >= 0 && k < n1 as i64 && l < n2 as i64 {
                        disc.get(k as usize, l as usize)
                    } else {
                        0.0
                    };
                    let gap = (cont - d).abs();
                    sup_gap = sup_gap.max(gap);
                    if gap > boundary(k, l) * (1.0 + 1e-12) + 1e-14 {
                        pointwise_violations += 1;
                    }
                    sq.push(gap * gap);
                }
            }
            let l2 = pairwise_sum(&sq).sqrt();
            max_l2_gap = max_l2_gap.max(l2);
            if l2 > l2_bound * (1.0 + 1e-12) {
                l2_violations += 1;
            }
        }
    }
    Ok(TransferenceReport { n, sup_gap, max_l2_gap, l2_bound, pointwise_violations, l2_violations })
}

/// `F̃_{x,N}(k,l) = f(S^k T^l x)` and `G̃_{x,N}(k,l) = g(S^k T^l x)` on the
/// window `0 <= k, l < 2N`.
pub fn orbit_unroll(sys: &FiniteSystem, f: &[f64], g: &[f64], x: usize, big_n: usize) -> Result<(Field2D, Field2D)> {
    if f.len() != sys.size || g.len() != sys.size || x >= sys.size {
        return Err(VarioError::Shape("functions or base point do not match the system".into()));
    }
    if big_n == 0 {
        return Err(VarioError::Domain("orbit windows need N >= 1".into()));
    }
    let side = 2 * big_n;
    let mut points = vec![0usize; side * side];
    let mut row_start = x;
    for k in 0..side {
        let mut p = row_start;
        for l in 0..side {
            points[k * side + l] = p;
            p = sys.t_map[p];
        }
        row_start = sys.s_map[row_start];
    }
    let lattice = Lattice2D::window(side, side, 1.0)?;
    let ft = Field2D::new(lattice, points.iter().map(|&p| f[p]).collect())?;
    let gt = Field2D::new(lattice, points.iter().map(|&p| g[p]).collect())?;
    Ok((ft, gt))
}

/// Largest `|M_n(f,g)(S^k T^l x) - Ã_n(F̃_{x,N}, G̃_{x,N})(k,l)|` over all
/// base points, `0 <= k, l < N` and `1 <= n <= N`.
pub fn orbit_identity_residual(sys: &FiniteSystem, f: &[f64], g: &[f64], big_n: usize) -> Result<f64> {
    let ns: Vec<usize> = (1..=big_n).collect();
    let ergodic = ergodic_double_averages(sys, f, g, &ns)?;
    let mut worst = 0.0f64;
    for x in 0..sys.size {
        let (ft, gt) = orbit_unroll(sys, f, g, x, big_n)?;
        let side = 2 * big_n;
        let mut points = vec![0usize; side * side];
        let mut row_start = x;
        for k in 0..side {
            let mut p = row_start;
            for l in 0..side {
                points[k * side + l] = p;
                p = sys.t_map[p];
            }
            row_start = sys.s_map[row_start];
        }
        for (slot, &n) in ns.iter().enumerate() {
            let disc = discrete_average_direct(&ft, &gt, n)?;
            for k in 0..big_n {
                for l in 0..big_n {
                    let y = points[k * side + l];
                    worst = worst.max((ergodic[slot][y] - disc.get(k, l)).abs());
                }
            }
        }
    }
    Ok(worst)
}
