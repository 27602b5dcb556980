//! Poisson point process sampling and Poisson moment machinery.
//!
//! Sampling is deterministic per `(seed, replica, unit lattice cell)`: a
//! window is sampled cell by cell, each cell with its own counter-mode rng
//! stream. Two consequences the estimators rely on:
//!
//! * nested windows agree (enlarging the window never changes the points
//!   already sampled), so stabilization across growing boxes can be observed
//!   on a single realization, and
//! * different estimators evaluated on the same replica see the same
//!   pattern (common random numbers).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::geometry::{Cuboid, DyadicBox, PointPattern};
use crate::real::Real;
use crate::{Error, Result};

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix_chain(seed: u64, words: &[u64]) -> u64 {
    let mut h = splitmix(seed);
    for &w in words {
        h = splitmix(h ^ w.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }
    h
}

/// Deterministic Poisson point process sampler.
#[derive(Clone, Copy, Debug)]
pub struct PppSampler {
    seed: u64,
}

const STREAM_CELL: u64 = 0x_43454C4C; // distinct stream tags per use
const STREAM_WORD: u64 = 0x_574F5244;
const STREAM_AUX: u64 = 0x_41555830;

impl PppSampler {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn rng(&self, words: &[u64]) -> ChaCha8Rng {
        let h = mix_chain(self.seed, words);
        let mut key = [0u8; 32];
        let mut s = h;
        for chunk in key.chunks_mut(8) {
            s = splitmix(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }

    /// Auxiliary stream for a replica, for uses outside cell sampling.
    pub fn aux_rng(&self, replica: u64, tag: u64) -> ChaCha8Rng {
        self.rng(&[STREAM_AUX, replica, tag])
    }

    /// Shift word of the given length, fair coin per component.
    pub fn gamma_word(&self, replica: u64, len: usize, dim: usize) -> Vec<[u8; 3]> {
        let mut rng = self.rng(&[STREAM_WORD, replica]);
        (0..len)
            .map(|_| {
                let mut g = [0u8; 3];
                for slot in g.iter_mut().take(dim) {
                    *slot = u8::from(rng.gen::<bool>());
                }
                g
            })
            .collect()
    }

    /// Points of a rate-`intensity` Poisson process in one unit lattice cell.
    fn sample_cell<R: Real>(&self, replica: u64, z: [i64; 3], dim: usize, intensity: f64, out: &mut PointPattern<R>) -> Result<()> {
        let mut rng = self.rng(&[
            STREAM_CELL,
            replica,
            z[0] as u64,
            z[1] as u64,
            z[2] as u64,
        ]);
        let n = if intensity > 0.0 {
            let poi = Poisson::new(intensity)
                .map_err(|_| Error::InvalidPattern(format!("bad intensity {intensity}")))?;
            poi.sample(&mut rng) as u64
        } else {
            0
        };
        for _ in 0..n {
            let mut x = [R::zero(); 3];
            for (k, slot) in x.iter_mut().enumerate().take(dim) {
                *slot = R::of(z[k] as f64 + rng.gen::<f64>());
            }
            out.push(x, 1)?;
        }
        Ok(())
    }

    /// Poisson pattern of the given intensity on an integer window,
    /// assembled cell by cell so that nested windows agree exactly.
    pub fn sample_window<R: Real>(
        &self,
        replica: u64,
        lo: [i64; 3],
        hi: [i64; 3],
        dim: usize,
        intensity: f64,
    ) -> Result<PointPattern<R>> {
        if !(intensity >= 0.0) || !intensity.is_finite() {
            return Err(Error::InvalidPattern(format!("bad intensity {intensity}")));
        }
        for k in 0..dim {
            if hi[k] <= lo[k] {
                return Err(Error::InvalidPattern(format!("empty window on axis {k}")));
            }
        }
        let mut pat = PointPattern::new(dim, 1)?;
        let span = |k: usize| if k < dim { lo[k]..hi[k] } else { 0..1 };
        for zx in span(0) {
            for zy in span(1) {
                for zz in span(2) {
                    self.sample_cell(replica, [zx, zy, zz], dim, intensity, &mut pat)?;
                }
            }
        }
        Ok(pat)
    }

    pub fn sample_box<R: Real>(&self, replica: u64, bx: &DyadicBox, intensity: f64) -> Result<PointPattern<R>> {
        self.sample_window(replica, bx.lower(), bx.upper(), bx.dim(), intensity)
    }

    pub fn sample_cuboid<R: Real>(&self, replica: u64, c: &Cuboid, intensity: f64) -> Result<PointPattern<R>> {
        self.sample_window(replica, c.lo, c.hi, c.dim, intensity)
    }
}

/// Independent thinning: keep each point with probability `keep`.
pub fn thin<R: Real>(pat: &PointPattern<R>, keep: f64, rng: &mut ChaCha8Rng) -> Result<PointPattern<R>> {
    if !(0.0..=1.0).contains(&keep) {
        return Err(Error::InvalidPattern(format!("keep probability {keep} outside [0, 1]")));
    }
    let mut out = PointPattern::new(pat.dim(), pat.denom())?;
    for i in 0..pat.len() {
        if rng.gen::<f64>() < keep {
            out.push(pat.point(i), pat.mult(i))?;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Poisson moments.

const MOMENT_MAX_ORDER: u32 = 20;

/// `E[Z^n]` for `Z ~ Poisson(alpha)` by the Touchard recursion
/// `T_{n+1} = alpha * sum_k C(n,k) T_k`.
pub fn poisson_raw_moment(alpha: f64, n: u32) -> Result<f64> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("bad rate {alpha}")));
    }
    if n > MOMENT_MAX_ORDER {
        return Err(Error::Domain(format!("moment order {n} exceeds {MOMENT_MAX_ORDER}")));
    }
    let n = n as usize;
    // Pascal triangle up to row n.
    let mut binom = vec![vec![0f64; n + 1]; n + 1];
    for (i, row) in binom.iter_mut().enumerate() {
        row[0] = 1.0;
        for j in 1..=i {
            row[j] = if j == i { 1.0 } else { 0.0 };
        }
    }
    for i in 2..=n {
        for j in 1..i {
            binom[i][j] = binom[i - 1][j - 1] + binom[i - 1][j];
        }
    }
    let mut t = vec![0f64; n + 1];
    t[0] = 1.0;
    for m in 0..n {
        let mut s = 0.0;
        for k in 0..=m {
            s += binom[m][k] * t[k];
        }
        t[m + 1] = alpha * s;
    }
    Ok(t[n])
}

/// Summation horizon for Poisson series: covers the bulk plus a wide tail.
fn series_horizon(alpha: f64) -> u64 {
    (alpha + 16.0 * alpha.sqrt() + 64.0).ceil() as u64
}

/// `E[f(Z)]` for `Z ~ Poisson(alpha)` by direct series summation.
pub fn poisson_expectation(alpha: f64, mut f: impl FnMut(u64) -> f64) -> Result<f64> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("bad rate {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(f(0));
    }
    let mut w = (-alpha).exp();
    if w == 0.0 {
        return Err(Error::Domain(format!("rate {alpha} too large for series weights")));
    }
    let mut acc = 0.0;
    let horizon = series_horizon(alpha);
    for k in 0..=horizon {
        if k > 0 {
            w *= alpha / k as f64;
        }
        acc += w * f(k);
    }
    Ok(acc)
}

/// `E[Z^p]` for real `p >= 0` (series).
pub fn poisson_power_moment(alpha: f64, p: f64) -> Result<f64> {
    if !(p >= 0.0) {
        return Err(Error::Domain(format!("power {p} must be nonnegative")));
    }
    poisson_expectation(alpha, |k| (k as f64).powf(p))
}

/// Central moment `E[(Z - alpha)^p]` for integer `p` via the binomial
/// expansion over raw moments.
pub fn poisson_central_moment(alpha: f64, p: u32) -> Result<f64> {
    let mut acc = 0.0;
    let mut binom = 1.0f64;
    for j in 0..=p {
        if j > 0 {
            binom = binom * (p - j + 1) as f64 / j as f64;
        }
        let sign = if (p - j) % 2 == 0 { 1.0 } else { -1.0 };
        acc += binom * poisson_raw_moment(alpha, j)? * sign * alpha.powi((p - j) as i32);
    }
    Ok(acc)
}

/// Absolute central moment `E[|Z - alpha|^p]` for real `p` (series).
pub fn poisson_abs_central_moment(alpha: f64, p: f64) -> Result<f64> {
    if !(p >= 0.0) {
        return Err(Error::Domain(format!("power {p} must be nonnegative")));
    }
    poisson_expectation(alpha, |k| (k as f64 - alpha).abs().powf(p))
}

/// Truncated inverse moment `E[Z^-p ; Z > 0]` (series).
pub fn poisson_inverse_moment(alpha: f64, p: f64) -> Result<f64> {
    if !(p >= 0.0) {
        return Err(Error::Domain(format!("power {p} must be nonnegative")));
    }
    poisson_expectation(alpha, |k| if k == 0 { 0.0 } else { (k as f64).powf(-p) })
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |a, k| a * k as f64)
}

/// `ceil(p)^p`, the constant in the raw moment bound.
pub fn raw_moment_constant(p: f64) -> f64 {
    p.ceil().powf(p)
}

/// `(ceil(p) + 1)!`, the constant in the truncated inverse moment bound.
pub fn inverse_moment_constant(p: f64) -> f64 {
    factorial(p.ceil() as u32 + 1)
}

/// `2^(p-1) * (2 ceil(p/2) - 1)!`, the constant in the central moment bound.
pub fn central_moment_constant(p: f64) -> f64 {
    2f64.powf(p - 1.0) * factorial(2 * (p / 2.0).ceil() as u32 - 1)
}

/// One verified moment inequality: computed value, bound, and its constant.
#[derive(Clone, Copy, Debug)]
pub struct MomentBound {
    pub value: f64,
    pub bound: f64,
    pub constant: f64,
}

impl MomentBound {
    pub fn holds(&self) -> bool {
        self.value <= self.bound * (1.0 + 1e-12)
    }
}

/// Moment inequalities for `Z ~ Poisson(alpha)`:
/// `E[Z^p]         <= ceil(p)^p * max(alpha, alpha^p)`,
/// `E[Z^-p; Z > 0] <= (ceil(p)+1)! * alpha^-p`,
/// `E[|Z-alpha|^p] <= 2^(p-1) (2 ceil(p/2) - 1)! * max(alpha, alpha^(p/2))`.
#[derive(Clone, Copy, Debug)]
pub struct MomentReport {
    pub p: f64,
    pub alpha: f64,
    pub raw: MomentBound,
    pub inverse: MomentBound,
    pub central: MomentBound,
}

impl MomentReport {
    pub fn all_hold(&self) -> bool {
        self.raw.holds() && self.inverse.holds() && self.central.holds()
    }
}

pub fn check_moment_bounds(alpha: f64, p: f64) -> Result<MomentReport> {
    if !(p > 0.0) {
        return Err(Error::Domain(format!("power {p} must be positive")));
    }
    let raw = poisson_power_moment(alpha, p)?;
    let inverse = poisson_inverse_moment(alpha, p)?;
    let central = poisson_abs_central_moment(alpha, p)?;
    let c1 = raw_moment_constant(p);
    let c2 = inverse_moment_constant(p);
    let c3 = central_moment_constant(p);
    Ok(MomentReport {
        p,
        alpha,
        raw: MomentBound { value: raw, bound: c1 * alpha.max(alpha.powf(p)), constant: c1 },
        inverse: MomentBound { value: inverse, bound: c2 * alpha.powf(-p), constant: c2 },
        central: MomentBound {
            value: central,
            bound: c3 * alpha.max(alpha.powf(p / 2.0)),
            constant: c3,
        },
    })
}

/// Large deviation rate `I_b(t) = t ln(t / b) - t + b` of Poisson(`b`),
/// continuously extended by `I_b(0) = b`.
pub fn rate_function(b: f64, t: f64) -> Result<f64> {
    if !(b > 0.0) || !(t >= 0.0) {
        return Err(Error::Domain(format!("rate function needs b > 0, t >= 0; got b={b}, t={t}")));
    }
    if t == 0.0 {
        return Ok(b);
    }
    Ok(t * (t / b).ln() - t + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DyadicBox;

    #[test]
    fn sampling_is_deterministic() {
        let s = PppSampler::new(42);
        let a: PointPattern<f64> = s.sample_window(3, [0, 0, 0], [2, 2, 0], 2, 1.0).unwrap();
        let b: PointPattern<f64> = s.sample_window(3, [0, 0, 0], [2, 2, 0], 2, 1.0).unwrap();
        assert_eq!(a, b);
        let c: PointPattern<f64> = s.sample_window(4, [0, 0, 0], [2, 2, 0], 2, 1.0).unwrap();
        assert!(a != c || a.len() != c.len());
    }

    #[test]
    fn nested_windows_agree() {
        // The small window's points are exactly the large window's points
        // restricted to it.
        let s = PppSampler::new(7);
        let small: PointPattern<f64> = s.sample_window(0, [0, 0, 0], [2, 2, 0], 2, 2.0).unwrap();
        let large: PointPattern<f64> = s.sample_window(0, [-2, -1, 0], [4, 3, 0], 2, 2.0).unwrap();
        let region = Cuboid { dim: 2, lo: [0, 0, 0], hi: [2, 2, 0] };
        let (restricted, _) = large.restrict_to(&region);
        assert_eq!(small.len(), restricted.len());
        let mut a: Vec<_> = small.points().to_vec();
        let mut b: Vec<_> = restricted.points().to_vec();
        let key = |p: &[f64; 3]| (p[0].to_bits(), p[1].to_bits());
        a.sort_by_key(key);
        b.sort_by_key(key);
        assert_eq!(a, b);
    }

    #[test]
    fn counts_match_poisson_mean() {
        // 400 replicas on a 4-cell window at intensity 1.5: mean 6, sd ~ 0.12.
        let s = PppSampler::new(11);
        let mut total = 0usize;
        let reps = 400u64;
        for r in 0..reps {
            let p: PointPattern<f64> = s.sample_window(r, [0, 0, 0], [4, 1, 0], 1, 1.5).unwrap();
            total += p.len();
        }
        let mean = total as f64 / reps as f64;
        assert!((mean - 6.0).abs() < 0.5, "{mean}");
    }

    #[test]
    fn points_land_in_their_cells() {
        let s = PppSampler::new(5);
        let bx = DyadicBox::from_word([2, -3, 1], &[[1, 0, 1], [0, 1, 0]], 3).unwrap();
        let p: PointPattern<f64> = s.sample_box(1, &bx, 1.0).unwrap();
        for i in 0..p.len() {
            assert!(bx.contains(p.point(i)));
        }
    }

    #[test]
    fn zero_intensity_is_empty() {
        let s = PppSampler::new(5);
        let p: PointPattern<f64> = s.sample_window(0, [0, 0, 0], [8, 8, 0], 2, 0.0).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn thinning_keeps_a_fraction() {
        let s = PppSampler::new(9);
        let mut kept = 0usize;
        let mut total = 0usize;
        for r in 0..200u64 {
            let p: PointPattern<f64> = s.sample_window(r, [0, 0, 0], [4, 4, 0], 2, 2.0).unwrap();
            let mut rng = s.aux_rng(r, 1);
            let t = thin(&p, 0.25, &mut rng).unwrap();
            kept += t.len();
            total += p.len();
        }
        let frac = kept as f64 / total as f64;
        assert!((frac - 0.25).abs() < 0.03, "{frac}");
        assert!(thin(&PointPattern::<f64>::new(2, 1).unwrap(), 1.5, &mut s.aux_rng(0, 0)).is_err());
    }

    #[test]
    fn gamma_words_are_fair() {
        let s = PppSampler::new(13);
        let w = s.gamma_word(0, 6, 2);
        assert_eq!(w.len(), 6);
        assert_eq!(w, s.gamma_word(0, 6, 2));
        for g in &w {
            assert_eq!(g[2], 0); // beyond dim
        }
        let mut ones = 0usize;
        let n = 3000usize;
        for r in 0..n as u64 {
            let w = s.gamma_word(r, 1, 2);
            ones += (w[0][0] + w[0][1]) as usize;
        }
        let frac = ones as f64 / (2 * n) as f64;
        assert!((frac - 0.5).abs() < 0.03, "{frac}");
    }

    // ---- moments ----

    #[test]
    fn touchard_small_cases() {
        // At rate 1 the raw moments are the Bell numbers.
        for (n, bell) in [(0u32, 1.0), (1, 1.0), (2, 2.0), (3, 5.0), (4, 15.0), (5, 52.0)] {
            assert_eq!(poisson_raw_moment(1.0, n).unwrap(), bell);
        }
        assert_eq!(poisson_raw_moment(2.0, 2).unwrap(), 6.0); // a^2 + a
        assert_eq!(poisson_raw_moment(3.0, 1).unwrap(), 3.0);
        assert!(poisson_raw_moment(1.0, 21).is_err());
    }

    #[test]
    fn touchard_matches_series() {
        for &alpha in &[0.5, 1.0, 4.0, 16.0] {
            for n in 0..=8u32 {
                let t = poisson_raw_moment(alpha, n).unwrap();
                let s = poisson_power_moment(alpha, n as f64).unwrap();
                assert!((t - s).abs() <= 1e-9 * t.abs().max(1.0), "alpha={alpha} n={n}: {t} vs {s}");
            }
        }
        // Spot value: eighth moment at rate 16 is in the 1e10 range.
        let m8 = poisson_raw_moment(16.0, 8).unwrap();
        assert!((m8 / 17_490_370_320.0 - 1.0).abs() < 1e-12, "{m8}");
    }

    #[test]
    fn central_moments() {
        // Variance and fourth central moment: a and a + 3a^2.
        for &a in &[0.5, 2.0, 7.0] {
            assert!((poisson_central_moment(a, 2).unwrap() - a).abs() < 1e-9 * a.max(1.0));
            let m4 = poisson_central_moment(a, 4).unwrap();
            assert!((m4 - (a + 3.0 * a * a)).abs() < 1e-8 * m4.abs().max(1.0), "{m4}");
        }
        // Expansion agrees with the series for even orders.
        for &a in &[1.0, 4.0] {
            for &p in &[2u32, 4, 6, 8] {
                let e = poisson_central_moment(a, p).unwrap();
                let s = poisson_abs_central_moment(a, p as f64).unwrap();
                assert!((e - s).abs() <= 1e-6 * s.max(1.0), "a={a} p={p}: {e} vs {s}");
            }
        }
    }

    #[test]
    fn inverse_moment_value() {
        // E[1/Z; Z>0] at rate 1: sum_{k>=1} e^-1 / (k! k).
        let v = poisson_inverse_moment(1.0, 1.0).unwrap();
        assert!((v - 0.4848291069956877).abs() < 1e-12, "{v}");
        // Rate large: concentrates near 1/alpha.
        let v = poisson_inverse_moment(400.0, 1.0).unwrap();
        assert!((v * 400.0 - 1.0).abs() < 0.01, "{v}");
    }

    #[test]
    fn moment_bounds_hold_on_grid() {
        for &p in &[1.0, 1.5, 2.0, 3.0, 4.0] {
            for &a in &[1.0, 2.0, 4.0, 16.0, 100.0] {
                let chk = check_moment_bounds(a, p).unwrap();
                assert!(chk.all_hold(), "p={p} alpha={a}: {chk:?}");
            }
        }
    }

    #[test]
    fn moment_constants() {
        assert_eq!(raw_moment_constant(2.0), 4.0);
        assert_eq!(raw_moment_constant(1.5), 2f64.powf(1.5));
        assert_eq!(inverse_moment_constant(2.0), 6.0);
        assert_eq!(inverse_moment_constant(1.0), 2.0);
        assert_eq!(central_moment_constant(2.0), 2.0);
        assert_eq!(central_moment_constant(4.0), 48.0);
    }

    #[test]
    fn rate_function_properties() {
        // Zero at t = b, value b at t = 0, convex in between.
        assert_eq!(rate_function(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(rate_function(2.0, 0.0).unwrap(), 2.0);
        let f = |t: f64| rate_function(3.0, t).unwrap();
        for &t in &[0.5, 1.0, 2.0, 3.5, 6.0] {
            let second = f(t + 0.01) + f(t - 0.01) - 2.0 * f(t);
            assert!(second > 0.0);
            assert!(f(t) >= 0.0);
        }
        assert!(rate_function(0.0, 1.0).is_err());
        assert!(rate_function(1.0, -1.0).is_err());
    }

    #[test]
    fn expectation_of_indicator_is_probability() {
        // P(Z = 0) = e^-alpha.
        for &a in &[0.5, 2.0, 30.0] {
            let p0 = poisson_expectation(a, |k| f64::from(k == 0)).unwrap();
            assert!((p0 - (-a).exp()).abs() < 1e-13);
        }
    }
}
