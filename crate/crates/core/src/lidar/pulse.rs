//! Hard-target and fog backscatter pulse responses.
//!
//! Fog backscatter is integrated in range rather than time. With
//! `r = R - c t / 2` the received fog power at range `R` becomes
//!
//! ```text
//! P_soft(R) = C_A P0 ∫ sin²(π (R - r) / (c τ_H)) β(r) e^{-2 τ(r)} ξ(r) / r² dr
//! ```
//!
//! over `r ∈ [R - c τ_H, min(R, R0)]`, where `τ(r)` is the one-way optical
//! depth. Piecewise-constant fog makes the integrand smooth between
//! breakpoints, so a composite trapezoid rule with an end-point derivative
//! correction is accurate to fourth order.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::LidarConfig;
use crate::scene::{FogProfile, PathAttenuation};
use crate::{Error, Result};

/// Trapezoid panels per pulse length `c τ_H`; one panel spans `τ_H / 64` of
/// round-trip time.
pub const QUAD_PANELS_PER_PULSE: f64 = 128.0;

/// Floor on panels per constant-fog interval. Intervals much shorter than a
/// panel (ranges inside the near field) would otherwise carry a relative
/// error of order (h / length)⁴.
pub const QUAD_MIN_PANELS: usize = 32;

/// Sampled received power over range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseResponse {
    pub samples: Vec<(f64, f64)>,
    /// Hard-target distance the curve was built for; `None` for sky rays.
    pub r0: Option<f64>,
}

impl PulseResponse {
    pub fn zeros(grid: &[f64], r0: Option<f64>) -> Self {
        Self {
            samples: grid.iter().map(|&r| (r, 0.0)).collect(),
            r0,
        }
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().map(|s| s.1).fold(0.0, f64::max)
    }
}

/// Near-field overlap between beam and receiver field of view: a smootherstep
/// from 0 at the sensor to 1 at `near_field`.
pub fn crossover(r: f64, near_field: f64) -> f64 {
    let x = (r / near_field).clamp(0.0, 1.0);
    x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
}

/// ξ(r)/r² and its derivative. Below the near field the ratio is written
/// without the removable 0/0 at the sensor.
fn overlap_over_r2(r: f64, nf: f64) -> (f64, f64) {
    if r >= nf {
        let inv = 1.0 / r;
        (inv * inv, -2.0 * inv * inv * inv)
    } else {
        let x = r / nf;
        let q = x * (10.0 - 15.0 * x + 6.0 * x * x) / (nf * nf);
        let dq = (10.0 - 30.0 * x + 18.0 * x * x) / (nf * nf * nf);
        (q, dq)
    }
}

/// Hard-target return: a sin² window of one pulse length starting at
/// the target.
pub fn hard_response(r0: f64, beta0: f64, path: &PathAttenuation, cfg: &LidarConfig) -> Result<PulseResponse> {
    if !(r0 > 0.0) {
        return Err(Error::input(format!("hard target distance {r0} must be positive")));
    }
    if !(0.0..=1.0).contains(&beta0) {
        return Err(Error::input(format!("reflectivity {beta0} outside [0, 1]")));
    }
    let grid = cfg.range_grid();
    let amp = hard_amplitude(r0, beta0, path.optical_depth(), cfg);
    let len = cfg.pulse_length();
    Ok(PulseResponse {
        samples: grid
            .iter()
            .map(|&r| (r, hard_at(r, r0, amp, len)))
            .collect(),
        r0: Some(r0),
    })
}

pub(crate) fn hard_amplitude(r0: f64, beta0: f64, optical_depth: f64, cfg: &LidarConfig) -> f64 {
    cfg.c_a * cfg.p0 * (-2.0 * optical_depth).exp() * beta0 / (r0 * r0)
}

#[inline]
pub(crate) fn hard_at(r: f64, r0: f64, amp: f64, len: f64) -> f64 {
    if r < r0 || r > r0 + len {
        return 0.0;
    }
    let s = (PI * (r - r0) / len).sin();
    amp * s * s
}

/// Fog backscatter sampled on the configuration's range grid. `r0` is the
/// hard-target distance, or infinity for a ray that escapes.
pub fn soft_response(profile: &FogProfile, r0: f64, cfg: &LidarConfig) -> PulseResponse {
    let grid = cfg.range_grid();
    PulseResponse {
        samples: grid
            .iter()
            .map(|&r| (r, soft_at(profile, r, r0, cfg)))
            .collect(),
        r0: r0.is_finite().then_some(r0),
    }
}

/// Fog backscatter at a single range.
pub fn soft_at(profile: &FogProfile, r: f64, r0: f64, cfg: &LidarConfig) -> f64 {
    if profile.is_clear() {
        return 0.0;
    }
    let len = cfg.pulse_length();
    let a = (r - len).max(0.0);
    let b = r.min(r0).min(profile.fog_end());
    if !(b > a) {
        return 0.0;
    }

    // Homogeneous fog contributes at most two breakpoints, so the cuts fit
    // on the stack; layered profiles fall back to the heap.
    let mut stack = [0.0; 6];
    let mut heap = Vec::new();
    let inner = profile.breakpoints().filter(|&bp| bp > a && bp < b);
    let cuts: &mut [f64] = if profile.breakpoints().nth(2).is_none() {
        let mut n = 0;
        for c in std::iter::once(a).chain((cfg.near_field > a && cfg.near_field < b).then_some(cfg.near_field)).chain(inner).chain(std::iter::once(b)) {
            stack[n] = c;
            n += 1;
        }
        &mut stack[..n]
    } else {
        heap.push(a);
        if cfg.near_field > a && cfg.near_field < b {
            heap.push(cfg.near_field);
        }
        heap.extend(inner);
        heap.push(b);
        &mut heap
    };
    cuts.sort_by(f64::total_cmp);

    let h_max = len / QUAD_PANELS_PER_PULSE;
    let mut total = 0.0;
    for w in cuts.windows(2) {
        if w[0] != w[1] {
            total += piece(profile, r, w[0], w[1], h_max, cfg);
        }
    }
    cfg.c_a * cfg.p0 * total
}

/// Trapezoid rule plus the Euler-Maclaurin end correction on one interval
/// where the fog is constant.
fn piece(profile: &FogProfile, r: f64, a: f64, b: f64, h_max: f64, cfg: &LidarConfig) -> f64 {
    let n = (((b - a) / h_max).ceil() as usize).max(QUAD_MIN_PANELS);
    let h = (b - a) / n as f64;
    let mid = 0.5 * (a + b);
    let alpha = profile.alpha_at(mid);
    if alpha == 0.0 {
        return 0.0;
    }
    let beta = profile.beta_per_alpha() * alpha;
    let tau_a = profile.tau_at(a);
    let len = cfg.pulse_length();
    let nf = cfg.near_field;
    let k = PI / len;

    let df = |x: f64| -> f64 {
        let ang = k * (r - x);
        let s = ang.sin();
        let kern = s * s;
        let dkern = -k * (2.0 * ang).sin();
        let (q, dq) = overlap_over_r2(x, nf);
        let e = beta * (-2.0 * (tau_a + alpha * (x - a))).exp();
        dkern * e * q + kern * e * (dq - 2.0 * alpha * q)
    };

    // Nodes are evenly spaced, so the kernel phase and the attenuation
    // advance by a fixed rotation and a fixed factor per node.
    let (mut s, mut c) = (k * (r - a)).sin_cos();
    let (sd, cd) = (k * h).sin_cos();
    let step = (-2.0 * alpha * h).exp();
    let mut e = beta * (-2.0 * tau_a).exp();
    let far = a >= nf;
    let node = |i: usize, s: f64, e: f64| {
        let x = a + h * i as f64;
        let q = if far {
            let inv = 1.0 / x;
            inv * inv
        } else {
            overlap_over_r2(x, nf).0
        };
        s * s * e * q
    };
    let mut sum = 0.5 * node(0, s, e);
    for i in 1..n {
        (s, c) = (s * cd - c * sd, c * cd + s * sd);
        e *= step;
        sum += node(i, s, e);
    }
    (s, _) = (s * cd - c * sd, c * cd + s * sd);
    e *= step;
    sum += 0.5 * node(n, s, e);
    sum * h - h * h / 12.0 * (df(b) - df(a))
}

/// Pointwise sum of two curves on the same grid.
pub fn total_response(hard: &PulseResponse, soft: &PulseResponse) -> Result<PulseResponse> {
    if hard.samples.len() != soft.samples.len()
        || hard
            .samples
            .iter()
            .zip(&soft.samples)
            .any(|(h, s)| h.0 != s.0)
    {
        return Err(Error::input("pulse responses are sampled on different grids"));
    }
    Ok(PulseResponse {
        samples: hard
            .samples
            .iter()
            .zip(&soft.samples)
            .map(|(h, s)| (h.0, h.1 + s.1))
            .collect(),
        r0: hard.r0.or(soft.r0),
    })
}

/// The peak picked from one received curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Echo {
    /// Reported range after pulse-centroid calibration.
    pub range: f64,
    /// Argmax of the received curve.
    pub peak_range: f64,
    pub intensity: f64,
    /// The peak comes from fog backscatter rather than the hard target.
    pub fog: bool,
}

pub(crate) fn make_echo(peak_range: f64, intensity: f64, r0: Option<f64>, cfg: &LidarConfig) -> Echo {
    let range = if cfg.raw_argmax {
        peak_range
    } else {
        peak_range - 0.5 * cfg.pulse_length()
    };
    Echo {
        range,
        peak_range,
        intensity,
        fog: r0.map_or(true, |r0| peak_range <= r0),
    }
}

/// Largest sample wins, ties going to the nearer range; nothing below the
/// noise floor is reported.
pub fn select_return(total: &PulseResponse, cfg: &LidarConfig, noise_floor: f64) -> Option<Echo> {
    let mut best: Option<(f64, f64)> = None;
    for &(r, p) in &total.samples {
        if best.map_or(true, |(_, bp)| p > bp) {
            best = Some((r, p));
        }
    }
    let (r, p) = best?;
    if p < noise_floor || p <= 0.0 {
        return None;
    }
    Some(make_echo(r, p, total.r0, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::alpha_from_mor;
    use approx::assert_relative_eq;

    fn clear_path(r: f64) -> PathAttenuation {
        PathAttenuation {
            sum_alpha: 0.0,
            dr: r,
            clamped: false,
        }
    }

    fn fog(mor: f64) -> FogProfile {
        FogProfile::homogeneous(alpha_from_mor(mor), 0.046 / 20f64.ln())
    }

    #[test]
    fn hard_peak_value_and_support() {
        let cfg = LidarConfig::default();
        let h = hard_response(10.0, 1.0, &clear_path(10.0), &cfg).unwrap();
        let len = cfg.pulse_length();
        assert_relative_eq!(hard_at(10.0 + 0.5 * len, 10.0, 0.01, len), 0.01);
        assert!(h.samples.iter().all(|&(r, p)| r >= 10.0 || p == 0.0));
        assert!(h.samples.iter().all(|&(r, p)| r <= 10.0 + len || p == 0.0));
        assert!(hard_response(0.0, 0.5, &clear_path(1.0), &cfg).is_err());
    }

    #[test]
    fn extra_attenuation_scales_hard_curve() {
        let cfg = LidarConfig::default();
        let a = hard_response(20.0, 0.5, &clear_path(20.0), &cfg).unwrap();
        let fogged = PathAttenuation {
            sum_alpha: 0.01,
            dr: 20.0,
            clamped: false,
        };
        let b = hard_response(20.0, 0.5, &fogged, &cfg).unwrap();
        let f = (-2.0 * 0.2f64).exp();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_relative_eq!(x.1 * f, y.1, max_relative = 1e-12);
        }
    }

    #[test]
    fn clear_soft_is_zero_and_total_checks_grid() {
        let cfg = LidarConfig::default();
        let clear = FogProfile::homogeneous(0.0, 0.02);
        let s = soft_response(&clear, f64::INFINITY, &cfg);
        assert!(s.samples.iter().all(|x| x.1 == 0.0));
        assert!(select_return(&s, &cfg, cfg.noise_floor()).is_none());
        let mut other = s.clone();
        other.samples[3].0 += 1e-3;
        assert!(total_response(&s, &other).is_err());
    }

    #[test]
    fn truncation_by_near_target() {
        let cfg = LidarConfig::default();
        let p = fog(30.0);
        let full = soft_response(&p, f64::INFINITY, &cfg);
        let cut = soft_response(&p, 1.0, &cfg);
        let len = cfg.pulse_length();
        for (f, c) in full.samples.iter().zip(&cut.samples) {
            assert!(c.1 <= f.1);
            if c.0 >= 1.0 + len {
                assert_eq!(c.1, 0.0);
            }
        }
        // Summed over R the kernel integrates to the same constant for every
        // scattering depth r, so the mass ratio is a ratio of plain integrals.
        let mass = |r: &PulseResponse| r.samples.iter().map(|s| s.1).sum::<f64>();
        let alpha = alpha_from_mor(30.0);
        let g = |r: f64| {
            let x = r.min(1.0);
            let overlap = x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
            overlap / (r * r) * (-2.0 * alpha * r).exp()
        };
        let h = 1e-4;
        let near: f64 = (0..10_000).map(|i| g((i as f64 + 0.5) * h)).sum::<f64>() * h;
        let all: f64 = (0..1_000_000).map(|i| g((i as f64 + 0.5) * h)).sum::<f64>() * h;
        let ratio = mass(&cut) / mass(&full);
        assert!((ratio - near / all).abs() < 0.01, "ratio {ratio} oracle {}", near / all);
    }

    #[test]
    fn calibrated_clear_range() {
        let cfg = LidarConfig::default();
        let h = hard_response(10.0, 0.8, &clear_path(10.0), &cfg).unwrap();
        let e = select_return(&h, &cfg, cfg.noise_floor()).unwrap();
        assert!((e.range - 10.0).abs() <= cfg.range_bin);
        assert!(!e.fog);
    }

    #[test]
    fn crossover_shape() {
        assert_eq!(crossover(0.0, 1.0), 0.0);
        assert_eq!(crossover(1.0, 1.0), 1.0);
        assert_eq!(crossover(5.0, 1.0), 1.0);
        assert_relative_eq!(crossover(0.5, 1.0), 0.5);
    }
}
