//! Independent radial finite-difference eigensolver, used as an oracle for
//! bound-state counts and energies of radial potentials.
//!
//! Each partial wave `-u'' + (V + l(l+1)/r^2) u = E u` on `(0, L)` with
//! Dirichlet ends becomes a symmetric tridiagonal matrix. Eigenvalues come
//! from Sturm-sequence bisection, and two step sizes are combined by
//! Richardson extrapolation.

/// Radial profile `r -> V(r)`.
pub trait RadialProfile: Fn(f64) -> f64 {}
impl<F: Fn(f64) -> f64> RadialProfile for F {}

#[derive(Debug, Clone, Copy)]
pub struct FdSettings {
    pub h: f64,
    pub box_radius: f64,
    /// Largest partial wave tried; the scan also stops at the first empty wave.
    pub max_l: usize,
}

impl Default for FdSettings {
    fn default() -> Self {
        Self { h: 0.01, box_radius: 60.0, max_l: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdLevel {
    pub l: usize,
    pub energy: f64,
}

struct Tridiagonal {
    diag: Vec<f64>,
    off2: f64,
}

impl Tridiagonal {
    fn new<V: RadialProfile>(v: &V, l: usize, h: f64, box_radius: f64) -> Self {
        let n = (box_radius / h).round() as usize;
        let ll = (l * (l + 1)) as f64;
        let diag = (1..n)
            .map(|i| {
                let r = i as f64 * h;
                // Midpoint average resolves a jump sitting on a node.
                let vr = 0.5 * (v(r - 1e-12) + v(r + 1e-12));
                2.0 / (h * h) + vr + ll / (r * r)
            })
            .collect();
        Self { diag, off2: 1.0 / (h * h * h * h) }
    }

    /// Number of eigenvalues below `x`.
    fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for (i, &d) in self.diag.iter().enumerate() {
            q = if i == 0 { d - x } else { d - x - self.off2 / q };
            if q == 0.0 {
                q = -1e-300;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn lower_bound(&self) -> f64 {
        let off = self.off2.sqrt();
        self.diag.iter().fold(f64::INFINITY, |m, &d| m.min(d - 2.0 * off))
    }

    /// The `k`-th eigenvalue (zero-based) by bisection.
    fn eigenvalue(&self, k: usize, hi: f64) -> f64 {
        let (mut a, mut b) = (self.lower_bound(), hi);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.count_below(m) > k {
                b = m;
            } else {
                a = m;
            }
            if b - a <= 1e-15 * a.abs().max(b.abs()) {
                break;
            }
        }
        0.5 * (a + b)
    }
}

fn levels_at<V: RadialProfile>(v: &V, l: usize, h: f64, box_radius: f64) -> Vec<f64> {
    let t = Tridiagonal::new(v, l, h, box_radius);
    let n = t.count_below(0.0);
    (0..n).map(|k| t.eigenvalue(k, 0.0)).collect()
}

/// Negative energies per partial wave, each listed once (multiplicity
/// `2l+1` is left to the caller). Richardson-extrapolated in `h`.
pub fn bound_levels<V: RadialProfile>(v: &V, settings: &FdSettings) -> Vec<FdLevel> {
    let mut out = Vec::new();
    for l in 0..=settings.max_l {
        let coarse = levels_at(v, l, settings.h, settings.box_radius);
        if coarse.is_empty() {
            break;
        }
        let fine = levels_at(v, l, 0.5 * settings.h, settings.box_radius);
        for (k, &ef) in fine.iter().enumerate() {
            let energy = match coarse.get(k) {
                Some(&ec) => (4.0 * ef - ec) / 3.0,
                None => ef,
            };
            if energy < 0.0 {
                out.push(FdLevel { l, energy });
            }
        }
    }
    out
}

/// Energies with multiplicity, sorted ascending.
pub fn bound_energies<V: RadialProfile>(v: &V, settings: &FdSettings) -> Vec<f64> {
    let mut e: Vec<f64> = bound_levels(v, settings)
        .into_iter()
        .flat_map(|lv| std::iter::repeat(lv.energy).take(2 * lv.l + 1))
        .collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_well_matches_transcendental_root() {
        // s-wave: k cot k = -kappa with k^2 + kappa^2 = V0.
        let v0 = 4.0;
        let e = bound_energies(&|r: f64| if r <= 1.0 { -v0 } else { 0.0 }, &FdSettings::default());
        assert_eq!(e.len(), 1);
        let kappa: f64 = 0.638_045_048_285_237_7;
        assert!((e[0] + kappa * kappa).abs() < 1e-4 * kappa * kappa, "{}", e[0]);
    }

    #[test]
    fn harmonic_levels() {
        // V = r^2 has E = 4n + 2l + 3; shift down by 10 to make them negative.
        let s = FdSettings { h: 0.01, box_radius: 8.0, max_l: 4 };
        let lv = bound_levels(&|r: f64| r * r - 10.0, &s);
        let ground = lv.iter().find(|x| x.l == 0).unwrap().energy;
        assert!((ground + 7.0).abs() < 1e-5, "{ground}");
        let p = lv.iter().find(|x| x.l == 1).unwrap().energy;
        assert!((p + 5.0).abs() < 1e-5, "{p}");
    }

    #[test]
    fn repulsive_has_no_levels() {
        assert!(bound_energies(&|r: f64| (-r * r).exp(), &FdSettings::default()).is_empty());
    }
}
