//! Quadrature grids on the support of a potential and evaluation point sets.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::potentials::Potential;
use crate::quadrature::{gauss_legendre, Rule};
use crate::Point;

pub const DEFAULT_RADIAL_ORDER: usize = 24;
pub const DEFAULT_ANGULAR_ORDER: usize = 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridScheme {
    pub radial_order: usize,
    pub angular_order: usize,
}

impl Default for GridScheme {
    fn default() -> Self {
        Self { radial_order: DEFAULT_RADIAL_ORDER, angular_order: DEFAULT_ANGULAR_ORDER }
    }
}

/// Tensor quadrature on the ball of radius `R_supp`. Weights include `r^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportGrid {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    pub scheme: GridScheme,
    pub potential_values: Vec<f64>,
}

/// Unit directions and weights (summing to `4 pi`) of an angular rule with
/// roughly `n` points. 6, 14 and 26 give Lebedev rules; other counts give a
/// Gauss-Legendre x trapezoid product rule.
pub fn angular_rule(n: usize) -> Vec<(Point, f64)> {
    let four_pi = 4.0 * PI;
    let axes = || -> Vec<Point> {
        let mut v = Vec::new();
        for k in 0..3 {
            for s in [1.0, -1.0] {
                let mut p = [0.0; 3];
                p[k] = s;
                v.push(p);
            }
        }
        v
    };
    let corners = || -> Vec<Point> {
        let c = 1.0 / 3f64.sqrt();
        let mut v = Vec::new();
        for sx in [1.0, -1.0] {
            for sy in [1.0, -1.0] {
                for sz in [1.0, -1.0] {
                    v.push([sx * c, sy * c, sz * c]);
                }
            }
        }
        v
    };
    let edges = || -> Vec<Point> {
        let c = 1.0 / 2f64.sqrt();
        let mut v = Vec::new();
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            for sa in [1.0, -1.0] {
                for sb in [1.0, -1.0] {
                    let mut p = [0.0; 3];
                    p[a] = sa * c;
                    p[b] = sb * c;
                    v.push(p);
                }
            }
        }
        v
    };
    let tag = |pts: Vec<Point>, w: f64| pts.into_iter().map(move |p| (p, w * four_pi));
    match n {
        0..=6 => tag(axes(), 1.0 / 6.0).collect(),
        14 => tag(axes(), 1.0 / 15.0).chain(tag(corners(), 3.0 / 40.0)).collect(),
        26 => tag(axes(), 1.0 / 21.0)
            .chain(tag(edges(), 4.0 / 105.0))
            .chain(tag(corners(), 9.0 / 280.0))
            .collect(),
        _ => {
            let n_theta = ((n as f64 / 2.0).sqrt().ceil() as usize).max(2);
            let n_phi = 2 * n_theta;
            let (ct, wt) = gauss_legendre(n_theta);
            let mut out = Vec::with_capacity(n_theta * n_phi);
            for (c, w) in ct.iter().zip(&wt) {
                let s = (1.0 - c * c).sqrt();
                for k in 0..n_phi {
                    let phi = 2.0 * PI * (k as f64 + 0.5) / n_phi as f64;
                    out.push(([s * phi.cos(), s * phi.sin(), *c], w * 2.0 * PI / n_phi as f64));
                }
            }
            out
        }
    }
}

pub fn build_support_grid(p: &Potential, radial_order: usize, angular_order: usize) -> Result<SupportGrid> {
    if radial_order < 2 || angular_order < 2 {
        return Err(Error::InvalidOrder(format!(
            "radial_order {radial_order} and angular_order {angular_order} must both be >= 2"
        )));
    }
    // An empty support still yields a usable grid on the unit ball.
    let r_supp = if p.support_radius() > 0.0 { p.support_radius() } else { 1.0 };
    let mut breaks = vec![0.0];
    let mut inner: Vec<f64> = p.radial_breaks().into_iter().filter(|&b| b > 0.0 && b < r_supp).collect();
    inner.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.extend(inner);
    breaks.push(r_supp);
    let radial = Rule::composite(radial_order, &breaks);
    let angular = angular_rule(angular_order);
    let mut nodes = Vec::with_capacity(radial.len() * angular.len());
    let mut weights = Vec::with_capacity(nodes.capacity());
    for (&r, &wr) in radial.nodes.iter().zip(&radial.weights) {
        for (dir, wa) in &angular {
            nodes.push([r * dir[0], r * dir[1], r * dir[2]]);
            weights.push(wr * r * r * wa);
        }
    }
    let potential_values = nodes.iter().map(|x| p.evaluate(x)).collect();
    Ok(SupportGrid {
        nodes,
        weights,
        scheme: GridScheme { radial_order, angular_order },
        potential_values,
    })
}

impl SupportGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(&Point) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }

    /// Columns `x,y,z,w,V`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "x,y,z,w,V")?;
        for ((x, w), v) in self.nodes.iter().zip(&self.weights).zip(&self.potential_values) {
            writeln!(out, "{},{},{},{},{}", x[0], x[1], x[2], w, v)?;
        }
        Ok(())
    }
}

/// Request for an evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub s_min: f64,
    pub s_max: f64,
    pub count: usize,
    #[serde(default = "default_box")]
    pub box_radius: f64,
    #[serde(default)]
    pub diagonal: bool,
    #[serde(default)]
    pub anchor: Anchor,
}

/// Placement of off-diagonal pairs along the fixed direction `e`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// `x = 0`, `y = s e`. For radial potentials only the s-wave couples.
    #[default]
    Origin,
    /// `x = -s/2 e`, `y = s/2 e`.
    Symmetric,
}

impl EvalSpec {
    pub fn new(s_min: f64, s_max: f64, count: usize) -> Self {
        Self { s_min, s_max, count, box_radius: default_box(), diagonal: false, anchor: Anchor::Origin }
    }
}

fn default_box() -> f64 {
    50.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub x: Point,
    pub y: Point,
    pub separation: f64,
    pub diagonal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub points: Vec<Point>,
    pub pairs: Vec<EvalPair>,
}

/// Fixed direction used to lay out pairs, chosen off every coordinate axis.
pub const EVAL_DIRECTION: Point = [0.267_261_241_912_424_4, 0.534_522_483_824_848_8, 0.801_783_725_737_273_2];

/// Log-spaced separations in `[s_min, s_max]`.
pub fn log_spaced(s_min: f64, s_max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![s_min],
        _ => {
            let (a, b) = (s_min.ln(), s_max.ln());
            (0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()).collect()
        }
    }
}

/// Pairs at log-spaced separations `s` placed per the anchor, clipped to the box.
/// With `diagonal`, adds coincident pairs at `x = y = s/2 e`.
pub fn build_eval_grid(spec: &EvalSpec) -> EvalGrid {
    let e = EVAL_DIRECTION;
    let at = |t: f64| [t * e[0], t * e[1], t * e[2]];
    let mut points = Vec::new();
    let mut pairs = Vec::new();
    if spec.s_min > 0.0 && spec.s_max >= spec.s_min {
        for s in log_spaced(spec.s_min, spec.s_max, spec.count) {
            let (x, y, sep) = match spec.anchor {
                Anchor::Origin => {
                    let s = s.min(spec.box_radius);
                    ([0.0; 3], at(s), s)
                }
                Anchor::Symmetric => {
                    let half = (0.5 * s).min(spec.box_radius);
                    (at(-half), at(half), 2.0 * half)
                }
            };
            points.push(x);
            points.push(y);
            pairs.push(EvalPair { x, y, separation: sep, diagonal: false });
        }
    }
    if spec.diagonal {
        let top = spec.s_max.max(spec.s_min).max(1e-3);
        let bottom = if spec.s_min > 0.0 { spec.s_min } else { top.min(1e-3) };
        for s in log_spaced(bottom, top, spec.count.max(1)) {
            let x = at((0.5 * s).min(spec.box_radius));
            points.push(x);
            pairs.push(EvalPair { x, y: x, separation: 0.0, diagonal: true });
        }
    }
    EvalGrid { points, pairs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::Primitive;

    #[test]
    fn angular_rules_integrate_low_degree_polynomials() {
        for n in [6, 14, 26, 50] {
            let rule = angular_rule(n);
            let total: f64 = rule.iter().map(|(_, w)| w).sum();
            assert!((total - 4.0 * PI).abs() < 1e-13);
            let z2: f64 = rule.iter().map(|(d, w)| w * d[2] * d[2]).sum();
            assert!((z2 - 4.0 * PI / 3.0).abs() < 1e-13, "n={n}");
            if n >= 14 {
                let z4: f64 = rule.iter().map(|(d, w)| w * d[2].powi(4)).sum();
                assert!((z4 - 4.0 * PI / 5.0).abs() < 1e-13, "n={n}");
            }
        }
    }

    #[test]
    fn ball_volume_and_second_moment() {
        let v = Potential::new(vec![Primitive::square_well(-1.0, 1.0)]).unwrap();
        let g = build_support_grid(&v, 2, 6).unwrap();
        assert!((g.weights.iter().sum::<f64>() - 4.0 * PI / 3.0).abs() < 1e-8);
        let g = build_support_grid(&v, 24, 26).unwrap();
        let m2 = g.integrate(|x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
        assert!((m2 - 4.0 * PI / 5.0).abs() < 1e-6);
        assert!(g.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn rejects_low_orders() {
        let v = Potential::zero();
        assert!(matches!(build_support_grid(&v, 1, 26), Err(Error::InvalidOrder(_))));
    }

    #[test]
    fn zero_potential_grid_has_zero_values() {
        let g = build_support_grid(&Potential::zero(), 4, 6).unwrap();
        assert!(!g.is_empty());
        assert!(g.potential_values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_mass_self_converges() {
        let v = Potential::new(vec![Primitive::gaussian(-1.0, 1.0)]).unwrap();
        let a = build_support_grid(&v, 24, 26).unwrap();
        let b = build_support_grid(&v, 48, 26).unwrap();
        let ma = a.integrate(|x| v.evaluate(x).abs());
        let mb = b.integrate(|x| v.evaluate(x).abs());
        assert!((ma - mb).abs() < 1e-6 * mb);
        assert!((mb - PI.powf(1.5)).abs() < 1e-8);
    }

    #[test]
    fn eval_grid_layouts() {
        let one = build_eval_grid(&EvalSpec::new(1.0, 1.0, 1));
        assert_eq!(one.pairs.len(), 1);
        assert!((one.pairs[0].separation - 1.0).abs() < 1e-14);
        let eight = build_eval_grid(&EvalSpec { anchor: Anchor::Symmetric, ..EvalSpec::new(0.5, 8.0, 8) });
        assert_eq!(eight.pairs.len(), 8);
        let ratios: Vec<f64> = eight.pairs.windows(2).map(|p| p[1].separation / p[0].separation).collect();
        assert!(ratios.iter().all(|r| (r - ratios[0]).abs() < 1e-12));
        for p in &eight.pairs {
            assert!((crate::dist(&p.x, &p.y) - p.separation).abs() < 1e-12);
            assert!((crate::norm(&p.x) - crate::norm(&p.y)).abs() < 1e-12);
        }
        let origin = build_eval_grid(&EvalSpec { box_radius: 5.0, ..EvalSpec::new(0.5, 8.0, 4) });
        assert!(origin.pairs.iter().all(|p| p.x == [0.0; 3]));
        assert!((origin.pairs[3].separation - 5.0).abs() < 1e-14);
        let diag = build_eval_grid(&EvalSpec { diagonal: true, ..EvalSpec::new(0.5, 8.0, 3) });
        assert_eq!(diag.pairs.iter().filter(|p| p.diagonal).count(), 3);
        assert!(diag.pairs.iter().all(|p| p.diagonal || p.separation > 0.0));
    }
}
