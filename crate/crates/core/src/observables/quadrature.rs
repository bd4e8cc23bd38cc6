//! Composite tensor Gauss–Legendre quadrature on rectangles, with panels graded
//! towards a point where the integrand is bounded but direction-discontinuous.
//!
//! The grading point is always a panel corner, so no node ever lands on it.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum QuadratureRule {
    /// Fixed panels of the given width with an `order`-point rule per axis.
    TensorGaussLegendre { order: usize, panel_width: f64 },
    /// Global adaptive refinement, splitting the worst panel into four.
    Adaptive { order: usize, max_panels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub rule: QuadratureRule,
    /// Absolute tolerance on each integral.
    pub tolerance: f64,
    /// Half-width of the integration box around the Gaussian centre, in units
    /// of `1/width`. `None` picks a box with tail mass far below 1e−10.
    pub box_half_width: Option<f64>,
    /// Radius of the disk around the origin in which panels are graded.
    pub singular_radius: f64,
    /// Grading depth: the origin-touching panel is halved this many times.
    pub grading_depth: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rule: QuadratureRule::Adaptive {
                order: 10,
                max_panels: 20_000,
            },
            tolerance: 1e-11,
            box_half_width: None,
            singular_radius: 0.5,
            grading_depth: 40,
        }
    }
}

impl QuadratureConfig {
    pub fn tensor(order: usize, panel_width: f64) -> Self {
        Self {
            rule: QuadratureRule::TensorGaussLegendre { order, panel_width },
            ..Self::default()
        }
    }
}

/// Integrals of a two-component integrand with a per-component error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral2 {
    pub value: [f64; 2],
    pub error: [f64; 2],
    pub panels: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Panel {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Panel {
    fn touches(&self, p: (f64, f64)) -> bool {
        (self.x0 == p.0 || self.x1 == p.0) && (self.y0 == p.1 || self.y1 == p.1)
    }

    fn within(&self, p: (f64, f64), r: f64) -> bool {
        let dx = (p.0 - self.x0.max(p.0.min(self.x1))).abs();
        let dy = (p.1 - self.y0.max(p.1.min(self.y1))).abs();
        dx.hypot(dy) < r && (self.x1 - self.x0).max(self.y1 - self.y0) > 0.0
    }

    fn split(&self) -> [Panel; 4] {
        let xm = 0.5 * (self.x0 + self.x1);
        let ym = 0.5 * (self.y0 + self.y1);
        [
            Panel { x0: self.x0, x1: xm, y0: self.y0, y1: ym },
            Panel { x0: xm, x1: self.x1, y0: self.y0, y1: ym },
            Panel { x0: self.x0, x1: xm, y0: ym, y1: self.y1 },
            Panel { x0: xm, x1: self.x1, y0: ym, y1: self.y1 },
        ]
    }
}

struct Rule {
    nodes: Vec<(f64, f64)>,
}

impl Rule {
    fn new(order: usize) -> Self {
        let gl = GaussLegendre::new(order.max(2)).expect("order >= 2");
        Self {
            nodes: gl.as_node_weight_pairs().to_vec(),
        }
    }

    fn apply<F>(&self, p: &Panel, f: &F) -> [f64; 2]
    where
        F: Fn(f64, f64) -> [f64; 2],
    {
        let (hx, cx) = (0.5 * (p.x1 - p.x0), 0.5 * (p.x1 + p.x0));
        let (hy, cy) = (0.5 * (p.y1 - p.y0), 0.5 * (p.y1 + p.y0));
        let mut acc = [0.0; 2];
        for &(u, wu) in &self.nodes {
            let x = cx + hx * u;
            for &(v, wv) in &self.nodes {
                let r = f(x, cy + hy * v);
                let w = wu * wv;
                acc[0] += w * r[0];
                acc[1] += w * r[1];
            }
        }
        [acc[0] * hx * hy, acc[1] * hx * hy]
    }
}

/// Axis breakpoints: uniform panels, plus the singular coordinate when it lies
/// strictly inside. Uniform points closer to it than a thousandth of a panel are dropped.
fn breakpoints(lo: f64, hi: f64, width: f64, singular: f64) -> Vec<f64> {
    let count = ((hi - lo) / width).ceil().max(1.0) as usize;
    let mut pts: Vec<f64> = (0..=count)
        .map(|k| lo + (hi - lo) * k as f64 / count as f64)
        .collect();
    pts[count] = hi;
    let min_gap = 1e-3 * width;
    if singular - lo > min_gap && hi - singular > min_gap {
        pts.retain(|p| *p == lo || *p == hi || (p - singular).abs() >= min_gap);
        pts.push(singular);
        pts.sort_by(f64::total_cmp);
    }
    pts
}

/// Tensor panels over the box, with the panels inside the singular disk
/// replaced by a quadtree refined towards the singular point.
fn initial_panels(
    bounds: (f64, f64, f64, f64),
    width: f64,
    singular: (f64, f64),
    cfg: &QuadratureConfig,
) -> Vec<Panel> {
    let xs = breakpoints(bounds.0, bounds.1, width, singular.0);
    let ys = breakpoints(bounds.2, bounds.3, width, singular.1);
    let mut panels = Vec::new();
    for xw in xs.windows(2) {
        for yw in ys.windows(2) {
            let p = Panel { x0: xw[0], x1: xw[1], y0: yw[0], y1: yw[1] };
            if p.within(singular, cfg.singular_radius) {
                grade(p, singular, cfg.grading_depth, &mut panels);
            } else {
                panels.push(p);
            }
        }
    }
    panels
}

fn grade(p: Panel, singular: (f64, f64), depth: u32, out: &mut Vec<Panel>) {
    if depth == 0 || !p.touches(singular) {
        out.push(p);
        return;
    }
    for child in p.split() {
        grade(child, singular, depth - 1, out);
    }
}

#[derive(Debug, Clone, Copy)]
struct Scored {
    err: f64,
    panel: Panel,
    value: [f64; 2],
    estimate: [f64; 2],
}

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Scored {}
impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Integrates `f` over `bounds = (x0, x1, y0, y1)` with panels graded towards `singular`.
pub fn integrate<F>(f: &F, bounds: (f64, f64, f64, f64), singular: (f64, f64), cfg: &QuadratureConfig) -> Integral2
where
    F: Fn(f64, f64) -> [f64; 2],
{
    match cfg.rule {
        QuadratureRule::TensorGaussLegendre { order, panel_width } => {
            let panels = initial_panels(bounds, panel_width, singular, cfg);
            let fine = Rule::new(order);
            let coarse = Rule::new(order.saturating_sub(4).max(2));
            let mut value = [0.0; 2];
            let mut error = [0.0; 2];
            for p in &panels {
                let a = fine.apply(p, f);
                let b = coarse.apply(p, f);
                for k in 0..2 {
                    value[k] += a[k];
                    error[k] += (a[k] - b[k]).abs();
                }
            }
            Integral2 {
                value,
                error,
                panels: panels.len(),
                converged: error[0] <= cfg.tolerance && error[1] <= cfg.tolerance,
            }
        }
        QuadratureRule::Adaptive { order, max_panels } => {
            let fine = Rule::new(order);
            let coarse = Rule::new(order.saturating_sub(4).max(2));
            let score = |panel: Panel| {
                let value = fine.apply(&panel, f);
                let b = coarse.apply(&panel, f);
                let estimate = [(value[0] - b[0]).abs(), (value[1] - b[1]).abs()];
                Scored {
                    err: estimate[0].max(estimate[1]),
                    panel,
                    value,
                    estimate,
                }
            };
            let mut heap: BinaryHeap<Scored> = initial_panels(bounds, 1.0, singular, cfg)
                .into_iter()
                .map(score)
                .collect();
            let totals = |heap: &BinaryHeap<Scored>| {
                heap.iter().fold(([0.0; 2], [0.0; 2]), |(v, e), s| {
                    (
                        [v[0] + s.value[0], v[1] + s.value[1]],
                        [e[0] + s.estimate[0], e[1] + s.estimate[1]],
                    )
                })
            };
            let (_, mut error) = totals(&heap);
            while error[0].max(error[1]) > cfg.tolerance && heap.len() + 3 <= max_panels {
                let worst = heap.pop().expect("non-empty panel set");
                for child in worst.panel.split() {
                    heap.push(score(child));
                }
                // re-sum rather than update incrementally to avoid drift
                error = totals(&heap).1;
            }
            let (value, error) = totals(&heap);
            Integral2 {
                value,
                error,
                panels: heap.len(),
                converged: error[0] <= cfg.tolerance && error[1] <= cfg.tolerance,
            }
        }
    }
}
