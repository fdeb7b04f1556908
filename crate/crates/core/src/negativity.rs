//! Phase-space negativity: 2D and 4D quadrature of ½∫(|W| - W), the sharp
//! measurement negativity map N_km, and the resolution-channel mixture
//! formula.
//!
//! The |W| integrand has a kink along the W = 0 set; on trapezoid grids the
//! innermost axis resolves sign crossings with per-cell quadratic models
//! (curvature from second differences, exact negative-part integrals),
//! which removes the one-sided kink bias; the outer mode locally refines
//! the cells that carry the negative-part support.
//!
//! All parallel reductions collect per-point partial sums in index order and
//! fold them sequentially, so results are bitwise identical for any worker
//! count.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::coarse::ResolutionWeights;
use crate::error::{Error, Result};
use crate::fockspace::{
    CutObservable, DensityOperator, FockVector, OddEvenIndexMap, SubspaceRotation,
};
use crate::phasespace::{wigner_dyad_table, wigner_of_vectors, TwoModeWigner};
use crate::special::gauss_legendre;

/// Hard cap on (outer points)² x (inner points)² for the 4D contraction.
pub const FOUR_D_POINT_BUDGET: usize = 1 << 35;

/// Per-axis quadrature rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum QuadratureRule {
    /// Uniform trapezoid; near-spectral for integrands decaying to zero at
    /// the boundary, resolves fringes uniformly, and supports the
    /// crossing-aware negative-part cells. Default.
    #[default]
    Trapezoid,
    GaussLegendre,
}

/// A square phase-space box [-L, L]² sampled with `points` nodes per real
/// axis.
///
/// The 4D contraction additionally oversamples: the inner mode runs at
/// `points * inner_factor` resolution, and outer cells touching the support
/// of the negative part are re-integrated at `refine_factor` times the base
/// resolution. Both factors are 1:1 inherited by `refined()`, so doubling
/// `points` doubles every effective resolution.
#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    half_width: f64,
    points: usize,
    rule: QuadratureRule,
    inner_factor: usize,
    refine_factor: usize,
}

impl QuadratureGrid {
    pub fn new(half_width: f64, points: usize, rule: QuadratureRule) -> Result<Self> {
        if !(half_width > 0.0) || points < 2 {
            return Err(Error::InvalidCoarseGraining(format!(
                "invalid quadrature grid: half_width {half_width}, points {points}"
            )));
        }
        Ok(Self {
            half_width,
            points,
            rule,
            inner_factor: 3,
            refine_factor: 4,
        })
    }

    /// Default figure grid: 81 base points per axis, half-width
    /// max(4, |α| + 4), enough to resolve cat-lobe fringes at α <= 3 after
    /// oversampling.
    pub fn default_for(alpha_mag: f64) -> Self {
        Self::new(
            alpha_mag.abs().max(0.0) + 4.0,
            81,
            QuadratureRule::Trapezoid,
        )
        .expect("default grid is valid")
    }

    /// Overrides the 4D oversampling factors (both >= 1).
    pub fn with_oversampling(mut self, inner_factor: usize, refine_factor: usize) -> Self {
        self.inner_factor = inner_factor.max(1);
        self.refine_factor = refine_factor.max(1);
        self
    }

    pub fn inner_factor(&self) -> usize {
        self.inner_factor
    }

    pub fn refine_factor(&self) -> usize {
        self.refine_factor
    }

    /// The inner-mode grid of the 4D contraction: same box, oversampled.
    pub fn inner_grid(&self) -> QuadratureGrid {
        let mut g = self.clone();
        g.points = nested_points(self.points, self.inner_factor);
        g
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    /// Same extent, rule, and oversampling; `factor` times the points per
    /// axis (nested nodes).
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let mut g = Self::new(
            self.half_width,
            nested_points(self.points, factor),
            self.rule,
        )?;
        g.inner_factor = self.inner_factor;
        g.refine_factor = self.refine_factor;
        Ok(g)
    }

    /// 1D nodes and weights on [-L, L].
    pub fn nodes_weights(&self) -> (Vec<f64>, Vec<f64>) {
        let l = self.half_width;
        match self.rule {
            QuadratureRule::Trapezoid => {
                let n = self.points;
                let h = 2.0 * l / (n - 1) as f64;
                let nodes = (0..n).map(|i| -l + i as f64 * h).collect();
                let weights = (0..n)
                    .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
                    .collect();
                (nodes, weights)
            }
            QuadratureRule::GaussLegendre => {
                let (x, w) = gauss_legendre(self.points);
                (
                    x.iter().map(|t| l * t).collect(),
                    w.iter().map(|t| l * t).collect(),
                )
            }
        }
    }

    /// Uniform cell width (trapezoid only).
    fn cell_width(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }

    /// Complex grid points in row-major (re outer, im inner) order with 2D
    /// weights.
    pub fn complex_points(&self) -> (Vec<C64>, Vec<f64>) {
        let (nodes, weights) = self.nodes_weights();
        let mut pts = Vec::with_capacity(nodes.len() * nodes.len());
        let mut wts = Vec::with_capacity(nodes.len() * nodes.len());
        for (x, wx) in nodes.iter().zip(&weights) {
            for (y, wy) in nodes.iter().zip(&weights) {
                pts.push(C64::new(*x, *y));
                wts.push(wx * wy);
            }
        }
        (pts, wts)
    }
}

/// A negativity value with its normalization diagnostic and grid
/// provenance.
#[derive(Clone, Copy, Debug)]
pub struct NegativityResult {
    pub value: f64,
    pub integral_of_w: f64,
    /// False when the grid integral of W strays more than 2e-3 from 1.
    pub reliable: bool,
    /// Base points per axis of the grid that produced the value.
    pub grid_points: usize,
    /// Half-width of the grid that produced the value.
    pub grid_half_width: f64,
}

impl NegativityResult {
    fn from_sums(neg: f64, integral: f64, grid: &QuadratureGrid) -> Self {
        Self {
            value: neg,
            integral_of_w: integral,
            reliable: (integral - 1.0).abs() <= 2e-3,
            grid_points: grid.points(),
            grid_half_width: grid.half_width(),
        }
    }
}

/// -∫ min(q, 0) over one cell of width h for the quadratic model
/// q(s) = a(1-s) + b s + (c/2) s(s-1) on s ∈ [0, 1], where c estimates
/// h² f'' from second differences. Exact for the parabola, root-splitting
/// included.
fn cell_negative_part(a: f64, b: f64, c: f64, h: f64) -> f64 {
    // q(s) = (c/2) s² + (b - a - c/2) s + a.
    let anti = |s: f64| a * s + (b - a) * s * s / 2.0 + 0.5 * c * (s * s * s / 3.0 - s * s / 2.0);
    let q = |s: f64| a + (b - a) * s + 0.5 * c * s * (s - 1.0);
    // Breakpoints: cell boundaries plus interior roots of q.
    let mut marks = [0.0_f64, 1.0, 1.0, 1.0];
    let mut n_marks = 1;
    let qa = 0.5 * c;
    let qb = b - a - 0.5 * c;
    if qa.abs() < 1e-14 * (qb.abs() + a.abs() + 1e-300) {
        // Effectively linear.
        if (a > 0.0) != (b > 0.0) && qb != 0.0 {
            let root = -a / qb;
            if root > 0.0 && root < 1.0 {
                marks[n_marks] = root;
                n_marks += 1;
            }
        }
    } else {
        let disc = qb * qb - 4.0 * qa * a;
        if disc > 0.0 {
            let sq = disc.sqrt();
            // Stable pair: r1 via the large-magnitude sum, r2 via Vieta.
            let t = -0.5 * (qb + qb.signum() * sq);
            let (r1, r2) = (t / qa, a / t);
            let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            for root in [lo, hi] {
                if root > 0.0 && root < 1.0 {
                    marks[n_marks] = root;
                    n_marks += 1;
                }
            }
        }
    }
    marks[n_marks] = 1.0;
    n_marks += 1;
    let mut neg = 0.0;
    for w in marks[..n_marks].windows(2) {
        let (s0, s1) = (w[0], w[1]);
        if s1 - s0 < 1e-15 {
            continue;
        }
        if q(0.5 * (s0 + s1)) < 0.0 {
            neg -= anti(s1) - anti(s0);
        }
    }
    neg * h
}

/// (negative_part, integral) of one inner-axis row.
fn row_sums(values: &[f64], wy: &[f64], h: f64, rule: QuadratureRule) -> (f64, f64) {
    let int: f64 = values.iter().zip(wy).map(|(v, w)| v * w).sum();
    let neg = match rule {
        QuadratureRule::Trapezoid => {
            let n = values.len();
            let d2 = |i: usize| -> f64 {
                if n < 3 {
                    return 0.0;
                }
                let j = i.clamp(1, n - 2);
                values[j - 1] - 2.0 * values[j] + values[j + 1]
            };
            let mut neg = 0.0;
            for i in 0..n - 1 {
                let (a, b) = (values[i], values[i + 1]);
                if a >= 0.0 && b >= 0.0 {
                    continue;
                }
                let c = 0.5 * (d2(i) + d2(i + 1));
                neg += cell_negative_part(a, b, c, h);
            }
            neg
        }
        QuadratureRule::GaussLegendre => values
            .iter()
            .zip(wy)
            .map(|(v, w)| if *v < 0.0 { -w * v } else { 0.0 })
            .sum(),
    };
    (neg, int)
}

/// ½ ∫ (|W| - W) d²β for a single-mode Wigner function. Internally the
/// grid is oversampled by inner_factor * refine_factor (pointwise W is
/// cheap in 2D), with crossing-aware rows.
pub fn negativity_single<F: Fn(C64) -> f64>(w: F, grid: &QuadratureGrid) -> NegativityResult {
    let fine = match grid.rule() {
        QuadratureRule::Trapezoid => grid
            .refined(grid.inner_factor() * grid.refine_factor())
            .expect("oversampled grid is valid"),
        QuadratureRule::GaussLegendre => grid.clone(),
    };
    let (nodes, wts) = fine.nodes_weights();
    let h = fine.cell_width();
    let mut neg = 0.0;
    let mut integral = 0.0;
    let mut row = vec![0.0; nodes.len()];
    for (x, wx) in nodes.iter().zip(&wts) {
        for (slot, y) in row.iter_mut().zip(&nodes) {
            *slot = w(C64::new(*x, *y));
        }
        let (rn, ri) = row_sums(&row, &wts, h, fine.rule());
        neg += wx * rn;
        integral += wx * ri;
    }
    NegativityResult::from_sums(neg, integral, grid)
}

fn run_with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool construction");
    pool.install(f)
}

/// `base * factor` keeping nested nodes: the coarse nodes stay grid points.
fn nested_points(base: usize, factor: usize) -> usize {
    (base - 1) * factor + 1
}

/// Shared 4D skeleton. The inner (second) mode is integrated on the
/// oversampled inner grid with crossing-aware rows; the outer mode runs a
/// base pass on `grid` and then re-integrates every base cell touching the
/// support of the negative part at `refine_factor` times the resolution.
/// `prepare` folds an outer phase-space point into whatever the contraction
/// needs; `value` produces W at one (outer state, inner index) pair.
fn contract_negativity<S, P, F>(
    grid: &QuadratureGrid,
    workers: usize,
    prepare: P,
    value: F,
) -> Result<NegativityResult>
where
    S: Send,
    P: Fn(C64) -> S + Sync,
    F: Fn(&S, usize) -> f64 + Sync,
{
    let inner = grid.inner_grid();
    let n_in = inner.points();
    if grid.points().pow(2) * n_in.pow(2) > FOUR_D_POINT_BUDGET {
        return Err(Error::GridBudgetExceeded {
            points: grid.points().max(n_in),
            budget: FOUR_D_POINT_BUDGET,
        });
    }
    let (_, wts_in) = inner.nodes_weights();
    let h_in = inner.cell_width();
    let rule = grid.rule();

    // Inner-plane negative part and plain integral for one outer point.
    let f_plane = |state: &S| -> (f64, f64) {
        let mut neg = 0.0;
        let mut int = 0.0;
        let mut row = vec![0.0; n_in];
        for gx in 0..n_in {
            for (gy, slot) in row.iter_mut().enumerate() {
                *slot = value(state, gx * n_in + gy);
            }
            let (rn, ri) = row_sums(&row, &wts_in, h_in, rule);
            neg += wts_in[gx] * rn;
            int += wts_in[gx] * ri;
        }
        (neg, int)
    };

    let n = grid.points();
    let (nodes, _) = grid.nodes_weights();
    let (_, wts2d) = grid.complex_points();
    // Base pass over outer nodes.
    let base: Vec<(f64, f64)> = run_with_workers(workers, || {
        (0..n * n)
            .into_par_iter()
            .map(|p| {
                let beta = C64::new(nodes[p / n], nodes[p % n]);
                f_plane(&prepare(beta))
            })
            .collect()
    });
    let integral: f64 = base.iter().zip(&wts2d).map(|((_, i), w)| i * w).sum();

    if rule == QuadratureRule::GaussLegendre || grid.refine_factor() == 1 {
        let neg: f64 = base.iter().zip(&wts2d).map(|((g, _), w)| g * w).sum();
        return Ok(NegativityResult::from_sums(neg, integral, grid));
    }

    // Mark outer cells carrying support of the negative part, plus a margin
    // ring, and re-integrate them at refine_factor x the base resolution.
    // Cells whose corners all sit below a relative floor keep their coarse
    // value; their own mass is negligible by the same floor.
    let nc = n - 1;
    let f_max = base.iter().map(|(g, _)| *g).fold(0.0_f64, f64::max);
    let floor = 1e-6 * f_max;
    let mut marked = vec![false; nc * nc];
    for cx in 0..nc {
        for cy in 0..nc {
            let support = [(0, 0), (0, 1), (1, 0), (1, 1)]
                .iter()
                .any(|(dx, dy)| base[(cx + dx) * n + cy + dy].0 > floor);
            if support {
                for mx in cx.saturating_sub(1)..=(cx + 1).min(nc - 1) {
                    for my in cy.saturating_sub(1)..=(cy + 1).min(nc - 1) {
                        marked[mx * nc + my] = true;
                    }
                }
            }
        }
    }
    let h = grid.cell_width();
    let coarse_neg: f64 = (0..nc * nc)
        .map(|c| {
            if marked[c] {
                return 0.0;
            }
            let (cx, cy) = (c / nc, c % nc);
            let corners = [
                base[cx * n + cy].0,
                base[cx * n + cy + 1].0,
                base[(cx + 1) * n + cy].0,
                base[(cx + 1) * n + cy + 1].0,
            ];
            h * h / 4.0 * corners.iter().sum::<f64>()
        })
        .sum();
    let cells: Vec<usize> = (0..nc * nc).filter(|c| marked[*c]).collect();
    let r = grid.refine_factor();
    let hs = h / r as f64;
    let refined: Vec<f64> = run_with_workers(workers, || {
        cells
            .par_iter()
            .map(|c| {
                let (cx, cy) = (c / nc, c % nc);
                let x0 = nodes[cx];
                let y0 = nodes[cy];
                // F on the (r+1)² sub-nodes of this cell.
                let mut f = vec![0.0; (r + 1) * (r + 1)];
                for sx in 0..=r {
                    for sy in 0..=r {
                        let beta = C64::new(x0 + sx as f64 * hs, y0 + sy as f64 * hs);
                        f[sx * (r + 1) + sy] = f_plane(&prepare(beta)).0;
                    }
                }
                let mut acc = 0.0;
                for sx in 0..r {
                    for sy in 0..r {
                        acc += f[sx * (r + 1) + sy]
                            + f[sx * (r + 1) + sy + 1]
                            + f[(sx + 1) * (r + 1) + sy]
                            + f[(sx + 1) * (r + 1) + sy + 1];
                    }
                }
                hs * hs / 4.0 * acc
            })
            .collect()
    });
    let neg = coarse_neg + refined.iter().sum::<f64>();
    Ok(NegativityResult::from_sums(neg, integral, grid))
}

/// 4D negativity of an assembled analytic two-mode Wigner function. The four
/// basis functions of each mode are tabulated on the 2D grid once, then the
/// point-pair contraction runs in parallel over the first mode's points.
pub fn negativity_two_mode(
    w: &TwoModeWigner,
    grid: &QuadratureGrid,
    workers: usize,
) -> Result<NegativityResult> {
    let (pts_in, _) = grid.inner_grid().complex_points();
    let vb: Vec<[C64; 4]> = run_with_workers(workers, || {
        pts_in.par_iter().map(|p| w.basis_b().values(*p)).collect()
    });
    let coeffs = *w.coefficients();
    // G_kl(β) = Σ_ij C[(ik)][(jl)] wa_ij(β); W(β,γ) = Σ_kl G_kl(β) wb_kl(γ).
    let g_factors = |beta: C64| -> [C64; 4] {
        let wa = w.basis_a().values(beta);
        let mut g = [C64::ZERO; 4];
        for i in 0..2 {
            for j in 0..2 {
                let wij = wa[2 * i + j];
                if wij.norm_sqr() == 0.0 {
                    continue;
                }
                for k in 0..2 {
                    for l in 0..2 {
                        g[2 * k + l] += coeffs[2 * i + k][2 * j + l] * wij;
                    }
                }
            }
        }
        g
    };
    contract_negativity(grid, workers, g_factors, |gp, q| {
        let wb = &vb[q];
        (gp[0] * wb[0] + gp[1] * wb[1] + gp[2] * wb[2] + gp[3] * wb[3]).re
    })
}

/// Ordered pair indices (ket, bra) into a mode's branch-vector list.
type Pair = (usize, usize);

/// Per-grid-point Wigner values of dyads |u><v| for a list of vector pairs.
/// Row-major: `out[point][pair]`.
fn pair_values_grid(
    vectors: &[Vec<C64>],
    pairs: &[Pair],
    pts: &[C64],
    dim: usize,
    workers: usize,
) -> Vec<Vec<C64>> {
    run_with_workers(workers, || {
        pts.par_iter()
            .map(|beta| {
                let table = wigner_dyad_table(dim, *beta);
                pairs
                    .iter()
                    .map(|(ket, bra)| {
                        wigner_of_vectors(&vectors[*ket], &vectors[*bra], &table, dim)
                    })
                    .collect()
            })
            .collect()
    })
}

/// Two-mode operator in factorized dyad form:
/// ρ = Σ_T coeff_T |a_ket><a_bra| ⊗ |b_ket><b_bra| over stored single-mode
/// vectors. Wigner evaluation and negativity run through per-mode dyad
/// tables, exact at every phase-space point for truncated states.
#[derive(Clone, Debug)]
pub struct FactorizedTwoMode {
    dim: usize,
    vectors_a: Vec<Vec<C64>>,
    vectors_b: Vec<Vec<C64>>,
    /// (coeff, [a_ket, a_bra, b_ket, b_bra])
    terms: Vec<(C64, [usize; 4])>,
}

impl FactorizedTwoMode {
    /// Assembles from explicit per-mode vectors and (coeff, [a_ket, a_bra,
    /// b_ket, b_bra]) terms.
    pub fn from_parts(
        vectors_a: Vec<Vec<C64>>,
        vectors_b: Vec<Vec<C64>>,
        terms: Vec<(C64, [usize; 4])>,
    ) -> Self {
        let dim = vectors_a.first().map(|v| v.len()).unwrap_or(1);
        Self {
            dim,
            vectors_a,
            vectors_b,
            terms,
        }
    }

    /// The entangled template (|e>|o> + |o>|e>)/√2 as a pure-state operator.
    pub fn symmetric_pair(even: &FockVector, odd: &FockVector) -> Self {
        let half = C64::new(0.5, 0.0);
        Self {
            dim: even.dim(),
            vectors_a: vec![even.amplitudes().to_vec(), odd.amplitudes().to_vec()],
            vectors_b: vec![even.amplitudes().to_vec(), odd.amplitudes().to_vec()],
            terms: vec![
                (half, [0, 0, 1, 1]),
                (half, [0, 1, 1, 0]),
                (half, [1, 0, 0, 1]),
                (half, [1, 1, 0, 0]),
            ],
        }
    }

    /// Post-measurement state of the entangled pair under the sharp
    /// non-selective measurement O^k(θ_a) ⊗ O^m(θ_b).
    pub fn sharp_post_state(
        even: &FockVector,
        odd: &FockVector,
        cut_a: &CutObservable,
        cut_b: &CutObservable,
        rot_a: &SubspaceRotation,
        rot_b: &SubspaceRotation,
    ) -> Self {
        let branch = |rot: &SubspaceRotation, cut: &CutObservable| -> Vec<Vec<C64>> {
            // Π_s(θ)|x> = U(θ) P_s U(θ) |x> for s ∈ {+,-}, x ∈ {e,o}:
            // ordering [(+,e), (+,o), (-,e), (-,o)].
            let ue = rot.apply(even.amplitudes());
            let uo = rot.apply(odd.amplitudes());
            let mut out = Vec::with_capacity(4);
            for mask in [cut.plus_mask(), cut.minus_mask()] {
                for base in [&ue, &uo] {
                    let masked: Vec<C64> = base.iter().zip(&mask).map(|(a, m)| a * *m).collect();
                    out.push(rot.apply(&masked));
                }
            }
            out
        };
        let vectors_a = branch(rot_a, cut_a);
        let vectors_b = branch(rot_b, cut_b);
        let half = C64::new(0.5, 0.0);
        let mut terms = Vec::with_capacity(16);
        for s in 0..2 {
            for t in 0..2 {
                let (ae, ao) = (2 * s, 2 * s + 1);
                let (be, bo) = (2 * t, 2 * t + 1);
                // (A_s ⊗ B_t)|ψ><ψ|(A_s ⊗ B_t) expanded over the pair.
                terms.push((half, [ae, ae, bo, bo]));
                terms.push((half, [ae, ao, bo, be]));
                terms.push((half, [ao, ae, be, bo]));
                terms.push((half, [ao, ao, be, be]));
            }
        }
        Self {
            dim: even.dim(),
            vectors_a,
            vectors_b,
            terms,
        }
    }

    pub fn mode_dim(&self) -> usize {
        self.dim
    }

    pub fn raw_vectors_a(&self) -> &[Vec<C64>] {
        &self.vectors_a
    }

    pub fn raw_vectors_b(&self) -> &[Vec<C64>] {
        &self.vectors_b
    }

    pub fn raw_terms(&self) -> &[(C64, [usize; 4])] {
        &self.terms
    }

    /// Pointwise two-mode Wigner value.
    pub fn wigner(&self, beta: C64, gamma: C64) -> f64 {
        let ta = wigner_dyad_table(self.dim, beta);
        let tb = wigner_dyad_table(self.dim, gamma);
        let mut acc = C64::ZERO;
        for (coeff, [ak, ab, bk, bb]) in &self.terms {
            let wa = wigner_of_vectors(&self.vectors_a[*ak], &self.vectors_a[*ab], &ta, self.dim);
            let wb = wigner_of_vectors(&self.vectors_b[*bk], &self.vectors_b[*bb], &tb, self.dim);
            acc += coeff * wa * wb;
        }
        acc.re
    }

    /// Dense matrix form, for trace and positivity diagnostics.
    pub fn to_dense(&self) -> DensityOperator {
        let d = self.dim;
        let mut rho = DensityOperator::zeros(d * d);
        for (coeff, [ak, ab, bk, bb]) in &self.terms {
            let mut ket = vec![C64::ZERO; d * d];
            let mut bra = vec![C64::ZERO; d * d];
            for i in 0..d {
                for j in 0..d {
                    ket[i * d + j] = self.vectors_a[*ak][i] * self.vectors_b[*bk][j];
                    bra[i * d + j] = self.vectors_a[*ab][i] * self.vectors_b[*bb][j];
                }
            }
            rho.accumulate_dyad(&ket, &bra, *coeff);
        }
        rho
    }

    #[allow(clippy::type_complexity)]
    fn distinct_pairs(&self) -> (Vec<Pair>, Vec<Pair>, Vec<(C64, usize, usize)>) {
        let mut pairs_a: Vec<Pair> = Vec::new();
        let mut pairs_b: Vec<Pair> = Vec::new();
        let mut compact = Vec::with_capacity(self.terms.len());
        for (coeff, [ak, ab, bk, bb]) in &self.terms {
            let pa = (*ak, *ab);
            let pb = (*bk, *bb);
            let ia = pairs_a.iter().position(|p| *p == pa).unwrap_or_else(|| {
                pairs_a.push(pa);
                pairs_a.len() - 1
            });
            let ib = pairs_b.iter().position(|p| *p == pb).unwrap_or_else(|| {
                pairs_b.push(pb);
                pairs_b.len() - 1
            });
            compact.push((*coeff, ia, ib));
        }
        (pairs_a, pairs_b, compact)
    }

    /// 4D negativity: the inner mode's dyad-pair values are tabulated on
    /// the oversampled inner grid; the outer mode's pair values are computed
    /// per requested point (base pass + support refinement).
    pub fn negativity(&self, grid: &QuadratureGrid, workers: usize) -> Result<NegativityResult> {
        let (pts_in, _) = grid.inner_grid().complex_points();
        let (pairs_a, pairs_b, compact) = self.distinct_pairs();
        let tb = pair_values_grid(&self.vectors_b, &pairs_b, &pts_in, self.dim, workers);
        let nb = pairs_b.len();
        let dim = self.dim;
        contract_negativity(
            grid,
            workers,
            |beta| {
                // Row vector over the B-pair space for this β point.
                let table = wigner_dyad_table(dim, beta);
                let a_vals: Vec<C64> = pairs_a
                    .iter()
                    .map(|(ket, bra)| {
                        wigner_of_vectors(&self.vectors_a[*ket], &self.vectors_a[*bra], &table, dim)
                    })
                    .collect();
                let mut row = vec![C64::ZERO; nb];
                for (coeff, ia, ib) in &compact {
                    row[*ib] += coeff * a_vals[*ia];
                }
                row
            },
            |row, q| {
                let brow = &tb[q];
                row.iter().zip(brow).map(|(r, b)| (r * b).re).sum()
            },
        )
    }
}

/// Per-point aggregate of a symmetric-pair channel mode: with branch pair
/// values A_s = [w(e,e), w(e,o), w(o,e), w(o,o)] summed over branches s,
/// only (Σ w(e,e), Σ w(o,o), Σ w(e,o)) survive in the contraction
/// W = ½ [a_ee b_oo + a_oo b_ee + 2 Re(a_eo conj(b_eo))].
#[derive(Clone, Copy, Debug)]
struct PairAggregate {
    ee: f64,
    oo: f64,
    eo: C64,
}

fn pair_aggregate(branches: &[(f64, [Vec<C64>; 2])], beta: C64, dim: usize) -> PairAggregate {
    let table = wigner_dyad_table(dim, beta);
    let mut agg = PairAggregate {
        ee: 0.0,
        oo: 0.0,
        eo: C64::ZERO,
    };
    for (weight, [ve, vo]) in branches {
        agg.ee += weight * wigner_of_vectors(ve, ve, &table, dim).re;
        agg.oo += weight * wigner_of_vectors(vo, vo, &table, dim).re;
        agg.eo += *weight * wigner_of_vectors(ve, vo, &table, dim);
    }
    agg
}

fn contract_aggregates(a: &PairAggregate, b: &PairAggregate) -> f64 {
    0.5 * (a.ee * b.oo + a.oo * b.ee + 2.0 * (a.eo.re * b.eo.re + a.eo.im * b.eo.im))
}

/// The negativity map N_km of sharp post-measurement states over cut ranges,
/// with enough provenance to evaluate weighted sums.
#[derive(Clone, Debug)]
pub struct NegativityMap {
    pub ks: Vec<i64>,
    pub ms: Vec<i64>,
    /// values[k_index][m_index]
    pub values: Vec<Vec<NegativityResult>>,
    pub index_range: (i64, i64),
}

impl NegativityMap {
    pub fn get(&self, k: i64, m: i64) -> Option<&NegativityResult> {
        let ik = self.ks.iter().position(|x| *x == k)?;
        let im = self.ms.iter().position(|x| *x == m)?;
        Some(&self.values[ik][im])
    }
}

/// Shared machinery for the resolution-channel negativity quantities: branch
/// vectors per cut and per-mode dyad-Wigner tables on a grid.
pub struct ResolutionNegativityEngine {
    even: FockVector,
    odd: FockVector,
    rot_a: SubspaceRotation,
    rot_b: SubspaceRotation,
    map: OddEvenIndexMap,
    grid: QuadratureGrid,
    workers: usize,
}

impl ResolutionNegativityEngine {
    pub fn new(
        even: FockVector,
        odd: FockVector,
        theta_a: f64,
        theta_b: f64,
        map: OddEvenIndexMap,
        grid: QuadratureGrid,
        workers: usize,
    ) -> Result<Self> {
        if map.n_max() != even.n_max() {
            return Err(Error::InvalidState(
                "index map truncation does not match the pair".into(),
            ));
        }
        let rot_a = SubspaceRotation::new(theta_a, even.clone(), odd.clone())?;
        let rot_b = SubspaceRotation::new(theta_b, even.clone(), odd.clone())?;
        Ok(Self {
            even,
            odd,
            rot_a,
            rot_b,
            map,
            grid,
            workers,
        })
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    fn clamp(&self, k: i64) -> i64 {
        let (lo, hi) = self.map.index_range();
        k.clamp(lo, hi + 1)
    }

    /// Post-measurement state of the sharp cell (k, m) in factorized form.
    pub fn cell_state(&self, k: i64, m: i64) -> Result<FactorizedTwoMode> {
        let cut_a = CutObservable::new(self.clamp(k), &self.map)?;
        let cut_b = CutObservable::new(self.clamp(m), &self.map)?;
        Ok(FactorizedTwoMode::sharp_post_state(
            &self.even,
            &self.odd,
            &cut_a,
            &cut_b,
            &self.rot_a,
            &self.rot_b,
        ))
    }

    /// The (+, -) branch vectors Π_s^k U |x> of one mode, with unit weight.
    fn sharp_branches(
        &self,
        rot: &SubspaceRotation,
        cut: &CutObservable,
    ) -> Vec<(f64, [Vec<C64>; 2])> {
        let ue = rot.apply(self.even.amplitudes());
        let uo = rot.apply(self.odd.amplitudes());
        let mut out = Vec::with_capacity(2);
        for mask in [cut.plus_mask(), cut.minus_mask()] {
            let me: Vec<C64> = ue.iter().zip(&mask).map(|(a, m)| a * *m).collect();
            let mo: Vec<C64> = uo.iter().zip(&mask).map(|(a, m)| a * *m).collect();
            out.push((1.0, [rot.apply(&me), rot.apply(&mo)]));
        }
        out
    }

    fn aggregate_negativity(
        &self,
        branches_a: &[(f64, [Vec<C64>; 2])],
        branches_b: &[(f64, [Vec<C64>; 2])],
    ) -> Result<NegativityResult> {
        let dim = self.even.dim();
        let (pts_in, _) = self.grid.inner_grid().complex_points();
        let tb: Vec<PairAggregate> = run_with_workers(self.workers, || {
            pts_in
                .par_iter()
                .map(|p| pair_aggregate(branches_b, *p, dim))
                .collect()
        });
        contract_negativity(
            &self.grid,
            self.workers,
            |beta| pair_aggregate(branches_a, beta, dim),
            |a, q| contract_aggregates(a, &tb[q]),
        )
    }

    /// Negativity of the post-measurement state after the sharp measurement
    /// O^k(θ_a) ⊗ O^m(θ_b).
    pub fn cell_negativity(&self, k: i64, m: i64) -> Result<NegativityResult> {
        let cut_a = CutObservable::new(self.clamp(k), &self.map)?;
        let cut_b = CutObservable::new(self.clamp(m), &self.map)?;
        self.aggregate_negativity(
            &self.sharp_branches(&self.rot_a, &cut_a),
            &self.sharp_branches(&self.rot_b, &cut_b),
        )
    }

    /// N_km over inclusive cut ranges.
    pub fn negativity_map(
        &self,
        k_range: (i64, i64),
        m_range: (i64, i64),
    ) -> Result<NegativityMap> {
        let (lo, hi) = self.map.index_range();
        for &k in &[k_range.0, k_range.1, m_range.0, m_range.1] {
            if k < lo || k > hi + 1 {
                return Err(Error::IndexOutOfRange {
                    index: k,
                    n_max: self.map.n_max(),
                });
            }
        }
        let ks: Vec<i64> = (k_range.0..=k_range.1).collect();
        let ms: Vec<i64> = (m_range.0..=m_range.1).collect();
        let mut values = Vec::with_capacity(ks.len());
        for &k in &ks {
            let mut row = Vec::with_capacity(ms.len());
            for &m in &ms {
                row.push(self.cell_negativity(k, m)?);
            }
            values.push(row);
        }
        Ok(NegativityMap {
            ks,
            ms,
            values,
            index_range: (lo, hi),
        })
    }

    /// Direct negativity of the resolution-channel output
    /// ρ_res = Σ P(k)P(m) ρ_km, via weight-aggregated per-mode tables.
    pub fn direct_mixture_negativity(
        &self,
        weights: &ResolutionWeights,
    ) -> Result<NegativityResult> {
        let kc = weights.k_cut();
        // Distinct clamped cuts with their accumulated weights.
        let mut cuts: Vec<(i64, f64)> = Vec::new();
        for k in -kc..=kc {
            let kk = self.clamp(k);
            match cuts.iter_mut().find(|(c, _)| *c == kk) {
                Some((_, w)) => *w += weights.prob(k),
                None => cuts.push((kk, weights.prob(k))),
            }
        }
        let branches = |rot: &SubspaceRotation| -> Result<Vec<(f64, [Vec<C64>; 2])>> {
            let mut out = Vec::with_capacity(2 * cuts.len());
            for (kk, weight) in &cuts {
                let cut = CutObservable::new(*kk, &self.map)?;
                for (w, pair) in self.sharp_branches(rot, &cut) {
                    out.push((w * weight, pair));
                }
            }
            Ok(out)
        };
        self.aggregate_negativity(&branches(&self.rot_a)?, &branches(&self.rot_b)?)
    }
}

/// Σ_{k,m} P(k) P(m) N_km over the weight support; cuts beyond the map's
/// index range saturate and are read from the boundary cells.
pub fn negativity_resolution(weights: &ResolutionWeights, map: &NegativityMap) -> Result<f64> {
    let (lo, hi) = map.index_range;
    let clamp = |k: i64| k.clamp(lo, hi + 1);
    let kc = weights.k_cut();
    let mut acc = 0.0;
    for k in -kc..=kc {
        for m in -kc..=kc {
            let cell = map.get(clamp(k), clamp(m)).ok_or(Error::WeightCoverage {
                k_cut: kc,
                needed: clamp(k).max(clamp(m)),
            })?;
            acc += weights.prob(k) * weights.prob(m) * cell.value;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::IndexConvention;

    const PI: f64 = std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn grid_weights_sum_to_box() {
        for rule in [QuadratureRule::Trapezoid, QuadratureRule::GaussLegendre] {
            let grid = QuadratureGrid::new(3.0, 41, rule).unwrap();
            let (_, w) = grid.nodes_weights();
            let total: f64 = w.iter().sum();
            assert!((total - 6.0).abs() < 1e-12, "{rule:?}");
        }
    }

    #[test]
    fn grid_budget_guard() {
        // 2D-only use is fine at high resolution; the 4D contraction refuses.
        let grid = QuadratureGrid::new(4.0, 500, QuadratureRule::Trapezoid).unwrap();
        let e = FockVector::vacuum(4);
        let o = FockVector::fock(1, 4).unwrap();
        let psi = FactorizedTwoMode::symmetric_pair(&e, &o);
        assert!(matches!(
            psi.negativity(&grid, 1),
            Err(Error::GridBudgetExceeded { .. })
        ));
    }

    #[test]
    fn crossing_cell_negative_parts() {
        // Linear cases (zero curvature): fully positive, fully negative,
        // crossing triangle.
        assert_eq!(cell_negative_part(1.0, 2.0, 0.0, 0.1), 0.0);
        assert!((cell_negative_part(-1.0, -3.0, 0.0, 0.1) - 0.2).abs() < 1e-15);
        let h = 0.4;
        assert!((cell_negative_part(1.0, -1.0, 0.0, h) - h / 4.0).abs() < 1e-15);
        assert!((cell_negative_part(-1.0, 1.0, 0.0, h) - h / 4.0).abs() < 1e-15);
        // Parabola q(s) = s(s-1): endpoints 0, negative inside, area 1/6.
        assert!((cell_negative_part(0.0, 0.0, 2.0, 1.0) - 1.0 / 6.0).abs() < 1e-14);
        // Exactness on a general quadratic against fine Riemann sampling.
        let (a, b, c) = (0.8, -0.5, 3.0);
        let q = |s: f64| a + (b - a) * s + 0.5 * c * s * (s - 1.0);
        let mut brute = 0.0;
        let m = 200_000;
        for i in 0..m {
            let s = (i as f64 + 0.5) / m as f64;
            let v = q(s);
            if v < 0.0 {
                brute -= v / m as f64;
            }
        }
        assert!((cell_negative_part(a, b, c, 1.0) - brute).abs() < 1e-8);
    }

    #[test]
    fn vacuum_negativity_is_zero() {
        let grid = QuadratureGrid::default_for(0.0);
        let res = negativity_single(|beta| 2.0 / PI * (-2.0 * beta.norm_sqr()).exp(), &grid);
        assert!(res.reliable, "integral {}", res.integral_of_w);
        assert!(res.value.abs() < 1e-10);
    }

    #[test]
    fn fock_one_negativity_matches_radial_closed_form() {
        // ½∫(|W|-W) for |1>: radial integration of (2/π)(4t²-1)e^{-2t²}
        // gives 2 e^{-1/2} - 1.
        let grid = QuadratureGrid::default_for(0.0);
        let res = negativity_single(
            |beta| {
                let t2 = beta.norm_sqr();
                2.0 / PI * (4.0 * t2 - 1.0) * (-2.0 * t2).exp()
            },
            &grid,
        );
        let expect = 2.0 * (-0.5_f64).exp() - 1.0;
        assert!(res.reliable);
        assert!(
            (res.value - expect).abs() < 1e-4,
            "{} vs {expect}",
            res.value
        );
    }

    #[test]
    fn even_cat_negativity_positive_and_grid_stable() {
        let alpha = c(2.0, 0.0);
        let basis = crate::phasespace::wigner_basis_cat(alpha).unwrap();
        let grid = QuadratureGrid::default_for(2.0);
        let res = negativity_single(|b| basis.w_ee(b), &grid);
        assert!(res.reliable);
        assert!(res.value > 0.05);
        let fine = negativity_single(|b| basis.w_ee(b), &grid.refined(2).unwrap());
        assert!(
            (res.value - fine.value).abs() < 1e-4,
            "{} vs {}",
            res.value,
            fine.value
        );
    }

    #[test]
    fn product_vacuum_two_mode_negativity_is_zero() {
        let e = FockVector::vacuum(10);
        let o = FockVector::fock(1, 10).unwrap();
        let mut m = [[C64::ZERO; 4]; 4];
        m[0][0] = C64::ONE;
        let basis = crate::phasespace::WignerBasis::Numeric { even: e, odd: o };
        let w = crate::phasespace::assemble_two_mode(&m, basis.clone(), basis).unwrap();
        let grid = QuadratureGrid::new(4.0, 61, QuadratureRule::Trapezoid).unwrap();
        let res = negativity_two_mode(&w, &grid, 2).unwrap();
        assert!(res.reliable);
        assert!(res.value < 1e-9);
    }

    #[test]
    fn factorized_matches_dense_wigner() {
        let n_max = 12;
        let e = FockVector::even_cat(c(1.2, 0.0), n_max).unwrap();
        let o = FockVector::odd_cat(c(1.2, 0.0), n_max).unwrap();
        let psi = FactorizedTwoMode::symmetric_pair(&e, &o);
        let dense = psi.to_dense();
        assert!((dense.trace().re - 1.0).abs() < 1e-12);
        for (beta, gamma) in [(c(0.4, 0.2), c(-0.3, 0.6)), (c(1.0, 0.0), c(0.0, -0.9))] {
            let fast = psi.wigner(beta, gamma);
            let slow = crate::fockspace::displaced_parity_wigner_two_mode(
                &dense,
                n_max + 1,
                beta,
                gamma,
                n_max + 40,
            );
            assert!((fast - slow).abs() < 1e-8, "{fast} vs {slow}");
        }
    }

    #[test]
    fn sharp_cell_matches_weight_concentrated_mixture() {
        let n_max = 16;
        let alpha = c(1.5, 0.0);
        let e = FockVector::even_cat(alpha, n_max).unwrap();
        let o = FockVector::odd_cat(alpha, n_max).unwrap();
        let map = OddEvenIndexMap::new(IndexConvention::EvenUpOddDown, n_max).unwrap();
        let grid = QuadratureGrid::new(5.5, 41, QuadratureRule::Trapezoid)
            .unwrap()
            .with_oversampling(2, 2);
        let engine =
            ResolutionNegativityEngine::new(e, o, PI / 4.0, 3.0 * PI / 4.0, map, grid, 2).unwrap();
        // δ → 0: the direct mixture equals the (0,0) cell.
        let w = ResolutionWeights::new(
            1e-8,
            crate::coarse::DEFAULT_WEIGHT_TAIL,
            crate::coarse::GaussianExponent::Printed,
        )
        .unwrap();
        let direct = engine.direct_mixture_negativity(&w).unwrap();
        let cell = engine.cell_negativity(0, 0).unwrap();
        assert!((direct.value - cell.value).abs() < 1e-10);
    }

    #[test]
    fn negativity_map_weighted_sum_consistency() {
        let n_max = 10;
        let alpha = c(1.2, 0.0);
        let e = FockVector::even_cat(alpha, n_max).unwrap();
        let o = FockVector::odd_cat(alpha, n_max).unwrap();
        let map = OddEvenIndexMap::new(IndexConvention::EvenUpOddDown, n_max).unwrap();
        let grid = QuadratureGrid::new(5.2, 31, QuadratureRule::Trapezoid)
            .unwrap()
            .with_oversampling(2, 2);
        let engine =
            ResolutionNegativityEngine::new(e, o, PI / 4.0, 3.0 * PI / 4.0, map, grid, 2).unwrap();
        let (lo, hi) = (-3, 4);
        let nmap = engine.negativity_map((lo, hi), (lo, hi)).unwrap();
        // Every cell is finite and nonnegative.
        for row in &nmap.values {
            for cell in row {
                assert!(cell.value.is_finite());
                assert!(cell.value >= 0.0);
            }
        }
        // δ → 0 weighted sum equals the (0,0) cell.
        let w0 = ResolutionWeights::new(
            1e-8,
            crate::coarse::DEFAULT_WEIGHT_TAIL,
            crate::coarse::GaussianExponent::Printed,
        )
        .unwrap();
        let sum0 = negativity_resolution(&w0, &nmap).unwrap();
        assert!((sum0 - nmap.get(0, 0).unwrap().value).abs() < 1e-12);
        // Weights wider than the map coverage are rejected.
        let wide = ResolutionWeights::new(
            4.0,
            crate::coarse::DEFAULT_WEIGHT_TAIL,
            crate::coarse::GaussianExponent::Printed,
        )
        .unwrap();
        assert!(matches!(
            negativity_resolution(&wide, &nmap),
            Err(Error::WeightCoverage { .. })
        ));
    }

    #[test]
    fn aggregate_fast_path_matches_generic_contraction() {
        let n_max = 12;
        let alpha = c(1.4, 0.0);
        let e = FockVector::even_cat(alpha, n_max).unwrap();
        let o = FockVector::odd_cat(alpha, n_max).unwrap();
        let map = OddEvenIndexMap::new(IndexConvention::EvenUpOddDown, n_max).unwrap();
        let grid = QuadratureGrid::new(5.4, 31, QuadratureRule::Trapezoid)
            .unwrap()
            .with_oversampling(2, 2);
        let engine =
            ResolutionNegativityEngine::new(e, o, PI / 4.0, 3.0 * PI / 4.0, map, grid.clone(), 2)
                .unwrap();
        let fast = engine.cell_negativity(1, -1).unwrap();
        let generic = engine
            .cell_state(1, -1)
            .unwrap()
            .negativity(&grid, 2)
            .unwrap();
        assert!(
            (fast.value - generic.value).abs() < 1e-12,
            "{} vs {}",
            fast.value,
            generic.value
        );
    }

    #[test]
    fn worker_count_does_not_change_bits() {
        let n_max = 10;
        let e = FockVector::even_cat(c(1.2, 0.0), n_max).unwrap();
        let o = FockVector::odd_cat(c(1.2, 0.0), n_max).unwrap();
        let psi = FactorizedTwoMode::symmetric_pair(&e, &o);
        let grid = QuadratureGrid::new(5.2, 31, QuadratureRule::Trapezoid).unwrap();
        let one = psi.negativity(&grid, 1).unwrap();
        let many = psi.negativity(&grid, 8).unwrap();
        assert_eq!(one.value.to_bits(), many.value.to_bits());
        assert_eq!(one.integral_of_w.to_bits(), many.integral_of_w.to_bits());
    }
}
