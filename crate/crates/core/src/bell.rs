//! CHSH Bell quantities under resolution and reference coarse-graining:
//! closed forms, the truncated-operator brute force, and the angle
//! maximizer.
//!
//! The quantity is B = E_ab + E_cb + E_ad - E_cd with correlators of the
//! coarse-grained parity observable in the entangled even/odd cat pair.

use num_complex::Complex64 as C64;

use crate::coarse::{reference_decay, ResolutionWeights};
use crate::error::{Error, Result};
use crate::fockspace::{FockVector, OddEvenIndexMap, SubspaceRotation};

/// Quantum bound 2√2.
pub const TSIRELSON: f64 = 2.0 * std::f64::consts::SQRT_2;

/// A quadruple of measurement angles (radians).
#[derive(Clone, Copy, Debug)]
pub struct AngleQuad {
    pub theta_a: f64,
    pub theta_b: f64,
    pub theta_c: f64,
    pub theta_d: f64,
}

/// F = cos2(θa+θb) + cos2(θc+θb) + cos2(θa+θd) - cos2(θc+θd); ranges over
/// [-2√2, 2√2].
pub fn chsh_angle_function(q: &AngleQuad) -> f64 {
    let AngleQuad {
        theta_a: a,
        theta_b: b,
        theta_c: c,
        theta_d: d,
    } = *q;
    (2.0 * (a + b)).cos() + (2.0 * (c + b)).cos() + (2.0 * (a + d)).cos() - (2.0 * (c + d)).cos()
}

/// Which form of the A-series sum to evaluate.
///
/// The printed A-series starts its outer sum at k = 0 with inner range
/// n <= k. That version contradicts both the sharp limit (it gives
/// <α_e|O⁰|α_e> ≠ 1 as δ → 0) and the brute-force operator computation,
/// which produce the k >= 1, n <= k-1 form instead (the same shape the
/// B-series already has). The derived form is the default everywhere; the
/// printed one is kept so the discrepancy stays demonstrable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SeriesForm {
    #[default]
    Derived,
    Printed,
}

/// The two series A = <α_e|M_e> and B = <α_o|M_o> entering the resolution
/// closed form.
#[derive(Clone, Copy, Debug)]
pub struct BellSeries {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub delta: f64,
}

/// Evaluates the A and B series for the resolution coarse-grained parity
/// observable. `alpha` is the (real, positive) cat amplitude; only |α|
/// enters.
pub fn bell_series(alpha: f64, weights: &ResolutionWeights) -> Result<BellSeries> {
    bell_series_with_form(alpha, weights, SeriesForm::Derived)
}

pub fn bell_series_with_form(
    alpha: f64,
    weights: &ResolutionWeights,
    form: SeriesForm,
) -> Result<BellSeries> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidState(format!(
            "bell series needs alpha > 0 (C_o diverges otherwise), got {alpha}"
        )));
    }
    let x = alpha * alpha;
    let ce2 = x.cosh().recip();
    let co2 = x.sinh().recip();
    // Partial sums S_e(j) = Σ_{n=0}^{j} x^{2n}/(2n)! and
    // S_o(j) = Σ_{n=0}^{j} x^{2n+1}/(2n+1)!, extended incrementally in k.
    let mut term_e = 1.0_f64; // x^{2n}/(2n)! at n = 0
    let mut term_o = x; // x^{2n+1}/(2n+1)! at n = 0
    let mut s_e = term_e;
    let mut s_o = term_o;
    let mut a = 0.0;
    let mut b = 0.0;
    if form == SeriesForm::Printed {
        // Printed A-series k = 0 contribution: P(0) S_e(0).
        a += weights.prob(0) * s_e;
    }
    for k in 1..=weights.k_cut() {
        let p = weights.prob(k);
        match form {
            SeriesForm::Derived => {
                // Inner sums up to n = k-1: S_e(k-1), S_o(k-1); already at
                // j = k-1 when entering iteration k.
                a += p * s_e;
                b += p * s_o;
            }
            SeriesForm::Printed => {
                // Printed A uses S_e(k); printed B matches the derived form.
                let n = k as f64;
                let next_e = term_e * x * x / ((2.0 * n - 1.0) * (2.0 * n));
                a += p * (s_e + next_e);
                b += p * s_o;
            }
        }
        // Extend both partial sums by one inner term for the next k.
        let n = k as f64;
        term_e *= x * x / ((2.0 * n - 1.0) * (2.0 * n));
        term_o *= x * x / ((2.0 * n) * (2.0 * n + 1.0));
        s_e += term_e;
        s_o += term_o;
    }
    Ok(BellSeries {
        a: 2.0 * ce2 * a,
        b: 2.0 * co2 * b,
        alpha,
        delta: weights.delta(),
    })
}

/// The θ-independent bracket (-1 + A + B - (A+B)²/4) = -(1 - (A+B)/2)²,
/// manifestly nonpositive.
fn bracket(series: &BellSeries) -> f64 {
    let half_sum = 0.5 * (series.a + series.b);
    -(1.0 - half_sum) * (1.0 - half_sum)
}

/// Closed-form correlator E_ab(θ_a, θ_b) of O_δ(θ_a) ⊗ O_δ(θ_b):
/// cos2(θ_a+θ_b)·bracket + (A-B)²/4.
///
/// The constant term is (A-B)²/4; the printed (A-B)²/2 belongs to the
/// four-term Bell sum, not the single correlator, as the operator oracle
/// confirms.
pub fn resolution_correlator_closed(series: &BellSeries, theta_a: f64, theta_b: f64) -> f64 {
    let diff = series.a - series.b;
    (2.0 * (theta_a + theta_b)).cos() * bracket(series) + 0.25 * diff * diff
}

/// Maximized Bell quantity under resolution coarse-graining:
/// B_δ = 2√2 (1 - (A+B)/2)² + (A-B)²/2.
///
/// F ranges over [-2√2, 2√2] and the bracket is a negative square, so the
/// maximum of F·bracket is 2√2·|bracket|.
pub fn bell_resolution(series: &BellSeries) -> f64 {
    let diff = series.a - series.b;
    TSIRELSON * bracket(series).abs() + 0.5 * diff * diff
}

/// Convenience: build weights-derived series and maximize.
pub fn bell_resolution_closed(alpha: f64, weights: &ResolutionWeights) -> Result<f64> {
    Ok(bell_resolution(&bell_series(alpha, weights)?))
}

/// Closed-form Bell quantity under reference coarse-graining,
/// B_Δ = 2√2 e^{-4Δ²}. Even in Δ; total function.
pub fn bell_reference(delta_big: f64) -> f64 {
    TSIRELSON * reference_decay(4.0, delta_big.abs())
}

/// Width at which B_Δ crosses the local-realistic bound 2, by bisection on
/// the closed form; equals sqrt(ln 2 / 8).
pub fn bell_reference_classical_crossing() -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bell_reference(mid) > 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Grid search plus coordinate-descent refinement of F over [0, π)⁴.
pub fn maximize_angle_function(grid_per_angle: usize) -> (AngleQuad, f64) {
    assert!(
        grid_per_angle >= 32,
        "need at least 32 grid points per angle"
    );
    let pi = std::f64::consts::PI;
    let g = grid_per_angle;
    let step = pi / g as f64;
    let angle = |i: usize| i as f64 * step;
    let mut best = AngleQuad {
        theta_a: 0.0,
        theta_b: 0.0,
        theta_c: 0.0,
        theta_d: 0.0,
    };
    let mut best_val = f64::MIN;
    // cos2(θi+θj) lookup over the grid sum indices.
    let cos_sum: Vec<f64> = (0..2 * g).map(|s| (2.0 * angle(s)).cos()).collect();
    for ia in 0..g {
        for ib in 0..g {
            let t1 = cos_sum[ia + ib];
            for ic in 0..g {
                let t2 = cos_sum[ic + ib];
                for id in 0..g {
                    let f = t1 + t2 + cos_sum[ia + id] - cos_sum[ic + id];
                    if f > best_val {
                        best_val = f;
                        best = AngleQuad {
                            theta_a: angle(ia),
                            theta_b: angle(ib),
                            theta_c: angle(ic),
                            theta_d: angle(id),
                        };
                    }
                }
            }
        }
    }
    refine_angles(best, step, chsh_angle_function)
}

/// Coordinate descent with golden-section line searches; returns the refined
/// quad and value. Used for both F and the operator Bell maximum.
pub fn refine_angles<F: Fn(&AngleQuad) -> f64>(
    start: AngleQuad,
    initial_window: f64,
    objective: F,
) -> (AngleQuad, f64) {
    let mut q = start;
    let mut window = initial_window;
    let mut value = objective(&q);
    for _pass in 0..80 {
        let before = value;
        for coord in 0..4 {
            let get = |q: &AngleQuad| match coord {
                0 => q.theta_a,
                1 => q.theta_b,
                2 => q.theta_c,
                _ => q.theta_d,
            };
            let with = |q: &AngleQuad, v: f64| {
                let mut r = *q;
                match coord {
                    0 => r.theta_a = v,
                    1 => r.theta_b = v,
                    2 => r.theta_c = v,
                    _ => r.theta_d = v,
                }
                r
            };
            let center = get(&q);
            let (mut lo, mut hi) = (center - window, center + window);
            // Golden-section maximization on [lo, hi].
            let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
            let mut x1 = hi - phi * (hi - lo);
            let mut x2 = lo + phi * (hi - lo);
            let mut f1 = objective(&with(&q, x1));
            let mut f2 = objective(&with(&q, x2));
            for _ in 0..90 {
                if f1 < f2 {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + phi * (hi - lo);
                    f2 = objective(&with(&q, x2));
                } else {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - phi * (hi - lo);
                    f1 = objective(&with(&q, x1));
                }
                if hi - lo < 1e-12 {
                    break;
                }
            }
            let x_best = 0.5 * (lo + hi);
            let f_best = objective(&with(&q, x_best));
            if f_best > value {
                value = f_best;
                q = with(&q, x_best);
            }
        }
        if value - before < 1e-14 {
            window *= 0.5;
            if window < 1e-11 {
                break;
            }
        }
    }
    (q, value)
}

/// Truncated-operator correlators of O_δ(θ) ⊗ O_δ(θ') in the entangled cat
/// pair; the brute-force route that adjudicates the closed forms.
pub struct ResolutionCorrelator {
    even: FockVector,
    odd: FockVector,
    /// Eigenvalue of O_δ per photon number.
    odelta_diag: Vec<f64>,
}

impl ResolutionCorrelator {
    pub fn new(alpha: f64, weights: &ResolutionWeights, map: &OddEvenIndexMap) -> Result<Self> {
        let n_max = map.n_max();
        let even = FockVector::even_cat(C64::new(alpha, 0.0), n_max)?;
        let odd = FockVector::odd_cat(C64::new(alpha, 0.0), n_max)?;
        Ok(Self {
            even,
            odd,
            odelta_diag: weights.odelta_eigenvalues(map),
        })
    }

    pub fn pair(&self) -> (&FockVector, &FockVector) {
        (&self.even, &self.odd)
    }

    /// The three single-mode matrix elements of O_δ(θ) on the cat pair:
    /// (<e|O|e>, <o|O|o>, <e|O|o>).
    fn brackets(&self, theta: f64) -> (f64, f64, C64) {
        let rot = SubspaceRotation::new(theta, self.even.clone(), self.odd.clone())
            .expect("cat pair is orthonormal");
        let ue = rot.apply(self.even.amplitudes());
        let uo = rot.apply(self.odd.amplitudes());
        let quad = |x: &[C64], y: &[C64]| -> C64 {
            x.iter()
                .zip(y)
                .zip(&self.odelta_diag)
                .map(|((a, b), l)| a.conj() * b * *l)
                .sum()
        };
        (quad(&ue, &ue).re, quad(&uo, &uo).re, quad(&ue, &uo))
    }

    /// <ψ_α| O_δ(θ_a) ⊗ O_δ(θ_b) |ψ_α>.
    pub fn expectation(&self, theta_a: f64, theta_b: f64) -> f64 {
        let (ea, oa, xa) = self.brackets(theta_a);
        let (eb, ob, xb) = self.brackets(theta_b);
        0.5 * (ea * ob + oa * eb) + (xa * xb.conj()).re
    }

    /// Brute-force maximum of B over the four angles: grid then refinement.
    pub fn bell_max(&self, grid_per_angle: usize) -> f64 {
        let pi = std::f64::consts::PI;
        let g = grid_per_angle.max(16);
        let step = pi / g as f64;
        // E(θi, θj) over all grid pairs from per-angle brackets.
        let brackets: Vec<(f64, f64, C64)> =
            (0..g).map(|i| self.brackets(i as f64 * step)).collect();
        let e = |i: usize, j: usize| -> f64 {
            let (ea, oa, xa) = brackets[i];
            let (eb, ob, xb) = brackets[j];
            0.5 * (ea * ob + oa * eb) + (xa * xb.conj()).re
        };
        let mut table = vec![0.0; g * g];
        for i in 0..g {
            for j in 0..g {
                table[i * g + j] = e(i, j);
            }
        }
        let mut best_val = f64::MIN;
        let mut best = AngleQuad {
            theta_a: 0.0,
            theta_b: 0.0,
            theta_c: 0.0,
            theta_d: 0.0,
        };
        for ia in 0..g {
            for ib in 0..g {
                let t1 = table[ia * g + ib];
                for ic in 0..g {
                    let t2 = table[ic * g + ib];
                    for id in 0..g {
                        let bq = t1 + t2 + table[ia * g + id] - table[ic * g + id];
                        if bq > best_val {
                            best_val = bq;
                            best = AngleQuad {
                                theta_a: ia as f64 * step,
                                theta_b: ib as f64 * step,
                                theta_c: ic as f64 * step,
                                theta_d: id as f64 * step,
                            };
                        }
                    }
                }
            }
        }
        let (_, value) = refine_angles(best, step, |q| {
            self.expectation(q.theta_a, q.theta_b)
                + self.expectation(q.theta_c, q.theta_b)
                + self.expectation(q.theta_a, q.theta_d)
                - self.expectation(q.theta_c, q.theta_d)
        });
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::{GaussianExponent, DEFAULT_WEIGHT_TAIL};
    use crate::fockspace::IndexConvention;
    use proptest::prelude::*;

    const PI: f64 = std::f64::consts::PI;

    fn weights(delta: f64) -> ResolutionWeights {
        ResolutionWeights::new(delta, DEFAULT_WEIGHT_TAIL, GaussianExponent::Printed).unwrap()
    }

    #[test]
    fn series_sharp_limit_vanishes() {
        // As δ → 0 only k = 0 carries weight; the derived series have no
        // k = 0 term, so A = B = 0 and the Bell quantity is 2√2.
        let w = weights(1e-9);
        let s = bell_series(1.0, &w).unwrap();
        assert_eq!(s.a, 0.0);
        assert_eq!(s.b, 0.0);
        assert!((bell_resolution(&s) - TSIRELSON).abs() < 1e-12);
    }

    #[test]
    fn printed_series_sharp_limit_keeps_spurious_term() {
        // The printed A-series retains 2 C_e² at δ → 0 (its k = 0, n = 0
        // term), the signature of the off-by-one its derivation fixes.
        let w = weights(1e-9);
        let s = bell_series_with_form(1.0, &w, SeriesForm::Printed).unwrap();
        assert!((s.a - 2.0 / 1.0_f64.cosh()).abs() < 1e-12);
        assert_eq!(s.b, 0.0);
    }

    #[test]
    fn series_rejects_alpha_zero() {
        let w = weights(1.0);
        assert!(bell_series(0.0, &w).is_err());
    }

    #[test]
    fn series_match_inner_product_oracle() {
        // A = <α_e|M_e>, B = <α_o|M_o> with O_δ applied as a diagonal
        // operator in truncated Fock space.
        let map = OddEvenIndexMap::new(IndexConvention::EvenUpOddDown, 60).unwrap();
        for (alpha, delta) in [(2.0, 1.0), (1.0, 0.5), (1.5, 2.0)] {
            let w = weights(delta);
            let s = bell_series(alpha, &w).unwrap();
            let corr = ResolutionCorrelator::new(alpha, &w, &map).unwrap();
            let (e, o) = corr.pair();
            // <x|O_δ|x> = 1 - A (even), B - 1 (odd).
            let quad = |v: &FockVector| -> f64 {
                v.amplitudes()
                    .iter()
                    .zip(&corr.odelta_diag)
                    .map(|(a, l)| a.norm_sqr() * l)
                    .sum()
            };
            assert!(
                (quad(e) - (1.0 - s.a)).abs() < 1e-8,
                "alpha {alpha} delta {delta}: {} vs {}",
                quad(e),
                1.0 - s.a
            );
            assert!((quad(o) - (s.b - 1.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn m_even_vector_componentwise() {
        // O_δ|α_e> = |α_e> - |M_e> with the derived
        // |M_e> = 2 C_e Σ_{k>=1} P(k) Σ_{n<=k-1} α^{2n}/sqrt((2n)!) |2n>,
        // checked against the brute-force weighted projector sum.
        let alpha = 1.3_f64;
        let n_max = 50;
        let map = OddEvenIndexMap::new(IndexConvention::EvenUpOddDown, n_max).unwrap();
        let w = weights(0.9);
        let e = FockVector::even_cat(C64::new(alpha, 0.0), n_max).unwrap();
        let diag = w.odelta_eigenvalues(&map);
        // Brute force: (|α_e> - O_δ|α_e>)_n.
        let brute: Vec<C64> = e
            .amplitudes()
            .iter()
            .zip(&diag)
            .map(|(a, l)| a * (1.0 - l))
            .collect();
        // Closed form, assembled per component.
        let x = alpha * alpha;
        let ce = (x.cosh()).sqrt().recip();
        let mut closed = vec![C64::ZERO; n_max + 1];
        for n in 0..=(n_max / 2) {
            // Σ_{k > n} P(k) is the weight accumulated by |2n>.
            let tail: f64 = (n as i64 + 1..=w.k_cut()).map(|k| w.prob(k)).sum();
            let coeff = 2.0 * ce * tail * alpha.powi(2 * n as i32)
                / crate::special::factorial(2 * n).sqrt();
            closed[2 * n] = C64::new(coeff, 0.0);
        }
        for n in 0..=n_max {
            // The cat constructor renormalizes away its (tiny) truncation
            // tail; compare at 1e-10.
            assert!(
                (brute[n] - closed[n]).norm() < 1e-10,
                "component {n}: {} vs {}",
                brute[n],
                closed[n]
            );
        }
    }

    #[test]
    fn closed_correlator_matches_operators() {
        let map = OddEvenIndexMap::new(IndexConvention::EvenUpOddDown, 40).unwrap();
        let w = weights(0.8);
        let alpha = 1.5;
        let s = bell_series(alpha, &w).unwrap();
        let corr = ResolutionCorrelator::new(alpha, &w, &map).unwrap();
        for (ta, tb) in [
            (0.0, 0.0),
            (0.3, 1.1),
            (PI / 4.0, 3.0 * PI / 4.0),
            (2.2, 0.7),
        ] {
            let closed = resolution_correlator_closed(&s, ta, tb);
            let brute = corr.expectation(ta, tb);
            assert!(
                (closed - brute).abs() < 1e-6,
                "θ = ({ta}, {tb}): closed {closed} vs brute {brute}"
            );
            assert!((-1.0..=1.0).contains(&brute));
        }
    }

    #[test]
    fn bell_resolution_matches_brute_force_maximum() {
        let map = OddEvenIndexMap::new(IndexConvention::EvenUpOddDown, 40).unwrap();
        let w = weights(0.5);
        let alpha = 1.0;
        let closed = bell_resolution(&bell_series(alpha, &w).unwrap());
        let brute = ResolutionCorrelator::new(alpha, &w, &map)
            .unwrap()
            .bell_max(48);
        assert!(
            (closed - brute).abs() < 1e-5,
            "closed {closed} vs brute {brute}"
        );
    }

    #[test]
    fn bell_resolution_figure_shape() {
        // 50 δ-points: starts at 2√2, decays monotonically, and the far
        // asymptote approaches zero once the weight spread √δ swamps the
        // occupied cut range.
        for alpha in [1.0, 2.0] {
            let mut prev = TSIRELSON;
            for i in 0..50 {
                let delta = 1e-6 + 8.0 * i as f64 / 49.0;
                let b = bell_resolution_closed(alpha, &weights(delta)).unwrap();
                assert!(
                    b <= prev + 1e-9,
                    "alpha {alpha}, delta {delta}: {b} > {prev}"
                );
                assert!(b <= TSIRELSON + 1e-9);
                prev = b;
            }
            let far = bell_resolution_closed(alpha, &weights(500.0)).unwrap();
            assert!(far < 0.1, "alpha {alpha}: asymptote not reached: {far}");
            assert!(far < prev);
        }
    }

    #[test]
    fn bell_reference_closed_form() {
        assert!((bell_reference(0.0) - TSIRELSON).abs() < 1e-15);
        assert!((bell_reference(0.5) - TSIRELSON * (-1.0_f64).exp()).abs() < 1e-15);
        assert_eq!(bell_reference(25.0), 0.0);
        let crossing = bell_reference_classical_crossing();
        assert!((crossing - (2.0_f64.ln() / 8.0).sqrt()).abs() < 1e-9);
        assert!((crossing - 0.2943).abs() < 1e-4);
    }

    #[test]
    fn bell_reference_is_strictly_decreasing() {
        let mut prev = f64::INFINITY;
        for i in 0..60 {
            let b = bell_reference(0.05 * i as f64);
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn angle_maximizer_reaches_tsirelson() {
        let (_, value) = maximize_angle_function(32);
        assert!(
            (value - TSIRELSON).abs() < 1e-8,
            "maximizer found {value}, expected {TSIRELSON}"
        );
    }

    #[test]
    fn angle_function_hand_value() {
        let q = AngleQuad {
            theta_a: 0.0,
            theta_b: 0.0,
            theta_c: 0.0,
            theta_d: PI / 2.0,
        };
        assert!((chsh_angle_function(&q) - 2.0).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn angle_function_respects_tsirelson(
            a in 0.0..PI, b in 0.0..PI, c in 0.0..PI, d in 0.0..PI,
        ) {
            let q = AngleQuad { theta_a: a, theta_b: b, theta_c: c, theta_d: d };
            prop_assert!(chsh_angle_function(&q) <= TSIRELSON + 1e-12);
            // Refinement from this start must not overshoot either.
            let (_, refined) = refine_angles(q, 0.1, chsh_angle_function);
            prop_assert!(refined <= TSIRELSON + 1e-9);
        }
    }
}
