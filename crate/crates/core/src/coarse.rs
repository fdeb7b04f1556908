//! Coarse-graining weights and the non-selective measurement channels:
//! the resolution channel (discrete Gaussian over cut index k) and the
//! reference channel (Gaussian smear over the rotation angle θ), together
//! with the closed-form post-measurement states.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fockspace::{
    CutObservable, DensityOperator, FockVector, OddEvenIndexMap, SubspaceRotation, TwoModeState,
};

/// Above this width every reference decay factor e^{-cΔ²} is exactly zero,
/// so Δ → ∞ limits are unambiguous.
pub const UNSHARP_LIMIT_DELTA: f64 = 20.0;

/// Default tail mass for the resolution weight truncation.
pub const DEFAULT_WEIGHT_TAIL: f64 = 1e-10;

/// exp(-rate · Δ²), clamped to exactly 1 at Δ = 0 and exactly 0 beyond the
/// unsharp limit.
pub fn reference_decay(rate: f64, delta_big: f64) -> f64 {
    if delta_big == 0.0 {
        1.0
    } else if delta_big >= UNSHARP_LIMIT_DELTA {
        0.0
    } else {
        (-rate * delta_big * delta_big).exp()
    }
}

/// Exponent convention of the discrete Gaussian resolution weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GaussianExponent {
    /// P(k) ∝ exp(-k²/(2δ)), the formula as printed; shipped default.
    #[default]
    Printed,
    /// P(k) ∝ exp(-k²/(2δ²)), matching the prose "variance δ²". Only
    /// rescales the δ axis.
    Variance,
}

/// Normalized, symmetric, truncated discrete Gaussian over cut indices.
#[derive(Clone, Debug)]
pub struct ResolutionWeights {
    delta: f64,
    exponent: GaussianExponent,
    /// w[k] = P(k) = P(-k) for k = 0..=k_cut, with w[0] + 2 Σ_{k>=1} w[k] = 1.
    w: Vec<f64>,
}

impl ResolutionWeights {
    /// Builds weights for width `delta`, truncated at the smallest cut with
    /// total tail mass below `epsilon_tail`, then normalized.
    pub fn new(delta: f64, epsilon_tail: f64, exponent: GaussianExponent) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidCoarseGraining(format!(
                "resolution width must be positive, got {delta}"
            )));
        }
        if !(epsilon_tail > 0.0 && epsilon_tail <= 1e-6) {
            return Err(Error::InvalidCoarseGraining(format!(
                "epsilon_tail must lie in (0, 1e-6], got {epsilon_tail}"
            )));
        }
        let two_var = match exponent {
            GaussianExponent::Printed => 2.0 * delta,
            GaussianExponent::Variance => 2.0 * delta * delta,
        };
        let mut unnorm = vec![1.0_f64];
        loop {
            let k = unnorm.len() as f64;
            let u = (-k * k / two_var).exp();
            if u < 1e-3 * epsilon_tail || u == 0.0 {
                break;
            }
            unnorm.push(u);
            if unnorm.len() > 100_000 {
                return Err(Error::InvalidCoarseGraining(format!(
                    "resolution width {delta} needs more than 1e5 weight terms"
                )));
            }
        }
        let total = unnorm[0] + 2.0 * unnorm[1..].iter().sum::<f64>();
        // Smallest k_cut whose tail is below epsilon_tail.
        let mut tail = 0.0;
        let mut k_cut = unnorm.len() - 1;
        for k in (1..unnorm.len()).rev() {
            tail += 2.0 * unnorm[k];
            if tail / total >= epsilon_tail {
                k_cut = k;
                break;
            }
            k_cut = k - 1;
        }
        let kept = &unnorm[..=k_cut];
        let kept_total = kept[0] + 2.0 * kept[1..].iter().sum::<f64>();
        Ok(Self {
            delta,
            exponent,
            w: kept.iter().map(|u| u / kept_total).collect(),
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn exponent(&self) -> GaussianExponent {
        self.exponent
    }

    pub fn k_cut(&self) -> i64 {
        (self.w.len() - 1) as i64
    }

    /// P(k); zero beyond the truncation.
    pub fn prob(&self, k: i64) -> f64 {
        let a = k.unsigned_abs() as usize;
        if a < self.w.len() {
            self.w[a]
        } else {
            0.0
        }
    }

    pub fn total(&self) -> f64 {
        self.w[0] + 2.0 * self.w[1..].iter().sum::<f64>()
    }

    /// Σ_{j > k} P(j) over all integers.
    pub fn upper_tail(&self, k: i64) -> f64 {
        if k >= 0 {
            let lo = (k + 1) as usize;
            if lo >= self.w.len() {
                0.0
            } else {
                self.w[lo..].iter().sum()
            }
        } else {
            // Σ_{j>k} = 1 - Σ_{j<=k} = 1 - Σ_{m>=|k|} w[m]   (j <= k < 0)
            let lo = (-k) as usize;
            let below: f64 = if lo >= self.w.len() {
                0.0
            } else {
                self.w[lo..].iter().sum()
            };
            1.0 - below
        }
    }

    /// Eigenvalue of O_δ on each photon number:
    /// c = Σ_{j <= idx} P(j) - Σ_{j > idx} P(j) = 1 - 2 Σ_{j > idx} P(j).
    pub fn odelta_eigenvalues(&self, map: &OddEvenIndexMap) -> Vec<f64> {
        (0..=map.n_max())
            .map(|photon| {
                let idx = map.index_of(photon).expect("photon within truncation");
                1.0 - 2.0 * self.upper_tail(idx)
            })
            .collect()
    }
}

/// ∫ P_Δ(θ - θ₀) cos(mθ) dθ = e^{-m²Δ²/2} cos(mθ₀), exactly.
pub fn smear_harmonic(m: u32, theta0: f64, delta_big: f64) -> f64 {
    let mf = m as f64;
    reference_decay(mf * mf / 2.0, delta_big) * (mf * theta0).cos()
}

/// Companion sine version, ∫ P_Δ(θ - θ₀) sin(mθ) dθ = e^{-m²Δ²/2} sin(mθ₀).
pub fn smear_harmonic_sin(m: u32, theta0: f64, delta_big: f64) -> f64 {
    let mf = m as f64;
    reference_decay(mf * mf / 2.0, delta_big) * (mf * theta0).sin()
}

/// Resolution channel on a Fock state |2n>: the state is an eigenstate of
/// every O^k, so the channel returns |2n><2n| exactly.
pub fn fock_resolution_channel(
    n: usize,
    weights: &ResolutionWeights,
    n_max: usize,
) -> Result<DensityOperator> {
    let _ = weights;
    if 2 * n > n_max {
        return Err(Error::IndexOutOfRange {
            index: (2 * n) as i64,
            n_max,
        });
    }
    let mut rho = DensityOperator::zeros(n_max + 1);
    rho.set(2 * n, 2 * n, C64::ONE);
    Ok(rho)
}

/// Which odd partner the 2x2 reference rotation pairs with |2n>.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PairConvention {
    /// V(θ) mixes |2n> with |2n+1> (main text §-form); shipped default.
    #[default]
    Above,
    /// V(θ) mixes |2n> with |2n-1> (appendix form). Needs n >= 1.
    Below,
}

/// The 2x2 reference-channel output on the pair {|2n>, |2n±1>}.
#[derive(Clone, Debug)]
pub struct FockReferenceState {
    pub photon_even: usize,
    pub photon_odd: usize,
    /// Matrix on the basis {|2n>, |2n±1>}; row-major.
    pub matrix: [[f64; 2]; 2],
}

/// Closed-form post-measurement state of the reference channel on |2n>:
/// ((3 + e^{-8Δ²}cos4θ_a)/4, e^{-8Δ²}sin4θ_a/4; ·, (1 - e^{-8Δ²}cos4θ_a)/4).
pub fn fock_reference_state(
    n: usize,
    theta_a: f64,
    delta_big: f64,
    convention: PairConvention,
) -> Result<FockReferenceState> {
    if delta_big < 0.0 {
        return Err(Error::InvalidCoarseGraining(format!(
            "reference width must be nonnegative, got {delta_big}"
        )));
    }
    let photon_odd = match convention {
        PairConvention::Above => 2 * n + 1,
        PairConvention::Below => {
            if n == 0 {
                return Err(Error::IndexOutOfRange {
                    index: -1,
                    n_max: 0,
                });
            }
            2 * n - 1
        }
    };
    let f = reference_decay(8.0, delta_big);
    let c4 = f * (4.0 * theta_a).cos();
    let s4 = f * (4.0 * theta_a).sin();
    Ok(FockReferenceState {
        photon_even: 2 * n,
        photon_odd,
        matrix: [[(3.0 + c4) / 4.0, s4 / 4.0], [s4 / 4.0, (1.0 - c4) / 4.0]],
    })
}

/// The four closed-form coefficients of the two-mode reference-channel
/// output on the entangled even/odd pair, expressed in the unrotated basis
/// {|ee>, |eo>, |oe>, |oo>}.
#[derive(Clone, Copy, Debug)]
pub struct RefCatCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub theta_a: f64,
    pub theta_b: f64,
    pub delta_big: f64,
}

impl RefCatCoefficients {
    /// The full 4x4 density matrix on {|ee>, |eo>, |oe>, |oo>}.
    pub fn matrix(&self) -> [[f64; 4]; 4] {
        let Self { a, b, c, d, .. } = *self;
        let h = 0.5 - a;
        [[a, b, c, d], [b, h, d, -c], [c, d, h, -b], [d, -c, -b, a]]
    }
}

/// Closed forms for the coefficients a, b, c, d of the reference channel.
pub fn cat_reference_coefficients(
    theta_a: f64,
    theta_b: f64,
    delta_big: f64,
) -> Result<RefCatCoefficients> {
    if delta_big < 0.0 {
        return Err(Error::InvalidCoarseGraining(format!(
            "reference width must be nonnegative, got {delta_big}"
        )));
    }
    let f8 = reference_decay(8.0, delta_big);
    let f16 = reference_decay(16.0, delta_big);
    let (ca, cb) = ((4.0 * theta_a).cos(), (4.0 * theta_b).cos());
    let (sa, sb) = ((4.0 * theta_a).sin(), (4.0 * theta_b).sin());
    let cab = (4.0 * theta_a + 4.0 * theta_b).cos();
    let sab = (4.0 * theta_a + 4.0 * theta_b).sin();
    Ok(RefCatCoefficients {
        a: (3.0 - f8 * (ca + cb) - f16 * cab) / 16.0,
        b: (f8 * (sa - sb) - f16 * sab) / 16.0,
        c: (f8 * (-sa + sb) - f16 * sab) / 16.0,
        d: (1.0 - f8 * (ca + cb) + f16 * cab) / 16.0,
        theta_a,
        theta_b,
        delta_big,
    })
}

fn apply_mode1<F: Fn(&[C64]) -> Vec<C64>>(amp: &mut [C64], d: usize, op: F) {
    let mut col = vec![C64::ZERO; d];
    for n2 in 0..d {
        for n1 in 0..d {
            col[n1] = amp[n1 * d + n2];
        }
        let out = op(&col);
        for n1 in 0..d {
            amp[n1 * d + n2] = out[n1];
        }
    }
}

fn apply_mode2<F: Fn(&[C64]) -> Vec<C64>>(amp: &mut [C64], d: usize, op: F) {
    for n1 in 0..d {
        let row = &amp[n1 * d..(n1 + 1) * d];
        let out = op(row);
        amp[n1 * d..(n1 + 1) * d].copy_from_slice(&out);
    }
}

fn mask_vec(v: &[C64], mask: &[f64]) -> Vec<C64> {
    v.iter().zip(mask).map(|(a, m)| a * *m).collect()
}

/// Non-selective sharp measurement of O^k(θ_a) ⊗ O^m(θ_b): applies the four
/// projective branches Π_s(θ_a) ⊗ Π_t(θ_b) and sums them.
pub fn sharp_two_mode_channel(
    psi: &TwoModeState,
    cut_a: &CutObservable,
    cut_b: &CutObservable,
    rot_a: &SubspaceRotation,
    rot_b: &SubspaceRotation,
) -> DensityOperator {
    let d = psi.mode_dim();
    let mut rho = DensityOperator::zeros(d * d);
    // φ = (U_a ⊗ U_b) ψ once; each branch is then mask + rotate back.
    let mut rotated = psi.amplitudes().to_vec();
    apply_mode1(&mut rotated, d, |v| rot_a.apply(v));
    apply_mode2(&mut rotated, d, |v| rot_b.apply(v));
    let masks_a = [cut_a.plus_mask(), cut_a.minus_mask()];
    let masks_b = [cut_b.plus_mask(), cut_b.minus_mask()];
    for ma in &masks_a {
        for mb in &masks_b {
            let mut branch = rotated.clone();
            apply_mode1(&mut branch, d, |v| mask_vec(v, ma));
            apply_mode2(&mut branch, d, |v| mask_vec(v, mb));
            apply_mode1(&mut branch, d, |v| rot_a.apply(v));
            apply_mode2(&mut branch, d, |v| rot_b.apply(v));
            rho.accumulate_outer(&branch, 1.0);
        }
    }
    rho
}

/// Resolution channel on a two-mode state:
/// ρ_res = Σ_{k,m} P(k) P(m) Σ_{s,t} branch ρ branch. Cut indices beyond the
/// truncated index range act exactly as ±1 and are clamped to the saturated
/// operators.
pub fn two_mode_resolution_channel(
    psi: &TwoModeState,
    weights: &ResolutionWeights,
    map: &OddEvenIndexMap,
    rot_a: &SubspaceRotation,
    rot_b: &SubspaceRotation,
) -> Result<DensityOperator> {
    let d = psi.mode_dim();
    if map.n_max() + 1 != d {
        return Err(Error::InvalidState(
            "index map truncation does not match the state".into(),
        ));
    }
    let (lo, hi) = map.index_range();
    let clamp = |k: i64| k.clamp(lo, hi + 1);
    let kc = weights.k_cut();
    let mut rho = DensityOperator::zeros(d * d);
    for k in -kc..=kc {
        let cut_a = CutObservable::new(clamp(k), map)?;
        for m in -kc..=kc {
            let cut_b = CutObservable::new(clamp(m), map)?;
            let cell = sharp_two_mode_channel(psi, &cut_a, &cut_b, rot_a, rot_b);
            let weight = weights.prob(k) * weights.prob(m);
            for (dst, src) in rho.elems_mut().iter_mut().zip(cell.elems()) {
                *dst += src * weight;
            }
        }
    }
    Ok(rho)
}

/// Builds the dense two-mode density operator Σ M[(ik)][(jl)] |ik><jl| from a
/// 4x4 matrix over the ordered product basis {ee, eo, oe, oo} of an
/// orthonormal pair.
pub fn two_mode_from_pair_matrix(
    even: &FockVector,
    odd: &FockVector,
    m: &[[f64; 4]; 4],
) -> DensityOperator {
    let d = even.dim();
    let product = |x: &FockVector, y: &FockVector| -> Vec<C64> {
        let mut v = vec![C64::ZERO; d * d];
        for n1 in 0..d {
            for n2 in 0..d {
                v[n1 * d + n2] = x.amplitudes()[n1] * y.amplitudes()[n2];
            }
        }
        v
    };
    let basis = [
        product(even, even),
        product(even, odd),
        product(odd, even),
        product(odd, odd),
    ];
    let mut rho = DensityOperator::zeros(d * d);
    for (i, bi) in basis.iter().enumerate() {
        for (j, bj) in basis.iter().enumerate() {
            if m[i][j] == 0.0 {
                continue;
            }
            rho.accumulate_dyad(bi, bj, C64::new(m[i][j], 0.0));
        }
    }
    rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::IndexConvention;
    use crate::special::gauss_legendre;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn weights(delta: f64) -> ResolutionWeights {
        ResolutionWeights::new(delta, DEFAULT_WEIGHT_TAIL, GaussianExponent::Printed).unwrap()
    }

    #[test]
    fn weights_sharp_limit_concentrates() {
        let w = weights(1e-6);
        assert_eq!(w.k_cut(), 0);
        assert_eq!(w.prob(0), 1.0);
    }

    #[test]
    fn weights_printed_ratio() {
        // P(1)/P(0) before normalization is e^{-1/(2δ)}; the ratio survives
        // normalization.
        let w = weights(1.0);
        assert!((w.prob(1) / w.prob(0) - (-0.5_f64).exp()).abs() < 1e-12);
        let wv = ResolutionWeights::new(0.7, 1e-10, GaussianExponent::Variance).unwrap();
        assert!((wv.prob(1) / wv.prob(0) - (-1.0 / (2.0 * 0.49_f64)).exp()).abs() < 1e-12);
    }

    #[test]
    fn weights_normalized_with_tail_rule() {
        for delta in [0.3, 1.0, 2.0, 5.0] {
            let w = weights(delta);
            assert!((w.total() - 1.0).abs() < 1e-12, "delta = {delta}");
            assert!(w.prob(w.k_cut()) > 0.0);
            // Σ_{j >= 0} P - Σ_{j > 0} P = P(0).
            assert!((w.upper_tail(-1) - w.upper_tail(0) - w.prob(0)).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_reject_bad_input() {
        assert!(ResolutionWeights::new(0.0, 1e-10, GaussianExponent::Printed).is_err());
        assert!(ResolutionWeights::new(-1.0, 1e-10, GaussianExponent::Printed).is_err());
        assert!(ResolutionWeights::new(1.0, 1e-3, GaussianExponent::Printed).is_err());
    }

    #[test]
    fn odelta_eigenvalues_match_direct_sum() {
        let map = OddEvenIndexMap::new(IndexConvention::EvenUpOddDown, 12).unwrap();
        let w = weights(0.8);
        let eigs = w.odelta_eigenvalues(&map);
        // Direct: c = Σ_k P(k) sign_k(photon).
        for photon in 0..=12 {
            let mut direct = 0.0;
            for k in -w.k_cut()..=w.k_cut() {
                let cut =
                    CutObservable::new(k.clamp(map.index_range().0, map.index_range().1 + 1), &map)
                        .unwrap();
                direct += w.prob(k) * cut.sign(photon);
            }
            assert!(
                (eigs[photon] - direct).abs() < 1e-12,
                "photon {photon}: {} vs {direct}",
                eigs[photon]
            );
        }
    }

    #[test]
    fn smear_harmonic_closed_forms() {
        assert_eq!(smear_harmonic(2, 0.0, 0.0), 1.0);
        // e^{-2Δ²} cos 2θ₀ for m = 2.
        let (theta0, delta) = (0.37_f64, 0.6_f64);
        let expect = (-2.0 * delta * delta).exp() * (2.0 * theta0).cos();
        assert!((smear_harmonic(2, theta0, delta) - expect).abs() < 1e-15);
        assert_eq!(smear_harmonic(4, 1.0, 25.0), 0.0);
    }

    #[test]
    fn smear_harmonic_matches_quadrature() {
        // Gauss-Legendre on θ0 ± 12Δ captures the Gaussian to ~1e-14.
        let (m, theta0, delta) = (4u32, std::f64::consts::PI / 8.0, 0.3);
        let (nodes, ws) = gauss_legendre(200);
        let half = 12.0 * delta;
        let mut acc = 0.0;
        for (x, w) in nodes.iter().zip(&ws) {
            let theta = theta0 + half * x;
            let gauss = (-0.5 * ((theta - theta0) / delta).powi(2)).exp()
                / ((2.0 * std::f64::consts::PI).sqrt() * delta);
            acc += w * half * gauss * (m as f64 * theta).cos();
        }
        assert!((smear_harmonic(m, theta0, delta) - acc).abs() < 1e-10);
        let mut acc_sin = 0.0;
        for (x, w) in nodes.iter().zip(&ws) {
            let theta = theta0 + half * x;
            let gauss = (-0.5 * ((theta - theta0) / delta).powi(2)).exp()
                / ((2.0 * std::f64::consts::PI).sqrt() * delta);
            acc_sin += w * half * gauss * (m as f64 * theta).sin();
        }
        assert!((smear_harmonic_sin(m, theta0, delta) - acc_sin).abs() < 1e-10);
    }

    #[test]
    fn fock_resolution_channel_is_identity_on_even_states() {
        let w = weights(1.0);
        let rho = fock_resolution_channel(1, &w, 10).unwrap();
        for i in 0..=10 {
            for j in 0..=10 {
                let expect = if i == 2 && j == 2 {
                    C64::ONE
                } else {
                    C64::ZERO
                };
                assert_eq!(rho.get(i, j), expect);
            }
        }
        let vac = fock_resolution_channel(0, &w, 4).unwrap();
        assert_eq!(vac.get(0, 0), C64::ONE);
        assert!(fock_resolution_channel(6, &w, 10).is_err());
    }

    #[test]
    fn fock_resolution_channel_matches_branch_sum() {
        let map = OddEvenIndexMap::new(IndexConvention::EvenUpOddDown, 10).unwrap();
        let w = weights(1.0);
        let n = 2; // |4>
        let mut brute = DensityOperator::zeros(11);
        for k in -w.k_cut()..=w.k_cut() {
            let kk = k.clamp(map.index_range().0, map.index_range().1 + 1);
            let cut = CutObservable::new(kk, &map).unwrap();
            let state = FockVector::fock(2 * n, 10).unwrap();
            let plus = state.masked(&cut.plus_mask());
            let minus = state.masked(&cut.minus_mask());
            brute.accumulate_outer(&plus, w.prob(k));
            brute.accumulate_outer(&minus, w.prob(k));
        }
        let closed = fock_resolution_channel(n, &w, 10).unwrap();
        assert!(closed.max_abs_diff(&brute) < 1e-14);
    }

    #[test]
    fn fock_reference_state_limits() {
        // Sharp parity measurement at θ_a = 0 leaves |2n> untouched.
        let sharp = fock_reference_state(1, 0.0, 0.0, PairConvention::Above).unwrap();
        assert_eq!(sharp.matrix[0][0], 1.0);
        assert_eq!(sharp.matrix[1][1], 0.0);
        assert_eq!(sharp.photon_odd, 3);
        // Completely unsharp limit.
        let flat = fock_reference_state(1, 0.123, 30.0, PairConvention::Above).unwrap();
        assert_eq!(flat.matrix[0][0], 0.75);
        assert_eq!(flat.matrix[1][1], 0.25);
        assert_eq!(flat.matrix[0][1], 0.0);
        // Appendix pairing uses |2n-1>.
        let below = fock_reference_state(1, 0.0, 0.5, PairConvention::Below).unwrap();
        assert_eq!(below.photon_odd, 1);
        assert!(fock_reference_state(0, 0.0, 0.5, PairConvention::Below).is_err());
    }

    /// 2000-point Gaussian quadrature oracle for the 2x2 reference channel,
    /// built from Fock-space PVM branches at each angle.
    fn fock_reference_quadrature(
        n: usize,
        theta_a: f64,
        delta: f64,
        conv: PairConvention,
    ) -> [[f64; 2]; 2] {
        let n_max = 2 * n + 2;
        let even = FockVector::fock(2 * n, n_max).unwrap();
        let odd_photon = match conv {
            PairConvention::Above => 2 * n + 1,
            PairConvention::Below => 2 * n - 1,
        };
        let odd = FockVector::fock(odd_photon, n_max).unwrap();
        let map = OddEvenIndexMap::new(IndexConvention::EvenUpOddDown, n_max).unwrap();
        let cut = CutObservable::new(0, &map).unwrap();
        let (nodes, ws) = gauss_legendre(2000);
        let half = 12.0 * delta;
        let mut out = [[0.0; 2]; 2];
        for (x, w) in nodes.iter().zip(&ws) {
            let theta = theta_a + half * x;
            let gauss = (-0.5 * ((theta - theta_a) / delta).powi(2)).exp()
                / ((2.0 * std::f64::consts::PI).sqrt() * delta);
            let rot = SubspaceRotation::new(theta, even.clone(), odd.clone()).unwrap();
            let mut rho_theta = DensityOperator::zeros(n_max + 1);
            for mask in [cut.plus_mask(), cut.minus_mask()] {
                // Π_s(θ)|2n> = U(θ) P_s U(θ) |2n>.
                let mut v = rot.apply(even.amplitudes());
                v = mask_vec(&v, &mask);
                let v = rot.apply(&v);
                rho_theta.accumulate_outer(&v, 1.0);
            }
            let weight = w * half * gauss;
            let ee = rho_theta.expectation(&even).re;
            let oo = rho_theta.expectation(&odd).re;
            // <2n| ρ |odd>
            let mut eo = C64::ZERO;
            for j in 0..=n_max {
                eo += rho_theta.get(2 * n, j) * odd.amplitudes()[j];
            }
            out[0][0] += weight * ee;
            out[1][1] += weight * oo;
            out[0][1] += weight * eo.re;
            out[1][0] += weight * eo.re;
        }
        out
    }

    #[test]
    fn fock_reference_state_matches_quadrature_oracle() {
        let (n, theta_a, delta) = (1, std::f64::consts::PI / 16.0, 0.25);
        for conv in [PairConvention::Above, PairConvention::Below] {
            let closed = fock_reference_state(n, theta_a, delta, conv).unwrap();
            let numeric = fock_reference_quadrature(n, theta_a, delta, conv);
            for i in 0..2 {
                for j in 0..2 {
                    assert!(
                        (closed.matrix[i][j] - numeric[i][j]).abs() < 1e-8,
                        "{conv:?} entry ({i},{j}): {} vs {}",
                        closed.matrix[i][j],
                        numeric[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn reference_coherence_decays_as_exp_minus_8_delta_sq() {
        let theta_a = 0.3;
        let d1 = 0.4;
        let d2 = 0.7;
        let s1 = fock_reference_state(1, theta_a, d1, PairConvention::Above).unwrap();
        let s2 = fock_reference_state(1, theta_a, d2, PairConvention::Above).unwrap();
        let ratio = s2.matrix[0][1] / s1.matrix[0][1];
        let expect = (-8.0 * (d2 * d2 - d1 * d1)).exp();
        assert!((ratio - expect).abs() < 1e-12);
    }

    #[test]
    fn cat_coefficients_unsharp_limit() {
        let c = cat_reference_coefficients(0.9, -0.4, 30.0).unwrap();
        assert_eq!(c.a, 3.0 / 16.0);
        assert_eq!(c.b, 0.0);
        assert_eq!(c.c, 0.0);
        assert_eq!(c.d, 1.0 / 16.0);
        let m = c.matrix();
        assert_eq!(m[1][1], 5.0 / 16.0);
        assert_eq!(m[2][2], 5.0 / 16.0);
    }

    #[test]
    fn cat_coefficients_sharp_parity() {
        let c = cat_reference_coefficients(0.0, 0.0, 0.0).unwrap();
        assert_eq!((c.a, c.b, c.c, c.d), (0.0, 0.0, 0.0, 0.0));
        let m = c.matrix();
        assert_eq!(m[1][1], 0.5);
        assert_eq!(m[2][2], 0.5);
        assert_eq!(m[0][0], 0.0);
    }

    #[test]
    fn cat_coefficients_swap_symmetry() {
        let x = cat_reference_coefficients(0.31, 1.17, 0.45).unwrap();
        let y = cat_reference_coefficients(1.17, 0.31, 0.45).unwrap();
        assert!((x.a - y.a).abs() < 1e-15);
        assert!((x.d - y.d).abs() < 1e-15);
        assert!((x.b - y.c).abs() < 1e-15);
        assert!((x.c - y.b).abs() < 1e-15);
    }

    #[test]
    fn cat_coefficient_matrix_is_state() {
        let m = cat_reference_coefficients(0.9, 2.1, 0.33).unwrap().matrix();
        let trace: f64 = (0..4).map(|i| m[i][i]).sum();
        assert!((trace - 1.0).abs() < 1e-14);
        let mut rho = DensityOperator::zeros(4);
        for i in 0..4 {
            for j in 0..4 {
                rho.set(i, j, c(m[i][j], 0.0));
            }
        }
        assert!(rho.min_eigenvalue() >= -1e-10);
        assert!((0.0..=0.5).contains(&cat_reference_coefficients(0.9, 2.1, 0.33).unwrap().a));
    }

    #[test]
    fn sharp_channel_preserves_trace_and_positivity() {
        let alpha = c(1.2, 0.0);
        let n_max = 20;
        let e = FockVector::even_cat(alpha, n_max).unwrap();
        let o = FockVector::odd_cat(alpha, n_max).unwrap();
        let psi = TwoModeState::symmetric_pair(&e, &o).unwrap();
        let map = OddEvenIndexMap::new(IndexConvention::EvenUpOddDown, n_max).unwrap();
        let cut = CutObservable::new(2, &map).unwrap();
        let rot_a = SubspaceRotation::new(0.7, e.clone(), o.clone()).unwrap();
        let rot_b = SubspaceRotation::new(-0.3, e, o).unwrap();
        let rho = sharp_two_mode_channel(&psi, &cut, &cut, &rot_a, &rot_b);
        assert!((rho.trace().re - 1.0).abs() < 1e-10);
        assert!(rho.hermiticity_residue() < 1e-12);
    }

    #[test]
    fn resolution_channel_is_branch_convex_sum() {
        let alpha = c(2.0, 0.0);
        let n_max = 20;
        let e = FockVector::even_cat(alpha, n_max).unwrap();
        let o = FockVector::odd_cat(alpha, n_max).unwrap();
        let psi = TwoModeState::symmetric_pair(&e, &o).unwrap();
        let map = OddEvenIndexMap::new(IndexConvention::EvenUpOddDown, n_max).unwrap();
        let rot_a =
            SubspaceRotation::new(std::f64::consts::PI / 4.0, e.clone(), o.clone()).unwrap();
        let rot_b = SubspaceRotation::new(3.0 * std::f64::consts::PI / 4.0, e, o).unwrap();
        let w = weights(1.0);
        let rho = two_mode_resolution_channel(&psi, &w, &map, &rot_a, &rot_b).unwrap();
        assert!((rho.trace().re - 1.0).abs() < 1e-10);

        // Branch-by-branch oracle: convex sum of independently computed ρ_km.
        let (lo, hi) = map.index_range();
        let mut oracle = DensityOperator::zeros((n_max + 1) * (n_max + 1));
        for k in -w.k_cut()..=w.k_cut() {
            let cut_a = CutObservable::new(k.clamp(lo, hi + 1), &map).unwrap();
            for m in -w.k_cut()..=w.k_cut() {
                let cut_b = CutObservable::new(m.clamp(lo, hi + 1), &map).unwrap();
                let cell = sharp_two_mode_channel(&psi, &cut_a, &cut_b, &rot_a, &rot_b);
                assert!((cell.trace().re - 1.0).abs() < 1e-10);
                let weight = w.prob(k) * w.prob(m);
                for (dst, src) in oracle.elems_mut().iter_mut().zip(cell.elems()) {
                    *dst += src * weight;
                }
            }
        }
        assert!(rho.max_abs_diff(&oracle) < 1e-12);
    }

    #[test]
    fn resolution_channel_sharp_limit_is_single_pvm() {
        let alpha = c(1.0, 0.0);
        let n_max = 12;
        let e = FockVector::even_cat(alpha, n_max).unwrap();
        let o = FockVector::odd_cat(alpha, n_max).unwrap();
        let psi = TwoModeState::symmetric_pair(&e, &o).unwrap();
        let map = OddEvenIndexMap::new(IndexConvention::EvenUpOddDown, n_max).unwrap();
        let rot_a =
            SubspaceRotation::new(std::f64::consts::PI / 4.0, e.clone(), o.clone()).unwrap();
        let rot_b = SubspaceRotation::new(3.0 * std::f64::consts::PI / 4.0, e, o).unwrap();
        let w = weights(1e-9);
        let rho = two_mode_resolution_channel(&psi, &w, &map, &rot_a, &rot_b).unwrap();
        let cut0 = CutObservable::new(0, &map).unwrap();
        let sharp = sharp_two_mode_channel(&psi, &cut0, &cut0, &rot_a, &rot_b);
        assert!(rho.max_abs_diff(&sharp) < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn weights_always_normalized(delta in 0.01..6.0f64) {
            let w = weights(delta);
            prop_assert!((w.total() - 1.0).abs() < 1e-12);
            for k in 0..=w.k_cut() {
                prop_assert!(w.prob(k) >= 0.0);
                prop_assert!((w.prob(k) - w.prob(-k)).abs() == 0.0);
            }
        }

        #[test]
        fn reference_matrices_are_states(theta in 0.0..std::f64::consts::PI, delta in 0.0..3.0f64) {
            let s = fock_reference_state(2, theta, delta, PairConvention::Above).unwrap();
            let m = s.matrix;
            prop_assert!((m[0][0] + m[1][1] - 1.0).abs() < 1e-14);
            // PSD of a 2x2 symmetric matrix: nonneg diagonal and determinant.
            prop_assert!(m[0][0] >= 0.0 && m[1][1] >= 0.0);
            prop_assert!(m[0][0] * m[1][1] - m[0][1] * m[1][0] >= -1e-12);
            // |off-diagonal| <= e^{-8Δ²}/4.
            prop_assert!(m[0][1].abs() <= reference_decay(8.0, delta) / 4.0 + 1e-15);
        }
    }
}
