//! Truncated Fock-space engine: state constructors, the odd/even index map,
//! cut observables `O^k`, subspace rotations `U(θ)`, density matrices, and a
//! displaced-parity Wigner oracle that is independent of every closed form in
//! the rest of the crate.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Norm agreement required of constructor outputs.
pub const NORM_TOL: f64 = 1e-12;
/// Truncation-tail mass above which constructors warn through diagnostics.
pub const TAIL_WARN: f64 = 1e-12;
/// Truncation-tail mass above which constructors refuse to build the state.
pub const TAIL_ERROR: f64 = 1e-6;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// A pure state on the truncated single-mode Fock space, indexed by photon
/// number `0..=n_max`. Always unit-normalized on the truncated space; the
/// probability mass the truncation discarded (relative to the exact state) is
/// kept as a diagnostic.
#[derive(Clone, Debug)]
pub struct FockVector {
    n_max: usize,
    amp: Vec<C64>,
    tail_mass: f64,
}

impl FockVector {
    /// Normalizes `amp` and records `tail_mass`. Errors on a numerically
    /// zero vector.
    pub fn from_amplitudes(amp: Vec<C64>, tail_mass: f64) -> Result<Self> {
        if amp.is_empty() {
            return Err(Error::InvalidState("empty amplitude vector".into()));
        }
        let norm_sq: f64 = amp.iter().map(|a| a.norm_sqr()).sum();
        if !norm_sq.is_finite() || norm_sq < 1e-300 {
            return Err(Error::InvalidState(format!(
                "cannot normalize state with |psi|^2 = {norm_sq:e}"
            )));
        }
        let inv = norm_sq.sqrt().recip();
        Ok(Self {
            n_max: amp.len() - 1,
            amp: amp.into_iter().map(|a| a * inv).collect(),
            tail_mass,
        })
    }

    pub fn vacuum(n_max: usize) -> Self {
        Self::fock(0, n_max).expect("vacuum always representable")
    }

    /// Number state |n>.
    pub fn fock(n: usize, n_max: usize) -> Result<Self> {
        if n > n_max {
            return Err(Error::IndexOutOfRange {
                index: n as i64,
                n_max,
            });
        }
        let mut amp = vec![C64::ZERO; n_max + 1];
        amp[n] = C64::ONE;
        Ok(Self {
            n_max,
            amp,
            tail_mass: 0.0,
        })
    }

    /// Coherent state |alpha>, amplitudes proportional to alpha^n / sqrt(n!),
    /// renormalized on the truncated space.
    pub fn coherent(alpha: C64, n_max: usize) -> Result<Self> {
        if !alpha.re.is_finite() || !alpha.im.is_finite() {
            return Err(Error::InvalidState("non-finite alpha".into()));
        }
        if n_max == 0 {
            return Err(Error::InvalidState(
                "coherent state needs n_max >= 1".into(),
            ));
        }
        let mut amp = Vec::with_capacity(n_max + 1);
        let mut term = C64::ONE; // alpha^n / sqrt(n!), unnormalized
        for n in 0..=n_max {
            if n > 0 {
                term *= alpha / (n as f64).sqrt();
            }
            amp.push(term);
        }
        let kept: f64 = amp.iter().map(|a| a.norm_sqr()).sum();
        let tail = 1.0 - (-alpha.norm_sqr()).exp() * kept;
        Self::from_amplitudes(amp, tail.max(0.0))
    }

    /// Even cat state, N_e (|alpha> + |-alpha>): support on even photon
    /// numbers only (exact zeros on odd entries).
    pub fn even_cat(alpha: C64, n_max: usize) -> Result<Self> {
        Self::cat(alpha, n_max, true)
    }

    /// Odd cat state, N_o (|alpha> - |-alpha>): support on odd photon numbers
    /// only. Undefined at alpha = 0.
    pub fn odd_cat(alpha: C64, n_max: usize) -> Result<Self> {
        if alpha.norm_sqr() == 0.0 {
            return Err(Error::InvalidState("odd cat undefined at alpha = 0".into()));
        }
        Self::cat(alpha, n_max, false)
    }

    fn cat(alpha: C64, n_max: usize, even: bool) -> Result<Self> {
        if !alpha.re.is_finite() || !alpha.im.is_finite() {
            return Err(Error::InvalidState("non-finite alpha".into()));
        }
        if n_max == 0 {
            return Err(Error::InvalidState("cat state needs n_max >= 1".into()));
        }
        let parity = if even { 0 } else { 1 };
        let mut amp = vec![C64::ZERO; n_max + 1];
        let mut term = C64::ONE;
        for n in 0..=n_max {
            if n > 0 {
                term *= alpha / (n as f64).sqrt();
            }
            if n % 2 == parity {
                amp[n] = term;
            }
        }
        let kept: f64 = amp.iter().map(|a| a.norm_sqr()).sum();
        // Exact norms: sum over the full parity sector is cosh|a|^2 or
        // sinh|a|^2 in the variable |a|^2.
        let x = alpha.norm_sqr();
        let full = if even { x.cosh() } else { x.sinh() };
        let tail = (1.0 - kept / full).max(0.0);
        if tail > TAIL_ERROR {
            return Err(Error::InvalidState(format!(
                "truncation too small for cat state: tail mass {tail:.3e}"
            )));
        }
        Self::from_amplitudes(amp, tail)
    }

    /// Squeezed vacuum S(r)|0> with S(r) = exp(r/2 (a^2 - a†^2)); support on
    /// even photon numbers only.
    pub fn squeezed_vacuum(r: f64, n_max: usize) -> Result<Self> {
        if !r.is_finite() {
            return Err(Error::InvalidState("non-finite squeezing parameter".into()));
        }
        if n_max == 0 {
            return Err(Error::InvalidState(
                "squeezed vacuum needs n_max >= 1".into(),
            ));
        }
        let t = r.tanh();
        let mut amp = vec![C64::ZERO; n_max + 1];
        // b_n = (-tanh r)^n sqrt((2n)!) / (2^n n!), so that
        // S(r)|0> = sqrt(sech r) * sum_n b_n |2n>.
        let mut b = 1.0_f64;
        let mut kept = 0.0;
        for n in 0.. {
            let photon = 2 * n;
            if photon > n_max {
                break;
            }
            amp[photon] = c(b, 0.0);
            kept += b * b;
            let nf = n as f64;
            b *= -t * ((2.0 * nf + 2.0) * (2.0 * nf + 1.0)).sqrt() / (2.0 * (nf + 1.0));
        }
        let sech = r.cosh().recip();
        let tail = (1.0 - sech * kept).max(0.0);
        if tail > TAIL_ERROR {
            return Err(Error::InvalidState(format!(
                "truncation too small for squeezed vacuum: tail mass {tail:.3e}"
            )));
        }
        Self::from_amplitudes(amp, tail)
    }

    /// (a†)^k applied to the state, renormalized. Components pushed past the
    /// truncation are dropped and recorded in the tail diagnostic.
    pub fn photon_added(&self, k: usize) -> Result<Self> {
        if !(1..=2).contains(&k) {
            return Err(Error::InvalidState(format!(
                "photon_added supports k in {{1, 2}}, got {k}"
            )));
        }
        let mut raised = self.clone();
        let mut dropped = 0.0;
        for _ in 0..k {
            let mut next = vec![C64::ZERO; self.n_max + 1];
            dropped += raised.amp[self.n_max].norm_sqr() * (self.n_max as f64 + 1.0);
            for n in 0..self.n_max {
                next[n + 1] = raised.amp[n] * ((n + 1) as f64).sqrt();
            }
            raised.amp = next;
        }
        let norm_sq: f64 = raised.amp.iter().map(|a| a.norm_sqr()).sum();
        if norm_sq < 1e-300 {
            return Err(Error::InvalidState(
                "photon addition produced a zero-norm state".into(),
            ));
        }
        let tail = self.tail_mass + dropped / (norm_sq + dropped);
        Self::from_amplitudes(raised.amp, tail)
    }

    /// Raw norm of (a†)^k |self> before renormalization; used to verify the
    /// closed-form normalization constants of photon-added states.
    pub fn raising_norm(&self, k: usize) -> f64 {
        let mut total = 0.0;
        for (n, a) in self.amp.iter().enumerate() {
            let mut factor = 1.0;
            for j in 1..=k {
                factor *= (n + j) as f64;
            }
            if n + k <= self.n_max {
                total += a.norm_sqr() * factor;
            }
        }
        total.sqrt()
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amp
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// <self|other>.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amp
            .iter()
            .zip(&other.amp)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.amp.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// <a† a>.
    pub fn mean_photon_number(&self) -> f64 {
        self.amp
            .iter()
            .enumerate()
            .map(|(n, a)| n as f64 * a.norm_sqr())
            .sum()
    }

    /// True if every odd-photon amplitude is exactly zero.
    pub fn is_even_support(&self) -> bool {
        self.amp
            .iter()
            .skip(1)
            .step_by(2)
            .all(|a| a.re == 0.0 && a.im == 0.0)
    }

    /// True if every even-photon amplitude is exactly zero.
    pub fn is_odd_support(&self) -> bool {
        self.amp
            .iter()
            .step_by(2)
            .all(|a| a.re == 0.0 && a.im == 0.0)
    }

    /// Entrywise product with a real diagonal (projector mask or operator
    /// eigenvalues); output is generally unnormalized.
    pub fn masked(&self, diag: &[f64]) -> Vec<C64> {
        self.amp.iter().zip(diag).map(|(a, d)| a * *d).collect()
    }

    /// Normally ordered moment <self| a†^p a^q |self>.
    pub fn normal_moment(&self, p: usize, q: usize) -> C64 {
        dyad_normal_moment(self, self, p, q)
    }
}

/// <y| a†^p a^q |x> for truncated vectors, i.e. the normally ordered moment
/// of the operator |x><y|.
pub fn dyad_normal_moment(x: &FockVector, y: &FockVector, p: usize, q: usize) -> C64 {
    // a^q |x>: component n of the result is sqrt((n+1)...(n+q)) x_{n+q}.
    // Likewise for a^p |y>; the moment is <a^p y | a^q x>.
    let lowered = |v: &FockVector, k: usize| -> Vec<C64> {
        let d = v.dim();
        (0..d)
            .map(|n| {
                if n + k < d {
                    let mut f = 1.0;
                    for j in 1..=k {
                        f *= (n + j) as f64;
                    }
                    v.amp[n + k] * f.sqrt()
                } else {
                    C64::ZERO
                }
            })
            .collect()
    };
    let ax = lowered(x, q);
    let ay = lowered(y, p);
    ay.iter().zip(&ax).map(|(a, b)| a.conj() * b).sum()
}

/// A pure state of two modes with a common truncation; amplitude layout is
/// `amp[n1 * dim + n2]`.
#[derive(Clone, Debug)]
pub struct TwoModeState {
    n_max: usize,
    amp: Vec<C64>,
}

impl TwoModeState {
    /// (|x>|y> + |y>|x>) / sqrt(2), the entangled even/odd template.
    pub fn symmetric_pair(x: &FockVector, y: &FockVector) -> Result<Self> {
        if x.n_max != y.n_max {
            return Err(Error::InvalidState(
                "two-mode constituents need a common n_max".into(),
            ));
        }
        let d = x.dim();
        let mut amp = vec![C64::ZERO; d * d];
        for n1 in 0..d {
            for n2 in 0..d {
                amp[n1 * d + n2] = x.amp[n1] * y.amp[n2] + y.amp[n1] * x.amp[n2];
            }
        }
        let norm_sq: f64 = amp.iter().map(|a| a.norm_sqr()).sum();
        let inv = norm_sq.sqrt().recip();
        for a in &mut amp {
            *a *= inv;
        }
        Ok(Self {
            n_max: x.n_max,
            amp,
        })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn mode_dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amp
    }
}

/// Matrix container for single- or two-mode density operators (two-mode uses
/// `dim = d^2` with the same index layout as [`TwoModeState`]).
#[derive(Clone, Debug)]
pub struct DensityOperator {
    dim: usize,
    elems: Vec<C64>,
}

impl DensityOperator {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            elems: vec![C64::ZERO; dim * dim],
        }
    }

    pub fn from_pure(psi: &FockVector) -> Self {
        let mut rho = Self::zeros(psi.dim());
        rho.accumulate_outer(&psi.amp, 1.0);
        rho
    }

    pub fn from_two_mode_pure(psi: &TwoModeState) -> Self {
        let mut rho = Self::zeros(psi.amp.len());
        rho.accumulate_outer(&psi.amp, 1.0);
        rho
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.elems[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.elems[i * self.dim + j] = v;
    }

    pub fn elems(&self) -> &[C64] {
        &self.elems
    }

    pub fn elems_mut(&mut self) -> &mut [C64] {
        &mut self.elems
    }

    /// rho += w |u><v|.
    pub fn accumulate_dyad(&mut self, u: &[C64], v: &[C64], w: C64) {
        assert_eq!(u.len(), self.dim);
        assert_eq!(v.len(), self.dim);
        for (i, ui) in u.iter().enumerate() {
            if ui.norm_sqr() == 0.0 {
                continue;
            }
            let row = &mut self.elems[i * self.dim..(i + 1) * self.dim];
            let w_ui = *ui * w;
            for (r, vj) in row.iter_mut().zip(v) {
                *r += w_ui * vj.conj();
            }
        }
    }

    /// rho += weight |v><v|.
    pub fn accumulate_outer(&mut self, v: &[C64], weight: f64) {
        assert_eq!(v.len(), self.dim);
        for (i, vi) in v.iter().enumerate() {
            if vi.norm_sqr() == 0.0 {
                continue;
            }
            let row = &mut self.elems[i * self.dim..(i + 1) * self.dim];
            let w_vi = *vi * weight;
            for (r, vj) in row.iter_mut().zip(v) {
                *r += w_vi * vj.conj();
            }
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// max |rho_ij - conj(rho_ji)|.
    pub fn hermiticity_residue(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.dim {
            for j in i..self.dim {
                let r = (self.get(i, j) - self.get(j, i).conj()).norm();
                worst = worst.max(r);
            }
        }
        worst
    }

    /// <psi| rho |psi> for a single-mode pure state.
    pub fn expectation(&self, psi: &FockVector) -> C64 {
        assert_eq!(psi.dim(), self.dim);
        let mut acc = C64::ZERO;
        for i in 0..self.dim {
            let mut row = C64::ZERO;
            for j in 0..self.dim {
                row += self.get(i, j) * psi.amp[j];
            }
            acc += psi.amp[i].conj() * row;
        }
        acc
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.elems
            .iter()
            .zip(&other.elems)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue of the Hermitian part, via cyclic complex Jacobi.
    pub fn min_eigenvalue(&self) -> f64 {
        let evs = self.eigenvalues();
        evs.into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Eigenvalues of the Hermitian part (unsorted).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.dim;
        // Hermitize first; inputs are Hermitian up to rounding.
        let mut a = vec![C64::ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = 0.5 * (self.get(i, j) + self.get(j, i).conj());
            }
        }
        let scale: f64 = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if scale == 0.0 {
            return vec![0.0; n];
        }
        let tol = 1e-14 * scale;
        for _sweep in 0..60 {
            let mut off = 0.0_f64;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[p * n + q].norm_sqr();
                }
            }
            if off.sqrt() < tol {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    let mag = apq.norm();
                    if mag < 1e-300 {
                        continue;
                    }
                    let app = a[p * n + p].re;
                    let aqq = a[q * n + q].re;
                    // Zeroing A_pq with J = [[c, -s*], [s, c]] needs
                    // s = t c e^{-i arg(A_pq)} and t the stable root of
                    // t² + (app - aqq)/|A_pq| t - 1 = 0.
                    let theta = (app - aqq) / (2.0 * mag);
                    let t = if theta >= 0.0 {
                        1.0 / (theta + (1.0 + theta * theta).sqrt())
                    } else {
                        -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                    };
                    let cth = 1.0 / (1.0 + t * t).sqrt();
                    let s = apq.conj() / mag * (t * cth);
                    // Columns p, q.
                    for i in 0..n {
                        let aip = a[i * n + p];
                        let aiq = a[i * n + q];
                        a[i * n + p] = aip * cth + aiq * s;
                        a[i * n + q] = -aip * s.conj() + aiq * cth;
                    }
                    // Rows p, q.
                    for j in 0..n {
                        let apj = a[p * n + j];
                        let aqj = a[q * n + j];
                        a[p * n + j] = apj * cth + aqj * s.conj();
                        a[q * n + j] = -apj * s + aqj * cth;
                    }
                }
            }
        }
        (0..n).map(|i| a[i * n + i].re).collect()
    }
}

/// Which odd/even indexing of the basis {|o_n>} is in force.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndexConvention {
    /// |o_n> = |2n> for n >= 0 and |o_{-n}> = |2n-1> for n >= 1. Covers all
    /// Fock states bijectively; this is the shipped default.
    EvenUpOddDown,
    /// The main-text printing |o_{-n}> = |2n+1> (n >= 1), which never assigns
    /// photon number 1. Kept so the gap is demonstrable; construction fails.
    MainTextPrinted,
}

/// Bijection between signed basis indices and photon numbers on a truncated
/// space.
#[derive(Clone, Debug)]
pub struct OddEvenIndexMap {
    convention: IndexConvention,
    n_max: usize,
}

impl OddEvenIndexMap {
    pub fn new(convention: IndexConvention, n_max: usize) -> Result<Self> {
        match convention {
            IndexConvention::EvenUpOddDown => Ok(Self { convention, n_max }),
            IndexConvention::MainTextPrinted => Err(Error::NonBijectiveIndexMap(
                "|o_{-n}> = |2n+1> (n >= 1) leaves photon number 1 unassigned".into(),
            )),
        }
    }

    pub fn convention(&self) -> IndexConvention {
        self.convention
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Signed basis index of a photon number.
    pub fn index_of(&self, photon: usize) -> Result<i64> {
        if photon > self.n_max {
            return Err(Error::IndexOutOfRange {
                index: photon as i64,
                n_max: self.n_max,
            });
        }
        Ok(if photon.is_multiple_of(2) {
            (photon / 2) as i64
        } else {
            -(photon.div_ceil(2) as i64)
        })
    }

    /// Photon number of a signed basis index, if it is inside the truncation.
    pub fn photon_of(&self, index: i64) -> Option<usize> {
        let photon = if index >= 0 {
            2 * index as usize
        } else {
            2 * (-index) as usize - 1
        };
        (photon <= self.n_max).then_some(photon)
    }

    /// Smallest and largest indices present on the truncated space.
    pub fn index_range(&self) -> (i64, i64) {
        let max = (self.n_max / 2) as i64;
        let min = -(self.n_max.div_ceil(2) as i64);
        (min, max)
    }
}

/// The dichotomous observable O^k = O^k_+ - O^k_-, with O^k_+ projecting on
/// basis indices >= k. Stored as the +/-1 eigenvalue per photon number.
#[derive(Clone, Debug)]
pub struct CutObservable {
    k: i64,
    signs: Vec<f64>,
}

impl CutObservable {
    pub fn new(k: i64, map: &OddEvenIndexMap) -> Result<Self> {
        let (lo, hi) = map.index_range();
        // k = hi + 1 (all minus) and k = lo (all plus) are the saturated
        // operators; anything further out is indistinguishable from them and
        // rejected as unrepresentable.
        if k < lo || k > hi + 1 {
            return Err(Error::IndexOutOfRange {
                index: k,
                n_max: map.n_max(),
            });
        }
        let signs = (0..=map.n_max())
            .map(|photon| {
                let idx = map.index_of(photon).expect("photon within truncation");
                if idx >= k {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        Ok(Self { k, signs })
    }

    pub fn k(&self) -> i64 {
        self.k
    }

    /// Eigenvalue of |photon>.
    pub fn sign(&self, photon: usize) -> f64 {
        self.signs[photon]
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    /// 0/1 diagonal of the plus projector.
    pub fn plus_mask(&self) -> Vec<f64> {
        self.signs
            .iter()
            .map(|s| if *s > 0.0 { 1.0 } else { 0.0 })
            .collect()
    }

    /// 0/1 diagonal of the minus projector.
    pub fn minus_mask(&self) -> Vec<f64> {
        self.signs
            .iter()
            .map(|s| if *s < 0.0 { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Diagonal projector pair (P_+, P_-) of `O^k` as dense matrices.
pub fn cut_projectors(k: i64, map: &OddEvenIndexMap) -> Result<(DensityOperator, DensityOperator)> {
    let cut = CutObservable::new(k, map)?;
    let dim = map.n_max() + 1;
    let mut plus = DensityOperator::zeros(dim);
    let mut minus = DensityOperator::zeros(dim);
    for (photon, sign) in cut.signs().iter().enumerate() {
        if *sign > 0.0 {
            plus.set(photon, photon, C64::ONE);
        } else {
            minus.set(photon, photon, C64::ONE);
        }
    }
    Ok((plus, minus))
}

/// The rotation U(θ) acting as
/// U|e> = cos θ |e> + sin θ |o>, U|o> = sin θ |e> - cos θ |o>
/// on an orthonormal pair and as identity on the orthogonal complement.
/// This extension is the minimal unitary consistent with the 2x2 action;
/// note U is Hermitian (a reflection), so U† = U and U² = 1.
#[derive(Clone, Debug)]
pub struct SubspaceRotation {
    theta: f64,
    even: FockVector,
    odd: FockVector,
}

impl SubspaceRotation {
    pub fn new(theta: f64, even: FockVector, odd: FockVector) -> Result<Self> {
        let ortho = even.inner(&odd).norm();
        let ne = (even.norm() - 1.0).abs();
        let no = (odd.norm() - 1.0).abs();
        if ortho > 1e-10 || ne > 1e-10 || no > 1e-10 {
            return Err(Error::InvalidState(format!(
                "rotation pair not orthonormal: |<e|o>| = {ortho:.3e}"
            )));
        }
        Ok(Self { theta, even, odd })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn pair(&self) -> (&FockVector, &FockVector) {
        (&self.even, &self.odd)
    }

    /// U(θ) |psi> as raw amplitudes.
    pub fn apply(&self, amp: &[C64]) -> Vec<C64> {
        let ce: C64 = self
            .even
            .amp
            .iter()
            .zip(amp)
            .map(|(e, a)| e.conj() * a)
            .sum();
        let co: C64 = self
            .odd
            .amp
            .iter()
            .zip(amp)
            .map(|(o, a)| o.conj() * a)
            .sum();
        let (s, cth) = self.theta.sin_cos();
        let fe = ce * (cth - 1.0) + co * s;
        let fo = ce * s - co * (cth + 1.0);
        amp.iter()
            .enumerate()
            .map(|(n, a)| a + fe * self.even.amp[n] + fo * self.odd.amp[n])
            .collect()
    }

    /// Dense matrix of U(θ).
    pub fn matrix(&self) -> DensityOperator {
        let dim = self.even.dim();
        let mut m = DensityOperator::zeros(dim);
        for j in 0..dim {
            let mut basis = vec![C64::ZERO; dim];
            basis[j] = C64::ONE;
            let col = self.apply(&basis);
            for (i, v) in col.into_iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }
}

/// Matrix of the displacement operator D(β) = exp(β a† - β* a) on a
/// `dim`-dimensional truncated space, column by column from
/// D a† D† = a† - β*. Columns with index far below `dim` are accurate;
/// the caller is responsible for padding headroom.
pub fn displacement_matrix(beta: C64, dim: usize) -> Vec<C64> {
    let mut d = vec![C64::ZERO; dim * dim];
    // Column 0: coherent state |β>.
    let mut term = C64::new((-0.5 * beta.norm_sqr()).exp(), 0.0);
    for m in 0..dim {
        if m > 0 {
            term *= beta / (m as f64).sqrt();
        }
        d[m * dim] = term;
    }
    let bc = beta.conj();
    for n in 0..dim - 1 {
        let inv = ((n + 1) as f64).sqrt().recip();
        for m in (1..dim).rev() {
            let raised = d[(m - 1) * dim + n] * (m as f64).sqrt();
            d[m * dim + n + 1] = (raised - bc * d[m * dim + n]) * inv;
        }
        d[n + 1] = -bc * d[n] * inv;
    }
    d
}

/// One displaced-parity Wigner sample with its truncation-reliability flag.
#[derive(Clone, Copy, Debug)]
pub struct WignerSample {
    pub value: f64,
    pub reliable: bool,
}

/// Displaced-parity Wigner value W(β) = (2/π) Tr[ρ D(β) Π D†(β)], evaluated
/// in an `oracle_dim`-dimensional space (ρ is zero-padded into it). The
/// convention integrates to ∫ W d²β = 1.
pub fn displaced_parity_wigner(rho: &DensityOperator, beta: C64, oracle_dim: usize) -> f64 {
    let sd = rho.dim();
    let od = oracle_dim.max(sd);
    let d = displacement_matrix(beta, od);
    // Tr[ρ D Π D†] = Σ_j (-1)^j  (col_j)† ρ (col_j), truncating each column
    // to the state's dimension.
    let mut acc = 0.0;
    let mut col = vec![C64::ZERO; sd];
    for j in 0..od {
        for (m, slot) in col.iter_mut().enumerate() {
            *slot = d[m * od + j];
        }
        let mut quad = C64::ZERO;
        for m in 0..sd {
            let mut row = C64::ZERO;
            for n in 0..sd {
                row += rho.get(m, n) * col[n];
            }
            quad += col[m].conj() * row;
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * quad.re;
    }
    2.0 / std::f64::consts::PI * acc
}

/// Single-mode numeric Wigner oracle at the state's own truncation, with the
/// |β|² ≲ n_max/4 reliability heuristic.
pub fn wigner_numeric(rho: &DensityOperator, beta: C64) -> WignerSample {
    let value = displaced_parity_wigner(rho, beta, rho.dim());
    let reliable = beta.norm_sqr() <= rho.dim() as f64 / 4.0;
    WignerSample { value, reliable }
}

/// Dense matrix of D(β) Π D†(β) truncated to `block` rows/columns; the
/// internal computation runs at `oracle_dim`.
pub fn displaced_parity_block(beta: C64, block: usize, oracle_dim: usize) -> Vec<C64> {
    let od = oracle_dim.max(block);
    let d = displacement_matrix(beta, od);
    let mut h = vec![C64::ZERO; block * block];
    for n in 0..block {
        for m in 0..block {
            let mut acc = C64::ZERO;
            for j in 0..od {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                acc += d[n * od + j] * d[m * od + j].conj() * sign;
            }
            h[n * block + m] = acc;
        }
    }
    h
}

/// Two-mode displaced-parity Wigner value
/// W(β, γ) = (4/π²) Tr[ρ (D_β Π D_β†) ⊗ (D_γ Π D_γ†)].
pub fn displaced_parity_wigner_two_mode(
    rho: &DensityOperator,
    mode_dim: usize,
    beta: C64,
    gamma: C64,
    oracle_dim: usize,
) -> f64 {
    assert_eq!(rho.dim(), mode_dim * mode_dim);
    let ha = displaced_parity_block(beta, mode_dim, oracle_dim);
    let hb = displaced_parity_block(gamma, mode_dim, oracle_dim);
    // Tr[ρ (A ⊗ B)] = Σ ρ[(m1 m2),(n1 n2)] A[n1, m1] B[n2, m2]
    let mut acc = C64::ZERO;
    for m1 in 0..mode_dim {
        for n1 in 0..mode_dim {
            let a = ha[n1 * mode_dim + m1];
            if a.norm_sqr() == 0.0 {
                continue;
            }
            let mut inner = C64::ZERO;
            for m2 in 0..mode_dim {
                let row = (m1 * mode_dim + m2) * rho.dim();
                for n2 in 0..mode_dim {
                    inner += rho.elems[row + n1 * mode_dim + n2] * hb[n2 * mode_dim + m2];
                }
            }
            acc += a * inner;
        }
    }
    4.0 / (std::f64::consts::PI * std::f64::consts::PI) * acc.re
}
