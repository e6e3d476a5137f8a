use nalgebra::{Complex, DMatrix};

use super::secular::{circular_distance, SecularSample};
use super::{Discard, Tolerances};
use crate::error::{Error, Result};

type C64 = Complex<f64>;

/// Spectral form of `g(e^{-i theta} U)`: the sum of
/// `cot((theta - theta_m)/2) a_m a_m^*` over eigenphases farther than
/// `tau_deg` from `theta`.
pub fn g_spectral(phases: &[f64], vectors: &DMatrix<C64>, theta: f64, tau_deg: f64) -> DMatrix<C64> {
    let d = vectors.nrows();
    let mut g = DMatrix::<C64>::zeros(d, d);
    for (m, &t) in phases.iter().enumerate() {
        if circular_distance(t, theta) <= tau_deg {
            continue;
        }
        let c = cot((theta - t) / 2.0);
        let a = vectors.column(m);
        g += (a * a.adjoint()) * C64::new(c, 0.0);
    }
    g
}

/// `i (1 + W)(1 - W)^+` with the Moore-Penrose inverse taken by SVD,
/// discarding singular values below `eps`. The SVD runs on the real
/// `2d x 2d` representation `[[Re, -Im], [Im, Re]]`.
pub fn g_moore_penrose(w: &DMatrix<C64>, eps: f64) -> DMatrix<C64> {
    let d = w.nrows();
    let id = DMatrix::<C64>::identity(d, d);
    let a = &id - w;
    let real = DMatrix::<f64>::from_fn(2 * d, 2 * d, |r, c| {
        let z = a[(r % d, c % d)];
        match (r < d, c < d) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let svd = real.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let inv = svd.singular_values.map(|s| if s > eps { 1.0 / s } else { 0.0 });
    let p = v_t.transpose() * DMatrix::from_diagonal(&inv) * u.transpose();
    let pinv = DMatrix::<C64>::from_fn(d, d, |r, c| C64::new(p[(r, c)], p[(r + d, c)]));
    (&id + w) * pinv * C64::new(0.0, 1.0)
}

/// `g(e^{-i theta_n} U)` for eigenpair `n` of the sample.
pub fn g_apply(sample: &SecularSample, n: usize, tol: &Tolerances) -> Result<DMatrix<C64>> {
    check_isolation(sample, n, tol).map_err(Error::from)?;
    Ok(g_spectral(&sample.phases, &sample.vectors, sample.phases[n], tol.deg))
}

fn cot(x: f64) -> f64 {
    x.cos() / x.sin()
}

fn check_isolation(sample: &SecularSample, n: usize, tol: &Tolerances) -> std::result::Result<(), Discard> {
    let k = sample.kernel_dim(n);
    if k > 1 {
        return Err(Discard::Degenerate { kernel_dim: k });
    }
    if sample.isolation(n) <= tol.gap {
        return Err(Discard::PhaseGap);
    }
    Ok(())
}

/// Real symmetric `E x E` matrix `H_n` and its inertia.
#[derive(Debug, Clone)]
pub struct HessianSurrogate {
    pub h: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub positive_count: usize,
    pub negative_count: usize,
    pub near_zero_count: usize,
    /// `max |Im H| / max(1, max |Re H|)` before realification.
    pub imag_residual: f64,
}

impl HessianSurrogate {
    /// Classifies the spectrum of a symmetric matrix with the relative zero threshold.
    pub fn from_symmetric(h: DMatrix<f64>, imag_residual: f64, tol: &Tolerances) -> Self {
        let eigenvalues: Vec<f64> = h.clone().symmetric_eigenvalues().iter().copied().collect();
        let cut = tol.zero_rel * h.amax();
        let positive_count = eigenvalues.iter().filter(|&&l| l > cut).count();
        let negative_count = eigenvalues.iter().filter(|&&l| l < -cut).count();
        HessianSurrogate {
            near_zero_count: eigenvalues.len() - positive_count - negative_count,
            h,
            eigenvalues,
            positive_count,
            negative_count,
            imag_residual,
        }
    }

    /// Smallest ratio `|lambda|_(k+1) / |lambda|_(k)` in the magnitude-sorted
    /// spectrum, where `k` is the expected kernel dimension.
    pub fn kernel_gap_ratio(&self, kernel: usize) -> f64 {
        let mut mags: Vec<f64> = self.eigenvalues.iter().map(|l| l.abs()).collect();
        mags.sort_by(f64::total_cmp);
        if kernel == 0 || kernel >= mags.len() {
            return f64::INFINITY;
        }
        mags[kernel] / mags[kernel - 1]
    }

    /// Verifies the kernel has the expected dimension and is separated from
    /// the rest of the spectrum.
    pub fn check_kernel(&self, kernel: usize, tol: &Tolerances) -> std::result::Result<(), Discard> {
        if self.near_zero_count != kernel {
            return Err(Discard::KernelMismatch { near_zero: self.near_zero_count, expected: kernel });
        }
        if self.kernel_gap_ratio(kernel) < tol.kernel_gap_ratio {
            return Err(Discard::KernelGap);
        }
        Ok(())
    }
}

/// Number of strictly positive eigenvalues of `H`.
pub fn surplus_index(h: &HessianSurrogate) -> usize {
    h.positive_count
}

/// Assembles `H_n[j, j'] = a_n^* Z_j g Z_j' a_n` from the spectral sum without
/// forming `g`.
pub fn hessian(sample: &SecularSample, n: usize, tol: &Tolerances) -> std::result::Result<HessianSurrogate, Discard> {
    check_isolation(sample, n, tol)?;
    let e = sample.edge_count();
    let theta = sample.phases[n];
    let a = &sample.vectors;
    let kept: Vec<usize> = (0..sample.dim()).filter(|&m| circular_distance(sample.phases[m], theta) > tol.deg).collect();
    let k = kept.len();
    // D[j, m] = a_n^* Z_j a_m, split into real and imaginary parts; C holds cot weights
    let mut dr = DMatrix::<f64>::zeros(e, k);
    let mut di = DMatrix::<f64>::zeros(e, k);
    let mut dcr = DMatrix::<f64>::zeros(e, k);
    let mut dci = DMatrix::<f64>::zeros(e, k);
    for (col, &m) in kept.iter().enumerate() {
        let c = cot((theta - sample.phases[m]) / 2.0);
        for j in 0..e {
            let z = a[(j, n)].conj() * a[(j, m)] - a[(j + e, n)].conj() * a[(j + e, m)];
            dr[(j, col)] = z.re;
            di[(j, col)] = z.im;
            dcr[(j, col)] = z.re * c;
            dci[(j, col)] = z.im * c;
        }
    }
    let re = &dcr * dr.transpose() + &dci * di.transpose();
    let kmat = &dci * dr.transpose();
    let im = &kmat - kmat.transpose();
    let scale = re.amax().max(1.0);
    let imag_residual = im.amax() / scale;
    if imag_residual > tol.hermitian {
        return Err(Discard::NotHermitian);
    }
    let sym = (&re + re.transpose()) * 0.5;
    Ok(HessianSurrogate::from_symmetric(sym, imag_residual, tol))
}

/// `H_n` computed from an explicit `g` matrix; slower reference for tests.
pub fn hessian_from_g(sample: &SecularSample, n: usize, g: &DMatrix<C64>) -> DMatrix<C64> {
    let e = sample.edge_count();
    let an = sample.vectors.column(n);
    let mut za = DMatrix::<C64>::zeros(2 * e, e);
    for j in 0..e {
        za[(j, j)] = an[j];
        za[(j + e, j)] = -an[j + e];
    }
    za.adjoint() * g * za
}

/// `sum_e l_e (|a_n[e]|^2 + |a_n[e+E]|^2) / sum_e l_e c_e` with `c_e = 1`
/// for loops and `2` otherwise.
pub fn edge_weight(sample: &SecularSample, n: usize, lengths: &[f64]) -> Result<f64> {
    let e = sample.edge_count();
    if lengths.len() != e {
        return Err(Error::InvalidParameters(format!("{} weights for {} edges", lengths.len(), e)));
    }
    if lengths.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) || lengths.iter().all(|&l| l == 0.0) {
        return Err(Error::InvalidParameters("weights must be non-negative and not all zero".into()));
    }
    let a = &sample.vectors;
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, &l) in lengths.iter().enumerate() {
        num += l * (a[(j, n)].norm_sqr() + a[(j + e, n)].norm_sqr());
        den += l * if sample.is_loop_edge(j) { 1.0 } else { 2.0 };
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, Family};
    use crate::graph::Graph;
    use crate::quantum::scattering::build_scattering;
    use crate::quantum::secular::{decompose, secular_sample};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn random_kappa(e: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..e).map(|_| rng.random::<f64>() * TAU).collect()
    }

    #[test]
    fn one_by_one_toy() {
        // U = i, reference phase 0: i(1+i)/(1-i) = -1
        let u = DMatrix::from_element(1, 1, C64::new(0.0, 1.0));
        let direct = g_moore_penrose(&u, 1e-12)[(0, 0)];
        assert!((direct - C64::new(-1.0, 0.0)).norm() < 1e-14);
        let v = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        let spectral = g_spectral(&[PI / 2.0], &v, 0.0, 1e-8)[(0, 0)];
        assert!((spectral - direct).norm() < 1e-14);
    }

    #[test]
    fn opposite_phase_has_zero_coefficient() {
        let v = DMatrix::<C64>::identity(2, 2);
        let g = g_spectral(&[0.0, PI], &v, 0.0, 1e-8);
        assert!(g.iter().all(|z| z.norm() < 1e-15));
    }

    /// Random 4x4 unitary with prescribed, well separated phases.
    fn unitary_with_phases(phases: &[f64], rng: &mut ChaCha8Rng) -> DMatrix<C64> {
        let d = phases.len();
        let m = DMatrix::<C64>::from_fn(d, d, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let q = m.qr().q();
        let diag = DMatrix::<C64>::from_diagonal(&nalgebra::DVector::from_iterator(d, phases.iter().map(|&t| C64::from_polar(1.0, t))));
        &q * diag * q.adjoint()
    }

    #[test]
    fn spectral_form_matches_moore_penrose() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let mut phases: Vec<f64> = Vec::new();
            while phases.len() < 4 {
                let t = rng.random::<f64>() * TAU;
                if phases.iter().all(|&p| circular_distance(p, t) > 0.3) {
                    phases.push(t);
                }
            }
            let u = unitary_with_phases(&phases, &mut rng);
            let g = Graph::new_unchecked(2, vec![(0, 1), (0, 1)]);
            let smp = decompose(&u, &g, &Tolerances::default()).unwrap();
            for n in 0..4 {
                let theta = smp.phases[n];
                let w = &u * C64::from_polar(1.0, -theta);
                let mp = g_moore_penrose(&w, 1e-9);
                let sp = g_spectral(&smp.phases, &smp.vectors, theta, 1e-8);
                assert!((mp - &sp).iter().all(|z| z.norm() < 1e-7));
                assert!((sp.adjoint() - &sp).iter().all(|z| z.norm() < 1e-12));
                assert!((&sp * smp.vectors.column(n)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn fast_hessian_matches_explicit_g() {
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for f in [Family::Complete { n: 5 }, Family::Dumbbell, Family::Mandarin { m: 4 }] {
            let g = generate(&f).unwrap();
            let s = build_scattering(&g);
            let smp = secular_sample(&s, &g, &random_kappa(g.edge_count(), &mut rng), &tol).unwrap();
            for n in 0..smp.dim() {
                let fast = hessian(&smp, n, &tol).unwrap();
                let gm = g_apply(&smp, n, &tol).unwrap();
                let slow = hessian_from_g(&smp, n, &gm);
                let scale = fast.h.amax().max(1.0);
                for j in 0..g.edge_count() {
                    for k in 0..g.edge_count() {
                        assert!((slow[(j, k)].re - fast.h[(j, k)]).abs() < 1e-8 * scale);
                        assert!(slow[(j, k)].im.abs() < 1e-8 * scale);
                    }
                }
            }
        }
    }

    #[test]
    fn synthetic_inertia() {
        let tol = Tolerances::default();
        let h = HessianSurrogate::from_symmetric(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, -1.0, 0.0])), 0.0, &tol);
        assert_eq!((h.positive_count, h.negative_count, h.near_zero_count), (1, 1, 1));
        assert_eq!(surplus_index(&h), 1);
        let neg = HessianSurrogate::from_symmetric(-h.h.clone(), 0.0, &tol);
        assert_eq!(surplus_index(&neg), 1);
        assert!(h.check_kernel(1, &tol).is_ok());
        assert!(h.check_kernel(2, &tol).is_err());
    }

    #[test]
    fn mandarin_index_is_one_with_kernel_one() {
        let tol = Tolerances::default();
        let g = generate(&Family::Mandarin { m: 3 }).unwrap();
        let s = build_scattering(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut checked = 0;
        for _ in 0..50 {
            let smp = secular_sample(&s, &g, &random_kappa(3, &mut rng), &tol).unwrap();
            for n in 0..6 {
                let Ok(h) = hessian(&smp, n, &tol) else { continue };
                if h.check_kernel(g.edge_count() - g.betti(), &tol).is_err() {
                    continue;
                }
                assert_eq!(surplus_index(&h), 1);
                assert_eq!(h.near_zero_count, 1);
                checked += 1;
            }
        }
        assert!(checked > 290);
    }

    #[test]
    fn stower_index_counts_loop_phases_in_upper_half() {
        let tol = Tolerances::default();
        let g = generate(&Family::Stower { loops: 2, tails: 1 }).unwrap();
        let s = build_scattering(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut agree = 0;
        let mut total = 0;
        for _ in 0..200 {
            let smp = secular_sample(&s, &g, &random_kappa(3, &mut rng), &tol).unwrap();
            for n in (0..6).filter(|&n| !smp.antisymmetric[n]) {
                let Ok(h) = hessian(&smp, n, &tol) else { continue };
                if h.check_kernel(g.edge_count() - g.betti(), &tol).is_err() {
                    continue;
                }
                let point = smp.on_manifold_point(n);
                let expected = [0, 1].iter().filter(|&&l| point[l] > PI && point[l] < TAU).count();
                total += 1;
                if surplus_index(&h) == expected {
                    agree += 1;
                }
            }
        }
        assert!(total > 700);
        assert_eq!(agree, total);
    }

    #[test]
    fn uniform_weights_give_one_over_2e() {
        let tol = Tolerances::default();
        let g = generate(&Family::Complete { n: 4 }).unwrap();
        let s = build_scattering(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let smp = secular_sample(&s, &g, &random_kappa(6, &mut rng), &tol).unwrap();
        let ones = vec![1.0; 6];
        for n in 0..12 {
            assert!((edge_weight(&smp, n, &ones).unwrap() - 1.0 / 12.0).abs() < 1e-12);
        }
        let lengths: Vec<f64> = (0..6).map(|_| 1.0 + rng.random::<f64>()).collect();
        let total: f64 = (0..12).map(|n| edge_weight(&smp, n, &lengths).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let mut unit = vec![0.0; 6];
        unit[2] = 1.0;
        let a = &smp.vectors;
        let expected = (a[(2, 5)].norm_sqr() + a[(8, 5)].norm_sqr()) / 2.0;
        assert!((edge_weight(&smp, 5, &unit).unwrap() - expected).abs() < 1e-15);
        assert!(edge_weight(&smp, 0, &[0.0; 6]).is_err());
    }

    #[test]
    fn loop_weights_sum_to_one_over_symmetric_subspace() {
        let tol = Tolerances::default();
        let g = generate(&Family::Dumbbell).unwrap();
        let s = build_scattering(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let smp = secular_sample(&s, &g, &random_kappa(3, &mut rng), &tol).unwrap();
        let lengths = [1.3, 1.9, 1.1];
        let total: f64 = (0..6).filter(|&n| !smp.antisymmetric[n]).map(|n| edge_weight(&smp, n, &lengths).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
