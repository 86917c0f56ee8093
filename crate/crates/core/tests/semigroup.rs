mod common;

use common::{random_kernel, random_space, rng};
use jumpflow::analysis::ring_fixture;
use jumpflow::semigroup::{heat_kernel_positivity, spectral_gap, structural_positivity};
use jumpflow::spaces::{delta_density, uniform_density};
use jumpflow::{entropy, evolve, JumpKernel, ProbabilityDensity, SemigroupBackend};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// `e^{tL}ρ` from the eigendecomposition of `M^{1/2} L M^{-1/2}`, built
/// directly from the rates.
fn eigen_oracle(kernel: &JumpKernel, rho: &[f64], t: f64) -> Vec<f64> {
    let m = kernel.space().weights();
    let n = m.len();
    let rates = kernel.rates();
    let mut s = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s[(i, j)] = m[i].sqrt() * rates[i][j] / m[j].sqrt();
                s[(i, i)] -= rates[i][j];
            }
        }
    }
    let s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let v = &eig.eigenvectors;
    let x = DVector::from_iterator(n, rho.iter().zip(m).map(|(r, w)| r * w.sqrt()));
    let decay = DVector::from_iterator(n, eig.eigenvalues.iter().map(|l| (t * l).exp()));
    let y = v * (v.transpose() * x).component_mul(&decay);
    y.iter().zip(m).map(|(a, w)| a / w.sqrt()).collect()
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn backends(kernel: &JumpKernel) -> Vec<SemigroupBackend> {
    let mut out = vec![SemigroupBackend::dense(kernel).unwrap()];
    if kernel.is_translation_invariant() {
        out.push(SemigroupBackend::spectral(kernel).unwrap());
    }
    out
}

#[test]
fn semigroup_law() {
    let mut r = rng(11);
    let ring = ring_fixture(24, 0.8).unwrap();
    let space = random_space(9, &mut r, true);
    let dense = random_kernel(&space, 0.5, &mut r);
    for kernel in [ring, dense] {
        let rho = ProbabilityDensity::random(kernel.space(), &mut r, 0.05);
        for b in backends(&kernel) {
            for (s, t) in [(0.1, 0.3), (0.7, 0.05), (1.3, 2.1)] {
                let two = evolve(&evolve(&rho, s, &b).unwrap(), t, &b).unwrap();
                let one = evolve(&rho, s + t, &b).unwrap();
                assert!(sup(two.values(), one.values()) < 1e-11, "{} s={s} t={t}", b.name());
            }
        }
    }
}

#[test]
fn self_adjoint_in_weighted_inner_product() {
    let mut r = rng(12);
    for trial in 0..20 {
        let space = random_space(7, &mut r, false);
        let kernel = random_kernel(&space, 0.6, &mut r);
        let b = SemigroupBackend::dense(&kernel).unwrap();
        let x: Vec<f64> = (0..7).map(|_| rand::Rng::random_range(&mut r, -1.0..1.0)).collect();
        let y: Vec<f64> = (0..7).map(|_| rand::Rng::random_range(&mut r, -1.0..1.0)).collect();
        let t = 0.4;
        let lhs = space.inner(&b.apply(&x, t).unwrap(), &y);
        let rhs = space.inner(&x, &b.apply(&y, t).unwrap());
        assert!((lhs - rhs).abs() < 1e-11, "trial {trial}: {lhs} vs {rhs}");
    }
}

#[test]
fn uniform_is_fixed() {
    let mut r = rng(13);
    for n in [3, 6, 10] {
        let positions = (0..n).map(|i| vec![i as f64]).collect();
        let space = jumpflow::StateSpace::general(positions, vec![1.0 / n as f64; n]).unwrap();
        let kernel = random_kernel(&space, 0.5, &mut r);
        let u = uniform_density(&space);
        for t in [0.1, 1.0, 10.0] {
            let out = evolve(&u, t, &SemigroupBackend::dense(&kernel).unwrap()).unwrap();
            assert!(sup(out.values(), u.values()) < 1e-13, "n={n} t={t}");
        }
    }
    let ring = ring_fixture(32, 1.2).unwrap();
    let u = uniform_density(ring.space());
    let out = evolve(&u, 3.0, &SemigroupBackend::spectral(&ring).unwrap()).unwrap();
    assert!(sup(out.values(), u.values()) < 1e-13);
}

#[test]
fn matches_eigendecomposition() {
    let mut r = rng(14);
    let ring = ring_fixture(16, 1.5).unwrap();
    let space = random_space(8, &mut r, true);
    let dense = random_kernel(&space, 0.7, &mut r);
    for kernel in [ring, dense] {
        let rho = ProbabilityDensity::random(kernel.space(), &mut r, 0.01);
        for b in backends(&kernel) {
            for t in [0.01, 0.3, 2.0] {
                let want = eigen_oracle(&kernel, rho.values(), t);
                let got = evolve(&rho, t, &b).unwrap();
                let scale = want.iter().fold(1.0f64, |a, x| a.max(x.abs()));
                assert!(sup(got.values(), &want) < 1e-11 * scale, "{} t={t}", b.name());
            }
        }
    }
}

#[test]
fn long_time_limit_is_uniform() {
    let mut r = rng(15);
    let space = random_space(8, &mut r, true);
    let mut kernel = random_kernel(&space, 0.4, &mut r);
    while !kernel.edges().is_connected() {
        kernel = random_kernel(&space, 0.4, &mut r);
    }
    let ring = ring_fixture(16, 1.0).unwrap();
    for kernel in [kernel, ring] {
        let gap = spectral_gap(&kernel);
        assert!(gap > 0.0);
        let rho = delta_density(kernel.space(), 1).unwrap();
        let u = uniform_density(kernel.space());
        let scale = u.values()[0];
        for b in backends(&kernel) {
            let out = evolve(&rho, 100.0 / gap, &b).unwrap();
            assert!(sup(out.values(), u.values()) < 1e-10 * scale.max(1.0), "{}", b.name());
        }
        // One relaxation time: the distance to uniform follows the oracle.
        let t = 1.0 / gap;
        let want = eigen_oracle(&kernel, rho.values(), t);
        let got = evolve(&rho, t, &SemigroupBackend::dense(&kernel).unwrap()).unwrap();
        assert!(sup(got.values(), &want) < 1e-10 * want.iter().fold(1.0f64, |a, x| a.max(*x)));
    }
}

#[test]
fn positivity_agrees_with_connectivity() {
    let mut r = rng(16);
    let mut connected = 0;
    for _ in 0..100 {
        let n = rand::Rng::random_range(&mut r, 2..9);
        let space = random_space(n, &mut r, false);
        let p = rand::Rng::random_range(&mut r, 0.1..0.7);
        let kernel = random_kernel(&space, p, &mut r);
        let structural = structural_positivity(&kernel);
        connected += structural as usize;
        assert_eq!(heat_kernel_positivity(&kernel, 1.0).unwrap(), structural);
    }
    // Both outcomes must actually occur.
    assert!(connected > 10 && connected < 90, "{connected} connected");
}

#[test]
fn entropy_is_minimal_at_uniform() {
    let mut r = rng(17);
    let space = random_space(12, &mut r, false);
    let u = uniform_density(&space);
    let h_u = entropy(u.values(), &space);
    let total: f64 = space.weights().iter().sum();
    assert!((h_u + total.ln()).abs() < 1e-12);
    for _ in 0..1000 {
        let floor = rand::Rng::random_range(&mut r, 1e-6..1.0);
        let rho = ProbabilityDensity::random(&space, &mut r, floor);
        assert!(entropy(rho.values(), &space) >= h_u - 1e-12);
    }
}

#[test]
fn entropy_decreases_along_the_flow() {
    let ring = ring_fixture(20, 0.6).unwrap();
    let b = SemigroupBackend::spectral(&ring).unwrap();
    let rho = delta_density(ring.space(), 3).unwrap();
    let mut last = f64::INFINITY;
    for k in 0..40 {
        let h = entropy(evolve(&rho, 0.05 * k as f64, &b).unwrap().values(), ring.space());
        assert!(h <= last + 1e-13);
        last = h;
    }
}
