use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shadowlab_core::contact::*;
use shadowlab_core::embedding::{rescaled_family, EmbeddingComposition, PrimitiveMap};
use shadowlab_core::poly::{Polynomial, Term};
use shadowlab_core::quadrature::{sphere_monomial_integral, QuadratureRule};
use shadowlab_core::shadow::{seed_chart, stokes_volume, ShadowGeometry, StokesOptions};
use shadowlab_core::symplectic::random::{random_subspace, random_symplectic, random_unitary};
use shadowlab_core::symplectic::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gauss_vec(dim: usize, r: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| 2.0 * r.random::<f64>() - 1.0)
}

fn random_poly(nvars: usize, degree: u32, terms: usize, scale: f64, r: &mut ChaCha8Rng) -> Polynomial {
    let mut out = Vec::new();
    for _ in 0..terms {
        let mut exp = vec![0u32; nvars];
        let d = r.random_range(2..=degree);
        for _ in 0..d {
            exp[r.random_range(0..nvars)] += 1;
        }
        out.push(Term {
            coef: scale * (2.0 * r.random::<f64>() - 1.0),
            exp,
        });
    }
    Polynomial::new(nvars, out).unwrap()
}

fn random_sphere_fn(m: usize, degree: u32, r: &mut ChaCha8Rng) -> SphereFunction {
    let mut terms = Vec::new();
    for _ in 0..6 {
        let mut a = vec![0u32; m];
        let mut b = vec![0u32; m];
        let d = r.random_range(1..=degree);
        for _ in 0..d {
            let j = r.random_range(0..m);
            if r.random::<bool>() {
                a[j] += 1;
            } else {
                b[j] += 1;
            }
        }
        terms.push((Complex::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5), a, b));
    }
    SphereFunction::from_complex(m, &terms).unwrap()
}

/// Σ c z^α z̄^β evaluated directly in complex arithmetic.
fn eval_complex(terms: &[(Complex<f64>, Vec<u32>, Vec<u32>)], x: &DVector<f64>) -> f64 {
    let m = x.len() / 2;
    let z: Vec<Complex<f64>> = (0..m).map(|j| Complex::new(x[2 * j], x[2 * j + 1])).collect();
    terms
        .iter()
        .map(|(c, a, b)| {
            let mut v = *c;
            for j in 0..m {
                v *= z[j].powu(a[j]) * z[j].conj().powu(b[j]);
            }
            v.re
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn omega_is_antisymmetric_and_bilinear(seed in any::<u64>(), a in -3.0f64..3.0) {
        let mut r = rng(seed);
        let (u, v, w) = (gauss_vec(6, &mut r), gauss_vec(6, &mut r), gauss_vec(6, &mut r));
        let uv = omega_eval(&u, &v).unwrap();
        prop_assert!((uv + omega_eval(&v, &u).unwrap()).abs() < 1e-12);
        let lhs = omega_eval(&(&u * a + &w), &v).unwrap();
        prop_assert!((lhs - a * uv - omega_eval(&w, &v).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn projector_properties(seed in any::<u64>(), k in 1usize..=2) {
        let mut r = rng(seed);
        let v = random_subspace(6, k, &mut r);
        let p = symplectic_projector(&v).unwrap();
        let pm = p.matrix();
        prop_assert!((pm * pm - pm).amax() < 1e-10 * (1.0 + pm.amax().powi(2)));
        let z = gauss_vec(6, &mut r);
        let pz = p.apply(&z);
        for b in v.basis().column_iter() {
            let b = b.into_owned();
            prop_assert!((omega_eval(&z, &b).unwrap() - omega_eval(&pz, &b).unwrap()).abs() < 1e-10 * (1.0 + z.norm() * pm.amax()));
        }
        for c in p.kernel().basis().column_iter() {
            prop_assert!(p.apply(&c.into_owned()).norm() < 1e-10 * (1.0 + pm.amax()));
        }
    }

    #[test]
    fn wirtinger_bound(seed in any::<u64>(), n in 2usize..=3, k in 1usize..=2) {
        let mut r = rng(seed);
        let frame: Vec<DVector<f64>> = (0..2 * k).map(|_| gauss_vec(2 * n, &mut r)).collect();
        let w = omega_power(&frame).unwrap().abs() / factorial(k);
        prop_assert!(w <= gram_volume(&frame) + 1e-10);
    }

    #[test]
    fn linear_nonsqueezing(seed in any::<u64>(), k in 1usize..=2) {
        let mut r = rng(seed);
        let l = random_symplectic(6, 5, 1.0, &mut r);
        let v = random_subspace(6, k, &mut r);
        let vol = linear_shadow_volume(&l, &v).unwrap();
        prop_assert!(vol >= PI.powi(k as i32) * (1.0 - 1e-9));
    }

    #[test]
    fn equality_iff_j_invariant(seed in any::<u64>(), engineered in any::<bool>()) {
        let mut r = rng(seed);
        let v = random_subspace(6, 2, &mut r);
        // L⁻¹V J-invariant for L = M·U with M mapping a complex subspace onto V
        let l = if engineered {
            let u = random_unitary(6, &mut r);
            let d = v.darboux_basis();
            let comp = symplectic_complement(&v).unwrap().darboux_basis();
            let mut m = DMatrix::zeros(6, 6);
            m.view_mut((0, 0), (6, 4)).copy_from(&d);
            m.view_mut((0, 4), (6, 2)).copy_from(&comp);
            SymplecticMatrix::new(m).unwrap().compose(&u)
        } else {
            random_symplectic(6, 4, 1.0, &mut r)
        };
        let vol = linear_shadow_volume(&l, &v).unwrap();
        let defect = j_invariance_defect(&l, &v).unwrap();
        let equal = (vol - PI * PI).abs() <= 1e-6;
        prop_assert_eq!(equal, defect <= 1e-6, "vol {} defect {}", vol, defect);
        if engineered {
            prop_assert!(defect <= 1e-8);
        }
    }

    #[test]
    fn volume_is_basis_independent(seed in any::<u64>()) {
        let mut r = rng(seed);
        let l = random_symplectic(6, 3, 1.0, &mut r);
        let v = random_subspace(6, 2, &mut r);
        let p = symplectic_projector(&v).unwrap();
        let q = v.orthonormal_basis();
        // random rotation of the orthonormal basis within V
        let g = DMatrix::from_fn(4, 4, |_, _| r.random::<f64>() - 0.5);
        let rot = g.qr().q();
        let a = shadow_volume_in_basis(&l, &p, &q);
        let b = shadow_volume_in_basis(&l, &p, &(&q * rot));
        prop_assert!((a - b).abs() < 1e-10 * a);
    }

    #[test]
    fn jacobian_matches_richardson_differences(seed in any::<u64>()) {
        let mut r = rng(seed);
        let phi = EmbeddingComposition::new(
            4,
            vec![
                PrimitiveMap::linear(random_symplectic(4, 2, 0.5, &mut r)).unwrap(),
                PrimitiveMap::ShearPositions(random_poly(2, 4, 4, 0.3, &mut r)),
                PrimitiveMap::ShearMomenta(random_poly(2, 3, 3, 0.3, &mut r)),
            ],
            2.0,
        )
        .unwrap();
        let x = gauss_vec(4, &mut r) * 0.5;
        let jac = phi.jacobian(&x).unwrap();
        prop_assert!((jac.determinant() - 1.0).abs() < 1e-9);
        let fd = |h: f64| {
            DMatrix::from_fn(4, 4, |i, j| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                (phi.eval(&xp).unwrap()[i] - phi.eval(&xm).unwrap()[i]) / (2.0 * h)
            })
        };
        let e1 = (fd(1e-2) - &jac).amax();
        let e2 = (fd(1e-3) - &jac).amax();
        // second-order differences: a tenfold smaller step cuts the error a hundredfold
        if e1 > 1e-9 {
            let ratio = e1 / e2;
            prop_assert!(ratio > 70.0 && ratio < 130.0, "ratio {}", ratio);
        }
    }

    #[test]
    fn rescaling_a_linear_map_is_trivial(seed in any::<u64>(), rr in 0.0f64..0.9, rr2 in 0.0f64..0.9) {
        let mut r = rng(seed);
        let l = random_symplectic(4, 2, 0.8, &mut r);
        let phi = EmbeddingComposition::from_linear(l.clone()).unwrap().with_domain_radius(2.0);
        let x = gauss_vec(4, &mut r) * 0.4;
        let once = rescaled_family(&phi, &x, rr).unwrap();
        let twice = rescaled_family(&once.clone().with_domain_radius(2.0), &DVector::zeros(4), rr2).unwrap();
        let y = gauss_vec(4, &mut r) * 0.45;
        prop_assert!((once.eval(&y).unwrap() - l.matrix() * &y).norm() < 1e-12);
        prop_assert!((twice.eval(&y).unwrap() - l.matrix() * &y).norm() < 1e-12);
    }

    #[test]
    fn sphere_function_matches_complex_form(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut terms = Vec::new();
        for _ in 0..5 {
            let a: Vec<u32> = (0..2).map(|_| r.random_range(0..3)).collect();
            let b: Vec<u32> = (0..2).map(|_| r.random_range(0..2)).collect();
            terms.push((Complex::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5), a, b));
        }
        let f = SphereFunction::from_complex(2, &terms).unwrap();
        for x in sample_points(2, 8, seed) {
            prop_assert!((f.eval(x.as_slice()) - eval_complex(&terms, &x)).abs() < 1e-12);
        }
    }

    #[test]
    fn averaging_invariants(seed in any::<u64>(), m in 1usize..=3) {
        let mut r = rng(seed);
        let f = random_sphere_fn(m, 4, &mut r);
        let avg = f.reeb_average();
        prop_assert!(avg.fiber_defect(&sample_points(m, 16, seed), 12) <= 1e-10);
        prop_assert!((avg.integral() - f.integral()).abs() <= 1e-10);
        let twice = avg.reeb_average();
        for x in sample_points(m, 8, seed ^ 1) {
            prop_assert!((twice.eval(x.as_slice()) - avg.eval(x.as_slice())).abs() <= 1e-12);
        }
    }

    #[test]
    fn cohomological_solution_differentiates_back(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = random_sphere_fn(2, 4, &mut r);
        let h = f.cohomological_solve();
        let target = f.reeb_average().sub(&f);
        for x in sample_points(2, 8, seed) {
            prop_assert!((h.phase_derivative(x.as_slice()) - target.eval(x.as_slice())).abs() < 1e-12);
        }
        prop_assert!(h.reeb_average().fiber_defect(&sample_points(2, 4, 5), 8) < 1e-12);
        for x in sample_points(2, 4, seed ^ 7) {
            prop_assert!(h.reeb_average().eval(x.as_slice()).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn quadrature_is_exact_on_monomials(seed in any::<u64>(), k in 1usize..=3) {
        let mut r = rng(seed);
        let rule = QuadratureRule::sphere(k, 12).unwrap();
        let deg = rule.exactness_degree() as u32;
        let mut exp = vec![0u32; 2 * k];
        for _ in 0..r.random_range(0..=deg / 2) {
            exp[r.random_range(0..2 * k)] += 2;
        }
        let q = rule.integrate(|x| exp.iter().enumerate().map(|(i, &e)| x[i].powi(e as i32)).product());
        let exact = sphere_monomial_integral(&exp);
        prop_assert!((q - exact).abs() <= 1e-12 * (1.0 + exact.abs()), "{:?}: {} vs {}", exp, q, exact);
    }

    #[test]
    fn stokes_matches_linear_closed_form(seed in any::<u64>(), n in 2usize..=3, k in 1usize..=2) {
        let mut r = rng(seed);
        let dim = 2 * n;
        let l = random_symplectic(dim, 3, 0.6, &mut r);
        let v = random_subspace(dim, k, &mut r);
        let geom = ShadowGeometry::new(&symplectic_projector(&v).unwrap()).unwrap();
        let chart = seed_chart(&l, &geom, 24).unwrap();
        prop_assert!(chart.residual_max() <= 1e-10);
        for node in chart.nodes() {
            prop_assert!((node.point.norm() - 1.0).abs() < 1e-12);
        }
        let phi = EmbeddingComposition::from_linear(l.clone()).unwrap();
        let s = stokes_volume(&phi, &geom, &chart, StokesOptions::default()).unwrap();
        let exact = linear_shadow_volume(&l, &v).unwrap();
        prop_assert!((s.value - exact).abs() <= 1e-6 * exact, "{} vs {}", s.value, exact);
    }

    #[test]
    fn opposite_signs_of_the_obstruction(seed in any::<u64>()) {
        let mut r = rng(seed);
        // invariant functions of |z₁|², |z₂|² and z₁z̄₂ with random weights
        let terms = vec![
            (Complex::new(r.random::<f64>(), 0.0), vec![1, 0], vec![1, 0]),
            (Complex::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5), vec![1, 0], vec![0, 1]),
            (Complex::new(r.random::<f64>() - 0.5, 0.0), vec![2, 0], vec![2, 0]),
            (Complex::new(0.3, 0.0), vec![2, 0], vec![0, 0]),
        ];
        let f = SphereFunction::from_complex(2, &terms).unwrap().scale(0.5);
        let fam = ContactMultiplier::linear(f, 0.1).unwrap();
        match formal_triviality_order(&fam, 1).unwrap() {
            TrivialityOutcome::Obstruction { min, max, .. } => prop_assert!(min < 0.0 && max > 0.0),
            TrivialityOutcome::TrivialThrough(_) => {}
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn invariant_multiplier_bound_holds(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = 0.2 * (r.random::<f64>() - 0.5);
        let c = Complex::new(0.1 * (r.random::<f64>() - 0.5), 0.1 * (r.random::<f64>() - 0.5));
        let f = SphereFunction::from_complex(2, &[
            (Complex::new(a, 0.0), vec![1, 0], vec![1, 0]),
            (c, vec![1, 0], vec![0, 1]),
        ]).unwrap();
        let rho = f.add(&SphereFunction::constant(2, 1.0));
        let bound = amin_upper_bound(&rho, PI).unwrap().value;
        let est = multiplier_capacity(&rho, &SearchOptions::default()).unwrap();
        prop_assert!(est.value <= bound + 1e-3, "{} > {}", est.value, bound);
    }

    #[test]
    fn capacity_is_monotone_and_conformal(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a1 = 0.8 + 0.6 * r.random::<f64>();
        let a2 = 0.8 + 0.6 * r.random::<f64>();
        let s = 0.7 + 0.6 * r.random::<f64>();
        let opts = SearchOptions::default();
        let inner = body_capacity(&QuadraticBody::ellipsoid(&[a1, a2]).unwrap(), &opts).unwrap().value;
        let outer = body_capacity(&QuadraticBody::ellipsoid(&[a1 * 1.1, a2 * 1.2]).unwrap(), &opts).unwrap().value;
        prop_assert!(inner <= outer + 1e-9);
        prop_assert!((inner - PI * a1.min(a2).powi(2)).abs() < 1e-6);
        let ball = ball_capacity(4, s, &opts).unwrap().value;
        prop_assert!((ball - s * s * PI).abs() < 1e-4);
    }
}
