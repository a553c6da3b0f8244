use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use shadowlab_core::embedding::{AnalyticPath, EmbeddingComposition, PathFactor, PathPolynomial, PrimitiveMap};
use shadowlab_core::linalg::orthonormalize;
use shadowlab_core::poly::{Polynomial, Term};
use shadowlab_core::shadow::{
    nonsqueezing_margin, radial_oracle_volume, seed_chart, shadow_volume, singular_residual, stokes_volume,
    trace_chart, ChartTracer, Method, OracleParams, ShadowGeometry, StokesOptions,
};
use shadowlab_core::symplectic::random::{random_subspace, random_symplectic, random_unitary};
use shadowlab_core::symplectic::{
    complex_structure, linear_shadow_volume, symplectic_projector, SymplecticMatrix, SymplecticSubspace,
};
use shadowlab_core::Error;

fn geometry(v: &SymplecticSubspace) -> ShadowGeometry {
    ShadowGeometry::new(&symplectic_projector(v).unwrap()).unwrap()
}

fn standard(dim: usize, k: usize) -> ShadowGeometry {
    geometry(&SymplecticSubspace::coordinate(dim, &(0..k).collect::<Vec<_>>()).unwrap())
}

fn linear(l: &SymplecticMatrix) -> EmbeddingComposition {
    EmbeddingComposition::from_linear(l.clone()).unwrap()
}

fn cubic_shear(n: usize, terms: &[(f64, Vec<u32>)]) -> AnalyticPath {
    let g = Polynomial::new(
        n,
        terms.iter().map(|(c, e)| Term { coef: *c, exp: e.clone() }).collect(),
    )
    .unwrap();
    AnalyticPath::new(2 * n, vec![PathFactor::ShearPositions(PathPolynomial::linear_in_t(&g))], 1.0, 1.0).unwrap()
}

fn e(dim: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(dim);
    v[i] = 1.0;
    v
}

#[test]
fn residual_vanishes_on_section_and_not_off_it() {
    let g = standard(6, 2);
    let id = EmbeddingComposition::identity(6);
    assert!(singular_residual(&id, &g, &e(6, 0)).unwrap().norm() < 1e-15);
    assert_eq!(singular_residual(&id, &g, &e(6, 0)).unwrap().len(), 2);
    // x_{k+1}: outside V, residual carries the tail
    let r = singular_residual(&id, &g, &e(6, 4)).unwrap();
    assert!((r.norm() - 1.0).abs() < 1e-14);
    assert!(matches!(
        singular_residual(&id, &g, &DVector::zeros(4)),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn linear_residual_is_distance_from_image_of_jv() {
    // oracle: |(I − Q)(Lᵀ)⁻¹x| with Q the orthogonal projector onto JV built from scratch
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let l = random_symplectic(6, 3, 0.8, &mut rng);
        let v = random_subspace(6, 2, &mut rng);
        let g = geometry(&v);
        let phi = linear(&l);
        let jv: Vec<DVector<f64>> = (0..4)
            .map(|j| complex_structure(6) * v.basis().column(j))
            .collect();
        let q = orthonormalize(&jv, 1e-12);
        let mut qm = DMatrix::zeros(6, 6);
        for c in &q {
            qm += c * c.transpose();
        }
        let lt_inv = l.matrix().transpose().try_inverse().unwrap();
        for _ in 0..5 {
            let x = DVector::from_fn(6, |_, _| rand::Rng::random::<f64>(&mut rng) - 0.5).normalize();
            let w = &lt_inv * &x;
            let dist = (&w - &qm * &w).norm();
            let f = singular_residual(&phi, &g, &x).unwrap().norm();
            assert!((dist - f).abs() < 1e-12 * (1.0 + dist), "{dist} vs {f}");
            // points with (Lᵀ)⁻¹x ∈ JV are zeros
            let z = DVector::from_fn(4, |_, _| rand::Rng::random::<f64>(&mut rng) - 0.5);
            let s = (l.matrix().transpose() * complex_structure(6) * g.basis() * &z).normalize();
            assert!(singular_residual(&phi, &g, &s).unwrap().norm() < 1e-12);
        }
    }
}

#[test]
fn identity_shadow_is_ball_section() {
    for (dim, k) in [(4, 1), (6, 2), (4, 2)] {
        let g = standard(dim, k);
        let id = SymplecticMatrix::identity(dim);
        let chart = seed_chart(&id, &g, 24).unwrap();
        assert!(chart.residual_max() <= 1e-12);
        for n in chart.nodes() {
            assert!((n.point.norm() - 1.0).abs() < 1e-12);
        }
        let r = stokes_volume(&linear(&id), &g, &chart, StokesOptions::default()).unwrap();
        assert!((r.value - PI.powi(k as i32)).abs() < 1e-8, "{dim} {k}: {}", r.value);
        assert!(r.error_estimate >= 0.0);
        assert_eq!(r.method, Method::Stokes);
        assert!(nonsqueezing_margin(&linear(&id), &g, 24).unwrap().abs() < 1e-8);
    }
}

#[test]
fn seed_of_diagonal_stretch_is_normalised_ellipse() {
    let l = SymplecticMatrix::stretch(&[2.0, 1.0]).unwrap();
    let g = standard(4, 1);
    let chart = seed_chart(&l, &g, 32).unwrap();
    assert!(chart.residual_max() <= 1e-12);
    for n in chart.nodes() {
        let p = &n.point;
        // p ∝ (2cosθ, sinθ/2, 0, 0) for some θ
        let theta = (2.0 * p[1]).atan2(0.5 * p[0]);
        let q = DVector::from_vec(vec![2.0 * theta.cos(), 0.5 * theta.sin(), 0.0, 0.0]).normalize();
        assert!((p - q).norm() < 1e-13);
    }
    let r = stokes_volume(&linear(&l), &g, &chart, StokesOptions::default()).unwrap();
    assert!((r.value - PI).abs() < 1e-10);
}

#[test]
fn linear_stokes_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (dim, k) in [(4, 1), (6, 1), (6, 2)] {
        for _ in 0..4 {
            let l = random_symplectic(dim, 2, 0.6, &mut rng);
            let v = random_subspace(dim, k, &mut rng);
            let g = geometry(&v);
            let exact = linear_shadow_volume(&l, &v).unwrap();
            let r = shadow_volume(&linear(&l), &g, 48).unwrap();
            assert!((r.value - exact).abs() <= 1e-6 * exact, "{} vs {exact}", r.value);
            assert!((r.value - exact).abs() <= r.error_estimate.max(1e-9 * exact));
        }
    }
}

#[test]
fn j_invariant_linear_margin_vanishes_and_others_are_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = standard(6, 2);
    for _ in 0..3 {
        let u = random_unitary(6, &mut rng);
        assert!(nonsqueezing_margin(&linear(&u), &g, 24).unwrap().abs() < 1e-8);
    }
    // a shear mixing the section with its complement
    let mut s = DMatrix::zeros(3, 3);
    s[(0, 2)] = 0.7;
    s[(2, 0)] = 0.7;
    let l = SymplecticMatrix::shear_positions(&s).unwrap();
    let m = nonsqueezing_margin(&linear(&l), &g, 48).unwrap();
    let v = SymplecticSubspace::coordinate(6, &[0, 1]).unwrap();
    let exact = linear_shadow_volume(&l, &v).unwrap() - PI * PI;
    assert!(m > 0.0 && (m - exact).abs() < 1e-6 * PI * PI, "{m} vs {exact}");
}

#[test]
fn traced_linear_path_stays_on_the_seed_set() {
    let path = AnalyticPath::new(
        4,
        vec![PathFactor::Stretch {
            plane: 0,
            scale: vec![1.0, 1.0],
        }],
        1.0,
        1.0,
    )
    .unwrap();
    let g = standard(4, 1);
    let mut tracer = ChartTracer::new(&path, &g, 32, 0.05).unwrap();
    for t in [0.05, 0.2, 0.5] {
        let chart = tracer.advance_to(t).unwrap().clone();
        let lt = SymplecticMatrix::stretch(&[1.0 + t, 1.0]).unwrap();
        let a = lt.matrix().transpose() * complex_structure(4) * g.basis();
        let a_pinv = a.clone().pseudo_inverse(1e-14).unwrap();
        for n in chart.nodes() {
            // nearest seed point: z = A⁺x normalised, then Az/|Az|
            let z = (&a_pinv * &n.point).normalize();
            let seed = (&a * z).normalize();
            assert!((&seed - &n.point).norm() < 1e-8, "t = {t}");
            assert!((n.point.norm() - 1.0).abs() < 1e-12);
        }
        let r = stokes_volume(&path.path_at(t).unwrap(), &g, &chart, StokesOptions::default()).unwrap();
        assert!((r.value - PI).abs() < 1e-8);
    }
}

#[test]
fn zero_step_is_identity_and_backwards_or_large_steps_fail() {
    let path = cubic_shear(2, &[(0.3, vec![3, 0]), (0.2, vec![1, 2])]);
    let g = standard(4, 1);
    let tracer = ChartTracer::new(&path, &g, 16, 0.1).unwrap();
    let seed = tracer.chart().clone();
    let same = trace_chart(&path, &g, 0.0, &seed).unwrap();
    assert_eq!(same.max_iterations(), 0);
    assert_eq!(same.nodes()[3].point, seed.nodes()[3].point);
    assert!(matches!(trace_chart(&path, &g, 0.5, &seed), Err(Error::StepTooLarge { .. })));
    let next = trace_chart(&path, &g, 0.05, &seed).unwrap();
    assert!(matches!(trace_chart(&path, &g, 0.01, &next), Err(Error::InvalidArgument(_))));
}

fn shear_geometry() -> (AnalyticPath, ShadowGeometry) {
    // the q1·q3 term breaks J-invariance of the linearisation at first order
    let path = cubic_shear(
        3,
        &[(0.5, vec![1, 0, 1]), (1.0, vec![3, 0, 0]), (0.8, vec![1, 0, 2]), (-0.6, vec![0, 1, 2])],
    );
    (path, standard(6, 2))
}

#[test]
fn shear_nodes_converge_quickly() {
    let (path, g) = shear_geometry();
    let mut tracer = ChartTracer::new(&path, &g, 64, 0.05).unwrap();
    let chart = tracer.advance_to(0.05).unwrap();
    assert!(chart.nodes().len() >= 10_000);
    assert!(chart.max_iterations() <= 6, "{}", chart.max_iterations());
    assert!(chart.residual_max() <= 1e-10);
    for n in chart.nodes() {
        assert!((n.point.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn shear_stokes_agrees_with_oracle() {
    let (path, g) = shear_geometry();
    let phi = path.path_at(0.1).unwrap();
    let s = shadow_volume(&phi, &g, 32).unwrap();
    let o = radial_oracle_volume(&phi, &g, &OracleParams { order: 32, ..Default::default() }).unwrap();
    assert_eq!(o.method, Method::RadialOracle);
    assert!(
        (s.value - o.value).abs() <= s.error_estimate + o.error_estimate,
        "{s:?} {o:?}"
    );
    assert!(s.margin > 0.0 && o.margin > 0.0, "{s:?} {o:?}");
}

#[test]
fn slice_preserving_shear_keeps_the_section_volume() {
    // without the mixing term every slice x3 = const is sheared within itself and
    // translated by O(t), so the shadow is the sheared central section
    let path = cubic_shear(3, &[(1.0, vec![3, 0, 0]), (0.8, vec![1, 0, 2]), (-0.6, vec![0, 1, 2])]);
    let g = standard(6, 2);
    let s = shadow_volume(&path.path_at(0.1).unwrap(), &g, 24).unwrap();
    assert!(s.margin.abs() < 1e-10, "{s:?}");
}

#[test]
fn oracle_reproduces_linear_volumes() {
    let g4 = standard(4, 1);
    let l = SymplecticMatrix::stretch(&[2.0, 1.0]).unwrap();
    let p = OracleParams {
        order: 32,
        ..Default::default()
    };
    let r = radial_oracle_volume(&linear(&l), &g4, &p).unwrap();
    assert!((r.value - PI).abs() < 5e-3 * PI, "{}", r.value);
    let g6 = standard(6, 2);
    let id = EmbeddingComposition::identity(6);
    let r = radial_oracle_volume(&id, &g6, &OracleParams::default()).unwrap();
    assert!((r.value - PI * PI).abs() < 5e-3 * PI * PI);
}

#[test]
fn oracle_refuses_non_star_shaped_images() {
    // a strong fold makes radial membership non-monotone
    let n = 1;
    let g = Polynomial::new(n, vec![Term { coef: 6.0, exp: vec![3] }]).unwrap();
    let h = Polynomial::new(n, vec![Term { coef: -6.0, exp: vec![3] }]).unwrap();
    let phi = EmbeddingComposition::new(
        2,
        vec![PrimitiveMap::ShearPositions(g), PrimitiveMap::ShearMomenta(h)],
        1.0,
    )
    .unwrap();
    let geom = standard(2, 1);
    let r = radial_oracle_volume(&phi, &geom, &OracleParams::default());
    assert!(matches!(r, Err(Error::OracleRefused(_)) | Err(Error::BisectionFailed(_))), "{r:?}");
}
