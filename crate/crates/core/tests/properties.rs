use inherent_dae::geom::geometric_error;
use inherent_dae::integrate::{
    integrate, IntegratorSpec, LinearOde, Method, Problem, StepMode, Version,
};
use inherent_dae::inherent::QKind;
use inherent_dae::problems::list_problems;
use inherent_dae::smoothfact::{
    congruence_to_j, congruence_to_s, signature, smooth_qr, symplectic_unit,
};
use inherent_dae::taylor::{TaylorMatrix, TaylorScalar};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn scalar(k: usize, lead: std::ops::Range<f64>) -> impl Strategy<Value = TaylorScalar> {
    (lead, prop::collection::vec(-2.0..2.0f64, k)).prop_map(|(c0, rest)| {
        let mut c = vec![c0];
        c.extend(rest);
        TaylorScalar::new(&c)
    })
}

fn scalars(n: usize) -> impl Strategy<Value = Vec<TaylorScalar>> {
    (1usize..=4).prop_flat_map(move |k| prop::collection::vec(scalar(k, 0.5..3.0), n))
}

fn matrix(rows: usize, cols: usize, k: usize, spread: f64) -> impl Strategy<Value = TaylorMatrix> {
    prop::collection::vec(-spread..spread, rows * cols * (k + 1)).prop_map(move |v| {
        let slices = v
            .chunks(rows * cols)
            .map(|c| DMatrix::from_column_slice(rows, cols, c))
            .collect();
        TaylorMatrix::new(slices).unwrap()
    })
}

/// A matrix function `I + small` that stays well conditioned.
fn near_identity(n: usize, k: usize) -> impl Strategy<Value = TaylorMatrix> {
    matrix(n, n, k, 0.3).prop_map(move |m| &m + &TaylorMatrix::identity(n, k))
}

fn close(a: &TaylorScalar, b: &TaylorScalar, rel: f64) -> bool {
    let scale = a.coeffs().iter().chain(b.coeffs()).fold(1.0f64, |m, v| m.max(v.abs()));
    a.coeffs()
        .iter()
        .zip(b.coeffs())
        .all(|(x, y)| (x - y).abs() <= rel * scale)
}

fn slices_within(m: &TaylorMatrix, target0: &DMatrix<f64>, tol: f64) -> bool {
    m.slices().iter().enumerate().all(|(j, s)| {
        let t = if j == 0 { target0.clone() } else { DMatrix::zeros(s.nrows(), s.ncols()) };
        (s - t).amax() <= tol
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn product_is_associative(v in scalars(3)) {
        let left = &(&v[0] * &v[1]) * &v[2];
        let right = &v[0] * &(&v[1] * &v[2]);
        prop_assert!(close(&left, &right, 1e-12));
    }

    #[test]
    fn division_undoes_multiplication(v in scalars(2)) {
        let back = (&v[0] * &v[1]).div(&v[1]).unwrap();
        prop_assert!(close(&back, &v[0], 1e-12));
    }

    #[test]
    fn first_order_product_is_product_rule(a in scalar(1, -3.0..3.0), b in scalar(1, -3.0..3.0)) {
        let p = &a * &b;
        prop_assert_eq!(p.coeff(0), a.coeff(0) * b.coeff(0));
        let rule = a.coeff(1) * b.coeff(0) + a.coeff(0) * b.coeff(1);
        prop_assert!((p.coeff(1) - rule).abs() <= 1e-14 * (1.0 + rule.abs()));
    }

    #[test]
    fn square_root_squares_back(a in scalar(3, 0.5..4.0)) {
        let r = a.sqrt().unwrap();
        prop_assert!(close(&(&r * &r), &a, 1e-12));
    }

    #[test]
    fn matmul_slices_follow_product_rule(a in matrix(3, 4, 1, 1.0), b in matrix(4, 2, 1, 1.0)) {
        let c = &a * &b;
        prop_assert!((c.slice(0) - a.slice(0) * b.slice(0)).amax() <= 1e-14);
        let rule = a.slice(1) * b.slice(0) + a.slice(0) * b.slice(1);
        prop_assert!((c.slice(1) - rule).amax() <= 1e-13);
    }

    #[test]
    fn frozen_qr_reconstructs_input((a, k) in (0usize..=2).prop_flat_map(|k| (matrix(5, 3, k, 1.0), Just(k)))) {
        let f = smooth_qr(&a, None).unwrap();
        let mut ap = TaylorMatrix::zeros(5, 3, k);
        for (c, &src) in f.decisions.perm.iter().enumerate() {
            ap.set_block(0, c, &a.columns(src, 1));
        }
        let qr = &f.q * &f.r;
        prop_assert!((&qr - &ap).amax() <= 1e-9);
        let qtq = &f.q.transpose() * &f.q;
        prop_assert!(slices_within(&qtq, &DMatrix::identity(5, 5), 1e-10));
    }

    #[test]
    fn congruence_to_j_normalizes(g in near_identity(4, 1)) {
        let j = TaylorMatrix::constant(symplectic_unit(2), 1);
        let ebar = &(&g.transpose() * &j) * &g;
        let res = congruence_to_j(&ebar, None).unwrap();
        let back = &(&res.w.transpose() * &ebar) * &res.w;
        prop_assert!((back.slice(0) - symplectic_unit(2)).amax() <= 1e-9);
        prop_assert!(back.slice(1).amax() <= 1e-8);
    }

    #[test]
    fn congruence_to_s_normalizes(g in near_identity(3, 1)) {
        let s = TaylorMatrix::constant(signature(2, 1), 1);
        let ebar = &(&g.transpose() * &s) * &g;
        let res = congruence_to_s(&ebar, 2, 1, None).unwrap();
        let back = &(&res.w.transpose() * &ebar) * &res.w;
        prop_assert!((back.slice(0) - signature(2, 1)).amax() <= 1e-9);
        prop_assert!(back.slice(1).amax() <= 1e-8);
    }

    #[test]
    fn symplectic_shears_stay_in_group(entries in prop::collection::vec(-1.0..1.0f64, 9)) {
        let mut phi = DMatrix::identity(4, 4);
        for (i, s) in entries.chunks(3).enumerate() {
            let sym = DMatrix::from_row_slice(2, 2, &[s[0], s[1], s[1], s[2]]);
            let mut shear = DMatrix::identity(4, 4);
            if i % 2 == 0 {
                shear.view_mut((0, 2), (2, 2)).copy_from(&sym);
            } else {
                shear.view_mut((2, 0), (2, 2)).copy_from(&sym);
            }
            phi = shear * phi;
        }
        let err = geometric_error(&phi, &symplectic_unit(2)).unwrap();
        prop_assert!(err <= 1e-12 * phi.amax().powi(2).max(1.0));
    }

    #[test]
    fn gauss_keeps_rotation_norm(omega in 0.1..5.0f64, steps in 1usize..40, x0 in (-2.0..2.0f64, -2.0..2.0f64)) {
        let j = symplectic_unit(1) * omega;
        let mut ode = LinearOde::new(2, move |_| (j.clone(), DVector::zeros(2)));
        let spec = IntegratorSpec::new(Method::Gauss, 2, StepMode::Fixed(steps), Version::Ode(QKind::Inherent)).unwrap();
        let x0 = DVector::from_vec(vec![x0.0, x0.1]);
        let traj = integrate(&spec, Problem::Inherent(&mut ode), 0.0, 3.0, &x0).unwrap();
        for x in &traj.states {
            prop_assert!((x.norm() - x0.norm()).abs() <= 1e-12 * (1.0 + x0.norm()));
        }
    }

    #[test]
    fn adaptive_trajectories_are_ordered_and_finite(
        lambda in -20.0..1.0f64,
        tol in 1e-8..1e-3f64,
        pick in 0usize..4,
    ) {
        let (method, stages) = [(Method::DormandPrince, 7), (Method::DormandPrince, 13), (Method::Gauss, 2), (Method::Radau, 3)][pick];
        let mut ode = LinearOde::new(1, move |_| (DMatrix::from_element(1, 1, lambda), DVector::zeros(1)));
        let spec = IntegratorSpec::new(method, stages, StepMode::Adaptive(tol), Version::Ode(QKind::Inherent)).unwrap();
        let traj = integrate(&spec, Problem::Inherent(&mut ode), 0.0, 2.0, &DVector::from_element(1, 1.0)).unwrap();
        prop_assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        prop_assert_eq!(*traj.times.last().unwrap(), 2.0);
        prop_assert!(traj.states.iter().all(|x| x.iter().all(|v| v.is_finite())));
    }
}

#[test]
fn direct_version_needs_a_dae_method() {
    for m in [Method::DormandPrince, Method::Gauss] {
        let s = m.default_stages();
        assert!(IntegratorSpec::new(m, s, StepMode::Fixed(10), Version::Direct).is_err());
    }
    for m in [Method::GaussLobatto, Method::Radau, Method::ImplicitEuler] {
        let s = m.default_stages();
        assert!(IntegratorSpec::new(m, s, StepMode::Fixed(10), Version::Direct).is_ok());
    }
    assert!(IntegratorSpec::new(Method::GaussLobatto, 2, StepMode::Fixed(10), Version::Ode(QKind::Inherent)).is_err());
}

#[test]
fn catalog_dimensions_add_up() {
    let entries = list_problems();
    assert_eq!(entries.len(), 5);
    for e in entries {
        assert_eq!(e.a + e.d, e.n, "{}", e.name);
    }
}
