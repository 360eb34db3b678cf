mod support;

use ftcbf::ekf::{ekf_init, EkfBank};
use ftcbf::sde::{integrate_step, AttackShape, AttackSignal, FaultPattern, FaultSet, NoiseStream, SystemModel};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use proptest::prelude::*;

const DT: f64 = 0.005;

fn double_integrator() -> SystemModel {
    SystemModel::linear(
        dmatrix![0.0, 1.0; 0.0, 0.0],
        dmatrix![0.0; 1.0],
        dmatrix![1.0, 0.0; 1.0, 0.0; 0.0, 1.0],
        DMatrix::from_diagonal(&dvector![0.05, 0.1]),
        DMatrix::from_diagonal(&dvector![0.05, 0.05, 0.05]),
    )
    .unwrap()
}

fn rows_of(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}

#[test]
fn covariance_converges_to_riccati_root() {
    let model = double_integrator();
    let a = dmatrix![0.0, 1.0; 0.0, 0.0];
    let c = dmatrix![1.0, 0.0; 1.0, 0.0; 0.0, 1.0];
    let sigma = DMatrix::from_diagonal(&dvector![0.05, 0.1]);
    let q = &sigma * sigma.transpose();
    let faults = FaultSet::new(3, vec![FaultPattern::empty(), FaultPattern::new([2]), FaultPattern::new([1, 2])]).unwrap();
    let mut bank = EkfBank::new(&model, &faults, DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
    let u = dvector![0.0];
    let dy = DVector::zeros(3);
    let steps = (10.0 / DT).round() as usize;
    for _ in 0..steps {
        bank.step(&u, &dy, DT).unwrap();
    }
    for (i, pattern) in faults.patterns().iter().enumerate() {
        let kept = pattern.retained(3);
        let ci = rows_of(&c, &kept);
        let r = DMatrix::identity(kept.len(), kept.len()) * 0.05f64.powi(2);
        let root = support::care(&a, &ci, &q, &r);
        assert!(support::care_residual(&a, &ci, &q, &r, &root) < 1e-10);
        let gap = (bank.filter(i).covariance() - &root).norm();
        assert!(gap <= 1e-3, "pattern {i}: ‖P − P*‖ = {gap:e}");
    }
}

#[test]
fn gain_matches_closed_form() {
    let model = double_integrator();
    let mut ekf = ekf_init(&model, &FaultPattern::new([0]), dvector![0.3, -0.2], dmatrix![0.4, 0.1; 0.1, 0.2]).unwrap();
    ekf.step(&dvector![0.5], &dvector![0.01, 0.0, -0.02], DT).unwrap();
    let c = dmatrix![1.0, 0.0; 0.0, 1.0];
    let expected = ekf.covariance() * c.transpose() / 0.05f64.powi(2);
    assert!((ekf.gain() - expected).amax() < 1e-9);
    assert_eq!(ekf.retained_rows(), &[1, 2]);
}

/// A filter that discards rows r_i cannot see an attack confined to r_i:
/// under the same noise draws its trajectory is bit-identical with and
/// without the attack.
#[test]
fn removed_rows_do_not_reach_the_filter() {
    let model = double_integrator();
    let pattern = FaultPattern::new([1, 2]);
    for seed in 0..20u64 {
        let attack = AttackSignal::new(3, vec![1, 2], AttackShape::ConstantBias { magnitude: 3.0 + seed as f64 }).unwrap();
        let clean = AttackSignal::none(3);
        let run = |attack: &AttackSignal| {
            let mut noise = NoiseStream::new(seed);
            let mut x = dvector![0.0, 0.0];
            let mut ekf = ekf_init(&model, &pattern, DVector::zeros(2), DMatrix::identity(2, 2) * 0.1).unwrap();
            let mut trace = Vec::new();
            for k in 0..400 {
                // Feedback from the filter's own belief.
                let u = dvector![1.0 - ekf.estimate()[0] - ekf.estimate()[1]];
                let (next, dy) = integrate_step(&model, &x, &u, attack, k as f64 * DT, DT, &mut noise).unwrap();
                ekf.step(&u, &dy, DT).unwrap();
                x = next;
                trace.push((ekf.estimate().clone(), ekf.covariance().clone()));
            }
            trace
        };
        let a = run(&attack);
        let b = run(&clean);
        assert!(a.iter().zip(&b).all(|(p, q)| p.0 == q.0 && p.1 == q.1), "seed {seed}");
    }
}

#[test]
fn attacked_filter_drifts_clean_one_does_not() {
    let model = double_integrator();
    let faults = FaultSet::new(3, vec![FaultPattern::new([0]), FaultPattern::new([1])]).unwrap();
    let attack = AttackSignal::new(3, vec![1], AttackShape::ConstantBias { magnitude: 2.0 }).unwrap();
    let mut bank = EkfBank::new(&model, &faults, DVector::zeros(2), DMatrix::identity(2, 2) * 0.01).unwrap();
    let mut noise = NoiseStream::new(4);
    let mut x = dvector![0.0, 0.0];
    let u = dvector![0.0];
    for k in 0..600 {
        let (next, dy) = integrate_step(&model, &x, &u, &attack, k as f64 * DT, DT, &mut noise).unwrap();
        bank.step(&u, &dy, DT).unwrap();
        x = next;
    }
    let err_clean = (bank.filter(1).estimate() - &x).norm();
    let err_attacked = (bank.filter(0).estimate() - &x).norm();
    assert!(err_clean < 0.2, "{err_clean}");
    assert!(err_attacked > 0.5, "{err_attacked}");
    assert!(bank.windowed_innovation(0) > bank.windowed_innovation(1));
}

#[test]
fn bank_shares_filters_with_equal_removed_rows() {
    let model = double_integrator();
    let faults = FaultSet::new(3, vec![FaultPattern::new([0]), FaultPattern::new([1]), FaultPattern::new([0, 1])]).unwrap();
    let bank = EkfBank::new(&model, &faults, DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
    // {0}, {1}, {0,1}; every union is one of them.
    assert_eq!(bank.num_filters(), 3);
    assert_eq!(bank.leaveout_filter(0, 1).pattern(), &FaultPattern::new([0, 1]));
    assert_eq!(bank.leaveout_filter(2, 0).pattern(), &FaultPattern::new([0, 1]));
    assert_eq!(bank.leaveout_filter(1, 1).pattern(), &FaultPattern::new([1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_stays_symmetric_psd(seed in 0u64..10_000, drop in 0usize..3) {
        let mut rng = support::rng(seed);
        let a = support::gaussian_matrix(&mut rng, 2, 2);
        let sigma = support::gaussian_matrix(&mut rng, 2, 2) * 0.2;
        let model = SystemModel::linear(
            a,
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 0.0; 1.0, 0.0; 0.0, 1.0],
            sigma,
            DMatrix::identity(3, 3) * 0.1,
        ).unwrap();
        let mut ekf = ekf_init(&model, &FaultPattern::new([drop]), DVector::zeros(2), support::random_spd(&mut rng, 2, 0.01)).unwrap();
        let mut noise = NoiseStream::new(seed);
        let mut x = support::gaussian_vector(&mut rng, 2);
        let attack = AttackSignal::none(3);
        for k in 0..200 {
            let u = dvector![-ekf.estimate()[1]];
            let Ok((next, dy)) = integrate_step(&model, &x, &u, &attack, k as f64 * DT, DT, &mut noise) else { break };
            if ekf.step(&u, &dy, DT).is_err() {
                break;
            }
            x = next;
            let p = ekf.covariance();
            prop_assert_eq!(p, &p.transpose());
            prop_assert!(p.clone().symmetric_eigenvalues().min() >= -1e-12);
        }
    }
}
