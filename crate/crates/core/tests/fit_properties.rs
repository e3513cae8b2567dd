//! Behavioral properties of the fitting loop on synthetic scenes.

use motionfield_core::fit::{fit, loss_sparsity, FitConfig, FitError};
use motionfield_core::synth::{bundled_scene, bundled_scenes, generate};
use motionfield_core::{MotionBasis, TrajectoryDataset};

/// Default proportions with a narrower network so the suite stays quick.
fn small(iterations: usize) -> FitConfig {
    FitConfig { mlp_width: 64, ..FitConfig::with_iterations(iterations) }
}

fn scene(name: &str) -> TrajectoryDataset {
    generate(&bundled_scene(name).unwrap()).unwrap()
}

#[test]
fn logged_totals_equal_weighted_parts() {
    let config = FitConfig { lambda_rigid: 0.5, ..small(400) };
    let out = fit(&scene("static-background"), &config).unwrap();
    assert_eq!(out.log.len(), 400);
    for r in &out.log {
        let l = &r.losses;
        let parts = l.reconstruction
            + config.lambda_l1 * l.l1
            + config.lambda_sparse * l.sparsity
            + config.lambda_rigid * l.rigidity;
        assert!((l.total - parts).abs() <= 1e-12, "iteration {}", r.iteration);
    }
    assert!(out.log[300].losses.rigidity > 0.0);
}

#[test]
fn smoothed_reconstruction_falls_on_every_bundled_scene() {
    for (name, spec) in bundled_scenes() {
        let out = fit(&generate(&spec).unwrap(), &small(5000)).unwrap();
        let window = |end: usize| out.log[end - 100..end].iter().map(|r| r.losses.reconstruction).sum::<f64>() / 100.0;
        let (early, late) = (window(100), window(5000));
        assert!(late < early, "{name}: {late} vs {early}");
    }
}

#[test]
fn same_seed_gives_bitwise_identical_fits() {
    let ds = scene("two-movers");
    let config = FitConfig { seed: 7, ..small(300) };
    let a = fit(&ds, &config).unwrap();
    let b = fit(&ds, &config).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(a.cloud.coefficients.entries()), bits(b.cloud.coefficients.entries()));
    assert_eq!(bits(a.cloud.means.as_flattened()), bits(b.cloud.means.as_flattened()));
    match (&a.basis, &b.basis) {
        (MotionBasis::Mlp(x), MotionBasis::Mlp(y)) => assert_eq!(bits(x.params()), bits(y.params())),
        _ => panic!("expected MLP bases"),
    }
    let c = fit(&ds, &FitConfig { seed: 8, ..config }).unwrap();
    assert_ne!(bits(a.cloud.coefficients.entries()), bits(c.cloud.coefficients.entries()));
}

#[test]
fn static_dataset_is_fit_without_motion() {
    let moving = scene("rank3");
    let k = moving.num_frames();
    let positions = (0..moving.num_points()).flat_map(|i| std::iter::repeat_n(moving.track(i)[0], k)).collect();
    let ds = TrajectoryDataset::fully_observed(positions, moving.domain().clone()).unwrap();
    let out = fit(&ds, &small(2000)).unwrap();
    assert!(out.final_rmse < 1e-6, "rmse {}", out.final_rmse);
    let largest = out.cloud.coefficients.entries().iter().fold(0.0f64, |m, c| m.max(c.abs()));
    assert!(largest < 1e-3, "largest coefficient {largest}");
}

#[test]
fn divergence_reports_last_good_checkpoint() {
    let config = FitConfig { coefficient_lr: 1e300, checkpoint_every: 10, ..small(300) };
    match fit(&scene("rank1"), &config) {
        Err(FitError::Diverged { iteration, checkpoint, .. }) => {
            assert!(iteration >= config.warmup);
            assert!(checkpoint.iteration <= iteration);
            assert_eq!(checkpoint.iteration % 10, 0);
            assert!(checkpoint.cloud.coefficients.entries().iter().all(|c| c.is_finite()));
        }
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("fit should diverge"),
    }
}

#[test]
fn sparsity_weight_lowers_sparsity_term() {
    let ds = scene("three-movers");
    // L1 alone already drives rows toward one-hot, so it is off in both runs.
    let base = FitConfig { lambda_l1: 0.0, ..small(2000) };
    let on = fit(&ds, &base).unwrap();
    let off = fit(&ds, &FitConfig { lambda_sparse: 0.0, ..base }).unwrap();
    let (s_on, s_off) = (loss_sparsity(&on.cloud.coefficients).0, loss_sparsity(&off.cloud.coefficients).0);
    assert!(s_on < s_off, "{s_on} vs {s_off}");
}

#[test]
fn rigidity_tightens_clusters_without_hurting_reconstruction() {
    let ds = scene("rigid-clusters");
    let labels = ds.labels().unwrap().to_vec();
    // Neighbor spacing here is about 0.08, where the default falloff would
    // leave every weight near zero.
    let base = FitConfig { lambda_w: 50.0, ..small(3000) };
    let on = fit(&ds, &base).unwrap();
    let off = fit(&ds, &FitConfig { lambda_rigid: 0.0, ..base }).unwrap();
    let spread = |c: &motionfield_core::Coefficients| {
        let clusters = labels.iter().filter_map(|l| l.mover).max().unwrap() + 1;
        let mut total = 0.0;
        for m in 0..clusters {
            let rows: Vec<&[f64]> =
                (0..labels.len()).filter(|i| labels[*i].mover == Some(m)).map(|i| c.row(i)).collect();
            let n = rows.len() as f64;
            for e in 0..rows[0].len() {
                let mean = rows.iter().map(|r| r[e]).sum::<f64>() / n;
                total += rows.iter().map(|r| (r[e] - mean).powi(2)).sum::<f64>() / n;
            }
        }
        total
    };
    let (v_on, v_off) = (spread(&on.cloud.coefficients), spread(&off.cloud.coefficients));
    assert!(v_on <= v_off, "variance {v_on} vs {v_off}");
    assert!(on.final_rmse <= 1.1 * off.final_rmse, "rmse {} vs {}", on.final_rmse, off.final_rmse);
}
