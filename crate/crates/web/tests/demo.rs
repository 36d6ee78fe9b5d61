use whitekit_web::{isoscore_path, kind_names, scatter_demo, sts_demo};

#[test]
fn scatter_is_whitened_for_every_kind() {
    for kind in kind_names() {
        let demo = scatter_demo(&kind, 500, 1.5, 4.0, 3).unwrap();
        assert_eq!(demo.raw().len(), 1000);
        assert_eq!(demo.white().len(), 1000);
        assert_eq!(demo.labels().len(), 500);
        assert!(demo.iso_white() > 0.999, "{kind}: {}", demo.iso_white());
        assert!(demo.iso_raw() < demo.iso_white());
        // population covariance of the whitened points is the identity
        let w = demo.white();
        let n = 500.0;
        let (mx, my) = (
            w.iter().step_by(2).sum::<f64>() / n,
            w.iter().skip(1).step_by(2).sum::<f64>() / n,
        );
        let cov = |a: usize, b: usize, ma: f64, mb: f64| {
            (0..500).map(|i| (w[2 * i + a] - ma) * (w[2 * i + b] - mb)).sum::<f64>() / n
        };
        assert!((cov(0, 0, mx, mx) - 1.0).abs() < 1e-9);
        assert!((cov(1, 1, my, my) - 1.0).abs() < 1e-9);
        assert!(cov(0, 1, mx, my).abs() < 1e-9);
    }
}

#[test]
fn scatter_rejects_unknown_kind() {
    assert!(scatter_demo("diagonal", 100, 1.0, 1.0, 0).is_err());
}

#[test]
fn isoscore_path_runs_from_zero_to_one_monotonically() {
    let s = isoscore_path(16, 51).unwrap();
    assert_eq!(s.len(), 51);
    assert!(s[0].abs() < 1e-12);
    assert!((s[50] - 1.0).abs() < 1e-12);
    assert!(s.windows(2).all(|w| w[1] >= w[0]));
    assert!(isoscore_path(16, 1).is_err());
}

#[test]
fn sts_demo_whitening_beats_raw() {
    let vals = sts_demo(600, 16, 5.0, 7).unwrap();
    assert_eq!(vals.len(), 1 + kind_names().len());
    assert!(vals[1..].iter().all(|&w| w > vals[0]), "{vals:?}");
}
