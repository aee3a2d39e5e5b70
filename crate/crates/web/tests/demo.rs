use nle_web::{centroids, divergence_table, run_demo, DEMO_GRID};

#[test]
fn identical_points_are_their_own_centroid() {
    let p = [0.6, 0.3, 0.1];
    let c = centroids(&[p, p, p].concat()).unwrap();
    for k in 0..3 {
        for j in 0..3 {
            assert!((c[3 * k + j] - p[j]).abs() < 1e-6, "{c:?}");
        }
    }
}

#[test]
fn centroids_match_closed_forms() {
    let pts = [0.7, 0.2, 0.1, 0.2, 0.5, 0.3];
    let c = centroids(&pts).unwrap();
    let mean = [0.45, 0.35, 0.2];
    let geo: Vec<f64> = (0..3).map(|j| (pts[j] * pts[3 + j]).sqrt()).collect();
    let z: f64 = geo.iter().sum();
    for j in 0..3 {
        assert!((c[j] - mean[j]).abs() < 1e-15);
        assert!((c[3 + j] - geo[j] / z).abs() < 1e-6);
        assert!((c[6 + j] - 1.0 / 3.0).abs() < 0.4);
    }
    let s: f64 = c[6..].iter().sum();
    assert!((s - 1.0).abs() < 1e-9);
}

#[test]
fn off_simplex_points_rejected() {
    assert!(centroids(&[0.5, 0.5, 0.5]).is_err());
}

#[test]
fn divergence_table_values() {
    let d = divergence_table(&[0.5, 0.5], &[0.9, 0.1]).unwrap();
    assert!((d[0] - 0.5108256237659907).abs() < 1e-12);
    assert!((d[1] - 0.3680642071684971).abs() < 1e-10);
    assert!((d[2] - (d[0] + d[1])).abs() < 1e-12);
    assert!((d[3] - 0.32).abs() < 1e-12);
}

#[test]
fn demo_runs_and_is_deterministic() {
    let a = run_demo(30.0, 1.5, 3).unwrap();
    let b = run_demo(30.0, 1.5, 3).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.adapt.len(), 45);
    assert_eq!(a.one_hot_grid.len(), DEMO_GRID * DEMO_GRID);
    assert!(a.source_error < 0.15, "{}", a.source_error);
    for row in &a.codebook {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
