use qkdsim_wasm::{arrival_histogram, drift_qber, photon_statistics};

#[test]
fn arrival_histogram_tracks_the_shape() {
    let v = arrival_histogram(80.0, 0.5, 1000.0, 20_000, 20, 1).unwrap();
    assert_eq!(v.len(), 40);
    let (shape, hist) = v.split_at(20);
    assert!((shape.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!((hist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let worst = shape.iter().zip(hist).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 0.01, "{worst}");
    assert!(arrival_histogram(80.0, 0.5, 1000.0, 10, 0, 1).is_err());
    assert!(arrival_histogram(-1.0, 0.5, 1000.0, 10, 5, 1).is_err());
}

#[test]
fn photon_statistics_match_poisson() {
    let v = photon_statistics(2.0, 50_000, 3).unwrap();
    assert_eq!(v.len() % 2, 0);
    for pair in v.chunks(2) {
        let sigma = (pair[1] * (1.0 - pair[1]) / 50_000.0).sqrt();
        assert!((pair[0] - pair[1]).abs() <= 4.0 * sigma + 1e-12, "{pair:?}");
    }
    assert!(photon_statistics(-1.0, 10, 3).is_err());
}

#[test]
fn gust_beats_the_controller_and_calm_does_not() {
    let gust = drift_qber(0.02, 50.0, 10.0, 20.0, 0.2, 30, 400, 7).unwrap();
    let calm = drift_qber(0.02, 1.0, 10.0, 20.0, 0.2, 30, 400, 7).unwrap();
    assert_eq!(gust.len(), 30);
    assert!(calm.iter().all(|&q| q < 0.05), "{calm:?}");
    assert!(gust[10..20].iter().any(|&q| q > 0.11), "{gust:?}");
    assert_eq!(gust, drift_qber(0.02, 50.0, 10.0, 20.0, 0.2, 30, 400, 7).unwrap());
}
