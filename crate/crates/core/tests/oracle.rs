use rare_ring::benchmarks::{alternating_series, oracle_pf, Benchmark, OracleSettings};

fn quadrature(name: &str) -> f64 {
    oracle_pf(
        &Benchmark::new(name, None).unwrap(),
        OracleSettings::default(),
    )
    .unwrap()
}

fn close(got: f64, want: f64, rel: f64) -> bool {
    (got - want).abs() <= rel * want
}

#[test]
fn quadrature_matches_reference_values() {
    for (name, want, rel) in [
        ("wavy_circle", 2.582e-3, 2e-3),
        ("four_branch", 2.222e-3, 2e-3),
        ("alternating", 5.266e-4, 2e-3),
        ("wavy_line", 1.217e-6, 2e-3),
        ("metaballs", 1.128_57e-5, 2e-3),
        ("rastrigin", 0.072_986, 2e-3),
    ] {
        let p = quadrature(name);
        assert!(close(p, want, rel), "{name}: {p:e} vs {want:e}");
    }
}

#[test]
fn closed_forms() {
    let bs = quadrature("black_swan");
    assert!(close(bs, 6.52136e-9, 1e-5), "{bs:e}");
    let lin = oracle_pf(
        &Benchmark::new("linear", Some(7)).unwrap(),
        OracleSettings::default(),
    )
    .unwrap();
    assert!(close(lin, 1e-6, 1e-6), "{lin:e}");
}

#[test]
fn alternating_series_agrees_with_quadrature() {
    let series = alternating_series();
    assert!(close(series, quadrature("alternating"), 1e-4), "{series:e}");
}
