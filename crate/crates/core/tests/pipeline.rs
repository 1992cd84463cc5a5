use diffsim::coords::{build_rho_theta_surface, manifold_distance, ChartOptions, DistanceMode};
use diffsim::geodesics::SingularityReason;
use diffsim::{presets, Frame, Potential, PotentialField, PotentialSpec, Vec3};

#[test]
fn curvilinear_chart_curves_stay_on_level_sets() {
    let u = Potential::<f64>::new(presets::curvilinear_gaussian()).unwrap();
    let anchor = Vec3::new(20.4317, 1.27943, -8.99487);
    let opts = ChartOptions { n_theta: 4, n_rho: 3, ..ChartOptions::default() };
    let chart = build_rho_theta_surface(&u, anchor, &opts).unwrap();
    assert_eq!(chart.theta_curves.len(), 8);
    let d0 = manifold_distance(&u, anchor, DistanceMode::ToCriticalSet, &opts.coords).unwrap();
    for c in chart.theta_curves.iter().filter(|c| c.seed_index == 0) {
        let geo = c.geodesic.as_ref().unwrap();
        assert!(geo.total_arclength() > 0.5);
        // θ geodesics move within the level set of U through their seed
        let u0 = u.value(c.seed);
        for (_, y) in geo.ode.sample_uniform(8) {
            let p = Vec3::new(y[0], y[1], y[2]);
            assert!((u.value(p) - u0).abs() < 1e-6 * u0.abs().max(1.0));
        }
        let d = manifold_distance(&u, geo.end_point(), DistanceMode::ToCriticalSet, &opts.coords).unwrap();
        assert!((d - d0).abs() < 1e-3 * d0);
    }
    assert!(chart.rho_curves.iter().all(|r| r.curve.is_ok()));
}

#[test]
fn gaussian_theta_geodesic_stops_at_frame_singularity() {
    let u = Potential::<f64>::new(presets::gaussian()).unwrap();
    let opts = ChartOptions { n_theta: 1, n_rho: 1, ..ChartOptions::default() };
    let chart = build_rho_theta_surface(&u, Vec3::new(10.0, 0.0, 0.0), &opts).unwrap();
    for c in &chart.theta_curves {
        let geo = c.geodesic.as_ref().unwrap();
        assert_eq!(geo.singular, Some(SingularityReason::AxisComponentSmall));
        let end = geo.end_point();
        let g = u.gradient(end);
        assert!(g.x.abs() < 2e-3 * g.norm());
        // a quarter of the ellipse x² + 2y² = 100
        assert!((end.y.abs() - 50f64.sqrt()).abs() < 1e-2, "{end:?}");
    }
}

#[test]
fn single_precision_pipeline() {
    let u = Potential::<f32>::new(presets::gaussian()).unwrap();
    let p = Vec3::new(3.0f32, 1.0, -1.0);
    let g = u.gradient(p);
    assert_eq!(g, Vec3::new(-3.0, -2.0, 4.0));
    let m = diffsim::dissimilarity_metric(g, Frame::X).unwrap();
    assert!((m.g00() - 29.0).abs() < 1e-5);
}

#[test]
fn spec_round_trips_through_json() {
    for spec in [presets::gaussian(), presets::rotated_gaussian(), presets::curvilinear_gaussian(), presets::bimodal_curvilinear()]
    {
        let text = serde_json::to_string(&spec).unwrap();
        let back: PotentialSpec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
