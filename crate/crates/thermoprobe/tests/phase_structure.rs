//! Structure of optimal probes as the window widens: cluster splitting,
//! sweep bookkeeping, and bisection of the first transition for a
//! sixteen-level probe.

use thermoprobe::optim::OptimizerConfig;
use thermoprobe::phase_sweep::{cluster_levels, find_critical_ratio, sweep};
use thermoprobe::TemperatureRange;

#[test]
fn ratio_five_splits_one_level_off_the_excited_cluster() {
    let range = TemperatureRange::from_harmonic_mean(1.0, 5.0).unwrap();
    let result =
        thermoprobe::spectrum_opt::optimize_levels(16, &range, &OptimizerConfig::default())
            .unwrap();
    let clusters = cluster_levels(&result.spectrum, 1e-3).unwrap();
    assert_eq!(clusters.degeneracies(), &[1, 1, 14]);

    let energies = clusters.cluster_energies();
    assert!((energies[1] - 5.85732).abs() < 5e-3, "lower gap {}", energies[1]);
    assert!((energies[2] - 16.19130).abs() < 2e-2, "upper gap {}", energies[2]);
    assert!(
        (result.g_value - 9.08869733).abs() < 1e-4,
        "objective {}",
        result.g_value
    );

    // The grouping is not an artifact of the tolerance: halving it
    // changes nothing.
    let tighter = cluster_levels(&result.spectrum, 5e-4).unwrap();
    assert_eq!(tighter.degeneracies(), clusters.degeneracies());
}

#[test]
fn narrow_sweep_records_points_without_inventing_transitions() {
    let cfg = OptimizerConfig {
        population: 60,
        max_generations: 400,
        ..OptimizerConfig::default()
    };
    let diagram = sweep(4, 1.0, &[1.0, 1.5], &cfg).unwrap();
    assert_eq!(diagram.points.len(), 2);
    for point in &diagram.points {
        assert!(point.error.is_none());
        assert_eq!(point.clusters.as_ref().unwrap().count(), 2);
    }
    assert!(diagram.critical_ratios.is_empty());

    let csv = diagram.to_csv();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "r,count,energy_1,degeneracy_1,energy_2,degeneracy_2"
    );
    assert_eq!(lines.count(), 2);
}

#[test]
fn first_transition_bisects_to_a_tight_bracket() {
    let critical = find_critical_ratio(16, 1.0, 1, (3.2, 3.6), &OptimizerConfig::default())
        .unwrap();
    assert_eq!((critical.count_below, critical.count_above), (2, 3));
    assert!(
        critical.value > 3.25 && critical.value < 3.55,
        "transition at {}",
        critical.value
    );
    assert!(critical.half_width <= 6e-4 * critical.value);
}
