//! Virtual dataset construction on small hand-built datasets.

use esbo_core::gp::FitOptions;
use esbo_core::optimizer::{
    build_virtual_dataset_c, build_virtual_dataset_crash_only, build_virtual_dataset_gp,
    build_virtual_dataset_tr, pessimistic_value, Dataset, PessimisticModel, Provenance,
    SectionModel,
};
use esbo_core::{BoxDomain, EpisodeOutcome, EpisodeStatus, ParamVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn outcome(x: f64, costs: &[f64], status: EpisodeStatus) -> EpisodeOutcome {
    EpisodeOutcome {
        params: ParamVector::new(vec![x]),
        stage_costs: costs.to_vec(),
        status,
    }
}

fn dataset(items: Vec<EpisodeOutcome>) -> Dataset {
    let mut d = Dataset::new();
    for o in items {
        d.push(o);
    }
    d
}

fn domain() -> BoxDomain {
    BoxDomain::unit(1)
}

fn opts() -> FitOptions {
    FitOptions {
        restarts: 3,
        ..FitOptions::default()
    }
}

#[test]
fn pessimistic_arithmetic() {
    let j = 10.0;
    assert!((pessimistic_value(0.8 * j, 0.1 * j, j, 2.0 * j) - 1.3 * j).abs() < 1e-12);
    // Large uncertainty is capped at the worst complete cost.
    assert_eq!(pessimistic_value(50.0 * j, 0.1 * j, j, 2.0 * j), 2.0 * j);
    assert_eq!(pessimistic_value(1.2 * j, 0.0, j, 2.0 * j), 1.2 * j);
}

#[test]
fn complete_records_pass_through_every_builder() {
    let data = dataset(vec![
        outcome(0.1, &[1.0, 2.0, 4.2], EpisodeStatus::Complete),
        outcome(0.9, &[3.0, 3.0, 1.0], EpisodeStatus::Complete),
    ]);
    let observed: Vec<(ParamVector, f64)> = vec![
        (ParamVector::new(vec![0.1]), 7.2),
        (ParamVector::new(vec![0.9]), 7.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for vds in [
        build_virtual_dataset_c(&domain(), &data, &opts()).unwrap(),
        build_virtual_dataset_crash_only(&domain(), &data, &opts()).unwrap(),
        build_virtual_dataset_gp(&domain(), &data, &opts(), &mut rng).unwrap(),
    ] {
        assert_eq!(vds.training_points(), observed);
        assert!(vds
            .points
            .iter()
            .all(|p| p.provenance == Provenance::Observed));
    }
}

#[test]
fn stopped_and_crashed_points_use_the_pessimistic_model() {
    let data = dataset(vec![
        outcome(0.1, &[1.0, 1.0, 1.0, 1.0], EpisodeStatus::Complete),
        outcome(0.5, &[2.0, 2.0, 2.0, 2.0], EpisodeStatus::Complete),
        outcome(0.9, &[3.0, 3.0, 3.0, 3.0], EpisodeStatus::Complete),
        outcome(0.3, &[2.5, 2.5], EpisodeStatus::StoppedEarly),
        outcome(0.7, &[9.0], EpisodeStatus::Crashed),
    ]);
    let model = PessimisticModel::fit(&domain(), &data, &opts()).unwrap();
    let vds = build_virtual_dataset_c(&domain(), &data, &opts()).unwrap();
    assert_eq!(vds.points[3].provenance, Provenance::VirtualC);
    assert_eq!(vds.points[4].provenance, Provenance::VirtualCrash);
    for i in [3, 4] {
        let v = vds.points[i].value;
        assert_eq!(v, model.value(&vds.points[i].theta));
        assert!((4.0..=12.0).contains(&v), "{v}");
    }

    // Plain BO keeps the stopped record's partial cost untouched.
    let bo = build_virtual_dataset_crash_only(&domain(), &data, &opts()).unwrap();
    assert_eq!(bo.points[3].value, 5.0);
    assert_eq!(bo.points[3].provenance, Provenance::Observed);
    assert_eq!(bo.points[4].value, vds.points[4].value);
}

#[test]
fn time_to_crossing_examples() {
    // Incumbent 2.5 over five steps; a unit-cost record crosses at t = 3.
    let data = dataset(vec![
        outcome(0.2, &[0.5; 5], EpisodeStatus::Complete),
        outcome(0.4, &[1.0; 5], EpisodeStatus::Complete),
        outcome(0.6, &[0.1, 0.1], EpisodeStatus::StoppedEarly),
        outcome(0.8, &[0.2, 0.2, 5.0], EpisodeStatus::Crashed),
    ]);
    let vds = build_virtual_dataset_tr(&data, 5).unwrap();
    let values: Vec<f64> = vds.points.iter().map(|p| p.value).collect();
    // incumbent -T_max; crossing at 3; never crossed in 2 steps -> -(2 + 1); crash crosses at 3.
    assert_eq!(values, vec![-5.0, -3.0, -3.0, -3.0]);
}

#[test]
fn crossing_times_follow_the_current_incumbent() {
    // Stopped at t = 4 under an old incumbent of 4.0.
    let stopped = outcome(0.5, &[1.0; 4], EpisodeStatus::StoppedEarly);
    let old = dataset(vec![
        outcome(0.1, &[0.8; 5], EpisodeStatus::Complete),
        stopped.clone(),
    ]);
    assert_eq!(
        build_virtual_dataset_tr(&old, 5).unwrap().points[1].value,
        -4.0
    );
    let new = dataset(vec![
        outcome(0.1, &[0.8; 5], EpisodeStatus::Complete),
        stopped,
        outcome(0.9, &[0.4; 5], EpisodeStatus::Complete),
    ]);
    let vds = build_virtual_dataset_tr(&new, 5).unwrap();
    assert_eq!(vds.points[1].value, -2.0);
    assert_eq!(vds.points[2].value, -5.0);
    assert_eq!(vds.points[0].value, -3.0);
}

#[test]
fn crash_without_crossing_scores_its_crash_step() {
    let data = dataset(vec![
        outcome(0.1, &[1.0; 6], EpisodeStatus::Complete),
        outcome(0.5, &[0.1, 0.1], EpisodeStatus::Crashed),
    ]);
    assert_eq!(
        build_virtual_dataset_tr(&data, 6).unwrap().points[1].value,
        -2.0
    );
}

#[test]
fn two_complete_two_stopped_gives_two_sections() {
    let t_max = 10;
    let data = dataset(vec![
        outcome(0.1, &[1.0; 10], EpisodeStatus::Complete),
        outcome(0.3, &[1.5; 10], EpisodeStatus::Complete),
        outcome(0.6, &[3.0; 4], EpisodeStatus::StoppedEarly),
        outcome(0.8, &[10.0 / 7.0; 7], EpisodeStatus::StoppedEarly),
    ]);
    let model = SectionModel::fit(&domain(), &data, &opts())
        .unwrap()
        .unwrap();
    assert_eq!(model.boundaries(), &[4, 7, t_max]);
    assert_eq!(model.n_sections(), 2);
    // (4, 7] is covered by three records, (7, 10] by the two complete ones.
    assert_eq!(model.section_sizes(), vec![3, 2]);
    assert_eq!(model.order(), &[0, 1, 3, 2]);

    let vds =
        build_virtual_dataset_gp(&domain(), &data, &opts(), &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
    let kinds: Vec<Provenance> = vds.points.iter().map(|p| p.provenance).collect();
    assert_eq!(
        kinds,
        vec![
            Provenance::Observed,
            Provenance::Observed,
            Provenance::VirtualGp,
            Provenance::VirtualGp
        ]
    );
    assert!(vds.points[2].value >= 12.0);
    assert!(vds.points[3].value >= 10.0 - 1e-12);
}

#[test]
fn remaining_cost_of_a_complete_length_is_zero() {
    let data = dataset(vec![
        outcome(0.1, &[1.0; 6], EpisodeStatus::Complete),
        outcome(0.7, &[2.0; 3], EpisodeStatus::StoppedEarly),
    ]);
    let model = SectionModel::fit(&domain(), &data, &opts())
        .unwrap()
        .unwrap();
    assert_eq!(model.remaining_cost(&domain(), &[0.4], 6), (0.0, 0.0));
    let (mean, var) = model.remaining_cost(&domain(), &[0.4], 3);
    assert!(mean >= 0.0 && var >= 0.0);
}

#[test]
fn single_unique_length_needs_no_sections() {
    let data = dataset(vec![
        outcome(0.1, &[1.0; 4], EpisodeStatus::Complete),
        outcome(0.7, &[2.0; 4], EpisodeStatus::Complete),
    ]);
    assert!(SectionModel::fit(&domain(), &data, &opts())
        .unwrap()
        .is_none());
}

#[test]
fn draws_are_clamped_at_the_partial_cost() {
    // The stopped record sits next to complete records whose remaining
    // cost is zero, so the completion is centred on the partial cost and
    // half of the unclamped draws would fall below it.
    let data = dataset(vec![
        outcome(0.0, &[5.0, 0.0, 0.0, 0.0], EpisodeStatus::Complete),
        outcome(1.0, &[4.0, 0.0, 0.0, 0.0], EpisodeStatus::Complete),
        outcome(0.5, &[4.1], EpisodeStatus::StoppedEarly),
    ]);
    let mut hits = 0;
    for seed in 0..20 {
        let vds = build_virtual_dataset_gp(
            &domain(),
            &data,
            &opts(),
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap();
        let v = vds.points[2].value;
        assert!(v >= 4.1, "{v}");
        hits += usize::from(v == 4.1);
    }
    assert!(hits > 0);
}
