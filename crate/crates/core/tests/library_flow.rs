use ctxexp_core::activity::{segment, split_in_out};
use ctxexp_core::exposure::{exposure_profile, DistrictPrevalence, ParticipantActivity};
use ctxexp_core::hiv_imputation::{impute_cohort, BridgeSampling, TestResult};
use ctxexp_core::prevalence_field::{aggregate_homesteads, prevalence_field, KernelParams};
use ctxexp_core::synth_oracle::{gen_cohort, gen_trajectories, SynthConfig};

fn small() -> SynthConfig {
    let mut cfg = SynthConfig::default();
    cfg.seed = 21;
    cfg.cohort.n_participants = 1500;
    cfg.cohort.n_homesteads = 500;
    cfg.trajectories.n_participants = 25;
    cfg.trajectories.days = 3.0;
    cfg
}

#[test]
fn imputed_sequences_honour_every_test() {
    let cfg = small();
    let c = gen_cohort(&cfg).unwrap();
    let reps = impute_cohort(&c.records, &c.rates, 5, 3, BridgeSampling::Conditioned).unwrap();
    assert_eq!(reps.len(), 3);
    for rep in &reps {
        for (rec, seq) in c.records.iter().zip(rep) {
            assert_eq!(rec.person_id, seq.person_id);
            assert!(seq.is_monotone());
            assert_eq!(seq.first_period, rec.entry_period);
            assert_eq!(seq.last_period(), rec.exit_period);
            for (p, r) in &rec.tests {
                let want = match r {
                    TestResult::Negative => 0,
                    TestResult::Positive => 1,
                };
                assert_eq!(seq.status_at(*p), Some(want), "{} in {p}", rec.person_id);
            }
        }
    }
}

#[test]
fn imputation_does_not_depend_on_thread_count() {
    let cfg = small();
    let c = gen_cohort(&cfg).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                impute_cohort(&c.records, &c.rates, 9, 2, BridgeSampling::Conditioned).unwrap()
            })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn hotspot_shows_in_the_imputed_field() {
    let cfg = small();
    let c = gen_cohort(&cfg).unwrap();
    let reps = impute_cohort(&c.records, &c.rates, 5, 5, BridgeSampling::Conditioned).unwrap();
    let period = cfg.cohort.last_period;
    let (years, stats) = aggregate_homesteads(
        &c.homesteads,
        &c.residences,
        &reps,
        period,
        Some(&c.world.regions),
    );
    assert!(stats.residents > 0);
    let field = prevalence_field(&c.world.grid, &years, &KernelParams::default()).unwrap();
    let zone = cfg.cohort.hotspot.unwrap();
    let (mut hot, mut cold) = (Vec::new(), Vec::new());
    for (cell, v) in field.values.iter().enumerate() {
        if let Some(v) = v {
            if zone.contains(c.world.grid.centroid(cell)) {
                hot.push(*v);
            } else {
                cold.push(*v);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(!hot.is_empty() && !cold.is_empty());
    assert!(
        mean(&hot) > mean(&cold),
        "{} vs {}",
        mean(&hot),
        mean(&cold)
    );
}

#[test]
fn trajectories_give_bounded_exposures() {
    let cfg = small();
    let c = gen_cohort(&cfg).unwrap();
    let reps = impute_cohort(&c.records, &c.rates, 5, 2, BridgeSampling::Conditioned).unwrap();
    let (years, _) = aggregate_homesteads(
        &c.homesteads,
        &c.residences,
        &reps,
        cfg.cohort.last_period,
        Some(&c.world.regions),
    );
    let field = prevalence_field(&c.world.grid, &years, &KernelParams::default()).unwrap();
    let dp = DistrictPrevalence::new(c.world.district_prevalence.clone()).unwrap();
    let tr = gen_trajectories(&cfg, &c.world).unwrap();
    let mut with_home = 0;
    for seq in &tr.fixes {
        let split = split_in_out(&segment(seq, 1800.0), &c.world.regions);
        let act = ParticipantActivity::from_split(&split, &c.world.grid).unwrap();
        let e = exposure_profile(&act, &field, &dp, 50.0).unwrap();
        for v in [e.e_in, e.e_out, e.e_overall, e.e_home]
            .into_iter()
            .flatten()
        {
            assert!((0.0..=1.0).contains(&v));
        }
        if let (Some(a), Some(b)) = (e.fraction_in, e.fraction_out) {
            assert!((a + b - 1.0).abs() < 1e-12);
        }
        with_home += e.e_home.is_some() as usize;
    }
    assert!(with_home > tr.fixes.len() / 2);
}
