use mfo_core::lr_schedules::{round_boundaries, CyclePlan, LrSchedule, ScheduleKind};
use mfo_core::search_space::Config;
use mfo_core::trainers::{EpochReport, SurrogateParams, SurrogateTask, SurrogateTrainer, ToySgdTrainer, Trainer};

fn train<T: Trainer>(trainer: &T, state: &mut T::State, l: f64, from: usize, to: usize) -> Vec<EpochReport> {
    let schedule = LrSchedule::new(ScheduleKind::CosineRecurring, l).unwrap();
    let spe = trainer.steps_per_epoch(state);
    let mut out = vec![];
    for b in round_boundaries(3, 2, 27).unwrap() {
        let cycle = CyclePlan::for_round(&b, spe, 27).unwrap();
        for e in b.e_start..=b.e_end {
            if e <= from || e > to {
                continue;
            }
            let base = (e - b.e_start) * spe;
            out.push(trainer.train_epoch(state, &|j| schedule.lr_at(&cycle, base + j).unwrap()).unwrap());
        }
    }
    out
}

fn checkpoint_at_9_matches_straight_run<T: Trainer>(trainer: &T, config: &Config) {
    let l = config.get("l").unwrap();
    let mut straight = trainer.init(config, 42).unwrap();
    let uninterrupted = train(trainer, &mut straight, l, 0, 27);

    let mut first = trainer.init(config, 42).unwrap();
    let mut resumed = train(trainer, &mut first, l, 0, 9);
    let bytes = trainer.checkpoint(&first);
    drop(first);
    let mut restored = trainer.restore(&bytes).unwrap();
    assert_eq!(trainer.epochs_trained(&restored), 9);
    resumed.extend(train(trainer, &mut restored, l, 9, 27));

    assert_eq!(resumed, uninterrupted);
    assert_eq!(trainer.checkpoint(&restored), trainer.checkpoint(&straight));
}

#[test]
fn toy_sgd_checkpoint_resume_is_exact() {
    let config = Config::new([("l", 0.05), ("w", 1e-4), ("m", 0.1), ("b", 64.0)], "test");
    checkpoint_at_9_matches_straight_run(&ToySgdTrainer::new(7), &config);
}

#[test]
fn surrogate_checkpoint_resume_is_exact() {
    let trainer = SurrogateTrainer::new(SurrogateTask::draw(3, SurrogateParams::default()), 27).unwrap();
    let config = Config::new([("l", 0.02), ("w", 1e-4), ("m", 0.1), ("b", 64.0)], "test");
    checkpoint_at_9_matches_straight_run(&trainer, &config);
}

#[test]
fn corrupt_blobs_are_rejected() {
    let toy = ToySgdTrainer::new(7);
    let sur = SurrogateTrainer::new(SurrogateTask::draw(1, SurrogateParams::default()), 27).unwrap();
    let config = Config::new([("l", 0.05), ("w", 1e-4), ("m", 0.1), ("b", 64.0)], "test");
    assert!(toy.restore(&[]).is_err());
    assert!(sur.restore(&[]).is_err());

    let good = toy.checkpoint(&toy.init(&config, 1).unwrap());
    assert!(toy.restore(&good[..good.len() - 1]).is_err());
    let mut flipped = good.clone();
    flipped[20] ^= 0x40;
    assert!(toy.restore(&flipped).is_err());
    // A surrogate blob is not a toy SGD blob.
    assert!(toy.restore(&sur.checkpoint(&sur.init(&config, 1).unwrap())).is_err());
}

#[test]
fn toy_sgd_zero_lr_epoch_leaves_accuracy_unchanged() {
    let trainer = ToySgdTrainer::new(7);
    let config = Config::new([("l", 0.05), ("w", 1e-4), ("m", 0.1), ("b", 128.0)], "test");
    let mut state = trainer.init(&config, 5).unwrap();
    train(&trainer, &mut state, 0.05, 0, 3);
    let before = trainer.evaluate(&state);
    let report = trainer.train_epoch(&mut state, &|_| 0.0).unwrap();
    assert_eq!(report.val_metric, before);
}

#[test]
fn toy_sgd_divergence_reports_zero() {
    let trainer = ToySgdTrainer::new(7);
    let config = Config::new([("l", 10.0), ("w", 1.0), ("m", 1e-6), ("b", 16.0)], "test");
    let mut state = trainer.init(&config, 5).unwrap();
    let mut last = None;
    for _ in 0..5 {
        last = Some(trainer.train_epoch(&mut state, &|_| 1e3).unwrap());
    }
    assert_eq!(last.unwrap().val_metric, 0.0);
}
