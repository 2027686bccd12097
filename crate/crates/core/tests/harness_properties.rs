use imbalance_rl::agents::Algorithm;
use imbalance_rl::env::{Action, BatteryConfig, BatteryEnv, FeatureNorm};
use imbalance_rl::harness::{
    dp_oracle, evaluate, evaluate_policy, train, ActionScript, IdlePolicy, RunConfig,
};
use imbalance_rl::market::{synthesize_prices, PriceSeries, WaveformSpec, MINUTES_PER_DAY};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noisy_days(days: u32) -> PriceSeries {
    let mut spec = WaveformSpec::square_wave(-50.0, 400.0, 90);
    spec.noise_amplitude = 120.0;
    spec.days = days;
    spec.seed = 11;
    synthesize_prices(&spec).unwrap()
}

fn random_script(days: usize, seed: u64) -> ActionScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actions = [Action::Discharge, Action::Idle, Action::Charge];
    ActionScript(
        (0..days)
            .map(|_| {
                (0..MINUTES_PER_DAY)
                    .map(|_| actions[rng.random_range(0..3)])
                    .collect()
            })
            .collect(),
    )
}

#[test]
fn step_rewards_add_up_to_reported_profit() {
    let series = noisy_days(3);
    let norm = FeatureNorm::fit(&series);
    for cycle_constraint in [false, true] {
        let battery = BatteryConfig {
            cycle_constraint,
            ..BatteryConfig::default()
        };
        let script = random_script(series.len(), 5);
        let report = evaluate_policy(&script, &series, &battery, &norm).unwrap();
        assert_eq!(report.days.len(), 3);
        assert_eq!(report.hours, 72);
        assert_eq!(report.hourly_histogram.total(), 72);
        for ((day, actions), row) in series.days().iter().zip(&script.0).zip(&report.days) {
            let mut env = BatteryEnv::reset(day, &battery, battery.initial_soc).unwrap();
            let mut total = 0.0;
            for &a in actions {
                total += env.step_action(a).unwrap().reward;
            }
            assert!(
                (total - row.profit).abs() <= 1e-9 * total.abs().max(1.0),
                "{total} vs {}",
                row.profit
            );
            let hourly: f64 = row.hourly_profit.iter().sum();
            assert!((hourly - row.profit).abs() <= 1e-9 * hourly.abs().max(1.0));
        }
        let mean = report.days.iter().map(|d| d.profit).sum::<f64>() / 3.0;
        assert!((mean - report.avg_daily_profit).abs() < 1e-9);
    }
}

#[test]
fn no_policy_beats_the_oracle_at_two_resolutions() {
    let series = noisy_days(2);
    let norm = FeatureNorm::fit(&series);
    let battery = BatteryConfig::default();
    let mut policies: Vec<ActionScript> = (0..4).map(|s| random_script(series.len(), s)).collect();
    // a simple threshold rule does much better than random and still must lose
    policies.push(ActionScript(
        series
            .days()
            .iter()
            .map(|d| {
                (0..MINUTES_PER_DAY)
                    .map(|m| match d.forecast(m) {
                        p if p < 50.0 => Action::Charge,
                        p if p > 250.0 => Action::Discharge,
                        _ => Action::Idle,
                    })
                    .collect()
            })
            .collect(),
    ));
    let coarse: Vec<f64> = series
        .days()
        .iter()
        .map(|d| dp_oracle(d, &battery, 201).unwrap().profit)
        .collect();
    let fine: Vec<f64> = series
        .days()
        .iter()
        .map(|d| dp_oracle(d, &battery, 801).unwrap().profit)
        .collect();
    for (c, f) in coarse.iter().zip(&fine) {
        // grid refinement moves the optimum by a small fraction only
        assert!((c - f).abs() <= 0.01 * f.abs(), "{c} vs {f}");
    }
    let idle = evaluate_policy(&IdlePolicy, &series, &battery, &norm).unwrap();
    for report in policies
        .iter()
        .map(|p| evaluate_policy(p, &series, &battery, &norm).unwrap())
        .chain([idle])
    {
        for (i, day) in report.days.iter().enumerate() {
            assert!(
                day.profit <= coarse[i] + 1e-6,
                "{} > {}",
                day.profit,
                coarse[i]
            );
            assert!(day.profit <= fine[i] + 1e-6, "{} > {}", day.profit, fine[i]);
        }
    }
}

#[test]
fn a_tighter_cycle_cap_never_pays_more() {
    let day = noisy_days(1).days()[0].clone();
    let mut last = f64::NEG_INFINITY;
    for n_max in [0.25, 0.5, 1.0, 4.0] {
        let battery = BatteryConfig {
            cycle_constraint: true,
            max_daily_cycles: n_max,
            ..BatteryConfig::default()
        };
        let sol = dp_oracle(&day, &battery, 201).unwrap();
        assert!(sol.cycles <= n_max + battery.cycle_delta() + 1e-12);
        assert!(
            sol.profit >= last - 1e-6,
            "{n_max}: {} < {last}",
            sol.profit
        );
        last = sol.profit;
    }
}

fn tiny(dir: &std::path::Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.agent.algorithm = Algorithm::Ddqn;
    c.agent.hidden = vec![8];
    c.agent.batch_size = 16;
    c.agent.buffer_capacity = 4096;
    c.agent.update_every = 32;
    c.data.synthetic = WaveformSpec::square_wave(0.0, 1000.0, 360);
    c.data.synthetic.noise_amplitude = 50.0;
    c.data.synthetic.days = 3;
    c.run.episodes = 3;
    c.run.eval_every = 1;
    c.run.seed = 21;
    c.run.out_dir = Some(dir.to_path_buf());
    c
}

#[test]
fn one_episode_is_one_day_of_steps() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path());
    c.run.episodes = 1;
    let out = train(&c).unwrap();
    assert_eq!(out.env_steps, MINUTES_PER_DAY as u64);
    assert_eq!(out.episodes.len(), 1);
}

#[test]
fn same_seed_same_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &std::path::Path| {
        let c = tiny(dir);
        let out = train(&c).unwrap();
        let report = evaluate(
            &out.bundle,
            out.data.test_days(),
            &c.battery,
            &out.data.norm,
        )
        .unwrap();
        report.to_text()
    };
    let (ra, rb) = (run(a.path()), run(b.path()));
    assert_eq!(ra, rb);
    for f in ["learning_curve.csv", "final.ckpt", "best.ckpt"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }

    let curve = std::fs::read_to_string(a.path().join("learning_curve.csv")).unwrap();
    let episodes: Vec<usize> = curve
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(episodes.len(), 3);
    assert!(episodes.windows(2).all(|w| w[0] < w[1]), "{episodes:?}");
}
