// Temporary calibration harness; delete before finishing.
use rayon::prelude::*;
use voxmpc_core::scenario::{dense_cylinder_field, PlannerKind};
use voxmpc_core::sim::{compute_metrics, run_episode, EpisodeLog};

struct Row {
    seed: u64,
    planner: &'static str,
    outcome: String,
    time: f64,
    length: f64,
    energy: f64,
    speed_std: f64,
    near_ref: f64,
    min_dist: f64,
    wall: f64,
}

fn cruise_stats(log: &EpisodeLog<f64>, v_ref: f64) -> (f64, f64) {
    let t_end = log.samples.last().map(|s| s.t).unwrap_or(0.0);
    let window: Vec<f64> = log
        .samples
        .iter()
        .filter(|s| s.t >= 2.0 && s.t <= t_end - 2.0)
        .map(|s| s.state.v.norm())
        .collect();
    if window.is_empty() {
        return (0.0, 0.0);
    }
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let var = window.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let near = window.iter().filter(|v| (*v - v_ref).abs() <= 0.3).count() as f64 / n;
    (var.sqrt(), near)
}

fn main() {
    let rows: Vec<Row> = (1u64..=10)
        .flat_map(|seed| {
            [(PlannerKind::Mpc, "mpc"), (PlannerKind::Apf, "apf")]
                .into_iter()
                .map(move |(kind, name)| (seed, kind, name))
        })
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(seed, kind, name)| {
            let scenario = dense_cylinder_field(seed);
            let log = run_episode(&scenario, kind).expect("episode");
            let m = compute_metrics(&log);
            let (speed_std, near_ref) = cruise_stats(&log, scenario.reference.v_ref);
            let min_dist = log
                .samples
                .iter()
                .map(|s| s.min_dist)
                .fold(f64::INFINITY, f64::min);
            Row {
                seed,
                planner: name,
                outcome: format!("{:?}", log.outcome),
                time: m.motion_time,
                length: m.motion_length,
                energy: m.energy,
                speed_std,
                near_ref,
                min_dist,
                wall: log.wall_time,
            }
        })
        .collect();

    let mut rows = rows;
    rows.sort_by_key(|r| (r.seed, r.planner));
    println!(
        "{:>4} {:>4} {:>9} {:>7} {:>7} {:>9} {:>6} {:>6} {:>7} {:>6}",
        "seed", "plan", "outcome", "time", "len", "energy", "std", "near", "mind", "wall"
    );
    for r in &rows {
        println!(
            "{:>4} {:>4} {:>9} {:>7.1} {:>7.2} {:>9.3} {:>6.3} {:>6.2} {:>7.3} {:>6.1}",
            r.seed,
            r.planner,
            r.outcome,
            r.time,
            r.length,
            r.energy,
            r.speed_std,
            r.near_ref,
            r.min_dist,
            r.wall
        );
    }

    println!("\nper-seed criteria:");
    for seed in 1u64..=10 {
        let mpc = rows.iter().find(|r| r.seed == seed && r.planner == "mpc").unwrap();
        let apf = rows.iter().find(|r| r.seed == seed && r.planner == "apf").unwrap();
        let c_time = mpc.time < apf.time;
        let c_len = mpc.length < apf.length;
        let c_energy = mpc.energy < 0.5 * apf.energy;
        let c_std = apf.speed_std > mpc.speed_std;
        let c_near = mpc.near_ref >= 0.8;
        println!(
            "seed {:2}: time {} len {} energy {} (ratio {:.3}) std {} (mpc {:.3} apf {:.3}) near {} ({:.2})",
            seed,
            ok(c_time),
            ok(c_len),
            ok(c_energy),
            mpc.energy / apf.energy,
            ok(c_std),
            mpc.speed_std,
            apf.speed_std,
            ok(c_near),
            mpc.near_ref
        );
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "PASS"
    } else {
        "FAIL"
    }
}
