//! Writes the randomized cylinder-field benchmark scenarios as TOML files,
//! one MPC and one APF variant per seed, ready for `voxmpc batch`.
//!
//! Usage: `cargo run -p voxmpc-cli --example gen_scenarios -- <dir> [n_seeds]`

use voxmpc_core::scenario::dense_cylinder_field;
use voxmpc_core::PlannerKind;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = std::path::PathBuf::from(args.next().unwrap_or_else(|| "scenarios".into()));
    let seeds: u64 = args
        .next()
        .map(|raw| raw.parse().expect("n_seeds must be an integer"))
        .unwrap_or(10);

    std::fs::create_dir_all(&dir).expect("create output directory");
    for seed in 0..seeds {
        let mut scenario = dense_cylinder_field(seed);
        for planner in [PlannerKind::Mpc, PlannerKind::Apf] {
            scenario.planner = planner;
            let text = toml::to_string(&scenario).expect("scenario serializes");
            let path = dir.join(format!("field_{seed:02}_{planner}.toml"));
            std::fs::write(&path, text).expect("write scenario file");
            println!("wrote {}", path.display());
        }
    }
}
