use std::path::Path;

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| "scenarios/demo.toml".into());
    let scenario = qkdsim_core::Scenario::load(Path::new(&path)).expect("scenario");
    let t = std::time::Instant::now();
    let out = qkdsim_core::simulate_pass(&scenario, false).expect("simulation");
    println!("{}", serde_json::to_string_pretty(&out.report).unwrap());
    eprintln!("elapsed {:?}", t.elapsed());
}
