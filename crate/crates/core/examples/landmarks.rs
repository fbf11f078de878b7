//! Seed sweep of the reference ramp scenario: coolant saturation time, first
//! tank-temperature alarm and first feed-temperature chart alarm.
//!
//! cargo run --release -p proactive-safety --example landmarks -- [seeds]

use proactive_safety::config::ScenarioConfig;
use proactive_safety::monitor::{scan, setpoint_alarm, Severity};
use proactive_safety::scenario::{resolve_charts, run_samples};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seeds: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(50);
    println!("seed  saturation  tank_alarm  feed_alarm  feed_chart");
    for seed in 0..seeds {
        let cfg = ScenarioConfig {
            seed,
            ..ScenarioConfig::reference()
        };
        let samples = run_samples(&cfg)?;
        let last_free = samples
            .iter()
            .rposition(|s| s.coolant_temp > cfg.controller.u_min + 1e-9);
        let sat = match last_free {
            Some(i) if i + 1 < samples.len() => Some(samples[i + 1].time),
            Some(_) => None,
            None => Some(samples[0].time),
        };
        let tank = setpoint_alarm(&samples, &cfg.monitor.setpoints[0])?
            .into_iter()
            .find(|e| e.severity == Severity::Alarm)
            .map(|e| e.t);
        let charts = resolve_charts(&cfg)?;
        let feed = scan(&samples, &charts)?
            .into_iter()
            .find(|e| e.severity == Severity::Alarm);
        println!(
            "{seed:4}  {:>10}  {:>10}  {:>10}  {}",
            fmt(sat),
            fmt(tank),
            fmt(feed.as_ref().map(|e| e.t)),
            feed.map(|e| e.chart.as_str()).unwrap_or("-")
        );
    }
    Ok(())
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}
