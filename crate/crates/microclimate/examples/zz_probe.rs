// scratch probe, not part of the repo
use microclimate::evaluation::{rolling_backtest, FoldSpec, DEFAULT_MAPE_EPSILON};
use microclimate::pipeline::{align_readings, DatasetParams};
use microclimate::presets;
use microclimate::synthgen::{generate, oracle_bounds};

fn main() {
    let t0 = std::time::Instant::now();
    for name in ["temperature-6h", "humidity-1h", "soil-moisture-6h"] {
        let preset = presets::by_name(name).unwrap();
        let gen = generate(&preset.scenario).unwrap();
        let bounds = oracle_bounds(&preset.scenario, &gen).unwrap();
        let params = DatasetParams::from_preset(&preset);
        let ds = align_readings(&gen.readings, &gen.forecasts, &params).unwrap();
        let t1 = std::time::Instant::now();
        let outcome = rolling_backtest(&preset.model, &ds, FoldSpec::default(), DEFAULT_MAPE_EPSILON).unwrap();
        let r = &outcome.report;
        println!("{name}: rows={} train_time={:?}", ds.rows.len(), t1.elapsed());
        println!("  ideal={:.3} model={:.3} station={:.3} persistence={:.3} ratio={:.3} acc={:.2}",
            bounds.ideal_model_mape, r.model.overall.mape, r.station.overall.mape,
            r.persistence.overall.mape,
            r.model.overall.mape / r.station.overall.mape, r.model.overall.accuracy);
        println!("  epochs: {:?}", outcome.bundles.iter().map(|b| b.train_summary.epochs_run).collect::<Vec<_>>());
    }
    println!("total {:?}", t0.elapsed());
}
