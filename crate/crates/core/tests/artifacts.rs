//! CSV and SVG artifacts written by the harness.

use dpopt::harness::output::{
    read_rate_csv, read_sweep_csv, read_trajectory_csv, write_rate_csv, write_sweep_csv,
    write_trajectory_csv, RateRow,
};
use dpopt::harness::plot::{heatmap, line_chart, write_svg, Series};
use dpopt::harness::{
    self, ExperimentConfig, NoiseSpec, ObjectiveSpec, OptimizerKind, OptimizerSpec, Schedule,
    StepSize,
};

fn base(kind: OptimizerKind) -> ExperimentConfig {
    ExperimentConfig {
        objective: ObjectiveSpec::Quadratic {
            dim: 5,
            condition: 20.0,
        },
        noise: NoiseSpec::two_point(0.3),
        optimizer: OptimizerSpec {
            kind,
            param: 1.0,
            sigma: 0.5,
            step_size: StepSize::Fixed(0.02),
            batch_size: 4,
        },
        steps: 400,
        seed: 3,
        eval_every: Some(7),
        init: 1.0,
        schedule: Schedule::StepDecay {
            milestones: vec![200],
            factor: 0.5,
        },
        timing: false,
    }
}

#[test]
fn trajectory_csv_round_trip() {
    let t = harness::run(&base(OptimizerKind::Nsgd)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    write_trajectory_csv(&t, &p).unwrap();
    let back = read_trajectory_csv(&p).unwrap();
    assert_eq!(back, t.records);
    assert!(back
        .windows(2)
        .all(|w| w[1].min_grad_norm <= w[0].min_grad_norm));
    assert!(back.iter().all(|r| r.cum_seconds == 0.0));
}

#[test]
fn sweep_csv_round_trip_and_heatmap() {
    let lrs = [0.01, 0.05, 0.2];
    let params = [0.5, 2.0];
    let res = harness::sweep(&base(OptimizerKind::Sgd), &lrs, &params, &[0, 1]).unwrap();
    assert_eq!(res.mean.len(), lrs.len());
    assert!(res.mean.iter().all(|row| row.len() == params.len()));
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.csv");
    write_sweep_csv(&res, &p).unwrap();
    assert_eq!(read_sweep_csv(&p).unwrap(), res.cells);

    let rows: Vec<String> = lrs.iter().map(|v| v.to_string()).collect();
    let cols: Vec<String> = params.iter().map(|v| v.to_string()).collect();
    let svg = heatmap(&res.mean, &rows, &cols, "sweep", "learning rate", "clip c");
    let sp = dir.path().join("s.svg");
    write_svg(&svg, &sp).unwrap();
    let text = std::fs::read_to_string(&sp).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert_eq!(
        doc.descendants()
            .filter(|n| n.attribute("class") == Some("cell"))
            .count(),
        6
    );
    assert!(doc
        .descendants()
        .any(|n| n.attribute("class") == Some("x-label") && n.text() == Some("clip c")));
    assert!(doc
        .descendants()
        .any(|n| n.attribute("class") == Some("y-label") && n.text() == Some("learning rate")));
}

#[test]
fn rate_csv_round_trip() {
    let mut cfg = base(OptimizerKind::Sgd);
    cfg.schedule = Schedule::Constant;
    let rep = harness::rate_experiment(&cfg, &[50, 200, 800], &[1, 2]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.csv");
    write_rate_csv(&rep, &p).unwrap();
    let rows = read_rate_csv(&p).unwrap();
    let expected: Vec<RateRow> = rep
        .points
        .iter()
        .flat_map(|pt| {
            pt.per_seed.iter().enumerate().map(|(i, &m)| RateRow {
                steps: pt.steps,
                seed_index: i,
                min_grad_norm: m,
            })
        })
        .collect();
    assert_eq!(rows, expected);
}

#[test]
fn line_chart_handles_edge_series() {
    let series = vec![
        Series {
            name: "flat".into(),
            points: vec![(0.0, 2.0), (1.0, 2.0)],
        },
        Series {
            name: "with nan & zero".into(),
            points: vec![(0.0, f64::NAN), (1.0, 0.0), (2.0, 1e-8)],
        },
    ];
    for log_y in [false, true] {
        let svg = line_chart(&series, "edge <cases>", "step", "value", log_y);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(
            doc.descendants()
                .filter(|n| n.attribute("class") == Some("series"))
                .count(),
            2
        );
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
