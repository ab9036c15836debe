use proptest::prelude::*;
use spacebatch_core::{ScenarioConfig, SweepAxis, SweepField};
use spacebatch_harness::{read_rows, run_experiment, write_rows, ExperimentSpec, Format, Mode, ResultRow, Source};

fn short_spec(mode: Mode) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(ScenarioConfig::default(), mode);
    spec.sweep = Some(SweepAxis { field: SweepField::NNodes, values: vec![6.0, 2.0, 4.0] });
    spec.seeds = vec![9, 8, 7];
    spec.sim_time_us = 10_000_000;
    spec.warmup_us = 1_000_000;
    spec
}

#[test]
fn rows_follow_sweep_then_source_then_replication() {
    let rows = run_experiment(&short_spec(Mode::Both)).unwrap();
    assert_eq!(rows.len(), 3 * 5);
    let order: Vec<(usize, Source, i64)> = rows.iter().map(|r| (r.n_nodes, r.source, r.replication)).collect();
    let mut expected = Vec::new();
    for n in [6, 2, 4] {
        expected.push((n, Source::Model, -1));
        expected.extend((0..3).map(|k| (n, Source::Sim, k)));
        expected.push((n, Source::SimMean, -1));
    }
    assert_eq!(order, expected);
    for r in rows.iter().filter(|r| r.source != Source::Model) {
        assert!(r.converged && r.iterations == 0);
    }
}

#[test]
fn repeated_runs_are_identical() {
    let a = run_experiment(&short_spec(Mode::Sim)).unwrap();
    let b = run_experiment(&short_spec(Mode::Sim)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sim_mean_is_the_mean_of_replications() {
    let rows = run_experiment(&short_spec(Mode::Sim)).unwrap();
    for chunk in rows.chunks(4) {
        let mean: f64 = chunk[..3].iter().map(|r| r.throughput_pkt_s).sum::<f64>() / 3.0;
        assert!((chunk[3].throughput_pkt_s - mean).abs() < 1e-12);
    }
}

fn any_row() -> impl Strategy<Value = ResultRow> {
    let source = prop_oneof![Just(Source::Model), Just(Source::Sim), Just(Source::SimMean)];
    (
        (1usize..50, 0.1f64..100.0, 1usize..9, 1usize..5, 1usize..5, -10.0f64..60.0),
        (source, -1i64..20, 0.0f64..1e3, 0.0f64..30.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0),
        (any::<bool>(), 0usize..10_000),
    )
        .prop_map(|((n, l, m, s0, s1, snr), (source, rep, thr, d, b, c, rho), (converged, iterations))| ResultRow {
            n_nodes: n,
            lambda_pkt_s: l,
            m_antennas: m,
            s_min: s0,
            s_max: s1,
            snr_db: snr,
            source,
            replication: rep,
            throughput_pkt_s: thr,
            delay_s: d,
            blocking_prob: b,
            collision_prob: c,
            rho,
            converged,
            iterations,
        })
}

proptest! {
    #[test]
    fn encodings_round_trip(rows in prop::collection::vec(any_row(), 1..20)) {
        for format in [Format::Csv, Format::Json] {
            let mut buf = Vec::new();
            write_rows(&rows, format, &mut buf).unwrap();
            prop_assert_eq!(&read_rows(format, buf.as_slice()).unwrap(), &rows);
        }
    }
}
