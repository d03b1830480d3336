//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line to
//! stdout (uncaptured) and the test fails if any criterion fails.

use std::collections::{BTreeMap, HashSet};
use std::io::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use ndarray::{Array2, ArrayD, Axis, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use stkit_bench::config::{default_config, load_cli_config, load_config, Layer, CLI_WHITELIST};
use stkit_bench::runner::{cmd_run, RunRecord, METRICS_FILE, RECORD_FILE};
use stkit_bench::search::cmd_tune;
use stkit_bench::synthetic::{generate_synthetic, SyntheticKind};
use stkit_core::atomic::{
    parse_any, validate_dataset, write_any, AnyTable, AtomicDataset, Coord, DynaRecord, DynaType,
    ExtRecord, GeoType, GeoUnit, GridDims, GridDynaRecord, GridOdDynaRecord, Manifest,
    OdDynaRecord, Properties, RelType, RelationRecord, Scalar, Severity, Timestamp, UserUnit,
};
use stkit_core::baselines::{var_fit, var_predict};
use stkit_core::evaluate::{
    evaluate_forecast, ranking_metrics, regression_metrics, RegressionMetrics,
};
use stkit_core::mapmatch::{
    build_road_network, candidate_segments, candidate_segments_scan, segment_gap, viterbi_decode,
    MatchParams, RoadNetwork,
};
use stkit_core::pipeline::{make_windows, split_then_window, SplitSpec, WindowSpec};
use stkit_core::tensorize::{Layout, MaskTensor, STTensor, TimeAxis};
use stkit_core::Execution;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    }};
}

fn within(limit: Duration, started: Instant) -> Result<Duration, String> {
    let took = started.elapsed();
    ensure!(took < limit, "took {:.1?}, limit {:?}", took, limit);
    Ok(took)
}

// ---------------------------------------------------------------------------
// 1. atomic files

const ID_CHARS: &[u8] = b"abcXYZ019_ ,\"\n-";

fn rand_id(rng: &mut ChaCha8Rng, i: usize) -> String {
    let n = rng.random_range(0..5);
    let s: String = (0..n)
        .map(|_| ID_CHARS[rng.random_range(0..ID_CHARS.len())] as char)
        .collect();
    // the random prefix never contains '#', so the suffix keeps ids distinct
    format!("{s}#{i}")
}

fn rand_ref(rng: &mut ChaCha8Rng) -> String {
    (0..rng.random_range(1..5))
        .map(|_| (b'a' + rng.random_range(0..26)) as char)
        .collect()
}

fn rand_scalar(rng: &mut ChaCha8Rng) -> Scalar {
    match rng.random_range(0..4) {
        0 => loop {
            let v = f64::from_bits(rng.random());
            if v.is_finite() {
                break Scalar::Number(v);
            }
        },
        1 => Scalar::Number(rng.random_range(-1e6..1e6)),
        2 => Scalar::Number(rng.random_range(-1000i64..1000) as f64),
        _ => {
            let tail: String = (0..rng.random_range(0..8))
                .map(|_| b"ab ,\"\n;:Z9"[rng.random_range(0..10)] as char)
                .collect();
            Scalar::Text(format!("t{tail}"))
        }
    }
}

fn rand_props(rng: &mut ChaCha8Rng) -> Properties {
    (0..rng.random_range(0..4))
        .map(|i| (format!("p{i}"), rand_scalar(rng)))
        .collect()
}

fn rand_time(rng: &mut ChaCha8Rng) -> Timestamp {
    Utc.timestamp_opt(rng.random_range(946_684_800i64..1_893_456_000), 0)
        .unwrap()
}

fn rand_coord(rng: &mut ChaCha8Rng) -> Coord {
    Coord::new(
        rng.random_range(-180.0..=180.0),
        rng.random_range(-90.0..=90.0),
    )
}

/// One random table of kind `k` (0..9; dyna state and trajectory separately).
fn rand_table(rng: &mut ChaCha8Rng, k: usize) -> AnyTable {
    let n = rng.random_range(0..15);
    match k {
        0 => AnyTable::Geo(
            (0..n)
                .map(|i| {
                    let (geo_type, coordinates) = match rng.random_range(0..3) {
                        0 => (GeoType::Point, vec![rand_coord(rng)]),
                        1 => (
                            GeoType::LineString,
                            (0..rng.random_range(2..6))
                                .map(|_| rand_coord(rng))
                                .collect(),
                        ),
                        _ => {
                            let mut c: Vec<Coord> = (0..rng.random_range(3..6))
                                .map(|_| rand_coord(rng))
                                .collect();
                            c.push(c[0]);
                            (GeoType::Polygon, c)
                        }
                    };
                    GeoUnit {
                        geo_id: rand_id(rng, i),
                        geo_type,
                        coordinates,
                        properties: rand_props(rng),
                    }
                })
                .collect(),
        ),
        1 => AnyTable::Usr(
            (0..n)
                .map(|i| UserUnit {
                    usr_id: rand_id(rng, i),
                    properties: rand_props(rng),
                })
                .collect(),
        ),
        2 => AnyTable::Rel(
            (0..n)
                .map(|i| RelationRecord {
                    rel_id: rand_id(rng, i),
                    rel_type: [RelType::Geo, RelType::Usr, RelType::Usr2Geo]
                        [rng.random_range(0..3)],
                    origin_id: rand_ref(rng),
                    des_id: rand_ref(rng),
                    properties: rand_props(rng),
                })
                .collect(),
        ),
        3 | 4 => AnyTable::Dyna(
            (0..n)
                .map(|i| {
                    let trajectory = k == 4;
                    DynaRecord {
                        dyna_id: rand_id(rng, i),
                        dyna_type: if trajectory {
                            DynaType::Trajectory
                        } else {
                            DynaType::State
                        },
                        time: rand_time(rng),
                        entity_id: rand_ref(rng),
                        location: (trajectory && rng.random_bool(0.7)).then(|| rand_ref(rng)),
                        properties: rand_props(rng),
                    }
                })
                .collect(),
        ),
        5 => AnyTable::Grid(
            (0..n)
                .map(|i| GridDynaRecord {
                    dyna_id: rand_id(rng, i),
                    dyna_type: DynaType::State,
                    time: rand_time(rng),
                    row_id: rng.random_range(0..50),
                    col_id: rng.random_range(0..50),
                    properties: rand_props(rng),
                })
                .collect(),
        ),
        6 => AnyTable::Od(
            (0..n)
                .map(|i| OdDynaRecord {
                    dyna_id: rand_id(rng, i),
                    dyna_type: DynaType::State,
                    time: rand_time(rng),
                    origin_id: rand_ref(rng),
                    des_id: rand_ref(rng),
                    properties: rand_props(rng),
                })
                .collect(),
        ),
        7 => AnyTable::GridOd(
            (0..n)
                .map(|i| GridOdDynaRecord {
                    dyna_id: rand_id(rng, i),
                    dyna_type: DynaType::State,
                    time: rand_time(rng),
                    origin_row_id: rng.random_range(0..9),
                    origin_col_id: rng.random_range(0..9),
                    des_row_id: rng.random_range(0..9),
                    des_col_id: rng.random_range(0..9),
                    properties: rand_props(rng),
                })
                .collect(),
        ),
        _ => AnyTable::Ext(
            (0..n)
                .map(|i| ExtRecord {
                    ext_id: rand_id(rng, i),
                    time: rand_time(rng),
                    properties: rand_props(rng),
                })
                .collect(),
        ),
    }
}

const CLEAN_ROWS: usize = 16;

/// A dataset with every table populated and no validation findings. The
/// `.dyna` table holds `CLEAN_ROWS` state rows followed by as many
/// trajectory rows.
fn clean_dataset() -> AtomicDataset {
    let n = CLEAN_ROWS;
    let t0 = Utc.timestamp_opt(1_577_836_800, 0).unwrap();
    let at = |i: usize| t0 + chrono::Duration::seconds(300 * i as i64);
    let flow = |v: f64| -> Properties { [("flow", Scalar::Number(v))].into_iter().collect() };
    let mut ds = AtomicDataset::new(Manifest {
        name: "clean".into(),
        grid: Some(GridDims { rows: 4, cols: 4 }),
        interval_secs: Some(300),
        features: vec!["flow".into()],
        geo_order: None,
    });
    ds.geo = Some(
        (0..n)
            .map(|i| GeoUnit {
                geo_id: format!("g{i}"),
                geo_type: GeoType::Point,
                coordinates: vec![Coord::new(116.0 + i as f64 * 0.01, 40.0)],
                properties: Properties::new(),
            })
            .collect(),
    );
    ds.usr = Some(
        (0..n)
            .map(|i| UserUnit {
                usr_id: format!("u{i}"),
                properties: Properties::new(),
            })
            .collect(),
    );
    ds.rel = Some(
        (0..n)
            .map(|i| RelationRecord {
                rel_id: format!("r{i}"),
                rel_type: RelType::Geo,
                origin_id: format!("g{i}"),
                des_id: format!("g{}", (i + 1) % n),
                properties: Properties::new(),
            })
            .collect(),
    );
    let mut dyna: Vec<DynaRecord> = (0..n)
        .map(|i| DynaRecord {
            dyna_id: format!("s{i}"),
            dyna_type: DynaType::State,
            time: t0,
            entity_id: format!("g{i}"),
            location: None,
            properties: flow(i as f64),
        })
        .collect();
    dyna.extend((0..n).map(|i| DynaRecord {
        dyna_id: format!("t{i}"),
        dyna_type: DynaType::Trajectory,
        time: at(i),
        entity_id: "u0".into(),
        location: Some(format!("g{i}")),
        properties: Properties::new(),
    }));
    ds.dyna = Some(dyna);
    ds.grid = Some(
        (0..n)
            .map(|i| GridDynaRecord {
                dyna_id: format!("c{i}"),
                dyna_type: DynaType::State,
                time: at(i),
                row_id: (i % 4) as u32,
                col_id: (i / 4 % 4) as u32,
                properties: flow(1.0),
            })
            .collect(),
    );
    ds.od = Some(
        (0..n)
            .map(|i| OdDynaRecord {
                dyna_id: format!("o{i}"),
                dyna_type: DynaType::State,
                time: t0,
                origin_id: format!("g{i}"),
                des_id: format!("g{}", (i + 3) % n),
                properties: flow(2.0),
            })
            .collect(),
    );
    ds.gridod = Some(
        (0..n)
            .map(|i| GridOdDynaRecord {
                dyna_id: format!("x{i}"),
                dyna_type: DynaType::State,
                time: at(i),
                origin_row_id: (i % 4) as u32,
                origin_col_id: 0,
                des_row_id: 3,
                des_col_id: (i % 4) as u32,
                properties: flow(3.0),
            })
            .collect(),
    );
    ds.ext = Some(
        (0..n)
            .map(|i| ExtRecord {
                ext_id: format!("e{i}"),
                time: at(i),
                properties: [("temp", Scalar::Number(20.0))].into_iter().collect(),
            })
            .collect(),
    );
    ds
}

const FAULT_KINDS: usize = 9;

/// Inject fault `kind` at 1-based `row` (>= 2) and return where it must be
/// reported.
fn inject(ds: &mut AtomicDataset, kind: usize, row: usize) -> (String, usize) {
    let r = row - 1;
    let n = CLEAN_ROWS;
    match kind {
        0 => {
            ds.rel.as_mut().unwrap()[r].origin_id = "nowhere".into();
            (".rel".into(), row)
        }
        1 => {
            ds.dyna.as_mut().unwrap()[r].entity_id = "ghost".into();
            (".dyna".into(), row)
        }
        2 => {
            ds.dyna.as_mut().unwrap()[n + r].location = Some("lost".into());
            (".dyna".into(), n + row)
        }
        3 => {
            ds.grid.as_mut().unwrap()[r].col_id = 9;
            (".grid".into(), row)
        }
        4 => {
            ds.od.as_mut().unwrap()[r].des_id = "missing".into();
            (".od".into(), row)
        }
        5 => {
            ds.geo.as_mut().unwrap()[r].coordinates[0].lat = 95.0;
            (".geo".into(), row)
        }
        6 => {
            ds.gridod.as_mut().unwrap()[r].des_row_id = 4;
            (".gridod".into(), row)
        }
        7 => {
            let ext = ds.ext.as_mut().unwrap();
            // external rows are keyed by id and time together
            ext[r].ext_id = ext[r - 1].ext_id.clone();
            ext[r].time = ext[r - 1].time;
            (".ext".into(), row)
        }
        _ => {
            let grid = ds.grid.as_mut().unwrap();
            grid[r].dyna_id = grid[r - 1].dyna_id.clone();
            (".grid".into(), row)
        }
    }
}

fn criterion_1() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut rows = 0;
    for i in 0..1000 {
        let table = rand_table(&mut rng, i % 9);
        rows += table.len();
        let mut buf = Vec::new();
        write_any(&table, &mut buf).map_err(|e| format!("table {i}: write failed: {e}"))?;
        let back = parse_any(table.kind(), buf.as_slice())
            .map_err(|e| format!("table {i}: parse failed: {e}"))?;
        ensure!(
            back == table,
            "table {i} ({}) did not round-trip",
            table.kind()
        );
    }

    let base = clean_dataset();
    let clean = validate_dataset(&base);
    ensure!(
        clean.findings.is_empty(),
        "clean dataset has findings: {:?}",
        clean.findings
    );
    let (mut injected, mut detected, mut false_pos) = (0usize, 0usize, 0usize);
    for trial in 0..500 {
        let k = rng.random_range(1..=12);
        let mut faults = HashSet::new();
        while faults.len() < k {
            faults.insert((
                rng.random_range(0..FAULT_KINDS),
                rng.random_range(2..=CLEAN_ROWS),
            ));
        }
        // ascending rows, so a copied id is final when it is copied
        let mut faults: Vec<(usize, usize)> = faults.into_iter().collect();
        faults.sort_by_key(|&(f, r)| (r, f));
        let mut ds = base.clone();
        let mut expected: Vec<(String, usize)> = faults
            .iter()
            .map(|(f, r)| inject(&mut ds, *f, *r))
            .collect();
        expected.sort();
        let mut got: Vec<(String, usize)> = validate_dataset(&ds)
            .findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
            .map(|f| (f.table.clone(), f.row.unwrap_or(0)))
            .collect();
        got.sort();
        injected += expected.len();
        let mut remaining = got.clone();
        for e in &expected {
            if let Some(pos) = remaining.iter().position(|g| g == e) {
                remaining.remove(pos);
                detected += 1;
            }
        }
        false_pos += remaining.len();
        ensure!(
            got == expected,
            "trial {trial}: expected {expected:?}, got {got:?}"
        );
    }
    let took = within(Duration::from_secs(30), started)?;
    Ok(format!(
        "1000 tables / {rows} rows round-trip; {detected}/{injected} faults found, {false_pos} false positives in 500 trials ({took:.1?})"
    ))
}

// ---------------------------------------------------------------------------
// 2-4. metrics

fn naive_metrics(y: &[f64], yhat: &[f64], mask: &[bool], floor: f64) -> RegressionMetrics {
    let mut n = 0usize;
    let (mut abs, mut sq, mut ys, mut es) = (0.0, 0.0, 0.0, 0.0);
    let (mut n_mape, mut ape) = (0usize, 0.0);
    for i in 0..y.len() {
        if !mask[i] {
            continue;
        }
        let e = y[i] - yhat[i];
        n += 1;
        abs += e.abs();
        sq += e * e;
        ys += y[i];
        es += e;
        if y[i] != 0.0 && y[i].abs() >= floor {
            n_mape += 1;
            ape += (e / y[i]).abs();
        }
    }
    let nf = n as f64;
    let (ym, em) = (ys / nf, es / nf);
    let (mut tot, mut edev) = (0.0, 0.0);
    for i in 0..y.len() {
        if mask[i] {
            tot += (y[i] - ym) * (y[i] - ym);
            let d = (y[i] - yhat[i]) - em;
            edev += d * d;
        }
    }
    let mse = sq / nf;
    RegressionMetrics {
        mae: abs / nf,
        mse,
        rmse: mse.sqrt(),
        mape: if n_mape == 0 {
            f64::NAN
        } else {
            ape / n_mape as f64 * 100.0
        },
        r2: if tot == 0.0 { f64::NAN } else { 1.0 - sq / tot },
        evar: if tot == 0.0 {
            f64::NAN
        } else {
            1.0 - edev / tot
        },
        n_effective: n,
        n_mape,
        zero_variance: tot == 0.0,
    }
}

/// Relative difference; R2 and EVAR (one minus a ratio) use a unit floor.
fn rel_diff(a: f64, b: f64, unit_floor: bool) -> f64 {
    if a.is_nan() && b.is_nan() {
        return 0.0;
    }
    let scale = a.abs().max(b.abs());
    let scale = if unit_floor { scale.max(1.0) } else { scale };
    if a == b {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn random_draw(rng: &mut ChaCha8Rng, len: usize) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let mut y = Vec::with_capacity(len);
    let mut p = Vec::with_capacity(len);
    let mut m = Vec::with_capacity(len);
    for _ in 0..len {
        let t = match rng.random_range(0..4) {
            0 => 0.0,
            1 => rng.random_range(0.0..5.0),
            _ => rng.random_range(-200.0..200.0),
        };
        y.push(t);
        p.push(t + rng.random_range(-20.0..20.0));
        m.push(rng.random_bool(0.8));
    }
    m[0] = true;
    (y, p, m)
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for draw in 0..500 {
        let len = rng.random_range(1..600);
        let (y, p, m) = random_draw(&mut rng, len);
        for floor in [0.0, 5.0] {
            let got = regression_metrics(&y, &p, &m, floor).map_err(|e| e.to_string())?;
            let want = naive_metrics(&y, &p, &m, floor);
            ensure!(
                got.n_effective == want.n_effective && got.n_mape == want.n_mape,
                "draw {draw}: counts differ"
            );
            for (name, a, b, unit) in [
                ("MAE", got.mae, want.mae, false),
                ("MSE", got.mse, want.mse, false),
                ("RMSE", got.rmse, want.rmse, false),
                ("MAPE", got.mape, want.mape, false),
                ("R2", got.r2, want.r2, true),
                ("EVAR", got.evar, want.evar, true),
            ] {
                let d = rel_diff(a, b, unit);
                worst = worst.max(d);
                ensure!(d <= 1e-12, "draw {draw}: {name} {a} vs naive {b}");
            }
        }
    }

    let mut checked = 0;
    for case in 0..100 {
        let t_out = rng.random_range(1..=12);
        let n = rng.random_range(1..20);
        let (y, p, mut m) = random_draw(&mut rng, t_out * n);
        for h in 0..t_out {
            m[h * n] = true;
        }
        let shape = IxDyn(&[t_out, n]);
        let truth = ArrayD::from_shape_vec(shape.clone(), y).unwrap();
        let pred = ArrayD::from_shape_vec(shape.clone(), p).unwrap();
        let mask = ArrayD::from_shape_vec(shape, m).unwrap();
        let horizons: Vec<usize> = (1..=t_out).collect();
        let report = evaluate_forecast(pred.view(), truth.view(), mask.view(), &horizons, 5.0)
            .map_err(|e| e.to_string())?;
        for h in horizons {
            let slice = |a: &ArrayD<f64>| {
                a.index_axis(Axis(0), h - 1)
                    .iter()
                    .copied()
                    .collect::<Vec<_>>()
            };
            let ms: Vec<bool> = mask.index_axis(Axis(0), h - 1).iter().copied().collect();
            let single = regression_metrics(&slice(&truth), &slice(&pred), &ms, 5.0)
                .map_err(|e| e.to_string())?;
            let a = serde_json::to_string(&report.horizons[&h]).unwrap();
            let b = serde_json::to_string(&single).unwrap();
            ensure!(a == b, "case {case} horizon {h}: {a} vs {b}");
            checked += 1;
        }
    }
    Ok(format!(
        "500 draws x 2 floors, worst relative gap {worst:.1e}; {checked} per-horizon slices identical"
    ))
}

fn criterion_3() -> Check {
    let list: Vec<Vec<u32>> = vec![vec![7, 1, 2, 3, 4]];
    let r1 = ranking_metrics(&[7u32], &list, 5).map_err(|e| e.to_string())?;
    ensure!(
        r1.mrr_at_k == 1.0 && r1.ndcg_at_k == 1.0,
        "rank 1: MRR {} NDCG {}",
        r1.mrr_at_k,
        r1.ndcg_at_k
    );
    let r2 = ranking_metrics(&[1u32], &list, 5).map_err(|e| e.to_string())?;
    let ndcg2 = 1.0 / 3f64.log2();
    ensure!(
        (r2.mrr_at_k - 0.5).abs() <= 1e-12,
        "rank 2: MRR {}",
        r2.mrr_at_k
    );
    ensure!(
        (r2.ndcg_at_k - ndcg2).abs() <= 1e-12,
        "rank 2: NDCG {} vs {ndcg2}",
        r2.ndcg_at_k
    );

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut strict = 0;
    for case in 0..10_000 {
        let k = rng.random_range(2..=20);
        let len = rng.random_range(2..=30);
        let rank = rng.random_range(2..=len);
        let mut items: Vec<u32> = (0..len as u32).collect();
        for i in (1..items.len()).rev() {
            items.swap(i, rng.random_range(0..=i));
        }
        let truth = items[rank - 1];
        let m = ranking_metrics(&[truth], std::slice::from_ref(&items), k)
            .map_err(|e| e.to_string())?;
        ensure!(
            m.ndcg_at_k >= m.mrr_at_k,
            "case {case}: NDCG {} < MRR {}",
            m.ndcg_at_k,
            m.mrr_at_k
        );
        if rank <= k {
            let (rr, dcg) = (1.0 / rank as f64, 1.0 / ((rank + 1) as f64).log2());
            ensure!(
                (m.mrr_at_k - rr).abs() <= 1e-12 && (m.ndcg_at_k - dcg).abs() <= 1e-12,
                "case {case}: wrong values"
            );
            strict += usize::from(m.ndcg_at_k > m.mrr_at_k);
        }
    }
    Ok(format!(
        "hand cases exact (NDCG@5 rank 2 = {:.15}); NDCG >= MRR on 10000 cases ({strict} hits strictly greater)",
        r2.ndcg_at_k
    ))
}

fn criterion_4() -> Check {
    let floor = 5.0;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut changed = 0usize;
    for trial in 0..500 {
        let len = rng.random_range(1..400);
        let (y, p, m) = random_draw(&mut rng, len);
        let base = regression_metrics(&y, &p, &m, floor).map_err(|e| e.to_string())?;
        for _ in 0..4 {
            let (mut y2, mut p2) = (y.clone(), p.clone());
            for i in 0..len {
                if y[i].abs() < floor {
                    y2[i] = match rng.random_range(0..3) {
                        0 => 0.0,
                        1 => rng.random_range(-floor..floor) * (1.0 - 1e-12),
                        _ => -y[i],
                    };
                    p2[i] = rng.random_range(-1e6..1e6);
                    changed += 1;
                }
            }
            let again = regression_metrics(&y2, &p2, &m, floor).map_err(|e| e.to_string())?;
            let same = base.mape.to_bits() == again.mape.to_bits()
                || (base.mape.is_nan() && again.mape.is_nan());
            ensure!(
                same && base.n_mape == again.n_mape,
                "trial {trial}: MAPE {} became {}",
                base.mape,
                again.mape
            );
        }
    }
    Ok(format!(
        "MAPE bit-identical after {changed} sub-floor cell rewrites across 2000 variants"
    ))
}

// ---------------------------------------------------------------------------
// 5. windows and splits

fn slot_tensor(t: usize, n: usize) -> (STTensor, MaskTensor) {
    let values: Vec<f64> = (0..t).flat_map(|s| (0..n).map(move |_| s as f64)).collect();
    let tensor = STTensor {
        layout: Layout::Graph { nodes: n },
        axis: TimeAxis {
            start: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
            interval_secs: 300,
            len: t,
        },
        features: vec!["slot".into()],
        geo_order: (0..n).map(|i| format!("n{i}")).collect(),
        values: ArrayD::from_shape_vec(IxDyn(&[t, n, 1]), values).unwrap(),
    };
    let mask = MaskTensor(ArrayD::from_elem(IxDyn(&[t, n, 1]), true));
    (tensor, mask)
}

fn criterion_5() -> Check {
    let (tensor, mask) = slot_tensor(100, 3);
    let samples = make_windows(
        &tensor,
        &mask,
        WindowSpec {
            t_in: 12,
            t_out: 12,
        },
    )
    .map_err(|e| e.to_string())?;
    ensure!(samples.len() == 77, "{} samples from T=100", samples.len());
    let sizes = SplitSpec {
        train: 7.0,
        val: 1.0,
        test: 2.0,
    }
    .sizes(100)
    .map_err(|e| e.to_string())?;
    ensure!(sizes == [70, 10, 20], "7:1:2 of 100 gave {sizes:?}");

    let mut audited = 0usize;
    for t in [150usize, 288, 1000, 2016] {
        let (tensor, mask) = slot_tensor(t, 2);
        let window = WindowSpec { t_in: 6, t_out: 6 };
        let split = SplitSpec::default();
        let sw = split_then_window(&tensor, &mask, &split, window, Execution::Parallel)
            .map_err(|e| e.to_string())?;
        let slots = |s: &[stkit_core::pipeline::Sample]| -> Vec<usize> {
            s.iter()
                .flat_map(|w| {
                    w.x.iter()
                        .chain(w.y.iter())
                        .map(|v| *v as usize)
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        let train: HashSet<usize> = slots(&sw.train).into_iter().collect();
        let val: HashSet<usize> = slots(&sw.val).into_iter().collect();
        let test: HashSet<usize> = slots(&sw.test).into_iter().collect();
        audited += train.len() + val.len() + test.len();
        ensure!(
            train.iter().all(|s| sw.slots[0].contains(s)),
            "T={t}: train reads outside its segment"
        );
        ensure!(
            val.iter().all(|s| sw.slots[1].contains(s)),
            "T={t}: validation reads outside its segment"
        );
        ensure!(
            test.iter().all(|s| sw.slots[2].contains(s)),
            "T={t}: test reads outside its segment"
        );
        ensure!(
            train.is_disjoint(&test) && train.is_disjoint(&val),
            "T={t}: train shares slots"
        );
        ensure!(
            val.is_disjoint(&test),
            "T={t}: validation shares slots with test"
        );
    }
    Ok(format!(
        "77 windows, 70/10/20 split, {audited} distinct slots audited with no leakage"
    ))
}

// ---------------------------------------------------------------------------
// 6. VAR

fn gauss_jordan_inverse(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = Array2::<f64>::eye(n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|x, y| m[[*x, col]].abs().total_cmp(&m[[*y, col]].abs()))
            .unwrap();
        for c in 0..n {
            m.swap([col, c], [pivot, c]);
            inv.swap([col, c], [pivot, c]);
        }
        let d = m[[col, col]];
        for c in 0..n {
            m[[col, c]] /= d;
            inv[[col, c]] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[[r, col]];
                for c in 0..n {
                    m[[r, c]] -= f * m[[col, c]];
                    inv[[r, c]] -= f * inv[[col, c]];
                }
            }
        }
    }
    inv
}

/// Lag matrices `P D_l P^-1` where each decoupled mode is an AR(`p`)
/// oscillation with modulus close to one, so the noiseless path keeps
/// exciting every direction.
fn stable_var(rng: &mut ChaCha8Rng, k: usize, p: usize) -> Vec<Array2<f64>> {
    let mut pm = Array2::<f64>::eye(k);
    for v in pm.iter_mut() {
        *v += rng.random_range(-0.3..0.3);
    }
    let pinv = gauss_jordan_inverse(&pm);
    let mut diag = vec![Array2::<f64>::zeros((k, k)); p];
    for i in 0..k {
        let r = rng.random_range(0.97..0.995);
        if p == 1 {
            diag[0][[i, i]] = r * if i % 2 == 0 { 1.0 } else { -1.0 };
        } else {
            let theta = 0.3 + 2.4 * (i as f64 + rng.random::<f64>() * 0.5) / k as f64;
            diag[0][[i, i]] = 2.0 * r * theta.cos();
            diag[1][[i, i]] = -r * r;
        }
    }
    diag.iter().map(|d| pm.dot(d).dot(&pinv)).collect()
}

fn simulate(a: &[Array2<f64>], c: &[f64], init: &[Vec<f64>], len: usize) -> Array2<f64> {
    let k = c.len();
    let mut rows: Vec<Vec<f64>> = init.to_vec();
    while rows.len() < len {
        let mut next = c.to_vec();
        for (l, al) in a.iter().enumerate() {
            let prev = &rows[rows.len() - 1 - l];
            for j in 0..k {
                for i in 0..k {
                    next[j] += al[[j, i]] * prev[i];
                }
            }
        }
        rows.push(next);
    }
    Array2::from_shape_vec((len, k), rows.concat()).unwrap()
}

fn criterion_6() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_coef, mut worst_roll, mut fits) = (0.0f64, 0.0f64, 0);
    for p in [1usize, 2] {
        for k in 1..=4 {
            for _ in 0..5 {
                let a = stable_var(&mut rng, k, p);
                let c: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
                let init: Vec<Vec<f64>> = (0..p)
                    .map(|_| (0..k).map(|_| rng.random_range(-5.0..5.0)).collect())
                    .collect();
                let len = 200;
                let x = simulate(&a, &c, &init, len);
                let values = x
                    .clone()
                    .into_shape_with_order(IxDyn(&[len, k, 1]))
                    .unwrap();
                let mask = ArrayD::from_elem(IxDyn(&[len, k, 1]), true);
                let model =
                    var_fit(values.view(), mask.view(), p, 400).map_err(|e| e.to_string())?;
                fits += 1;
                for j in 0..k {
                    worst_coef = worst_coef.max((model.intercept[j] - c[j]).abs());
                    for (fitted, truth) in model.coefs.iter().zip(&a) {
                        for i in 0..k {
                            worst_coef = worst_coef.max((fitted[[j, i]] - truth[[j, i]]).abs());
                        }
                    }
                }

                // closed form: stacked state s_{h} = C^h s_0 + sum_{j<h} C^j d
                let dim = k * p;
                let mut comp = Array2::<f64>::zeros((dim, dim));
                for l in 0..p {
                    comp.slice_mut(ndarray::s![0..k, l * k..(l + 1) * k])
                        .assign(&model.coefs[l]);
                }
                for i in k..dim {
                    comp[[i, i - k]] = 1.0;
                }
                let mut d = ndarray::Array1::<f64>::zeros(dim);
                d.slice_mut(ndarray::s![0..k]).assign(&model.intercept);
                let history = x.slice(ndarray::s![len - p.., ..]);
                let mut s0 = ndarray::Array1::<f64>::zeros(dim);
                for l in 0..p {
                    s0.slice_mut(ndarray::s![l * k..(l + 1) * k])
                        .assign(&history.row(p - 1 - l));
                }
                let t_out = 12;
                let out = var_predict(&model, history, t_out);
                let mut power = Array2::<f64>::eye(dim);
                let mut acc = ndarray::Array1::<f64>::zeros(dim);
                for h in 0..t_out {
                    acc = &acc + &power.dot(&d);
                    power = comp.dot(&power);
                    let state = power.dot(&s0) + &acc;
                    for j in 0..k {
                        let gap = (out[[h, j]] - state[j]).abs() / state[j].abs().max(1.0);
                        worst_roll = worst_roll.max(gap);
                    }
                }
            }
        }
    }
    ensure!(worst_coef <= 1e-6, "coefficient error {worst_coef:.2e}");
    ensure!(
        worst_roll <= 1e-9,
        "rollout deviates from closed form by {worst_roll:.2e}"
    );
    let took = within(Duration::from_secs(10), started)?;
    Ok(format!(
        "{fits} noiseless fits, worst coefficient error {worst_coef:.1e}, worst rollout gap {worst_roll:.1e} ({took:.1?})"
    ))
}

// ---------------------------------------------------------------------------
// 7, 9. runs through the harness

fn run(
    task: &str,
    model: &str,
    dataset: &Path,
    out: &Path,
    run_id: &str,
) -> Result<RunRecord, String> {
    let pairs = vec![
        ("task".to_string(), task.to_string()),
        ("model".to_string(), model.to_string()),
        ("dataset".to_string(), dataset.display().to_string()),
        ("output_dir".to_string(), out.display().to_string()),
        ("seed".to_string(), "7".to_string()),
    ];
    let mut cfg =
        load_config(&pairs, None, &default_config(Some(task))).map_err(|e| e.to_string())?;
    cfg.set("run_id", json!(run_id), Layer::UserFile);
    cmd_run(&cfg).map_err(|e| e.to_string())
}

fn criterion_7(tmp: &Path) -> Check {
    let data = tmp.join("periodic");
    generate_synthetic(SyntheticKind::GraphFlow, &json!({"nodes": 6}), 7)
        .and_then(|g| g.save(&data))
        .map_err(|e| e.to_string())?;
    let rec = run("traffic_state_pred", "HA", &data, &tmp.join("runs7"), "ha")?;
    let mut parts = Vec::new();
    for h in [3, 6, 12] {
        let mae = rec
            .metric(&format!("test.horizons.{h}.mae"))
            .ok_or(format!("no MAE at horizon {h}"))?;
        ensure!(mae == 0.0, "horizon {h}: MAE {mae}");
        parts.push(format!("h{h}={mae}"));
    }
    Ok(format!("HA MAE {} on periodic data", parts.join(" ")))
}

fn criterion_9(tmp: &Path) -> Check {
    let data = tmp.join("var_flow");
    generate_synthetic(
        SyntheticKind::GraphFlow,
        &json!({"nodes": 5, "dynamics": {"type": "var"}, "missing_rate": 0.05}),
        9,
    )
    .and_then(|g| g.save(&data))
    .map_err(|e| e.to_string())?;
    let out = tmp.join("runs9");
    let mut metric_files = Vec::new();
    for (model, task) in [("VAR", "traffic_state_pred"), ("HA", "traffic_state_pred")] {
        let a = run(task, model, &data, &out, &format!("{model}_a"))?;
        let b = run(task, model, &data, &out, &format!("{model}_b"))?;
        let fa = std::fs::read(a.dir.join(METRICS_FILE)).map_err(|e| e.to_string())?;
        let fb = std::fs::read(b.dir.join(METRICS_FILE)).map_err(|e| e.to_string())?;
        ensure!(
            fa == fb,
            "{model}: metrics.json differs between identical runs"
        );
        metric_files.push(fa.len());
    }

    let space = tmp.join("space.json");
    std::fs::write(
        &space,
        r#"{"var_order": [1, 2], "scaler": ["none", "zscore", "minmax"]}"#,
    )
    .map_err(|e| e.to_string())?;
    let args: Vec<String> = [
        "--task",
        "traffic_state_pred",
        "--model",
        "VAR",
        "--dataset",
        data.to_str().unwrap(),
        "--output_dir",
        out.to_str().unwrap(),
        "--space_file",
        space.to_str().unwrap(),
        "--search_alg",
        "GridSearch",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut cfg = load_cli_config(&args, None).map_err(|e| e.to_string())?;
    cfg.set("run_id", json!("grid"), Layer::UserFile);
    let outcome = cmd_tune(&cfg).map_err(|e| e.to_string())?;
    ensure!(outcome.trials.len() == 6, "{} trials", outcome.trials.len());
    let distinct: HashSet<String> = outcome
        .trials
        .iter()
        .map(|t| serde_json::to_string(&t.params).unwrap())
        .collect();
    ensure!(distinct.len() == 6, "duplicate trial parameters");

    // rescan the persisted trial records
    let mut best: Option<(String, f64)> = None;
    for i in 0..6 {
        let path = out.join(format!("grid_trial{i:03}")).join(RECORD_FILE);
        let text =
            std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let rec: RunRecord = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        let v = rec
            .metric("validation.mae")
            .ok_or("trial lacks validation.mae")?;
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((rec.run_id.clone(), v));
        }
    }
    let (oracle_id, oracle_v) = best.ok_or("no trials on disk")?;
    let chosen = outcome.best_trial().ok_or("search chose no trial")?;
    ensure!(
        chosen.run_id.as_deref() == Some(oracle_id.as_str()) && chosen.objective == Some(oracle_v),
        "search picked {:?} = {:?}, rescan found {oracle_id} = {oracle_v}",
        chosen.run_id,
        chosen.objective
    );
    Ok(format!(
        "identical metrics.json for VAR and HA reruns; grid ran 6 trials, best {oracle_id} (validation MAE {oracle_v:.6}) matches rescan"
    ))
}

// ---------------------------------------------------------------------------
// 8. map matching

fn path_score(em: &[Vec<f64>], tr: &[Vec<Vec<f64>>], path: &[usize]) -> f64 {
    let mut s = em[0][path[0]];
    for i in 1..path.len() {
        s = (s + tr[i - 1][path[i - 1]][path[i]]) + em[i][path[i]];
    }
    s
}

fn exhaustive(em: &[Vec<f64>], tr: &[Vec<Vec<f64>>]) -> (f64, Vec<Vec<usize>>) {
    let mut best = f64::NEG_INFINITY;
    let mut winners = Vec::new();
    let mut path = vec![0usize; em.len()];
    loop {
        let s = path_score(em, tr, &path);
        if s > best {
            best = s;
            winners = vec![path.clone()];
        } else if s == best && s > f64::NEG_INFINITY {
            winners.push(path.clone());
        }
        let mut i = em.len();
        loop {
            if i == 0 {
                return (best, winners);
            }
            i -= 1;
            path[i] += 1;
            if path[i] < em[i].len() {
                break;
            }
            path[i] = 0;
        }
    }
}

fn floyd_warshall_gap(net: &RoadNetwork) -> Vec<Vec<Option<f64>>> {
    let n = net.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (u, row) in d.iter_mut().enumerate() {
        row[u] = 0.0;
        for &v in &net.out_edges[u] {
            row[v] = row[v].min(net.segments[u].length());
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    (0..n)
        .map(|from| {
            (0..n)
                .map(|to| {
                    let best = net.out_edges[from]
                        .iter()
                        .map(|&v| d[v][to])
                        .fold(f64::INFINITY, f64::min);
                    best.is_finite().then_some(best)
                })
                .collect()
        })
        .collect()
}

fn line(id: usize, coords: Vec<Coord>) -> GeoUnit {
    GeoUnit {
        geo_id: format!("s{id}"),
        geo_type: GeoType::LineString,
        coordinates: coords,
        properties: Properties::new(),
    }
}

fn pooled(rec: &RunRecord) -> Result<(f64, f64, f64), String> {
    let get = |k: &str| {
        rec.metric(&format!("pooled.{k}"))
            .ok_or(format!("no pooled {k}"))
    };
    Ok((get("rmf")?, get("an")?, get("al")?))
}

fn criterion_8(tmp: &Path) -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    // (a)
    for inst in 0..200 {
        let sizes: Vec<usize> = (0..rng.random_range(1..=6))
            .map(|_| rng.random_range(1..=4))
            .collect();
        let em: Vec<Vec<f64>> = sizes
            .iter()
            .map(|&n| (0..n).map(|_| rng.random_range(-50.0..0.0)).collect())
            .collect();
        let tr: Vec<Vec<Vec<f64>>> = sizes
            .windows(2)
            .map(|w| {
                (0..w[0])
                    .map(|_| {
                        (0..w[1])
                            .map(|_| {
                                if rng.random_bool(0.1) {
                                    f64::NEG_INFINITY
                                } else {
                                    rng.random_range(-30.0..0.0)
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let (best, winners) = exhaustive(&em, &tr);
        match viterbi_decode(&em, &tr) {
            None => ensure!(
                best == f64::NEG_INFINITY,
                "(a) instance {inst}: decoder found nothing, best {best}"
            ),
            Some((path, score)) => {
                ensure!(
                    score == best,
                    "(a) instance {inst}: score {score} vs {best}"
                );
                ensure!(
                    winners.contains(&path),
                    "(a) instance {inst}: {path:?} not an argmax"
                );
            }
        }
    }

    // (b)
    let clean = tmp.join("traj_clean");
    generate_synthetic(SyntheticKind::Trajectories, &json!({}), 1)
        .and_then(|g| g.save(&clean))
        .map_err(|e| e.to_string())?;
    let rec = run("map_matching", "HMMM", &clean, &tmp.join("runs8"), "clean")?;
    let (rmf0, an0, al0) = pooled(&rec)?;
    ensure!(
        rmf0 == 0.0 && an0 == 1.0 && al0 == 1.0,
        "(b) RMF {rmf0} AN {an0} AL {al0}"
    );

    // (c)
    let noisy = tmp.join("traj_noisy");
    generate_synthetic(
        SyntheticKind::Trajectories,
        &json!({"noise_sigma": 10.0}),
        2,
    )
    .and_then(|g| g.save(&noisy))
    .map_err(|e| e.to_string())?;
    let rec = run("map_matching", "HMMM", &noisy, &tmp.join("runs8"), "noisy")?;
    let (rmf10, an10, al10) = pooled(&rec)?;
    ensure!(an10 >= 0.95, "(c) AN {an10} below 0.95");

    // (d)
    let mut queries = 0;
    for case in 0..50 {
        let lat = [0.0, 39.9, -60.0][case % 3];
        let geo: Vec<GeoUnit> = (0..rng.random_range(1..60))
            .map(|i| {
                let coords = (0..rng.random_range(2..=4))
                    .map(|v| {
                        Coord::new(
                            116.0 + rng.random_range(-0.05..0.05) + v as f64 * 1e-4,
                            lat + rng.random_range(-0.05..0.05),
                        )
                    })
                    .collect();
                line(i, coords)
            })
            .collect();
        let net = build_road_network(&geo, &[], rng.random_range(20.0..800.0))
            .map_err(|e| e.to_string())?;
        let params = MatchParams {
            radius: rng.random_range(10.0..3000.0),
            max_candidates: rng.random_range(1..80),
            ..Default::default()
        };
        for _ in 0..40 {
            let p = Coord::new(
                116.0 + rng.random_range(-0.08..0.08),
                lat + rng.random_range(-0.08..0.08),
            );
            let a = candidate_segments(&net, p, &params);
            let b = candidate_segments_scan(&net, p, &params);
            ensure!(
                a == b,
                "(d) case {case}: index returned {} candidates, scan {}",
                a.len(),
                b.len()
            );
            queries += 1;
        }
    }

    // (e)
    let mut pairs = 0;
    for case in 0..100 {
        let n = rng.random_range(1..=20);
        let geo: Vec<GeoUnit> = (0..n)
            .map(|i| {
                let (x, y) = (rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
                line(
                    i,
                    vec![
                        Coord::new(x, y),
                        Coord::new(x + rng.random_range(1e-4..0.02), y),
                    ],
                )
            })
            .collect();
        let rel: Vec<RelationRecord> = (0..rng.random_range(0..=3 * n))
            .map(|i| RelationRecord {
                rel_id: i.to_string(),
                rel_type: RelType::Geo,
                origin_id: format!("s{}", rng.random_range(0..n)),
                des_id: format!("s{}", rng.random_range(0..n)),
                properties: Properties::new(),
            })
            .collect();
        let net = build_road_network(&geo, &rel, 200.0).map_err(|e| e.to_string())?;
        let fw = floyd_warshall_gap(&net);
        for (from, row) in fw.iter().enumerate() {
            for (to, &want) in row.iter().enumerate() {
                let got = segment_gap(&net, from, to);
                ensure!(
                    got.is_some() == want.is_some(),
                    "(e) case {case}: reachability {from}->{to}"
                );
                if let (Some(g), Some(w)) = (got, want) {
                    ensure!(
                        (g - w).abs() <= 1e-12 * w.max(1.0),
                        "(e) case {case}: {from}->{to} {g} vs {w}"
                    );
                }
                pairs += 1;
            }
        }
    }

    let took = within(Duration::from_secs(60), started)?;
    Ok(format!(
        "(a) 200 lattices exact; (b) RMF {rmf0} AN {an0} AL {al0}; (c) sigma 10 m seed 2: AN {an10:.4} RMF {rmf10:.4} AL {al10:.4}; (d) {queries} queries index == scan; (e) {pairs} pairs Dijkstra == Floyd-Warshall ({took:.1?})"
    ))
}

// ---------------------------------------------------------------------------
// 10. config precedence

fn criterion_10(tmp: &Path) -> Check {
    for (i, key) in CLI_WHITELIST.iter().enumerate() {
        let (d, f, c) = (
            json!(format!("default_{i}")),
            json!(format!("file_{i}")),
            format!("cli_{i}"),
        );
        let defaults: BTreeMap<String, Value> = BTreeMap::from([(key.to_string(), d.clone())]);
        let file = tmp.join(format!("cfg_{i}.json"));
        std::fs::write(&file, serde_json::to_string(&json!({ *key: f })).unwrap())
            .map_err(|e| e.to_string())?;
        let cli = vec![(key.to_string(), c.clone())];

        let only_default = load_config(&[], None, &defaults).map_err(|e| e.to_string())?;
        ensure!(only_default.get(key) == Some(&d), "{key}: default not used");
        let with_file = load_config(&[], Some(&file), &defaults).map_err(|e| e.to_string())?;
        ensure!(
            with_file.get(key) == Some(&f) && with_file.provenance(key) == Some(Layer::UserFile),
            "{key}: user file did not override the default"
        );
        let all = load_config(&cli, Some(&file), &defaults).map_err(|e| e.to_string())?;
        ensure!(
            all.get(key) == Some(&json!(c)) && all.provenance(key) == Some(Layer::Cli),
            "{key}: command line did not override the user file"
        );
        let cli_only = load_config(&cli, None, &defaults).map_err(|e| e.to_string())?;
        ensure!(
            cli_only.get(key) == Some(&json!(c)),
            "{key}: command line did not override the default"
        );
    }

    // the real command-line path, with typed values
    let file = tmp.join("typed.json");
    std::fs::write(
        &file,
        r#"{"seed": 11, "batch_size": 16, "learning_rate": 0.5, "radius": 50.0}"#,
    )
    .map_err(|e| e.to_string())?;
    let args: Vec<String> = [
        "--config_file",
        file.to_str().unwrap(),
        "--seed",
        "3",
        "--task",
        "map_matching",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let cfg = load_cli_config(&args, None).map_err(|e| e.to_string())?;
    ensure!(cfg.get("seed") == Some(&json!(3)), "typed cli seed");
    ensure!(cfg.get("batch_size") == Some(&json!(16)), "file batch_size");
    ensure!(cfg.get("radius") == Some(&json!(50.0)), "file-only key");
    ensure!(cfg.get("sigma") == Some(&json!(10.0)), "default sigma");
    let bogus: Vec<String> = vec!["--radius".into(), "5".into()];
    ensure!(
        load_cli_config(&bogus, None).is_err(),
        "non-whitelisted key accepted on the command line"
    );
    Ok(format!(
        "cli > user file > default for all {} whitelisted keys; non-whitelisted keys rejected",
        CLI_WHITELIST.len()
    ))
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let results: Vec<(&str, Check)> = vec![
        ("atomic round-trip and fault detection", criterion_1()),
        ("metric oracle equivalence", criterion_2()),
        ("ranking metrics", criterion_3()),
        ("MAPE floor masking", criterion_4()),
        ("windowing and splitting", criterion_5()),
        ("VAR recovery", criterion_6()),
        ("HA exactness", criterion_7(t)),
        ("map matching", criterion_8(t)),
        ("harness determinism and grid search", criterion_9(t)),
        ("config precedence", criterion_10(t)),
    ];
    let mut out = std::io::stdout().lock();
    let mut failed = Vec::new();
    for (i, (name, r)) in results.iter().enumerate() {
        let line = match r {
            Ok(detail) => format!("PASS [{:>2}] {name}: {detail}", i + 1),
            Err(why) => {
                failed.push(i + 1);
                format!("FAIL [{:>2}] {name}: {why}", i + 1)
            }
        };
        let _ = writeln!(out, "{line}");
    }
    let _ = out.flush();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
