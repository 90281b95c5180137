//! CSV and SVG output.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use plotters::coord::ranged1d::{AsRangedCoord, ValueFormatter};
use plotters::prelude::*;

use crate::scenario::{Algo, ResultRow, Scenario};

pub const CSV_HEADER: &str = "scenario,algo,op,sweep,mean_ms,p50_ms,p99_ms,ops,stored_bytes,wire_bytes";

#[derive(Debug, thiserror::Error)]
pub enum EmitError {
    #[error("no rows to write")]
    Empty,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("plot {path}: {detail}")]
    Plot { path: PathBuf, detail: String },
}

/// Writes rows with the fixed header.
pub fn write_csv<W: io::Write>(w: W, rows: &[ResultRow]) -> Result<(), EmitError> {
    if rows.is_empty() {
        return Err(EmitError::Empty);
    }
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| EmitError::Io { path: PathBuf::from("<csv>"), source: e })?;
    Ok(())
}

pub fn csv_string(rows: &[ResultRow]) -> Result<String, EmitError> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn read_csv<R: io::Read>(r: R) -> Result<Vec<ResultRow>, EmitError> {
    let mut rd = csv::Reader::from_reader(r);
    Ok(rd.deserialize().collect::<Result<_, _>>()?)
}

/// Writes `results.csv` and, with `svg`, one chart per scenario into `dir`.
/// Returns the files written.
pub fn emit(dir: &Path, rows: &[ResultRow], svg: bool) -> Result<Vec<PathBuf>, EmitError> {
    if rows.is_empty() {
        return Err(EmitError::Empty);
    }
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| EmitError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv_path = dir.join("results.csv");
    let file = std::fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    write_csv(file, rows)?;
    let mut written = vec![csv_path];
    if svg {
        let mut by_scenario: BTreeMap<Scenario, Vec<&ResultRow>> = BTreeMap::new();
        for r in rows {
            by_scenario.entry(r.scenario).or_default().push(r);
        }
        for (scenario, rows) in by_scenario {
            let path = dir.join(format!("{}.svg", scenario.name()));
            plot(&path, scenario, &rows).map_err(|detail| EmitError::Plot { path: path.clone(), detail })?;
            written.push(path);
        }
    }
    Ok(written)
}

type Series = BTreeMap<(Algo, String), Vec<(f64, f64)>>;

fn plot(path: &Path, scenario: Scenario, rows: &[&ResultRow]) -> Result<(), String> {
    let mut series: Series = BTreeMap::new();
    for r in rows {
        series.entry((r.algo, r.op.clone())).or_default().push((r.sweep as f64, r.mean_ms));
    }
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let xs = || series.values().flatten().map(|p| p.0);
    let (x0, x1) = (xs().fold(f64::INFINITY, f64::min), xs().fold(f64::NEG_INFINITY, f64::max));
    let y1 = series.values().flatten().map(|p| p.1).fold(0.0, f64::max) * 1.1 + 1.0;
    let x1 = if x1 > x0 { x1 } else { x0 + 1.0 };
    let root = SVGBackend::new(path, (820, 520)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| e.to_string())?;
    if scenario.log_x() {
        draw(&root, scenario, &series, (x0..x1).log_scale(), y1)?;
    } else {
        draw(&root, scenario, &series, x0..x1, y1)?;
    }
    root.present().map_err(|e| e.to_string())
}

fn draw<X>(root: &DrawingArea<SVGBackend, plotters::coord::Shift>, scenario: Scenario, series: &Series, x: X, y1: f64) -> Result<(), String>
where
    X: AsRangedCoord<Value = f64>,
    X::CoordDescType: ValueFormatter<f64>,
{
    let mut chart = ChartBuilder::on(root)
        .caption(format!("{} latency", scenario.name()), ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x, 0.0..y1)
        .map_err(|e| e.to_string())?;
    chart
        .configure_mesh()
        .x_desc(scenario.axis_label())
        .y_desc("mean latency (ms)")
        .draw()
        .map_err(|e| e.to_string())?;
    for (i, ((algo, op), pts)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let style = if op == "write" { color.stroke_width(2) } else { color.stroke_width(1) };
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), style))
            .map_err(|e| e.to_string())?
            .label(format!("{algo} {op}"))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        chart
            .draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(|e| e.to_string())?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| e.to_string())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(algo: Algo, sweep: u64, mean_ms: f64) -> ResultRow {
        ResultRow {
            scenario: Scenario::ObjectSize,
            algo,
            op: "read".into(),
            sweep,
            mean_ms,
            p50_ms: mean_ms,
            p99_ms: mean_ms,
            ops: 4,
            stored_bytes: 10,
            wire_bytes: 20,
        }
    }

    #[test]
    fn header_is_fixed() {
        let s = csv_string(&[row(Algo::Deram, 1, 2.5)]).unwrap();
        assert_eq!(s.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(s.lines().nth(1).unwrap(), "object-size,deram,read,1,2.5,2.5,2.5,4,10,20");
        assert_eq!(read_csv(s.as_bytes()).unwrap(), vec![row(Algo::Deram, 1, 2.5)]);
    }

    #[test]
    fn empty_rows_are_refused() {
        assert!(matches!(csv_string(&[]), Err(EmitError::Empty)));
        assert!(matches!(emit(Path::new("/nonexistent"), &[], true), Err(EmitError::Empty)));
    }

    #[test]
    fn svg_is_written_per_scenario() {
        let dir = std::env::temp_dir().join(format!("dsm-bench-emit-{}", std::process::id()));
        let rows = vec![row(Algo::Deram, 1 << 15, 50.0), row(Algo::Deram, 1 << 20, 80.0), row(Algo::MwabdFull, 1 << 20, 300.0)];
        let files = emit(&dir, &rows, true).unwrap();
        assert_eq!(files.len(), 2);
        let svg = std::fs::read_to_string(&files[1]).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("mwabd-full read"));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
