//! Result emission (CSV series, SVG snapshots) and snapshot persistence for
//! resumable runs.

use crate::error::{CliError, Result};
use orbiflow_core::flow::Trajectory;
use orbiflow_core::mesh::{DiscreteImmersion, ImmersionKind};
use std::io::Write;
use std::path::Path;

/// Write the per-step series as CSV with 17 significant digits.
pub fn emit_series_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    if traj.series.is_empty() {
        return Err(CliError::Io("trajectory has no series records".into()));
    }
    let mut out = String::new();
    out.push_str("t,step,len_or_area,min_normH,max_normH,min_eig_A");
    for name in &traj.monitor_names {
        out.push_str(",monitor:");
        out.push_str(name);
    }
    out.push('\n');
    for rec in &traj.series {
        out.push_str(&format!(
            "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            rec.t, rec.step, rec.len_or_area, rec.min_norm_h, rec.max_norm_h, rec.min_eig_a
        ));
        for m in &rec.monitors {
            out.push_str(&format!(",{m:.16e}"));
        }
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// Parsed-back series row, for read-back verification.
pub struct SeriesRow {
    pub t: f64,
    pub step: u64,
    pub values: Vec<f64>,
}

pub fn read_series_csv(path: &Path) -> Result<(Vec<String>, Vec<SeriesRow>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Io("empty series file".into()))?
        .split(',')
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let t: f64 = fields
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::Io("bad t field".into()))?;
        let step: u64 = fields
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::Io("bad step field".into()))?;
        let values: Vec<f64> = fields
            .map(|v| v.parse::<f64>().map_err(|_| CliError::Io(format!("bad field '{v}'"))))
            .collect::<Result<_>>()?;
        rows.push(SeriesRow { t, step, values });
    }
    Ok((header, rows))
}

/// Fixed view box derived from an initial bounding box, padded by 1.2x.
#[derive(Clone, Copy, Debug)]
pub struct ViewBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Drawing bounds from a curve's initial nodes (y is flipped for SVG).
pub fn view_box_for(im: &DiscreteImmersion) -> ViewBox {
    let pts = drawable_polyline(im);
    let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in pts.chunks(2) {
        xmin = xmin.min(p[0]);
        xmax = xmax.max(p[0]);
        ymin = ymin.min(-p[1]);
        ymax = ymax.max(-p[1]);
    }
    let cx = 0.5 * (xmin + xmax);
    let cy = 0.5 * (ymin + ymax);
    let w = (xmax - xmin).max(1e-9) * 1.2;
    let h = (ymax - ymin).max(1e-9) * 1.2;
    ViewBox { x: cx - w / 2.0, y: cy - h / 2.0, w, h }
}

/// Points to draw: curves directly, radial graphs as the meridian section
/// through φ = 0 and φ = π.
fn drawable_polyline(im: &DiscreteImmersion) -> Vec<f64> {
    match &im.kind {
        ImmersionKind::RadialGraph { grid } => {
            let half = grid.n_lon / 2;
            let mut pts = Vec::with_capacity(4 * grid.n_lat);
            for i in 0..grid.n_lat {
                let r = im.nodes[i * grid.n_lon];
                let th = grid.theta[i];
                pts.push(r * th.sin());
                pts.push(r * th.cos());
            }
            for i in (0..grid.n_lat).rev() {
                let r = im.nodes[i * grid.n_lon + half];
                let th = grid.theta[i];
                pts.push(-r * th.sin());
                pts.push(r * th.cos());
            }
            pts
        }
        _ => {
            let d = im.chart.dim;
            im.nodes.chunks(d).flat_map(|p| [p[0], p[1]]).collect()
        }
    }
}

/// Emit a snapshot as an SVG 1.1 document: the curve polyline (or meridian
/// section), plus singular-set markers for orbifold scenarios.  The document
/// structure is fixed; only coordinates change between snapshots.
pub fn emit_snapshot_svg(
    im: &DiscreteImmersion,
    t: f64,
    vb: ViewBox,
    singular_markers: &[(f64, f64)],
    path: &Path,
) -> Result<()> {
    let pts = drawable_polyline(im);
    let mut body = String::new();
    body.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    body.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" viewBox=\"{:.9} {:.9} {:.9} {:.9}\" width=\"640\" height=\"640\">\n",
        vb.x, vb.y, vb.w, vb.h
    ));
    body.push_str(&format!("<title>t = {t:.9}</title>\n"));
    body.push_str("<polygon fill=\"none\" stroke=\"black\" vector-effect=\"non-scaling-stroke\" points=\"");
    for (i, p) in pts.chunks(2).enumerate() {
        if i > 0 {
            body.push(' ');
        }
        body.push_str(&format!("{:.9},{:.9}", p[0], -p[1]));
    }
    body.push_str("\"/>\n");
    for (mx, my) in singular_markers {
        body.push_str(&format!(
            "<circle cx=\"{:.9}\" cy=\"{:.9}\" r=\"{:.9}\" fill=\"red\"/>\n",
            mx,
            -my,
            vb.w * 0.01
        ));
    }
    body.push_str("</svg>\n");
    write_file(path, body.as_bytes())
}

const SNAPSHOT_MAGIC: &str = "orbiflow-snapshot";
const SNAPSHOT_VERSION: u32 = 1;

/// On-disk snapshot of a flow state.  Floating-point values use the shortest
/// round-trip representation, so save -> load -> save is byte-identical.
pub struct SnapshotFile {
    pub format_version: u32,
    pub scenario_hash: String,
    pub t: f64,
    pub step: u64,
    pub nodes: Vec<f64>,
    pub norm_h: Vec<f64>,
}

pub fn save_snapshot(snap: &SnapshotFile, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("{SNAPSHOT_MAGIC} {}\n", snap.format_version));
    out.push_str(&format!("scenario {}\n", snap.scenario_hash));
    out.push_str(&format!("t {}\n", snap.t));
    out.push_str(&format!("step {}\n", snap.step));
    out.push_str(&format!("nodes {}\n", snap.nodes.len()));
    for v in &snap.nodes {
        out.push_str(&format!("{v}\n"));
    }
    out.push_str(&format!("normh {}\n", snap.norm_h.len()));
    for v in &snap.norm_h {
        out.push_str(&format!("{v}\n"));
    }
    write_file(path, out.as_bytes())
}

pub fn load_snapshot(path: &Path) -> Result<SnapshotFile> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| CliError::Io("empty snapshot".into()))?;
    let mut hp = head.split_whitespace();
    if hp.next() != Some(SNAPSHOT_MAGIC) {
        return Err(CliError::Io("not an orbiflow snapshot".into()));
    }
    let format_version: u32 = hp
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Io("missing snapshot version".into()))?;
    if format_version > SNAPSHOT_VERSION {
        return Err(CliError::Io(format!("snapshot version {format_version} is newer than supported")));
    }
    fn field<'a>(
        lines: &mut std::str::Lines<'a>,
        name: &str,
    ) -> Result<&'a str> {
        let line = lines.next().ok_or_else(|| CliError::Io(format!("missing {name}")))?;
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| CliError::Io(format!("malformed {name} line")))?;
        if k != name {
            return Err(CliError::Io(format!("expected {name}, got {k}")));
        }
        Ok(v)
    }
    let scenario_hash = field(&mut lines, "scenario")?.to_string();
    let t: f64 = field(&mut lines, "t")?.parse().map_err(|_| CliError::Io("bad t".into()))?;
    let step: u64 = field(&mut lines, "step")?.parse().map_err(|_| CliError::Io("bad step".into()))?;
    let n_nodes: usize =
        field(&mut lines, "nodes")?.parse().map_err(|_| CliError::Io("bad node count".into()))?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let line = lines.next().ok_or_else(|| CliError::Io("truncated nodes".into()))?;
        nodes.push(line.parse::<f64>().map_err(|_| CliError::Io(format!("bad node '{line}'")))?);
    }
    let n_h: usize =
        field(&mut lines, "normh")?.parse().map_err(|_| CliError::Io("bad normh count".into()))?;
    let mut norm_h = Vec::with_capacity(n_h);
    for _ in 0..n_h {
        let line = lines.next().ok_or_else(|| CliError::Io("truncated normh".into()))?;
        norm_h.push(line.parse::<f64>().map_err(|_| CliError::Io(format!("bad normh '{line}'")))?);
    }
    Ok(SnapshotFile { format_version, scenario_hash, t, step, nodes, norm_h })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}
