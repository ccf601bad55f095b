//! On-disk artifact formats.
//!
//! Every CSV starts with a provenance comment
//! `# microflow config=<hash> stage=<name>` followed by the format's exact
//! header. Readers accept files without the comment (hand-made fixtures)
//! but, when given an expected hash, refuse stamped files whose hash
//! differs. Floats are written with Rust's shortest-round-trip formatting
//! unless a format pins a precision.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use microflow_core::config::RunConfig;
use microflow_core::data::{DataError, DaySummary};
use microflow_core::lob::{Order, OrderKind, Transaction};
use microflow_core::numerics::ModelParams;

/// Writes bytes, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Missing-artifact error that names the stage able to produce it.
pub fn require(path: &Path, producing_stage: &str) -> Result<()> {
    if !path.exists() {
        bail!(
            "missing input {}; run `microflow {producing_stage}` first",
            path.display()
        );
    }
    Ok(())
}

fn stamp(hash: &str, stage: &str) -> String {
    format!("# microflow config={hash} stage={stage}\n")
}

/// Line-oriented CSV scanner tracking 1-based file line numbers.
struct Scanner<'a> {
    lines: std::str::Lines<'a>,
    pub lineno: usize,
    pub found_hash: Option<String>,
}

impl<'a> Scanner<'a> {
    fn open(text: &'a str, expected_header: &str, expected_hash: Option<&str>) -> Result<Self> {
        let mut s = Scanner { lines: text.lines(), lineno: 0, found_hash: None };
        let mut first = s.next_line();
        if let Some(line) = first {
            if let Some(rest) = line.strip_prefix("# microflow ") {
                for field in rest.split_whitespace() {
                    if let Some(h) = field.strip_prefix("config=") {
                        s.found_hash = Some(h.to_string());
                    }
                }
                first = s.next_line();
            }
        }
        if let (Some(found), Some(expected)) = (s.found_hash.as_deref(), expected_hash) {
            if found != expected {
                bail!(
                    "config hash mismatch: artifact was produced under {found}, current config hashes to {expected}"
                );
            }
        }
        match first {
            Some(h) if h.trim() == expected_header => Ok(s),
            Some(h) => bail!(
                "line {}: expected header {expected_header:?}, got {h:?}",
                s.lineno
            ),
            None => bail!("empty file"),
        }
    }

    fn next_line(&mut self) -> Option<&'a str> {
        let line = self.lines.next()?;
        self.lineno += 1;
        Some(line)
    }
}

fn parse_err(lineno: usize, message: impl Into<String>) -> DataError {
    DataError::Parse { line: lineno, message: message.into() }
}

fn field<'a>(
    parts: &mut std::str::Split<'a, char>,
    lineno: usize,
    name: &str,
) -> std::result::Result<&'a str, DataError> {
    parts
        .next()
        .ok_or_else(|| parse_err(lineno, format!("missing field {name}")))
}

fn parse_num<T: std::str::FromStr>(
    raw: &str,
    lineno: usize,
    name: &str,
) -> std::result::Result<T, DataError> {
    raw.trim()
        .parse()
        .map_err(|_| parse_err(lineno, format!("invalid {name}: {raw:?}")))
}

pub const ORDERS_HEADER: &str = "time_ms,order_id,kind,price_ticks,size";

pub fn write_orders(path: &Path, hash: &str, orders: &[Order]) -> Result<()> {
    let mut out = stamp(hash, "gen-data");
    out.push_str(ORDERS_HEADER);
    out.push('\n');
    for o in orders {
        let kind = match o.kind {
            OrderKind::Add => 'A',
            OrderKind::Cancel => 'C',
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            o.time_ms, o.id, kind, o.price_ticks, o.size
        ));
    }
    write_file(path, out.as_bytes())
}

/// Parses an order-flow CSV; timestamps must be nondecreasing and `A` rows
/// must carry nonzero size.
pub fn read_orders(path: &Path, expected_hash: Option<&str>) -> Result<Vec<Order>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut s = Scanner::open(&text, ORDERS_HEADER, expected_hash)
        .with_context(|| path.display().to_string())?;
    let mut orders = Vec::new();
    let mut last_time = i64::MIN;
    while let Some(line) = s.next_line() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = s.lineno;
        let mut parts = line.split(',');
        let order = (|| -> std::result::Result<Order, DataError> {
            let time_ms = parse_num::<i64>(field(&mut parts, lineno, "time_ms")?, lineno, "time_ms")?;
            let id = parse_num::<u64>(field(&mut parts, lineno, "order_id")?, lineno, "order_id")?;
            let kind = match field(&mut parts, lineno, "kind")?.trim() {
                "A" => OrderKind::Add,
                "C" => OrderKind::Cancel,
                other => return Err(parse_err(lineno, format!("invalid kind {other:?}"))),
            };
            let price = parse_num::<i64>(field(&mut parts, lineno, "price_ticks")?, lineno, "price_ticks")?;
            let size = parse_num::<i64>(field(&mut parts, lineno, "size")?, lineno, "size")?;
            if kind == OrderKind::Add && size == 0 {
                return Err(parse_err(lineno, "size must be nonzero"));
            }
            if kind == OrderKind::Add && price <= 0 {
                return Err(parse_err(lineno, format!("invalid price {price}")));
            }
            Ok(Order { id, kind, price_ticks: price, size, time_ms })
        })()
        .map_err(|e| anyhow!("{}: {e}", path.display()))?;
        if order.time_ms < last_time {
            return Err(anyhow!(
                "{}: {}",
                path.display(),
                DataError::Format(format!("timestamps not sorted at line {lineno}"))
            ));
        }
        last_time = order.time_ms;
        orders.push(order);
    }
    Ok(orders)
}

pub const TRADES_HEADER: &str = "time_ms,price_x10000,size";

pub fn write_trades(path: &Path, hash: &str, trades: &[Transaction]) -> Result<()> {
    let mut out = stamp(hash, "replay");
    out.push_str(TRADES_HEADER);
    out.push('\n');
    for t in trades {
        out.push_str(&format!("{},{},{}\n", t.time_ms, t.price_x10000, t.size));
    }
    write_file(path, out.as_bytes())
}

pub fn read_trades(path: &Path, expected_hash: Option<&str>) -> Result<Vec<Transaction>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut s = Scanner::open(&text, TRADES_HEADER, expected_hash)
        .with_context(|| path.display().to_string())?;
    let mut out = Vec::new();
    while let Some(line) = s.next_line() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = s.lineno;
        let mut parts = line.split(',');
        let time_ms = parse_num::<i64>(field(&mut parts, lineno, "time_ms").map_err(into_anyhow(path))?, lineno, "time_ms")
            .map_err(into_anyhow(path))?;
        let price = parse_num::<i64>(field(&mut parts, lineno, "price_x10000").map_err(into_anyhow(path))?, lineno, "price_x10000")
            .map_err(into_anyhow(path))?;
        let size = parse_num::<i64>(field(&mut parts, lineno, "size").map_err(into_anyhow(path))?, lineno, "size")
            .map_err(into_anyhow(path))?;
        out.push(Transaction { time_ms, price_x10000: price, size });
    }
    Ok(out)
}

fn into_anyhow(path: &Path) -> impl Fn(DataError) -> anyhow::Error + '_ {
    move |e| anyhow!("{}: {e}", path.display())
}

pub const LABELS_HEADER: &str = "segment_index,label";

pub fn write_labels(path: &Path, hash: &str, labels: &[bool]) -> Result<()> {
    let mut out = stamp(hash, "gen-data");
    out.push_str(LABELS_HEADER);
    out.push('\n');
    for (i, l) in labels.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i, u8::from(*l)));
    }
    write_file(path, out.as_bytes())
}

pub fn read_labels(path: &Path, expected_hash: Option<&str>) -> Result<Vec<bool>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut s = Scanner::open(&text, LABELS_HEADER, expected_hash)
        .with_context(|| path.display().to_string())?;
    let mut out = Vec::new();
    while let Some(line) = s.next_line() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = s.lineno;
        let mut parts = line.split(',');
        let idx = parse_num::<usize>(field(&mut parts, lineno, "segment_index").map_err(into_anyhow(path))?, lineno, "segment_index")
            .map_err(into_anyhow(path))?;
        let label = parse_num::<u8>(field(&mut parts, lineno, "label").map_err(into_anyhow(path))?, lineno, "label")
            .map_err(into_anyhow(path))?;
        if idx != out.len() {
            bail!("{}: line {lineno}: segment indices must be contiguous", path.display());
        }
        out.push(label != 0);
    }
    Ok(out)
}

pub const META_HEADER: &str =
    "instrument,date,open_x10000,high_x10000,low_x10000,close_x10000,vwap_x10000,volume,n_anomalous";

#[derive(Clone, Debug, PartialEq)]
pub struct MetaRow {
    pub instrument: String,
    pub date: String,
    pub summary: DaySummary,
    pub n_anomalous: usize,
}

pub fn write_meta(path: &Path, hash: &str, rows: &[MetaRow]) -> Result<()> {
    let mut out = stamp(hash, "gen-data");
    out.push_str(META_HEADER);
    out.push('\n');
    for r in rows {
        let s = &r.summary;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.instrument,
            r.date,
            s.open_x10000,
            s.high_x10000,
            s.low_x10000,
            s.close_x10000,
            s.vwap_x10000,
            s.volume,
            r.n_anomalous
        ));
    }
    write_file(path, out.as_bytes())
}

pub fn read_meta(path: &Path, expected_hash: Option<&str>) -> Result<Vec<MetaRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut s = Scanner::open(&text, META_HEADER, expected_hash)
        .with_context(|| path.display().to_string())?;
    let mut out = Vec::new();
    while let Some(line) = s.next_line() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = s.lineno;
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 9 {
            bail!("{}: line {lineno}: expected 9 fields", path.display());
        }
        out.push(MetaRow {
            instrument: p[0].to_string(),
            date: p[1].to_string(),
            summary: DaySummary {
                open_x10000: parse_num(p[2], lineno, "open").map_err(into_anyhow(path))?,
                high_x10000: parse_num(p[3], lineno, "high").map_err(into_anyhow(path))?,
                low_x10000: parse_num(p[4], lineno, "low").map_err(into_anyhow(path))?,
                close_x10000: parse_num(p[5], lineno, "close").map_err(into_anyhow(path))?,
                vwap_x10000: parse_num(p[6], lineno, "vwap").map_err(into_anyhow(path))?,
                volume: parse_num(p[7], lineno, "volume").map_err(into_anyhow(path))?,
            },
            n_anomalous: parse_num(p[8], lineno, "n_anomalous").map_err(into_anyhow(path))?,
        });
    }
    Ok(out)
}

pub const SEGMENTS_HEADER: &str = "segment_index,n_orders,n_transactions,mid_ticks";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentDumpRow {
    pub segment_index: usize,
    pub n_orders: usize,
    pub n_transactions: usize,
    pub mid_ticks: f64,
}

pub fn write_segment_dump(path: &Path, hash: &str, rows: &[SegmentDumpRow]) -> Result<()> {
    let mut out = stamp(hash, "segment");
    out.push_str(SEGMENTS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.segment_index, r.n_orders, r.n_transactions, r.mid_ticks
        ));
    }
    write_file(path, out.as_bytes())
}

pub fn read_segment_dump(path: &Path, expected_hash: Option<&str>) -> Result<Vec<SegmentDumpRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut s = Scanner::open(&text, SEGMENTS_HEADER, expected_hash)
        .with_context(|| path.display().to_string())?;
    let mut out = Vec::new();
    while let Some(line) = s.next_line() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = s.lineno;
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 4 {
            bail!("{}: line {lineno}: expected 4 fields", path.display());
        }
        out.push(SegmentDumpRow {
            segment_index: parse_num(p[0], lineno, "segment_index").map_err(into_anyhow(path))?,
            n_orders: parse_num(p[1], lineno, "n_orders").map_err(into_anyhow(path))?,
            n_transactions: parse_num(p[2], lineno, "n_transactions").map_err(into_anyhow(path))?,
            mid_ticks: parse_num(p[3], lineno, "mid_ticks").map_err(into_anyhow(path))?,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub date: String,
    pub segment_index: usize,
    pub valid: bool,
    pub values: Vec<f64>,
}

pub fn features_header(d_e: usize) -> String {
    let mut h = String::from("date,segment_index,valid");
    for i in 0..d_e {
        h.push_str(&format!(",f_{i}"));
    }
    h
}

pub fn write_features(path: &Path, hash: &str, d_e: usize, rows: &[FeatureRow]) -> Result<()> {
    let mut out = stamp(hash, "extract");
    out.push_str(&features_header(d_e));
    out.push('\n');
    for r in rows {
        debug_assert_eq!(r.values.len(), d_e);
        out.push_str(&format!("{},{},{}", r.date, r.segment_index, u8::from(r.valid)));
        for v in &r.values {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn read_features(path: &Path, d_e: usize, expected_hash: Option<&str>) -> Result<Vec<FeatureRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut s = Scanner::open(&text, &features_header(d_e), expected_hash)
        .with_context(|| path.display().to_string())?;
    let mut out = Vec::new();
    while let Some(line) = s.next_line() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = s.lineno;
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 3 + d_e {
            bail!("{}: line {lineno}: expected {} fields", path.display(), 3 + d_e);
        }
        let mut values = Vec::with_capacity(d_e);
        for raw in &p[3..] {
            values.push(parse_num(raw, lineno, "feature").map_err(into_anyhow(path))?);
        }
        out.push(FeatureRow {
            date: p[0].to_string(),
            segment_index: parse_num(p[1], lineno, "segment_index").map_err(into_anyhow(path))?,
            valid: p[2] == "1",
            values,
        });
    }
    Ok(out)
}

pub const RANKINGS_HEADER: &str = "date,segment_index,uniqueness,selected";

#[derive(Clone, Debug, PartialEq)]
pub struct RankingRow {
    pub date: String,
    pub segment_index: usize,
    pub uniqueness: f64,
    pub selected: bool,
}

pub fn write_rankings(path: &Path, hash: &str, rows: &[RankingRow]) -> Result<()> {
    let mut out = stamp(hash, "select");
    out.push_str(RANKINGS_HEADER);
    out.push('\n');
    for r in rows {
        // Nine significant digits.
        out.push_str(&format!(
            "{},{},{:.8e},{}\n",
            r.date,
            r.segment_index,
            r.uniqueness,
            u8::from(r.selected)
        ));
    }
    write_file(path, out.as_bytes())
}

pub fn read_rankings(path: &Path, expected_hash: Option<&str>) -> Result<Vec<RankingRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut s = Scanner::open(&text, RANKINGS_HEADER, expected_hash)
        .with_context(|| path.display().to_string())?;
    let mut out = Vec::new();
    while let Some(line) = s.next_line() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = s.lineno;
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 4 {
            bail!("{}: line {lineno}: expected 4 fields", path.display());
        }
        out.push(RankingRow {
            date: p[0].to_string(),
            segment_index: parse_num(p[1], lineno, "segment_index").map_err(into_anyhow(path))?,
            uniqueness: parse_num(p[2], lineno, "uniqueness").map_err(into_anyhow(path))?,
            selected: p[3] == "1",
        });
    }
    Ok(out)
}

pub const BASELINES_HEADER: &str = "method,date,segment_index,uniqueness,selected";

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineRow {
    pub method: String,
    pub date: String,
    pub segment_index: usize,
    pub score: f64,
    pub selected: bool,
}

pub fn write_baselines(path: &Path, hash: &str, rows: &[BaselineRow]) -> Result<()> {
    let mut out = stamp(hash, "baselines");
    out.push_str(BASELINES_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.8e},{}\n",
            r.method,
            r.date,
            r.segment_index,
            r.score,
            u8::from(r.selected)
        ));
    }
    write_file(path, out.as_bytes())
}

pub fn read_baselines(path: &Path, expected_hash: Option<&str>) -> Result<Vec<BaselineRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut s = Scanner::open(&text, BASELINES_HEADER, expected_hash)
        .with_context(|| path.display().to_string())?;
    let mut out = Vec::new();
    while let Some(line) = s.next_line() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = s.lineno;
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 5 {
            bail!("{}: line {lineno}: expected 5 fields", path.display());
        }
        out.push(BaselineRow {
            method: p[0].to_string(),
            date: p[1].to_string(),
            segment_index: parse_num(p[2], lineno, "segment_index").map_err(into_anyhow(path))?,
            score: parse_num(p[3], lineno, "uniqueness").map_err(into_anyhow(path))?,
            selected: p[4] == "1",
        });
    }
    Ok(out)
}

pub const PLOT_HEADER: &str = "segment_index,t_start_ms,uniqueness,selected";

pub fn write_plot(
    path: &Path,
    hash: &str,
    rows: &[(usize, i64, f64, bool)],
) -> Result<()> {
    let mut out = stamp(hash, "select");
    out.push_str(PLOT_HEADER);
    out.push('\n');
    for (idx, t, u, sel) in rows {
        out.push_str(&format!("{},{},{:.8e},{}\n", idx, t, u, u8::from(*sel)));
    }
    write_file(path, out.as_bytes())
}

pub const TRAIN_LOG_HEADER: &str = "epoch,train_loss,valid_loss";

pub fn write_train_log(
    path: &Path,
    hash: &str,
    stage: &str,
    rows: &[microflow_core::context::TrainLogRow],
) -> Result<()> {
    let mut out = stamp(hash, stage);
    out.push_str(TRAIN_LOG_HEADER);
    out.push('\n');
    for r in rows {
        match r.train_loss {
            Some(t) => out.push_str(&format!("{},{},{}\n", r.epoch, t, r.valid_loss)),
            None => out.push_str(&format!("{},,{}\n", r.epoch, r.valid_loss)),
        }
    }
    write_file(path, out.as_bytes())
}

/// Saves a parameter store; the checkpoint tag is the config hash.
pub fn save_checkpoint(path: &Path, params: &ModelParams, hash: &str) -> Result<()> {
    write_file(path, &params.to_bytes(hash))
}

/// Loads a checkpoint, enforcing the config hash when given.
pub fn load_checkpoint(path: &Path, expected_hash: Option<&str>) -> Result<ModelParams> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let (params, tag) = ModelParams::from_bytes(&bytes)
        .map_err(|e| anyhow!("{}: {e}", path.display()))?;
    if let Some(expected) = expected_hash {
        if tag != expected {
            bail!(
                "{}: config hash mismatch: checkpoint {tag}, current {expected}",
                path.display()
            );
        }
    }
    Ok(params)
}

/// Loads a config file and applies it over the defaults.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    cfg.apply_text(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    Ok(cfg)
}

/// Lists instrument/date pairs under a data directory:
/// `<dir>/<instrument>/<date>.orders.csv`, both levels sorted.
pub fn discover_days(data_dir: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut instruments: Vec<String> = Vec::new();
    for entry in fs::read_dir(data_dir).with_context(|| format!("listing {}", data_dir.display()))? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            instruments.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    instruments.sort();
    for inst in instruments {
        let mut dates = Vec::new();
        for entry in fs::read_dir(data_dir.join(&inst))? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(date) = name.strip_suffix(".orders.csv") {
                dates.push(date.to_string());
            }
        }
        dates.sort();
        for date in dates {
            out.push((inst.clone(), date));
        }
    }
    Ok(out)
}

pub fn orders_path(data_dir: &Path, inst: &str, date: &str) -> std::path::PathBuf {
    data_dir.join(inst).join(format!("{date}.orders.csv"))
}

pub fn labels_path(data_dir: &Path, inst: &str, date: &str) -> std::path::PathBuf {
    data_dir.join(inst).join(format!("{date}.labels.csv"))
}
